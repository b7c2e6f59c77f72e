//! Reproducible experiment runner: group checks, convergence checks,
//! solves, sweeps and oracle comparisons.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or config error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{MinCutMode, RunConfig};
use crate::domain::Tag;
use crate::error::Error;
use crate::group::check::{algebra_suite, quotient_convergence, test_functions};
use crate::group::CarnotGroup;
use crate::kernel::build_kernel;
use crate::limit::{run_sweep, SweepPlan};
use crate::report;
use crate::solver::mincut::min_cut_energy;
use crate::solver::plaplace::{solve_p_laplacian, PLaplaceParams};
use crate::solver::primal_dual::solve_primal_dual;
use crate::solver::{check_certificate, default_tie_tol, NonlocalProblem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser)]
#[command(
    name = "carnot-lgp",
    version,
    about = "Nonlocal least gradient problems on Carnot groups"
)]
struct Cli {
    /// Worker threads (fallback: HYPO_LGP_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the group-algebra invariant suite on random triples.
    GroupCheck {
        /// Catalog id: abelian<N>, heisenberg1, engel4.
        group: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        triples: usize,
    },
    /// Difference-quotient convergence against the horizontal gradient.
    LemmaCheck {
        group: String,
        /// Test function preset name, or `all`.
        #[arg(long, default_value = "all")]
        phi: String,
        /// Comma-separated decreasing step list.
        #[arg(long)]
        eps: Option<String>,
    },
    /// One nonlocal solve; writes solution.csv, dual.csv, report.json.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// ε-sweep; writes sweep.csv and per-ε artifacts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Primal-dual vs. min-cut and p-Laplacian oracles.
    OracleCompare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Construction(_) => EXIT_USAGE,
        Error::Numerical(_) | Error::Io(_) => EXIT_NUMERICAL,
    }
}

fn parse_eps_flag(s: &str) -> Result<Vec<f64>, Error> {
    let list: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let list = list.map_err(|_| Error::Config(format!("bad --eps list `{s}`")))?;
    if list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("--eps values must be positive".into()));
    }
    Ok(list)
}

fn load_config(
    path: &PathBuf,
    out: &Option<PathBuf>,
    eps: &Option<String>,
    seed: &Option<u64>,
) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(dir) = out {
        cfg.out_dir = dir.display().to_string();
    }
    if let Some(list) = eps {
        cfg.eps_list = parse_eps_flag(list)?;
    }
    if let Some(s) = seed {
        cfg.seed = *s;
    }
    Ok(cfg)
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("HYPO_LGP_THREADS").ok().and_then(|v| v.parse().ok()));
    let run_inner = || match &cli.cmd {
        Cmd::GroupCheck { group, seed, triples } => cmd_group_check(group, *seed, *triples),
        Cmd::LemmaCheck { group, phi, eps } => cmd_lemma_check(group, phi, eps.as_deref()),
        Cmd::Solve { config, out, eps, seed } => match load_config(config, out, eps, seed) {
            Ok(cfg) => cmd_solve(&cfg),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
        Cmd::Sweep { config, out, eps, seed } => match load_config(config, out, eps, seed) {
            Ok(cfg) => cmd_sweep(&cfg),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
        Cmd::OracleCompare { config, out, eps, seed } => {
            match load_config(config, out, eps, seed) {
                Ok(cfg) => cmd_oracle_compare(&cfg),
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
    };
    match threads {
        Some(n) if n > 0 => {
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(run_inner),
                Err(e) => {
                    eprintln!("error: cannot build thread pool: {e}");
                    EXIT_USAGE
                }
            }
        }
        _ => run_inner(),
    }
}

fn cmd_group_check(group_id: &str, seed: u64, triples: usize) -> i32 {
    let group = match CarnotGroup::from_id(group_id) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let report = algebra_suite(&group, group_id, triples, seed);
    println!("group {group_id}: {} random triples", report.triples);
    let mut ok = true;
    for c in &report.checks {
        let status = if c.passed() { "pass" } else { "FAIL" };
        println!("  {:<24} max_error {:>12.3e}  tol {:>8.0e}  {status}", c.name, c.max_error, c.tolerance);
        ok &= c.passed();
    }
    // Monte Carlo cross-checks of the closed-form ball volume and moment.
    let vol = group.ball_volume(1.0).expect("unit ball");
    let mc_vol = group.mc_ball_volume(1_000_000, seed ^ 0x9e37);
    let c = group.first_moment_constant();
    let mc_c = group.mc_first_moment(1_000_000, seed ^ 0x79b9);
    for (name, exact, mc) in
        [("ball_volume_mc", vol, mc_vol), ("first_moment_mc", c, mc_c)]
    {
        let rel = (mc - exact).abs() / exact;
        let pass = rel <= 0.01;
        println!("  {:<24} relative   {:>12.3e}  tol    1e-2  {}", name, rel, if pass { "pass" } else { "FAIL" });
        ok &= pass;
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

fn cmd_lemma_check(group_id: &str, phi: &str, eps: Option<&str>) -> i32 {
    let group = match CarnotGroup::from_id(group_id) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let eps_list: Vec<f64> = match eps {
        Some(s) => match parse_eps_flag(s) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect(),
    };
    if eps_list.len() < 2 {
        eprintln!("error: convergence order is undefined for fewer than two steps");
        return EXIT_USAGE;
    }
    let presets = test_functions(&group);
    let selected: Vec<_> = if phi == "all" {
        presets.iter().collect()
    } else {
        let found: Vec<_> = presets.iter().filter(|t| t.name == phi).collect();
        if found.is_empty() {
            eprintln!(
                "error: unknown preset `{phi}` for {group_id}; available: {}",
                presets.iter().map(|t| t.name.clone()).collect::<Vec<_>>().join(", ")
            );
            return EXIT_USAGE;
        }
        found
    };
    let (x, z) = crate::group::check::default_probe(&group);
    let mut ok = true;
    for t in selected {
        let conv = match quotient_convergence(&group, t, &x, &z, &eps_list) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        println!("phi = {} on {group_id}", t.name);
        for (e, err) in conv.eps.iter().zip(&conv.errors) {
            println!("  eps {:>10.6}  error {:>12.5e}", e, err);
        }
        let pass = if conv.exact {
            println!("  errors at round-off floor (horizontal-linear test function)");
            true
        } else {
            match conv.fitted_order {
                Some(order) => {
                    println!("  fitted order {order:.3}");
                    order >= 0.9
                }
                None => false,
            }
        };
        ok &= pass;
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}

fn cmd_solve(cfg: &RunConfig) -> i32 {
    match solve_impl(cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn solve_impl(cfg: &RunConfig) -> Result<i32, Error> {
    if cfg.eps_list.len() != 1 {
        return Err(Error::Config(format!(
            "`solve` needs exactly one eps, got {}",
            cfg.eps_list.len()
        )));
    }
    let eps = cfg.eps_list[0];
    let group = cfg.group()?;
    let dom = crate::domain::build_lattice(&group, &cfg.domain_spec(), eps, eps / cfg.rho)?;
    let kernel = build_kernel(&dom, eps)?;
    let psi = cfg.psi.clone();
    let problem = NonlocalProblem::new(&dom, &kernel, move |p| psi.eval(p))?;
    let (u, dual, solve) = solve_primal_dual(&problem, &cfg.pd_params());
    let cert = check_certificate(&problem, &u, &dual, default_tie_tol(&problem));
    eprintln!(
        "solve: {} iterations, wall time {:.3}s, gap {:.3e}",
        solve.iterations, solve.wall_time_s, solve.relative_gap
    );

    let out = PathBuf::from(&cfg.out_dir);
    report::write_points_csv(&out, &dom)?;
    report::write_edges_csv(&out, &kernel)?;
    report::write_solution_csv(&out, &dom, &u)?;
    report::write_dual_csv(&out, &problem, &dual)?;
    let artifact = report::SolveArtifact {
        run_id: cfg.run_id(),
        tool_version: report::TOOL_VERSION,
        distance_note: report::DISTANCE_NOTE,
        group: cfg.group_id.clone(),
        eps,
        h: eps / cfg.rho,
        n_points: dom.n_points(),
        n_interior: dom.n_interior(),
        n_kernel_rows: kernel.n_rows(),
        n_edges: problem.edges.len(),
        energy: solve.primal_energy,
        solve: &solve,
        certificate: &cert,
        config: cfg.resolved(),
    };
    report::write_report_json(&out, &artifact)?;
    println!(
        "energy {}  gap {:.3e}  row_residual {:.3e}  sign_residual {:.3e}",
        solve.primal_energy, solve.relative_gap, cert.max_row_residual, cert.max_sign_defect
    );
    Ok(if solve.converged && cert.passes(cfg.residual_tol) {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

fn cmd_sweep(cfg: &RunConfig) -> i32 {
    match sweep_impl(cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn sweep_impl(cfg: &RunConfig) -> Result<i32, Error> {
    if cfg.eps_list.len() < 2 {
        return Err(Error::Config("`sweep` needs at least two eps values".into()));
    }
    let group = cfg.group()?;
    let psi = cfg.psi.clone();
    let psi_fn = move |p: &[f64]| psi.eval(p);
    let reference = cfg.reference.clone();
    let ref_fn = reference.map(|e| move |p: &[f64]| e.eval(p));
    let plan = SweepPlan {
        group,
        domain: cfg.domain_spec(),
        psi: &psi_fn,
        reference: ref_fn.as_ref().map(|f| f as &(dyn Fn(&[f64]) -> f64 + Sync)),
        eps_list: cfg.eps_list.clone(),
        rho: cfg.rho,
        solver: cfg.pd_params(),
        estimate_domain: cfg.estimate_domain,
        compute_zeta: cfg.compute_zeta,
    };
    let entries = run_sweep(&plan)?;
    let out = PathBuf::from(&cfg.out_dir);
    report::write_sweep_csv(&out, &entries)?;
    // per-ε artifacts
    for (i, e) in entries.iter().enumerate() {
        let sub = out.join(format!("eps_{i}"));
        let dom = crate::domain::build_lattice(&plan.group, &plan.domain, e.eps, e.h)?;
        report::write_solution_csv(&sub, &dom, &e.u)?;
        if let Some(z) = &e.zeta {
            report::write_zeta_csv(&sub, &dom, z)?;
        }
    }
    let all = entries.iter().all(|e| e.converged);
    for e in &entries {
        println!(
            "eps {}  energy {}  rescaled {}  m_eps {}  converged {}",
            e.eps, e.energy, e.rescaled_energy, e.m_eps, e.converged
        );
    }
    Ok(if all { EXIT_OK } else { EXIT_NUMERICAL })
}

fn cmd_oracle_compare(cfg: &RunConfig) -> i32 {
    match oracle_impl(cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn oracle_impl(cfg: &RunConfig) -> Result<i32, Error> {
    if cfg.eps_list.len() != 1 {
        return Err(Error::Config(format!(
            "`oracle-compare` needs exactly one eps, got {}",
            cfg.eps_list.len()
        )));
    }
    let eps = cfg.eps_list[0];
    let group = cfg.group()?;
    let dom = crate::domain::build_lattice(&group, &cfg.domain_spec(), eps, eps / cfg.rho)?;
    let kernel = build_kernel(&dom, eps)?;
    let psi = cfg.psi.clone();
    let problem = NonlocalProblem::new(&dom, &kernel, move |p| psi.eval(p))?;
    let (_u, _dual, solve) = solve_primal_dual(&problem, &cfg.pd_params());
    if !solve.converged {
        eprintln!("error: primal-dual solve did not converge");
        return Ok(EXIT_NUMERICAL);
    }
    let reference = solve.primal_energy;
    let mut rows: Vec<(String, f64, f64)> = vec![("primal_dual".into(), reference, 0.0)];
    let mut ok = true;

    // min-cut oracle
    let datum_binary = {
        let tol = cfg.binary_tol;
        (0..dom.n_points()).all(|id| {
            dom.tags[id] != Tag::Halo
                || !kernel.owns_row(id as u32)
                || problem.psi[id].abs() <= tol
                || (problem.psi[id] - 1.0).abs() <= tol
        })
    };
    match cfg.mincut {
        MinCutMode::On if !datum_binary => {
            return Err(Error::Config("min-cut oracle requested but the datum is not binary".into()))
        }
        MinCutMode::Off => {}
        _ if !datum_binary => {}
        _ => {
            let cut = min_cut_energy(&problem, cfg.binary_tol)?;
            let rel = (cut.energy - reference).abs() / reference.abs().max(1e-300);
            rows.push(("min_cut".into(), cut.energy, rel));
            ok &= rel <= cfg.cut_agreement_tol || (reference == 0.0 && cut.energy == 0.0);
        }
    }

    // p-Laplacian envelope
    let mut last_energy = f64::INFINITY;
    for &p in &cfg.p_list {
        let res = solve_p_laplacian(
            &problem,
            p,
            PLaplaceParams { delta: cfg.p_delta, max_iter: cfg.p_max_iter, tol: cfg.p_tol },
        )?;
        if !res.converged {
            eprintln!("error: p = {p} fixed point did not converge (residual {})", res.residual);
            return Ok(EXIT_NUMERICAL);
        }
        let energy = problem.energy(&res.u);
        let rel = (energy - reference).abs() / reference.abs().max(1e-300);
        rows.push((format!("p={p}"), energy, rel));
        ok &= energy <= last_energy * (1.0 + 1e-9) + 1e-300;
        last_energy = energy;
    }
    if let Some((_, tail, _)) = rows.last() {
        if !cfg.p_list.is_empty() {
            let rel = (tail - reference).abs() / reference.abs().max(1e-300);
            ok &= rel <= cfg.p_agreement_tol || (reference == 0.0 && *tail == 0.0);
        }
    }

    let out = PathBuf::from(&cfg.out_dir);
    report::write_oracle_csv(&out, &rows)?;
    println!("{:<12} {:>22} {:>14}", "method", "energy", "rel_diff");
    for (name, energy, rel) in &rows {
        println!("{name:<12} {energy:>22.16e} {rel:>14.3e}");
    }
    Ok(if ok { EXIT_OK } else { EXIT_NUMERICAL })
}

/// Heisenberg axis-aligned exact certificate used in integration tests and
/// docs: u = x₁, g = sign(y₁ − x₁).
pub fn axis_certificate(problem: &NonlocalProblem) -> (Vec<f64>, crate::solver::DualField) {
    let dom = problem.dom;
    let u: Vec<f64> = dom.interior_ids.iter().map(|&id| dom.coord(id, 0)).collect();
    let mut dual = crate::solver::DualField::zeros(problem.edges.len());
    for (k, e) in problem.edges.iter().enumerate() {
        let d = dom.coord(e.b, 0) - dom.coord(e.a, 0);
        dual.g[k] = if d.abs() <= 1e-12 { 0.0 } else { d.signum() };
    }
    (u, dual)
}
