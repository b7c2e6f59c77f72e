//! Flat `key = value` run configuration with `[section]` headers.
//!
//! Strict by design: unknown sections or keys, duplicate keys and malformed
//! values are errors, so a config parses unambiguously or not at all.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::{DomainShape, DomainSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::group::CarnotGroup;
use crate::limit::EstimateDomain;
use crate::solver::primal_dual::PdParams;

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeConfig {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub group_id: String,
    pub shape: ShapeConfig,
    pub halo_width: f64,
    pub psi_src: String,
    pub psi: Expr,
    pub eps_list: Vec<f64>,
    pub rho: f64,
    pub max_iter: usize,
    pub tol_gap: f64,
    pub residual_tol: f64,
    pub seed: u64,
    pub warm_start_iters: usize,
    pub p_list: Vec<f64>,
    pub p_delta: f64,
    pub p_tol: f64,
    pub p_max_iter: usize,
    pub p_agreement_tol: f64,
    pub cut_agreement_tol: f64,
    pub binary_tol: f64,
    pub mincut: MinCutMode,
    pub reference_src: Option<String>,
    pub reference: Option<Expr>,
    pub estimate_domain: EstimateDomain,
    pub compute_zeta: bool,
    pub out_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinCutMode {
    Auto,
    On,
    Off,
}

fn cfg_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

struct RawConfig {
    /// (section.key) → (line, value)
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let mut s = raw;
            if let Some(idx) = s.find(['#', ';']) {
                s = &s[..idx];
            }
            let s = s.trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(cfg_err(line, "empty section name"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{s}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(cfg_err(line, "empty key"));
            }
            if section.is_empty() {
                return Err(cfg_err(line, format!("key `{key}` appears before any section")));
            }
            let full = format!("{section}.{key}");
            if entries.insert(full.clone(), (line, value.trim().to_string())).is_some() {
                return Err(cfg_err(line, format!("duplicate key `{full}`")));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 =
        v.parse().map_err(|_| cfg_err(line, format!("`{key}` expects a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(cfg_err(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|t| parse_f64(line, key, t.trim())).collect()
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| cfg_err(line, format!("`{key}` expects an integer, got `{v}`")))
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let mut get_f64 = |key: &str, default: f64| -> Result<f64> {
            match raw.take(key) {
                Some((line, v)) => parse_f64(line, key, &v),
                None => Ok(default),
            }
        };

        let halo_width = get_f64("domain.halo_width", 1.0)?;
        let rho = get_f64("discretization.rho", 10.0)?;
        let tol_gap = get_f64("solver.tol_gap", 1e-8)?;
        let residual_tol = get_f64("solver.residual_tol", 1e-6)?;
        let p_delta = get_f64("oracle.p_delta", 1e-4)?;
        let p_tol = get_f64("oracle.p_tol", 1e-12)?;
        let p_agreement_tol = get_f64("oracle.p_agreement_tol", 0.02)?;
        let cut_agreement_tol = get_f64("oracle.cut_agreement_tol", 1e-6)?;
        let binary_tol = get_f64("oracle.binary_tol", 1e-9)?;

        let group_id = raw
            .take("group.id")
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Config("missing `[group] id`".into()))?;
        let group = CarnotGroup::from_id(&group_id)
            .map_err(|e| Error::Config(e.to_string()))?;
        let n = group.n();

        let shape_kind =
            raw.take("domain.shape").map(|(_, v)| v).unwrap_or_else(|| "box".to_string());
        let shape = match shape_kind.as_str() {
            "box" => {
                let (line_lo, lo) = raw
                    .take("domain.lo")
                    .ok_or_else(|| Error::Config("missing `[domain] lo`".into()))?;
                let (line_hi, hi) = raw
                    .take("domain.hi")
                    .ok_or_else(|| Error::Config("missing `[domain] hi`".into()))?;
                let lo = parse_list(line_lo, "lo", &lo)?;
                let hi = parse_list(line_hi, "hi", &hi)?;
                if lo.len() != n || hi.len() != n {
                    return Err(Error::Config(format!(
                        "domain bounds need {n} coordinates for {group_id}"
                    )));
                }
                ShapeConfig::Box { lo, hi }
            }
            "ball" => {
                let (line_c, c) = raw
                    .take("domain.center")
                    .ok_or_else(|| Error::Config("missing `[domain] center`".into()))?;
                let center = parse_list(line_c, "center", &c)?;
                if center.len() != n {
                    return Err(Error::Config(format!(
                        "ball center needs {n} coordinates for {group_id}"
                    )));
                }
                let (line_r, r) = raw
                    .take("domain.radius")
                    .ok_or_else(|| Error::Config("missing `[domain] radius`".into()))?;
                let radius = parse_f64(line_r, "radius", &r)?;
                ShapeConfig::Ball { center, radius }
            }
            other => return Err(Error::Config(format!("unknown domain shape `{other}`"))),
        };

        let (psi_line, psi_src) = raw
            .take("datum.psi")
            .ok_or_else(|| Error::Config("missing `[datum] psi`".into()))?;
        let psi = Expr::parse(&psi_src)
            .map_err(|e| cfg_err(psi_line, format!("datum expression {e}")))?;
        if let Some(k) = psi.max_coord() {
            if k >= n {
                return Err(cfg_err(
                    psi_line,
                    format!("datum references x{} but {group_id} has n = {n}", k + 1),
                ));
            }
        }

        let (eps_line, eps_raw) = raw
            .take("discretization.eps")
            .ok_or_else(|| Error::Config("missing `[discretization] eps`".into()))?;
        let eps_list = parse_list(eps_line, "eps", &eps_raw)?;
        if eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(cfg_err(eps_line, "eps values must be positive"));
        }

        let max_iter = match raw.take("solver.max_iter") {
            Some((line, v)) => parse_usize(line, "max_iter", &v)?,
            None => 200_000,
        };
        let warm_start_iters = match raw.take("solver.warm_start_iters") {
            Some((line, v)) => parse_usize(line, "warm_start_iters", &v)?,
            None => 4000,
        };
        let seed = match raw.take("solver.seed") {
            Some((line, v)) => v
                .parse::<u64>()
                .map_err(|_| cfg_err(line, format!("`seed` expects an integer, got `{v}`")))?,
            None => 1,
        };
        let p_max_iter = match raw.take("oracle.p_max_iter") {
            Some((line, v)) => parse_usize(line, "p_max_iter", &v)?,
            None => 400_000,
        };
        let p_list = match raw.take("oracle.p_list") {
            Some((line, v)) => parse_list(line, "p_list", &v)?,
            None => vec![2.0, 1.5, 1.2, 1.05],
        };
        let mincut = match raw.take("oracle.mincut") {
            Some((line, v)) => match v.as_str() {
                "auto" => MinCutMode::Auto,
                "on" => MinCutMode::On,
                "off" => MinCutMode::Off,
                other => {
                    return Err(cfg_err(
                        line,
                        format!("`mincut` must be auto/on/off, got `{other}`"),
                    ))
                }
            },
            None => MinCutMode::Auto,
        };

        let reference_src = raw.take("sweep.reference").map(|(_, v)| v);
        let reference = match &reference_src {
            Some(src) => {
                let e = Expr::parse(src)
                    .map_err(|e| Error::Config(format!("reference expression {e}")))?;
                if let Some(k) = e.max_coord() {
                    if k >= n {
                        return Err(Error::Config(format!(
                            "reference references x{} but {group_id} has n = {n}",
                            k + 1
                        )));
                    }
                }
                Some(e)
            }
            None => None,
        };
        let estimate_domain = match raw.take("sweep.estimate_domain") {
            Some((line, v)) => match v.as_str() {
                "omega1" => EstimateDomain::Enlarged,
                "omega_eps" => EstimateDomain::RowOwners,
                other => {
                    return Err(cfg_err(
                        line,
                        format!("`estimate_domain` must be omega1 or omega_eps, got `{other}`"),
                    ))
                }
            },
            None => EstimateDomain::Enlarged,
        };
        let compute_zeta = match raw.take("sweep.zeta") {
            Some((line, v)) => match v.as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(cfg_err(line, format!("`zeta` must be a boolean, got `{other}`")))
                }
            },
            None => false,
        };
        let out_dir =
            raw.take("output.dir").map(|(_, v)| v).unwrap_or_else(|| "out".to_string());

        if let Some((key, (line, _))) = raw.entries.iter().next() {
            return Err(cfg_err(*line, format!("unknown key `{key}`")));
        }

        Ok(Self {
            group_id,
            shape,
            halo_width,
            psi_src,
            psi,
            eps_list,
            rho,
            max_iter,
            tol_gap,
            residual_tol,
            seed,
            warm_start_iters,
            p_list,
            p_delta,
            p_tol,
            p_max_iter,
            p_agreement_tol,
            cut_agreement_tol,
            binary_tol,
            mincut,
            reference_src,
            reference,
            estimate_domain,
            compute_zeta,
            out_dir,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn group(&self) -> Result<CarnotGroup> {
        CarnotGroup::from_id(&self.group_id)
    }

    pub fn domain_spec(&self) -> DomainSpec {
        let shape = match &self.shape {
            ShapeConfig::Box { lo, hi } => DomainShape::Box { lo: lo.clone(), hi: hi.clone() },
            ShapeConfig::Ball { center, radius } => {
                DomainShape::BoxBall { center: center.clone(), radius: *radius }
            }
        };
        DomainSpec { shape, halo_width: self.halo_width }
    }

    pub fn pd_params(&self) -> PdParams {
        PdParams {
            max_iter: self.max_iter,
            tol_gap: self.tol_gap,
            check_every: 64,
            seed: self.seed,
            warm_start_iters: self.warm_start_iters,
        }
    }

    /// Fully resolved configuration as sorted `key = value` pairs; the
    /// canonical input of the run id and the echo in reports.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let fmt_list =
            |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        m.insert("group.id".to_string(), self.group_id.clone());
        match &self.shape {
            ShapeConfig::Box { lo, hi } => {
                m.insert("domain.shape".to_string(), "box".to_string());
                m.insert("domain.lo".to_string(), fmt_list(lo));
                m.insert("domain.hi".to_string(), fmt_list(hi));
            }
            ShapeConfig::Ball { center, radius } => {
                m.insert("domain.shape".to_string(), "ball".to_string());
                m.insert("domain.center".to_string(), fmt_list(center));
                m.insert("domain.radius".to_string(), radius.to_string());
            }
        }
        m.insert("domain.halo_width".to_string(), self.halo_width.to_string());
        m.insert("datum.psi".to_string(), self.psi_src.clone());
        m.insert("discretization.eps".to_string(), fmt_list(&self.eps_list));
        m.insert("discretization.rho".to_string(), self.rho.to_string());
        m.insert("solver.max_iter".to_string(), self.max_iter.to_string());
        m.insert("solver.tol_gap".to_string(), self.tol_gap.to_string());
        m.insert("solver.residual_tol".to_string(), self.residual_tol.to_string());
        m.insert("solver.seed".to_string(), self.seed.to_string());
        m.insert("solver.warm_start_iters".to_string(), self.warm_start_iters.to_string());
        m.insert("oracle.p_list".to_string(), fmt_list(&self.p_list));
        m.insert("oracle.p_delta".to_string(), self.p_delta.to_string());
        m.insert("oracle.p_tol".to_string(), self.p_tol.to_string());
        m.insert("oracle.p_max_iter".to_string(), self.p_max_iter.to_string());
        m.insert("oracle.p_agreement_tol".to_string(), self.p_agreement_tol.to_string());
        m.insert("oracle.cut_agreement_tol".to_string(), self.cut_agreement_tol.to_string());
        m.insert("oracle.binary_tol".to_string(), self.binary_tol.to_string());
        m.insert(
            "oracle.mincut".to_string(),
            match self.mincut {
                MinCutMode::Auto => "auto",
                MinCutMode::On => "on",
                MinCutMode::Off => "off",
            }
            .to_string(),
        );
        if let Some(r) = &self.reference_src {
            m.insert("sweep.reference".to_string(), r.clone());
        }
        m.insert(
            "sweep.estimate_domain".to_string(),
            match self.estimate_domain {
                EstimateDomain::Enlarged => "omega1",
                EstimateDomain::RowOwners => "omega_eps",
            }
            .to_string(),
        );
        m.insert("sweep.zeta".to_string(), self.compute_zeta.to_string());
        m.insert("output.dir".to_string(), self.out_dir.clone());
        m
    }

    /// FNV-1a hash of the resolved configuration, as a short run id.
    pub fn run_id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in self.resolved() {
            for byte in k.bytes().chain([b'='].into_iter()).chain(v.bytes()).chain([b'\n']) {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# least gradient on the line
[group]
id = abelian1

[domain]
lo = 0
hi = 1
halo_width = 1

[datum]
psi = step(x1 - 0.5)

[discretization]
eps = 0.2, 0.1, 0.05
rho = 10

[solver]
seed = 7
";

    #[test]
    fn parses_and_resolves() {
        let c = RunConfig::parse_str(GOOD).unwrap();
        assert_eq!(c.group_id, "abelian1");
        assert_eq!(c.eps_list, vec![0.2, 0.1, 0.05]);
        assert_eq!(c.seed, 7);
        assert_eq!(c.rho, 10.0);
        assert_eq!(c.out_dir, "out");
        assert_eq!(c.psi.eval(&[0.7]), 1.0);
        let id = c.run_id();
        assert_eq!(id.len(), 16);
        assert_eq!(id, RunConfig::parse_str(GOOD).unwrap().run_id());
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let bad = format!("{GOOD}\n[solver]\nwill_not_exist = 3\n");
        assert!(RunConfig::parse_str(&bad).is_err());
        let dup = format!("{GOOD}\n[solver]\nseed = 8\n");
        assert!(RunConfig::parse_str(&dup).is_err());
    }

    #[test]
    fn rejects_coordinate_out_of_range() {
        let bad = GOOD.replace("step(x1 - 0.5)", "x2");
        assert!(RunConfig::parse_str(&bad).is_err());
    }

    #[test]
    fn rejects_wrong_bounds_dimension() {
        let bad = GOOD.replace("id = abelian1", "id = heisenberg1");
        assert!(RunConfig::parse_str(&bad).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            "[group\nid = abelian1",
            "id = abelian1",
            "[group]\nid abelian1",
            "[group]\nid = nosuchgroup\n[domain]\nlo=0\nhi=1\n[datum]\npsi=0\n[discretization]\neps=0.1",
        ] {
            assert!(RunConfig::parse_str(bad).is_err(), "`{bad}` should fail");
        }
    }

    #[test]
    fn ball_shape_parses() {
        let text = "\
[group]
id = heisenberg1
[domain]
shape = ball
center = 0, 0, 0
radius = 0.5
halo_width = 0.5
[datum]
psi = sign(x1)
[discretization]
eps = 0.2
";
        let c = RunConfig::parse_str(text).unwrap();
        match c.shape {
            ShapeConfig::Ball { ref center, radius } => {
                assert_eq!(center.len(), 3);
                assert_eq!(radius, 0.5);
            }
            _ => panic!("expected ball"),
        }
    }
}
