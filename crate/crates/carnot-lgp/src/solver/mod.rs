//! Minimization of the nonlocal total variation with Dirichlet datum, dual
//! certificates, and two independent oracles.
//!
//! The discrete objective is the edge form Σ_e c_e |u_ψ(b) − u_ψ(a)| over
//! unordered pairs of row-owning points with c_e = ½(ν_a m_a(b) + ν_b
//! m_b(a)) — exactly the double-sum nonlocal total variation, and exactly
//! the min-cut capacities.

pub mod mincut;
pub mod plaplace;
pub mod primal_dual;

use serde::Serialize;

use crate::domain::{DiscreteDomain, Tag, NO_POINT};
use crate::error::{invalid, Result};
use crate::kernel::WalkKernel;
use crate::tv::KahanSum;

/// One unordered kernel edge between row-owning points, a < b by point id.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    /// Energy capacity ½ ν (m_a(b) + m_b(a)).
    pub cap: f64,
    /// Walk weight of b in a's row.
    pub w_ab: f64,
    /// Walk weight of a in b's row.
    pub w_ba: f64,
    /// Tie prefactor of the pair (symmetric by construction).
    pub pre: f64,
}

/// A nonlocal least gradient instance: domain, kernel, datum values and the
/// assembled edge list.
pub struct NonlocalProblem<'a> {
    pub dom: &'a DiscreteDomain,
    pub kernel: &'a WalkKernel,
    /// Datum sampled at every point (zero on interior slots).
    pub psi: Vec<f64>,
    pub edges: Vec<Edge>,
    pub psi_min: f64,
    pub psi_max: f64,
}

impl<'a> NonlocalProblem<'a> {
    pub fn new<F: Fn(&[f64]) -> f64>(
        dom: &'a DiscreteDomain,
        kernel: &'a WalkKernel,
        psi: F,
    ) -> Result<Self> {
        let psi_vals = crate::tv::datum_values(dom, psi)?;
        Self::with_datum_values(dom, kernel, psi_vals)
    }

    pub fn with_datum_values(
        dom: &'a DiscreteDomain,
        kernel: &'a WalkKernel,
        psi: Vec<f64>,
    ) -> Result<Self> {
        if psi.len() != dom.n_points() {
            return Err(invalid("datum vector length must match the point count"));
        }
        let mut psi_min = f64::INFINITY;
        let mut psi_max = f64::NEG_INFINITY;
        for id in 0..dom.n_points() {
            if dom.tags[id] == Tag::Halo && kernel.owns_row(id as u32) {
                psi_min = psi_min.min(psi[id]);
                psi_max = psi_max.max(psi[id]);
            }
        }
        if !psi_min.is_finite() {
            // no halo rows at all; the datum range collapses
            psi_min = 0.0;
            psi_max = 0.0;
        }

        let cell = dom.cell_measure;
        let mut edges = Vec::new();
        for r in 0..kernel.n_rows() {
            let a = kernel.row_points[r];
            for e in kernel.row(r) {
                if e.dst <= a {
                    continue;
                }
                let rb = match kernel.row_for_point(e.dst) {
                    Some(rb) => rb,
                    None => continue,
                };
                let back = kernel.row(rb);
                let w_ba = match back.binary_search_by(|x| x.dst.cmp(&a)) {
                    Ok(i) => back[i].weight,
                    Err(_) => unreachable!("kernel neighbor relation must be symmetric"),
                };
                edges.push(Edge {
                    a,
                    b: e.dst,
                    cap: 0.5 * cell * (e.weight + w_ba),
                    w_ab: e.weight,
                    w_ba,
                    pre: e.pre,
                });
            }
        }
        Ok(Self { dom, kernel, psi, edges, psi_min, psi_max })
    }

    /// Extended value at a point for a given interior vector.
    #[inline]
    pub fn value_at(&self, u: &[f64], id: u32) -> f64 {
        let slot = self.dom.interior_slot[id as usize];
        if slot == NO_POINT {
            self.psi[id as usize]
        } else {
            u[slot as usize]
        }
    }

    /// Edge-form energy Σ c_e |Δ_e|; equals the row-form nonlocal total
    /// variation up to summation order.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let mut acc = KahanSum::default();
        for e in &self.edges {
            acc.add(e.cap * (self.value_at(u, e.b) - self.value_at(u, e.a)).abs());
        }
        acc.value()
    }

    pub fn u_psi(&self, u: &[f64]) -> Vec<f64> {
        let mut all = self.psi.clone();
        for (slot, &id) in self.dom.interior_ids.iter().enumerate() {
            all[id as usize] = u[slot];
        }
        all
    }
}

/// Antisymmetric dual field stored once per unordered edge, oriented a→b.
#[derive(Debug, Clone)]
pub struct DualField {
    pub g: Vec<f64>,
}

impl DualField {
    pub fn zeros(n_edges: usize) -> Self {
        Self { g: vec![0.0; n_edges] }
    }
}

/// Residuals of the certificate conditions.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    /// max(|g| − 1, 0); the bound is enforced by projection for solver
    /// output.
    pub max_bound_overshoot: f64,
    /// Antisymmetry violation; zero by storage.
    pub max_antisymmetry: f64,
    /// max over interior x of |Σ_y m_x(y) g(x,y)|.
    pub max_row_residual: f64,
    /// max over edges with |Δ| > tie_tol of |g − sign(Δ)|.
    pub max_sign_defect: f64,
    pub tie_tol: f64,
}

impl CertificateReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_bound_overshoot <= tol
            && self.max_row_residual <= tol
            && self.max_sign_defect <= tol
    }
}

/// Evaluate the certificate conditions for (u, g) on a problem.
pub fn check_certificate(
    problem: &NonlocalProblem,
    u: &[f64],
    dual: &DualField,
    tie_tol: f64,
) -> CertificateReport {
    let mut overshoot = 0.0f64;
    let mut sign_defect = 0.0f64;
    let n_int = problem.dom.n_interior();
    let mut rows = vec![KahanSum::default(); n_int];
    for (e, &g) in problem.edges.iter().zip(&dual.g) {
        overshoot = overshoot.max(g.abs() - 1.0);
        let delta = problem.value_at(u, e.b) - problem.value_at(u, e.a);
        if delta.abs() > tie_tol {
            sign_defect = sign_defect.max((g - delta.signum()).abs());
        }
        let sa = problem.dom.interior_slot[e.a as usize];
        if sa != NO_POINT {
            rows[sa as usize].add(e.w_ab * g);
        }
        let sb = problem.dom.interior_slot[e.b as usize];
        if sb != NO_POINT {
            rows[sb as usize].add(-(e.w_ba * g));
        }
    }
    let max_row_residual = rows.iter().map(|k| k.value().abs()).fold(0.0, f64::max);
    CertificateReport {
        max_bound_overshoot: overshoot.max(0.0),
        max_antisymmetry: 0.0,
        max_row_residual,
        max_sign_defect: sign_defect,
        tie_tol,
    }
}

/// Default tie tolerance 1e−9 · max(‖ψ‖∞, 1); edges with smaller |Δ| are
/// treated as unconstrained by the sign condition.
pub fn default_tie_tol(problem: &NonlocalProblem) -> f64 {
    1e-9 * problem.psi_min.abs().max(problem.psi_max.abs()).max(1.0)
}

/// Solve summary; wall time is reported on stderr only so that serialized
/// reports stay byte-stable across reruns.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub primal_energy: f64,
    pub dual_energy: f64,
    pub duality_gap: f64,
    pub relative_gap: f64,
    pub max_row_residual: f64,
    pub max_sign_residual: f64,
    pub converged: bool,
    #[serde(skip)]
    pub wall_time_s: f64,
}
