//! Uniform total-variation estimate trend and the structure-of-derivative
//! pairing check.

use crate::domain::{build_lattice, DomainShape, DomainSpec};
use crate::error::{invalid, Result};
use crate::group::check::least_squares_slope;
use crate::group::{CarnotGroup, GroupOps};
use crate::kernel::build_kernel;
use crate::tv::KahanSum;

/// Trend of M_ε = (1/ε) ∫ ⨍ |Δu_ψ| across a sweep.
#[derive(Debug, Clone)]
pub struct UniformEstimateReport {
    pub eps: Vec<f64>,
    pub m_values: Vec<f64>,
    pub sup: f64,
    /// Least-squares slope of log M against log ε.
    pub slope: Option<f64>,
    /// |slope| ≤ 0.1: the estimate neither grows nor decays across the
    /// sweep.
    pub flat: bool,
}

pub fn uniform_estimate_trend(eps: &[f64], m_values: &[f64]) -> Result<UniformEstimateReport> {
    if eps.len() != m_values.len() || eps.is_empty() {
        return Err(invalid("need one M value per eps"));
    }
    let sup = m_values.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(m_values)
        .filter(|(_, &m)| m > 1e-300)
        .map(|(&e, &m)| (e.ln(), m.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| least_squares_slope(&pts));
    let flat = slope.map(|s| s.abs() <= 0.1).unwrap_or(true);
    Ok(UniformEstimateReport { eps: eps.to_vec(), m_values: m_values.to_vec(), sup, slope, flat })
}

/// Closed-form fields for the pairing check.
pub struct SmoothField<'a> {
    pub f: &'a dyn Fn(&[f64]) -> f64,
    pub grad: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PairingReport {
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    pub fitted_order: Option<f64>,
    /// All errors at the round-off floor.
    pub exact: bool,
}

/// Compare the discrete double integral of (Δ_ε f / ε) φ(x) ψ_z(z) against
/// the same quadrature of ⟨z, Xf⟩ φ(x) ψ_z(z) per ε. Both sides share the
/// z-quadrature, so fields linear in the horizontal coordinates cancel
/// term by term.
pub fn structure_pairing_check(
    group: &CarnotGroup,
    lo: &[f64],
    hi: &[f64],
    f: SmoothField,
    phi: &dyn Fn(&[f64]) -> f64,
    psi_z: &dyn Fn(&[f64]) -> f64,
    eps_list: &[f64],
    rho: f64,
) -> Result<PairingReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps list must be nonempty and strictly decreasing"));
    }
    if !(rho >= 2.0) {
        return Err(invalid("rho must be at least 2"));
    }
    let n = group.n();
    let m = group.m();
    let mut errors = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let spec = DomainSpec {
            shape: DomainShape::Box { lo: lo.to_vec(), hi: hi.to_vec() },
            halo_width: eps,
        };
        let dom = build_lattice(group, &spec, eps, eps / rho)?;
        let kernel = build_kernel(&dom, eps)?;
        let zcell = dom.cell_measure / eps.powi(group.q() as i32);
        let mut acc = KahanSum::default();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut delta = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut z = vec![0.0; n];
        for &id in &dom.interior_ids {
            dom.point_into(id, &mut x);
            let phix = phi(&x);
            if phix == 0.0 {
                continue;
            }
            let fx = f.f;
            let fxv = fx(&x);
            let gradf = (f.grad)(&x);
            let xf = group.horizontal_gradient(&gradf, &x)?;
            let r = kernel.row_for_point(id).expect("interior rows exist");
            let mut inner = KahanSum::default();
            for e in kernel.row(r) {
                if !dom.is_interior(e.dst) {
                    continue; // χ_D on the shifted point
                }
                dom.point_into(e.dst, &mut y);
                group.delta_into(&x, &y, &mut delta, &mut scratch);
                for (k, &d) in group.degrees().iter().enumerate() {
                    z[k] = delta[k] / eps.powi(d as i32);
                }
                let quotient = (fx(&y) - fxv) / eps;
                let pairing: f64 = (0..m).map(|i| z[i] * xf[i]).sum();
                inner.add(e.pre * psi_z(&z) * (quotient - pairing));
            }
            acc.add(dom.cell_measure * zcell * phix * inner.value());
        }
        errors.push(acc.value().abs());
    }
    let floor = 1e-12;
    let exact = errors.iter().all(|&e| e <= floor);
    let pts: Vec<(f64, f64)> = eps_list
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > floor)
        .map(|(&eps, &e)| (eps.ln(), e.ln()))
        .collect();
    let fitted_order = (pts.len() >= 2).then(|| least_squares_slope(&pts));
    Ok(PairingReport { eps: eps_list.to_vec(), errors, fitted_order, exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(lo: f64, hi: f64) -> impl Fn(&[f64]) -> f64 {
        move |p: &[f64]| {
            let mut v = 1.0;
            for &c in p {
                let t = (2.0 * (c - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
                let s = 1.0 - t * t;
                v *= s * s;
            }
            v
        }
    }

    #[test]
    fn horizontal_coordinate_pairs_exactly() {
        let g = CarnotGroup::heisenberg1();
        let f = SmoothField {
            f: &|p: &[f64]| p[0],
            grad: &|_p: &[f64]| vec![1.0, 0.0, 0.0],
        };
        let phi = bump(0.0, 1.0);
        let psi_z = |z: &[f64]| 1.0 + 0.5 * z[2];
        let rep = structure_pairing_check(
            &g,
            &[0.0; 3],
            &[1.0; 3],
            f,
            &phi,
            &psi_z,
            &[0.25, 0.125],
            4.0,
        )
        .unwrap();
        assert!(rep.exact, "errors {:?}", rep.errors);
        for e in rep.errors {
            assert_eq!(e, 0.0);
        }
    }

    #[test]
    fn vertical_coordinate_pairs_at_first_order() {
        let g = CarnotGroup::heisenberg1();
        let f = SmoothField {
            f: &|p: &[f64]| p[2],
            grad: &|_p: &[f64]| vec![0.0, 0.0, 1.0],
        };
        let phi = bump(0.0, 1.0);
        let psi_z = |z: &[f64]| 1.0 + 0.5 * z[2];
        let rep = structure_pairing_check(
            &g,
            &[0.0; 3],
            &[1.0; 3],
            f,
            &phi,
            &psi_z,
            &[0.25, 0.125, 0.0625],
            4.0,
        )
        .unwrap();
        assert!(!rep.exact);
        let order = rep.fitted_order.unwrap();
        assert!(order >= 0.9, "order {order}, errors {:?}", rep.errors);
    }

    #[test]
    fn constant_field_is_trivially_exact() {
        let g = CarnotGroup::abelian(2).unwrap();
        let f = SmoothField { f: &|_p: &[f64]| 3.0, grad: &|_p: &[f64]| vec![0.0, 0.0] };
        let phi = bump(0.0, 1.0);
        let rep = structure_pairing_check(
            &g,
            &[0.0; 2],
            &[1.0; 2],
            f,
            &phi,
            &|_z: &[f64]| 1.0,
            &[0.25, 0.125],
            4.0,
        )
        .unwrap();
        assert!(rep.exact);
    }

    #[test]
    fn trend_report_flags_growth() {
        let flat = uniform_estimate_trend(&[0.2, 0.1, 0.05], &[0.5, 0.501, 0.4999]).unwrap();
        assert!(flat.flat);
        let growing = uniform_estimate_trend(&[0.2, 0.1, 0.05], &[0.5, 1.0, 2.0]).unwrap();
        assert!(!growing.flat);
        assert!(growing.slope.unwrap() < -0.9);
        assert!(uniform_estimate_trend(&[0.1], &[]).is_err());
    }
}
