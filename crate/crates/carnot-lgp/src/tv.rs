//! Nonlocal total variation, rescaled gradient norm and Poincaré ratio.

use crate::domain::{DiscreteDomain, Tag};
use crate::error::{invalid, Result};
use crate::kernel::{BallWalker, WalkKernel};

/// How kernel weights enter the functionals: the row-stochastic weights, or
/// the analytic ball measure 2ⁿε^Q (which makes change-of-variables
/// identities exact).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Stochastic,
    Analytic,
}

/// Fixed-order compensated accumulator; evaluation order never depends on
/// thread count, so identical inputs reproduce bitwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    s: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s
    }
}

/// Extend interior values by the datum: u on interior cells, ψ on halo
/// cells. `u` is indexed by interior slot, `psi` is evaluated at halo cell
/// centers and must be finite there.
pub fn extend_with_datum<F: Fn(&[f64]) -> f64>(
    dom: &DiscreteDomain,
    u: &[f64],
    psi: F,
) -> Result<Vec<f64>> {
    if u.len() != dom.n_interior() {
        return Err(invalid(format!(
            "interior vector has {} entries, domain has {} interior points",
            u.len(),
            dom.n_interior()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(invalid("interior values must be finite"));
    }
    let mut out = vec![0.0; dom.n_points()];
    let mut p = vec![0.0; dom.dim()];
    for id in 0..dom.n_points() as u32 {
        match dom.tags[id as usize] {
            Tag::Interior => out[id as usize] = u[dom.interior_slot[id as usize] as usize],
            Tag::Halo => {
                dom.point_into(id, &mut p);
                let v = psi(&p);
                if !v.is_finite() {
                    return Err(invalid(format!("datum is not finite at halo point {p:?}")));
                }
                out[id as usize] = v;
            }
        }
    }
    Ok(out)
}

/// Evaluate the datum on every halo cell (interior slots left 0).
pub fn datum_values<F: Fn(&[f64]) -> f64>(dom: &DiscreteDomain, psi: F) -> Result<Vec<f64>> {
    extend_with_datum(dom, &vec![0.0; dom.n_interior()], psi)
}

/// Nonlocal total variation ½ Σ_x ν_x Σ_y m_x(y) |u_ψ(y) − u_ψ(x)| with x
/// over kernel rows and y restricted to row-owning points (the discrete
/// Ω_m × Ω_m double integral).
pub fn nonlocal_tv(
    dom: &DiscreteDomain,
    kernel: &WalkKernel,
    u_psi: &[f64],
    norm: Normalization,
) -> f64 {
    let cell = dom.cell_measure;
    let mut acc = KahanSum::default();
    for r in 0..kernel.n_rows() {
        let x = kernel.row_points[r];
        let ux = u_psi[x as usize];
        let scale = match norm {
            Normalization::Stochastic => cell,
            Normalization::Analytic => cell * kernel.ball_mass[r]
                / dom.group.ball_volume(kernel.eps).expect("positive eps"),
        };
        let mut inner = KahanSum::default();
        for e in kernel.row(r) {
            if kernel.owns_row(e.dst) {
                inner.add(e.weight * (u_psi[e.dst as usize] - ux).abs());
            }
        }
        acc.add(0.5 * scale * inner.value());
    }
    acc.value()
}

/// Discrete value of ∫_D ∫ χ_{U(0,1)}(z) χ_D(x δ_ε(z)) |Δ_ε u / ε|^q dz dx
/// after the change of variables z = δ_{1/ε}(x⁻¹y); the z-cell measure is
/// pre·hⁿ/ε^Q. D is the row-owning set.
pub fn rescaled_gradient_norm(
    dom: &DiscreteDomain,
    kernel: &WalkKernel,
    u_psi: &[f64],
    q: f64,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(invalid("exponent must satisfy q >= 1"));
    }
    let eps = kernel.eps;
    let cell = dom.cell_measure;
    let zcell = cell / eps.powi(dom.group.q() as i32);
    let mut acc = KahanSum::default();
    for r in 0..kernel.n_rows() {
        let x = kernel.row_points[r];
        let ux = u_psi[x as usize];
        let mut inner = KahanSum::default();
        for e in kernel.row(r) {
            if kernel.owns_row(e.dst) {
                let t = (u_psi[e.dst as usize] - ux).abs() / eps;
                inner.add(e.pre * t.powf(q));
            }
        }
        acc.add(cell * zcell * inner.value());
    }
    Ok(acc.value())
}

/// Ratio of the Poincaré right-hand side to Σ_Ω |u|^q ν: the jump integral
/// over Ω × Ω_m plus the datum mass over ∂_mΩ, divided by the interior
/// q-norm.
pub fn poincare_ratio(
    dom: &DiscreteDomain,
    kernel: &WalkKernel,
    u: &[f64],
    psi_vals: &[f64],
    q: f64,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(invalid("exponent must satisfy q >= 1"));
    }
    let u_psi = {
        let mut all = psi_vals.to_vec();
        for (slot, &id) in dom.interior_ids.iter().enumerate() {
            all[id as usize] = u[slot];
        }
        all
    };
    let cell = dom.cell_measure;
    let mut num = KahanSum::default();
    for r in 0..kernel.n_rows() {
        let x = kernel.row_points[r];
        if dom.tags[x as usize] != Tag::Interior {
            continue;
        }
        let ux = u_psi[x as usize];
        let mut inner = KahanSum::default();
        for e in kernel.row(r) {
            if kernel.owns_row(e.dst) {
                inner.add(e.weight * (u_psi[e.dst as usize] - ux).abs().powf(q));
            }
        }
        num.add(cell * inner.value());
    }
    for r in 0..kernel.n_rows() {
        let x = kernel.row_points[r];
        if dom.tags[x as usize] == Tag::Halo {
            num.add(cell * psi_vals[x as usize].abs().powf(q));
        }
    }
    let mut den = KahanSum::default();
    for &v in u {
        den.add(cell * v.abs().powf(q));
    }
    if den.value() == 0.0 {
        return Err(invalid("Poincaré ratio undefined for u = 0"));
    }
    Ok(num.value() / den.value())
}

/// One term of the uniform estimate: (1/ε) Σ_x ν_x ⨍_{U(x,ε)} |u_ψ(y) −
/// u_ψ(x)| dν(y), with x over either the whole stored set (the fixed
/// enlarged domain) or the row-owning set, per `on_rows`.
pub fn mean_increment_estimate(
    dom: &DiscreteDomain,
    kernel: &WalkKernel,
    u_psi: &[f64],
    on_rows: bool,
) -> f64 {
    let eps = kernel.eps;
    let cell = dom.cell_measure;
    let mut acc = KahanSum::default();
    if on_rows {
        for r in 0..kernel.n_rows() {
            let x = kernel.row_points[r];
            let ux = u_psi[x as usize];
            let mut inner = KahanSum::default();
            for e in kernel.row(r) {
                inner.add(e.weight * (u_psi[e.dst as usize] - ux).abs());
            }
            acc.add(cell * inner.value());
        }
    } else {
        let walker = BallWalker::new(dom, eps);
        for id in 0..dom.n_points() as u32 {
            let ux = u_psi[id as usize];
            let mut mass = 0.0;
            let mut inner = KahanSum::default();
            walker.visit(id, |dst, pre, _| {
                mass += pre;
                inner.add(pre * (u_psi[dst as usize] - ux).abs());
            });
            if mass > 0.0 {
                acc.add(cell * inner.value() / mass);
            }
        }
    }
    acc.value() / eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_lattice, DomainShape, DomainSpec};
    use crate::group::CarnotGroup;
    use crate::kernel::build_kernel;

    fn line(eps: f64, h: f64, halo: f64) -> (DiscreteDomain, WalkKernel) {
        let g = CarnotGroup::abelian(1).unwrap();
        let spec =
            DomainSpec { shape: DomainShape::Box { lo: vec![0.0], hi: vec![1.0] }, halo_width: halo };
        let dom = build_lattice(&g, &spec, eps, h).unwrap();
        let k = build_kernel(&dom, eps).unwrap();
        (dom, k)
    }

    #[test]
    fn constant_extension_has_zero_tv() {
        let (dom, k) = line(0.1, 0.01, 0.2);
        let u_psi = extend_with_datum(&dom, &vec![3.0; dom.n_interior()], |_| 3.0).unwrap();
        assert_eq!(nonlocal_tv(&dom, &k, &u_psi, Normalization::Stochastic), 0.0);
    }

    #[test]
    fn non_finite_datum_is_rejected() {
        let (dom, _k) = line(0.1, 0.01, 0.2);
        let res = extend_with_datum(&dom, &vec![0.0; dom.n_interior()], |p| 1.0 / p[0]);
        assert!(res.is_ok()); // halo points avoid zero
        let res = extend_with_datum(&dom, &vec![0.0; dom.n_interior()], |_| f64::NAN);
        assert!(res.is_err());
    }

    /// Closed-form oracle: a step function jumping at c = 0.5 has nonlocal
    /// variation ∫_{c−ε}^{c} (x+ε−c)/(2ε) dx = ε/4; the tie-split lattice
    /// reproduces it exactly.
    #[test]
    fn step_function_energy_is_quarter_eps() {
        let eps = 0.1;
        let (dom, k) = line(eps, 0.01, 0.2);
        let u: Vec<f64> = dom
            .interior_ids
            .iter()
            .map(|&id| if dom.coord(id, 0) > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let u_psi = extend_with_datum(&dom, &u, |p| if p[0] > 0.5 { 1.0 } else { 0.0 }).unwrap();
        let j = nonlocal_tv(&dom, &k, &u_psi, Normalization::Stochastic);
        assert!((j - eps / 4.0).abs() <= 1e-12, "J = {j}");
        // well inside the spec budget ε/4 ± 0.003
        assert!((j - 0.025).abs() <= 0.003);
    }

    #[test]
    fn tv_is_positively_homogeneous_and_convex() {
        let (dom, k) = line(0.1, 0.02, 0.2);
        let u: Vec<f64> =
            dom.interior_ids.iter().map(|&id| (7.3 * dom.coord(id, 0)).sin()).collect();
        let v: Vec<f64> =
            dom.interior_ids.iter().map(|&id| (3.1 * dom.coord(id, 0)).cos()).collect();
        let ext = |w: &[f64]| extend_with_datum(&dom, w, |_| 0.0).unwrap();
        let j = |w: &[f64]| nonlocal_tv(&dom, &k, &ext(w), Normalization::Stochastic);
        let two_u: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        assert!((j(&two_u) - 2.0 * j(&u)).abs() <= 1e-12 * (1.0 + j(&u)));
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        assert!(j(&sum) <= j(&u) + j(&v) + 1e-12);
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        assert!(j(&mid) <= 0.5 * j(&u) + 0.5 * j(&v) + 1e-12);
    }

    /// u = x on the line with q = 1 integrates |z| over the unit ball: the
    /// rescaled norm equals the measure of the row-owning set; q = 2 scales
    /// it by ∫ z² dz / 2 = 1/3.
    #[test]
    fn rescaled_norm_matches_linear_profile_oracle() {
        let eps = 0.1;
        let (dom, k) = line(eps, 0.01, 0.2);
        let u: Vec<f64> = dom.interior_ids.iter().map(|&id| dom.coord(id, 0)).collect();
        let u_psi = extend_with_datum(&dom, &u, |p| p[0]).unwrap();
        let d_measure = k.n_rows() as f64 * dom.cell_measure;
        // On the interval D of the row-owning cells, ∫_D ∫ χ_D(x+εz) |z|^q
        // dz dx = (2/(q+1))|D| − 2ε/(q+2): the second term is the rim loss
        // where the z-ball leaves D.
        let oracle = |q: f64| 2.0 / (q + 1.0) * d_measure - 2.0 * eps / (q + 2.0);
        let g1 = rescaled_gradient_norm(&dom, &k, &u_psi, 1.0).unwrap();
        assert!((g1 - oracle(1.0)).abs() <= 0.02 * oracle(1.0), "g1 = {g1} vs {}", oracle(1.0));
        let g2 = rescaled_gradient_norm(&dom, &k, &u_psi, 2.0).unwrap();
        assert!((g2 - oracle(2.0)).abs() <= 0.02 * oracle(2.0), "g2 = {g2} vs {}", oracle(2.0));
        let zero = rescaled_gradient_norm(&dom, &k, &vec![0.0; dom.n_points()], 1.0).unwrap();
        assert_eq!(zero, 0.0);
    }

    /// Change-of-variables identity: with analytic normalization the q = 1
    /// rescaled norm is exactly (2ⁿ/ε) · 2 J.
    #[test]
    fn rescaled_norm_consistent_with_tv() {
        let eps = 0.1;
        let (dom, k) = line(eps, 0.01, 0.2);
        let u: Vec<f64> =
            dom.interior_ids.iter().map(|&id| (5.0 * dom.coord(id, 0)).sin()).collect();
        let u_psi = extend_with_datum(&dom, &u, |p| p[0]).unwrap();
        let g1 = rescaled_gradient_norm(&dom, &k, &u_psi, 1.0).unwrap();
        let j = nonlocal_tv(&dom, &k, &u_psi, Normalization::Analytic);
        let lhs = g1;
        let rhs = 2f64.powi(1) / eps * 2.0 * j;
        assert!(
            (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
            "identity violated: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn poincare_ratio_constant_datum() {
        let (dom, k) = line(0.1, 0.01, 0.1);
        let u = vec![1.0; dom.n_interior()];
        let psi = datum_values(&dom, |_| 1.0).unwrap();
        let ratio = poincare_ratio(&dom, &k, &u, &psi, 1.0).unwrap();
        // jump term vanishes; numerator is the datum mass on ∂_mΩ = 20 halo
        // cells, denominator is the interior mass.
        let expect = 20.0 * dom.cell_measure / (100.0 * dom.cell_measure);
        assert!((ratio - expect).abs() <= 1e-12);
        assert!(poincare_ratio(&dom, &k, &vec![0.0; dom.n_interior()], &psi, 1.0).is_err());
    }

    #[test]
    fn poincare_ratio_positive_over_random_draws() {
        use rand::{Rng, SeedableRng};
        let (dom, k) = line(0.1, 0.02, 0.1);
        let psi = datum_values(&dom, |_| 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut min_ratio = f64::INFINITY;
        for _ in 0..50 {
            let u: Vec<f64> =
                (0..dom.n_interior()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = poincare_ratio(&dom, &k, &u, &psi, 2.0).unwrap();
            min_ratio = min_ratio.min(r);
        }
        assert!(min_ratio > 0.0);
    }
}
