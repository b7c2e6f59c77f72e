//! Horizontal certificate field extracted from a discrete dual, and the
//! local 1-Laplace certificate checks.

use crate::domain::{DiscreteDomain, NO_POINT};
use crate::error::{invalid, Result};
use crate::group::GroupOps;
use crate::solver::{DualField, NonlocalProblem};
use crate::tv::KahanSum;

/// Which norm measures the horizontal gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalNorm {
    Euclidean,
    Max,
}

impl HorizontalNorm {
    fn eval(self, v: &[f64]) -> f64 {
        match self {
            HorizontalNorm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            HorizontalNorm::Max => v.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        }
    }
}

/// Per-interior-point horizontal vector field with its recorded sup norm.
#[derive(Debug, Clone)]
pub struct ZetaField {
    /// m entries per interior point, in interior-slot order.
    pub values: Vec<f64>,
    pub m: usize,
    /// max over points of the Euclidean norm.
    pub sup_norm: f64,
}

impl ZetaField {
    pub fn at(&self, slot: usize) -> &[f64] {
        &self.values[slot * self.m..(slot + 1) * self.m]
    }
}

/// ζ_i(x) = (1/C) Σ_y g(x,y) z_i(x,y) Δz with z = δ_{1/ε}(x⁻¹y) and Δz the
/// tie-weighted z-cell measure pre·hⁿ/ε^Q; C is the first-moment constant
/// of the group.
pub fn extract_zeta(problem: &NonlocalProblem, dual: &DualField) -> ZetaField {
    let dom = problem.dom;
    let group = &dom.group;
    let (n, m) = (group.n(), group.m());
    let eps = problem.kernel.eps;
    let c_g = group.first_moment_constant();
    let zcell = dom.cell_measure / eps.powi(group.q() as i32);
    let n_int = dom.n_interior();
    let mut acc = vec![KahanSum::default(); n_int * m];

    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for (e, &g) in problem.edges.iter().zip(&dual.g) {
        if g == 0.0 {
            continue;
        }
        let sa = dom.interior_slot[e.a as usize];
        let sb = dom.interior_slot[e.b as usize];
        if sa == NO_POINT && sb == NO_POINT {
            continue;
        }
        dom.point_into(e.a, &mut pa);
        dom.point_into(e.b, &mut pb);
        group.delta_into(&pa, &pb, &mut delta, &mut scratch);
        // z(b,a) = −z(a,b), so g(b,a) z_i(b,a) = g(a,b) z_i(a,b): one term
        // serves both endpoints.
        let w = g * e.pre * zcell / c_g;
        for i in 0..m {
            let zi = delta[i] / eps;
            if sa != NO_POINT {
                acc[sa as usize * m + i].add(w * zi);
            }
            if sb != NO_POINT {
                acc[sb as usize * m + i].add(w * zi);
            }
        }
    }
    let values: Vec<f64> = acc.iter().map(|k| k.value()).collect();
    let mut sup = 0.0f64;
    for slot in 0..n_int {
        let v = &values[slot * m..(slot + 1) * m];
        sup = sup.max(v.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    ZetaField { values, m, sup_norm: sup }
}

/// Multilinear interpolation of a lattice field at an off-lattice point.
/// Returns `None` when a corner cell is not stored.
pub fn interpolate(dom: &DiscreteDomain, field: &[f64], p: &[f64]) -> Option<f64> {
    let n = dom.dim();
    let h = dom.h;
    let mut base = vec![0i64; n];
    let mut frac = vec![0.0f64; n];
    for k in 0..n {
        let t = p[k] / h - 0.5;
        let f = t.floor();
        base[k] = f as i64;
        frac[k] = t - f;
    }
    let mut value = 0.0;
    let mut corner = vec![0i64; n];
    for mask in 0..(1usize << n) {
        let mut w = 1.0;
        for k in 0..n {
            if mask & (1 << k) != 0 {
                corner[k] = base[k] + 1;
                w *= frac[k];
            } else {
                corner[k] = base[k];
                w *= 1.0 - frac[k];
            }
        }
        if w == 0.0 {
            continue;
        }
        let id = dom.grid.lookup(&corner)?;
        value += w * field[id as usize];
    }
    Some(value)
}

/// Horizontal finite-difference gradient (u(x ∘ δ_h e_j) − u(x))/h with
/// multilinear interpolation for the off-lattice target, one-sided backward
/// fallback at the stored-set edge. `None` if neither side interpolates.
pub fn horizontal_fd_gradient(
    dom: &DiscreteDomain,
    u_all: &[f64],
    id: u32,
    out: &mut [f64],
) -> bool {
    let group = &dom.group;
    let (n, m) = (group.n(), group.m());
    let h = dom.h;
    let mut x = vec![0.0; n];
    dom.point_into(id, &mut x);
    let ux = u_all[id as usize];
    let mut step = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..m {
        step.fill(0.0);
        step[j] = h;
        group.multiply_into(&x, &step, &mut y);
        let fwd = interpolate(dom, u_all, &y);
        out[j] = match fwd {
            Some(v) => (v - ux) / h,
            None => {
                step[j] = -h;
                group.multiply_into(&x, &step, &mut y);
                match interpolate(dom, u_all, &y) {
                    Some(v) => (ux - v) / h,
                    None => return false,
                }
            }
        };
    }
    true
}

/// A compactly supported tensor bump with closed-form gradient.
pub struct TestField {
    center: Vec<f64>,
    half_width: Vec<f64>,
}

impl TestField {
    pub fn value(&self, p: &[f64]) -> f64 {
        let mut v = 1.0;
        for k in 0..p.len() {
            let t = (p[k] - self.center[k]) / self.half_width[k];
            if t.abs() >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t * t;
            v *= s * s;
        }
        v
    }

    pub fn grad_into(&self, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        let mut factors = vec![0.0; n];
        let mut dfactors = vec![0.0; n];
        for k in 0..n {
            let t = (p[k] - self.center[k]) / self.half_width[k];
            if t.abs() >= 1.0 {
                out.fill(0.0);
                return;
            }
            let s = 1.0 - t * t;
            factors[k] = s * s;
            dfactors[k] = -4.0 * t * s / self.half_width[k];
        }
        for k in 0..n {
            let mut g = dfactors[k];
            for j in 0..n {
                if j != k {
                    g *= factors[j];
                }
            }
            out[k] = g;
        }
    }
}

/// Tensor bumps tiling the box at scales 1, ½ and ¼.
pub fn test_field_dictionary(lo: &[f64], hi: &[f64]) -> Vec<TestField> {
    let n = lo.len();
    let mut fields = Vec::new();
    for split in [1usize, 2, 4] {
        let mut idx = vec![0usize; n];
        loop {
            let mut center = vec![0.0; n];
            let mut half = vec![0.0; n];
            for k in 0..n {
                let w = (hi[k] - lo[k]) / split as f64;
                half[k] = 0.5 * w;
                center[k] = lo[k] + (idx[k] as f64 + 0.5) * w;
            }
            fields.push(TestField { center, half_width: half });
            let mut k = n;
            let mut done = true;
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                if idx[k] < split {
                    done = false;
                    break;
                }
                idx[k] = 0;
            }
            if done {
                break;
            }
        }
    }
    fields
}

#[derive(Debug, Clone)]
pub struct LocalCertReport {
    /// max over the test-field dictionary of |Σ ζ·Xv ν|.
    pub max_divergence_residual: f64,
    /// Σ (|Xu|_h − ζ·Xu_h) ν; nonnegative up to discretization when ζ is a
    /// valid certificate.
    pub pairing_defect: f64,
    /// Σ |Xu|_h ν over the points where the gradient was available.
    pub local_tv: f64,
    pub sup_zeta: f64,
    pub n_test_fields: usize,
    pub skipped_gradient_points: usize,
}

/// Discrete checks of the local certificate conditions: weak divergence
/// against a bump dictionary, the pairing defect, and the sup norm.
pub fn check_local_certificate(
    dom: &DiscreteDomain,
    u_all: &[f64],
    zeta: &ZetaField,
    norm: HorizontalNorm,
) -> Result<LocalCertReport> {
    let group = &dom.group;
    let (n, m) = (group.n(), group.m());
    if zeta.m != m || zeta.values.len() != dom.n_interior() * m {
        return Err(invalid("certificate field shape mismatch"));
    }
    // bounding box of the interior cells
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for &id in &dom.interior_ids {
        for k in 0..n {
            let c = dom.coord(id, k);
            lo[k] = lo[k].min(c - 0.5 * dom.h);
            hi[k] = hi[k].max(c + 0.5 * dom.h);
        }
    }
    let fields = test_field_dictionary(&lo, &hi);

    let mut p = vec![0.0; n];
    let mut gradv = vec![0.0; n];
    let mut max_div = 0.0f64;
    for field in &fields {
        let mut acc = KahanSum::default();
        for (slot, &id) in dom.interior_ids.iter().enumerate() {
            dom.point_into(id, &mut p);
            field.grad_into(&p, &mut gradv);
            let frame = group.horizontal_frame(&p)?;
            let z = zeta.at(slot);
            let mut dot = 0.0;
            for j in 0..m {
                let xv: f64 =
                    frame[j * n..(j + 1) * n].iter().zip(&gradv).map(|(a, b)| a * b).sum();
                dot += z[j] * xv;
            }
            acc.add(dot * dom.cell_measure);
        }
        max_div = max_div.max(acc.value().abs());
    }

    let mut pairing = KahanSum::default();
    let mut tv = KahanSum::default();
    let mut grad = vec![0.0; m];
    let mut skipped = 0usize;
    for (slot, &id) in dom.interior_ids.iter().enumerate() {
        if !horizontal_fd_gradient(dom, u_all, id, &mut grad) {
            skipped += 1;
            continue;
        }
        let z = zeta.at(slot);
        let dot: f64 = z.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let mag = norm.eval(&grad);
        tv.add(mag * dom.cell_measure);
        pairing.add((mag - dot) * dom.cell_measure);
    }

    Ok(LocalCertReport {
        max_divergence_residual: max_div,
        pairing_defect: pairing.value(),
        local_tv: tv.value(),
        sup_zeta: zeta.sup_norm,
        n_test_fields: fields.len(),
        skipped_gradient_points: skipped,
    })
}

/// Σ_x |Xu_h(x)| ν over interior points (group finite differences).
pub fn local_tv_estimate(
    dom: &DiscreteDomain,
    u_all: &[f64],
    norm: HorizontalNorm,
) -> (f64, usize) {
    let m = dom.group.m();
    let mut grad = vec![0.0; m];
    let mut tv = KahanSum::default();
    let mut skipped = 0usize;
    for &id in &dom.interior_ids {
        if horizontal_fd_gradient(dom, u_all, id, &mut grad) {
            tv.add(norm.eval(&grad) * dom.cell_measure);
        } else {
            skipped += 1;
        }
    }
    (tv.value(), skipped)
}

/// L¹ distance Σ |u − u_ref| ν over interior points.
pub fn l1_distance(dom: &DiscreteDomain, u: &[f64], u_ref: &[f64]) -> Result<f64> {
    if u.len() != dom.n_interior() || u_ref.len() != dom.n_interior() {
        return Err(invalid("fields must be given on the interior points"));
    }
    let mut acc = KahanSum::default();
    for (a, b) in u.iter().zip(u_ref) {
        acc.add((a - b).abs() * dom.cell_measure);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_lattice, DomainShape, DomainSpec};
    use crate::group::CarnotGroup;
    use crate::kernel::build_kernel;
    use crate::solver::NonlocalProblem;
    use crate::tv::extend_with_datum;

    fn h1_box(eps: f64, rho: f64, side: f64) -> (DiscreteDomain, crate::kernel::WalkKernel) {
        let g = CarnotGroup::heisenberg1();
        let spec = DomainSpec {
            shape: DomainShape::Box { lo: vec![0.0; 3], hi: vec![side; 3] },
            halo_width: 2.0 * eps,
        };
        let dom = build_lattice(&g, &spec, eps, eps / rho).unwrap();
        let kernel = build_kernel(&dom, eps).unwrap();
        (dom, kernel)
    }

    /// The axis-aligned certificate integrates |z₁| over the cube: ζ = (1, 0)
    /// exactly at integer ball widths.
    #[test]
    fn axis_certificate_extracts_unit_zeta() {
        let (dom, kernel) = h1_box(0.2, 5.0, 0.6);
        let p = NonlocalProblem::new(&dom, &kernel, |x| x[0]).unwrap();
        let mut dual = crate::solver::DualField::zeros(p.edges.len());
        for (k, e) in p.edges.iter().enumerate() {
            let d = dom.coord(e.b, 0) - dom.coord(e.a, 0);
            dual.g[k] = if d.abs() <= 1e-12 { 0.0 } else { d.signum() };
        }
        let zeta = extract_zeta(&p, &dual);
        for (slot, _) in dom.interior_ids.iter().enumerate() {
            let z = zeta.at(slot);
            assert!((z[0] - 1.0).abs() <= 1e-10, "zeta1 {}", z[0]);
            assert!(z[1].abs() <= 1e-10, "zeta2 {}", z[1]);
        }
        assert!((zeta.sup_norm - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn zero_dual_gives_zero_zeta() {
        let (dom, kernel) = h1_box(0.25, 4.0, 0.5);
        let p = NonlocalProblem::new(&dom, &kernel, |_| 0.0).unwrap();
        let dual = crate::solver::DualField::zeros(p.edges.len());
        let zeta = extract_zeta(&p, &dual);
        assert_eq!(zeta.sup_norm, 0.0);
    }

    /// Componentwise bound |ζ_i| ≤ 2ⁿ/C · max ratio.
    #[test]
    fn zeta_respects_mass_bound() {
        let (dom, kernel) = h1_box(0.2, 4.0, 0.6);
        let p = NonlocalProblem::new(&dom, &kernel, |x| x[0] - x[1]).unwrap();
        let mut dual = crate::solver::DualField::zeros(p.edges.len());
        for (k, _e) in p.edges.iter().enumerate() {
            dual.g[k] = if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let zeta = extract_zeta(&p, &dual);
        let bound = 2f64.powi(dom.group.n() as i32) / dom.group.first_moment_constant();
        let ratio_max = kernel.mass_ratio.iter().cloned().fold(0.0, f64::max);
        for slot in 0..dom.n_interior() {
            for &zi in zeta.at(slot) {
                assert!(zi.abs() <= bound * ratio_max * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let (dom, _) = h1_box(0.2, 4.0, 0.6);
        let field: Vec<f64> = (0..dom.n_points() as u32)
            .map(|id| 2.0 * dom.coord(id, 0) - 0.5 * dom.coord(id, 2))
            .collect();
        let probe = [0.2137, 0.3512, 0.1444];
        let got = interpolate(&dom, &field, &probe).unwrap();
        let want = 2.0 * probe[0] - 0.5 * probe[2];
        assert!((got - want).abs() <= 1e-12);
        // off the stored set
        assert!(interpolate(&dom, &field, &[5.0, 5.0, 5.0]).is_none());
    }

    #[test]
    fn local_certificate_for_exact_solution() {
        let (dom, kernel) = h1_box(0.2, 5.0, 1.0);
        let _ = &kernel;
        let u: Vec<f64> = dom.interior_ids.iter().map(|&id| dom.coord(id, 0)).collect();
        let u_all = extend_with_datum(&dom, &u, |p| p[0]).unwrap();
        let n_int = dom.n_interior();
        let mut values = vec![0.0; n_int * 2];
        for slot in 0..n_int {
            values[slot * 2] = 1.0;
        }
        let zeta = ZetaField { values, m: 2, sup_norm: 1.0 };
        let rep = check_local_certificate(&dom, &u_all, &zeta, HorizontalNorm::Euclidean)
            .unwrap();
        assert_eq!(rep.skipped_gradient_points, 0);
        // |Xu| = 1: local TV is the interior volume
        let vol = dom.n_interior() as f64 * dom.cell_measure;
        assert!((rep.local_tv - vol).abs() <= 1e-9 * vol, "tv {}", rep.local_tv);
        // pairing defect vanishes for the exact certificate
        assert!(rep.pairing_defect.abs() <= 1e-9 * vol, "defect {}", rep.pairing_defect);
        // ∫ X₁ v = 0 for compact bumps, discretely O(h)
        assert!(
            rep.max_divergence_residual <= 5.0 * dom.h,
            "divergence {}",
            rep.max_divergence_residual
        );
        assert_eq!(rep.sup_zeta, 1.0);
    }

    #[test]
    fn scaled_zeta_is_flagged_by_sup_norm() {
        let n_int = 10;
        let mut values = vec![0.0f64; n_int * 2];
        for slot in 0..n_int {
            values[slot * 2] = 1.5;
        }
        let mut sup = 0.0f64;
        for slot in 0..n_int {
            let v = &values[slot * 2..slot * 2 + 2];
            sup = sup.max((v[0] * v[0] + v[1] * v[1]).sqrt());
        }
        let zeta = ZetaField { values, m: 2, sup_norm: sup };
        assert!(zeta.sup_norm > 1.0 + 1e-9);
    }

    #[test]
    fn constant_field_has_zero_local_tv() {
        let (dom, _) = h1_box(0.25, 4.0, 0.5);
        let u_all = vec![4.2; dom.n_points()];
        let (tv, skipped) = local_tv_estimate(&dom, &u_all, HorizontalNorm::Euclidean);
        assert_eq!(tv, 0.0);
        assert_eq!(skipped, 0);
        let u: Vec<f64> = vec![1.0; dom.n_interior()];
        assert_eq!(l1_distance(&dom, &u, &u).unwrap(), 0.0);
    }

    /// 1D monotone profile: the telescoping gradient integrates to the
    /// total rise.
    #[test]
    fn line_monotone_profile_tv() {
        let g = CarnotGroup::abelian(1).unwrap();
        let spec = DomainSpec {
            shape: DomainShape::Box { lo: vec![0.0], hi: vec![1.0] },
            halo_width: 0.2,
        };
        let dom = build_lattice(&g, &spec, 0.1, 0.01).unwrap();
        let smooth = |t: f64| {
            let s = ((t - 0.5) / 0.2).clamp(-1.0, 1.0);
            0.5 + 0.5 * (1.5 * s - 0.5 * s * s * s)
        };
        let u: Vec<f64> = dom.interior_ids.iter().map(|&id| smooth(dom.coord(id, 0))).collect();
        let u_all = extend_with_datum(&dom, &u, |p| smooth(p[0])).unwrap();
        let (tv, _) = local_tv_estimate(&dom, &u_all, HorizontalNorm::Euclidean);
        assert!((tv - 1.0).abs() <= 0.02, "tv {}", tv);
    }
}
