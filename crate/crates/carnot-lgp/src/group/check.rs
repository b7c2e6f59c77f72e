//! Group-law invariant suite and difference-quotient convergence harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CarnotGroup, GroupOps};
use crate::error::{invalid, Result};

/// Round-off budget for operations that are exact up to floating error.
pub const EXACT_TOL: f64 = 1e-12;
/// Round-off budget for compositions of a few polynomial evaluations.
pub const COMPOSED_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct AlgebraCheck {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl AlgebraCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct AlgebraReport {
    pub group: String,
    pub triples: usize,
    pub checks: Vec<AlgebraCheck>,
}

impl AlgebraReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Run the full algebra invariant suite on `triples` random coordinate
/// triples drawn uniformly from [-10, 10]^n.
pub fn algebra_suite<G: GroupOps>(
    group: &G,
    label: &str,
    triples: usize,
    seed: u64,
) -> AlgebraReport {
    let n = group.dim();
    let m = group.horizontal_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
    };

    let mut assoc = 0.0f64;
    let mut identity = 0.0f64;
    let mut inverse = 0.0f64;
    let mut dil_hom = 0.0f64;
    let mut norm_hom = 0.0f64;
    let mut left_inv = 0.0f64;
    let mut hlin = 0.0f64;

    let mut t1 = vec![0.0; n];
    let mut t2 = vec![0.0; n];
    let mut t3 = vec![0.0; n];
    let mut t4 = vec![0.0; n];

    for _ in 0..triples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let z = draw(&mut rng);

        // (x∘y)∘z vs x∘(y∘z)
        group.multiply_into(&x, &y, &mut t1);
        group.multiply_into(&t1, &z, &mut t2);
        group.multiply_into(&y, &z, &mut t3);
        group.multiply_into(&x, &t3, &mut t4);
        assoc = assoc.max(sup_diff(&t2, &t4));

        // x∘0 = x (exact)
        group.multiply_into(&x, &vec![0.0; n], &mut t1);
        identity = identity.max(sup_diff(&t1, &x));

        // x∘(−x) = 0
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        group.multiply_into(&x, &neg, &mut t1);
        inverse = inverse.max(t1.iter().fold(0.0f64, |a, v| a.max(v.abs())));

        // δ_λ(x∘y) = δ_λ(x)∘δ_λ(y)
        let lambda = rng.random_range(0.1..3.0);
        group.multiply_into(&x, &y, &mut t1);
        group.dilate_into(lambda, &t1, &mut t2);
        group.dilate_into(lambda, &x, &mut t1);
        group.dilate_into(lambda, &y, &mut t3);
        group.multiply_into(&t1, &t3, &mut t4);
        dil_hom = dil_hom.max(sup_diff(&t2, &t4));

        // box_norm(δ_λ x) = λ box_norm(x)
        group.dilate_into(lambda, &x, &mut t1);
        norm_hom = norm_hom.max((group.box_norm_of(&t1) - lambda * group.box_norm_of(&x)).abs());

        // d(z∘x, z∘y) = d(x, y)
        group.multiply_into(&z, &x, &mut t1);
        group.multiply_into(&z, &y, &mut t2);
        left_inv =
            left_inv.max((group.box_dist_of(&t1, &t2) - group.box_dist_of(&x, &y)).abs());

        // first m coordinates of x∘y equal x + y exactly
        group.multiply_into(&x, &y, &mut t1);
        for k in 0..m {
            hlin = hlin.max((t1[k] - (x[k] + y[k])).abs());
        }
    }

    AlgebraReport {
        group: label.to_string(),
        triples,
        checks: vec![
            AlgebraCheck { name: "associativity", max_error: assoc, tolerance: COMPOSED_TOL },
            AlgebraCheck { name: "identity", max_error: identity, tolerance: 0.0 },
            AlgebraCheck { name: "inverse", max_error: inverse, tolerance: EXACT_TOL },
            AlgebraCheck { name: "dilation_homomorphism", max_error: dil_hom, tolerance: COMPOSED_TOL },
            AlgebraCheck { name: "box_norm_homogeneity", max_error: norm_hom, tolerance: EXACT_TOL },
            AlgebraCheck { name: "left_invariance", max_error: left_inv, tolerance: COMPOSED_TOL },
            AlgebraCheck { name: "horizontal_linearity", max_error: hlin, tolerance: 0.0 },
        ],
    }
}

/// A scalar test function with its Euclidean gradient in closed form.
pub struct TestFunction {
    pub name: String,
    pub f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub grad: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

/// Shipped polynomial test functions for a catalog group. The first entry is
/// horizontal-linear (zero quotient error); the others probe the nonlinear
/// part of the law.
pub fn test_functions(group: &CarnotGroup) -> Vec<TestFunction> {
    let n = group.n();
    let coord = |k: usize| TestFunction {
        name: format!("x{}", k + 1),
        f: Box::new(move |p: &[f64]| p[k]),
        grad: Box::new(move |p: &[f64]| {
            let mut g = vec![0.0; p.len()];
            g[k] = 1.0;
            g
        }),
    };
    match group.id() {
        super::CatalogId::Abelian(_) => {
            let mut out = vec![coord(0)];
            out.push(TestFunction {
                name: "x1sq".into(),
                f: Box::new(|p| p[0] * p[0]),
                grad: Box::new(|p| {
                    let mut g = vec![0.0; p.len()];
                    g[0] = 2.0 * p[0];
                    g
                }),
            });
            if n >= 2 {
                out.push(TestFunction {
                    name: "x1cube_x1x2".into(),
                    f: Box::new(|p| p[0] * p[0] * p[0] + p[0] * p[1]),
                    grad: Box::new(|p| {
                        let mut g = vec![0.0; p.len()];
                        g[0] = 3.0 * p[0] * p[0] + p[1];
                        g[1] = p[0];
                        g
                    }),
                });
            } else {
                out.push(TestFunction {
                    name: "x1cube".into(),
                    f: Box::new(|p| p[0] * p[0] * p[0]),
                    grad: Box::new(|p| vec![3.0 * p[0] * p[0]]),
                });
            }
            out
        }
        super::CatalogId::Heisenberg1 => vec![
            coord(0),
            coord(2),
            TestFunction {
                name: "x3sq".into(),
                f: Box::new(|p| p[2] * p[2]),
                grad: Box::new(|p| vec![0.0, 0.0, 2.0 * p[2]]),
            },
        ],
        super::CatalogId::Engel4 => vec![coord(0), coord(2), coord(3)],
    }
}

/// Per-ε errors of the difference quotient against ⟨z, Xφ⟩ and the fitted
/// log-log order.
#[derive(Debug, Clone)]
pub struct QuotientConvergence {
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of log error against log ε over the nonzero
    /// errors; `None` when the errors vanish (horizontal-linear φ) or a
    /// single ε was supplied.
    pub fitted_order: Option<f64>,
    /// All errors at the round-off floor.
    pub exact: bool,
}

impl QuotientConvergence {
    /// Ratios error(ε_k)/error(ε_{k+1}) along the list.
    pub fn halving_ratios(&self) -> Vec<f64> {
        self.errors.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Compare the difference quotient against ⟨z, Xφ⟩ along a decreasing ε
/// list at a fixed base point and direction.
pub fn quotient_convergence(
    group: &CarnotGroup,
    phi: &TestFunction,
    x: &[f64],
    z: &[f64],
    eps_list: &[f64],
) -> Result<QuotientConvergence> {
    if eps_list.is_empty() {
        return Err(invalid("empty step list"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(invalid("step list must be positive and strictly decreasing"));
    }
    let target: f64 = {
        let xg = group.horizontal_gradient(&(phi.grad)(x), x)?;
        xg.iter().zip(z).map(|(a, b)| a * b).sum()
    };
    let mut errors = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let q = group.difference_quotient(|p| (phi.f)(p), x, z, eps)?;
        errors.push((q - target).abs());
    }
    let exact = errors.iter().all(|&e| e <= EXACT_TOL);
    let pts: Vec<(f64, f64)> = eps_list
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > EXACT_TOL)
        .map(|(&eps, &e)| (eps.ln(), e.ln()))
        .collect();
    let fitted_order = if pts.len() >= 2 { Some(least_squares_slope(&pts)) } else { None };
    Ok(QuotientConvergence { eps: eps_list.to_vec(), errors, fitted_order, exact })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Generic base point and direction used by the convergence harness; chosen
/// away from coordinate planes so no error term degenerates.
pub fn default_probe(group: &CarnotGroup) -> (Vec<f64>, Vec<f64>) {
    let n = group.n();
    let x: Vec<f64> = (0..n).map(|k| 0.37 + 0.21 * k as f64).collect();
    let z: Vec<f64> = (0..n).map(|k| 0.83 - 0.29 * k as f64).collect();
    (x, z)
}
