//! Exact algebra of the catalog Carnot groups in exponential coordinates.
//!
//! The catalog is closed-form: abelian ℝⁿ, the first Heisenberg group ℍ¹
//! (ℝ³, step 2) and the Engel group 𝔼⁴ (ℝ⁴, step 3). Multiplication is the
//! polynomial group law of each group, the identity is 0, the inverse is
//! coordinate-wise negation, and dilations scale coordinate k of degree j by
//! λʲ. The homogeneous norm is the box norm max_k |x_k|^{1/deg(k)}, whose
//! unit ball is the cube [−1,1]ⁿ.
//!
//! Group multiplication is written so that swapping the arguments of
//! `delta(x, y) = x⁻¹ ∘ y` negates every coordinate bit-exactly in floating
//! point; lattice code relies on this to classify ball membership
//! symmetrically.

pub mod check;

use crate::error::{invalid, Result};

/// Layer structure of a stratified algebra: per-coordinate degrees and the
/// derived dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratification {
    /// Dimensions (m_1, ..., m_l) of the layers.
    pub layer_dims: Vec<usize>,
    /// Degree of each coordinate in adapted order (length n).
    pub degrees: Vec<u32>,
}

impl Stratification {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.is_empty() || layer_dims.iter().any(|&d| d == 0) {
            return Err(invalid("layer dimensions must be positive"));
        }
        let mut degrees = Vec::new();
        for (j, &mj) in layer_dims.iter().enumerate() {
            degrees.extend(std::iter::repeat(j as u32 + 1).take(mj));
        }
        Ok(Self { layer_dims, degrees })
    }

    /// Total (topological) dimension n.
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    /// Horizontal dimension m = dim of the first layer.
    pub fn m(&self) -> usize {
        self.layer_dims[0]
    }

    /// Homogeneous dimension Q = Σ j·m_j.
    pub fn q(&self) -> u32 {
        self.degrees.iter().sum()
    }
}

/// Identifier of a catalog group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogId {
    Abelian(usize),
    Heisenberg1,
    Engel4,
}

/// A catalog Carnot group with its closed-form polynomial group law.
#[derive(Debug, Clone, PartialEq)]
pub struct CarnotGroup {
    id: CatalogId,
    strat: Stratification,
}

/// A point of a group in exponential coordinates, validated finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint(Vec<f64>);

impl GroupPoint {
    pub fn new(group: &CarnotGroup, coords: Vec<f64>) -> Result<Self> {
        group.check_point(&coords)?;
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

/// Group operations needed by the invariant suite. Implemented by
/// `CarnotGroup`; tests wrap it to inject deliberately broken laws.
pub trait GroupOps {
    fn degrees(&self) -> &[u32];
    fn multiply_into(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    fn dim(&self) -> usize {
        self.degrees().len()
    }

    fn horizontal_dim(&self) -> usize {
        self.degrees().iter().filter(|&&d| d == 1).count()
    }

    fn dilate_into(&self, lambda: f64, x: &[f64], out: &mut [f64]) {
        for (k, &d) in self.degrees().iter().enumerate() {
            out[k] = lambda.powi(d as i32) * x[k];
        }
    }

    /// Box norm max_k |x_k|^{1/deg(k)}.
    fn box_norm_of(&self, x: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for (k, &d) in self.degrees().iter().enumerate() {
            let v = if d == 1 { x[k].abs() } else { x[k].abs().powf(1.0 / d as f64) };
            if v > best {
                best = v;
            }
        }
        best
    }

    /// x⁻¹ ∘ y. Swapping the arguments negates every coordinate exactly.
    fn delta_into(&self, x: &[f64], y: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        for (s, &v) in scratch.iter_mut().zip(x) {
            *s = -v;
        }
        self.multiply_into(scratch, y, out);
    }

    fn box_dist_of(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut neg = vec![0.0; n];
        let mut d = vec![0.0; n];
        self.delta_into(x, y, &mut d, &mut neg);
        self.box_norm_of(&d)
    }
}

impl GroupOps for CarnotGroup {
    fn degrees(&self) -> &[u32] {
        &self.strat.degrees
    }

    fn multiply_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self.id {
            CatalogId::Abelian(n) => {
                for k in 0..n {
                    out[k] = x[k] + y[k];
                }
            }
            CatalogId::Heisenberg1 => {
                out[0] = x[0] + y[0];
                out[1] = x[1] + y[1];
                out[2] = x[2] + y[2] + 0.5 * (x[0] * y[1] - x[1] * y[0]);
            }
            CatalogId::Engel4 => {
                // Degree-3 truncation of Baker-Campbell-Hausdorff for the
                // step-3 algebra with [e1,e2] = e3, [e1,e3] = [e2,e3] = e4.
                let a = x[0] * y[1] - x[1] * y[0];
                out[0] = x[0] + y[0];
                out[1] = x[1] + y[1];
                out[2] = x[2] + y[2] + 0.5 * a;
                out[3] = x[3]
                    + y[3]
                    + 0.5 * (x[0] * y[2] - x[2] * y[0])
                    + 0.5 * (x[1] * y[2] - x[2] * y[1])
                    + ((x[0] + x[1]) - (y[0] + y[1])) * a * (1.0 / 12.0);
            }
        }
    }
}

impl CarnotGroup {
    pub fn abelian(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("abelian group needs dimension >= 1"));
        }
        Ok(Self { id: CatalogId::Abelian(n), strat: Stratification::new(vec![n])? })
    }

    pub fn heisenberg1() -> Self {
        Self { id: CatalogId::Heisenberg1, strat: Stratification::new(vec![2, 1]).unwrap() }
    }

    pub fn engel4() -> Self {
        Self { id: CatalogId::Engel4, strat: Stratification::new(vec![2, 1, 1]).unwrap() }
    }

    /// Parse a catalog id: `abelian<N>`, `heisenberg1`, `engel4`.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "heisenberg1" => Ok(Self::heisenberg1()),
            "engel4" => Ok(Self::engel4()),
            _ => {
                if let Some(rest) = id.strip_prefix("abelian") {
                    let n: usize = rest
                        .parse()
                        .map_err(|_| invalid(format!("unknown group id `{id}`")))?;
                    Self::abelian(n)
                } else {
                    Err(invalid(format!("unknown group id `{id}`")))
                }
            }
        }
    }

    pub fn id(&self) -> CatalogId {
        self.id
    }

    pub fn id_string(&self) -> String {
        match self.id {
            CatalogId::Abelian(n) => format!("abelian{n}"),
            CatalogId::Heisenberg1 => "heisenberg1".to_string(),
            CatalogId::Engel4 => "engel4".to_string(),
        }
    }

    pub fn stratification(&self) -> &Stratification {
        &self.strat
    }

    pub fn n(&self) -> usize {
        self.strat.n()
    }

    pub fn m(&self) -> usize {
        self.strat.m()
    }

    pub fn q(&self) -> u32 {
        self.strat.q()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(invalid(format!(
                "point has {} coordinates, group {} needs {}",
                x.len(),
                self.id_string(),
                self.n()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point has non-finite coordinates"));
        }
        Ok(())
    }

    /// Group product x ∘ y.
    pub fn multiply(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_point(y)?;
        let mut out = vec![0.0; self.n()];
        self.multiply_into(x, y, &mut out);
        Ok(out)
    }

    /// Group inverse, −x in exponential coordinates.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(x.iter().map(|v| -v).collect())
    }

    /// Anisotropic dilation δ_λ, degree-j coordinates scaled by λʲ.
    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        if !(lambda > 0.0) {
            return Err(invalid("dilation factor must be positive"));
        }
        let mut out = vec![0.0; self.n()];
        self.dilate_into(lambda, x, &mut out);
        Ok(out)
    }

    pub fn box_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.box_norm_of(x))
    }

    pub fn box_dist(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.box_dist_of(x, y))
    }

    /// Lebesgue measure of a box ball of radius r: 2ⁿ r^Q (the unit ball is
    /// the cube [−1,1]ⁿ).
    pub fn ball_volume(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(invalid("ball radius must be positive"));
        }
        Ok(2f64.powi(self.n() as i32) * r.powi(self.q() as i32))
    }

    /// First absolute moment of a horizontal coordinate over the unit box
    /// ball, ∫_{[−1,1]ⁿ} |z₁| dz = 2^{n−1}.
    pub fn first_moment_constant(&self) -> f64 {
        2f64.powi(self.n() as i32 - 1)
    }

    /// Monte Carlo estimate of the unit-ball volume by rejection from the
    /// bounding cube using the box-norm predicate.
    pub fn mc_ball_volume(&self, samples: u64, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let mut z = vec![0.0; n];
        let mut hits = 0u64;
        for _ in 0..samples {
            for v in z.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            if self.box_norm_of(&z) < 1.0 {
                hits += 1;
            }
        }
        2f64.powi(n as i32) * hits as f64 / samples as f64
    }

    /// Monte Carlo estimate of `first_moment_constant`.
    pub fn mc_first_moment(&self, samples: u64, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let mut z = vec![0.0; n];
        let mut acc = 0.0;
        for _ in 0..samples {
            for v in z.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            if self.box_norm_of(&z) < 1.0 {
                acc += z[0].abs();
            }
        }
        2f64.powi(n as i32) * acc / samples as f64
    }

    /// Coefficients of the left-invariant horizontal frame at x, column j
    /// holding the vector of X_j in the coordinate basis: e_j on the first m
    /// rows, the polynomial coefficients below. Column-major, n rows × m
    /// columns.
    pub fn horizontal_frame(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let (n, m) = (self.n(), self.m());
        let mut cols = vec![0.0; n * m];
        for j in 0..m {
            let col = &mut cols[j * n..(j + 1) * n];
            col[j] = 1.0;
            match self.id {
                CatalogId::Abelian(_) => {}
                CatalogId::Heisenberg1 => {
                    col[2] = if j == 0 { -0.5 * x[1] } else { 0.5 * x[0] };
                }
                CatalogId::Engel4 => {
                    // d/dt at t=0 of x ∘ (t e_j); the quadratic coefficients
                    // come out of the BCH cubic term.
                    if j == 0 {
                        col[2] = -0.5 * x[1];
                        col[3] = -(0.5 * x[2] + (x[1] * x[1] + x[0] * x[1]) * (1.0 / 12.0));
                    } else {
                        col[2] = 0.5 * x[0];
                        col[3] = -(0.5 * x[2] - (x[0] * x[0] + x[0] * x[1]) * (1.0 / 12.0));
                    }
                }
            }
        }
        Ok(cols)
    }

    /// Horizontal gradient from the Euclidean gradient: (Xφ)_j = col_j · ∇φ.
    pub fn horizontal_gradient(&self, grad_phi: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if grad_phi.len() != self.n() {
            return Err(invalid("gradient length must equal the group dimension"));
        }
        if grad_phi.iter().any(|v| !v.is_finite()) {
            return Err(invalid("gradient has non-finite entries"));
        }
        let frame = self.horizontal_frame(x)?;
        let n = self.n();
        Ok((0..self.m())
            .map(|j| frame[j * n..(j + 1) * n].iter().zip(grad_phi).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Difference quotient (φ(x ∘ δ_ε(z)) − φ(x)) / ε.
    pub fn difference_quotient<F: Fn(&[f64]) -> f64>(
        &self,
        phi: F,
        x: &[f64],
        z: &[f64],
        eps: f64,
    ) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(z)?;
        if !(eps > 0.0) {
            return Err(invalid("step must be positive"));
        }
        let mut dz = vec![0.0; self.n()];
        self.dilate_into(eps, z, &mut dz);
        let mut y = vec![0.0; self.n()];
        self.multiply_into(x, &dz, &mut y);
        Ok((phi(&y) - phi(x)) / eps)
    }
}
