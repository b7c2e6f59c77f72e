//! Lattice discretization of a bounded domain and its halo.
//!
//! Cell centers sit on the origin-aligned lattice ((i+½)h, ...) in
//! exponential coordinates, so every cell is [ih, (i+1)h) per axis and the
//! cell measure is hⁿ (Lebesgue = Haar). Points are tagged interior (center
//! inside Ω) or halo (outside Ω, within `halo_width` of it in box
//! distance). Integer lattice coordinates are kept so that membership
//! predicates can be evaluated reproducibly.

use crate::error::{invalid, Error, Result};
use crate::group::{CarnotGroup, CatalogId, GroupOps};

/// Shape of the open domain Ω in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    /// Axis-aligned open coordinate box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open box-distance ball.
    BoxBall { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub shape: DomainShape,
    /// Width of the stored halo layer around Ω (box distance).
    pub halo_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Interior,
    Halo,
}

/// Closed interval arithmetic, used for the conservative halo bounds.
#[derive(Debug, Clone, Copy)]
struct Iv {
    lo: f64,
    hi: f64,
}

impl Iv {
    fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
    fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }
    fn add(self, o: Iv) -> Iv {
        Iv::new(self.lo + o.lo, self.hi + o.hi)
    }
    fn mul(self, o: Iv) -> Iv {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Iv::new(c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }
    fn scale(self, s: f64) -> Iv {
        self.mul(Iv::point(s))
    }
    fn intersect(self, o: Iv) -> Option<Iv> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo < hi).then_some(Iv::new(lo, hi))
    }
    fn overlaps(self, lo: f64, hi: f64) -> bool {
        self.lo < hi && lo < self.hi
    }
}

/// Dense integer-grid index over a bounding box of lattice coordinates.
#[derive(Debug, Clone)]
pub struct GridIndex {
    lo: Vec<i64>,
    dims: Vec<usize>,
    ids: Vec<u32>,
}

pub const NO_POINT: u32 = u32::MAX;

impl GridIndex {
    fn new(lo: Vec<i64>, dims: Vec<usize>) -> Result<Self> {
        let mut total: usize = 1;
        for &d in &dims {
            total = total
                .checked_mul(d)
                .ok_or_else(|| Error::Construction("lattice bounding box overflows".into()))?;
        }
        if total > (1 << 31) {
            return Err(Error::Construction(format!(
                "lattice bounding box has {total} cells; refusing to allocate"
            )));
        }
        Ok(Self { lo, dims, ids: vec![NO_POINT; total] })
    }

    fn flat(&self, ints: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (k, &i) in ints.iter().enumerate() {
            let off = i - self.lo[k];
            if off < 0 || off as usize >= self.dims[k] {
                return None;
            }
            idx = idx * self.dims[k] + off as usize;
        }
        Some(idx)
    }

    pub fn lookup(&self, ints: &[i64]) -> Option<u32> {
        self.flat(ints).and_then(|i| (self.ids[i] != NO_POINT).then_some(self.ids[i]))
    }
}

/// Lattice cells covering Ω and its halo.
#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    pub group: CarnotGroup,
    pub spec: DomainSpec,
    pub h: f64,
    /// Lebesgue measure of one cell, hⁿ.
    pub cell_measure: f64,
    /// Flat integer lattice coordinates, n per point.
    ints: Vec<i64>,
    pub tags: Vec<Tag>,
    /// Point ids of interior cells in storage order.
    pub interior_ids: Vec<u32>,
    /// Map point id → index into `interior_ids` (NO_POINT for halo).
    pub interior_slot: Vec<u32>,
    pub grid: GridIndex,
}

impl DiscreteDomain {
    pub fn n_points(&self) -> usize {
        self.tags.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.group.n()
    }

    pub fn is_interior(&self, id: u32) -> bool {
        self.tags[id as usize] == Tag::Interior
    }

    pub fn ints_of(&self, id: u32) -> &[i64] {
        let n = self.dim();
        &self.ints[id as usize * n..(id as usize + 1) * n]
    }

    /// Cell-center coordinate along axis k.
    pub fn coord(&self, id: u32, k: usize) -> f64 {
        (self.ints_of(id)[k] as f64 + 0.5) * self.h
    }

    pub fn point_into(&self, id: u32, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.coord(id, k);
        }
    }

    pub fn point(&self, id: u32) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(id, &mut p);
        p
    }
}

fn center(i: i64, h: f64) -> f64 {
    (i as f64 + 0.5) * h
}

/// Strict membership of a point in the open domain.
pub fn omega_contains(group: &CarnotGroup, shape: &DomainShape, p: &[f64]) -> bool {
    match shape {
        DomainShape::Box { lo, hi } => {
            p.iter().zip(lo.iter().zip(hi)).all(|(&v, (&a, &b))| a < v && v < b)
        }
        DomainShape::BoxBall { center, radius } => group.box_dist_of(center, p) < *radius,
    }
}

/// Whether `p` lies within box distance `w` of Ω. Exact for abelian groups
/// and ℍ¹ on boxes; conservative (superset) for 𝔼⁴ boxes and for ball
/// shapes.
pub fn halo_contains(group: &CarnotGroup, shape: &DomainShape, p: &[f64], w: f64) -> bool {
    match shape {
        DomainShape::BoxBall { center, radius } => group.box_dist_of(center, p) < radius + w,
        DomainShape::Box { lo, hi } => match group.id() {
            CatalogId::Abelian(_) => {
                group.degrees().iter().enumerate().all(|(k, &d)| {
                    let dist = (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0);
                    dist < w.powi(d as i32)
                })
            }
            CatalogId::Heisenberg1 => {
                let (i1, i2) = match horizontal_ranges(p, lo, hi, w) {
                    Some(v) => v,
                    None => return false,
                };
                let lin = twist_range_h1(p, i1, i2, w);
                let reach = Iv::new(p[2] + lin.lo - w * w, p[2] + lin.hi + w * w);
                reach.overlaps(lo[2], hi[2])
            }
            CatalogId::Engel4 => {
                let (i1, i2) = match horizontal_ranges(p, lo, hi, w) {
                    Some(v) => v,
                    None => return false,
                };
                let lin = twist_range_h1(p, i1, i2, w);
                let reach3 = Iv::new(p[2] + lin.lo - w * w, p[2] + lin.hi + w * w);
                if !reach3.overlaps(lo[2], hi[2]) {
                    return false;
                }
                // Feasible z3 interval (union over the horizontal rectangle).
                let w2 = w * w;
                let z3 = match Iv::new((lo[2] - p[2] - lin.hi) / w2, (hi[2] - p[2] - lin.lo) / w2)
                    .intersect(Iv::new(-1.0, 1.0))
                {
                    Some(v) => v,
                    None => return false,
                };
                // Interval evaluation of the fourth coordinate of x∘δ_w(z).
                let y1h = i1.scale(w); // ŷ1 = w z1
                let y2h = i2.scale(w);
                let y3h = z3.scale(w2);
                let a = Iv::point(p[0]).mul(i2).add(Iv::point(-p[1]).mul(i1)).scale(w); // x1 ŷ2 − x2 ŷ1
                let s = Iv::point(p[0] + p[1]).add(y1h.add(y2h).scale(-1.0));
                let t1 = y3h.scale(0.5 * (p[0] + p[1])); // ½(x1+x2)ŷ3
                let t2 = y1h.add(y2h).scale(-0.5 * p[2]); // −½x3(ŷ1+ŷ2)
                let t3 = s.mul(a).scale(1.0 / 12.0);
                let range4 = Iv::new(p[3] - w * w2, p[3] + w * w2).add(t1).add(t2).add(t3);
                range4.overlaps(lo[3], hi[3])
            }
        },
    }
}

fn horizontal_ranges(p: &[f64], lo: &[f64], hi: &[f64], w: f64) -> Option<(Iv, Iv)> {
    let i1 = Iv::new((lo[0] - p[0]) / w, (hi[0] - p[0]) / w).intersect(Iv::new(-1.0, 1.0))?;
    let i2 = Iv::new((lo[1] - p[1]) / w, (hi[1] - p[1]) / w).intersect(Iv::new(-1.0, 1.0))?;
    Some((i1, i2))
}

/// Range of ½w(x₁z₂ − x₂z₁) over the horizontal rectangle (linear, so the
/// extrema sit at corners).
fn twist_range_h1(p: &[f64], i1: Iv, i2: Iv, w: f64) -> Iv {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &z1 in &[i1.lo, i1.hi] {
        for &z2 in &[i2.lo, i2.hi] {
            let v = 0.5 * w * (p[0] * z2 - p[1] * z1);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Iv::new(lo, hi)
}

/// Per-axis margins (in coordinate units) that bound how far halo points can
/// sit from the coordinate bounding box of Ω.
fn halo_margins(group: &CarnotGroup, lo: &[f64], hi: &[f64], w: f64) -> Vec<f64> {
    let n = group.n();
    let amax = |k: usize, extra: f64| lo[k].abs().max(hi[k].abs()) + extra;
    let mut m = vec![0.0; n];
    match group.id() {
        CatalogId::Abelian(_) => {
            for (k, &d) in group.degrees().iter().enumerate() {
                m[k] = w.powi(d as i32);
            }
        }
        CatalogId::Heisenberg1 => {
            m[0] = w;
            m[1] = w;
            let (a1, a2) = (amax(0, w), amax(1, w));
            m[2] = w * w + 0.5 * w * (a1 + a2);
        }
        CatalogId::Engel4 => {
            m[0] = w;
            m[1] = w;
            let (a1, a2) = (amax(0, w), amax(1, w));
            m[2] = w * w + 0.5 * w * (a1 + a2);
            let a3 = amax(2, m[2]);
            m[3] = w * w * w
                + 0.5 * w * w * (a1 + a2)
                + w * a3
                + w / 12.0 * (a1 + a2 + 2.0 * w) * (a1 + a2);
        }
    }
    m
}

fn shape_bounds(shape: &DomainShape, group: &CarnotGroup) -> Result<(Vec<f64>, Vec<f64>)> {
    match shape {
        DomainShape::Box { lo, hi } => {
            if lo.len() != group.n() || hi.len() != group.n() {
                return Err(invalid("domain bounds dimension mismatch"));
            }
            if lo.iter().zip(hi).any(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b) {
                return Err(invalid("domain bounds must be finite with nonempty interior"));
            }
            Ok((lo.clone(), hi.clone()))
        }
        DomainShape::BoxBall { center, radius } => {
            if center.len() != group.n() {
                return Err(invalid("ball center dimension mismatch"));
            }
            if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|v| !v.is_finite()) {
                return Err(invalid("ball must have finite center and positive radius"));
            }
            // Coordinate extents of U(c, r) inflated slightly; exact per-axis
            // extents come from the same margin bound with w = r.
            let m = halo_margins(group, center, center, *radius);
            Ok((
                center.iter().zip(&m).map(|(c, mk)| c - mk).collect(),
                center.iter().zip(&m).map(|(c, mk)| c + mk).collect(),
            ))
        }
    }
}

/// Build the lattice covering Ω and its halo.
///
/// Preconditions: `h ≤ eps/2` (the ball must be resolved) and
/// `halo_width ≥ eps` (the walk must stay inside the stored set).
pub fn build_lattice(
    group: &CarnotGroup,
    spec: &DomainSpec,
    eps: f64,
    h: f64,
) -> Result<DiscreteDomain> {
    if !(eps > 0.0) || !(h > 0.0) {
        return Err(invalid("eps and h must be positive"));
    }
    if h > eps / 2.0 {
        return Err(invalid(format!("lattice spacing h={h} must satisfy h <= eps/2 (eps={eps})")));
    }
    if spec.halo_width < eps {
        return Err(invalid(format!(
            "halo width {} must be at least eps={eps}",
            spec.halo_width
        )));
    }
    let n = group.n();
    let (lo, hi) = shape_bounds(&spec.shape, group)?;
    let margins = halo_margins(group, &lo, &hi, spec.halo_width);

    let mut ilo = vec![0i64; n];
    let mut dims = vec![0usize; n];
    for k in 0..n {
        let a = ((lo[k] - margins[k]) / h - 0.5).floor() as i64 - 1;
        let b = ((hi[k] + margins[k]) / h - 0.5).ceil() as i64 + 1;
        ilo[k] = a;
        dims[k] = (b - a + 1) as usize;
    }
    let mut grid = GridIndex::new(ilo.clone(), dims.clone())?;

    let mut ints = Vec::new();
    let mut tags = Vec::new();
    let mut cursor = vec![0usize; n];
    let mut p = vec![0.0; n];
    let mut cell = vec![0i64; n];
    'outer: loop {
        for k in 0..n {
            cell[k] = ilo[k] + cursor[k] as i64;
            p[k] = center(cell[k], h);
        }
        let tag = if omega_contains(group, &spec.shape, &p) {
            Some(Tag::Interior)
        } else if halo_contains(group, &spec.shape, &p, spec.halo_width) {
            Some(Tag::Halo)
        } else {
            None
        };
        if let Some(t) = tag {
            let id = tags.len() as u32;
            if id == NO_POINT {
                return Err(Error::Construction("too many lattice points".into()));
            }
            let flat = grid.flat(&cell).expect("cell inside bounding box");
            grid.ids[flat] = id;
            ints.extend_from_slice(&cell);
            tags.push(t);
        }
        // lexicographic advance
        let mut k = n;
        while k > 0 {
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < dims[k] {
                continue 'outer;
            }
            cursor[k] = 0;
        }
        break;
    }

    let mut interior_ids = Vec::new();
    let mut interior_slot = vec![NO_POINT; tags.len()];
    for (id, tag) in tags.iter().enumerate() {
        if *tag == Tag::Interior {
            interior_slot[id] = interior_ids.len() as u32;
            interior_ids.push(id as u32);
        }
    }
    if interior_ids.is_empty() {
        return Err(Error::Construction("domain has no interior lattice points".into()));
    }

    Ok(DiscreteDomain {
        group: group.clone(),
        spec: spec.clone(),
        h,
        cell_measure: h.powi(n as i32),
        ints,
        tags,
        interior_ids,
        interior_slot,
        grid,
    })
}
