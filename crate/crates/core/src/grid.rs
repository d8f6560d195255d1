//! Discretization geometry: the node lattice on `[-R, R]^2`, the discrete disc
//! and its boundary, measurement arcs, and the zero-padded periodic embedding
//! used by the spectral wave solver.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Space-time discretization: `(N+1)^2` equispaced nodes on `[-R, R]^2`
/// and `M+1` time samples on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    r: f64,
    m: usize,
    t: f64,
}

impl Grid {
    pub fn new(n: usize, r: f64, m: usize, t: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::config("N", format!("need N >= 4, got {n}")));
        }
        if m < 1 {
            return Err(Error::config("M", "need M >= 1"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::config(
                "R",
                format!("need a positive half-width, got {r}"),
            ));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config(
                "T",
                format!("need a positive final time, got {t}"),
            ));
        }
        Ok(Self { n, r, m, t })
    }

    /// Intervals per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nodes per axis, `N + 1`.
    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn steps(&self) -> usize {
        self.m
    }

    pub fn final_time(&self) -> f64 {
        self.t
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.r / self.n as f64
    }

    pub fn ht(&self) -> f64 {
        self.t / self.m as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.ht()
    }

    /// Coordinates of node `(i1, i2)`: `(-R, -R) + 2 i R / N`.
    pub fn coord(&self, i1: usize, i2: usize) -> [f64; 2] {
        let h = self.hx();
        [-self.r + i1 as f64 * h, -self.r + i2 as f64 * h]
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField::zeros(self.nodes(), self.nodes(), self.hx())
    }

    /// Samples `f(x)` at all nodes.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> ScalarField {
        let n1 = self.nodes();
        ScalarField::from_fn(n1, n1, self.hx(), |i1, i2| f(self.coord(i1, i2)))
    }

    /// Same spatial lattice with a different time discretization.
    pub fn with_time(&self, m: usize, t: f64) -> Result<Self> {
        Grid::new(self.n, self.r, m, t)
    }

    pub fn embed_field(&self, f: &ScalarField, fill: f64) -> Result<ScalarField> {
        Embedding::minimal(self).embed(f, fill)
    }

    pub fn restrict_field(&self, f: &ScalarField) -> Result<ScalarField> {
        Embedding::minimal(self).restrict(f)
    }
}

/// Sorted, duplicate-free list of lattice indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet(Vec<[usize; 2]>);

impl IndexSet {
    pub fn new(mut indices: Vec<[usize; 2]>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn as_slice(&self) -> &[[usize; 2]] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, idx: [usize; 2]) -> bool {
        self.0.binary_search(&idx).is_ok()
    }

    pub fn position(&self, idx: [usize; 2]) -> Option<usize> {
        self.0.binary_search(&idx).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    /// Boolean mask over an `n1 x n1` lattice.
    pub fn mask(&self, n1: usize) -> Vec<bool> {
        let mut mask = vec![false; n1 * n1];
        for [a, b] in self.iter() {
            mask[a * n1 + b] = true;
        }
        mask
    }

    /// Index reflection `i -> N - i` for a lattice with `n1 = N + 1` nodes per axis.
    pub fn reflected(&self, n1: usize) -> IndexSet {
        IndexSet::new(
            self.0
                .iter()
                .map(|&[a, b]| [n1 - 1 - a, n1 - 1 - b])
                .collect(),
        )
    }
}

impl FromIterator<[usize; 2]> for IndexSet {
    fn from_iter<T: IntoIterator<Item = [usize; 2]>>(iter: T) -> Self {
        IndexSet::new(iter.into_iter().collect())
    }
}

/// Indices of nodes strictly inside the disc `|x| < R`.
pub fn interior_indices(grid: &Grid) -> IndexSet {
    let n1 = grid.nodes();
    let r2 = grid.radius() * grid.radius();
    let mut out = Vec::new();
    for i1 in 0..n1 {
        for i2 in 0..n1 {
            let [x, y] = grid.coord(i1, i2);
            if x * x + y * y < r2 {
                out.push([i1, i2]);
            }
        }
    }
    IndexSet(out)
}

/// Discrete boundary nodes with their polar angles and coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGeometry {
    indices: IndexSet,
    angles: Vec<f64>,
    coords: Vec<[f64; 2]>,
}

impl BoundaryGeometry {
    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    /// Polar angles in `[0, 2 pi)`, aligned with `indices()`.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Angle of a boundary node, if it belongs to this boundary.
    pub fn angle_of(&self, idx: [usize; 2]) -> Option<f64> {
        self.indices.position(idx).map(|p| self.angles[p])
    }
}

pub fn polar_angle([x, y]: [f64; 2]) -> f64 {
    let a = y.atan2(x);
    if a < 0.0 {
        // atan2 of a tiny negative y can round to exactly 2 pi
        let w = a + TAU;
        if w >= TAU {
            0.0
        } else {
            w
        }
    } else {
        a
    }
}

/// Non-interior nodes with at least one interior 4-neighbor.
pub fn boundary_indices(grid: &Grid, interior: &IndexSet) -> BoundaryGeometry {
    let n1 = grid.nodes();
    let inside = interior.mask(n1);
    let is_in = |a: isize, b: isize| -> bool {
        a >= 0
            && b >= 0
            && (a as usize) < n1
            && (b as usize) < n1
            && inside[a as usize * n1 + b as usize]
    };
    let mut indices = Vec::new();
    for i1 in 0..n1 {
        for i2 in 0..n1 {
            if inside[i1 * n1 + i2] {
                continue;
            }
            let (a, b) = (i1 as isize, i2 as isize);
            if is_in(a + 1, b) || is_in(a - 1, b) || is_in(a, b + 1) || is_in(a, b - 1) {
                indices.push([i1, i2]);
            }
        }
    }
    let coords: Vec<[f64; 2]> = indices.iter().map(|&[a, b]| grid.coord(a, b)).collect();
    let angles = coords.iter().map(|&x| polar_angle(x)).collect();
    BoundaryGeometry {
        indices: IndexSet(indices),
        angles,
        coords,
    }
}

/// Whether `angle` lies in the half-open window
/// `[center - opening/2, center + opening/2)` taken modulo `2 pi`.
pub fn in_arc(angle: f64, opening: f64, center: f64) -> bool {
    if opening >= TAU {
        return true;
    }
    let start = center - 0.5 * opening;
    (angle - start).rem_euclid(TAU) < opening
}

/// Boundary nodes whose polar angle lies on the arc of the given opening.
pub fn arc_subset(boundary: &BoundaryGeometry, opening: f64, center: f64) -> Result<IndexSet> {
    if !opening.is_finite() || opening <= 0.0 {
        return Err(Error::config(
            "arc_opening",
            format!("must lie in (0, 2pi], got {opening}"),
        ));
    }
    if opening > TAU + 1e-12 {
        return Err(Error::config(
            "arc_opening",
            format!("must lie in (0, 2pi], got {opening}"),
        ));
    }
    Ok(boundary
        .indices
        .iter()
        .zip(&boundary.angles)
        .filter(|(_, &a)| in_arc(a, opening, center))
        .map(|(i, _)| i)
        .collect())
}

/// Default arc center: the top of the circle.
pub const DEFAULT_ARC_CENTER: f64 = 0.5 * PI;

/// Grid plus its discrete disc and boundary, computed once.
#[derive(Debug, Clone)]
pub struct Domain {
    pub grid: Grid,
    pub interior: IndexSet,
    pub boundary: BoundaryGeometry,
}

impl Domain {
    pub fn new(grid: Grid) -> Self {
        let interior = interior_indices(&grid);
        let boundary = boundary_indices(&grid, &interior);
        Self {
            grid,
            interior,
            boundary,
        }
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        self.interior.mask(self.grid.nodes())
    }

    pub fn arc(&self, opening: f64, center: f64) -> Result<IndexSet> {
        arc_subset(&self.boundary, opening, center)
    }

    /// Zeroes every sample outside the discrete disc.
    pub fn mask_interior(&self, f: &mut ScalarField) {
        let mask = self.interior_mask();
        f.as_mut_slice()
            .iter_mut()
            .zip(mask)
            .for_each(|(v, inside)| {
                if !inside {
                    *v = 0.0
                }
            });
    }
}

/// Placement of the `(N+1)^2` lattice inside a larger periodic lattice with
/// the same spacing. The FFT-based solver sees the larger lattice as a torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    inner: usize,
    size: usize,
    offset: usize,
}

impl Embedding {
    /// `(2N+1)^2` lattice covering `[-2R, 2R]^2`.
    pub fn minimal(grid: &Grid) -> Self {
        Self::exact(grid, 2 * grid.n() + 1).expect("2N+1 always holds N+1")
    }

    /// Smallest 5-smooth size that is at least `2N+1`.
    pub fn fft_friendly(grid: &Grid) -> Self {
        Self::smooth_at_least(grid, 2 * grid.n() + 1)
    }

    /// Smallest 5-smooth size whose period exceeds `2R + distance`, so that no
    /// wave travelling `distance` from the disc re-enters it through the
    /// periodic boundary. Never smaller than [`fft_friendly`](Self::fft_friendly).
    pub fn periodization_free(grid: &Grid, distance: f64) -> Self {
        let span = (2.0 * grid.radius() + distance.max(0.0)) / grid.hx();
        let need = span.ceil() as usize + 2;
        Self::smooth_at_least(grid, need.max(2 * grid.n() + 1))
    }

    pub fn smooth_at_least(grid: &Grid, min_size: usize) -> Self {
        Self::exact(grid, next_smooth(min_size.max(grid.nodes()))).expect("size >= N+1")
    }

    pub fn exact(grid: &Grid, size: usize) -> Result<Self> {
        let inner = grid.nodes();
        if size < inner {
            return Err(Error::config(
                "embedding",
                format!("size {size} cannot hold {inner} nodes"),
            ));
        }
        Ok(Self {
            inner,
            size,
            offset: (size - inner) / 2,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn inner(&self) -> usize {
        self.inner
    }

    /// Flat index on the large lattice of the inner node `(i1, i2)`.
    pub fn flat(&self, i1: usize, i2: usize) -> usize {
        (i1 + self.offset) * self.size + i2 + self.offset
    }

    /// Copies `f` into the centered block; `fill` elsewhere.
    pub fn embed(&self, f: &ScalarField, fill: f64) -> Result<ScalarField> {
        f.ensure_shape(self.inner, self.inner)?;
        let mut out = ScalarField::filled(self.size, self.size, f.step(), fill);
        self.embed_into(f.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Writes the inner block of `dst` (length `size^2`) from `src` (length `inner^2`).
    pub fn embed_into(&self, src: &[f64], dst: &mut [f64]) {
        let n1 = self.inner;
        for i1 in 0..n1 {
            let d = self.flat(i1, 0);
            dst[d..d + n1].copy_from_slice(&src[i1 * n1..(i1 + 1) * n1]);
        }
    }

    /// Adds `src` (length `inner^2`) onto the inner block of `dst`.
    pub fn add_into(&self, src: &[f64], dst: &mut [f64]) {
        let n1 = self.inner;
        for i1 in 0..n1 {
            let d = self.flat(i1, 0);
            for (a, b) in dst[d..d + n1].iter_mut().zip(&src[i1 * n1..(i1 + 1) * n1]) {
                *a += b;
            }
        }
    }

    pub fn restrict(&self, f: &ScalarField) -> Result<ScalarField> {
        f.ensure_shape(self.size, self.size)?;
        let mut out = ScalarField::zeros(self.inner, self.inner, f.step());
        self.restrict_into(f.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn restrict_into(&self, src: &[f64], dst: &mut [f64]) {
        let n1 = self.inner;
        for i1 in 0..n1 {
            let s = self.flat(i1, 0);
            dst[i1 * n1..(i1 + 1) * n1].copy_from_slice(&src[s..s + n1]);
        }
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub fn next_smooth(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}
