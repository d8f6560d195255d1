//! Matrix-free forward operator, its adjoint in the weighted spaces, the
//! time-reversal operator, and the associated inner products.
//!
//! Image space: `<f1, f2>_X = Σ_i c(x_i)^-2 f1[i] f2[i] h_x^2`.
//! Data space: `<g1, g2>_Y = Σ_{b,j} χ(b, t_j) g1[b,j] g2[b,j] h_x h_t`.
//!
//! The adjoint solves the wave equation backward in time with the boundary
//! source `χ g δ_∂Ω` (the delta realized as the boundary indicator divided by
//! `h_x`) and returns the time derivative at `t = 0` on the support mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{in_arc, Domain, Embedding, IndexSet};
use crate::linalg::{LinearOperator, Vector};
use crate::wavesolver::{time_derivative_at_zero, WaveRecorder, WaveSolver};

/// Pressure samples `g[b, j]` on measurement nodes `b` and times `t_j`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    indices: IndexSet,
    nt: usize,
    ht: f64,
    values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(indices: IndexSet, nt: usize, ht: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != indices.len() * nt {
            return Err(Error::shape(
                format!("{} x {} samples", indices.len(), nt),
                format!("{} samples", values.len()),
            ));
        }
        Ok(Self {
            indices,
            nt,
            ht,
            values,
        })
    }

    pub fn zeros(indices: IndexSet, nt: usize, ht: f64) -> Self {
        let len = indices.len() * nt;
        Self {
            indices,
            nt,
            ht,
            values: vec![0.0; len],
        }
    }

    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn boundary_count(&self) -> usize {
        self.indices.len()
    }

    /// Number of time samples, `M + 1`.
    pub fn time_count(&self) -> usize {
        self.nt
    }

    pub fn ht(&self) -> f64 {
        self.ht
    }

    pub fn get(&self, b: usize, j: usize) -> f64 {
        self.values[b * self.nt + j]
    }

    pub fn set(&mut self, b: usize, j: usize, v: f64) {
        self.values[b * self.nt + j] = v;
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.values[b * self.nt..(b + 1) * self.nt]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn ensure_compatible(&self, other: &BoundaryTrace) -> Result<()> {
        if self.indices != other.indices || self.nt != other.nt {
            return Err(Error::shape(
                format!("{} x {} trace", self.indices.len(), self.nt),
                format!("{} x {} trace", other.indices.len(), other.nt),
            ));
        }
        Ok(())
    }
}

impl Vector for BoundaryTrace {
    fn as_slice(&self) -> &[f64] {
        &self.values
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Time dependence of the data weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeProfile {
    /// `χ(b, t) = χ(b)`
    #[default]
    Constant,
    /// `χ(b, t) = χ(b) t`
    Linear,
}

/// Nonnegative data weight `χ` on the measurement nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    weights: Vec<f64>,
    profile: TimeProfile,
}

/// Quintic smoothstep `s^3 (10 - 15 s + 6 s^2)` clamped to `[0, 1]`.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

impl Window {
    pub fn new(weights: Vec<f64>, profile: TimeProfile) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Validation(format!(
                "window weights must be >= 0, found {w}"
            )));
        }
        Ok(Self { weights, profile })
    }

    /// `χ ≡ 1` on every measurement node.
    pub fn ones(len: usize) -> Self {
        Self {
            weights: vec![1.0; len],
            profile: TimeProfile::Constant,
        }
    }

    /// Indicator of the arc tapered to zero over `ramp` radians at both ends.
    /// `angles` are the polar angles of the measurement nodes.
    pub fn smoothed_arc(angles: &[f64], opening: f64, center: f64, ramp: f64) -> Self {
        let full = opening >= std::f64::consts::TAU;
        let weights = angles
            .iter()
            .map(|&a| {
                if full || ramp <= 0.0 {
                    return 1.0;
                }
                if !in_arc(a, opening, center) {
                    return 0.0;
                }
                let start = center - 0.5 * opening;
                let d = (a - start).rem_euclid(std::f64::consts::TAU);
                let edge = d.min(opening - d);
                smoothstep(edge / ramp)
            })
            .collect();
        Self {
            weights,
            profile: TimeProfile::Constant,
        }
    }

    pub fn with_profile(mut self, profile: TimeProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn profile(&self) -> TimeProfile {
        self.profile
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `χ(b, t)`
    pub fn weight(&self, b: usize, t: f64) -> f64 {
        match self.profile {
            TimeProfile::Constant => self.weights[b],
            TimeProfile::Linear => self.weights[b] * t,
        }
    }
}

/// Pointwise product `χ(b, t_j) g[b, j]`.
pub fn apply_window(g: &BoundaryTrace, window: &Window) -> Result<BoundaryTrace> {
    if window.len() != g.boundary_count() {
        return Err(Error::shape(
            format!("window of {} nodes", g.boundary_count()),
            window.len(),
        ));
    }
    let mut out = g.clone();
    let nt = g.nt;
    for b in 0..g.boundary_count() {
        for j in 0..nt {
            out.values[b * nt + j] *= window.weight(b, j as f64 * g.ht);
        }
    }
    Ok(out)
}

/// Weighted inner products of the image and data spaces.
#[derive(Debug, Clone)]
pub struct InnerProducts {
    inv_c2: Vec<f64>,
    window: Window,
    hx: f64,
    ht: f64,
}

impl InnerProducts {
    pub fn new(c: &ScalarField, window: Window, hx: f64, ht: f64) -> Self {
        Self {
            inv_c2: c.as_slice().iter().map(|c| 1.0 / (c * c)).collect(),
            window,
            hx,
            ht,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn x_inner(&self, f1: &ScalarField, f2: &ScalarField) -> Result<f64> {
        f1.ensure_same_shape(f2)?;
        if f1.len() != self.inv_c2.len() {
            return Err(Error::shape(self.inv_c2.len(), f1.len()));
        }
        Ok(self.x_inner_unchecked(f1.as_slice(), f2.as_slice()))
    }

    fn x_inner_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(&self.inv_c2)
            .map(|((x, y), w)| w * x * y)
            .sum();
        s * self.hx * self.hx
    }

    pub fn y_inner(&self, g1: &BoundaryTrace, g2: &BoundaryTrace) -> Result<f64> {
        g1.ensure_compatible(g2)?;
        if g1.boundary_count() != self.window.len() {
            return Err(Error::shape(
                format!("trace on {} nodes", self.window.len()),
                g1.boundary_count(),
            ));
        }
        Ok(self.y_inner_unchecked(g1, g2))
    }

    fn y_inner_unchecked(&self, g1: &BoundaryTrace, g2: &BoundaryTrace) -> f64 {
        let nt = g1.nt;
        let mut s = 0.0;
        for b in 0..g1.boundary_count() {
            let r1 = &g1.values[b * nt..(b + 1) * nt];
            let r2 = &g2.values[b * nt..(b + 1) * nt];
            match self.window.profile {
                TimeProfile::Constant => {
                    s +=
                        self.window.weights[b] * r1.iter().zip(r2).map(|(x, y)| x * y).sum::<f64>();
                }
                TimeProfile::Linear => {
                    s += r1
                        .iter()
                        .zip(r2)
                        .enumerate()
                        .map(|(j, (x, y))| self.window.weight(b, j as f64 * self.ht) * x * y)
                        .sum::<f64>();
                }
            }
        }
        s * self.hx * self.ht
    }
}

/// How [`PatOperator::adjoint`] is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointScheme {
    /// Time-reversed wave solve with a boundary delta source, then a
    /// one-sided time derivative at `t = 0`. Adjoint up to discretization error.
    #[default]
    Continuous,
    /// Exact transpose of the discrete forward scheme in the weighted products.
    Transpose,
}

impl std::str::FromStr for AdjointScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Ok(Self::Continuous),
            "transpose" => Ok(Self::Transpose),
            other => Err(Error::config(
                "adjoint",
                format!("unknown scheme `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for AdjointScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Continuous => "continuous",
            Self::Transpose => "transpose",
        })
    }
}

/// The discrete photoacoustic forward map `f ↦ p|_{S_N × {t_j}}` for one
/// sound speed, measurement set and data weight.
#[derive(Debug, Clone)]
pub struct PatOperator {
    domain: Domain,
    measurement: IndexSet,
    // positions of measurement nodes within the full boundary
    boundary_slots: Vec<usize>,
    c: ScalarField,
    solver: WaveSolver,
    products: InnerProducts,
    support: Vec<bool>,
    scheme: AdjointScheme,
}

impl PatOperator {
    pub fn new(
        domain: Domain,
        c: ScalarField,
        measurement: IndexSet,
        window: Window,
    ) -> Result<Self> {
        let grid = domain.grid;
        let c_max = c.as_slice().iter().fold(1.0f64, |m, v| m.max(*v));
        let emb = Embedding::periodization_free(&grid, c_max * grid.final_time());
        Self::with_embedding(domain, c, measurement, window, emb)
    }

    pub fn with_embedding(
        domain: Domain,
        c: ScalarField,
        measurement: IndexSet,
        window: Window,
        embedding: Embedding,
    ) -> Result<Self> {
        if window.len() != measurement.len() {
            return Err(Error::shape(
                format!("window of {} nodes", measurement.len()),
                window.len(),
            ));
        }
        let boundary_slots = measurement
            .iter()
            .map(|i| {
                domain.boundary.indices().position(i).ok_or_else(|| {
                    Error::Geometry(format!(
                        "measurement node {i:?} is not on the discrete boundary"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = domain.grid;
        let solver = WaveSolver::with_embedding(&grid, &c, embedding)?;
        let products = InnerProducts::new(&c, window, grid.hx(), grid.ht());
        let support = domain.interior_mask();
        Ok(Self {
            domain,
            measurement,
            boundary_slots,
            c,
            solver,
            products,
            support,
            scheme: AdjointScheme::default(),
        })
    }

    pub fn with_adjoint_scheme(mut self, scheme: AdjointScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn adjoint_scheme(&self) -> AdjointScheme {
        self.scheme
    }

    /// Restricts the image space to a custom support (defaults to the discrete disc).
    pub fn with_support(mut self, support: Vec<bool>) -> Result<Self> {
        if support.len() != self.c.len() {
            return Err(Error::shape(self.c.len(), support.len()));
        }
        self.support = support;
        Ok(self)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn grid(&self) -> &crate::grid::Grid {
        &self.domain.grid
    }

    pub fn measurement(&self) -> &IndexSet {
        &self.measurement
    }

    pub fn window(&self) -> &Window {
        self.products.window()
    }

    pub fn sound_speed(&self) -> &ScalarField {
        &self.c
    }

    pub fn products(&self) -> &InnerProducts {
        &self.products
    }

    pub fn solver(&self) -> &WaveSolver {
        &self.solver
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn zero_trace(&self) -> BoundaryTrace {
        let g = self.grid();
        BoundaryTrace::zeros(self.measurement.clone(), g.steps() + 1, g.ht())
    }

    pub fn zero_field(&self) -> ScalarField {
        self.grid().zeros()
    }

    fn check_trace(&self, g: &BoundaryTrace) -> Result<()> {
        let grid = self.grid();
        if g.indices != self.measurement || g.nt != grid.steps() + 1 {
            return Err(Error::shape(
                format!("{} x {} trace", self.measurement.len(), grid.steps() + 1),
                format!("{} x {} trace", g.boundary_count(), g.nt),
            ));
        }
        Ok(())
    }

    /// `g[b, j] = p(x_b, t_j)` for the initial pressure `f`.
    pub fn forward(&self, f: &ScalarField) -> Result<BoundaryTrace> {
        let grid = self.grid();
        let mut rec = WaveRecorder::new(grid.steps()).with_trace(&self.measurement);
        self.solver.solve_ivp(f, &mut rec)?;
        BoundaryTrace::new(
            self.measurement.clone(),
            grid.steps() + 1,
            grid.ht(),
            rec.into_trace(),
        )
    }

    /// Adjoint of [`forward`](Self::forward) with respect to the weighted
    /// inner products, using the operator's [`AdjointScheme`].
    pub fn adjoint(&self, g: &BoundaryTrace) -> Result<ScalarField> {
        match self.scheme {
            AdjointScheme::Continuous => self.adjoint_continuous(g),
            AdjointScheme::Transpose => self.adjoint_transpose(g),
        }
    }

    /// Exact transpose of the discrete forward map, rescaled to the weighted products.
    pub fn adjoint_transpose(&self, g: &BoundaryTrace) -> Result<ScalarField> {
        self.check_trace(g)?;
        let grid = *self.grid();
        let scale = grid.ht() / grid.hx();
        let window = self.window();
        let nt = g.nt;
        let weights = |j: usize, z: &mut ScalarField| -> Result<()> {
            let t = j as f64 * grid.ht();
            for (b, [i1, i2]) in self.measurement.iter().enumerate() {
                z[(i1, i2)] += window.weight(b, t) * g.values[b * nt + j] * scale;
            }
            Ok(())
        };
        let mut out = self.solver.solve_transpose(weights)?;
        for ((v, &inside), c) in out
            .as_mut_slice()
            .iter_mut()
            .zip(&self.support)
            .zip(self.c.as_slice())
        {
            *v = if inside { c * c * *v } else { 0.0 };
        }
        Ok(out)
    }

    /// Time-reversed wave solve with a boundary delta source.
    pub fn adjoint_continuous(&self, g: &BoundaryTrace) -> Result<ScalarField> {
        self.check_trace(g)?;
        let grid = *self.grid();
        let m = grid.steps();
        if m < 2 {
            return Err(Error::Recorder("the adjoint needs M >= 2".into()));
        }
        let ht = grid.ht();
        let t_final = grid.final_time();
        let inv_hx = 1.0 / grid.hx();
        let window = self.window();
        let nt = g.nt;
        // reversed time τ = T - t; source at step k uses g(T - τ_k)
        let source = |k: usize, s: &mut ScalarField| -> Result<()> {
            let j = m - k;
            let t = t_final - k as f64 * ht;
            for (b, [i1, i2]) in self.measurement.iter().enumerate() {
                s[(i1, i2)] += window.weight(b, t) * g.values[b * nt + j] * inv_hx;
            }
            Ok(())
        };
        let mut rec = WaveRecorder::new(m).with_snapshots(&[m - 2, m - 1, m])?;
        self.solver.solve_source(source, &mut rec)?;
        let snap = |s: usize| rec.snapshot(s).expect("requested above").map(|v| -v);
        // q(t) = -z(T - t)
        let mut out = time_derivative_at_zero(&snap(m), &snap(m - 1), &snap(m - 2), ht)?;
        for (v, &inside) in out.as_mut_slice().iter_mut().zip(&self.support) {
            if !inside {
                *v = 0.0;
            }
        }
        Ok(out)
    }

    /// `L* L f`
    pub fn normal(&self, f: &ScalarField) -> Result<ScalarField> {
        self.adjoint(&self.forward(f)?)
    }

    /// Boundary values `χ(b, t) g[b, j]` on the full discrete boundary (zero off the arc).
    fn dirichlet_values(&self, g: &BoundaryTrace, j: usize, out: &mut [f64]) {
        out.fill(0.0);
        let t = j as f64 * g.ht;
        for (b, &slot) in self.boundary_slots.iter().enumerate() {
            out[slot] = self.window().weight(b, t) * g.values[b * g.nt + j];
        }
    }

    /// Time reversal: backward wave solve inside the disc with the weighted
    /// data as Dirichlet values on the discrete boundary, started from the
    /// harmonic extension of the final-time data. Returns `q(., 0)` on the disc.
    pub fn time_reversal(&self, g: &BoundaryTrace) -> Result<ScalarField> {
        self.check_trace(g)?;
        let grid = *self.grid();
        let m = grid.steps();
        let emb = *self.solver.embedding();
        let n1 = grid.nodes();
        let nb = self.domain.boundary.len();
        let mut bvals = vec![0.0; nb];

        self.dirichlet_values(g, m, &mut bvals);
        let phi = harmonic_extension(&bvals, &self.domain)?;

        // nodes of the embedded lattice kept free: disc interior only
        let mut free = vec![false; emb.size() * emb.size()];
        for [i1, i2] in self.domain.interior.iter() {
            free[emb.flat(i1, i2)] = true;
        }
        let boundary_flat: Vec<usize> = self
            .domain
            .boundary
            .indices()
            .iter()
            .map(|[a, b]| emb.flat(a, b))
            .collect();

        let mut st = self.solver.stepper();
        st.set_initial_pressure(&phi)?;
        for j in (0..m).rev() {
            st.advance(None)?;
            self.dirichlet_values(g, j, &mut bvals);
            st.constrain(|p| {
                for (v, &keep) in p.iter_mut().zip(&free) {
                    if !keep {
                        *v = 0.0;
                    }
                }
                for (&k, &v) in boundary_flat.iter().zip(&bvals) {
                    p[k] = v;
                }
            });
        }
        let mut out = ScalarField::zeros(n1, n1, grid.hx());
        emb.restrict_into(st.pressure(), out.as_mut_slice());
        self.domain.mask_interior(&mut out);
        Ok(out)
    }

    pub fn x_inner(&self, a: &ScalarField, b: &ScalarField) -> Result<f64> {
        self.products.x_inner(a, b)
    }

    pub fn y_inner(&self, a: &BoundaryTrace, b: &BoundaryTrace) -> Result<f64> {
        self.products.y_inner(a, b)
    }
}

impl LinearOperator for PatOperator {
    type Domain = ScalarField;
    type Range = BoundaryTrace;

    fn apply(&self, x: &ScalarField) -> Result<BoundaryTrace> {
        self.forward(x)
    }

    fn apply_adjoint(&self, y: &BoundaryTrace) -> Result<ScalarField> {
        self.adjoint(y)
    }

    fn domain_inner(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        self.products.x_inner_unchecked(a.as_slice(), b.as_slice())
    }

    fn range_inner(&self, a: &BoundaryTrace, b: &BoundaryTrace) -> f64 {
        self.products.y_inner_unchecked(a, b)
    }
}

/// Discrete harmonic extension of values on the discrete boundary (aligned
/// with `domain.boundary.indices()`) into the disc: equal to the data on the
/// boundary, zero outside, and with vanishing 5-point Laplacian inside.
pub fn harmonic_extension(values: &[f64], domain: &Domain) -> Result<ScalarField> {
    let boundary = domain.boundary.indices();
    if values.len() != boundary.len() {
        return Err(Error::shape(boundary.len(), values.len()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite boundary value {v}")));
    }
    let grid = domain.grid;
    let n1 = grid.nodes();
    let mut out = ScalarField::zeros(n1, n1, grid.hx());
    for (i, &v) in boundary.iter().zip(values) {
        out[(i[0], i[1])] = v;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || domain.interior.is_empty() {
        return Ok(out);
    }
    let tol = 1e-8 * scale;

    // unknown numbering over interior nodes
    const NONE: usize = usize::MAX;
    let mut unknown = vec![NONE; n1 * n1];
    for (k, [a, b]) in domain.interior.iter().enumerate() {
        unknown[a * n1 + b] = k;
    }
    let nu = domain.interior.len();
    let mut neighbors = vec![[NONE; 4]; nu];
    let mut rhs = vec![0.0; nu];
    for (k, [a, b]) in domain.interior.iter().enumerate() {
        // interior nodes never touch the lattice edge: their neighbors are interior or boundary
        let nb = [(a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)];
        for (slot, (x, y)) in nb.into_iter().enumerate() {
            let u = unknown[x * n1 + y];
            if u == NONE {
                rhs[k] += out[(x, y)];
            } else {
                neighbors[k][slot] = u;
            }
        }
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for k in 0..nu {
            let mut s = 4.0 * x[k];
            for &u in &neighbors[k] {
                if u != NONE {
                    s -= x[u];
                }
            }
            y[k] = s;
        }
    };

    // conjugate gradients on the SPD system, stopped on the max-norm stencil residual
    let mut x = vec![0.0; nu];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; nu];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let max_iter = 50 * n1 + 1000;
    let mut converged = false;
    for _ in 0..max_iter {
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= tol {
            converged = true;
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
    }
    // recompute the true residual
    let mut ax = vec![0.0; nu];
    apply(&x, &mut ax);
    let residual = ax
        .iter()
        .zip(&rhs)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !converged && residual > tol {
        return Err(Error::Numerical {
            message: "harmonic extension did not converge".into(),
            residual,
        });
    }
    for (k, [a, b]) in domain.interior.iter().enumerate() {
        out[(a, b)] = x[k];
    }
    Ok(out)
}

/// Largest singular value of `op` estimated by power iteration on `T* T`,
/// started from a seeded random vector shaped like `template`.
pub fn norm_estimate<Op: LinearOperator>(
    op: &Op,
    template: &Op::Domain,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    Ok(norm_estimate_history(op, template, iters, seed)?
        .last()
        .copied()
        .unwrap_or(0.0))
}

/// The sequence of estimates after `1..=iters` power steps.
pub fn norm_estimate_history<Op: LinearOperator>(
    op: &Op,
    template: &Op::Domain,
    iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if iters == 0 {
        return Err(Error::config(
            "iters",
            "power iteration needs at least one step",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = template.zeros_like();
    let mut norm_sq = 0.0;
    for _ in 0..8 {
        v.as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-1.0..1.0));
        norm_sq = op.domain_norm_sq(&v);
        if norm_sq > 0.0 {
            break;
        }
    }
    if norm_sq <= 0.0 {
        return Err(Error::Validation(
            "could not draw a nonzero start vector".into(),
        ));
    }
    v.scale(1.0 / norm_sq.sqrt());
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let av = op.apply_adjoint(&op.apply(&v)?)?;
        let rayleigh = op.domain_inner(&av, &v).max(0.0);
        history.push(rayleigh.sqrt());
        let n = op.domain_norm_sq(&av);
        if n <= 0.0 || !n.is_finite() {
            break;
        }
        v = av;
        v.scale(1.0 / n.sqrt());
    }
    Ok(history)
}
