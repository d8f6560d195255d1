//! k-space pseudospectral time stepping for `c^-2 p_tt - Δp = s` in 2D.
//!
//! The pressure is split as `p = w - v` with `w = (c0/c)^2 p`, so that
//! `w_tt - c0^2 Δ(w - v) = c0^2 s` is a constant-speed wave equation driven by
//! the correction `v = (1 - c^2/c0^2) w`. Each step applies the exact
//! constant-speed propagator in Fourier space:
//!
//! ```text
//! w(t+h) = 2 w(t) - w(t-h) - F^-1[ 4 sin^2(c0|ξ|h/2) F[w - v] - (c0 h)^2 sinc^2(c0|ξ|h/2) F[s] ]
//! ```
//!
//! The first step uses the even extension `w(-h) = w(h)` (zero initial
//! velocity), which makes the scheme exact for constant speed.

use log::warn;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Embedding, Grid, IndexSet};
use crate::spectral::{wavenumber, HalfSpectrum, Spectral2d, SpectralScratch};

/// Lower bound accepted for sound-speed samples.
pub const MIN_SOUND_SPEED: f64 = 1e-6;

/// Fourier multipliers of the time-stepping formula on the embedded lattice.
#[derive(Debug, Clone)]
pub struct KspaceKernels {
    c0: f64,
    ht: f64,
    hx: f64,
    size: usize,
    // full arrays in FFT order, row-major [k1][k2]
    sin2: Vec<f64>,
    src: Vec<f64>,
    // half-spectrum layout [k2][k1] used when stepping
    sin2_half: Vec<f64>,
    src_half: Vec<f64>,
    plan: Spectral2d,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl KspaceKernels {
    /// Kernels for reference speed `c0` on a periodic `size x size` lattice of spacing `hx`.
    pub fn new(c0: f64, ht: f64, hx: f64, size: usize) -> Self {
        let period = size as f64 * hx;
        let h = size / 2 + 1;
        let mut sin2 = vec![0.0; size * size];
        let mut src = vec![0.0; size * size];
        let mut sin2_half = vec![0.0; size * h];
        let mut src_half = vec![0.0; size * h];
        for k1 in 0..size {
            let xi1 = wavenumber(k1, size, period);
            for k2 in 0..size {
                let xi2 = wavenumber(k2, size, period);
                let arg = 0.5 * c0 * (xi1 * xi1 + xi2 * xi2).sqrt() * ht;
                let s = arg.sin();
                let a = 4.0 * s * s;
                let b = (c0 * ht).powi(2) * sinc(arg).powi(2);
                sin2[k1 * size + k2] = a;
                src[k1 * size + k2] = b;
                if k2 < h {
                    sin2_half[k2 * size + k1] = a;
                    src_half[k2 * size + k1] = b;
                }
            }
        }
        Self {
            c0,
            ht,
            hx,
            size,
            sin2,
            src,
            sin2_half,
            src_half,
            plan: Spectral2d::new(size),
        }
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn ht(&self) -> f64 {
        self.ht
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Side length of the periodic box.
    pub fn period(&self) -> f64 {
        self.size as f64 * self.hx
    }

    /// `4 sin^2(c0 |ξ| h_t / 2)` at FFT bin `(k1, k2)`.
    pub fn sin2(&self, k1: usize, k2: usize) -> f64 {
        self.sin2[k1 * self.size + k2]
    }

    /// `(c0 h_t)^2 sinc^2(c0 |ξ| h_t / 2)` at FFT bin `(k1, k2)`.
    pub fn src(&self, k1: usize, k2: usize) -> f64 {
        self.src[k1 * self.size + k2]
    }

    pub fn plan(&self) -> &Spectral2d {
        &self.plan
    }

    /// Work buffers for [`KspaceKernels::step_into`].
    pub fn workspace(&self) -> StepWorkspace {
        StepWorkspace {
            scratch: self.plan.scratch(),
            a: HalfSpectrum::zeros(self.size),
            b: HalfSpectrum::zeros(self.size),
        }
    }

    /// Writes `F^-1[sin2 F[p] - src F[s]]` into `out`.
    fn correction(&self, p: &[f64], s: Option<&[f64]>, out: &mut [f64], ws: &mut StepWorkspace) {
        self.plan.forward(p, &mut ws.a, &mut ws.scratch);
        for (z, m) in ws.a.data.iter_mut().zip(&self.sin2_half) {
            *z *= *m;
        }
        if let Some(s) = s {
            self.plan.forward(s, &mut ws.b, &mut ws.scratch);
            for ((z, y), m) in ws.a.data.iter_mut().zip(&ws.b.data).zip(&self.src_half) {
                *z -= *y * *m;
            }
        }
        self.plan.inverse(&mut ws.a, out, &mut ws.scratch);
    }

    /// One time step: returns `w(t+h)` from `w(t-h)`, `w(t)`, `v(t)` and `s(t)`.
    pub fn step(
        &self,
        w_prev: &ScalarField,
        w_curr: &ScalarField,
        v_curr: &ScalarField,
        s_curr: &ScalarField,
    ) -> Result<ScalarField> {
        let n = self.size;
        for f in [w_prev, w_curr, v_curr, s_curr] {
            f.ensure_shape(n, n)?;
        }
        let mut ws = self.workspace();
        let p: Vec<f64> = w_curr
            .as_slice()
            .iter()
            .zip(v_curr.as_slice())
            .map(|(w, v)| w - v)
            .collect();
        let mut corr = vec![0.0; n * n];
        self.correction(&p, Some(s_curr.as_slice()), &mut corr, &mut ws);
        let data = w_curr
            .as_slice()
            .iter()
            .zip(w_prev.as_slice())
            .zip(&corr)
            .map(|((w, wp), c)| 2.0 * w - wp - c)
            .collect();
        ScalarField::from_vec(n, n, w_curr.step(), data)
    }
}

pub struct StepWorkspace {
    scratch: SpectralScratch,
    a: HalfSpectrum,
    b: HalfSpectrum,
}

/// Builds kernels for sound speed `c` given on the `(N+1)^2` grid, embedded
/// with the solver's default lattice.
pub fn build_kernels(grid: &Grid, c: &ScalarField) -> Result<KspaceKernels> {
    let solver = WaveSolver::new(grid, c)?;
    Ok(solver.kernels)
}

/// A point sampler: a weighted sum of `(N+1)^2` grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub terms: Vec<([usize; 2], f64)>,
}

impl Sampler {
    pub fn node(idx: [usize; 2]) -> Self {
        Self {
            terms: vec![(idx, 1.0)],
        }
    }

    /// Bilinear interpolation at physical point `x`; `None` if `x` is outside the grid square.
    pub fn bilinear(grid: &Grid, x: [f64; 2]) -> Option<Self> {
        let h = grid.hx();
        let n = grid.n();
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for a in 0..2 {
            let u = (x[a] + grid.radius()) / h;
            if !(u >= -1e-9 && u <= n as f64 + 1e-9) {
                return None;
            }
            let u = u.clamp(0.0, n as f64);
            let i = (u.floor() as usize).min(n - 1);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let mut terms = Vec::with_capacity(4);
        for (da, wa) in [(0, 1.0 - frac[0]), (1, frac[0])] {
            for (db, wb) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                let w = wa * wb;
                if w != 0.0 {
                    terms.push(([base[0] + da, base[1] + db], w));
                }
            }
        }
        Some(Self { terms })
    }
}

/// What to keep from a time-stepping run.
#[derive(Debug, Clone)]
pub struct WaveRecorder {
    steps: usize,
    samplers: Vec<Sampler>,
    trace: Vec<f64>,
    snapshot_steps: Vec<usize>,
    snapshots: Vec<Option<ScalarField>>,
}

impl WaveRecorder {
    /// Empty recorder for a run of `steps` time steps (samples `0..=steps`).
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            samplers: Vec::new(),
            trace: Vec::new(),
            snapshot_steps: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Records the pressure at the given nodes at every step.
    pub fn with_trace(self, nodes: &IndexSet) -> Self {
        self.with_samplers(nodes.iter().map(Sampler::node).collect())
    }

    pub fn with_samplers(mut self, samplers: Vec<Sampler>) -> Self {
        self.trace = vec![0.0; samplers.len() * (self.steps + 1)];
        self.samplers = samplers;
        self
    }

    /// Keeps full `(N+1)^2` pressure fields at the listed steps.
    pub fn with_snapshots(mut self, steps: &[usize]) -> Result<Self> {
        if let Some(&bad) = steps.iter().find(|&&s| s > self.steps) {
            return Err(Error::Recorder(format!(
                "snapshot step {bad} outside 0..={}",
                self.steps
            )));
        }
        let mut s = steps.to_vec();
        s.sort_unstable();
        s.dedup();
        self.snapshots = vec![None; s.len()];
        self.snapshot_steps = s;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Trace values, row-major `[sampler][step]`.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<f64> {
        self.trace
    }

    pub fn sampler_count(&self) -> usize {
        self.samplers.len()
    }

    pub fn snapshot(&self, step: usize) -> Option<&ScalarField> {
        self.snapshot_steps
            .binary_search(&step)
            .ok()
            .and_then(|i| self.snapshots[i].as_ref())
    }

    fn record(&mut self, step: usize, p: &[f64], embedding: &Embedding, hx: f64) {
        let nt = self.steps + 1;
        for (b, s) in self.samplers.iter().enumerate() {
            let v = s
                .terms
                .iter()
                .map(|&([i1, i2], w)| w * p[embedding.flat(i1, i2)])
                .sum();
            self.trace[b * nt + step] = v;
        }
        if let Ok(i) = self.snapshot_steps.binary_search(&step) {
            let n1 = embedding.inner();
            let mut f = ScalarField::zeros(n1, n1, hx);
            embedding.restrict_into(p, f.as_mut_slice());
            self.snapshots[i] = Some(f);
        }
    }
}

/// Supplies the source field `s(., t_j)` on the `(N+1)^2` grid.
pub trait SourceProvider {
    /// Fills `out` (pre-zeroed) with the source at step `j`.
    fn source(&mut self, step: usize, out: &mut ScalarField) -> Result<()>;
}

impl<F> SourceProvider for F
where
    F: FnMut(usize, &mut ScalarField) -> Result<()>,
{
    fn source(&mut self, step: usize, out: &mut ScalarField) -> Result<()> {
        self(step, out)
    }
}

/// Sound speed, embedding and kernels for repeated solves on one grid.
#[derive(Debug, Clone)]
pub struct WaveSolver {
    grid: Grid,
    embedding: Embedding,
    kernels: KspaceKernels,
    // c^2 / c0^2 on the embedded lattice
    ratio: Vec<f64>,
}

impl WaveSolver {
    /// Uses the smallest FFT-friendly embedding free of wrap-around up to time `T`.
    pub fn new(grid: &Grid, c: &ScalarField) -> Result<Self> {
        let c_max = c.as_slice().iter().fold(1.0f64, |m, v| m.max(*v));
        let emb = Embedding::periodization_free(grid, c_max * grid.final_time());
        Self::with_embedding(grid, c, emb)
    }

    /// Sound speed outside the `(N+1)^2` block is taken to be one.
    pub fn with_embedding(grid: &Grid, c: &ScalarField, embedding: Embedding) -> Result<Self> {
        let n1 = grid.nodes();
        c.ensure_shape(n1, n1)?;
        if embedding.inner() != n1 {
            return Err(Error::shape(
                format!("embedding of {n1} nodes"),
                embedding.inner(),
            ));
        }
        if let Some(bad) = c
            .as_slice()
            .iter()
            .find(|v| !(v.is_finite() && **v >= MIN_SOUND_SPEED))
        {
            return Err(Error::Validation(format!(
                "sound speed must be positive and finite, found {bad}"
            )));
        }
        let c_emb = embedding.embed(c, 1.0)?;
        let c0 = c_emb.max();
        let ratio = c_emb.as_slice().iter().map(|c| (c / c0).powi(2)).collect();
        let courant = c0 * grid.ht() / grid.hx();
        if courant > 1.0 {
            warn!("c0*h_t/h_x = {courant:.3} exceeds 1; variable-speed accuracy degrades");
        }
        let kernels = KspaceKernels::new(c0, grid.ht(), grid.hx(), embedding.size());
        Ok(Self {
            grid: *grid,
            embedding,
            kernels,
            ratio,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn kernels(&self) -> &KspaceKernels {
        &self.kernels
    }

    pub fn c0(&self) -> f64 {
        self.kernels.c0
    }

    pub fn stepper(&self) -> KspaceStepper<'_> {
        KspaceStepper::new(self)
    }

    fn check_recorder(&self, recorder: &WaveRecorder) -> Result<()> {
        if recorder.steps != self.grid.steps() {
            return Err(Error::Recorder(format!(
                "recorder expects {} steps but the grid has M = {}",
                recorder.steps,
                self.grid.steps()
            )));
        }
        Ok(())
    }

    /// Runs the initial-value problem `p(0) = f`, `p_t(0) = 0`, `s = 0` for
    /// `M` steps, recording steps `0..=M`.
    pub fn solve_ivp(&self, f: &ScalarField, recorder: &mut WaveRecorder) -> Result<()> {
        self.check_recorder(recorder)?;
        let n1 = self.grid.nodes();
        f.ensure_shape(n1, n1)?;
        let r2 = self.grid.radius().powi(2);
        let outside = (0..n1)
            .flat_map(|a| (0..n1).map(move |b| (a, b)))
            .any(|(a, b)| {
                let [x, y] = self.grid.coord(a, b);
                x * x + y * y >= r2 && f.get(a, b) != 0.0
            });
        if outside {
            warn!("initial pressure is not supported inside the disc; periodization-free accuracy is not guaranteed");
        }
        let mut st = self.stepper();
        st.set_initial_pressure(f)?;
        recorder.record(0, st.pressure(), &self.embedding, self.grid.hx());
        for j in 1..=self.grid.steps() {
            st.advance(None)?;
            recorder.record(j, st.pressure(), &self.embedding, self.grid.hx());
        }
        Ok(())
    }

    /// Runs from zero initial data with source `s(., t_j)` applied at step `j`
    /// (used for advancing from `t_j` to `t_{j+1}`).
    pub fn solve_source<P: SourceProvider>(
        &self,
        mut source: P,
        recorder: &mut WaveRecorder,
    ) -> Result<()> {
        self.check_recorder(recorder)?;
        let mut st = self.stepper();
        let mut s = self.grid.zeros();
        recorder.record(0, st.pressure(), &self.embedding, self.grid.hx());
        for j in 0..self.grid.steps() {
            s.as_mut_slice().fill(0.0);
            source.source(j, &mut s)?;
            st.advance(Some(&s))?;
            recorder.record(j + 1, st.pressure(), &self.embedding, self.grid.hx());
        }
        Ok(())
    }
}

impl WaveSolver {
    /// Exact transpose of `f ↦ (p_0, ..., p_M)` for the discrete scheme.
    ///
    /// Returns the gradient of `Σ_j Σ_i p_j[i] z_j[i]` with respect to `f`,
    /// where `z_j` is supplied by `weights` on the `(N+1)^2` grid.
    pub fn solve_transpose<P: SourceProvider>(&self, mut weights: P) -> Result<ScalarField> {
        let m = self.grid.steps();
        let n1 = self.grid.nodes();
        let len = self.embedding.size().pow(2);
        let kernels = &self.kernels;
        let mut ws = kernels.workspace();
        let mut z = self.grid.zeros();
        let mut load = |j: usize, z: &mut ScalarField| -> Result<()> {
            z.as_mut_slice().fill(0.0);
            weights.source(j, z)
        };
        // u_{j+1} and u_{j+2} of the backward recurrence u_j = z_j + B u_{j+1} - u_{j+2}
        let mut next = vec![0.0; len];
        let mut curr = vec![0.0; len];
        let mut p = vec![0.0; len];
        let mut corr = vec![0.0; len];
        load(m, &mut z)?;
        self.embedding.embed_into(z.as_slice(), &mut curr);
        for j in (1..m).rev() {
            self.step_back(&mut curr, &mut next, &mut p, &mut corr, &mut ws);
            load(j, &mut z)?;
            self.embedding.add_into(z.as_slice(), &mut curr);
        }
        // gradient = z_0 + E^T (B u_1 / 2 - u_2); u_2 = 0 when M = 1
        for ((q, r), u) in p.iter_mut().zip(&self.ratio).zip(&curr) {
            *q = r * u;
        }
        kernels.correction(&p, None, &mut corr, &mut ws);
        for ((u, n), c) in curr.iter_mut().zip(&next).zip(&corr) {
            *u = *u - 0.5 * c - n;
        }
        let mut out = ScalarField::zeros(n1, n1, self.grid.hx());
        self.embedding.restrict_into(&curr, out.as_mut_slice());
        load(0, &mut z)?;
        for (o, v) in out.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *o += v;
        }
        Ok(out)
    }

    /// `(curr, next) <- (B curr - next, curr)` with `B = 2 - A C`.
    fn step_back(
        &self,
        curr: &mut [f64],
        next: &mut [f64],
        p: &mut [f64],
        corr: &mut [f64],
        ws: &mut StepWorkspace,
    ) {
        for ((q, r), u) in p.iter_mut().zip(&self.ratio).zip(curr.iter()) {
            *q = r * u;
        }
        self.kernels.correction(p, None, corr, ws);
        for ((u, n), c) in curr.iter_mut().zip(next.iter_mut()).zip(corr.iter()) {
            let v = 2.0 * *u - *n - c;
            *n = *u;
            *u = v;
        }
    }
}

/// Mutable time-stepping state on the embedded lattice.
pub struct KspaceStepper<'a> {
    solver: &'a WaveSolver,
    w_prev: Vec<f64>,
    w_curr: Vec<f64>,
    p: Vec<f64>,
    src: Vec<f64>,
    corr: Vec<f64>,
    ws: StepWorkspace,
    started: bool,
    step: usize,
}

impl<'a> KspaceStepper<'a> {
    fn new(solver: &'a WaveSolver) -> Self {
        let n = solver.embedding.size();
        Self {
            solver,
            w_prev: vec![0.0; n * n],
            w_curr: vec![0.0; n * n],
            p: vec![0.0; n * n],
            src: vec![0.0; n * n],
            corr: vec![0.0; n * n],
            ws: solver.kernels.workspace(),
            started: false,
            step: 0,
        }
    }

    /// Sets `p(0)` on the `(N+1)^2` grid (zero outside) with zero velocity.
    pub fn set_initial_pressure(&mut self, f: &ScalarField) -> Result<()> {
        let n1 = self.solver.grid.nodes();
        f.ensure_shape(n1, n1)?;
        self.p.fill(0.0);
        self.solver.embedding.embed_into(f.as_slice(), &mut self.p);
        self.sync_w_from_p();
        self.w_prev.copy_from_slice(&self.w_curr);
        self.started = false;
        self.step = 0;
        Ok(())
    }

    /// Sets `p(0)` on the whole embedded lattice with zero velocity.
    pub fn set_initial_pressure_embedded(&mut self, p: &[f64]) {
        self.p.copy_from_slice(p);
        self.sync_w_from_p();
        self.w_prev.copy_from_slice(&self.w_curr);
        self.started = false;
        self.step = 0;
    }

    fn sync_w_from_p(&mut self) {
        for ((w, p), r) in self.w_curr.iter_mut().zip(&self.p).zip(&self.solver.ratio) {
            *w = p / r;
        }
    }

    /// Advances one step with an optional source on the `(N+1)^2` grid.
    pub fn advance(&mut self, source: Option<&ScalarField>) -> Result<()> {
        let src = match source {
            Some(s) => {
                let n1 = self.solver.grid.nodes();
                s.ensure_shape(n1, n1)?;
                self.src.fill(0.0);
                self.solver
                    .embedding
                    .embed_into(s.as_slice(), &mut self.src);
                Some(self.src.as_slice())
            }
            None => None,
        };
        self.solver
            .kernels
            .correction(&self.p, src, &mut self.corr, &mut self.ws);
        if self.started {
            for ((wp, wc), c) in self.w_prev.iter_mut().zip(&mut self.w_curr).zip(&self.corr) {
                let next = 2.0 * *wc - *wp - c;
                *wp = *wc;
                *wc = next;
            }
        } else {
            // even extension w(-h) = w(h)
            for ((wp, wc), c) in self.w_prev.iter_mut().zip(&mut self.w_curr).zip(&self.corr) {
                let next = *wc - 0.5 * c;
                *wp = *wc;
                *wc = next;
            }
            self.started = true;
        }
        for ((p, w), r) in self.p.iter_mut().zip(&self.w_curr).zip(&self.solver.ratio) {
            *p = w * r;
        }
        self.step += 1;
        Ok(())
    }

    /// Pressure on the embedded lattice at the current step.
    pub fn pressure(&self) -> &[f64] {
        &self.p
    }

    pub fn pressure_inner(&self) -> ScalarField {
        let n1 = self.solver.grid.nodes();
        let mut f = ScalarField::zeros(n1, n1, self.solver.grid.hx());
        self.solver
            .embedding
            .restrict_into(&self.p, f.as_mut_slice());
        f
    }

    /// Overwrites the current pressure (embedded lattice) in place; the
    /// previous time level is left untouched.
    pub fn constrain(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.p);
        self.sync_w_from_p();
    }

    /// Swaps the two stored time levels so that further steps run backward.
    pub fn reverse(&mut self) {
        std::mem::swap(&mut self.w_prev, &mut self.w_curr);
        for ((p, w), r) in self.p.iter_mut().zip(&self.w_curr).zip(&self.solver.ratio) {
            *p = w * r;
        }
        self.started = true;
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Raw `w` at the current and previous levels.
    pub fn levels(&self) -> (&[f64], &[f64]) {
        (&self.w_prev, &self.w_curr)
    }
}

/// Second-order one-sided estimate of `∂_t p(., 0)` from `p` at `t = 0, h, 2h`.
pub fn time_derivative_at_zero(
    p0: &ScalarField,
    p1: &ScalarField,
    p2: &ScalarField,
    ht: f64,
) -> Result<ScalarField> {
    p0.ensure_same_shape(p1)?;
    p0.ensure_same_shape(p2)?;
    let inv = 1.0 / (2.0 * ht);
    let data = p0
        .as_slice()
        .iter()
        .zip(p1.as_slice())
        .zip(p2.as_slice())
        .map(|((a, b), c)| (-3.0 * a + 4.0 * b - c) * inv)
        .collect();
    ScalarField::from_vec(p0.rows(), p0.cols(), p0.step(), data)
}

/// Same as [`time_derivative_at_zero`] reading the three steps from a recorder.
pub fn time_derivative_from_recorder(
    recorder: &WaveRecorder,
    steps: [usize; 3],
    ht: f64,
) -> Result<ScalarField> {
    let get = |s: usize| {
        recorder
            .snapshot(s)
            .ok_or_else(|| Error::Recorder(format!("step {s} was not recorded")))
    };
    time_derivative_at_zero(get(steps[0])?, get(steps[1])?, get(steps[2])?, ht)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::relative_l2;
    use crate::grid::Domain;
    use crate::spectral::signed_index;

    fn unit_speed(grid: &Grid) -> ScalarField {
        grid.sample(|_| 1.0)
    }

    fn gaussian(grid: &Grid, s: f64) -> ScalarField {
        grid.sample(|[x, y]| (-(x * x + y * y) / (2.0 * s * s)).exp())
    }

    #[test]
    fn kernel_invariants() {
        let k = KspaceKernels::new(1.15, 0.01, 0.05, 30);
        assert!((k.src(0, 0) - (1.15f64 * 0.01).powi(2)).abs() < 1e-18);
        assert_eq!(k.sin2(0, 0), 0.0);
        for a in 0..30 {
            for b in 0..30 {
                let s = k.sin2(a, b);
                assert!((0.0..=4.0).contains(&s));
                let (ra, rb) = ((30 - a) % 30, (30 - b) % 30);
                assert_eq!(s, k.sin2(ra, rb));
                assert_eq!(k.src(a, b), k.src(ra, rb));
            }
        }
    }

    #[test]
    fn reference_speed_is_the_maximum() {
        let grid = Grid::new(8, 1.0, 4, 1.0).unwrap();
        let s = WaveSolver::new(&grid, &unit_speed(&grid)).unwrap();
        assert_eq!(s.c0(), 1.0);
        let c = crate::experiments::sound_speed_nontrapping(&grid);
        let s = WaveSolver::new(&grid, &c).unwrap();
        assert!((s.c0() - 1.15).abs() < 1e-12);
        let bad = grid.sample(|[x, _]| if x > 0.5 { 0.0 } else { 1.0 });
        assert!(WaveSolver::new(&grid, &bad).is_err());
    }

    #[test]
    fn single_mode_step_is_exact() {
        let n = 24;
        let h = 0.1;
        let ht = 0.07;
        let k = KspaceKernels::new(1.0, ht, h, n);
        let period = k.period();
        let (m1, m2) = (3usize, 5usize);
        let xi = (wavenumber(m1, n, period).powi(2) + wavenumber(m2, n, period).powi(2)).sqrt();
        let mode = |t: f64| {
            ScalarField::from_fn(n, n, h, |a, b| {
                let ph = 2.0 * std::f64::consts::PI * (m1 * a + m2 * b) as f64 / n as f64;
                (xi * t).cos() * ph.cos()
            })
        };
        let zero = ScalarField::zeros(n, n, h);
        let next = k.step(&mode(-ht), &mode(0.0), &zero, &zero).unwrap();
        assert!(relative_l2(next.as_slice(), mode(ht).as_slice()) < 1e-13);
        let z = k.step(&zero, &zero, &zero, &zero).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn point_source_step() {
        let n = 16;
        let (h, ht) = (0.1, 0.05);
        let k = KspaceKernels::new(1.0, ht, h, n);
        let zero = ScalarField::zeros(n, n, h);
        let mut s = zero.clone();
        s.set(4, 7, 1.0);
        let out = k.step(&zero, &zero, &zero, &s).unwrap();
        // the mean of the output is the src multiplier at ξ = 0
        let mean: f64 = out.as_slice().iter().sum::<f64>();
        assert!((mean - ht * ht).abs() < 1e-15);
        assert!(out.get(4, 7) > 0.0);
    }

    #[test]
    fn time_derivative_stencil() {
        let one = ScalarField::filled(3, 3, 1.0, 1.0);
        let at = |t: f64, p: fn(f64) -> f64| one.map(|v| v * p(t));
        let h = 0.25;
        type Case = (fn(f64) -> f64, f64);
        let cases: [Case; 3] = [(|_| 2.0, 0.0), (|t| t, 1.0), (|t| t * t, 0.0)];
        for (p, d) in cases {
            let dt = time_derivative_at_zero(&at(0.0, p), &at(h, p), &at(2.0 * h, p), h).unwrap();
            assert!(dt.as_slice().iter().all(|v| (v - d).abs() < 1e-14));
        }
        let rec = WaveRecorder::new(3).with_snapshots(&[0, 1]).unwrap();
        assert!(time_derivative_from_recorder(&rec, [0, 1, 2], h).is_err());
    }

    #[test]
    fn recorder_rejects_bad_steps() {
        assert!(WaveRecorder::new(4).with_snapshots(&[5]).is_err());
        let grid = Grid::new(8, 1.0, 4, 1.0).unwrap();
        let s = WaveSolver::new(&grid, &unit_speed(&grid)).unwrap();
        let mut rec = WaveRecorder::new(5);
        assert!(s.solve_ivp(&grid.zeros(), &mut rec).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let grid = Grid::new(16, 1.0, 20, 1.0).unwrap();
        let c = crate::experiments::sound_speed_nontrapping(&grid);
        let s = WaveSolver::new(&grid, &c).unwrap();
        let mut rec = WaveRecorder::new(20).with_snapshots(&[0, 7, 20]).unwrap();
        s.solve_ivp(&grid.zeros(), &mut rec).unwrap();
        assert_eq!(rec.snapshot(20).unwrap().max_abs(), 0.0);
        let mut rec = WaveRecorder::new(20).with_snapshots(&[20]).unwrap();
        s.solve_source(|_j: usize, _s: &mut ScalarField| Ok(()), &mut rec)
            .unwrap();
        assert_eq!(rec.snapshot(20).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constant_speed_matches_multiplier() {
        let grid = Grid::new(32, 1.0, 48, 1.2).unwrap();
        let s = WaveSolver::new(&grid, &unit_speed(&grid)).unwrap();
        let emb = *s.embedding();
        let n = emb.size();
        let f = gaussian(&grid, 0.12);
        let mut rec = WaveRecorder::new(48).with_snapshots(&[48]).unwrap();
        s.solve_ivp(&f, &mut rec).unwrap();
        // direct DFT oracle along the ξ-separable structure is too slow; use the plan
        let plan = Spectral2d::new(n);
        let mut scratch = plan.scratch();
        let mut spec = HalfSpectrum::zeros(n);
        let fe = emb.embed(&f, 0.0).unwrap();
        plan.forward(fe.as_slice(), &mut spec, &mut scratch);
        let period = n as f64 * grid.hx();
        let t = grid.final_time();
        let half = spec.half();
        let mut scaled = HalfSpectrum::zeros(n);
        for k2 in 0..half {
            for k1 in 0..n {
                let xi = wavenumber(k1, n, period).hypot(wavenumber(k2, n, period));
                scaled.data[k2 * n + k1] = spec.at(k1, k2) * (xi * t).cos();
            }
        }
        let mut out = vec![0.0; n * n];
        plan.inverse(&mut scaled, &mut out, &mut scratch);
        let mut oracle = grid.zeros();
        emb.restrict_into(&out, oracle.as_mut_slice());
        assert!(relative_l2(rec.snapshot(48).unwrap().as_slice(), oracle.as_slice()) < 1e-10);
        assert_eq!(signed_index(n - 1, n), -1);
    }

    #[test]
    fn linear_in_initial_data() {
        let grid = Grid::new(20, 1.0, 30, 1.0).unwrap();
        let c = crate::experiments::sound_speed_nontrapping(&grid);
        let s = WaveSolver::new(&grid, &c).unwrap();
        let f1 = gaussian(&grid, 0.2);
        let f2 = grid.sample(|[x, y]| (-((x - 0.3).powi(2) + y * y) / 0.02).exp());
        let mut combo = f1.clone();
        combo.scale(2.0);
        combo.axpy(-3.0, &f2);
        let nodes = IndexSet::new(vec![[0, 10], [5, 5], [10, 20]]);
        let run = |f: &ScalarField| {
            let mut r = WaveRecorder::new(30).with_trace(&nodes);
            s.solve_ivp(f, &mut r).unwrap();
            r.into_trace()
        };
        let (a, b, c) = (run(&f1), run(&f2), run(&combo));
        let expect: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        assert!(relative_l2(&c, &expect) < 1e-13);
    }

    #[test]
    fn forward_then_backward_recovers_constant_speed() {
        let grid = Grid::new(32, 1.0, 40, 0.8).unwrap();
        let s = WaveSolver::new(&grid, &unit_speed(&grid)).unwrap();
        let f = gaussian(&grid, 0.15);
        let mut st = s.stepper();
        st.set_initial_pressure(&f).unwrap();
        for _ in 0..40 {
            st.advance(None).unwrap();
        }
        // after the swap the current level is step M - 1
        st.reverse();
        for _ in 0..39 {
            st.advance(None).unwrap();
        }
        let back = st.pressure_inner();
        let e = relative_l2(back.as_slice(), f.as_slice());
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn minimal_embedding_is_free_of_wraparound() {
        let grid = Grid::new(32, 1.0, 64, 1.6).unwrap();
        let c = unit_speed(&grid);
        let f = gaussian(&grid, 0.15);
        let snap = |emb: Embedding| {
            let s = WaveSolver::with_embedding(&grid, &c, emb).unwrap();
            let mut r = WaveRecorder::new(64).with_snapshots(&[64]).unwrap();
            s.solve_ivp(&f, &mut r).unwrap();
            let mut p = r.snapshot(64).unwrap().clone();
            Domain::new(grid).mask_interior(&mut p);
            p
        };
        let small = snap(Embedding::minimal(&grid));
        let large = snap(Embedding::exact(&grid, 4 * 32 + 1).unwrap());
        let e = relative_l2(small.as_slice(), large.as_slice());
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn discrete_energy_is_conserved() {
        let grid = Grid::new(24, 1.0, 60, 1.5).unwrap();
        let s = WaveSolver::new(&grid, &unit_speed(&grid)).unwrap();
        let n = s.embedding().size();
        let period = n as f64 * grid.hx();
        let plan = Spectral2d::new(n);
        let mut scratch = plan.scratch();
        let (mut a, mut b) = (HalfSpectrum::zeros(n), HalfSpectrum::zeros(n));
        let energy = |prev: &[f64],
                      curr: &[f64],
                      a: &mut HalfSpectrum,
                      b: &mut HalfSpectrum,
                      sc: &mut SpectralScratch| {
            plan.forward(prev, a, sc);
            plan.forward(curr, b, sc);
            let mut e = 0.0;
            for k2 in 0..a.half() {
                // interior columns of the half spectrum stand for two conjugate bins
                let mult = if k2 == 0 || 2 * k2 == n { 1.0 } else { 2.0 };
                for k1 in 0..n {
                    let w =
                        1.0 + wavenumber(k1, n, period).powi(2) + wavenumber(k2, n, period).powi(2);
                    let (u, v) = (a.at(k1, k2), b.at(k1, k2));
                    let cos = 1.0 - 0.5 * s.kernels().sin2(k1, k2);
                    e += mult * w * (u.norm_sqr() + v.norm_sqr() - 2.0 * cos * (u * v.conj()).re);
                }
            }
            e
        };
        let mut st = s.stepper();
        st.set_initial_pressure(&gaussian(&grid, 0.15)).unwrap();
        st.advance(None).unwrap();
        let (p, c) = st.levels();
        let e0 = energy(p, c, &mut a, &mut b, &mut scratch);
        for _ in 1..60 {
            st.advance(None).unwrap();
            let (p, c) = st.levels();
            let e = energy(p, c, &mut a, &mut b, &mut scratch);
            assert!((e - e0).abs() <= 1e-10 * e0, "{e} vs {e0}");
        }
    }

    #[test]
    fn source_response_stays_in_its_light_cone() {
        // a resolved Gaussian source; a one-node delta is not band-limited
        let grid = Grid::new(64, 1.0, 40, 0.8).unwrap();
        let s = WaveSolver::new(&grid, &unit_speed(&grid)).unwrap();
        let (j0, width) = (5, 0.08);
        let x0 = [-0.3, 0.0];
        let blob = grid.sample(|[x, y]| {
            (-((x - x0[0]).powi(2) + (y - x0[1]).powi(2)) / (2.0 * width * width)).exp()
        });
        let src = |j: usize, out: &mut ScalarField| -> Result<()> {
            if j == j0 {
                out.as_mut_slice().copy_from_slice(blob.as_slice());
            }
            Ok(())
        };
        let mut rec = WaveRecorder::new(40).with_snapshots(&[25]).unwrap();
        s.solve_source(src, &mut rec).unwrap();
        let p = rec.snapshot(25).unwrap();
        let radius = (25 - j0) as f64 * grid.ht() + 7.0 * width;
        let (mut inside, mut outside) = (0.0f64, 0.0f64);
        for a in 0..grid.nodes() {
            for b in 0..grid.nodes() {
                let x = grid.coord(a, b);
                let v = p.get(a, b).abs();
                if (x[0] - x0[0]).hypot(x[1] - x0[1]) > radius {
                    outside = outside.max(v);
                } else {
                    inside = inside.max(v);
                }
            }
        }
        assert!(outside <= 1e-9 * inside, "{outside} vs {inside}");
    }

    #[test]
    fn transpose_is_exact() {
        let grid = Grid::new(20, 1.0, 24, 1.2).unwrap();
        let c = crate::experiments::sound_speed_nontrapping(&grid);
        let s = WaveSolver::new(&grid, &c).unwrap();
        let f = grid.sample(|[x, y]| ((3.0 * x).sin() + y * y) * (1.0 - x * x - y * y).max(0.0));
        let z: Vec<ScalarField> = (0..=24)
            .map(|j| grid.sample(|[x, y]| ((j as f64) * 0.3 + 5.0 * x - 2.0 * y).cos()))
            .collect();
        let all: Vec<usize> = (0..=24).collect();
        let mut rec = WaveRecorder::new(24).with_snapshots(&all).unwrap();
        s.solve_ivp(&f, &mut rec).unwrap();
        let lhs: f64 = (0..=24)
            .map(|j| crate::linalg::dot(rec.snapshot(j).unwrap().as_slice(), z[j].as_slice()))
            .sum();
        let grad = s
            .solve_transpose(|j: usize, out: &mut ScalarField| {
                out.as_mut_slice().copy_from_slice(z[j].as_slice());
                Ok(())
            })
            .unwrap();
        let rhs = crate::linalg::dot(f.as_slice(), grad.as_slice());
        assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs(), "{lhs} vs {rhs}");
    }
}
