//! Synthetic experiments: the nontrapping sound speed, reference phantoms,
//! data simulated on a finer grid, additive Gaussian noise, error metrics and
//! the three test cases (full data, visible arc, invisible arc).

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Domain, Grid, IndexSet, DEFAULT_ARC_CENTER};
use crate::operators::{smoothstep, AdjointScheme, BoundaryTrace, PatOperator, Window};
use crate::solvers::{
    cg_normal, landweber, nesterov, neumann_series, IterationLog, IterationRecord, Monitor,
    SolverConfig, Termination,
};
use crate::wavesolver::{Sampler, WaveRecorder, WaveSolver};

/// Radial cutoff: 1 on `|x| ≤ 1/2`, 0 on `|x| ≥ 1`, quintic blend in between.
pub fn cutoff_w(x: [f64; 2]) -> f64 {
    let r = x[0].hypot(x[1]);
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        smoothstep(2.0 * (1.0 - r))
    }
}

/// `c(x) = 1 + w(x) (0.1 cos 2πx₁ + 0.05 sin 2πx₂)`
pub fn sound_speed_value(x: [f64; 2]) -> f64 {
    1.0 + cutoff_w(x) * (0.1 * (TAU * x[0]).cos() + 0.05 * (TAU * x[1]).sin())
}

pub fn sound_speed_nontrapping(grid: &Grid) -> ScalarField {
    grid.sample(sound_speed_value)
}

/// `a (1 - |x - x₀|²/ρ²)₊^k`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
    pub exponent: u32,
}

impl Bump {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let s = ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2))
            / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - s).powi(self.exponent as i32)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub bumps: Vec<Bump>,
}

impl Default for PhantomSpec {
    /// Three smooth bumps inside `B_0.7`, all above the chord `y = -1/2`.
    fn default() -> Self {
        let bump = |cx, cy, radius, amplitude| Bump {
            center: [cx, cy],
            radius,
            amplitude,
            exponent: 4,
        };
        Self {
            bumps: vec![
                bump(-0.3, 0.2, 0.25, 1.0),
                bump(0.3, 0.25, 0.2, 0.75),
                bump(0.0, -0.15, 0.2, 0.5),
            ],
        }
    }
}

impl PhantomSpec {
    pub fn empty() -> Self {
        Self { bumps: Vec::new() }
    }

    /// Checks that every bump lies inside `B_{0.9R}`.
    pub fn validate(&self, r: f64) -> Result<()> {
        for (i, b) in self.bumps.iter().enumerate() {
            if !(b.radius > 0.0 && b.radius.is_finite() && b.amplitude.is_finite()) {
                return Err(Error::Validation(format!(
                    "bump {i} has invalid radius or amplitude"
                )));
            }
            if b.center[0].hypot(b.center[1]) + b.radius > 0.9 * r {
                return Err(Error::Validation(format!(
                    "bump {i} escapes the disc of radius {}",
                    0.9 * r
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.bumps.iter().map(|b| b.value(x)).sum()
    }
}

pub fn make_phantom(spec: &PhantomSpec, grid: &Grid) -> Result<ScalarField> {
    spec.validate(grid.radius())?;
    Ok(grid.sample(|x| spec.value(x)))
}

/// How the fine boundary trace is transferred to the coarse measurement nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    /// Bilinear interpolation of the fine field at the coarse node positions.
    #[default]
    Bilinear,
    /// The fine boundary node closest to each coarse node.
    NearestBoundary,
}

impl FromStr for Resampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(Self::Bilinear),
            "nearest" | "nearest-boundary" => Ok(Self::NearestBoundary),
            other => Err(Error::config(
                "resampling",
                format!("expected bilinear or nearest, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Resampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bilinear => "bilinear",
            Self::NearestBoundary => "nearest",
        })
    }
}

/// Simulates `p(x_b, t_j)` at the coarse measurement nodes by solving on `fine`
/// with `f` and `c` sampled there, then interpolating linearly in time.
pub fn simulate_data(
    f: impl Fn([f64; 2]) -> f64,
    c: impl Fn([f64; 2]) -> f64,
    coarse: &Grid,
    fine: &Grid,
    measurement: &IndexSet,
    rule: Resampling,
) -> Result<BoundaryTrace> {
    if (coarse.radius() - fine.radius()).abs() > 1e-12 * coarse.radius()
        || (coarse.final_time() - fine.final_time()).abs() > 1e-12 * coarse.final_time()
    {
        return Err(Error::Geometry(
            "coarse and fine grids must share R and T".into(),
        ));
    }
    let samplers = match rule {
        Resampling::Bilinear => measurement
            .iter()
            .map(|[a, b]| {
                Sampler::bilinear(fine, coarse.coord(a, b)).ok_or_else(|| {
                    Error::Geometry(format!("node {:?} is outside the fine grid", [a, b]))
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Resampling::NearestBoundary => {
            let fine_dom = Domain::new(*fine);
            let fb = &fine_dom.boundary;
            measurement
                .iter()
                .map(|[a, b]| {
                    let x = coarse.coord(a, b);
                    let (k, d) = fb
                        .coords()
                        .iter()
                        .enumerate()
                        .map(|(k, y)| (k, (x[0] - y[0]).hypot(x[1] - y[1])))
                        .min_by(|p, q| p.1.total_cmp(&q.1))
                        .ok_or_else(|| Error::Geometry("fine boundary is empty".into()))?;
                    if d > fine.hx() {
                        return Err(Error::Geometry(format!(
                            "no fine boundary node within h_x of {x:?} (closest {d})"
                        )));
                    }
                    Ok(Sampler::node(fb.indices().as_slice()[k]))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let ff = fine.sample(&f);
    let cf = fine.sample(&c);
    let solver = WaveSolver::new(fine, &cf)?;
    let mut rec = WaveRecorder::new(fine.steps()).with_samplers(samplers);
    solver.solve_ivp(&ff, &mut rec)?;
    let fine_trace = rec.trace();

    let nt = coarse.steps() + 1;
    let ntf = fine.steps() + 1;
    let mut values = vec![0.0; measurement.len() * nt];
    for b in 0..measurement.len() {
        let row = &fine_trace[b * ntf..(b + 1) * ntf];
        for j in 0..nt {
            let u = coarse.time(j) / fine.ht();
            let i = (u.floor() as usize).min(ntf - 2);
            let w = (u - i as f64).clamp(0.0, 1.0);
            values[b * nt + j] = (1.0 - w) * row[i] + w * row[i + 1];
        }
    }
    BoundaryTrace::new(measurement.clone(), nt, coarse.ht(), values)
}

/// Normalization of the noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseConvention {
    /// `σ = level ‖g‖ / √|Γ|`, so the noise norm is about `level ‖g‖`.
    #[default]
    RelativeNorm,
    /// `σ = level ‖g‖` per sample.
    PerSample,
}

impl FromStr for NoiseConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relative" | "relative-norm" | "relativenorm" => Ok(Self::RelativeNorm),
            "per-sample" | "persample" | "sample" => Ok(Self::PerSample),
            other => Err(Error::config(
                "noise_convention",
                format!("unknown convention `{other}`"),
            )),
        }
    }
}

impl fmt::Display for NoiseConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RelativeNorm => "relative",
            Self::PerSample => "per-sample",
        })
    }
}

/// `(Σ_{b,j} g[b,j]² h_x h_t)^{1/2}`
pub fn trace_norm(g: &BoundaryTrace, hx: f64) -> f64 {
    (g.values().iter().map(|v| v * v).sum::<f64>() * hx * g.ht()).sqrt()
}

/// Adds seeded Gaussian noise and returns the noisy trace with the realized
/// error `‖g^δ - g‖`.
pub fn add_noise(
    g: &BoundaryTrace,
    level: f64,
    seed: u64,
    convention: NoiseConvention,
    hx: f64,
) -> Result<(BoundaryTrace, f64)> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::config("noise", format!("must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok((g.clone(), 0.0));
    }
    let norm = trace_norm(g, hx);
    let measure = g.values().len() as f64 * hx * g.ht();
    let sigma = match convention {
        NoiseConvention::RelativeNorm => level * norm / measure.sqrt(),
        NoiseConvention::PerSample => level * norm,
    };
    let mut out = g.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.values_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let delta = (out
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        * hx
        * g.ht())
    .sqrt();
    Ok((out, delta))
}

/// Unweighted `(Σ |f_n - f|² h_x², Σ |g_n - g|² h_x h_t)`.
pub fn metrics(
    f_n: &ScalarField,
    f_true: &ScalarField,
    g_n: &BoundaryTrace,
    g: &BoundaryTrace,
) -> Result<(f64, f64)> {
    f_n.ensure_same_shape(f_true)?;
    g_n.ensure_compatible(g)?;
    let hx = f_n.step();
    Ok((field_error_sq(f_n, f_true), residual_sq(g_n, g, hx)))
}

fn field_error_sq(a: &ScalarField, b: &ScalarField) -> f64 {
    let h = a.step();
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        * h
        * h
}

fn residual_sq(a: &BoundaryTrace, b: &BoundaryTrace, hx: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        * hx
        * a.ht()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestCase {
    /// Complete data.
    #[default]
    T1,
    /// Partial data, visible phantom.
    T2,
    /// Partial data, invisible phantom.
    T3,
}

impl TestCase {
    pub fn default_opening(self) -> f64 {
        match self {
            TestCase::T1 => TAU,
            TestCase::T2 => 4.0 * PI / 3.0,
            TestCase::T3 => 2.0 * PI / 3.0,
        }
    }
}

impl FromStr for TestCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(TestCase::T1),
            "t2" => Ok(TestCase::T2),
            "t3" => Ok(TestCase::T3),
            other => Err(Error::config(
                "testcase",
                format!("expected t1, t2 or t3, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestCase::T1 => "t1",
            TestCase::T2 => "t2",
            TestCase::T3 => "t3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Landweber,
    Nesterov,
    #[default]
    Cg,
    TimeReversal,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Landweber,
        Method::Nesterov,
        Method::Cg,
        Method::TimeReversal,
    ];
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "landweber" => Ok(Method::Landweber),
            "nesterov" => Ok(Method::Nesterov),
            "cg" => Ok(Method::Cg),
            "timereversal" | "time-reversal" | "neumann" => Ok(Method::TimeReversal),
            other => Err(Error::config(
                "method",
                format!("expected landweber, nesterov, cg or timereversal, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Landweber => "landweber",
            Method::Nesterov => "nesterov",
            Method::Cg => "cg",
            Method::TimeReversal => "timereversal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WindowKind {
    #[default]
    Indicator,
    /// Indicator tapered over `ramp` radians at the arc ends.
    Smoothed { ramp: f64 },
}

/// Every parameter of a test-case run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub testcase: TestCase,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub t: f64,
    pub r: f64,
    /// Simulate the data on a finer grid.
    pub fine_data: bool,
    pub n_fine: usize,
    pub m_fine: usize,
    pub resampling: Resampling,
    pub noise: f64,
    pub noise_convention: NoiseConvention,
    /// Overrides the test case's default opening.
    pub arc_opening: Option<f64>,
    pub arc_center: f64,
    pub window: WindowKind,
    /// Radius of the reconstruction support `Ω₀` as a fraction of `R`; 1 keeps the whole disc.
    pub support_radius: f64,
    /// Adjoint used by the gradient methods.
    pub adjoint: AdjointScheme,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Stop by the discrepancy principle with the realized data error.
    pub discrepancy: bool,
    pub phantom: PhantomSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            testcase: TestCase::T1,
            method: Method::Cg,
            n: 200,
            m: 800,
            t: 1.5,
            r: 1.0,
            fine_data: false,
            n_fine: 350,
            m_fine: 1300,
            resampling: Resampling::Bilinear,
            noise: 0.0,
            noise_convention: NoiseConvention::RelativeNorm,
            arc_opening: None,
            arc_center: DEFAULT_ARC_CENTER,
            window: WindowKind::Indicator,
            support_radius: 0.9,
            adjoint: AdjointScheme::Transpose,
            seed: 0,
            solver: SolverConfig::default(),
            discrepancy: false,
            phantom: PhantomSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Sets `N`, `M` and the fine grid at the usual ratios 7/4 and 13/8.
    pub fn with_resolution(mut self, n: usize, m: usize) -> Self {
        self.n = n;
        self.m = m;
        self.n_fine = (7 * n).div_ceil(4);
        self.m_fine = (13 * m).div_ceil(8);
        self
    }

    pub fn opening(&self) -> f64 {
        self.arc_opening.unwrap_or(self.testcase.default_opening())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.n < 4 {
            return Err(Error::config("N", format!("must be >= 4, got {}", self.n)));
        }
        if self.m < 2 {
            return Err(Error::config("M", format!("must be >= 2, got {}", self.m)));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::config("T", format!("must be > 0, got {}", self.t)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::config("R", format!("must be > 0, got {}", self.r)));
        }
        if self.fine_data && (self.n_fine <= self.n || self.m_fine <= self.m) {
            return Err(Error::config(
                "N_fine",
                format!(
                    "fine grid {}/{} must exceed the coarse grid {}/{}",
                    self.n_fine, self.m_fine, self.n, self.m
                ),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config(
                "noise",
                format!("must be >= 0, got {}", self.noise),
            ));
        }
        let opening = self.opening();
        if !(opening > 0.0 && opening <= TAU) {
            return Err(Error::config(
                "arc_opening",
                format!("must lie in (0, 2π], got {opening}"),
            ));
        }
        if !self.arc_center.is_finite() {
            return Err(Error::config("arc_center", "must be finite"));
        }
        if !(self.support_radius > 0.0 && self.support_radius <= 1.0) {
            return Err(Error::config(
                "support_radius",
                format!("must lie in (0, 1], got {}", self.support_radius),
            ));
        }
        if let WindowKind::Smoothed { ramp } = self.window {
            if !(ramp >= 0.0 && ramp.is_finite()) {
                return Err(Error::config(
                    "window_ramp",
                    format!("must be >= 0, got {ramp}"),
                ));
            }
        }
        self.phantom.validate(self.r)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.r, self.m, self.t)
    }

    pub fn fine_grid(&self) -> Result<Grid> {
        Grid::new(self.n_fine, self.r, self.m_fine, self.t)
    }
}

/// Builds the operator of a configuration: nontrapping speed, arc, window.
pub fn build_operator(cfg: &ExperimentConfig) -> Result<PatOperator> {
    let grid = cfg.grid()?;
    let domain = Domain::new(grid);
    let measurement = domain.arc(cfg.opening(), cfg.arc_center)?;
    let window = match cfg.window {
        WindowKind::Indicator => Window::ones(measurement.len()),
        WindowKind::Smoothed { ramp } => {
            let angles: Vec<f64> = measurement
                .iter()
                .map(|i| {
                    domain
                        .boundary
                        .angle_of(i)
                        .expect("arc nodes lie on the boundary")
                })
                .collect();
            Window::smoothed_arc(&angles, cfg.opening(), cfg.arc_center, ramp)
        }
    };
    let c = sound_speed_nontrapping(&grid);
    let support = support_mask(&domain, cfg.support_radius);
    Ok(PatOperator::new(domain, c, measurement, window)?
        .with_support(support)?
        .with_adjoint_scheme(cfg.adjoint))
}

/// Nodes of `Ω_N` with `|x| < ρ R`.
pub fn support_mask(domain: &Domain, rho: f64) -> Vec<bool> {
    let grid = domain.grid;
    let limit = rho * grid.radius();
    let mut mask = domain.interior_mask();
    let n1 = grid.nodes();
    for (k, m) in mask.iter_mut().enumerate() {
        let [x, y] = grid.coord(k / n1, k % n1);
        if x.hypot(y) >= limit {
            *m = false;
        }
    }
    mask
}

/// Data of a run together with the quantities needed to judge it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub phantom: ScalarField,
    /// Data before noise (fine-grid simulated or coarse forward).
    pub clean: BoundaryTrace,
    pub noisy: BoundaryTrace,
    /// `‖g^δ - g‖` of the added noise.
    pub noise_norm: f64,
    /// `‖L f - g^δ‖` with the coarse operator.
    pub data_error: f64,
    pub data_norm: f64,
}

pub fn generate_data(cfg: &ExperimentConfig, op: &PatOperator) -> Result<SimulatedData> {
    let grid = *op.grid();
    let phantom = make_phantom(&cfg.phantom, &grid)?;
    let coarse = op.forward(&phantom)?;
    let clean = if cfg.fine_data {
        simulate_data(
            |x| cfg.phantom.value(x),
            sound_speed_value,
            &grid,
            &cfg.fine_grid()?,
            op.measurement(),
            cfg.resampling,
        )?
    } else {
        coarse.clone()
    };
    let (noisy, noise_norm) =
        add_noise(&clean, cfg.noise, cfg.seed, cfg.noise_convention, grid.hx())?;
    let data_error = residual_sq(&coarse, &noisy, grid.hx()).sqrt();
    let data_norm = trace_norm(&clean, grid.hx());
    Ok(SimulatedData {
        phantom,
        clean,
        noisy,
        noise_norm,
        data_error,
        data_norm,
    })
}

/// Per-iteration callback receiving the record and the current iterate.
pub type IterationSink<'a> = &'a mut dyn FnMut(&IterationRecord, &ScalarField) -> Result<()>;

/// Runs one reconstruction with unweighted error and residual logging.
pub fn reconstruct(
    op: &PatOperator,
    method: Method,
    data: &BoundaryTrace,
    truth: Option<&ScalarField>,
    solver: &SolverConfig,
    sink: Option<IterationSink<'_>>,
) -> Result<(ScalarField, IterationLog, Termination)> {
    let hx = op.grid().hx();
    let mut monitor = Monitor::new().with_residual(move |r: &BoundaryTrace| {
        r.values().iter().map(|v| v * v).sum::<f64>() * hx * r.ht()
    });
    if let Some(t) = truth {
        monitor = monitor.with_error(move |x: &ScalarField| field_error_sq(x, t));
    }
    if let Some(s) = sink {
        monitor = monitor.with_sink(s);
    }
    let x0 = op.zero_field();
    let rec = match method {
        Method::Landweber => landweber(op, data, &x0, solver, &mut monitor)?,
        Method::Nesterov => nesterov(op, data, &x0, solver, &mut monitor)?,
        Method::Cg => cg_normal(op, data, &x0, solver, &mut monitor)?,
        Method::TimeReversal => {
            neumann_series(op, |r| op.time_reversal(r), data, &x0, solver, &mut monitor)?
        }
    };
    Ok((rec.x, rec.log, rec.termination))
}

#[derive(Debug, Clone)]
pub struct TestcaseOutput {
    pub reconstruction: ScalarField,
    pub log: IterationLog,
    pub termination: Termination,
    pub data: SimulatedData,
}

/// Phantom, data, noise and the configured solver in one call.
pub fn run_testcase(
    cfg: &ExperimentConfig,
    sink: Option<IterationSink<'_>>,
) -> Result<TestcaseOutput> {
    cfg.validate()?;
    let op = build_operator(cfg)?;
    let data = generate_data(cfg, &op)?;
    let mut solver = cfg.solver;
    if cfg.discrepancy {
        solver.delta = data.data_error;
    }
    let (reconstruction, log, termination) = reconstruct(
        &op,
        cfg.method,
        &data.noisy,
        Some(&data.phantom),
        &solver,
        sink,
    )?;
    Ok(TestcaseOutput {
        reconstruction,
        log,
        termination,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_w([0.25, 0.0]), 1.0);
        assert_eq!(cutoff_w([1.5, 0.0]), 0.0);
        assert!((cutoff_w([0.0, 0.75]) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let w = cutoff_w([0.5 + 0.005 * k as f64, 0.0]);
            assert!(w <= prev);
            prev = w;
        }
    }

    #[test]
    fn sound_speed_examples() {
        assert!((sound_speed_value([0.0, 0.0]) - 1.1).abs() < 1e-15);
        assert_eq!(sound_speed_value([1.0, 0.0]), 1.0);
        assert_eq!(sound_speed_value([0.8, -0.9]), 1.0);
        let grid = Grid::new(200, 1.0, 10, 1.0).unwrap();
        let c = sound_speed_nontrapping(&grid);
        assert!((c.max() - 1.15).abs() < 1e-12);
        assert!((c.get(100, 125) - 1.15).abs() < 1e-12);
        assert!(c.min() >= 0.85);
    }

    #[test]
    fn phantom_examples() {
        let grid = Grid::new(40, 1.0, 10, 1.0).unwrap();
        assert_eq!(
            make_phantom(&PhantomSpec::empty(), &grid)
                .unwrap()
                .max_abs(),
            0.0
        );
        let one = Bump {
            center: [0.0, 0.0],
            radius: 0.3,
            amplitude: 1.0,
            exponent: 3,
        };
        let p = make_phantom(&PhantomSpec { bumps: vec![one] }, &grid).unwrap();
        assert_eq!(p.get(20, 20), 1.0);
        assert_eq!(p.max(), 1.0);

        let a = Bump {
            center: [-0.4, 0.0],
            radius: 0.2,
            amplitude: 1.0,
            exponent: 2,
        };
        let b = Bump {
            center: [0.4, 0.1],
            radius: 0.2,
            amplitude: -0.5,
            exponent: 2,
        };
        let pa = make_phantom(&PhantomSpec { bumps: vec![a] }, &grid).unwrap();
        let pb = make_phantom(&PhantomSpec { bumps: vec![b] }, &grid).unwrap();
        let pab = make_phantom(&PhantomSpec { bumps: vec![a, b] }, &grid).unwrap();
        for k in 0..pab.len() {
            assert_eq!(pab.as_slice()[k], pa.as_slice()[k] + pb.as_slice()[k]);
        }

        let outside = Bump {
            center: [0.7, 0.0],
            radius: 0.3,
            amplitude: 1.0,
            exponent: 2,
        };
        assert!(make_phantom(
            &PhantomSpec {
                bumps: vec![outside]
            },
            &grid
        )
        .is_err());
        assert!(PhantomSpec::default().validate(1.0).is_ok());
        for b in PhantomSpec::default().bumps {
            assert!(b.center[0].hypot(b.center[1]) + b.radius <= 0.7);
            assert!(b.center[1] - b.radius > -0.5);
        }
    }

    fn small_trace(seed: u64) -> BoundaryTrace {
        let grid = Grid::new(16, 1.0, 20, 1.0).unwrap();
        let dom = Domain::new(grid);
        let idx = dom.boundary.indices().clone();
        let nb = idx.len();
        let vals = (0..nb * 21)
            .map(|k| ((k as f64) * 0.37 + seed as f64).sin())
            .collect();
        BoundaryTrace::new(idx, 21, grid.ht(), vals).unwrap()
    }

    #[test]
    fn noise_contract() {
        let g = small_trace(0);
        let hx = 2.0 / 16.0;
        let (same, d) = add_noise(&g, 0.0, 7, NoiseConvention::RelativeNorm, hx).unwrap();
        assert_eq!(same, g);
        assert_eq!(d, 0.0);
        let (a, da) = add_noise(&g, 0.05, 7, NoiseConvention::RelativeNorm, hx).unwrap();
        let (b, db) = add_noise(&g, 0.05, 7, NoiseConvention::RelativeNorm, hx).unwrap();
        assert_eq!(a, b);
        assert_eq!(da.to_bits(), db.to_bits());
        let ratio = da / trace_norm(&g, hx);
        assert!((0.03..=0.08).contains(&ratio), "{ratio}");
        let (c, _) = add_noise(&g, 0.05, 8, NoiseConvention::RelativeNorm, hx).unwrap();
        assert_ne!(a, c);
        let (_, dp) = add_noise(&g, 0.05, 7, NoiseConvention::PerSample, hx).unwrap();
        let measure = g.values().len() as f64 * hx * g.ht();
        assert!((dp / da - measure.sqrt()).abs() < 1e-9 * dp / da);
        assert!(add_noise(&g, -0.1, 0, NoiseConvention::RelativeNorm, hx).is_err());
    }

    #[test]
    fn metric_examples() {
        let a = ScalarField::zeros(4, 4, 0.5);
        let mut b = a.clone();
        for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            b.set(i, j, 1.0);
        }
        let g = small_trace(1);
        let (e0, r0) = metrics(&a, &a, &g, &g).unwrap();
        assert_eq!((e0, r0), (0.0, 0.0));
        let (e, _) = metrics(&a, &b, &g, &g).unwrap();
        assert!((e - 1.0).abs() < 1e-15);

        // residual uses the spatial step of the fields
        let f = ScalarField::zeros(17, 17, 0.125);
        let z = g.map_values(|_| 0.0);
        let (_, r1) = metrics(&f, &f, &g, &z).unwrap();
        let (_, r3) = metrics(&f, &f, &g.map_values(|v| 3.0 * v), &z).unwrap();
        assert!((r3 - 9.0 * r1).abs() < 1e-12 * r3);

        let ops = crate::operators::InnerProducts::new(
            &ScalarField::filled(17, 17, 0.125, 1.0),
            Window::ones(g.boundary_count()),
            0.125,
            g.ht(),
        );
        assert!((ops.y_inner(&g, &g).unwrap() - r1).abs() < 1e-12 * r1);
    }

    #[test]
    fn parse_names() {
        assert_eq!("T2".parse::<TestCase>().unwrap(), TestCase::T2);
        assert_eq!("neumann".parse::<Method>().unwrap(), Method::TimeReversal);
        assert!("t4".parse::<TestCase>().is_err());
        assert!("sgd".parse::<Method>().is_err());
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        for r in [Resampling::Bilinear, Resampling::NearestBoundary] {
            assert_eq!(r.to_string().parse::<Resampling>().unwrap(), r);
        }
        assert!("cubic".parse::<Resampling>().is_err());
        assert!((TestCase::T2.default_opening() - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((TestCase::T3.default_opening() - 2.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn resolution_ratios() {
        let cfg = ExperimentConfig::default().with_resolution(200, 800);
        assert_eq!((cfg.n_fine, cfg.m_fine), (350, 1300));
        let cfg = ExperimentConfig::default().with_resolution(100, 400);
        assert_eq!((cfg.n_fine, cfg.m_fine), (175, 650));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            fine_data: true,
            n_fine: 100,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            arc_opening: Some(7.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            noise: -0.01,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "noise"));
    }

    proptest::proptest! {
        #[test]
        fn noise_is_seeded_and_linear_in_level(seed in 0u64..1000, level in 0.001f64..0.5) {
            let g = small_trace(3);
            let hx = 0.125;
            let (a, da) = add_noise(&g, level, seed, NoiseConvention::RelativeNorm, hx).unwrap();
            let (b, db) = add_noise(&g, level, seed, NoiseConvention::RelativeNorm, hx).unwrap();
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert_eq!(da.to_bits(), db.to_bits());
            let (_, d2) = add_noise(&g, 2.0 * level, seed, NoiseConvention::RelativeNorm, hx).unwrap();
            proptest::prop_assert!((d2 - 2.0 * da).abs() <= 1e-9 * d2);
        }
    }
}
