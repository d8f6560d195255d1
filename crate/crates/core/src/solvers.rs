//! Iterative reconstruction drivers: Landweber, Nesterov's fast gradient,
//! CG on the normal equation, and the Neumann series (iterative time reversal).
//!
//! Every driver keeps `T x_k` up to date by linearity, so one iteration costs
//! one forward and one adjoint (or time-reversal) application and the residual
//! of every iterate is known without extra solves.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{LinearOperator, Vector};

/// Parameters shared by the drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Landweber relaxation.
    pub gamma: f64,
    /// Nesterov Lipschitz constant; the gradient step is `1 / lipschitz`.
    pub lipschitz: f64,
    /// Strong-convexity parameter.
    pub mu: f64,
    /// Initial Nesterov momentum parameter.
    pub alpha0: f64,
    pub max_iter: usize,
    /// Discrepancy factor.
    pub tau: f64,
    /// Data error level; 0 disables the discrepancy stop.
    pub delta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lipschitz: 1.0,
            mu: 0.0,
            alpha0: 0.9,
            max_iter: 10,
            tau: 1.0,
            delta: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite, got {v}")))
            }
        };
        for (k, v) in [
            ("gamma", self.gamma),
            ("lipschitz", self.lipschitz),
            ("mu", self.mu),
            ("alpha0", self.alpha0),
            ("tau", self.tau),
            ("delta", self.delta),
        ] {
            finite(k, v)?;
        }
        if self.gamma <= 0.0 {
            return Err(Error::config(
                "gamma",
                format!("must be > 0, got {}", self.gamma),
            ));
        }
        if self.lipschitz <= 0.0 {
            return Err(Error::config(
                "lipschitz",
                format!("must be > 0, got {}", self.lipschitz),
            ));
        }
        if self.mu < 0.0 || self.mu > self.lipschitz {
            return Err(Error::config(
                "mu",
                format!("must lie in [0, {}], got {}", self.lipschitz, self.mu),
            ));
        }
        let lo = (self.mu / self.lipschitz).sqrt();
        if !(self.alpha0 >= lo && self.alpha0 < 1.0) {
            return Err(Error::config(
                "alpha0",
                format!("must lie in [{lo}, 1), got {}", self.alpha0),
            ));
        }
        if self.tau < 1.0 {
            return Err(Error::config(
                "tau",
                format!("must be >= 1, got {}", self.tau),
            ));
        }
        if self.delta < 0.0 {
            return Err(Error::config(
                "delta",
                format!("must be >= 0, got {}", self.delta),
            ));
        }
        Ok(())
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Squared reconstruction error, when a ground truth is known.
    pub err_sq: Option<f64>,
    pub res_sq: f64,
    /// Wall time since the driver started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLog {
    records: Vec<IterationRecord>,
}

impl IterationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rec: IterationRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.iter <= last.iter {
                return Err(Error::Validation(format!(
                    "log index {} does not follow {}",
                    rec.iter, last.iter
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn get(&self, iter: usize) -> Option<&IterationRecord> {
        self.records.iter().find(|r| r.iter == iter)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.res_sq).collect()
    }

    /// Squared errors; `NaN` where unknown.
    pub fn errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.err_sq.unwrap_or(f64::NAN))
            .collect()
    }
}

/// Why a driver returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIter,
    Discrepancy,
    /// CG breakdown: the search direction no longer reduces the residual.
    Stagnation,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::MaxIter => "max-iter",
            Termination::Discrepancy => "discrepancy",
            Termination::Stagnation => "stagnation",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction<D> {
    pub x: D,
    pub log: IterationLog,
    pub termination: Termination,
}

type ErrorFn<'a, D> = Box<dyn Fn(&D) -> f64 + 'a>;
type ResidualFn<'a, R> = Box<dyn Fn(&R) -> f64 + 'a>;
type Sink<'a, D> = Box<dyn FnMut(&IterationRecord, &D) -> Result<()> + 'a>;

/// Per-iteration metrics and an optional callback receiving each record and iterate.
///
/// Without overrides the residual is measured in the operator's range norm and
/// no error is logged.
pub struct Monitor<'a, D, R> {
    error: Option<ErrorFn<'a, D>>,
    residual: Option<ResidualFn<'a, R>>,
    sink: Option<Sink<'a, D>>,
}

impl<D, R> Default for Monitor<'_, D, R> {
    fn default() -> Self {
        Self {
            error: None,
            residual: None,
            sink: None,
        }
    }
}

impl<'a, D: Vector + 'a, R: Vector + 'a> Monitor<'a, D, R> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Logs the squared domain-norm distance to `truth`.
    pub fn with_truth<Op>(mut self, op: &'a Op, truth: &'a D) -> Self
    where
        Op: LinearOperator<Domain = D, Range = R>,
    {
        self.error = Some(Box::new(move |x: &D| {
            let mut d = x.clone();
            d.axpy(-1.0, truth);
            op.domain_norm_sq(&d)
        }));
        self
    }

    /// Custom squared-error metric.
    pub fn with_error(mut self, f: impl Fn(&D) -> f64 + 'a) -> Self {
        self.error = Some(Box::new(f));
        self
    }

    /// Custom squared-residual metric, applied to `y - T x_k`.
    pub fn with_residual(mut self, f: impl Fn(&R) -> f64 + 'a) -> Self {
        self.residual = Some(Box::new(f));
        self
    }

    pub fn with_sink(mut self, f: impl FnMut(&IterationRecord, &D) -> Result<()> + 'a) -> Self {
        self.sink = Some(Box::new(f));
        self
    }
}

/// True iff `δ > 0` and `residual_norm ≤ τ δ`.
pub fn discrepancy_stop(residual_norm: f64, delta: f64, tau: f64) -> bool {
    delta > 0.0 && residual_norm <= tau * delta
}

/// The root in `(0, 1]` of `α² + (α_k² - q) α - α_k² = 0`.
pub fn nesterov_alpha_step(alpha_k: f64, q: f64) -> Result<f64> {
    if !(alpha_k > 0.0 && alpha_k < 1.0) {
        return Err(Error::Validation(format!(
            "alpha_k must lie in (0, 1), got {alpha_k}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Validation(format!("q must lie in [0, 1], got {q}")));
    }
    let a2 = alpha_k * alpha_k;
    let b = a2 - q;
    // product of roots is -α_k² < 0, so exactly one root is positive
    let disc = (b * b + 4.0 * a2).sqrt();
    let root = if b >= 0.0 {
        2.0 * a2 / (b + disc)
    } else {
        0.5 * (disc - b)
    };
    Ok(root)
}

/// Shared bookkeeping: timing, metrics, discrepancy stop, divergence checks.
struct Tracker<'m, 'a, Op: LinearOperator> {
    op: &'m Op,
    monitor: &'m mut Monitor<'a, Op::Domain, Op::Range>,
    log: IterationLog,
    start: Instant,
    delta: f64,
    tau: f64,
}

impl<'m, 'a, Op: LinearOperator> Tracker<'m, 'a, Op> {
    fn new(
        op: &'m Op,
        monitor: &'m mut Monitor<'a, Op::Domain, Op::Range>,
        cfg: &SolverConfig,
    ) -> Self {
        Self {
            op,
            monitor,
            log: IterationLog::new(),
            start: Instant::now(),
            delta: cfg.delta,
            tau: cfg.tau,
        }
    }

    /// Records iterate `k` with residual `r = ±(T x - y)`; returns true on a discrepancy stop.
    fn record(&mut self, k: usize, x: &Op::Domain, r: &Op::Range) -> Result<bool> {
        if !x.all_finite() {
            return Err(Error::Divergence {
                iteration: k,
                what: "iterate",
            });
        }
        let res_sq = match &self.monitor.residual {
            Some(f) => f(r),
            None => self.op.range_norm_sq(r),
        };
        if !res_sq.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                what: "residual",
            });
        }
        let err_sq = self.monitor.error.as_ref().map(|f| f(x));
        let rec = IterationRecord {
            iter: k,
            err_sq,
            res_sq,
            seconds: self.start.elapsed().as_secs_f64(),
        };
        log::debug!("k = {k}: res^2 = {res_sq:e}, err^2 = {err_sq:?}");
        self.log.push(rec)?;
        if let Some(sink) = self.monitor.sink.as_mut() {
            sink(&rec, x)?;
        }
        Ok(discrepancy_stop(res_sq.sqrt(), self.delta, self.tau))
    }

    fn finish(self, x: Op::Domain, termination: Termination) -> Reconstruction<Op::Domain> {
        Reconstruction {
            x,
            log: self.log,
            termination,
        }
    }
}

/// `y - T x0`, skipping the forward solve when `x0 = 0`.
fn initial_residual<Op: LinearOperator>(
    op: &Op,
    y: &Op::Range,
    x0: &Op::Domain,
) -> Result<Op::Range> {
    let mut r = y.clone();
    if x0.as_slice().iter().any(|v| *v != 0.0) {
        let tx = op.apply(x0)?;
        r.axpy(-1.0, &tx);
    }
    Ok(r)
}

/// Landweber iteration `x_{k+1} = x_k - γ T*(T x_k - y)`.
pub fn landweber<'a, Op: LinearOperator>(
    op: &Op,
    y: &Op::Range,
    x0: &Op::Domain,
    cfg: &SolverConfig,
    monitor: &mut Monitor<'a, Op::Domain, Op::Range>,
) -> Result<Reconstruction<Op::Domain>> {
    cfg.validate()?;
    let mut tr = Tracker::new(op, monitor, cfg);
    let mut x = x0.clone();
    // r = y - T x
    let mut r = initial_residual(op, y, &x)?;
    if tr.record(0, &x, &r)? {
        return Ok(tr.finish(x, Termination::Discrepancy));
    }
    for k in 1..=cfg.max_iter {
        let grad = op.apply_adjoint(&r)?;
        let tg = op.apply(&grad)?;
        x.axpy(cfg.gamma, &grad);
        r.axpy(-cfg.gamma, &tg);
        if tr.record(k, &x, &r)? {
            return Ok(tr.finish(x, Termination::Discrepancy));
        }
    }
    Ok(tr.finish(x, Termination::MaxIter))
}

/// Nesterov's fast gradient method with constant step `1/L`.
pub fn nesterov<'a, Op: LinearOperator>(
    op: &Op,
    y: &Op::Range,
    x0: &Op::Domain,
    cfg: &SolverConfig,
    monitor: &mut Monitor<'a, Op::Domain, Op::Range>,
) -> Result<Reconstruction<Op::Domain>> {
    cfg.validate()?;
    let q = cfg.mu / cfg.lipschitz;
    let step = 1.0 / cfg.lipschitz;
    let mut tr = Tracker::new(op, monitor, cfg);
    let mut x = x0.clone();
    let mut z = x0.clone();
    // residuals y - T x and y - T z
    let mut rx = initial_residual(op, y, &x)?;
    let mut rz = rx.clone();
    let mut alpha = cfg.alpha0;
    if tr.record(0, &x, &rx)? {
        return Ok(tr.finish(x, Termination::Discrepancy));
    }
    for k in 1..=cfg.max_iter {
        let grad = op.apply_adjoint(&rz)?;
        let tg = op.apply(&grad)?;
        let mut x_next = z;
        x_next.axpy(step, &grad);
        let mut rx_next = rz;
        rx_next.axpy(-step, &tg);

        let alpha_next = nesterov_alpha_step(alpha, q)?;
        let beta = alpha * (1.0 - alpha) / (alpha * alpha + alpha_next);
        alpha = alpha_next;

        z = x_next.clone();
        z.scale(1.0 + beta);
        z.axpy(-beta, &x);
        rz = rx_next.clone();
        rz.scale(1.0 + beta);
        rz.axpy(-beta, &rx);

        x = x_next;
        rx = rx_next;
        if tr.record(k, &x, &rx)? {
            return Ok(tr.finish(x, Termination::Discrepancy));
        }
    }
    Ok(tr.finish(x, Termination::MaxIter))
}

/// Conjugate gradients on the normal equation `T* T x = T* y` (CGLS form).
pub fn cg_normal<'a, Op: LinearOperator>(
    op: &Op,
    y: &Op::Range,
    x0: &Op::Domain,
    cfg: &SolverConfig,
    monitor: &mut Monitor<'a, Op::Domain, Op::Range>,
) -> Result<Reconstruction<Op::Domain>> {
    cfg.validate()?;
    let mut tr = Tracker::new(op, monitor, cfg);
    let mut x = x0.clone();
    let mut r = initial_residual(op, y, &x)?;
    if tr.record(0, &x, &r)? {
        return Ok(tr.finish(x, Termination::Discrepancy));
    }
    let mut s = op.apply_adjoint(&r)?;
    let mut s_norm = op.domain_norm_sq(&s);
    let s0_norm = s_norm;
    let mut d = s.clone();
    for k in 1..=cfg.max_iter {
        if !s_norm.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                what: "gradient norm",
            });
        }
        if s_norm <= f64::EPSILON * f64::EPSILON * s0_norm {
            return Ok(tr.finish(x, Termination::Stagnation));
        }
        let td = op.apply(&d)?;
        let td_norm = op.range_norm_sq(&td);
        if !td_norm.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                what: "search direction image",
            });
        }
        if td_norm <= f64::MIN_POSITIVE {
            return Ok(tr.finish(x, Termination::Stagnation));
        }
        let alpha = s_norm / td_norm;
        x.axpy(alpha, &d);
        r.axpy(-alpha, &td);
        if tr.record(k, &x, &r)? {
            return Ok(tr.finish(x, Termination::Discrepancy));
        }
        if k == cfg.max_iter {
            break;
        }
        s = op.apply_adjoint(&r)?;
        let s_next = op.domain_norm_sq(&s);
        let beta = s_next / s_norm;
        s_norm = s_next;
        d.scale(beta);
        d.axpy(1.0, &s);
    }
    Ok(tr.finish(x, Termination::MaxIter))
}

/// Neumann series `f_{k+1} = f_k + Λ(y - T f_k)`; with `x0 = 0` the first
/// iterate is `Λ y`.
pub fn neumann_series<'a, Op, Lambda>(
    op: &Op,
    time_reversal: Lambda,
    y: &Op::Range,
    x0: &Op::Domain,
    cfg: &SolverConfig,
    monitor: &mut Monitor<'a, Op::Domain, Op::Range>,
) -> Result<Reconstruction<Op::Domain>>
where
    Op: LinearOperator,
    Lambda: Fn(&Op::Range) -> Result<Op::Domain>,
{
    cfg.validate()?;
    let mut tr = Tracker::new(op, monitor, cfg);
    let mut x = x0.clone();
    let mut r = initial_residual(op, y, &x)?;
    if tr.record(0, &x, &r)? {
        return Ok(tr.finish(x, Termination::Discrepancy));
    }
    for k in 1..=cfg.max_iter {
        let u = time_reversal(&r)?;
        let tu = op.apply(&u)?;
        x.axpy(1.0, &u);
        r.axpy(-1.0, &tu);
        if tr.record(k, &x, &r)? {
            return Ok(tr.finish(x, Termination::Discrepancy));
        }
    }
    Ok(tr.finish(x, Termination::MaxIter))
}
