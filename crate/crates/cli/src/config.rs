//! Flat `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use pat_core::experiments::{ExperimentConfig, WindowKind};
use pat_core::{Error, Result};

/// Ramp used when `window = smoothed` is given without `window_ramp`.
pub const DEFAULT_RAMP: f64 = 0.2;

/// Ordered `(key, value)` assignments; later entries win.
pub type Overrides = Vec<(String, String)>;

/// Parses configuration text into assignments without interpreting them.
pub fn parse_lines(text: &str) -> Result<Overrides> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", no + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_overrides(path: impl AsRef<Path>) -> Result<Overrides> {
    parse_lines(&std::fs::read_to_string(path)?)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected true or false, got `{v}`"),
        )),
    }
}

/// Applies assignments on top of the defaults and validates the result.
pub fn build_config(overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut ramp = None;
    let mut smoothed = false;
    let mut fine_set = false;
    let mut coarse_set = false;
    for (key, v) in overrides {
        let k = key.to_ascii_lowercase();
        match k.as_str() {
            "testcase" => cfg.testcase = value(&k, v)?,
            "method" => cfg.method = value(&k, v)?,
            "n" => {
                cfg.n = value(&k, v)?;
                coarse_set = true;
            }
            "m" => {
                cfg.m = value(&k, v)?;
                coarse_set = true;
            }
            "t" => cfg.t = value(&k, v)?,
            "r" => cfg.r = value(&k, v)?,
            "fine_data" => cfg.fine_data = flag(&k, v)?,
            "n_fine" => {
                cfg.n_fine = value(&k, v)?;
                fine_set = true;
            }
            "m_fine" => {
                cfg.m_fine = value(&k, v)?;
                fine_set = true;
            }
            "resampling" => cfg.resampling = value(&k, v)?,
            "noise" => cfg.noise = value(&k, v)?,
            "noise_convention" => cfg.noise_convention = value(&k, v)?,
            "arc_opening" => cfg.arc_opening = Some(value(&k, v)?),
            "arc_center" => cfg.arc_center = value(&k, v)?,
            "window" => {
                smoothed = match v.to_ascii_lowercase().as_str() {
                    "indicator" => false,
                    "smoothed" => true,
                    _ => {
                        return Err(Error::config(
                            &k,
                            format!("expected indicator or smoothed, got `{v}`"),
                        ))
                    }
                }
            }
            "window_ramp" => {
                ramp = Some(value(&k, v)?);
                smoothed = true;
            }
            "support_radius" => cfg.support_radius = value(&k, v)?,
            "adjoint" => cfg.adjoint = value(&k, v)?,
            "seed" => cfg.seed = value(&k, v)?,
            "gamma" => cfg.solver.gamma = value(&k, v)?,
            "lipschitz" => cfg.solver.lipschitz = value(&k, v)?,
            "mu" => cfg.solver.mu = value(&k, v)?,
            "alpha0" => cfg.solver.alpha0 = value(&k, v)?,
            "max_iter" | "iters" => cfg.solver.max_iter = value(&k, v)?,
            "tau" => cfg.solver.tau = value(&k, v)?,
            "delta" => cfg.solver.delta = value(&k, v)?,
            "discrepancy" => cfg.discrepancy = flag(&k, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
    }
    if coarse_set && !fine_set {
        cfg = cfg.clone().with_resolution(cfg.n, cfg.m);
    }
    if smoothed {
        cfg.window = WindowKind::Smoothed {
            ramp: ramp.unwrap_or(DEFAULT_RAMP),
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Every resolved parameter, as written to the manifest.
pub fn config_entries(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let (window, ramp) = match cfg.window {
        WindowKind::Indicator => ("indicator", None),
        WindowKind::Smoothed { ramp } => ("smoothed", Some(ramp)),
    };
    let s = &cfg.solver;
    let mut out: BTreeMap<String, String> = [
        ("testcase", cfg.testcase.to_string()),
        ("method", cfg.method.to_string()),
        ("n", cfg.n.to_string()),
        ("m", cfg.m.to_string()),
        ("t", cfg.t.to_string()),
        ("r", cfg.r.to_string()),
        ("fine_data", cfg.fine_data.to_string()),
        ("n_fine", cfg.n_fine.to_string()),
        ("m_fine", cfg.m_fine.to_string()),
        ("resampling", cfg.resampling.to_string()),
        ("noise", cfg.noise.to_string()),
        ("noise_convention", cfg.noise_convention.to_string()),
        ("arc_opening", cfg.opening().to_string()),
        ("arc_center", cfg.arc_center.to_string()),
        ("window", window.to_string()),
        ("support_radius", cfg.support_radius.to_string()),
        ("adjoint", cfg.adjoint.to_string()),
        ("seed", cfg.seed.to_string()),
        ("gamma", s.gamma.to_string()),
        ("lipschitz", s.lipschitz.to_string()),
        ("mu", s.mu.to_string()),
        ("alpha0", s.alpha0.to_string()),
        ("max_iter", s.max_iter.to_string()),
        ("tau", s.tau.to_string()),
        ("delta", s.delta.to_string()),
        ("discrepancy", cfg.discrepancy.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    if let Some(r) = ramp {
        out.insert("window_ramp".into(), r.to_string());
    }
    out
}
