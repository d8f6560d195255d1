use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use pat_core::experiments::{
    build_operator, make_phantom, reconstruct, run_testcase, ExperimentConfig,
};
use pat_core::io::{self, LogWriter};
use pat_core::linalg::Vector;
use pat_core::operators::BoundaryTrace;
use pat_core::solvers::IterationRecord;
use pat_core::{Error, Result, ScalarField};

use crate::manifest::RunManifest;

/// Iterations whose reconstructions `experiment` saves by default.
pub const DEFAULT_SNAPSHOTS: [usize; 6] = [1, 2, 3, 5, 10, 200];

pub const TRACE_FILE: &str = "trace.bin";
pub const ADJOINT_FILE: &str = "adjoint.bin";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.bin";
pub const LOG_FILE: &str = "log.csv";
pub const PHANTOM_FILE: &str = "phantom.bin";
pub const DATA_FILE: &str = "data.bin";

pub fn snapshot_name(k: usize) -> String {
    format!("iter_{k:04}.bin")
}

fn ensure_finite(what: &str, v: &impl Vector) -> Result<()> {
    if v.all_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{what} contains non-finite values"
        )))
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.into());
        self.dir.join(name)
    }

    fn field(&mut self, name: &str, f: &ScalarField) -> Result<()> {
        ensure_finite(name, f)?;
        let p = self.path(name);
        io::write_field(p, f)
    }

    fn trace(&mut self, name: &str, g: &BoundaryTrace) -> Result<()> {
        ensure_finite(name, g)?;
        let p = self.path(name);
        io::write_trace(p, g)
    }
}

/// Writes `L f` for the field in `input`, or for the configured phantom.
pub fn cmd_forward(
    cfg: &ExperimentConfig,
    input: Option<&Path>,
    out: &Path,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("forward", cfg);
    let op = build_operator(cfg)?;
    let f = match input {
        Some(p) => {
            manifest.inputs.push(p.to_path_buf());
            io::read_field(p)?
        }
        None => make_phantom(&cfg.phantom, op.grid())?,
    };
    let g = op.forward(&f)?;
    let mut files = Outputs::new(out)?;
    files.trace(TRACE_FILE, &g)?;
    info!(
        "forward: {} x {} samples",
        g.boundary_count(),
        g.time_count()
    );
    manifest.outputs = files.written;
    manifest.finish(out, started)
}

/// Writes `L* g` for the trace in `input`.
pub fn cmd_adjoint(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("adjoint", cfg);
    manifest.inputs.push(input.to_path_buf());
    let op = build_operator(cfg)?;
    let g = io::read_trace(input)?;
    let f = op.adjoint(&g)?;
    let mut files = Outputs::new(out)?;
    files.field(ADJOINT_FILE, &f)?;
    manifest.outputs = files.written;
    manifest.finish(out, started)
}

/// Runs the configured method on the trace in `input`; `truth` enables error logging.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    input: &Path,
    truth: Option<&Path>,
    out: &Path,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("reconstruct", cfg);
    manifest.inputs.push(input.to_path_buf());
    let op = build_operator(cfg)?;
    let g = io::read_trace(input)?;
    let truth = match truth {
        Some(p) => {
            manifest.inputs.push(p.to_path_buf());
            Some(io::read_field(p)?)
        }
        None => None,
    };
    let mut files = Outputs::new(out)?;
    let mut log = LogWriter::create(files.path(LOG_FILE))?;
    let mut sink = |r: &IterationRecord, _: &ScalarField| log.write(r);
    let (x, history, termination) = reconstruct(
        &op,
        cfg.method,
        &g,
        truth.as_ref(),
        &cfg.solver,
        Some(&mut sink),
    )?;
    drop(log);
    files.field(RECONSTRUCTION_FILE, &x)?;
    info!(
        "{}: {} iterations, {termination}",
        cfg.method,
        history.len() - 1
    );
    manifest.note("iterations", history.len() - 1);
    manifest.note("termination", termination);
    manifest.outputs = files.written;
    manifest.finish(out, started)
}

/// Runs a full test case: phantom, data, noise, reconstruction, snapshots.
pub fn cmd_experiment(
    cfg: &ExperimentConfig,
    snapshots: &[usize],
    out: &Path,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("experiment", cfg);
    let wanted: BTreeSet<usize> = snapshots.iter().copied().collect();
    let mut files = Outputs::new(out)?;
    let mut log = LogWriter::create(files.path(LOG_FILE))?;
    let mut saved = Vec::new();
    let mut sink = |r: &IterationRecord, x: &ScalarField| -> Result<()> {
        log.write(r)?;
        if wanted.contains(&r.iter) {
            let name = snapshot_name(r.iter);
            ensure_finite(&name, x)?;
            io::write_field(out.join(&name), x)?;
            saved.push(PathBuf::from(name));
        }
        Ok(())
    };
    let run = run_testcase(cfg, Some(&mut sink))?;
    drop(log);
    files.written.extend(saved);
    files.field(PHANTOM_FILE, &run.data.phantom)?;
    files.trace(DATA_FILE, &run.data.noisy)?;
    files.field(RECONSTRUCTION_FILE, &run.reconstruction)?;
    info!(
        "{} {}: {} iterations, {}",
        cfg.testcase,
        cfg.method,
        run.log.len() - 1,
        run.termination
    );
    manifest.note("iterations", run.log.len() - 1);
    manifest.note("termination", run.termination);
    manifest.note("data_error", run.data.data_error);
    manifest.note("data_norm", run.data.data_norm);
    manifest.note("noise_norm", run.data.noise_norm);
    manifest.outputs = files.written;
    manifest.finish(out, started)
}
