//! Time integration of a validated configuration with file output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use bulksurf_core::diagnostics::{sample, TrajectorySample};
use bulksurf_core::solver::{integrate, PhiStepper, SolverError, Stepper, SystemState};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{trajectory_record, write_state_csv};

/// What a finished run reports on stdout.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub variant: String,
    pub steps: usize,
    pub samples: usize,
    pub final_time: f64,
    /// Largest change of a conserved total, relative to `max(1, |total|)`.
    pub max_drift: f64,
    pub min_value: f64,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variant": self.variant,
            "steps": self.steps,
            "samples": self.samples,
            "final_time": self.final_time,
            "max_drift": self.max_drift,
            "min_value": self.min_value,
            "warnings": self.warnings,
        })
    }
}

/// Writes samples with the configured stride and tracks drift.
struct Recorder<W: Write> {
    out: W,
    stride: usize,
    seen: usize,
    written: usize,
    first_totals: Option<Vec<f64>>,
    max_drift: f64,
    min_value: f64,
    pending: Option<TrajectorySample>,
    failure: Option<CliError>,
}

impl<W: Write> Recorder<W> {
    fn new(out: W, stride: usize) -> Self {
        Recorder {
            out,
            stride,
            seen: 0,
            written: 0,
            first_totals: None,
            max_drift: 0.0,
            min_value: f64::INFINITY,
            pending: None,
            failure: None,
        }
    }

    fn observe(&mut self, rec: Result<TrajectorySample, CliError>) {
        if self.failure.is_some() {
            return;
        }
        let s = match rec {
            Ok(s) => s,
            Err(e) => {
                self.failure = Some(e);
                return;
            }
        };
        let first = self.first_totals.get_or_insert_with(|| s.totals.clone());
        for (a, b) in s.totals.iter().zip(first.iter()) {
            self.max_drift = self.max_drift.max((a - b).abs() / b.abs().max(1.0));
        }
        self.min_value = self.min_value.min(s.min_value);
        if self.seen % self.stride == 0 {
            self.write(&s);
            self.pending = None;
        } else {
            self.pending = Some(s);
        }
        self.seen += 1;
    }

    fn write(&mut self, s: &TrajectorySample) {
        if let Err(e) = writeln!(self.out, "{}", trajectory_record(s)) {
            self.failure = Some(CliError::Io { path: "trajectory".into(), source: e });
        }
        self.written += 1;
    }

    /// Writes the last sample if the stride skipped it.
    fn finish(&mut self) -> std::io::Result<()> {
        if let Some(s) = self.pending.take() {
            self.write(&s);
        }
        self.out.flush()
    }
}

fn solver_error(time: f64, source: SolverError) -> CliError {
    CliError::Solver { time, source }
}

/// Runs the configuration and writes the trajectory and final state into
/// `out_dir`. On failure the partial trajectory is kept and an
/// `error.json` record is written next to it.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    let result = run_inner(cfg, out_dir);
    if let Err(e) = &result {
        let path = out_dir.join("error.json");
        let _ = fs::write(&path, format!("{}\n", e.record()));
    }
    result
}

fn run_inner(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let p = &cfg.problem;
    let variant = cfg.variant;
    let vectors = p.conservation_basis().vectors;
    let traj_path = out_dir.join(&cfg.output.trajectory);
    let file = File::create(&traj_path).map_err(|source| CliError::Io { path: traj_path.clone(), source })?;
    let mut rec = Recorder::new(BufWriter::new(file), cfg.output.stride);
    let mut warnings = Vec::new();
    let mut last_time = cfg.initial.time;
    let mut steps = 0usize;

    let outcome: Result<SystemState, CliError> = if cfg.phi {
        let mut st = PhiStepper::new(p, &cfg.stepper).map_err(|e| solver_error(0.0, e))?;
        let mut s = cfg.initial.clone();
        rec.observe(sample(&s, p, variant, &vectors, 0.0, Some(0)).map_err(CliError::from));
        let dt = cfg.stepper.dt;
        let n_steps = ((cfg.t_end - s.time) / dt - 1e-9).ceil().max(0.0) as usize;
        let t0 = s.time;
        let mut failed = None;
        for k in 0..n_steps {
            let target = (t0 + (k + 1) as f64 * dt).min(cfg.t_end);
            match st.step_dt(&s, target - s.time) {
                Ok(mut next) => {
                    next.time = target;
                    s = next;
                    steps += 1;
                    last_time = s.time;
                    let stats = st.last;
                    rec.observe(
                        sample(&s, p, variant, &vectors, stats.defect, Some(stats.iterations)).map_err(CliError::from),
                    );
                }
                Err(e) => {
                    failed = Some(solver_error(last_time, e));
                    break;
                }
            }
        }
        failed.map_or(Ok(s), Err)
    } else {
        let mut st = Stepper::new(p, variant, &cfg.stepper).map_err(|e| solver_error(0.0, e))?;
        let (start, prep) = st.prepare(&cfg.initial).map_err(|e| solver_error(0.0, e))?;
        warnings.extend(prep.warnings);
        integrate(&mut st, &start, cfg.t_end, |s, stats| {
            if s.time > start.time {
                steps += 1;
            }
            last_time = s.time;
            rec.observe(
                sample(s, p, variant, &vectors, stats.newton_residual, stats.phi_iterations).map_err(CliError::from),
            );
        })
        .map_err(|e| solver_error(last_time, e))
    };

    rec.finish().map_err(|source| CliError::Io { path: traj_path.clone(), source })?;
    if let Some(e) = rec.failure.take() {
        return Err(e);
    }
    let final_state = outcome?;

    let state_path = out_dir.join(&cfg.output.final_state);
    let file = File::create(&state_path).map_err(|source| CliError::Io { path: state_path.clone(), source })?;
    write_state_csv(BufWriter::new(file), &final_state, &p.geometry, &cfg.species)
        .map_err(|e| CliError::Io { path: state_path.clone(), source: std::io::Error::other(e.to_string()) })?;

    Ok(RunSummary {
        variant: variant.name().to_string(),
        steps,
        samples: rec.written,
        final_time: final_state.time,
        max_drift: rec.max_drift,
        min_value: rec.min_value,
        warnings,
    })
}
