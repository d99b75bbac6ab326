//! Batch driver for bulk-surface simulations: JSON configurations in,
//! NDJSON trajectories and CSV tables out.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use bulksurf_core::diagnostics::{mp_equilibrium, MpParameters};
use bulksurf_core::scales::RegimeReport;
use bulksurf_core::solver::ModelVariant;
use serde_json::{json, Value};

pub use config::{load_config, RunConfig};
pub use error::CliError;
pub use run::{run_experiment, RunSummary};

/// JSON form of a regime classification.
pub fn regime_json(r: &RegimeReport) -> Value {
    json!({
        "recommendation": r.recommendation.name(),
        "variant": ModelVariant::from_regime(r.recommendation).map(|v| v.name()),
        "threshold": r.threshold,
        "separation": r.separation,
        "fast": r.fast.iter().map(|p| p.name()).collect::<Vec<_>>(),
        "ordering": r.ordering.iter().map(|g| json!({
            "process": g.process.name(),
            "slow": g.slow,
            "fast": g.fast,
        })).collect::<Vec<_>>(),
        "notes": r.notes,
    })
}

/// Summary of a validated configuration.
pub fn validation_json(cfg: &RunConfig) -> Value {
    let g = &cfg.problem.geometry;
    json!({
        "valid": true,
        "species": cfg.species,
        "requested_variant": cfg.requested_variant,
        "variant": cfg.variant.name(),
        "phi": cfg.phi,
        "regime": cfg.regime.recommendation.name(),
        "cells": g.n_cells(),
        "surface_nodes": g.n_nodes(),
        "dt": cfg.stepper.dt,
        "t_end": cfg.t_end,
    })
}

/// Closed-form equilibrium of the model problem with its residuals.
pub fn equilibrium_json(a: f64, b: f64, kappa: f64) -> Result<Value, CliError> {
    let p = MpParameters { a, b, kappa };
    let c = mp_equilibrium(&p).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(json!({
        "a": a,
        "b": b,
        "kappa": kappa,
        "c": c,
        "residuals": p.residuals(&c),
    }))
}
