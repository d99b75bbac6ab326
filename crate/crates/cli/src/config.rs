//! JSON run configuration: raw serde layer, validation with key paths,
//! and assembly of the validated [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use bulksurf_core::grid::{BulkField, Geometry, SurfaceField};
use bulksurf_core::network::{Reaction, ReactionNetwork, SpeciesSet, ThermoParams};
use bulksurf_core::presets::with_isotherm_surface;
use bulksurf_core::scales::{
    classify_regime, nondimensionalize, CharacteristicScales, DimensionalProblem, ProcessTimes, RegimeReport,
    TimeScales,
};
use bulksurf_core::solver::{Compatibility, FullProblem, ModelVariant, StepperConfig, SystemState};
use bulksurf_core::surface::{SorptionModel, SurfaceReactionNetwork, SurfaceState};
use serde::Deserialize;

use crate::error::CliError;

// ---- raw layer ---------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub species: Vec<String>,
    pub geometry: RawGeometry,
    #[serde(default)]
    pub bulk: RawBulk,
    #[serde(default)]
    pub surface: RawSurface,
    pub sorption: RawSorption,
    #[serde(default)]
    pub times: Option<RawTimes>,
    #[serde(default)]
    pub scales: Option<RawScales>,
    #[serde(default)]
    pub model: RawModel,
    #[serde(default)]
    pub initial: RawInitial,
    #[serde(default)]
    pub stepper: RawStepper,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawGeometry {
    Interval {
        n: usize,
        #[serde(default = "one")]
        length: f64,
    },
    Strip {
        nx: usize,
        ny: usize,
        #[serde(default = "one")]
        lx: f64,
        #[serde(default = "one")]
        ly: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawReaction {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub k_f: f64,
    pub k_b: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBulk {
    #[serde(default)]
    pub reactions: Vec<RawReaction>,
    /// Diffusivities, one per species (default 1).
    pub d: Option<Vec<f64>>,
    /// Reference chemical potentials (default 0).
    pub mu0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSurface {
    #[serde(default)]
    pub reactions: Vec<RawReaction>,
    #[serde(default = "one")]
    pub d_sigma: f64,
}

impl Default for RawSurface {
    fn default() -> Self {
        RawSurface { reactions: Vec::new(), d_sigma: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSorption {
    pub k_ad: Vec<f64>,
    pub k_de: Vec<f64>,
}

/// Dimensionless process times; missing entries default to 1.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTimes {
    #[serde(default = "one")]
    pub tau_r: f64,
    #[serde(default = "one")]
    pub tau_diff: f64,
    #[serde(default = "one")]
    pub tau_diff_sigma: f64,
    #[serde(default = "one")]
    pub tau_react: f64,
    #[serde(default = "one")]
    pub tau_react_sigma: f64,
    #[serde(default = "one")]
    pub tau_sorp: f64,
    #[serde(default = "one")]
    pub tau_trans: f64,
}

/// Reference scales of a dimensional problem; missing entries default to 1.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScales {
    #[serde(default = "one")]
    pub tau_r: f64,
    #[serde(default = "one")]
    pub l_r: f64,
    #[serde(default = "one")]
    pub l_r_sigma: f64,
    #[serde(default = "one")]
    pub d_r: f64,
    #[serde(default = "one")]
    pub d_r_sigma: f64,
    #[serde(default = "one")]
    pub c_r: f64,
    #[serde(default = "one")]
    pub c_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub phi: bool,
}

impl Default for RawModel {
    fn default() -> Self {
        RawModel { variant: default_variant(), epsilon: default_epsilon(), phi: false }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    #[serde(default)]
    pub bulk: RawBulkInit,
    #[serde(default)]
    pub surface: RawSurfaceInit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawBulkInit {
    Uniform {
        values: Vec<f64>,
    },
    /// `c_i = base_i (1 + amplitude_i cos(mode_i π y / L_y))`.
    Sinusoidal {
        base: Vec<f64>,
        amplitude: Vec<f64>,
        mode: Vec<u32>,
    },
    /// Final-state CSV of an earlier run (path relative to the config).
    File {
        path: String,
    },
}

impl Default for RawBulkInit {
    fn default() -> Self {
        RawBulkInit::Uniform { values: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawSurfaceInit {
    /// On the sorption isotherm of the initial bulk traces.
    #[default]
    Isotherm,
    Empty,
    /// The same reduced occupancies `θ_1..θ_N` at every node.
    Uniform {
        theta: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStepper {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub dt_min: Option<f64>,
    pub phi_tol: Option<f64>,
    pub phi_max_iter: Option<usize>,
    pub compatibility: Option<String>,
    pub compatibility_tol: Option<f64>,
    pub attractor_tol: Option<f64>,
    pub attractor_max_iter: Option<usize>,
    pub attractor_unique_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(default = "one_usize")]
    pub stride: usize,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_final_state")]
    pub final_state: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { stride: 1, trajectory: default_trajectory(), final_state: default_final_state() }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_variant() -> String {
    String::from("Full")
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_trajectory() -> String {
    String::from("trajectory.ndjson")
}
fn default_final_state() -> String {
    String::from("final_state.csv")
}

// ---- validated layer ---------------------------------------------------

#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub stride: usize,
    pub trajectory: String,
    pub final_state: String,
}

/// A fully validated run with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub species: Vec<String>,
    pub problem: FullProblem,
    /// Variant as written in the file (`"auto"` or a variant name).
    pub requested_variant: String,
    pub variant: ModelVariant,
    pub regime: RegimeReport,
    pub epsilon: f64,
    pub phi: bool,
    pub initial: SystemState,
    pub stepper: StepperConfig,
    pub t_end: f64,
    pub output: OutputSpec,
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Schema { key: key.into(), message: message.into() }
}

fn check_len<T>(key: &str, v: &[T], n: usize) -> Result<(), CliError> {
    if v.len() != n {
        return Err(invalid(key, format!("expected {n} entries (one per species), found {}", v.len())));
    }
    Ok(())
}

fn check_each(key: &str, v: &[f64], ok: impl Fn(f64) -> bool, what: &str) -> Result<(), CliError> {
    for (i, &x) in v.iter().enumerate() {
        if !(x.is_finite() && ok(x)) {
            return Err(invalid(format!("{key}[{i}]"), format!("must be {what}, found {x}")));
        }
    }
    Ok(())
}

fn check_value(key: &str, x: f64, ok: bool, what: &str) -> Result<(), CliError> {
    if !(x.is_finite() && ok) {
        return Err(invalid(key, format!("must be {what}, found {x}")));
    }
    Ok(())
}

fn network(key: &str, species: &SpeciesSet, raw: &[RawReaction]) -> Result<ReactionNetwork, CliError> {
    let n = species.len();
    let mut reactions = Vec::with_capacity(raw.len());
    for (a, r) in raw.iter().enumerate() {
        let k = format!("{key}[{a}]");
        check_len(&format!("{k}.alpha"), &r.alpha, n)?;
        check_len(&format!("{k}.beta"), &r.beta, n)?;
        if r.alpha == r.beta {
            return Err(invalid(format!("{k}.beta"), "reactant and product stoichiometry coincide"));
        }
        check_value(&format!("{k}.k_f"), r.k_f, r.k_f > 0.0, "positive")?;
        check_value(&format!("{k}.k_b"), r.k_b, r.k_b > 0.0, "positive")?;
        reactions.push(Reaction::new(r.alpha.clone(), r.beta.clone(), r.k_f, r.k_b));
    }
    ReactionNetwork::new(species.clone(), reactions).map_err(|e| invalid(key, e.to_string()))
}

impl RawConfig {
    /// Validates every section; `base` resolves relative file paths.
    pub fn validate(&self, base: &Path) -> Result<RunConfig, CliError> {
        let species = SpeciesSet::new(self.species.iter().cloned()).map_err(|e| invalid("species", e.to_string()))?;
        let n = species.len();
        if n == 0 {
            return Err(invalid("species", "at least one species is required"));
        }

        let geometry = match self.geometry {
            RawGeometry::Interval { n, length } => {
                check_value("geometry.length", length, length > 0.0, "positive")?;
                Geometry::interval(n, length).map_err(|e| invalid("geometry.n", e.to_string()))?
            }
            RawGeometry::Strip { nx, ny, lx, ly } => {
                check_value("geometry.lx", lx, lx > 0.0, "positive")?;
                check_value("geometry.ly", ly, ly > 0.0, "positive")?;
                Geometry::strip(nx, ny, lx, ly).map_err(|e| invalid("geometry", e.to_string()))?
            }
        };

        let bulk = network("bulk.reactions", &species, &self.bulk.reactions)?;
        let surface = SurfaceReactionNetwork::new(network("surface.reactions", &species, &self.surface.reactions)?);
        let d = self.bulk.d.clone().unwrap_or_else(|| vec![1.0; n]);
        check_len("bulk.d", &d, n)?;
        check_each("bulk.d", &d, |x| x > 0.0, "positive")?;
        check_value("surface.d_sigma", self.surface.d_sigma, self.surface.d_sigma > 0.0, "positive")?;
        check_len("sorption.k_ad", &self.sorption.k_ad, n)?;
        check_len("sorption.k_de", &self.sorption.k_de, n)?;
        check_each("sorption.k_ad", &self.sorption.k_ad, |x| x >= 0.0, "nonnegative")?;
        check_each("sorption.k_de", &self.sorption.k_de, |x| x > 0.0, "positive")?;
        let sorption = SorptionModel::new(self.sorption.k_ad.clone(), self.sorption.k_de.clone())
            .map_err(|e| invalid("sorption", e.to_string()))?;

        // dimensionless data, either given directly or scaled from SI values
        let (bulk, surface, sorption, d, d_sigma, times, ts) = match (&self.times, &self.scales) {
            (Some(_), Some(_)) => return Err(invalid("scales", "give either `times` or `scales`, not both")),
            (Some(t), None) => {
                let times = ProcessTimes {
                    tau_r: t.tau_r,
                    tau_diff: t.tau_diff,
                    tau_diff_sigma: t.tau_diff_sigma,
                    tau_react: t.tau_react,
                    tau_react_sigma: t.tau_react_sigma,
                    tau_sorp: t.tau_sorp,
                    tau_trans: t.tau_trans,
                };
                for (k, v) in [
                    ("times.tau_r", t.tau_r),
                    ("times.tau_diff", t.tau_diff),
                    ("times.tau_diff_sigma", t.tau_diff_sigma),
                    ("times.tau_react", t.tau_react),
                    ("times.tau_react_sigma", t.tau_react_sigma),
                    ("times.tau_sorp", t.tau_sorp),
                    ("times.tau_trans", t.tau_trans),
                ] {
                    check_value(k, v, v > 0.0, "positive")?;
                }
                let ts = TimeScales::from_process_times(&times, &bulk, &surface, &sorption);
                (bulk, surface, sorption, d, self.surface.d_sigma, times, ts)
            }
            (None, Some(s)) => {
                let scales = CharacteristicScales {
                    tau_r: s.tau_r,
                    l_r: s.l_r,
                    l_r_sigma: s.l_r_sigma,
                    d_r: s.d_r,
                    d_r_sigma: s.d_r_sigma,
                    c_r: s.c_r,
                    c_s: s.c_s,
                };
                for (k, v) in [
                    ("scales.tau_r", s.tau_r),
                    ("scales.l_r", s.l_r),
                    ("scales.l_r_sigma", s.l_r_sigma),
                    ("scales.d_r", s.d_r),
                    ("scales.d_r_sigma", s.d_r_sigma),
                    ("scales.c_r", s.c_r),
                    ("scales.c_s", s.c_s),
                ] {
                    check_value(k, v, v > 0.0, "positive")?;
                }
                let dim = DimensionalProblem {
                    bulk,
                    surface,
                    sorption,
                    d,
                    d_sigma: self.surface.d_sigma,
                    c: vec![s.c_r; n],
                    c_sigma: vec![0.0; n],
                };
                let (p, ts) = nondimensionalize(&dim, &scales).map_err(|e| invalid("scales", e.to_string()))?;
                (p.bulk, p.surface, p.sorption, p.d_star, p.d_sigma_star, p.times, ts)
            }
            (None, None) => {
                let times = ProcessTimes::unit();
                let ts = TimeScales::from_process_times(&times, &bulk, &surface, &sorption);
                (bulk, surface, sorption, d, self.surface.d_sigma, times, ts)
            }
        };

        let mut problem = FullProblem::new(geometry, bulk, surface, sorption, d, d_sigma, times)
            .map_err(|e| invalid("surface.reactions", e.to_string()))?;
        if let Some(mu0) = &self.bulk.mu0 {
            check_len("bulk.mu0", mu0, n)?;
            check_each("bulk.mu0", mu0, |_| true, "finite")?;
            problem.thermo = ThermoParams::new(mu0.clone());
        }

        // model selection
        let m = &self.model;
        check_value("model.epsilon", m.epsilon, m.epsilon > 0.0 && m.epsilon < 1.0, "in (0, 1)")?;
        let regime = classify_regime(&ts, m.epsilon);
        let variant = if m.variant.eq_ignore_ascii_case("auto") {
            ModelVariant::from_regime(regime.recommendation).ok_or_else(|| {
                invalid(
                    "model.variant",
                    format!(
                        "regime classification gives {}, which has no runnable model",
                        regime.recommendation.name()
                    ),
                )
            })?
        } else {
            ModelVariant::from_name(&m.variant).ok_or_else(|| {
                let names: Vec<&str> = ModelVariant::ALL.iter().map(|v| v.name()).collect();
                invalid(
                    "model.variant",
                    format!("unknown variant `{}`; expected auto or one of {}", m.variant, names.join(", ")),
                )
            })?
        };
        if m.phi {
            if variant != ModelVariant::ThreeParamMP {
                return Err(invalid(
                    "model.phi",
                    format!("the subproblem iteration solves ThreeParamMP, not {variant}"),
                ));
            }
            bulksurf_core::solver::mp_kappa(&problem).map_err(|e| invalid("model.phi", e.to_string()))?;
        }

        let stepper = self.stepper.validate()?;
        let t_end = self.stepper.t_end.unwrap_or(1.0);
        check_value("stepper.t_end", t_end, t_end > 0.0, "positive")?;

        let initial = self.initial.build(&problem, &species, base)?;

        if self.output.stride == 0 {
            return Err(invalid("output.stride", "must be at least 1"));
        }
        for (k, v) in [("output.trajectory", &self.output.trajectory), ("output.final_state", &self.output.final_state)]
        {
            let p = Path::new(v);
            if v.is_empty() || p.is_absolute() || p.components().count() != 1 {
                return Err(invalid(k, "must be a plain file name inside the output directory"));
            }
        }

        Ok(RunConfig {
            species: self.species.clone(),
            problem,
            requested_variant: m.variant.clone(),
            variant,
            regime,
            epsilon: m.epsilon,
            phi: m.phi,
            initial,
            stepper,
            t_end,
            output: OutputSpec {
                stride: self.output.stride,
                trajectory: self.output.trajectory.clone(),
                final_state: self.output.final_state.clone(),
            },
        })
    }
}

impl RawStepper {
    fn validate(&self) -> Result<StepperConfig, CliError> {
        let d = StepperConfig::default();
        let compatibility = match self.compatibility.as_deref() {
            None => d.compatibility,
            Some(s) if s.eq_ignore_ascii_case("reject") => Compatibility::Reject,
            Some(s) if s.eq_ignore_ascii_case("warn") => Compatibility::Warn,
            Some(s) if s.eq_ignore_ascii_case("project") => Compatibility::Project,
            Some(s) => {
                return Err(invalid("stepper.compatibility", format!("expected reject, warn or project, found `{s}`")))
            }
        };
        let cfg = StepperConfig {
            dt: self.dt.unwrap_or(d.dt),
            newton_tol: self.newton_tol.unwrap_or(d.newton_tol),
            newton_max_iter: self.newton_max_iter.unwrap_or(d.newton_max_iter),
            dt_min: self.dt_min.unwrap_or(d.dt_min),
            phi_tol: self.phi_tol.unwrap_or(d.phi_tol),
            phi_max_iter: self.phi_max_iter.unwrap_or(d.phi_max_iter),
            compatibility,
            compatibility_tol: self.compatibility_tol.unwrap_or(d.compatibility_tol),
            attractor_tol: self.attractor_tol.unwrap_or(d.attractor_tol),
            attractor_max_iter: self.attractor_max_iter.unwrap_or(d.attractor_max_iter),
            attractor_unique_tol: self.attractor_unique_tol.unwrap_or(d.attractor_unique_tol),
        };
        check_value("stepper.dt", cfg.dt, cfg.dt > 0.0, "positive")?;
        check_value("stepper.dt_min", cfg.dt_min, cfg.dt_min > 0.0 && cfg.dt_min < cfg.dt, "positive and below dt")?;
        for (k, v) in [
            ("stepper.newton_tol", cfg.newton_tol),
            ("stepper.phi_tol", cfg.phi_tol),
            ("stepper.compatibility_tol", cfg.compatibility_tol),
            ("stepper.attractor_tol", cfg.attractor_tol),
            ("stepper.attractor_unique_tol", cfg.attractor_unique_tol),
        ] {
            check_value(k, v, v > 0.0, "positive")?;
        }
        for (k, v) in [
            ("stepper.newton_max_iter", cfg.newton_max_iter),
            ("stepper.phi_max_iter", cfg.phi_max_iter),
            ("stepper.attractor_max_iter", cfg.attractor_max_iter),
        ] {
            if v == 0 {
                return Err(invalid(k, "must be at least 1"));
            }
        }
        cfg.validate().map_err(|e| invalid("stepper", e.to_string()))?;
        Ok(cfg)
    }
}

impl RawInitial {
    fn build(&self, p: &FullProblem, species: &SpeciesSet, base: &Path) -> Result<SystemState, CliError> {
        let n = species.len();
        let geom = p.geometry;
        let bulk = match &self.bulk {
            RawBulkInit::Uniform { values } if values.is_empty() => BulkField::uniform(&vec![1.0; n], geom.n_cells()),
            RawBulkInit::Uniform { values } => {
                check_len("initial.bulk.values", values, n)?;
                check_each("initial.bulk.values", values, |x| x >= 0.0, "nonnegative")?;
                BulkField::uniform(values, geom.n_cells())
            }
            RawBulkInit::Sinusoidal { base: b, amplitude, mode } => {
                check_len("initial.bulk.base", b, n)?;
                check_len("initial.bulk.amplitude", amplitude, n)?;
                check_len("initial.bulk.mode", mode, n)?;
                check_each("initial.bulk.base", b, |x| x >= 0.0, "nonnegative")?;
                check_each("initial.bulk.amplitude", amplitude, |x| x.abs() <= 1.0, "within [-1, 1]")?;
                let ly = match geom {
                    Geometry::Interval { length, .. } => length,
                    Geometry::Strip { ly, .. } => ly,
                };
                let pi = std::f64::consts::PI;
                BulkField::from_fn(&geom, n, |s, _, y| {
                    b[s] * (1.0 + amplitude[s] * (mode[s] as f64 * pi * y / ly).cos())
                })
            }
            RawBulkInit::File { path } => {
                let full = base.join(path);
                crate::output::read_bulk_csv(&full, species.names(), &geom)?
            }
        };
        let state = match &self.surface {
            RawSurfaceInit::Isotherm => with_isotherm_surface(p, bulk),
            RawSurfaceInit::Empty => SystemState { bulk, surface: SurfaceField::empty(n, geom.n_nodes()), time: 0.0 },
            RawSurfaceInit::Uniform { theta } => {
                check_len("initial.surface.theta", theta, n)?;
                check_each("initial.surface.theta", theta, |x| x >= 0.0, "nonnegative")?;
                let node = SurfaceState::vacancy_closure(theta)
                    .map_err(|e| invalid("initial.surface.theta", e.to_string()))?;
                SystemState { bulk, surface: SurfaceField::uniform(&node, geom.n_nodes()), time: 0.0 }
            }
        };
        Ok(state)
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let raw = read_raw(path)?;
    let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    raw.validate(&base)
}

pub fn read_raw(path: &Path) -> Result<RawConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_raw(&text)
}

/// Parses JSON text; type errors carry the path of the offending key.
pub fn parse_raw(text: &str) -> Result<RawConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            CliError::Parse { line: inner.line(), column: inner.column(), message: inner.to_string() }
        } else {
            CliError::Schema { key: if key == "." { String::from("(root)") } else { key }, message: inner.to_string() }
        }
    })
}
