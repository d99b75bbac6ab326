//! Implicit Euler time stepping for the full model and every limit model.
//!
//! All variants share one monolithic Newton solve over bulk cells, surface
//! unknowns and one ghost value per boundary node and species. The ghost
//! value `g` beyond a boundary face defines both the face trace
//! `(g + c_1) / 2` and the outward derivative `(g − c_1) / h`, so boundary
//! rows and bulk rows see the same flux and the bulk-surface exchange is
//! conservative by construction.
//!
//! Surface rows of the dynamic variants are written with the bulk flux in
//! place of the sorption source; the transmission row then equates that
//! flux with the sorption rate. The identity "flux leaving the bulk equals
//! flux entering the surface" therefore holds exactly, not only at Newton
//! convergence.

mod assemble;
mod attractor;
mod phi;

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use attractor::{surface_attractor, AttractorReport};
pub use phi::{mp_kappa, phi_fixed_point, PhiStats, PhiStepper};

use crate::grid::{boundary_trace, BulkField, Geometry, SurfaceField};
use crate::linalg::LinalgError;
use crate::math::max_abs;
use crate::network::{ConservationBasis, ReactionNetwork, ThermoParams};
use crate::scales::{ProcessTimes, Regime};
use crate::surface::{LangmuirDiffusion, SorptionModel, SurfaceDiffusion, SurfaceReactionNetwork, SurfaceState};

use assemble::Layout;

/// Values below this count as a positivity violation.
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// Which model is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    Full,
    FastSorption,
    FastSurfaceChemistry,
    TwoParamSorpChem,
    ThreeParamMP,
    FastSurfaceDiffusion,
    FastAccumulation,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::Full,
        ModelVariant::FastSorption,
        ModelVariant::FastSurfaceChemistry,
        ModelVariant::TwoParamSorpChem,
        ModelVariant::ThreeParamMP,
        ModelVariant::FastSurfaceDiffusion,
        ModelVariant::FastAccumulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Full => "Full",
            ModelVariant::FastSorption => "FastSorption",
            ModelVariant::FastSurfaceChemistry => "FastSurfaceChemistry",
            ModelVariant::TwoParamSorpChem => "TwoParamSorpChem",
            ModelVariant::ThreeParamMP => "ThreeParamMP",
            ModelVariant::FastSurfaceDiffusion => "FastSurfaceDiffusion",
            ModelVariant::FastAccumulation => "FastAccumulation",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    /// Runnable variant for a classified regime.
    pub fn from_regime(r: Regime) -> Option<Self> {
        Some(match r {
            Regime::FullModel => ModelVariant::Full,
            Regime::FastSurfaceChemistry => ModelVariant::FastSurfaceChemistry,
            Regime::FastSorption => ModelVariant::FastSorption,
            Regime::FastSurfaceDiffusion => ModelVariant::FastSurfaceDiffusion,
            Regime::FastAccumulation => ModelVariant::FastAccumulation,
            Regime::TwoParamSorpChem => ModelVariant::TwoParamSorpChem,
            Regime::ThreeParamLimit => ModelVariant::ThreeParamMP,
            Regime::InvalidFastTransmission => return None,
        })
    }

    /// Whether the surface occupancies are part of the evolved state.
    pub fn has_surface(self) -> bool {
        self != ModelVariant::ThreeParamMP
    }

    /// Whether surface amounts enter the conserved totals.
    pub fn surface_in_totals(self) -> bool {
        !matches!(self, ModelVariant::ThreeParamMP | ModelVariant::FastAccumulation)
    }

    /// Rows per boundary node, see [`ConstraintCounts`].
    pub fn constraint_counts(self, n: usize, m_sigma: usize) -> ConstraintCounts {
        let n_sigma = n.saturating_sub(m_sigma);
        let (dynamic, projected, algebraic_surface, boundary_flux, boundary_algebraic) = match self {
            ModelVariant::Full => (n, 0, 0, n, 0),
            ModelVariant::FastSorption => (n, 0, 0, 0, n),
            ModelVariant::FastSurfaceChemistry => (0, n_sigma, m_sigma, n, 0),
            ModelVariant::TwoParamSorpChem => (0, n_sigma, m_sigma, 0, n),
            ModelVariant::ThreeParamMP => (0, 0, 0, n_sigma, m_sigma),
            ModelVariant::FastSurfaceDiffusion => (1, 0, 0, n, 0),
            ModelVariant::FastAccumulation => (0, 0, n, n, 0),
        };
        ConstraintCounts {
            surface_unknowns: dynamic + projected + algebraic_surface,
            dynamic_surface_rows: dynamic,
            projected_surface_rows: projected,
            algebraic_surface_rows: algebraic_surface,
            flux_rows: boundary_flux,
            algebraic_boundary_rows: boundary_algebraic,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Equation count per boundary node. Every node carries `N` ghost values,
/// so `flux_rows + algebraic_boundary_rows = N` and the surface rows match
/// the surface unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub surface_unknowns: usize,
    pub dynamic_surface_rows: usize,
    /// Dynamics projected onto the conservation vectors `e^k`.
    pub projected_surface_rows: usize,
    /// Quasi-steady relations on the surface state.
    pub algebraic_surface_rows: usize,
    /// Rows involving the bulk normal flux.
    pub flux_rows: usize,
    /// Algebraic relations between traces and surface state.
    pub algebraic_boundary_rows: usize,
}

/// What to do with initial data that violates the limit-model constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compatibility {
    Reject,
    Warn,
    Project,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt_min: f64,
    pub phi_tol: f64,
    pub phi_max_iter: usize,
    pub compatibility: Compatibility,
    /// Allowed constraint violation of initial data before it counts as
    /// incompatible.
    pub compatibility_tol: f64,
    pub attractor_tol: f64,
    pub attractor_max_iter: usize,
    pub attractor_unique_tol: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            dt_min: 1e-9,
            phi_tol: 1e-11,
            phi_max_iter: 50,
            compatibility: Compatibility::Project,
            compatibility_tol: 1e-8,
            attractor_tol: 1e-10,
            attractor_max_iter: 500,
            attractor_unique_tol: 1e-8,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        StepperConfig { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt > self.dt_min && self.dt_min > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::Config(String::from("need dt > dt_min > 0")));
        }
        if !(self.newton_tol > 0.0 && self.phi_tol > 0.0 && self.attractor_tol > 0.0) {
            return Err(SolverError::Config(String::from("tolerances must be positive")));
        }
        if self.newton_max_iter == 0 || self.phi_max_iter == 0 || self.attractor_max_iter == 0 {
            return Err(SolverError::Config(String::from("iteration limits must be positive")));
        }
        Ok(())
    }
}

/// Bulk concentrations, surface occupancies and time.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub bulk: BulkField,
    pub surface: SurfaceField,
    pub time: f64,
}

impl SystemState {
    /// Spatially uniform state.
    pub fn uniform(geom: &Geometry, c: &[f64], theta: &SurfaceState) -> Self {
        SystemState {
            bulk: BulkField::uniform(c, geom.n_cells()),
            surface: SurfaceField::uniform(theta, geom.n_nodes()),
            time: 0.0,
        }
    }

    /// Smallest bulk value and smallest surface occupancy (surface only if
    /// `with_surface`), with a location.
    pub fn minimum(&self, with_surface: bool) -> (f64, Location) {
        let mut best = (f64::INFINITY, Location::Bulk { cell: 0, species: 0 });
        let ns = self.bulk.n_species;
        for (k, &v) in self.bulk.data.iter().enumerate() {
            if v < best.0 {
                best = (v, Location::Bulk { cell: k / ns, species: k % ns });
            }
        }
        if with_surface {
            for (node, st) in self.surface.nodes.iter().enumerate() {
                for (slot, &v) in st.theta.iter().enumerate() {
                    if v < best.0 {
                        best = (v, Location::Surface { node, slot });
                    }
                }
            }
        }
        best
    }
}

/// Position of a value inside a [`SystemState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Bulk { cell: usize, species: usize },
    Surface { node: usize, slot: usize },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Bulk { cell, species } => write!(f, "bulk cell {cell}, species {species}"),
            Location::Surface { node, slot } => write!(f, "surface node {node}, slot {slot}"),
        }
    }
}

/// The dimensionless model on a grid. Rate constants are the normalized
/// `κ` values; the `τ` prefactors come from `times`.
#[derive(Debug, Clone)]
pub struct FullProblem {
    pub geometry: Geometry,
    pub bulk: ReactionNetwork,
    pub thermo: ThermoParams,
    pub surface: SurfaceReactionNetwork,
    /// Reference potentials of the surface slots `0..=N`.
    pub surface_mu0: Vec<f64>,
    pub sorption: SorptionModel,
    pub d: Vec<f64>,
    pub surface_diffusion: Arc<dyn SurfaceDiffusion>,
    pub times: ProcessTimes,
}

/// Rate prefactors `τ_R / τ` of the scaled equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Coefficients {
    pub diff: f64,
    pub react: f64,
    pub sdiff: f64,
    pub schem: f64,
    pub sorp: f64,
    pub trans: f64,
}

impl FullProblem {
    /// Problem with default Langmuir surface diffusion, zero bulk reference
    /// potentials and surface reference potentials consistent with the
    /// sorption constants.
    pub fn new(
        geometry: Geometry,
        bulk: ReactionNetwork,
        surface: SurfaceReactionNetwork,
        sorption: SorptionModel,
        d: Vec<f64>,
        d_sigma: f64,
        times: ProcessTimes,
    ) -> Result<Self, SolverError> {
        let n = bulk.n_species();
        // surface potentials that make sorption equilibria minimizers of
        // the free energy: μ_i^{Σ,0} − μ_0^{Σ,0} = μ_i^0 − ln(κ^ad_i/κ^de_i)
        let mut surface_mu0 = vec![0.0; n + 1];
        for i in 0..n.min(sorption.n_species()) {
            if sorption.k_ad[i] > 0.0 {
                surface_mu0[i + 1] = -crate::math::ln(sorption.k_ad[i] / sorption.k_de[i]);
            }
        }
        let p = FullProblem {
            geometry,
            thermo: ThermoParams::zero(n),
            surface_mu0,
            surface,
            sorption,
            d,
            surface_diffusion: Arc::new(LangmuirDiffusion { d_ref: d_sigma }),
            times,
            bulk,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.n_species();
        let bad = |what: &str| Err(SolverError::Config(format!("{what} does not match {n} species")));
        if self.surface.n_species() != n {
            return bad("surface network");
        }
        if self.sorption.n_species() != n {
            return bad("sorption model");
        }
        if self.d.len() != n {
            return bad("diffusivity vector");
        }
        if self.thermo.mu0.len() != n {
            return bad("bulk reference potentials");
        }
        if self.surface_mu0.len() != n + 1 {
            return Err(SolverError::Config(format!("surface reference potentials need {} entries", n + 1)));
        }
        if self.d.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(SolverError::Config(String::from("diffusivities must be positive")));
        }
        self.times.validate().map_err(|e| SolverError::Config(format!("{e}")))?;
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        self.bulk.n_species()
    }

    pub(crate) fn coefficients(&self) -> Coefficients {
        let t = &self.times;
        Coefficients {
            diff: t.tau_r / t.tau_diff,
            react: t.tau_r / t.tau_react,
            sdiff: t.tau_r / t.tau_diff_sigma,
            schem: t.tau_r / t.tau_react_sigma,
            sorp: t.tau_r / t.tau_sorp,
            trans: t.tau_r / t.tau_trans,
        }
    }

    /// Weight `ω = τ^trans / τ^diff` of surface amounts in the totals.
    pub fn surface_weight(&self) -> f64 {
        self.times.surface_weight()
    }

    /// Conservation basis shared by bulk and surface chemistry.
    pub fn conservation_basis(&self) -> ConservationBasis {
        let mut all = self.bulk.clone();
        all.reactions.extend(self.surface.base.reactions.iter().cloned());
        all.conservation_basis()
    }

    /// Copy with the given process times.
    pub fn with_times(&self, times: ProcessTimes) -> Self {
        FullProblem { times, ..self.clone() }
    }

    /// Face traces `(3 c_1 − c_2) / 2` of the bulk field, per node.
    pub fn extrapolated_traces(&self, bulk: &BulkField) -> Vec<f64> {
        boundary_trace(bulk, &self.geometry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    Config(String),
    /// The surface network is needed with linearly independent reactions.
    DetailedBalance {
        rank: usize,
        reactions: usize,
    },
    NewtonFailure {
        residual: f64,
        dt: f64,
        time: f64,
    },
    Negative {
        value: f64,
        location: Location,
        time: f64,
    },
    Incompatible {
        violation: f64,
    },
    PhiNoContraction {
        ratio: f64,
        iterations: usize,
    },
    AttractorDivergence {
        residual: f64,
        iterations: usize,
    },
    NotModelProblem(String),
    Linear(LinalgError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::Config(s) => write!(f, "invalid configuration: {s}"),
            SolverError::DetailedBalance { rank, reactions } => {
                write!(f, "surface reactions are not linearly independent (rank {rank} < {reactions})")
            }
            SolverError::NewtonFailure { residual, dt, time } => {
                write!(f, "Newton did not converge at t = {time} with dt = {dt} (last residual {residual:e})")
            }
            SolverError::Negative { value, location, time } => {
                write!(f, "negative value {value:e} at {location} (t = {time})")
            }
            SolverError::Incompatible { violation } => {
                write!(f, "initial data violate the boundary constraints by {violation:e}")
            }
            SolverError::PhiNoContraction { ratio, iterations } => write!(
                f,
                "subproblem iteration did not converge in {iterations} iterations (contraction ratio {ratio})"
            ),
            SolverError::AttractorDivergence { residual, iterations } => {
                write!(f, "surface attractor not reached in {iterations} iterations (residual {residual:e})")
            }
            SolverError::NotModelProblem(s) => write!(f, "not the three-component model problem: {s}"),
            SolverError::Linear(e) => write!(f, "linear solve failed: {e}"),
        }
    }
}

impl core::error::Error for SolverError {}

impl From<LinalgError> for SolverError {
    fn from(e: LinalgError) -> Self {
        SolverError::Linear(e)
    }
}

/// Per-step instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub newton_residual: f64,
    pub dt_halvings: usize,
    pub substeps: usize,
    pub attractor_iterations: Option<usize>,
    pub phi_iterations: Option<usize>,
    pub phi_ratio: Option<f64>,
}

/// Result of fitting initial data to the constraints of a limit model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Preparation {
    /// Constraint violation of the data as given.
    pub violation: f64,
    /// Max-norm change made by the projection.
    pub distance: f64,
    pub warnings: Vec<String>,
}

/// Implicit Euler / Newton stepper for one problem and variant.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub(crate) problem: FullProblem,
    pub(crate) variant: ModelVariant,
    pub(crate) cfg: StepperConfig,
    pub(crate) layout: Layout,
    /// Conservation basis of the surface network (rows of the projected
    /// surface dynamics and of the three-parameter flux conditions).
    pub(crate) surface_basis: Vec<Vec<f64>>,
    /// Ghost values from the last converged step, `node * N + species`.
    pub(crate) ghosts: Option<Vec<f64>>,
    pub(crate) row_scale: assemble::RowScales,
    pub last: StepStats,
}

impl Stepper {
    pub fn new(problem: &FullProblem, variant: ModelVariant, cfg: &StepperConfig) -> Result<Self, SolverError> {
        problem.validate()?;
        cfg.validate()?;
        let n = problem.n_species();
        let m = problem.surface.n_reactions();
        if matches!(
            variant,
            ModelVariant::FastSurfaceChemistry | ModelVariant::TwoParamSorpChem | ModelVariant::ThreeParamMP
        ) {
            let rep = problem.surface.base.detailed_balance_check();
            if !rep.independent {
                return Err(SolverError::DetailedBalance { rank: rep.rank, reactions: m });
            }
        }
        if variant == ModelVariant::ThreeParamMP && problem.sorption.k_ad.iter().any(|&k| k <= 0.0) {
            return Err(SolverError::Config(String::from(
                "the three-parameter limit needs positive adsorption constants",
            )));
        }
        let counts = variant.constraint_counts(n, m);
        let surface_basis = problem.surface.base.conservation_basis().vectors;
        let layout = Layout::new(&problem.geometry, n, counts.surface_unknowns);
        let row_scale = assemble::RowScales::new(problem, &surface_basis);
        Ok(Stepper {
            problem: problem.clone(),
            variant,
            cfg: *cfg,
            layout,
            surface_basis,
            ghosts: None,
            row_scale,
            last: StepStats::default(),
        })
    }

    pub fn problem(&self) -> &FullProblem {
        &self.problem
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Solver traces `(g + c_1) / 2` of the last converged step, if any.
    pub fn solver_traces(&self, bulk: &BulkField) -> Option<Vec<f64>> {
        let g = self.ghosts.as_ref()?;
        let n = self.problem.n_species();
        let geom = &self.problem.geometry;
        Some(
            (0..geom.n_nodes() * n)
                .map(|k| {
                    let c = geom.inward_cell(k / n, 0);
                    0.5 * (g[k] + bulk.get(c, k % n))
                })
                .collect(),
        )
    }

    /// Fits the initial data to the constraints of the variant (see
    /// [`Compatibility`]) and returns the state to start from.
    pub fn prepare(&mut self, state: &SystemState) -> Result<(SystemState, Preparation), SolverError> {
        assemble::prepare(self, state)
    }

    /// One implicit Euler step of size `cfg.dt`; on Newton failure the step
    /// is split into halves, down to `cfg.dt_min`.
    pub fn step(&mut self, state: &SystemState) -> Result<SystemState, SolverError> {
        self.step_dt(state, self.cfg.dt)
    }

    pub fn step_dt(&mut self, state: &SystemState, dt: f64) -> Result<SystemState, SolverError> {
        let mut stats = StepStats::default();
        let out = self.step_recursive(state, dt, &mut stats, 0)?;
        let (min, location) = out.minimum(self.variant.has_surface());
        if min < -NEGATIVITY_TOL {
            return Err(SolverError::Negative { value: min, location, time: out.time });
        }
        self.last = stats;
        Ok(out)
    }

    fn step_recursive(
        &mut self,
        state: &SystemState,
        dt: f64,
        stats: &mut StepStats,
        depth: usize,
    ) -> Result<SystemState, SolverError> {
        let saved = self.ghosts.clone();
        match assemble::newton_step(self, state, dt) {
            Ok((next, iters, res, att)) => {
                stats.newton_iterations += iters;
                stats.newton_residual = stats.newton_residual.max(res);
                stats.substeps += 1;
                if let Some(a) = att {
                    stats.attractor_iterations = Some(stats.attractor_iterations.unwrap_or(0).max(a));
                }
                Ok(next)
            }
            Err(SolverError::NewtonFailure { residual, .. }) if dt / 2.0 >= self.cfg.dt_min => {
                self.ghosts = saved;
                stats.dt_halvings = stats.dt_halvings.max(depth + 1);
                let mid = self.step_recursive(state, dt / 2.0, stats, depth + 1);
                let mid = match mid {
                    Ok(m) => m,
                    Err(SolverError::NewtonFailure { .. }) => {
                        return Err(SolverError::NewtonFailure { residual, dt, time: state.time })
                    }
                    Err(e) => return Err(e),
                };
                self.step_recursive(&mid, dt / 2.0, stats, depth + 1)
            }
            Err(e) => Err(e),
        }
    }

    /// Max-norm of the scaled residual of the step `old → new` with the
    /// cached ghosts; useful to verify fixed points.
    pub fn residual_norm(&self, old: &SystemState, new: &SystemState, dt: f64) -> f64 {
        let x = assemble::pack(self, new);
        let r = assemble::residual(self, &x, old, dt, None);
        max_abs(&r)
    }
}

/// One full-model step from a cold start.
pub fn step_full(p: &FullProblem, s: &SystemState, cfg: &StepperConfig) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::Full, cfg)?.step(s)
}

/// One fast-sorption step from a cold start.
pub fn step_fast_sorption(p: &FullProblem, s: &SystemState, cfg: &StepperConfig) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::FastSorption, cfg)?.step(s)
}

/// One fast-surface-chemistry step from a cold start.
pub fn step_fast_chemistry(p: &FullProblem, s: &SystemState, cfg: &StepperConfig) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::FastSurfaceChemistry, cfg)?.step(s)
}

/// One two-parameter (sorption and chemistry) step from a cold start.
pub fn step_two_param(p: &FullProblem, s: &SystemState, cfg: &StepperConfig) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::TwoParamSorpChem, cfg)?.step(s)
}

/// One three-parameter-limit step from a cold start.
pub fn step_three_param_mp(p: &FullProblem, s: &SystemState, cfg: &StepperConfig) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::ThreeParamMP, cfg)?.step(s)
}

/// One fast-surface-diffusion step from a cold start.
pub fn step_fast_surface_diffusion(
    p: &FullProblem,
    s: &SystemState,
    cfg: &StepperConfig,
) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::FastSurfaceDiffusion, cfg)?.step(s)
}

/// One fast-accumulation step from a cold start.
pub fn step_fast_accumulation(
    p: &FullProblem,
    s: &SystemState,
    cfg: &StepperConfig,
) -> Result<SystemState, SolverError> {
    Stepper::new(p, ModelVariant::FastAccumulation, cfg)?.step(s)
}

/// Integrates from `state` to `t_end` with the stepper's `dt` (the last
/// step is shortened to land on `t_end`), calling `observe` after the
/// initial state and after every step.
pub fn integrate(
    stepper: &mut Stepper,
    state: &SystemState,
    t_end: f64,
    mut observe: impl FnMut(&SystemState, &StepStats),
) -> Result<SystemState, SolverError> {
    let dt = stepper.cfg.dt;
    let mut s = state.clone();
    observe(&s, &StepStats::default());
    let n_steps = libm::ceil((t_end - s.time) / dt - 1e-9).max(0.0) as usize;
    let t0 = s.time;
    for k in 0..n_steps {
        let target = (t0 + (k + 1) as f64 * dt).min(t_end);
        let h = target - s.time;
        s = stepper.step_dt(&s, h)?;
        s.time = target;
        let st = stepper.last;
        observe(&s, &st);
    }
    Ok(s)
}
