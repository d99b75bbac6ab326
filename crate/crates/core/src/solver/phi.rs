//! Subproblem iteration for the three-component model problem.
//!
//! Per time step the map `T` takes boundary values `h` of species 3, solves
//! the implicit heat step of species 3 with Dirichlet data `h`, passes its
//! boundary flux as Neumann data to the heat steps of species 1 and 2, and
//! returns `t_1 t_2 / κ` from their traces. A fixed point of `T` solves the
//! same discrete system as the three-parameter limit stepper.
//!
//! Plain fixed-point iteration of `T` oscillates with gain near `−2` at
//! typical data, so each boundary node is accelerated with a secant
//! (Wegstein) relaxation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{FullProblem, SolverError, StepperConfig, SystemState};
use crate::grid::{boundary_trace, Geometry};
use crate::linalg::{BandMatrix, Triplets};
use crate::math::{max_abs, sqrt};

/// Bounds of the secant slope used for relaxation.
const SLOPE_MIN: f64 = -1e6;
const SLOPE_MAX: f64 = 0.9;

/// `κ` of the boundary relation `c_1 c_2 = κ c_3` of the model problem,
/// `κ = κ^b K_3 / (κ^f K_1 K_2)` with `K_i = κ^ad_i / κ^de_i`.
pub fn mp_kappa(p: &FullProblem) -> Result<f64, SolverError> {
    check_model_problem(p)?;
    let rx = &p.surface.base.reactions[0];
    let k = p.sorption.isotherm_constants();
    Ok(rx.k_b * k[2] / (rx.k_f * k[0] * k[1]))
}

fn check_model_problem(p: &FullProblem) -> Result<(), SolverError> {
    if p.n_species() != 3 {
        return Err(SolverError::NotModelProblem(format!("{} species instead of 3", p.n_species())));
    }
    if p.bulk.n_reactions() != 0 {
        return Err(SolverError::NotModelProblem(format!("{} bulk reactions", p.bulk.n_reactions())));
    }
    let rs = &p.surface.base.reactions;
    if rs.len() != 1 || rs[0].alpha != [1, 1, 0] || rs[0].beta != [0, 0, 1] {
        return Err(SolverError::NotModelProblem(String::from(
            "surface network must be the single reaction A1 + A2 <=> A3",
        )));
    }
    if p.sorption.k_ad.iter().any(|&k| k <= 0.0) {
        return Err(SolverError::NotModelProblem(String::from("adsorption constants must be positive")));
    }
    Ok(())
}

/// Iteration count and average contraction ratio of the last step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhiStats {
    /// Evaluations of the map `T`.
    pub iterations: usize,
    /// Geometric mean of successive update ratios `‖h_{k+1} − h_k‖ /
    /// ‖h_k − h_{k−1}‖` (0 when a single evaluation sufficed).
    pub ratio: f64,
    /// Final fixed-point defect `‖T(h) − h‖_∞`.
    pub defect: f64,
}

/// Factored heat step for one species with Dirichlet or flux data at the
/// boundary faces.
#[derive(Debug, Clone)]
struct HeatStep {
    lu: BandMatrix,
    k: f64,
}

impl HeatStep {
    fn new(geom: &Geometry, k: f64, dirichlet: bool) -> Result<Self, SolverError> {
        let m = geom.n_tangential();
        let ny = geom.n_normal();
        let h = geom.h();
        let mut t = Triplets::new();
        for j in 0..ny {
            for i in 0..m {
                let c = j * m + i;
                let mut diag = 1.0;
                for (nb, at_boundary) in [(c.wrapping_sub(m), j == 0), (c + m, j == ny - 1)] {
                    if at_boundary {
                        // Dirichlet via ghost 2h − c: (2h − 2c)/h²
                        if dirichlet {
                            diag += 2.0 * k / (h * h);
                        }
                    } else {
                        diag += k / (h * h);
                        t.push(c, nb, -k / (h * h));
                    }
                }
                if let Some(hx) = geom.hx() {
                    diag += 2.0 * k / (hx * hx);
                    t.push(c, j * m + (i + m - 1) % m, -k / (hx * hx));
                    t.push(c, j * m + (i + 1) % m, -k / (hx * hx));
                }
                t.push(c, c, diag);
            }
        }
        let mut lu = t.to_band(geom.n_cells());
        lu.factor()?;
        Ok(HeatStep { lu, k })
    }
}

/// Time stepper for the model problem based on the subproblem iteration.
#[derive(Debug, Clone)]
pub struct PhiStepper {
    problem: FullProblem,
    cfg: StepperConfig,
    kappa: f64,
    /// Factored heat steps of species 1, 2 (flux data) and 3 (Dirichlet
    /// data) for the cached `dt`.
    factors: Option<(f64, [HeatStep; 3])>,
    /// Boundary values of species 3 from the last step.
    last_h: Option<Vec<f64>>,
    pub last: PhiStats,
}

impl PhiStepper {
    pub fn new(p: &FullProblem, cfg: &StepperConfig) -> Result<Self, SolverError> {
        p.validate()?;
        cfg.validate()?;
        let kappa = mp_kappa(p)?;
        Ok(PhiStepper { problem: p.clone(), cfg: *cfg, kappa, factors: None, last_h: None, last: PhiStats::default() })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn ensure_factors(&mut self, dt: f64) -> Result<(), SolverError> {
        if matches!(&self.factors, Some((cached, _)) if *cached == dt) {
            return Ok(());
        }
        let g = &self.problem.geometry;
        let a = self.problem.coefficients().diff;
        let d = &self.problem.d;
        let f = [
            HeatStep::new(g, dt * a * d[0], false)?,
            HeatStep::new(g, dt * a * d[1], false)?,
            HeatStep::new(g, dt * a * d[2], true)?,
        ];
        self.factors = Some((dt, f));
        Ok(())
    }

    /// Evaluates `T(h)`; returns the map value and the three species
    /// fields (cell-major per species).
    fn map(&self, old: &SystemState, dt: f64, hb: &[f64]) -> (Vec<f64>, [Vec<f64>; 3]) {
        let p = &self.problem;
        let geom = &p.geometry;
        let a = p.coefficients().diff;
        let gh = geom.h();
        let (_, f) = self.factors.as_ref().expect("factors prepared");
        let nn = geom.n_nodes();
        let inward: Vec<usize> = (0..nn).map(|k| geom.inward_cell(k, 0)).collect();

        let mut c3 = old.bulk.species(2);
        for k in 0..nn {
            c3[inward[k]] += 2.0 * f[2].k * hb[k] / (gh * gh);
        }
        f[2].lu.solve_in_place(&mut c3);
        // q3 = d_3 ∂_n c_3 with the ghost 2h − c
        let q3: Vec<f64> = (0..nn).map(|k| 2.0 * p.d[2] * (hb[k] - c3[inward[k]]) / gh).collect();

        let mut out = [Vec::new(), Vec::new(), c3];
        let mut traces = [vec![0.0; nn], vec![0.0; nn]];
        for s in 0..2 {
            let mut c = old.bulk.species(s);
            for k in 0..nn {
                // d_s ∂_n c_s = −q3
                c[inward[k]] -= dt * a * q3[k] / gh;
            }
            f[s].lu.solve_in_place(&mut c);
            for k in 0..nn {
                traces[s][k] = c[inward[k]] - 0.5 * gh * q3[k] / p.d[s];
            }
            out[s] = c;
        }
        let t: Vec<f64> = (0..nn).map(|k| traces[0][k] * traces[1][k] / self.kappa).collect();
        (t, out)
    }

    /// One implicit Euler step of size `cfg.dt`.
    pub fn step(&mut self, state: &SystemState) -> Result<SystemState, SolverError> {
        self.step_dt(state, self.cfg.dt)
    }

    pub fn step_dt(&mut self, state: &SystemState, dt: f64) -> Result<SystemState, SolverError> {
        self.ensure_factors(dt)?;
        let p = &self.problem;
        let geom = p.geometry;
        let nn = geom.n_nodes();
        let d = &p.d;
        let mut h = match &self.last_h {
            Some(h) => h.clone(),
            None => {
                let tr = boundary_trace(&state.bulk, &geom);
                (0..nn).map(|k| tr[k * 3 + 2]).collect()
            }
        };
        let (mut t, mut fields) = self.map(state, dt, &h);
        let mut evals = 1;
        let mut defect: Vec<f64> = t.iter().zip(&h).map(|(a, b)| a - b).collect();
        let mut first_update = None;
        let mut last_update = 0.0;
        // initial slope estimate dT/dh of a half-space heat step
        let mut slope: Vec<f64> = (0..nn)
            .map(|k| {
                let c = geom.inward_cell(k, 0);
                let t1 = state.bulk.get(c, 0).max(0.0);
                let t2 = state.bulk.get(c, 1).max(0.0);
                (-(t2 * sqrt(d[2] / d[0]) + t1 * sqrt(d[2] / d[1])) / self.kappa).clamp(SLOPE_MIN, SLOPE_MAX)
            })
            .collect();
        while max_abs(&defect) > self.cfg.phi_tol {
            if evals >= self.cfg.phi_max_iter {
                let ratio = ratio_of(first_update, last_update, evals);
                return Err(SolverError::PhiNoContraction { ratio, iterations: evals });
            }
            let h_new: Vec<f64> = (0..nn).map(|k| h[k] + defect[k] / (1.0 - slope[k])).collect();
            let (t_new, f_new) = self.map(state, dt, &h_new);
            evals += 1;
            let defect_new: Vec<f64> = t_new.iter().zip(&h_new).map(|(a, b)| a - b).collect();
            for k in 0..nn {
                let dh = h_new[k] - h[k];
                if dh.abs() > 1e-300 {
                    let s = (t_new[k] - t[k]) / dh;
                    if s.is_finite() {
                        slope[k] = s.clamp(SLOPE_MIN, SLOPE_MAX);
                    }
                }
            }
            let update: f64 = (0..nn).map(|k| (h_new[k] - h[k]).abs()).fold(0.0, f64::max);
            if first_update.is_none() {
                first_update = Some(update);
            }
            last_update = update;
            h = h_new;
            t = t_new;
            fields = f_new;
            defect = defect_new;
            if !max_abs(&defect).is_finite() {
                return Err(SolverError::PhiNoContraction { ratio: f64::INFINITY, iterations: evals });
            }
        }
        self.last =
            PhiStats { iterations: evals, ratio: ratio_of(first_update, last_update, evals), defect: max_abs(&defect) };
        let mut next = state.clone();
        for (s, f) in fields.iter().enumerate() {
            for (c, v) in f.iter().enumerate() {
                next.bulk.set(c, s, *v);
            }
        }
        next.time = state.time + dt;
        self.last_h = Some(h);
        let (min, location) = next.minimum(false);
        if min < -super::NEGATIVITY_TOL {
            return Err(SolverError::Negative { value: min, location, time: next.time });
        }
        Ok(next)
    }
}

fn ratio_of(first: Option<f64>, last: f64, evals: usize) -> f64 {
    match first {
        Some(f) if evals > 2 && f > 0.0 => libm::pow(last / f, 1.0 / (evals - 2) as f64),
        _ => 0.0,
    }
}

/// One step of the subproblem iteration from a cold start.
pub fn phi_fixed_point(
    p: &FullProblem,
    s: &SystemState,
    cfg: &StepperConfig,
) -> Result<(SystemState, PhiStats), SolverError> {
    let mut st = PhiStepper::new(p, cfg)?;
    let out = st.step(s)?;
    Ok((out, st.last))
}
