//! Steady state of the surface system with frozen bulk traces, found by
//! pseudo-transient continuation.

use alloc::vec;
use alloc::vec::Vec;

use super::assemble::{surface_divergence, RowScales};
use super::{FullProblem, SolverError, StepperConfig};
use crate::grid::SurfaceField;
use crate::linalg::Triplets;
use crate::math::max_abs;
use crate::surface::SurfaceState;

/// Upper bound of the pseudo time step.
const MAX_PSEUDO_DT: f64 = 1e14;
/// Slack below zero tolerated for intermediate iterates.
const ITERATE_SLACK: f64 = 1e-14;
/// Fraction of the tolerance aimed at before stopping.
const POLISH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorReport {
    pub field: SurfaceField,
    /// Scaled steady-state residual at the returned field.
    pub residual: f64,
    pub iterations: usize,
    /// Whether the second start reached the same state (always `true`
    /// without a second start).
    pub unique: bool,
    /// Max-norm distance between the two starts' results.
    pub start_difference: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum AttractorStart<'a> {
    /// Start from the given field with a cautious pseudo time step.
    Given(&'a SurfaceField),
    /// Start from a nearby previous attractor with a large pseudo time step.
    Warm(&'a SurfaceField),
}

/// Steady state `θ^∞` of the surface system for frozen bulk traces
/// `c_trace` (`node * N + species`). With `double_start`, a second run
/// from a different initial occupancy checks that the limit does not
/// depend on the start.
pub fn surface_attractor(
    p: &FullProblem,
    c_trace: &[f64],
    cfg: &StepperConfig,
    init: Option<&SurfaceField>,
    double_start: bool,
) -> Result<AttractorReport, SolverError> {
    let n = p.n_species();
    let nn = p.geometry.n_nodes();
    if c_trace.len() != nn * n {
        return Err(SolverError::Config(alloc::format!("expected {} trace values, got {}", nn * n, c_trace.len())));
    }
    if c_trace.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(SolverError::Config(alloc::string::String::from("traces must be nonnegative")));
    }
    let empty = SurfaceField::empty(n, nn);
    let first = init.unwrap_or(&empty);
    let mut rep = attractor_from(p, c_trace, cfg, AttractorStart::Given(first))?;
    if double_start {
        let uniform = SurfaceField::uniform(&SurfaceState { theta: vec![1.0 / (n as f64 + 1.0); n + 1] }, nn);
        let second = if init.is_none() { &uniform } else { &empty };
        let other = attractor_from(p, c_trace, cfg, AttractorStart::Given(second))?;
        let diff = rep
            .field
            .nodes
            .iter()
            .zip(&other.field.nodes)
            .map(|(a, b)| crate::math::max_diff(&a.theta, &b.theta))
            .fold(0.0, f64::max);
        rep.start_difference = diff;
        rep.unique = diff <= cfg.attractor_unique_tol;
        rep.iterations += other.iterations;
    }
    Ok(rep)
}

/// Right-hand side `a_sd div + a_sc r + a_so s` of the surface system at
/// the reduced occupancies `u` (`node * N + i - 1`), with its Jacobian.
fn surface_rhs(p: &FullProblem, c_trace: &[f64], u: &[f64], jac: Option<&mut Triplets>) -> Vec<f64> {
    let n = p.n_species();
    let n1 = n + 1;
    let nn = p.geometry.n_nodes();
    let co = p.coefficients();
    let thetas: Vec<Vec<f64>> = (0..nn)
        .map(|k| {
            let red = &u[k * n..(k + 1) * n];
            let mut t = vec![1.0 - red.iter().sum::<f64>()];
            t.extend_from_slice(red);
            t
        })
        .collect();
    let want = jac.is_some();
    let refs: Vec<&[f64]> = thetas.iter().map(|t| t.as_slice()).collect();
    let div = surface_divergence(&p.geometry, p.surface_diffusion.as_ref(), &refs, want);
    let mut f = vec![0.0; nn * n];
    let mut rate = vec![0.0; n1];
    let mut jac = jac;
    for k in 0..nn {
        let th = &thetas[k];
        p.surface.rate_into(th, &mut rate);
        let rjac = if want { p.surface.rate_jacobian(th) } else { Vec::new() };
        for i in 1..=n {
            let t = c_trace[k * n + i - 1];
            let s = p.sorption.k_ad[i - 1] * t * th[0] - p.sorption.k_de[i - 1] * th[i];
            let d = div.as_ref().map_or(0.0, |d| d.div[k * n1 + i]);
            let row = k * n + i - 1;
            f[row] = co.sdiff * d + co.schem * rate[i] + co.sorp * s;
            if let Some(jac) = jac.as_deref_mut() {
                // derivatives with respect to the full occupancy vector
                let mut cs = vec![0.0; n1];
                cs[0] += co.sorp * p.sorption.k_ad[i - 1] * t;
                cs[i] -= co.sorp * p.sorption.k_de[i - 1];
                for q in 0..n1 {
                    let dr: f64 = p
                        .surface
                        .extended
                        .iter()
                        .enumerate()
                        .map(|(a, rx)| (f64::from(rx.beta[i]) - f64::from(rx.alpha[i])) * rjac[a * n1 + q])
                        .sum();
                    cs[q] += co.schem * dr;
                }
                let mut push = |node: usize, coeff: &[f64]| {
                    for j in 0..n {
                        jac.push(row, node * n + j, coeff[j + 1] - coeff[0]);
                    }
                };
                if let Some(d) = div.as_ref() {
                    let (l, r) = p.geometry.node_neighbours(k).unwrap_or((k, k));
                    let cl: Vec<f64> = (0..n1).map(|q| co.sdiff * d.d_left[k][i * n1 + q]).collect();
                    let cr: Vec<f64> = (0..n1).map(|q| co.sdiff * d.d_right[k][i * n1 + q]).collect();
                    for q in 0..n1 {
                        cs[q] += co.sdiff * d.d_self[k][i * n1 + q];
                    }
                    push(l, &cl);
                    push(r, &cr);
                }
                push(k, &cs);
            }
        }
    }
    f
}

fn admissible(u: &[f64], n: usize) -> bool {
    u.chunks(n).all(|red| red.iter().all(|&v| v >= -ITERATE_SLACK) && red.iter().sum::<f64>() <= 1.0 + ITERATE_SLACK)
}

pub(crate) fn attractor_from(
    p: &FullProblem,
    c_trace: &[f64],
    cfg: &StepperConfig,
    start: AttractorStart<'_>,
) -> Result<AttractorReport, SolverError> {
    let n = p.n_species();
    let nn = p.geometry.n_nodes();
    let (field, mut delta) = match start {
        AttractorStart::Given(f) => (f, 1.0),
        AttractorStart::Warm(f) => (f, 1e6),
    };
    let scale = RowScales::new(p, &[]).steady;
    let mut u: Vec<f64> = field.nodes.iter().flat_map(|s| s.theta[1..].iter().copied()).collect();
    let dim = nn * n;
    let mut jac = Triplets::new();
    let mut res = scale * max_abs(&surface_rhs(p, c_trace, &u, None));
    let mut iterations = 0;
    // iterate somewhat below the tolerance so that the state error, not
    // only the scaled residual, meets it; stalling there is acceptable
    let target = POLISH * cfg.attractor_tol;
    while res > target {
        if iterations >= cfg.attractor_max_iter || !res.is_finite() {
            if res <= cfg.attractor_tol {
                break;
            }
            return Err(SolverError::AttractorDivergence { residual: res, iterations });
        }
        iterations += 1;
        jac.clear();
        let f = surface_rhs(p, c_trace, &u, Some(&mut jac));
        let mut accepted = false;
        for _ in 0..40 {
            // (I/δ − scale J) Δ = scale F
            let mut m = Triplets::new();
            for &(r, c, v) in jac.iter() {
                m.push(r, c, -scale * v);
            }
            for r in 0..dim {
                m.push(r, r, 1.0 / delta);
            }
            let mut band = m.to_band(dim);
            let mut step: Vec<f64> = f.iter().map(|v| scale * v).collect();
            if band.factor().is_ok() {
                band.solve_in_place(&mut step);
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
                if admissible(&trial, n) {
                    let new_res = scale * max_abs(&surface_rhs(p, c_trace, &trial, None));
                    if new_res.is_finite() && new_res < 2.0 * res {
                        delta = (delta * (res / new_res.max(1e-300)).min(10.0)).min(MAX_PSEUDO_DT);
                        u = trial;
                        res = new_res;
                        accepted = true;
                        break;
                    }
                }
            }
            delta *= 0.25;
        }
        if !accepted {
            if res <= cfg.attractor_tol {
                break;
            }
            return Err(SolverError::AttractorDivergence { residual: res, iterations });
        }
    }
    let nodes = u
        .chunks(n)
        .map(|red| {
            let mut theta = vec![1.0 - red.iter().sum::<f64>()];
            theta.extend_from_slice(red);
            SurfaceState { theta }
        })
        .collect();
    Ok(AttractorReport {
        field: SurfaceField { nodes },
        residual: res,
        iterations,
        unique: true,
        start_difference: 0.0,
    })
}
