//! Residual and Jacobian assembly for the monolithic Newton solve.
//!
//! Unknowns are ordered so the Jacobian is banded:
//! `[bottom node blocks][cells][top node blocks]`, where a node block holds
//! the surface unknowns of that node followed by its `N` ghost values and a
//! cell holds its `N` concentrations. Residual rows use the same indices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::attractor::{attractor_from, AttractorStart};
use super::{Compatibility, FullProblem, ModelVariant, Preparation, SolverError, Stepper, SystemState};
use crate::grid::{boundary_trace, Geometry, SurfaceField};
use crate::linalg::{solve_dense, Triplets};
use crate::math::{max_abs, max_diff};
use crate::network::{monomial, monomial_partial};
use crate::surface::{SurfaceDiffusion, SurfaceState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Layout {
    pub n: usize,
    pub ns: usize,
    pub block: usize,
    pub tang: usize,
    pub n_cells: usize,
    pub n_nodes: usize,
}

impl Layout {
    pub fn new(geom: &Geometry, n: usize, ns: usize) -> Self {
        Layout { n, ns, block: ns + n, tang: geom.n_tangential(), n_cells: geom.n_cells(), n_nodes: geom.n_nodes() }
    }

    fn first_cell(&self) -> usize {
        self.tang * self.block
    }

    pub fn node(&self, k: usize) -> usize {
        if k < self.tang {
            k * self.block
        } else {
            self.first_cell() + self.n_cells * self.n + (k - self.tang) * self.block
        }
    }

    pub fn surf(&self, k: usize, i: usize) -> usize {
        self.node(k) + i
    }

    pub fn ghost(&self, k: usize, i: usize) -> usize {
        self.node(k) + self.ns + i
    }

    pub fn cell(&self, c: usize, i: usize) -> usize {
        self.first_cell() + c * self.n + i
    }

    pub fn len(&self) -> usize {
        2 * self.tang * self.block + self.n_cells * self.n
    }
}

/// Static row scalings that bring the stiff boundary rows to order one.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RowScales {
    pub trans: Vec<f64>,
    pub sorp: Vec<f64>,
    pub reaction: Vec<f64>,
    pub three_flux: Vec<f64>,
    pub three_eq: Vec<f64>,
    pub steady: f64,
    /// `κ^f K^α` and `κ^b K^β` of the boundary equilibrium relations.
    pub eq_fwd: Vec<f64>,
    pub eq_bwd: Vec<f64>,
}

impl RowScales {
    pub fn new(p: &FullProblem, basis: &[Vec<f64>]) -> Self {
        let co = p.coefficients();
        let h = p.geometry.h();
        let n = p.n_species();
        let so = &p.sorption;
        let trans = (0..n).map(|i| 1.0 / (co.trans * p.d[i] / h + co.sorp * (so.k_ad[i] + so.k_de[i]))).collect();
        let sorp = (0..n).map(|i| 1.0 / (so.k_ad[i] + so.k_de[i])).collect();
        let reaction = p.surface.extended.iter().map(|r| 1.0 / (r.k_f + r.k_b)).collect();
        let three_flux = basis.iter().map(|e| h / e.iter().zip(&p.d).map(|(e, d)| e.abs() * d).sum::<f64>()).collect();
        let k_iso = so.isotherm_constants();
        let kpow = |exps: &[u32]| -> f64 { exps.iter().zip(&k_iso).map(|(&e, &k)| crate::math::powu(k, e)).product() };
        let eq_fwd: Vec<f64> = p.surface.base.reactions.iter().map(|r| r.k_f * kpow(&r.alpha)).collect();
        let eq_bwd: Vec<f64> = p.surface.base.reactions.iter().map(|r| r.k_b * kpow(&r.beta)).collect();
        let three_eq = eq_fwd.iter().zip(&eq_bwd).map(|(f, b)| 1.0 / (f + b).max(f64::MIN_POSITIVE)).collect();
        let d_scale = {
            let uniform = vec![1.0 / (n as f64 + 1.0); n + 1];
            max_abs(&p.surface_diffusion.matrix(&uniform))
        };
        let hx = p.geometry.hx();
        let sd = hx.map_or(0.0, |hx| co.sdiff * 4.0 * d_scale / (hx * hx));
        let kmax = p.surface.extended.iter().map(|r| r.k_f + r.k_b).fold(0.0, f64::max);
        let smax = (0..n).map(|i| so.k_ad[i] + so.k_de[i]).fold(0.0, f64::max);
        let dmax = p.d.iter().cloned().fold(0.0, f64::max);
        let steady = 1.0 / (sd + co.schem * kmax + co.sorp * smax + co.trans * dmax / h).max(1e-300);
        RowScales { trans, sorp, reaction, three_flux, three_eq, steady, eq_fwd, eq_bwd }
    }
}

/// Occupancies of one node and their derivatives with respect to the
/// node's surface unknowns, `dtheta[l * ns + j] = ∂θ_l / ∂u_j`.
#[derive(Debug, Clone)]
pub(crate) struct NodeTheta {
    pub theta: Vec<f64>,
    pub dtheta: Vec<f64>,
}

fn node_theta(variant: ModelVariant, n: usize, u: &[f64]) -> NodeTheta {
    let ns = u.len();
    let mut theta = vec![0.0; n + 1];
    let mut dtheta = vec![0.0; (n + 1) * ns];
    match variant {
        ModelVariant::FastSurfaceDiffusion => {
            theta[0] = u[0];
            dtheta[0] = 1.0;
            for i in 1..=n {
                theta[i] = (1.0 - u[0]) / n as f64;
                dtheta[i * ns] = -1.0 / n as f64;
            }
        }
        ModelVariant::ThreeParamMP => {}
        _ => {
            theta[0] = 1.0 - u.iter().sum::<f64>();
            for j in 0..ns {
                dtheta[j] = -1.0;
                theta[j + 1] = u[j];
                dtheta[(j + 1) * ns + j] = 1.0;
            }
        }
    }
    NodeTheta { theta, dtheta }
}

/// Surface unknowns representing a full occupancy vector.
fn theta_to_unknowns(variant: ModelVariant, theta: &[f64]) -> Vec<f64> {
    match variant {
        ModelVariant::FastSurfaceDiffusion => vec![theta[0]],
        ModelVariant::ThreeParamMP => Vec::new(),
        _ => theta[1..].to_vec(),
    }
}

/// Discrete Fick-Onsager flux `D(θ̄)(θ_q − θ_p)` across the face between
/// two neighbouring nodes, with derivatives `∂F/∂θ_p`, `∂F/∂θ_q`
/// (row-major `(1+N) × (1+N)`).
pub(crate) struct FaceFlux {
    pub f: Vec<f64>,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
}

pub(crate) fn face_flux(model: &dyn SurfaceDiffusion, tp: &[f64], tq: &[f64], want_jac: bool) -> FaceFlux {
    let n1 = tp.len();
    let mean: Vec<f64> = tp.iter().zip(tq).map(|(a, b)| 0.5 * (a + b)).collect();
    let delta: Vec<f64> = tp.iter().zip(tq).map(|(a, b)| b - a).collect();
    let d = model.matrix(&mean);
    let f: Vec<f64> = (0..n1).map(|i| (0..n1).map(|j| d[i * n1 + j] * delta[j]).sum()).collect();
    if !want_jac {
        return FaceFlux { f, dp: Vec::new(), dq: Vec::new() };
    }
    let mut dp = vec![0.0; n1 * n1];
    let mut dq = vec![0.0; n1 * n1];
    for l in 0..n1 {
        let dd = model.derivative(&mean, l);
        for i in 0..n1 {
            let half: f64 = 0.5 * (0..n1).map(|j| dd[i * n1 + j] * delta[j]).sum::<f64>();
            dq[i * n1 + l] = d[i * n1 + l] + half;
            dp[i * n1 + l] = -d[i * n1 + l] + half;
        }
    }
    FaceFlux { f, dp, dq }
}

/// Surface divergence `div(D ∇θ)` at every node with its derivatives with
/// respect to the occupancies of the node and its two neighbours.
pub(crate) struct SurfaceDivergence {
    /// `div[k * (N+1) + i]`.
    pub div: Vec<f64>,
    /// `(left, self, right)` derivative blocks per node.
    pub d_left: Vec<Vec<f64>>,
    pub d_self: Vec<Vec<f64>>,
    pub d_right: Vec<Vec<f64>>,
}

pub(crate) fn surface_divergence(
    geom: &Geometry,
    model: &dyn SurfaceDiffusion,
    thetas: &[&[f64]],
    want_jac: bool,
) -> Option<SurfaceDivergence> {
    let hx = geom.hx()?;
    let nn = thetas.len();
    let n1 = thetas[0].len();
    let inv = 1.0 / (hx * hx);
    // face k lies between node k and its right neighbour
    let faces: Vec<FaceFlux> = (0..nn)
        .map(|k| {
            let (_, r) = geom.node_neighbours(k).unwrap_or((k, k));
            face_flux(model, thetas[k], thetas[r], want_jac)
        })
        .collect();
    let mut div = vec![0.0; nn * n1];
    let mut d_left = Vec::new();
    let mut d_self = Vec::new();
    let mut d_right = Vec::new();
    for k in 0..nn {
        let (l, _) = geom.node_neighbours(k).unwrap_or((k, k));
        for i in 0..n1 {
            div[k * n1 + i] = (faces[k].f[i] - faces[l].f[i]) * inv;
        }
        if want_jac {
            d_right.push(faces[k].dq.iter().map(|v| v * inv).collect());
            d_self.push(faces[k].dp.iter().zip(&faces[l].dq).map(|(a, b)| (a - b) * inv).collect());
            d_left.push(faces[l].dp.iter().map(|v| -v * inv).collect());
        }
    }
    Some(SurfaceDivergence { div, d_left, d_self, d_right })
}

fn uses_surface_diffusion(v: ModelVariant) -> bool {
    !matches!(v, ModelVariant::FastSurfaceDiffusion | ModelVariant::ThreeParamMP)
}

/// Pushes `Σ_l coeff[l] ∂θ_l/∂u_j` for every surface unknown of `node`.
fn push_theta(jac: &mut Triplets, lay: &Layout, row: usize, node: usize, nt: &NodeTheta, coeff: &[f64], scale: f64) {
    let ns = lay.ns;
    for j in 0..ns {
        let v: f64 = coeff.iter().enumerate().map(|(l, c)| c * nt.dtheta[l * ns + j]).sum();
        jac.push(row, lay.surf(node, j), scale * v);
    }
}

/// Scaled residual of the step `old → x`; the Jacobian is accumulated
/// into `jac` when given.
pub(crate) fn residual(
    st: &Stepper,
    x: &[f64],
    old: &SystemState,
    dt: f64,
    mut jac: Option<&mut Triplets>,
) -> Vec<f64> {
    let p = &st.problem;
    let lay = &st.layout;
    let geom = &p.geometry;
    let n = lay.n;
    let ns = lay.ns;
    let co = p.coefficients();
    let h = geom.h();
    let mut r = vec![0.0; lay.len()];
    let want = jac.is_some();

    // bulk rows
    let m = geom.n_tangential();
    let ny = geom.n_normal();
    let hx = geom.hx();
    let has_bulk_rx = p.bulk.n_reactions() > 0;
    let mut rate = vec![0.0; n];
    let mut rjac = vec![0.0; n * n];
    for j in 0..ny {
        for i in 0..m {
            let c = j * m + i;
            let cs = &x[lay.cell(c, 0)..lay.cell(c, 0) + n];
            if has_bulk_rx {
                p.bulk.rate_into(cs, &mut rate);
                if want {
                    p.bulk.jacobian_into(cs, &mut rjac);
                }
            }
            for s in 0..n {
                let row = lay.cell(c, s);
                let below = if j == 0 { lay.ghost(i, s) } else { lay.cell(c - m, s) };
                let above = if j == ny - 1 { lay.ghost(m + i, s) } else { lay.cell(c + m, s) };
                let k = dt * co.diff * p.d[s];
                let mut lap = (x[below] - 2.0 * x[row] + x[above]) / (h * h);
                let mut diag = 1.0 + 2.0 * k / (h * h);
                let mut sides = None;
                if let Some(hx) = hx {
                    let left = lay.cell(j * m + (i + m - 1) % m, s);
                    let right = lay.cell(j * m + (i + 1) % m, s);
                    lap += (x[left] - 2.0 * x[row] + x[right]) / (hx * hx);
                    diag += 2.0 * k / (hx * hx);
                    sides = Some((left, right, hx));
                }
                let react = if has_bulk_rx { rate[s] } else { 0.0 };
                r[row] = x[row] - old.bulk.get(c, s) - dt * (co.diff * p.d[s] * lap + co.react * react);
                if let Some(jac) = jac.as_deref_mut() {
                    jac.push(row, row, diag);
                    jac.push(row, below, -k / (h * h));
                    jac.push(row, above, -k / (h * h));
                    if let Some((left, right, hx)) = sides {
                        jac.push(row, left, -k / (hx * hx));
                        jac.push(row, right, -k / (hx * hx));
                    }
                    if has_bulk_rx {
                        for q in 0..n {
                            jac.push(row, lay.cell(c, q), -dt * co.react * rjac[s * n + q]);
                        }
                    }
                }
            }
        }
    }

    // surface state at every node
    let thetas: Vec<NodeTheta> =
        (0..lay.n_nodes).map(|k| node_theta(st.variant, n, &x[lay.surf(k, 0)..lay.surf(k, 0) + ns])).collect();
    let divergence = if uses_surface_diffusion(st.variant) {
        let refs: Vec<&[f64]> = thetas.iter().map(|t| t.theta.as_slice()).collect();
        surface_divergence(geom, p.surface_diffusion.as_ref(), &refs, want)
    } else {
        None
    };

    let n1 = n + 1;
    let n_sigma = st.surface_basis.len();
    let sc = &st.row_scale;
    let mut srate = vec![0.0; n1];
    for k in 0..lay.n_nodes {
        let a = geom.inward_cell(k, 0);
        let nt = &thetas[k];
        let th = &nt.theta;
        let told = &old.surface.nodes[k].theta;
        let g = |i: usize| x[lay.ghost(k, i)];
        let ca = |i: usize| x[lay.cell(a, i)];
        let trace: Vec<f64> = (0..n).map(|i| 0.5 * (g(i) + ca(i))).collect();
        // surface gain from the bulk, −a_tr d ∂_n c
        let fin: Vec<f64> = (0..n).map(|i| -co.trans * p.d[i] * (g(i) - ca(i)) / h).collect();
        let dfin_dg: Vec<f64> = (0..n).map(|i| -co.trans * p.d[i] / h).collect();
        let sorp_rate = |i: usize| p.sorption.k_ad[i] * trace[i] * th[0] - p.sorption.k_de[i] * th[i + 1];

        let surface_reactions = st.variant != ModelVariant::ThreeParamMP && p.surface.n_reactions() > 0;
        if surface_reactions {
            p.surface.rate_into(th, &mut srate);
        } else {
            srate.iter_mut().for_each(|v| *v = 0.0);
        }
        let rjac = if want && surface_reactions { p.surface.rate_jacobian(th) } else { Vec::new() };
        // ∂r_i/∂θ_l over all slots
        let dsrate = |i: usize, l: usize| -> f64 {
            p.surface
                .extended
                .iter()
                .enumerate()
                .map(|(aa, rx)| (f64::from(rx.beta[i]) - f64::from(rx.alpha[i])) * rjac[aa * n1 + l])
                .sum()
        };
        let div_i = |i: usize| divergence.as_ref().map_or(0.0, |d| d.div[k * n1 + i]);

        // derivative of a surface dynamic term `dt (a_sd div_i + a_sc r_i)`
        // with respect to θ at this node and at the neighbours
        let push_dynamics = |jac: &mut Triplets, row: usize, coeffs_self: &mut Vec<f64>, weight: &[f64], scale: f64| {
            // weight[i] for slot i; coeffs_self accumulates ∂/∂θ^k
            if let Some(d) = divergence.as_ref() {
                let (l, rr) = geom.node_neighbours(k).unwrap_or((k, k));
                let mut cl = vec![0.0; n1];
                let mut cr = vec![0.0; n1];
                for (i, &w) in weight.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for q in 0..n1 {
                        cl[q] -= dt * co.sdiff * w * d.d_left[k][i * n1 + q];
                        cr[q] -= dt * co.sdiff * w * d.d_right[k][i * n1 + q];
                        coeffs_self[q] -= dt * co.sdiff * w * d.d_self[k][i * n1 + q];
                    }
                }
                push_theta(jac, lay, row, l, &thetas[l], &cl, scale);
                push_theta(jac, lay, row, rr, &thetas[rr], &cr, scale);
            }
            if surface_reactions {
                for (i, &w) in weight.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for q in 0..n1 {
                        coeffs_self[q] -= dt * co.schem * w * dsrate(i, q);
                    }
                }
            }
        };

        match st.variant {
            ModelVariant::Full | ModelVariant::FastSorption => {
                for i in 1..=n {
                    let row = lay.surf(k, i - 1);
                    r[row] = th[i] - told[i] - dt * (co.sdiff * div_i(i) + co.schem * srate[i] + fin[i - 1]);
                    if let Some(jac) = jac.as_deref_mut() {
                        let mut cs = vec![0.0; n1];
                        cs[i] = 1.0;
                        let mut w = vec![0.0; n1];
                        w[i] = 1.0;
                        push_dynamics(jac, row, &mut cs, &w, 1.0);
                        push_theta(jac, lay, row, k, nt, &cs, 1.0);
                        jac.push(row, lay.ghost(k, i - 1), -dt * dfin_dg[i - 1]);
                        jac.push(row, lay.cell(a, i - 1), dt * dfin_dg[i - 1]);
                    }
                }
            }
            ModelVariant::FastSurfaceChemistry | ModelVariant::TwoParamSorpChem => {
                for (kk, e) in st.surface_basis.iter().enumerate() {
                    let row = lay.surf(k, kk);
                    let mut v = 0.0;
                    for i in 1..=n {
                        v += e[i - 1] * (th[i] - told[i] - dt * (co.sdiff * div_i(i) + fin[i - 1]));
                    }
                    r[row] = v;
                    if let Some(jac) = jac.as_deref_mut() {
                        let mut cs = vec![0.0; n1];
                        let mut w = vec![0.0; n1];
                        cs[1..=n].copy_from_slice(&e[..n]);
                        w[1..=n].copy_from_slice(&e[..n]);
                        // reactions drop out of the projected rows
                        if divergence.is_some() {
                            let (l, rr) = geom.node_neighbours(k).unwrap_or((k, k));
                            let d = divergence.as_ref().map(|d| (d, l, rr));
                            if let Some((d, l, rr)) = d {
                                let mut cl = vec![0.0; n1];
                                let mut cr = vec![0.0; n1];
                                for i in 1..=n {
                                    for q in 0..n1 {
                                        cl[q] -= dt * co.sdiff * w[i] * d.d_left[k][i * n1 + q];
                                        cr[q] -= dt * co.sdiff * w[i] * d.d_right[k][i * n1 + q];
                                        cs[q] -= dt * co.sdiff * w[i] * d.d_self[k][i * n1 + q];
                                    }
                                }
                                push_theta(jac, lay, row, l, &thetas[l], &cl, 1.0);
                                push_theta(jac, lay, row, rr, &thetas[rr], &cr, 1.0);
                            }
                        }
                        push_theta(jac, lay, row, k, nt, &cs, 1.0);
                        for i in 0..n {
                            jac.push(row, lay.ghost(k, i), -dt * e[i] * dfin_dg[i]);
                            jac.push(row, lay.cell(a, i), dt * e[i] * dfin_dg[i]);
                        }
                    }
                }
                for (aa, rx) in p.surface.extended.iter().enumerate() {
                    let row = lay.surf(k, n_sigma + aa);
                    let s = sc.reaction[aa];
                    r[row] = s * rx.net_rate(th);
                    if let Some(jac) = jac.as_deref_mut() {
                        let cs: Vec<f64> = (0..n1).map(|q| rx.net_rate_partial(th, q)).collect();
                        push_theta(jac, lay, row, k, nt, &cs, s);
                    }
                }
            }
            ModelVariant::FastSurfaceDiffusion => {
                let row = lay.surf(k, 0);
                let total_in: f64 = fin.iter().sum();
                r[row] = th[0] - told[0] - dt * (co.schem * srate[0] - total_in);
                if let Some(jac) = jac.as_deref_mut() {
                    let mut cs = vec![0.0; n1];
                    cs[0] = 1.0;
                    let mut w = vec![0.0; n1];
                    w[0] = 1.0;
                    push_dynamics(jac, row, &mut cs, &w, 1.0);
                    push_theta(jac, lay, row, k, nt, &cs, 1.0);
                    for i in 0..n {
                        jac.push(row, lay.ghost(k, i), dt * dfin_dg[i]);
                        jac.push(row, lay.cell(a, i), -dt * dfin_dg[i]);
                    }
                }
            }
            ModelVariant::FastAccumulation => {
                let s = sc.steady;
                for i in 1..=n {
                    let row = lay.surf(k, i - 1);
                    r[row] = s * (co.sdiff * div_i(i) + co.schem * srate[i] + fin[i - 1]);
                    if let Some(jac) = jac.as_deref_mut() {
                        // reuse the dynamic-row helper with dt = −1
                        let mut cs = vec![0.0; n1];
                        let mut w = vec![0.0; n1];
                        w[i] = 1.0;
                        if let Some(d) = divergence.as_ref() {
                            let (l, rr) = geom.node_neighbours(k).unwrap_or((k, k));
                            let mut cl = vec![0.0; n1];
                            let mut cr = vec![0.0; n1];
                            for q in 0..n1 {
                                cl[q] += co.sdiff * d.d_left[k][i * n1 + q];
                                cr[q] += co.sdiff * d.d_right[k][i * n1 + q];
                                cs[q] += co.sdiff * d.d_self[k][i * n1 + q];
                            }
                            push_theta(jac, lay, row, l, &thetas[l], &cl, s);
                            push_theta(jac, lay, row, rr, &thetas[rr], &cr, s);
                        }
                        if surface_reactions {
                            for q in 0..n1 {
                                cs[q] += co.schem * dsrate(i, q);
                            }
                        }
                        push_theta(jac, lay, row, k, nt, &cs, s);
                        jac.push(row, lay.ghost(k, i - 1), s * dfin_dg[i - 1]);
                        jac.push(row, lay.cell(a, i - 1), -s * dfin_dg[i - 1]);
                    }
                }
            }
            ModelVariant::ThreeParamMP => {}
        }

        // boundary rows at the ghost indices
        match st.variant {
            ModelVariant::Full
            | ModelVariant::FastSurfaceChemistry
            | ModelVariant::FastSurfaceDiffusion
            | ModelVariant::FastAccumulation => {
                for i in 0..n {
                    let row = lay.ghost(k, i);
                    let s = sc.trans[i];
                    r[row] = s * (fin[i] - co.sorp * sorp_rate(i));
                    if let Some(jac) = jac.as_deref_mut() {
                        let ds_dt = p.sorption.k_ad[i] * th[0];
                        jac.push(row, lay.ghost(k, i), s * (dfin_dg[i] - co.sorp * 0.5 * ds_dt));
                        jac.push(row, lay.cell(a, i), s * (-dfin_dg[i] - co.sorp * 0.5 * ds_dt));
                        let mut cs = vec![0.0; n1];
                        cs[0] = -co.sorp * p.sorption.k_ad[i] * trace[i];
                        cs[i + 1] = co.sorp * p.sorption.k_de[i];
                        push_theta(jac, lay, row, k, nt, &cs, s);
                    }
                }
            }
            ModelVariant::FastSorption | ModelVariant::TwoParamSorpChem => {
                for i in 0..n {
                    let row = lay.ghost(k, i);
                    let s = sc.sorp[i];
                    r[row] = s * sorp_rate(i);
                    if let Some(jac) = jac.as_deref_mut() {
                        let ds_dt = p.sorption.k_ad[i] * th[0];
                        jac.push(row, lay.ghost(k, i), s * 0.5 * ds_dt);
                        jac.push(row, lay.cell(a, i), s * 0.5 * ds_dt);
                        let mut cs = vec![0.0; n1];
                        cs[0] = p.sorption.k_ad[i] * trace[i];
                        cs[i + 1] = -p.sorption.k_de[i];
                        push_theta(jac, lay, row, k, nt, &cs, s);
                    }
                }
            }
            ModelVariant::ThreeParamMP => {
                for (kk, e) in st.surface_basis.iter().enumerate() {
                    let row = lay.ghost(k, kk);
                    let s = sc.three_flux[kk];
                    r[row] = s * (0..n).map(|i| e[i] * p.d[i] * (g(i) - ca(i)) / h).sum::<f64>();
                    if let Some(jac) = jac.as_deref_mut() {
                        for i in 0..n {
                            jac.push(row, lay.ghost(k, i), s * e[i] * p.d[i] / h);
                            jac.push(row, lay.cell(a, i), -s * e[i] * p.d[i] / h);
                        }
                    }
                }
                for (aa, rx) in p.surface.base.reactions.iter().enumerate() {
                    let row = lay.ghost(k, n_sigma + aa);
                    let s = sc.three_eq[aa];
                    let (kf, kb) = (sc.eq_fwd[aa], sc.eq_bwd[aa]);
                    r[row] = s * (kf * monomial(&trace, &rx.alpha) - kb * monomial(&trace, &rx.beta));
                    if let Some(jac) = jac.as_deref_mut() {
                        for i in 0..n {
                            let dv = kf * monomial_partial(&trace, &rx.alpha, i)
                                - kb * monomial_partial(&trace, &rx.beta, i);
                            jac.push(row, lay.ghost(k, i), s * 0.5 * dv);
                            jac.push(row, lay.cell(a, i), s * 0.5 * dv);
                        }
                    }
                }
            }
        }
    }
    r
}

/// Unknown vector for a state, with cached ghosts or, without them,
/// ghosts reproducing the extrapolated face traces.
pub(crate) fn pack(st: &Stepper, s: &SystemState) -> Vec<f64> {
    let lay = &st.layout;
    let n = lay.n;
    let geom = &st.problem.geometry;
    let mut x = vec![0.0; lay.len()];
    for c in 0..lay.n_cells {
        for i in 0..n {
            x[lay.cell(c, i)] = s.bulk.get(c, i);
        }
    }
    let ghosts = st.ghosts.clone().unwrap_or_else(|| default_ghosts(st, s));
    for k in 0..lay.n_nodes {
        let u = theta_to_unknowns(st.variant, &s.surface.nodes[k].theta);
        for (j, v) in u.iter().enumerate() {
            x[lay.surf(k, j)] = *v;
        }
        let _ = geom;
        for i in 0..n {
            x[lay.ghost(k, i)] = ghosts[k * n + i];
        }
    }
    x
}

fn default_ghosts(st: &Stepper, s: &SystemState) -> Vec<f64> {
    let geom = &st.problem.geometry;
    let n = st.layout.n;
    let tr = boundary_trace(&s.bulk, geom);
    (0..geom.n_nodes() * n)
        .map(|k| {
            let c = geom.inward_cell(k / n, 0);
            2.0 * tr[k] - s.bulk.get(c, k % n)
        })
        .collect()
}

fn unpack(st: &Stepper, x: &[f64], old: &SystemState, dt: f64) -> (SystemState, Vec<f64>) {
    let lay = &st.layout;
    let n = lay.n;
    let mut bulk = old.bulk.clone();
    for c in 0..lay.n_cells {
        for i in 0..n {
            bulk.set(c, i, x[lay.cell(c, i)]);
        }
    }
    let mut surface = old.surface.clone();
    let mut ghosts = vec![0.0; lay.n_nodes * n];
    for k in 0..lay.n_nodes {
        if st.variant.has_surface() {
            let u = &x[lay.surf(k, 0)..lay.surf(k, 0) + lay.ns];
            surface.nodes[k] = SurfaceState { theta: node_theta(st.variant, n, u).theta };
        }
        for i in 0..n {
            ghosts[k * n + i] = x[lay.ghost(k, i)];
        }
    }
    (SystemState { bulk, surface, time: old.time + dt }, ghosts)
}

/// Traces `(g + c_1) / 2` from an unknown vector.
fn traces_of(st: &Stepper, x: &[f64]) -> Vec<f64> {
    let lay = &st.layout;
    let geom = &st.problem.geometry;
    let n = lay.n;
    (0..lay.n_nodes * n)
        .map(|q| {
            let (k, i) = (q / n, q % n);
            0.5 * (x[lay.ghost(k, i)] + x[lay.cell(geom.inward_cell(k, 0), i)])
        })
        .collect()
}

/// One Newton solve for the step `old → old + dt`. Returns the new state,
/// the iteration count, the final residual and the attractor iterations
/// (fast accumulation only).
pub(crate) fn newton_step(
    st: &mut Stepper,
    old: &SystemState,
    dt: f64,
) -> Result<(SystemState, usize, f64, Option<usize>), SolverError> {
    let mut x = pack(st, old);
    let lay = st.layout;
    let mut attractor_iters = None;
    if st.variant == ModelVariant::FastAccumulation {
        // start from the surface attractor of the current traces
        let tr = traces_of(st, &x);
        let start = SurfaceField { nodes: old.surface.nodes.clone() };
        let rep = attractor_from(&st.problem, &tr, &st.cfg, AttractorStart::Warm(&start))?;
        attractor_iters = Some(rep.iterations);
        for k in 0..lay.n_nodes {
            for i in 0..lay.n {
                x[lay.surf(k, i)] = rep.field.nodes[k].theta[i + 1];
            }
        }
    }
    let tol = st.cfg.newton_tol;
    let mut jac = Triplets::new();
    let mut last = f64::INFINITY;
    for iter in 0..=st.cfg.newton_max_iter {
        jac.clear();
        let r = residual(st, &x, old, dt, Some(&mut jac));
        let nr = max_abs(&r);
        if !nr.is_finite() {
            break;
        }
        last = nr;
        if nr <= tol {
            let (s, g) = unpack(st, &x, old, dt);
            st.ghosts = Some(g);
            return Ok((s, iter, nr, attractor_iters));
        }
        if iter == st.cfg.newton_max_iter {
            break;
        }
        let mut band = jac.to_band(lay.len());
        if band.factor().is_err() {
            break;
        }
        let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
        band.solve_in_place(&mut delta);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let rt = residual(st, &xt, old, dt, None);
            let nt = max_abs(&rt);
            if nt.is_finite() && (nt <= (1.0 - 1e-4 * lambda) * nr || nt <= tol) {
                x = xt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(SolverError::NewtonFailure { residual: last, dt, time: old.time })
}

/// Dense damped Newton for a small square system.
fn small_newton(
    x0: &[f64],
    mut f: impl FnMut(&[f64], &mut [f64], &mut [f64]),
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut j = vec![0.0; n * n];
    for _ in 0..max_iter {
        f(&x, &mut r, &mut j);
        let nr = max_abs(&r);
        if nr <= tol {
            return Some(x);
        }
        let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
        solve_dense(&mut j, n, &mut d).ok()?;
        let mut lambda = 1.0;
        let mut ok = false;
        for _ in 0..30 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + lambda * b).collect();
            let mut rt = vec![0.0; n];
            let mut jt = vec![0.0; n * n];
            f(&xt, &mut rt, &mut jt);
            // stay in the closed positive orthant
            if xt.iter().all(|&v| v >= 0.0) && max_abs(&rt) < (1.0 - 1e-4 * lambda) * nr {
                x = xt;
                ok = true;
                break;
            }
            lambda *= 0.5;
        }
        if !ok {
            return None;
        }
    }
    f(&x, &mut r, &mut j);
    (max_abs(&r) <= tol).then_some(x)
}

/// Projects reduced occupancies onto `{R_a(θ) = 0}` keeping `e^k·θ` fixed.
fn project_chemistry(st: &Stepper, theta: &[f64]) -> Option<Vec<f64>> {
    let p = &st.problem;
    let n = p.n_species();
    let basis = &st.surface_basis;
    let init = theta[1..].to_vec();
    let sc = &st.row_scale;
    let f = |u: &[f64], r: &mut [f64], j: &mut [f64]| {
        let mut th = vec![0.0; n + 1];
        th[0] = 1.0 - u.iter().sum::<f64>();
        th[1..].copy_from_slice(u);
        j.iter_mut().for_each(|v| *v = 0.0);
        for (kk, e) in basis.iter().enumerate() {
            r[kk] = e.iter().zip(u.iter().zip(&init)).map(|(e, (a, b))| e * (a - b)).sum();
            j[kk * n..(kk + 1) * n].copy_from_slice(e);
        }
        for (aa, rx) in p.surface.extended.iter().enumerate() {
            let row = basis.len() + aa;
            r[row] = sc.reaction[aa] * rx.net_rate(&th);
            let d0 = rx.net_rate_partial(&th, 0);
            for q in 0..n {
                j[row * n + q] = sc.reaction[aa] * (rx.net_rate_partial(&th, q + 1) - d0);
            }
        }
    };
    // start slightly inside the simplex so that monomials have slopes
    let start: Vec<f64> = init.iter().map(|v| v.max(1e-12)).collect();
    small_newton(&start, f, 1e-13, 100)
}

/// Traces satisfying the three-parameter boundary rows for fixed bulk.
fn three_param_traces(st: &Stepper, bulk_adj: &[f64], guess: &[f64]) -> Option<Vec<f64>> {
    let p = &st.problem;
    let n = p.n_species();
    let basis = &st.surface_basis;
    let sc = &st.row_scale;
    let f = |t: &[f64], r: &mut [f64], j: &mut [f64]| {
        j.iter_mut().for_each(|v| *v = 0.0);
        for (kk, e) in basis.iter().enumerate() {
            r[kk] = (0..n).map(|i| e[i] * p.d[i] * (t[i] - bulk_adj[i])).sum();
            for i in 0..n {
                j[kk * n + i] = e[i] * p.d[i];
            }
        }
        for (aa, rx) in p.surface.base.reactions.iter().enumerate() {
            let row = basis.len() + aa;
            let s = sc.three_eq[aa];
            r[row] = s * (sc.eq_fwd[aa] * monomial(t, &rx.alpha) - sc.eq_bwd[aa] * monomial(t, &rx.beta));
            for i in 0..n {
                j[row * n + i] = s
                    * (sc.eq_fwd[aa] * monomial_partial(t, &rx.alpha, i)
                        - sc.eq_bwd[aa] * monomial_partial(t, &rx.beta, i));
            }
        }
    };
    let start: Vec<f64> = guess.iter().map(|v| v.max(1e-12)).collect();
    small_newton(&start, f, 1e-14, 100)
}

/// Fits initial data to the variant's constraints, see [`Stepper::prepare`].
pub(crate) fn prepare(st: &mut Stepper, state: &SystemState) -> Result<(SystemState, Preparation), SolverError> {
    let p = st.problem.clone();
    let geom = p.geometry;
    let n = p.n_species();
    let tr = boundary_trace(&state.bulk, &geom);
    let mut out = state.clone();
    let mut prep = Preparation::default();
    st.ghosts = None;
    let sc = st.row_scale.clone();
    let sorption_violation = |theta: &[f64], t: &[f64]| -> f64 {
        (0..n)
            .map(|i| (sc.sorp[i] * (p.sorption.k_ad[i] * t[i] * theta[0] - p.sorption.k_de[i] * theta[i + 1])).abs())
            .fold(0.0, f64::max)
    };
    let reaction_violation = |theta: &[f64]| -> f64 {
        p.surface
            .extended
            .iter()
            .enumerate()
            .map(|(a, rx)| (sc.reaction[a] * rx.net_rate(theta)).abs())
            .fold(0.0, f64::max)
    };
    for k in 0..geom.n_nodes() {
        let t = &tr[k * n..(k + 1) * n];
        let theta = state.surface.nodes[k].theta.clone();
        let new_theta: Option<Vec<f64>> = match st.variant {
            ModelVariant::Full => None,
            ModelVariant::FastSorption => {
                prep.violation = prep.violation.max(sorption_violation(&theta, t));
                Some(p.sorption.equilibrium(t).theta)
            }
            ModelVariant::FastSurfaceChemistry | ModelVariant::TwoParamSorpChem => {
                prep.violation = prep.violation.max(reaction_violation(&theta));
                if st.variant == ModelVariant::TwoParamSorpChem {
                    prep.violation = prep.violation.max(sorption_violation(&theta, t));
                }
                let u = project_chemistry(st, &theta).ok_or_else(|| {
                    SolverError::Config(format!("could not project node {k} onto surface-chemical equilibrium"))
                })?;
                Some(SurfaceState::vacancy_closure(&u).map(|s| s.theta).unwrap_or(theta.clone()))
            }
            ModelVariant::FastSurfaceDiffusion => {
                let mut th = theta.clone();
                for v in th.iter_mut().skip(1) {
                    *v = (1.0 - theta[0]) / n as f64;
                }
                prep.violation = prep.violation.max(max_diff(&th, &theta));
                Some(th)
            }
            ModelVariant::FastAccumulation | ModelVariant::ThreeParamMP => None,
        };
        if let Some(th) = new_theta {
            prep.distance = prep.distance.max(max_diff(&th, &theta));
            out.surface.nodes[k] = SurfaceState { theta: th };
        }
    }
    match st.variant {
        ModelVariant::FastAccumulation => {
            let rep = attractor_from(&p, &tr, &st.cfg, AttractorStart::Given(&state.surface))?;
            for k in 0..geom.n_nodes() {
                prep.distance = prep.distance.max(max_diff(&rep.field.nodes[k].theta, &state.surface.nodes[k].theta));
            }
            prep.violation = prep.distance;
            out.surface = rep.field;
        }
        ModelVariant::ThreeParamMP => {
            let mut ghosts = vec![0.0; geom.n_nodes() * n];
            for k in 0..geom.n_nodes() {
                let t = &tr[k * n..(k + 1) * n];
                let v = p
                    .surface
                    .base
                    .reactions
                    .iter()
                    .enumerate()
                    .map(|(a, rx)| {
                        (sc.three_eq[a]
                            * (sc.eq_fwd[a] * monomial(t, &rx.alpha) - sc.eq_bwd[a] * monomial(t, &rx.beta)))
                        .abs()
                    })
                    .fold(0.0, f64::max);
                prep.violation = prep.violation.max(v);
                let adj: Vec<f64> = (0..n).map(|i| state.bulk.get(geom.inward_cell(k, 0), i)).collect();
                let fitted = three_param_traces(st, &adj, t).ok_or(SolverError::Incompatible { violation: v })?;
                prep.distance = prep.distance.max(max_diff(&fitted, t));
                for i in 0..n {
                    ghosts[k * n + i] = 2.0 * fitted[i] - adj[i];
                }
            }
            st.ghosts = Some(ghosts);
        }
        _ => {}
    }
    if prep.violation > st.cfg.compatibility_tol {
        match st.cfg.compatibility {
            Compatibility::Reject => return Err(SolverError::Incompatible { violation: prep.violation }),
            Compatibility::Warn => prep
                .warnings
                .push(format!("initial data violate the {} constraints by {:e}", st.variant, prep.violation)),
            Compatibility::Project => prep.warnings.push(format!(
                "initial data projected onto the {} constraints (violation {:e}, distance {:e})",
                st.variant, prep.violation, prep.distance
            )),
        }
    }
    Ok((out, prep))
}
