//! Conserved totals, free energy, entropy production, closed-form
//! equilibria of the model problem, run monitors and the limit-convergence
//! driver.
//!
//! Surface quantities enter totals and energies with the weight
//! `ω = τ^trans / τ^diff` (see [`FullProblem::surface_weight`]), which is
//! the ratio of surface to bulk amounts in the scaled variables.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::grid::{boundary_trace, integrate_bulk, integrate_surface, Geometry};
use crate::linalg::solve_dense;
use crate::math::{ln, max_abs, max_diff, sqrt, xlnx};
use crate::network::ConservationBasis;
use crate::scales::ProcessTimes;
use crate::solver::{integrate, FullProblem, Location, ModelVariant, Stepper, StepperConfig, SystemState};

#[derive(Debug, Clone, PartialEq)]
pub enum DiagError {
    /// A value that enters a logarithm or a quotient is not positive.
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },
    /// Negative value where only nonnegative values make sense.
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    InvalidParameters(String),
    /// Samples must be added with strictly increasing times.
    TimeOrder {
        previous: f64,
        next: f64,
    },
}

impl fmt::Display for DiagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagError::NonPositive { what, index, value } => write!(f, "{what}[{index}] = {value} must be positive"),
            DiagError::Negative { what, index, value } => write!(f, "{what}[{index}] = {value} is negative"),
            DiagError::InvalidParameters(s) => write!(f, "invalid parameters: {s}"),
            DiagError::TimeOrder { previous, next } => {
                write!(f, "sample time {next} does not follow {previous}")
            }
        }
    }
}

impl core::error::Error for DiagError {}

/// `∫_Ω e·c + ω ∫_Σ e·θ` for one vector `e`; the surface term is dropped
/// for variants whose surface is not part of the conserved state.
pub fn conserved_total(s: &SystemState, e: &[f64], variant: ModelVariant, p: &FullProblem) -> f64 {
    let geom = &p.geometry;
    let n = s.bulk.n_species;
    let bulk: Vec<f64> = (0..geom.n_cells()).map(|c| (0..n).map(|i| e[i] * s.bulk.get(c, i)).sum()).collect();
    let mut total = integrate_bulk(&bulk, geom);
    if variant.surface_in_totals() {
        let surf: Vec<f64> = s.surface.nodes.iter().map(|st| (0..n).map(|i| e[i] * st.theta[i + 1]).sum()).collect();
        total += p.surface_weight() * integrate_surface(&surf, geom);
    }
    total
}

/// Totals for every vector of a conservation basis.
pub fn conserved_totals(
    s: &SystemState,
    basis: &ConservationBasis,
    variant: ModelVariant,
    p: &FullProblem,
) -> Vec<f64> {
    basis.vectors.iter().map(|e| conserved_total(s, e, variant, p)).collect()
}

fn check_nonnegative(values: &[f64], what: &'static str) -> Result<(), DiagError> {
    match values.iter().position(|&v| v < 0.0 || v.is_nan()) {
        Some(index) => Err(DiagError::Negative { what, index, value: values[index] }),
        None => Ok(()),
    }
}

fn check_positive(values: &[f64], what: &'static str) -> Result<(), DiagError> {
    match values.iter().position(|&v| v.is_nan() || v <= 0.0) {
        Some(index) => Err(DiagError::NonPositive { what, index, value: values[index] }),
        None => Ok(()),
    }
}

/// Free energy `∫_Ω Σ c_i (μ_i^0 + ln c_i − 1) + ω ∫_Σ Σ_{i=0}^N θ_i
/// (μ_i^{Σ,0} + ln θ_i)` with `0 ln 0 = 0`. The surface part is included
/// when the variant carries the surface in its totals.
pub fn free_energy(s: &SystemState, p: &FullProblem, variant: ModelVariant) -> Result<f64, DiagError> {
    check_nonnegative(&s.bulk.data, "bulk")?;
    let geom = &p.geometry;
    let n = s.bulk.n_species;
    let mu0 = &p.thermo.mu0;
    let dens: Vec<f64> = (0..geom.n_cells())
        .map(|c| {
            (0..n)
                .map(|i| {
                    let v = s.bulk.get(c, i);
                    xlnx(v) + v * (mu0[i] - 1.0)
                })
                .sum()
        })
        .collect();
    let mut f = integrate_bulk(&dens, geom);
    if variant.surface_in_totals() {
        let mut surf = Vec::with_capacity(s.surface.nodes.len());
        for st in &s.surface.nodes {
            check_nonnegative(&st.theta, "theta")?;
            surf.push(st.theta.iter().zip(&p.surface_mu0).map(|(&t, &m)| xlnx(t) + t * m).sum::<f64>());
        }
        f += p.surface_weight() * integrate_surface(&surf, geom);
    }
    Ok(f)
}

/// The five dissipation rates, each including its process prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntropyProduction {
    pub chem: f64,
    pub diff: f64,
    pub surface_chem: f64,
    pub surface_diff: f64,
    pub sorption: f64,
}

impl EntropyProduction {
    pub fn total(&self) -> f64 {
        self.chem + self.diff + self.surface_chem + self.surface_diff + self.sorption
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.chem, self.diff, self.surface_chem, self.surface_diff, self.sorption]
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Bulk diffusion dissipation `∫ Σ d_i |∇c_i|² / c_i` from interior face
/// differences with harmonic-mean face values.
fn bulk_diffusion_dissipation(s: &SystemState, geom: &Geometry, d: &[f64]) -> f64 {
    let n = s.bulk.n_species;
    let m = geom.n_tangential();
    let ny = geom.n_normal();
    let h = geom.h();
    let face = geom.hx().unwrap_or(1.0);
    let mut z = 0.0;
    for j in 0..ny {
        for i in 0..m {
            let c = j * m + i;
            for sp in 0..n {
                let a = s.bulk.get(c, sp);
                if j + 1 < ny {
                    let b = s.bulk.get(c + m, sp);
                    z += d[sp] * (b - a) * (b - a) / (h * h) / harmonic(a, b) * h * face;
                }
                if let Some(hx) = geom.hx() {
                    let b = s.bulk.get(j * m + (i + 1) % m, sp);
                    z += d[sp] * (b - a) * (b - a) / (hx * hx) / harmonic(a, b) * h * hx;
                }
            }
        }
    }
    z
}

/// Dissipation rates `ζ^chem, ζ^diff, ζ^{Σ,chem}, ζ^{Σ,diff}, ζ^{Σ,sorp}`
/// of a strictly positive state. Surface terms are zero for variants
/// without a surface in the totals. Traces are the extrapolated face
/// values.
pub fn entropy_production_terms(
    s: &SystemState,
    p: &FullProblem,
    variant: ModelVariant,
) -> Result<EntropyProduction, DiagError> {
    check_positive(&s.bulk.data, "bulk")?;
    let geom = &p.geometry;
    let co = p.coefficients();
    let n = s.bulk.n_species;
    let mut out = EntropyProduction::default();
    if p.bulk.n_reactions() > 0 {
        let dens: Vec<f64> = (0..geom.n_cells())
            .map(|c| {
                let cc = s.bulk.cell(c);
                let aff = p.bulk.affinity(&p.thermo, cc).unwrap_or_default();
                let rates = p.bulk.reaction_rates(cc).unwrap_or_default();
                -aff.iter().zip(&rates).map(|(a, r)| a * r).sum::<f64>()
            })
            .collect();
        out.chem = co.react * integrate_bulk(&dens, geom);
    }
    out.diff = co.diff * bulk_diffusion_dissipation(s, geom, &p.d);
    if !variant.surface_in_totals() {
        return Ok(out);
    }
    let omega = p.surface_weight();
    for st in &s.surface.nodes {
        check_positive(&st.theta, "theta")?;
    }
    let tr = boundary_trace(&s.bulk, geom);
    check_positive(&tr, "trace")?;
    let mu_sigma = |theta: &[f64]| -> Vec<f64> { theta.iter().zip(&p.surface_mu0).map(|(t, m)| m + ln(*t)).collect() };
    let mut chem = Vec::new();
    let mut sorp = Vec::new();
    for (k, st) in s.surface.nodes.iter().enumerate() {
        let mu = mu_sigma(&st.theta);
        let z: f64 = p
            .surface
            .extended
            .iter()
            .map(|rx| {
                let aff: f64 = rx.nu().iter().zip(&mu).map(|(v, m)| v * m).sum();
                -aff * rx.net_rate(&st.theta)
            })
            .sum();
        chem.push(z);
        let t = &tr[k * n..(k + 1) * n];
        let zs: f64 = (0..n)
            .map(|i| {
                let s_i = p.sorption.k_ad[i] * t[i] * st.theta[0] - p.sorption.k_de[i] * st.theta[i + 1];
                let mu_bulk = p.thermo.mu0[i] + ln(t[i]);
                -(mu[i + 1] - mu[0] - mu_bulk) * s_i
            })
            .sum();
        sorp.push(zs);
    }
    out.surface_chem = omega * co.schem * integrate_surface(&chem, geom);
    out.sorption = omega * co.sorp * integrate_surface(&sorp, geom);
    if let Some(hx) = geom.hx() {
        let mut z = 0.0;
        for k in 0..geom.n_nodes() {
            let (_, r) = geom.node_neighbours(k).unwrap_or((k, k));
            let a = &s.surface.nodes[k].theta;
            let b = &s.surface.nodes[r].theta;
            let mean: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let dm = p.surface_diffusion.matrix(&mean);
            let n1 = mean.len();
            for i in 0..n1 {
                for j in 0..n1 {
                    z += dm[i * n1 + j] * (b[j] - a[j]) / hx * (b[i] - a[i]) / mean[i] / hx * hx;
                }
            }
        }
        out.surface_diff = omega * co.sdiff * z;
    }
    Ok(out)
}

/// Largest violation of the thermodynamic closure: bulk and surface
/// detailed balance `ln(k^b/k^f) = ν·μ^0` and sorption consistency
/// `μ_i^{Σ,0} − μ_0^{Σ,0} − μ_i^0 = −ln(κ^ad_i/κ^de_i)`.
pub fn thermodynamic_defect(p: &FullProblem) -> f64 {
    let mut d = p.bulk.detailed_balance_defect(&p.thermo);
    for rx in &p.surface.extended {
        let nu_mu: f64 = rx.nu().iter().zip(&p.surface_mu0).map(|(v, m)| v * m).sum();
        d = d.max((ln(rx.k_b / rx.k_f) - nu_mu).abs());
    }
    for i in 0..p.n_species() {
        if p.sorption.k_ad[i] > 0.0 {
            let k = p.sorption.k_ad[i] / p.sorption.k_de[i];
            d = d.max((p.surface_mu0[i + 1] - p.surface_mu0[0] - p.thermo.mu0[i] + ln(k)).abs());
        }
    }
    d
}

/// Copy of `p` whose surface reference potentials follow from the bulk
/// potentials and the sorption constants (`μ_0^{Σ,0} = 0`).
pub fn with_consistent_surface_potentials(p: &FullProblem) -> FullProblem {
    let mut q = p.clone();
    q.surface_mu0[0] = 0.0;
    for i in 0..p.n_species() {
        let k = p.sorption.k_ad[i] / p.sorption.k_de[i];
        q.surface_mu0[i + 1] = if k > 0.0 { p.thermo.mu0[i] - ln(k) } else { 0.0 };
    }
    q
}

/// Parameters of the model-problem equilibrium: averages `a = ⟨c_1 + c_3⟩`,
/// `b = ⟨c_2 + c_3⟩` and the equilibrium constant in `c_3 = κ c_1 c_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParameters {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
}

impl MpParameters {
    pub fn validate(&self) -> Result<(), DiagError> {
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(DiagError::InvalidParameters(format!("need a, b >= 0, got a = {}, b = {}", self.a, self.b)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(DiagError::InvalidParameters(format!("need kappa > 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Relative residuals of `c_1(1 + κ c_2) = a`, `c_2(1 + κ c_1) = b`,
    /// `c_3 = κ c_1 c_2`.
    pub fn residuals(&self, c: &[f64; 3]) -> [f64; 3] {
        let k = self.kappa;
        let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        [rel(c[0] * (1.0 + k * c[1]), self.a), rel(c[1] * (1.0 + k * c[0]), self.b), rel(c[2], k * c[0] * c[1])]
    }
}

/// Positive root of `κ x² + (1 + κ (o − s)) x − s = 0` without
/// cancellation.
fn quadratic_root(kappa: f64, s: f64, o: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let bq = 1.0 + kappa * (o - s);
    let disc = sqrt(bq * bq + 4.0 * kappa * s);
    if bq >= 0.0 {
        2.0 * s / (bq + disc)
    } else {
        (disc - bq) / (2.0 * kappa)
    }
}

/// Equilibrium `(c_1, c_2, c_3)` of the model problem with conserved
/// averages `a`, `b`:
/// `c_1 = ½ √(2(a+b)/κ + (b−a)² + κ^{-2}) − ½(κ^{-1} + b − a)` (evaluated
/// in a cancellation-free form), `c_2` symmetric, `c_3 = a − c_1 = κ c_1 c_2`.
pub fn mp_equilibrium(p: &MpParameters) -> Result<[f64; 3], DiagError> {
    p.validate()?;
    let c1 = quadratic_root(p.kappa, p.a, p.b);
    let c2 = quadratic_root(p.kappa, p.b, p.a);
    Ok([c1, c2, p.kappa * c1 * c2])
}

/// Damped Newton solve of `c_1 + c_3 = a`, `c_2 + c_3 = b`,
/// `c_3 = κ c_1 c_2` from `start`, staying in the nonnegative orthant.
/// The start is first moved onto the conservation constraints along
/// `c_3`, so that every damped step keeps them exact.
pub fn mp_equilibrium_newton(p: &MpParameters, start: [f64; 3]) -> Option<[f64; 3]> {
    let k = p.kappa;
    let f = |c: &[f64; 3]| [c[0] + c[2] - p.a, c[1] + c[2] - p.b, c[2] - k * c[0] * c[1]];
    let scale = 1.0 + p.a.max(p.b);
    let c3 = start[2].clamp(0.0, p.a.min(p.b));
    let mut c = [p.a - c3, p.b - c3, c3];
    for _ in 0..200 {
        let r = f(&c);
        let nr = max_abs(&r);
        if nr <= 1e-15 * scale {
            return Some(c);
        }
        let mut j = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0, -k * c[1], -k * c[0], 1.0];
        let mut d = [-r[0], -r[1], -r[2]];
        solve_dense(&mut j, 3, &mut d).ok()?;
        // fraction-to-boundary: never step closer than 1% of the way to zero
        let mut lambda: f64 = 1.0;
        for i in 0..3 {
            if d[i] < 0.0 {
                lambda = lambda.min(-0.99 * c[i] / d[i]);
            }
        }
        loop {
            let t = [c[0] + lambda * d[0], c[1] + lambda * d[1], c[2] + lambda * d[2]];
            if t.iter().all(|&v| v >= 0.0) && max_abs(&f(&t)) < nr {
                c = t;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return (nr <= 1e-12 * scale).then_some(c);
            }
        }
    }
    None
}

/// Smallest value of the state (surface included when present).
pub fn positivity_monitor(s: &SystemState, variant: ModelVariant) -> (f64, Location) {
    s.minimum(variant.has_surface())
}

/// Max-norm plus discrete `W^{1,2}` seminorm of the bulk field, a
/// practical stand-in for the phase-space norm that controls blow-up.
pub fn blowup_norm(s: &SystemState, geom: &Geometry) -> f64 {
    let n = s.bulk.n_species;
    let m = geom.n_tangential();
    let ny = geom.n_normal();
    let h = geom.h();
    let face = geom.hx().unwrap_or(1.0);
    let mut w = 0.0;
    for j in 0..ny {
        for i in 0..m {
            let c = j * m + i;
            for sp in 0..n {
                let a = s.bulk.get(c, sp);
                if j + 1 < ny {
                    let b = s.bulk.get(c + m, sp);
                    w += (b - a) * (b - a) / (h * h) * h * face;
                }
                if let Some(hx) = geom.hx() {
                    let b = s.bulk.get(j * m + (i + 1) % m, sp);
                    w += (b - a) * (b - a) / (hx * hx) * h * hx;
                }
            }
        }
    }
    max_abs(&s.bulk.data) + sqrt(w)
}

/// Reduced summary of one sampled state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub totals: Vec<f64>,
    pub free_energy: f64,
    /// Total dissipation rate `Σ ζ`.
    pub dissipation: f64,
    pub min_value: f64,
    pub norm: f64,
    /// `∫ Σ |c_i|` and `∫ Σ c_i²` for the a-priori bound monitors.
    pub l1: f64,
    pub l2_squared: f64,
    pub newton_residual: f64,
    pub phi_iterations: Option<usize>,
}

/// Sampled trajectory with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
}

impl TrajectoryRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: TrajectorySample) -> Result<(), DiagError> {
        if let Some(last) = self.samples.last() {
            if s.t.is_nan() || s.t <= last.t {
                return Err(DiagError::TimeOrder { previous: last.t, next: s.t });
            }
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest relative change of any total against the first sample.
    pub fn max_total_drift(&self) -> f64 {
        let Some(first) = self.samples.first() else { return 0.0 };
        self.samples
            .iter()
            .flat_map(|s| {
                s.totals.iter().zip(&first.totals).map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            })
            .fold(0.0, f64::max)
    }

    /// Largest free-energy increase between consecutive samples, relative
    /// to `max(1, |F|)`.
    pub fn max_energy_increase(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].free_energy - w[0].free_energy) / w[0].free_energy.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.samples.iter().map(|s| s.min_value).fold(f64::INFINITY, f64::min)
    }

    /// `sup_t ∫|c|` and `∫∫ |c|²` (trapezoidal in time).
    pub fn apriori_norms(&self) -> (f64, f64) {
        let sup_l1 = self.samples.iter().map(|s| s.l1).fold(0.0, f64::max);
        let l2l2 = self.samples.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].l2_squared + w[1].l2_squared)).sum();
        (sup_l1, l2l2)
    }
}

/// Summary of `s` for a trajectory record.
pub fn sample(
    s: &SystemState,
    p: &FullProblem,
    variant: ModelVariant,
    vectors: &[Vec<f64>],
    newton_residual: f64,
    phi_iterations: Option<usize>,
) -> Result<TrajectorySample, DiagError> {
    let geom = &p.geometry;
    let totals = vectors.iter().map(|e| conserved_total(s, e, variant, p)).collect();
    let free_energy = free_energy(s, p, variant)?;
    let dissipation = match entropy_production_terms(s, p, variant) {
        Ok(z) => z.total(),
        Err(_) => f64::NAN,
    };
    let (min_value, _) = positivity_monitor(s, variant);
    let abs: Vec<f64> = (0..geom.n_cells()).map(|c| s.bulk.cell(c).iter().map(|v| v.abs()).sum()).collect();
    let sq: Vec<f64> = (0..geom.n_cells()).map(|c| s.bulk.cell(c).iter().map(|v| v * v).sum()).collect();
    Ok(TrajectorySample {
        t: s.time,
        totals,
        free_energy,
        dissipation,
        min_value,
        norm: blowup_norm(s, geom),
        l1: integrate_bulk(&abs, geom),
        l2_squared: integrate_bulk(&sq, geom),
        newton_residual,
        phi_iterations,
    })
}

/// `|F(T) + ∫_0^T D dt − F(0)|` with the recorded dissipation `D`
/// integrated by the trapezoidal rule.
pub fn entropy_identity_residual(traj: &TrajectoryRecord) -> f64 {
    let (Some(first), Some(last)) = (traj.samples.first(), traj.samples.last()) else { return 0.0 };
    let dissipated: f64 =
        traj.samples.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].dissipation + w[1].dissipation)).sum();
    (last.free_energy + dissipated - first.free_energy).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlowupStatus {
    Ok { max_norm: f64 },
    Warning { norm: f64, time: f64 },
}

/// First sample whose norm exceeds `threshold`, if any.
pub fn blowup_monitor(traj: &TrajectoryRecord, threshold: f64) -> BlowupStatus {
    for s in &traj.samples {
        if s.norm > threshold {
            return BlowupStatus::Warning { norm: s.norm, time: s.t };
        }
    }
    BlowupStatus::Ok { max_norm: traj.samples.iter().map(|s| s.norm).fold(0.0, f64::max) }
}

/// Times of the full model in which the processes removed by `variant`
/// are made fast by the factor `eps`. Processes that must be faster than
/// others are scaled by higher powers (three-parameter limit:
/// sorption and surface chemistry by `ε²`, transmission by `ε`).
pub fn limit_scaling(variant: ModelVariant, eps: f64, t: &ProcessTimes) -> ProcessTimes {
    let mut s = *t;
    match variant {
        ModelVariant::Full => {}
        ModelVariant::FastSorption => s.tau_sorp *= eps,
        ModelVariant::FastSurfaceChemistry => s.tau_react_sigma *= eps,
        ModelVariant::TwoParamSorpChem => {
            s.tau_sorp *= eps;
            s.tau_react_sigma *= eps;
        }
        ModelVariant::ThreeParamMP => {
            s.tau_sorp *= eps * eps;
            s.tau_react_sigma *= eps * eps;
            s.tau_trans *= eps;
        }
        ModelVariant::FastSurfaceDiffusion => s.tau_diff_sigma *= eps,
        ModelVariant::FastAccumulation => {
            s.tau_diff_sigma *= eps;
            s.tau_react_sigma *= eps;
            s.tau_sorp *= eps;
            s.tau_trans *= eps;
        }
    }
    s
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// Max-norm distance of the terminal states (bulk, and surface where
    /// the limit evolves one), `None` when the full run failed.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

/// Terminal-state distance between the full model with fast processes
/// scaled by each `ε` and the limit model `variant`, both run from `init`
/// to `t_end`.
pub fn limit_convergence_study(
    base: &FullProblem,
    init: &SystemState,
    variant: ModelVariant,
    epsilons: &[f64],
    t_end: f64,
    cfg: &StepperConfig,
) -> Result<Vec<ConvergenceRow>, String> {
    if variant == ModelVariant::Full {
        return Err(String::from("the convergence study needs a limit variant"));
    }
    let mut limit = Stepper::new(base, variant, cfg).map_err(|e| format!("limit model: {e}"))?;
    let (start, _) = limit.prepare(init).map_err(|e| format!("limit model: {e}"))?;
    let reference = integrate(&mut limit, &start, t_end, |_, _| {}).map_err(|e| format!("limit model: {e}"))?;
    let mut rows = Vec::new();
    for &eps in epsilons {
        let p = base.with_times(limit_scaling(variant, eps, &base.times));
        let run =
            Stepper::new(&p, ModelVariant::Full, cfg).and_then(|mut st| integrate(&mut st, init, t_end, |_, _| {}));
        rows.push(match run {
            Ok(out) => {
                let mut e = max_diff(&out.bulk.data, &reference.bulk.data);
                if variant.has_surface() {
                    for (a, b) in out.surface.nodes.iter().zip(&reference.surface.nodes) {
                        e = e.max(max_diff(&a.theta, &b.theta));
                    }
                }
                ConvergenceRow { epsilon: eps, error: Some(e), failure: None }
            }
            Err(err) => ConvergenceRow { epsilon: eps, error: None, failure: Some(format!("{err}")) },
        });
    }
    Ok(rows)
}

/// Whether the errors of a table are present and strictly decreasing
/// along the given (decreasing) `ε` order.
pub fn strictly_decreasing(rows: &[ConvergenceRow]) -> bool {
    rows.windows(2).all(|w| matches!((w[0].error, w[1].error), (Some(a), Some(b)) if b < a))
        && rows.iter().all(|r| r.error.is_some())
}

/// Bulk reference potentials `(0, 0, ln κ)` under which the model-problem
/// boundary relation `c_1 c_2 = κ c_3` is the equality of potentials
/// `μ_1 + μ_2 = μ_3`.
pub fn mp_bulk_potentials(kappa: f64) -> Vec<f64> {
    vec![0.0, 0.0, ln(kappa)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BulkField;
    use crate::presets::{mp_initial_state, mp_problem, with_isotherm_surface};

    #[test]
    fn equilibrium_examples() {
        let c = mp_equilibrium(&MpParameters { a: 2.0, b: 2.0, kappa: 1.0 }).unwrap();
        for v in c {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert_eq!(mp_equilibrium(&MpParameters { a: 0.0, b: 3.0, kappa: 2.0 }).unwrap(), [0.0, 3.0, 0.0]);
        assert_eq!(mp_equilibrium(&MpParameters { a: 1.5, b: 0.0, kappa: 2.0 }).unwrap(), [1.5, 0.0, 0.0]);
        assert_eq!(mp_equilibrium(&MpParameters { a: 0.0, b: 0.0, kappa: 1.0 }).unwrap(), [0.0; 3]);
        assert!(mp_equilibrium(&MpParameters { a: -1.0, b: 0.0, kappa: 1.0 }).is_err());
    }

    #[test]
    fn closed_form_matches_unstable_textbook_form() {
        let p = MpParameters { a: 3.0, b: 1.0, kappa: 0.5 };
        let k = p.kappa;
        let c1 =
            0.5 * sqrt(2.0 * (p.a + p.b) / k + (p.b - p.a) * (p.b - p.a) + 1.0 / (k * k)) - 0.5 * (1.0 / k + p.b - p.a);
        let c = mp_equilibrium(&p).unwrap();
        assert!((c[0] - c1).abs() < 1e-14);
        assert!((c[2] - (p.a - c[0])).abs() < 1e-14);
    }

    #[test]
    fn free_energy_examples() {
        let p = mp_problem(Geometry::interval(10, 2.0).unwrap(), ProcessTimes::unit());
        let mut s = with_isotherm_surface(&p, BulkField::uniform(&[1.0; 3], 10));
        let f = free_energy(&s, &p, ModelVariant::ThreeParamMP).unwrap();
        assert!((f + 3.0 * 2.0).abs() < 1e-12);
        s.bulk = BulkField::uniform(&[core::f64::consts::E; 3], 10);
        assert!(free_energy(&s, &p, ModelVariant::ThreeParamMP).unwrap().abs() < 1e-12);
        s.bulk.data[4] = -1.0;
        assert!(free_energy(&s, &p, ModelVariant::ThreeParamMP).is_err());
    }

    #[test]
    fn totals_of_uniform_state() {
        let p = mp_problem(Geometry::interval(10, 1.0).unwrap(), ProcessTimes::unit());
        let s = with_isotherm_surface(&p, BulkField::uniform(&[1.0; 3], 10));
        let t = conserved_total(&s, &[1.0, 0.0, 1.0], ModelVariant::ThreeParamMP, &p);
        assert!((t - 2.0).abs() < 1e-14);
        let zero = SystemState { bulk: BulkField::zeros(3, 10), ..s };
        assert_eq!(conserved_total(&zero, &[1.0, 0.0, 1.0], ModelVariant::ThreeParamMP, &p), 0.0);
    }

    #[test]
    fn entropy_terms_vanish_at_equilibrium_and_diffusion_is_positive() {
        let geom = Geometry::strip(6, 5, 1.0, 1.0).unwrap();
        let p = mp_problem(geom, ProcessTimes::unit());
        assert!(thermodynamic_defect(&p) < 1e-14);
        let s = with_isotherm_surface(&p, BulkField::uniform(&[1.0; 3], geom.n_cells()));
        let z = entropy_production_terms(&s, &p, ModelVariant::Full).unwrap();
        assert!(z.as_array().iter().all(|v| v.abs() < 1e-12), "{z:?}");
        let s = mp_initial_state(&p, 0.3);
        let z = entropy_production_terms(&s, &p, ModelVariant::Full).unwrap();
        assert!(z.diff > 0.0);
        assert!(z.as_array().iter().all(|&v| v >= -1e-10), "{z:?}");
    }

    #[test]
    fn pure_diffusion_profile_only_dissipates_by_diffusion() {
        let geom = Geometry::interval(20, 1.0).unwrap();
        let p = mp_problem(geom, ProcessTimes::unit());
        let bulk =
            BulkField::from_fn(&geom, 3, |_, _, y| 1.0 + 0.1 * crate::math::sin(2.0 * core::f64::consts::PI * y));
        let s = with_isotherm_surface(&p, bulk);
        let z = entropy_production_terms(&s, &p, ModelVariant::ThreeParamMP).unwrap();
        assert!(z.diff > 0.0);
        assert_eq!([z.chem, z.surface_chem, z.surface_diff, z.sorption], [0.0; 4]);
    }

    #[test]
    fn trajectory_rejects_unordered_times() {
        let mut t = TrajectoryRecord::new();
        let s = TrajectorySample {
            t: 1.0,
            totals: vec![],
            free_energy: 0.0,
            dissipation: 0.0,
            min_value: 1.0,
            norm: 1.0,
            l1: 0.0,
            l2_squared: 0.0,
            newton_residual: 0.0,
            phi_iterations: None,
        };
        t.push(s.clone()).unwrap();
        assert!(t.push(s.clone()).is_err());
        assert_eq!(blowup_monitor(&t, 2.0), BlowupStatus::Ok { max_norm: 1.0 });
        assert_eq!(blowup_monitor(&t, 0.5), BlowupStatus::Warning { norm: 1.0, time: 1.0 });
        assert_eq!(entropy_identity_residual(&t), 0.0);
    }
}
