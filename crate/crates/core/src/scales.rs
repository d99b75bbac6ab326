//! Characteristic scales, time scales and regime classification.
//!
//! Dimensional inputs are reduced to the dimensionless model by the
//! reference length `L`, diffusivity `D_R`, bulk concentration `c_R`, site
//! capacity `c_S` and the observation time `τ_R`. Each physical process
//! then appears with a prefactor `1/τ` of its characteristic time:
//!
//! | process            | time                                     |
//! |--------------------|------------------------------------------|
//! | bulk diffusion     | `τ^diff = L² / D_R`                      |
//! | surface diffusion  | `τ^{Σ,diff} = L_Σ² / D_R^Σ`               |
//! | transmission       | `τ^trans = L c_S / (D_R c_R)`            |
//! | bulk reaction `a`  | `1 / (k_a c_R^{|α^a| − 1})` (resp. `β`)  |
//! | surface reaction   | `1 / k_a^Σ`                              |
//! | adsorption `i`     | `1 / (k_i^ad c_R)`                       |
//! | desorption `i`     | `1 / k_i^de`                             |
//!
//! Reaction and sorption constants are normalized by the slowest time of
//! their group, so every dimensionless constant equals the ratio
//! `λ = τ_slow / τ ≥ 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math::powu;
use crate::network::{Reaction, ReactionNetwork};
use crate::surface::{SorptionModel, SurfaceReactionNetwork};

#[derive(Debug, Clone, PartialEq)]
pub enum ScalesError {
    NonPositive(&'static str),
    LengthMismatch { what: &'static str, expected: usize, got: usize },
}

impl fmt::Display for ScalesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalesError::NonPositive(what) => write!(f, "scale `{what}` must be strictly positive and finite"),
            ScalesError::LengthMismatch { what, expected, got } => {
                write!(f, "`{what}` has length {got}, expected {expected}")
            }
        }
    }
}

impl core::error::Error for ScalesError {}

fn positive(v: f64, what: &'static str) -> Result<(), ScalesError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScalesError::NonPositive(what))
    }
}

/// Reference quantities of a dimensional problem (SI units).
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicScales {
    /// Observation (accumulation) time `τ_R` in s.
    pub tau_r: f64,
    pub l_r: f64,
    pub l_r_sigma: f64,
    pub d_r: f64,
    pub d_r_sigma: f64,
    pub c_r: f64,
    pub c_s: f64,
}

impl CharacteristicScales {
    pub fn unit() -> Self {
        CharacteristicScales { tau_r: 1.0, l_r: 1.0, l_r_sigma: 1.0, d_r: 1.0, d_r_sigma: 1.0, c_r: 1.0, c_s: 1.0 }
    }

    pub fn validate(&self) -> Result<(), ScalesError> {
        positive(self.tau_r, "tau_r")?;
        positive(self.l_r, "l_r")?;
        positive(self.l_r_sigma, "l_r_sigma")?;
        positive(self.d_r, "d_r")?;
        positive(self.d_r_sigma, "d_r_sigma")?;
        positive(self.c_r, "c_r")?;
        positive(self.c_s, "c_s")
    }
}

/// Characteristic times of the five processes that enter the
/// dimensionless model as `τ_R / τ` prefactors. Reaction and sorption
/// constants of the accompanying networks are already normalized by these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessTimes {
    pub tau_r: f64,
    pub tau_diff: f64,
    pub tau_diff_sigma: f64,
    pub tau_react: f64,
    pub tau_react_sigma: f64,
    pub tau_sorp: f64,
    pub tau_trans: f64,
}

impl ProcessTimes {
    pub fn unit() -> Self {
        ProcessTimes {
            tau_r: 1.0,
            tau_diff: 1.0,
            tau_diff_sigma: 1.0,
            tau_react: 1.0,
            tau_react_sigma: 1.0,
            tau_sorp: 1.0,
            tau_trans: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScalesError> {
        positive(self.tau_r, "tau_r")?;
        positive(self.tau_diff, "tau_diff")?;
        positive(self.tau_diff_sigma, "tau_diff_sigma")?;
        positive(self.tau_react, "tau_react")?;
        positive(self.tau_react_sigma, "tau_react_sigma")?;
        positive(self.tau_sorp, "tau_sorp")?;
        positive(self.tau_trans, "tau_trans")
    }

    /// Weight of surface amounts in the conserved totals, `τ^trans / τ^diff`.
    pub fn surface_weight(&self) -> f64 {
        self.tau_trans / self.tau_diff
    }
}

/// Characteristic times and ratios of a dimensional problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeScales {
    pub tau_r: f64,
    pub tau_diff: f64,
    pub tau_diff_sigma: f64,
    pub tau_trans: f64,
    pub tau_react_f: Vec<f64>,
    pub tau_react_b: Vec<f64>,
    pub tau_react_sigma_f: Vec<f64>,
    pub tau_react_sigma_b: Vec<f64>,
    /// `∞` where `k_ad = 0` (no adsorption).
    pub tau_ad: Vec<f64>,
    pub tau_de: Vec<f64>,
    pub react: Option<Aggregate>,
    pub react_sigma: Option<Aggregate>,
    pub sorp: Option<Aggregate>,
    pub lambda_react_f: Vec<f64>,
    pub lambda_react_b: Vec<f64>,
    pub lambda_react_sigma_f: Vec<f64>,
    pub lambda_react_sigma_b: Vec<f64>,
    /// `None` for absent processes (infinite time).
    pub lambda_ad: Vec<Option<f64>>,
    pub lambda_de: Vec<f64>,
}

/// Slowest and fastest time of a process group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub slow: f64,
    pub fast: f64,
}

fn aggregate<'a>(times: impl IntoIterator<Item = &'a f64>) -> Option<Aggregate> {
    let mut out: Option<Aggregate> = None;
    for &t in times {
        if !t.is_finite() {
            continue;
        }
        out = Some(match out {
            None => Aggregate { slow: t, fast: t },
            Some(a) => Aggregate { slow: a.slow.max(t), fast: a.fast.min(t) },
        });
    }
    out
}

fn ratios(slow: Option<Aggregate>, times: &[f64]) -> Vec<f64> {
    match slow {
        Some(a) => times.iter().map(|t| a.slow / t).collect(),
        None => Vec::new(),
    }
}

fn reaction_time(k: f64, c_r: f64, order: u32) -> f64 {
    // c_R^{|α| − 1}, with negative exponent for zeroth order reactions
    let scale = if order == 0 { 1.0 / c_r } else { powu(c_r, order - 1) };
    1.0 / (k * scale)
}

/// Derives every characteristic time and `λ` ratio. The rate constants are
/// those of the given networks, in SI units.
pub fn compute_time_scales(
    scales: &CharacteristicScales,
    bulk: &ReactionNetwork,
    surface: &SurfaceReactionNetwork,
    sorption: &SorptionModel,
) -> TimeScales {
    let c_r = scales.c_r;
    let tau_react_f: Vec<f64> = bulk.reactions.iter().map(|r| reaction_time(r.k_f, c_r, r.forward_order())).collect();
    let tau_react_b: Vec<f64> = bulk.reactions.iter().map(|r| reaction_time(r.k_b, c_r, r.backward_order())).collect();
    let tau_react_sigma_f: Vec<f64> = surface.base.reactions.iter().map(|r| 1.0 / r.k_f).collect();
    let tau_react_sigma_b: Vec<f64> = surface.base.reactions.iter().map(|r| 1.0 / r.k_b).collect();
    let tau_ad: Vec<f64> =
        sorption.k_ad.iter().map(|&k| if k > 0.0 { 1.0 / (k * c_r) } else { f64::INFINITY }).collect();
    let tau_de: Vec<f64> = sorption.k_de.iter().map(|&k| 1.0 / k).collect();
    let react = aggregate(tau_react_f.iter().chain(&tau_react_b));
    let react_sigma = aggregate(tau_react_sigma_f.iter().chain(&tau_react_sigma_b));
    let sorp = aggregate(tau_ad.iter().chain(&tau_de));
    TimeScales {
        tau_r: scales.tau_r,
        tau_diff: scales.l_r * scales.l_r / scales.d_r,
        tau_diff_sigma: scales.l_r_sigma * scales.l_r_sigma / scales.d_r_sigma,
        tau_trans: scales.l_r * scales.c_s / (scales.d_r * c_r),
        lambda_react_f: ratios(react, &tau_react_f),
        lambda_react_b: ratios(react, &tau_react_b),
        lambda_react_sigma_f: ratios(react_sigma, &tau_react_sigma_f),
        lambda_react_sigma_b: ratios(react_sigma, &tau_react_sigma_b),
        lambda_ad: tau_ad.iter().map(|&t| if t.is_finite() { sorp.map(|a| a.slow / t) } else { None }).collect(),
        lambda_de: ratios(sorp, &tau_de),
        tau_react_f,
        tau_react_b,
        tau_react_sigma_f,
        tau_react_sigma_b,
        tau_ad,
        tau_de,
        react,
        react_sigma,
        sorp,
    }
}

impl TimeScales {
    /// Prefactor times of the dimensionless model. Groups without members
    /// get time 1 (their prefactor multiplies nothing).
    pub fn process_times(&self) -> ProcessTimes {
        ProcessTimes {
            tau_r: self.tau_r,
            tau_diff: self.tau_diff,
            tau_diff_sigma: self.tau_diff_sigma,
            tau_react: self.react.map_or(1.0, |a| a.slow),
            tau_react_sigma: self.react_sigma.map_or(1.0, |a| a.slow),
            tau_sorp: self.sorp.map_or(1.0, |a| a.slow),
            tau_trans: self.tau_trans,
        }
    }

    /// Time scales of an already dimensionless problem: each reaction or
    /// sorption process runs on its group time divided by its dimensionless
    /// constant, the remaining processes on the given times.
    pub fn from_process_times(
        times: &ProcessTimes,
        bulk: &ReactionNetwork,
        surface: &SurfaceReactionNetwork,
        sorption: &SorptionModel,
    ) -> Self {
        let mut ts = compute_time_scales(&CharacteristicScales::unit(), bulk, surface, sorption);
        let scale = |v: &mut Vec<f64>, t: f64| v.iter_mut().for_each(|x| *x *= t);
        scale(&mut ts.tau_react_f, times.tau_react);
        scale(&mut ts.tau_react_b, times.tau_react);
        scale(&mut ts.tau_react_sigma_f, times.tau_react_sigma);
        scale(&mut ts.tau_react_sigma_b, times.tau_react_sigma);
        scale(&mut ts.tau_ad, times.tau_sorp);
        scale(&mut ts.tau_de, times.tau_sorp);
        let ag = |a: Option<Aggregate>, t: f64| a.map(|a| Aggregate { slow: a.slow * t, fast: a.fast * t });
        TimeScales {
            tau_r: times.tau_r,
            tau_diff: times.tau_diff,
            tau_diff_sigma: times.tau_diff_sigma,
            tau_trans: times.tau_trans,
            react: ag(ts.react, times.tau_react),
            react_sigma: ag(ts.react_sigma, times.tau_react_sigma),
            sorp: ag(ts.sorp, times.tau_sorp),
            ..ts
        }
    }

    /// Multiplies every time by `s` (used to check scale invariance).
    pub fn rescaled(&self, s: f64) -> Self {
        let m = |v: &[f64]| v.iter().map(|t| t * s).collect::<Vec<_>>();
        let ag = |a: Option<Aggregate>| a.map(|a| Aggregate { slow: a.slow * s, fast: a.fast * s });
        TimeScales {
            tau_r: self.tau_r * s,
            tau_diff: self.tau_diff * s,
            tau_diff_sigma: self.tau_diff_sigma * s,
            tau_trans: self.tau_trans * s,
            tau_react_f: m(&self.tau_react_f),
            tau_react_b: m(&self.tau_react_b),
            tau_react_sigma_f: m(&self.tau_react_sigma_f),
            tau_react_sigma_b: m(&self.tau_react_sigma_b),
            tau_ad: m(&self.tau_ad),
            tau_de: m(&self.tau_de),
            react: ag(self.react),
            react_sigma: ag(self.react_sigma),
            sorp: ag(self.sorp),
            ..self.clone()
        }
    }
}

/// A dimensional problem: SI rate constants, diffusivities and data.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionalProblem {
    pub bulk: ReactionNetwork,
    pub surface: SurfaceReactionNetwork,
    pub sorption: SorptionModel,
    /// Bulk diffusivities `d_i` (m²/s).
    pub d: Vec<f64>,
    /// Magnitude of the surface diffusion coefficients (m²/s).
    pub d_sigma: f64,
    /// Bulk concentrations (mol/m³).
    pub c: Vec<f64>,
    /// Surface concentrations `c_i^Σ`, `i = 1..N` (mol/m²).
    pub c_sigma: Vec<f64>,
}

/// The same problem in dimensionless variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessProblem {
    /// Bulk network with constants `κ = τ^react k c_R^{order − 1}`.
    pub bulk: ReactionNetwork,
    /// Surface network with constants `κ^Σ = τ^{react,Σ} k^Σ`.
    pub surface: SurfaceReactionNetwork,
    /// Sorption with `κ^ad = τ^sorp k^ad c_R`, `κ^de = τ^sorp k^de`.
    pub sorption: SorptionModel,
    pub d_star: Vec<f64>,
    pub d_sigma_star: f64,
    pub c_star: Vec<f64>,
    pub theta: Vec<f64>,
    pub times: ProcessTimes,
}

fn map_constants(net: &ReactionNetwork, f: impl Fn(&Reaction, f64, u32) -> f64) -> ReactionNetwork {
    let mut out = net.clone();
    for r in &mut out.reactions {
        let src = r.clone();
        r.k_f = f(&src, src.k_f, src.forward_order());
        r.k_b = f(&src, src.k_b, src.backward_order());
    }
    out
}

fn concentration_power(c_r: f64, order: u32) -> f64 {
    if order == 0 {
        1.0 / c_r
    } else {
        powu(c_r, order - 1)
    }
}

/// Scales a dimensional problem; returns the dimensionless problem and the
/// time scales it was derived from.
pub fn nondimensionalize(
    p: &DimensionalProblem,
    scales: &CharacteristicScales,
) -> Result<(DimensionlessProblem, TimeScales), ScalesError> {
    scales.validate()?;
    let n = p.bulk.n_species();
    for (what, len) in [("d", p.d.len()), ("c", p.c.len()), ("c_sigma", p.c_sigma.len())] {
        if len != n {
            return Err(ScalesError::LengthMismatch { what, expected: n, got: len });
        }
    }
    for &d in &p.d {
        positive(d, "d")?;
    }
    positive(p.d_sigma, "d_sigma")?;
    let ts = compute_time_scales(scales, &p.bulk, &p.surface, &p.sorption);
    let times = ts.process_times();
    let c_r = scales.c_r;
    let bulk = map_constants(&p.bulk, |_, k, order| times.tau_react * k * concentration_power(c_r, order));
    let surface_base = map_constants(&p.surface.base, |_, k, _| times.tau_react_sigma * k);
    let sorption = SorptionModel {
        k_ad: p.sorption.k_ad.iter().map(|k| times.tau_sorp * k * c_r).collect(),
        k_de: p.sorption.k_de.iter().map(|k| times.tau_sorp * k).collect(),
    };
    let out = DimensionlessProblem {
        bulk,
        surface: SurfaceReactionNetwork::new(surface_base),
        sorption,
        d_star: p.d.iter().map(|d| d / scales.d_r).collect(),
        d_sigma_star: p.d_sigma / scales.d_r_sigma,
        c_star: p.c.iter().map(|c| c / c_r).collect(),
        theta: p.c_sigma.iter().map(|c| c / scales.c_s).collect(),
        times,
    };
    Ok((out, ts))
}

/// Inverse of [`nondimensionalize`] for the same scales.
pub fn redimensionalize(p: &DimensionlessProblem, scales: &CharacteristicScales) -> DimensionalProblem {
    let t = p.times;
    let c_r = scales.c_r;
    let bulk = map_constants(&p.bulk, |_, k, order| k / (t.tau_react * concentration_power(c_r, order)));
    let surface_base = map_constants(&p.surface.base, |_, k, _| k / t.tau_react_sigma);
    DimensionalProblem {
        bulk,
        surface: SurfaceReactionNetwork::new(surface_base),
        sorption: SorptionModel {
            k_ad: p.sorption.k_ad.iter().map(|k| k / (t.tau_sorp * c_r)).collect(),
            k_de: p.sorption.k_de.iter().map(|k| k / t.tau_sorp).collect(),
        },
        d: p.d_star.iter().map(|d| d * scales.d_r).collect(),
        d_sigma: p.d_sigma_star * scales.d_r_sigma,
        c: p.c_star.iter().map(|c| c * c_r).collect(),
        c_sigma: p.theta.iter().map(|t| t * scales.c_s).collect(),
    }
}

/// Process groups compared by [`classify_regime`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Process {
    Accumulation,
    SurfaceDiffusion,
    SurfaceChemistry,
    Sorption,
    Transmission,
}

impl Process {
    pub fn name(self) -> &'static str {
        match self {
            Process::Accumulation => "accumulation",
            Process::SurfaceDiffusion => "surface_diffusion",
            Process::SurfaceChemistry => "surface_chemistry",
            Process::Sorption => "sorption",
            Process::Transmission => "transmission",
        }
    }
}

/// Recommended model for a time-scale ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    FullModel,
    FastSurfaceChemistry,
    FastSorption,
    FastSurfaceDiffusion,
    FastAccumulation,
    TwoParamSorpChem,
    ThreeParamLimit,
    /// Fast transmission on its own: reported, never run.
    InvalidFastTransmission,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::FullModel => "FullModel",
            Regime::FastSurfaceChemistry => "FastSurfaceChemistry",
            Regime::FastSorption => "FastSorption",
            Regime::FastSurfaceDiffusion => "FastSurfaceDiffusion",
            Regime::FastAccumulation => "FastAccumulation",
            Regime::TwoParamSorpChem => "TwoParamSorpChem",
            Regime::ThreeParamLimit => "ThreeParamLimit",
            Regime::InvalidFastTransmission => "InvalidFastTransmission",
        }
    }
}

/// One entry of the sorted ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupScale {
    pub process: Process,
    pub slow: f64,
    pub fast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    /// Groups sorted by their slow aggregate, fastest first.
    pub ordering: Vec<GroupScale>,
    /// Groups judged fast.
    pub fast: Vec<Process>,
    pub recommendation: Regime,
    pub threshold: f64,
    /// `(max slow of the fast set) / (min fast of the rest)`, if any group is fast.
    pub separation: Option<f64>,
    pub notes: Vec<String>,
}

/// Largest `k` such that the first `k` groups (sorted by slow aggregate)
/// are all at least `1/ε` faster than every remaining group.
fn fast_prefix(ordering: &[GroupScale], eps: f64) -> Vec<usize> {
    let mut valid = Vec::new();
    for k in 1..ordering.len() {
        let max_slow = ordering[..k].iter().map(|g| g.slow).fold(0.0, f64::max);
        let min_fast = ordering[k..].iter().map(|g| g.fast).fold(f64::INFINITY, f64::min);
        if max_slow <= eps * min_fast {
            valid.push(k);
        }
    }
    valid
}

/// Decides which limit model the time scales call for.
///
/// Compared are the accumulation time, surface diffusion, surface
/// chemistry, sorption and transmission. A set of groups is fast when the
/// slowest time in it is at most `ε` times the fastest time outside.
pub fn classify_regime(ts: &TimeScales, eps: f64) -> RegimeReport {
    let mut ordering = Vec::new();
    let single = |p, t| GroupScale { process: p, slow: t, fast: t };
    ordering.push(single(Process::Accumulation, ts.tau_r));
    ordering.push(single(Process::SurfaceDiffusion, ts.tau_diff_sigma));
    if let Some(a) = ts.react_sigma {
        ordering.push(GroupScale { process: Process::SurfaceChemistry, slow: a.slow, fast: a.fast });
    }
    if let Some(a) = ts.sorp {
        ordering.push(GroupScale { process: Process::Sorption, slow: a.slow, fast: a.fast });
    }
    ordering.push(single(Process::Transmission, ts.tau_trans));
    ordering.sort_by(|a, b| a.slow.total_cmp(&b.slow).then(a.process.cmp(&b.process)));

    let prefixes = fast_prefix(&ordering, eps);
    let mut notes = Vec::new();
    let Some(&k) = prefixes.last() else {
        return RegimeReport {
            ordering,
            fast: Vec::new(),
            recommendation: Regime::FullModel,
            threshold: eps,
            separation: None,
            notes,
        };
    };
    let mut fast: Vec<Process> = ordering[..k].iter().map(|g| g.process).collect();
    fast.sort();
    let max_slow = ordering[..k].iter().map(|g| g.slow).fold(0.0, f64::max);
    let min_fast = ordering[k..].iter().map(|g| g.fast).fold(f64::INFINITY, f64::min);
    let separation = Some(max_slow / min_fast);

    use Process::*;
    let has = |p| fast.contains(&p);
    let recommendation = match fast.as_slice() {
        [Sorption] => Regime::FastSorption,
        [SurfaceChemistry] => Regime::FastSurfaceChemistry,
        [SurfaceDiffusion] => Regime::FastSurfaceDiffusion,
        [Accumulation] => Regime::FastAccumulation,
        [SurfaceChemistry, Sorption] => Regime::TwoParamSorpChem,
        [SurfaceChemistry, Sorption, Transmission] => {
            // the three-parameter limit needs sorption and chemistry to be
            // fast even compared to transmission
            let inner = prefixes.iter().any(|&j| {
                j == 2 && {
                    let mut f: Vec<Process> = ordering[..2].iter().map(|g| g.process).collect();
                    f.sort();
                    f == [SurfaceChemistry, Sorption]
                }
            });
            if inner {
                Regime::ThreeParamLimit
            } else {
                notes.push(String::from(
                    "transmission is as fast as sorption and surface chemistry; \
                     the three-parameter limit needs it to be separated, using the two-parameter model",
                ));
                Regime::TwoParamSorpChem
            }
        }
        _ if has(Transmission) && !has(Sorption) => {
            notes.push(String::from(
                "fast transmission without fast sorption has no thermodynamically consistent limit; \
                 not a runnable model",
            ));
            Regime::InvalidFastTransmission
        }
        _ => {
            let dominant = ordering[0].process;
            notes.push(format!(
                "fast set {{{}}} is not covered by the limit-model table; reporting the dominant process `{}`",
                fast.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "),
                dominant.name()
            ));
            match dominant {
                Accumulation => Regime::FastAccumulation,
                SurfaceDiffusion => Regime::FastSurfaceDiffusion,
                SurfaceChemistry => Regime::FastSurfaceChemistry,
                Sorption => Regime::FastSorption,
                Transmission => Regime::InvalidFastTransmission,
            }
        }
    };
    RegimeReport { ordering, fast, recommendation, threshold: eps, separation, notes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::SpeciesSet;
    use alloc::vec;

    fn problem(k_ad: f64, k_sigma: f64) -> (ReactionNetwork, SurfaceReactionNetwork, SorptionModel) {
        let sp = SpeciesSet::numbered(3).unwrap();
        let bulk =
            ReactionNetwork::new(sp.clone(), vec![Reaction::new(vec![1, 0, 0], vec![0, 1, 0], 5.0, 2.0)]).unwrap();
        let surface = SurfaceReactionNetwork::new(
            ReactionNetwork::new(sp, vec![Reaction::new(vec![1, 1, 0], vec![0, 0, 1], k_sigma, k_sigma)]).unwrap(),
        );
        let sorption = SorptionModel::new(vec![k_ad; 3], vec![k_ad; 3]).unwrap();
        (bulk, surface, sorption)
    }

    #[test]
    fn basic_time_scales() {
        let (b, s, so) = problem(1.0, 1.0);
        let mut sc = CharacteristicScales::unit();
        sc.c_r = 10.0;
        let ts = compute_time_scales(&sc, &b, &s, &so);
        assert_eq!(ts.tau_diff, 1.0);
        assert!((ts.tau_trans - 0.1).abs() < 1e-15);
        assert!((ts.tau_react_f[0] - 0.2).abs() < 1e-15);
        assert!(ts.lambda_react_f.iter().chain(&ts.lambda_de).all(|&l| l >= 1.0));
    }

    #[test]
    fn regimes() {
        let sc = CharacteristicScales::unit();
        let (b, s, so) = problem(1e6, 1.0);
        let r = classify_regime(&compute_time_scales(&sc, &b, &s, &so), 1e-2);
        assert_eq!(r.recommendation, Regime::FastSorption);
        let (b, s, so) = problem(3.0, 0.5);
        let r = classify_regime(&compute_time_scales(&sc, &b, &s, &so), 1e-2);
        assert_eq!(r.recommendation, Regime::FullModel);
        let (b, s, so) = problem(1e6, 1e6);
        let mut sc3 = sc.clone();
        sc3.c_s = 1e-3;
        let ts = compute_time_scales(&sc3, &b, &s, &so);
        let r = classify_regime(&ts, 1e-2);
        assert_eq!(r.recommendation, Regime::ThreeParamLimit, "{r:?}");
        // uniform rescaling leaves the verdict unchanged
        assert_eq!(classify_regime(&ts.rescaled(1e5), 1e-2).recommendation, Regime::ThreeParamLimit);
    }

    #[test]
    fn lone_fast_transmission_is_flagged() {
        let mut sc = CharacteristicScales::unit();
        sc.c_s = 1e-5;
        let (b, s, so) = problem(1.0, 1.0);
        let r = classify_regime(&compute_time_scales(&sc, &b, &s, &so), 1e-2);
        assert_eq!(r.recommendation, Regime::InvalidFastTransmission);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn round_trip() {
        let (b, s, so) = problem(2.0, 3.0);
        let p = DimensionalProblem {
            bulk: b,
            surface: s,
            sorption: so,
            d: vec![2.0, 1.0, 0.5],
            d_sigma: 0.3,
            c: vec![1.0, 2.0, 3.0],
            c_sigma: vec![0.1, 0.2, 0.05],
        };
        let mut sc = CharacteristicScales::unit();
        sc.d_r = 4.0;
        sc.c_r = 7.0;
        sc.c_s = 0.9;
        let (dl, _) = nondimensionalize(&p, &sc).unwrap();
        assert_eq!(dl.d_star[0], 0.5);
        let back = redimensionalize(&dl, &sc);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        for (x, y) in back.bulk.reactions.iter().zip(&p.bulk.reactions) {
            assert!(rel(x.k_f, y.k_f) < 1e-14 && rel(x.k_b, y.k_b) < 1e-14);
        }
        for (x, y) in back.c.iter().zip(&p.c) {
            assert!(rel(*x, *y) < 1e-14);
        }
        let mut bad = sc.clone();
        bad.l_r = 0.0;
        assert!(nondimensionalize(&p, &bad).is_err());
    }

    #[test]
    fn direct_times_classify_like_their_constants() {
        let (bulk, surface, sorption) = problem(1.0, 1.0);
        let unit = TimeScales::from_process_times(&ProcessTimes::unit(), &bulk, &surface, &sorption);
        assert_eq!(classify_regime(&unit, 1e-2).recommendation, Regime::FullModel);
        let times = ProcessTimes { tau_sorp: 1e-6, ..ProcessTimes::unit() };
        let ts = TimeScales::from_process_times(&times, &bulk, &surface, &sorption);
        assert_eq!(ts.sorp.unwrap().slow, 1e-6);
        assert_eq!(classify_regime(&ts, 1e-2).recommendation, Regime::FastSorption);
    }
}
