//! Langmuir surface: occupancy numbers, surface chemistry, sorption and
//! Fick-Onsager surface diffusion.
//!
//! Surface vectors have length `1 + N`; slot 0 is the vacancy species
//! (free sites) and slots `1..=N` the adsorbed species, so
//! `Σ_{i=0}^N θ_i = 1` on every node.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{orthonormal_complement, orthonormal_span};
use crate::network::{NetworkError, Reaction, ReactionNetwork};

/// Tolerance on the site-capacity constraint `Σ θ_i ≤ 1`.
pub const CAPACITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceError {
    CapacityViolation { occupied: f64 },
    NegativeOccupancy { index: usize },
    DimensionMismatch { expected: usize, got: usize },
    InvalidSorption { index: usize, what: &'static str },
    Network(NetworkError),
}

impl fmt::Display for SurfaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceError::CapacityViolation { occupied } => {
                write!(f, "site capacity exceeded: occupied fraction {occupied}")
            }
            SurfaceError::NegativeOccupancy { index } => write!(f, "negative occupancy in slot {index}"),
            SurfaceError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            SurfaceError::InvalidSorption { index, what } => {
                write!(f, "invalid sorption constant {what}[{index}]")
            }
            SurfaceError::Network(e) => write!(f, "surface network: {e}"),
        }
    }
}

impl core::error::Error for SurfaceError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            SurfaceError::Network(e) => Some(e),
            _ => None,
        }
    }
}

impl From<NetworkError> for SurfaceError {
    fn from(e: NetworkError) -> Self {
        SurfaceError::Network(e)
    }
}

/// Occupancy numbers `(θ_0, θ_1, ..., θ_N)` at one boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceState {
    pub theta: Vec<f64>,
}

impl SurfaceState {
    /// Completes reduced occupancies with the vacancy `θ_0 = 1 − Σ θ_i`.
    ///
    /// `θ_0` is clamped at zero only when the overshoot is within
    /// [`CAPACITY_TOL`].
    pub fn vacancy_closure(theta_red: &[f64]) -> Result<Self, SurfaceError> {
        if let Some(i) = theta_red.iter().position(|&x| x < 0.0) {
            return Err(SurfaceError::NegativeOccupancy { index: i + 1 });
        }
        let occupied: f64 = theta_red.iter().sum();
        if occupied > 1.0 + CAPACITY_TOL {
            return Err(SurfaceError::CapacityViolation { occupied });
        }
        let mut theta = Vec::with_capacity(theta_red.len() + 1);
        theta.push((1.0 - occupied).max(0.0));
        theta.extend_from_slice(theta_red);
        Ok(SurfaceState { theta })
    }

    /// Empty surface with `N` species.
    pub fn empty(n: usize) -> Self {
        let mut theta = vec![0.0; n + 1];
        theta[0] = 1.0;
        SurfaceState { theta }
    }

    pub fn n_species(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn vacancy(&self) -> f64 {
        self.theta[0]
    }

    pub fn reduced(&self) -> &[f64] {
        &self.theta[1..]
    }

    /// Largest deviation from `Σ θ = 1` together with the most negative slot.
    pub fn simplex_defect(&self) -> f64 {
        let s: f64 = self.theta.iter().sum();
        let neg = self.theta.iter().fold(0.0_f64, |m, &x| m.max(-x));
        (s - 1.0).abs().max(neg)
    }
}

/// Extends reduced exponents with the vacancy slot so that every reaction
/// conserves sites: with `S = Σ_{i≥1} ν_i`, `α_0 = max(S, 0)` and
/// `β_0 = max(−S, 0)`.
pub fn extend_surface_stoichiometry(alpha_red: &[u32], beta_red: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let s: i64 = beta_red.iter().zip(alpha_red).map(|(&b, &a)| i64::from(b) - i64::from(a)).sum();
    let mut alpha = Vec::with_capacity(alpha_red.len() + 1);
    let mut beta = Vec::with_capacity(beta_red.len() + 1);
    // exponents are small integers, the conversion cannot truncate
    alpha.push(s.max(0) as u32);
    beta.push((-s).max(0) as u32);
    alpha.extend_from_slice(alpha_red);
    beta.extend_from_slice(beta_red);
    (alpha, beta)
}

/// Surface mass-action network over the adsorbed species, with the
/// site-conserving extension to the vacancy slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceReactionNetwork {
    pub base: ReactionNetwork,
    /// Reactions over `1 + N` slots (vacancy first).
    pub extended: Vec<Reaction>,
}

impl SurfaceReactionNetwork {
    pub fn new(base: ReactionNetwork) -> Self {
        let extended = base
            .reactions
            .iter()
            .map(|r| {
                let (a, b) = extend_surface_stoichiometry(&r.alpha, &r.beta);
                Reaction::new(a, b, r.k_f, r.k_b)
            })
            .collect();
        SurfaceReactionNetwork { base, extended }
    }

    pub fn n_species(&self) -> usize {
        self.base.n_species()
    }

    pub fn n_reactions(&self) -> usize {
        self.extended.len()
    }

    /// Net rates `R_a^Σ(θ) = k^f θ^{α_ext} − k^b θ^{β_ext}` (not scaled by `c_s`).
    pub fn reaction_rates(&self, theta: &[f64]) -> Vec<f64> {
        self.extended.iter().map(|r| r.net_rate(theta)).collect()
    }

    /// Surface production `c_s Σ_a ν_ext^a R_a^Σ(θ)` over all `1 + N` slots.
    pub fn surface_mass_action(&self, theta: &SurfaceState, c_s: f64) -> Result<Vec<f64>, SurfaceError> {
        let n1 = self.n_species() + 1;
        if theta.theta.len() != n1 {
            return Err(SurfaceError::DimensionMismatch { expected: n1, got: theta.theta.len() });
        }
        let mut out = vec![0.0; n1];
        self.rate_into(&theta.theta, &mut out);
        out.iter_mut().for_each(|x| *x *= c_s);
        Ok(out)
    }

    /// Unscaled production over all slots, written into `out`.
    pub fn rate_into(&self, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for r in &self.extended {
            let rate = r.net_rate(theta);
            for (o, (&b, &a)) in out.iter_mut().zip(r.beta.iter().zip(&r.alpha)) {
                *o += (f64::from(b) - f64::from(a)) * rate;
            }
        }
    }

    /// `∂R_a/∂θ_j` over all `1 + N` slots, row-major `m x (1 + N)`.
    pub fn rate_jacobian(&self, theta: &[f64]) -> Vec<f64> {
        let n1 = theta.len();
        let mut jac = vec![0.0; self.n_reactions() * n1];
        for (a, r) in self.extended.iter().enumerate() {
            for j in 0..n1 {
                jac[a * n1 + j] = r.net_rate_partial(theta, j);
            }
        }
        jac
    }
}

/// Langmuir sorption `A_i + A_0^Σ ⇌ A_i^Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SorptionModel {
    pub k_ad: Vec<f64>,
    pub k_de: Vec<f64>,
}

impl SorptionModel {
    /// `k_ad ≥ 0` (zero allows pure desorption) and `k_de > 0`.
    pub fn new(k_ad: Vec<f64>, k_de: Vec<f64>) -> Result<Self, SurfaceError> {
        if k_ad.len() != k_de.len() {
            return Err(SurfaceError::DimensionMismatch { expected: k_ad.len(), got: k_de.len() });
        }
        for (i, &k) in k_ad.iter().enumerate() {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(SurfaceError::InvalidSorption { index: i, what: "k_ad" });
            }
        }
        for (i, &k) in k_de.iter().enumerate() {
            if !(k > 0.0 && k.is_finite()) {
                return Err(SurfaceError::InvalidSorption { index: i, what: "k_de" });
            }
        }
        Ok(SorptionModel { k_ad, k_de })
    }

    pub fn n_species(&self) -> usize {
        self.k_ad.len()
    }

    /// Isotherm constants `K_i = k_i^ad / k_i^de`.
    pub fn isotherm_constants(&self) -> Vec<f64> {
        self.k_ad.iter().zip(&self.k_de).map(|(a, d)| a / d).collect()
    }

    /// `s_i = c_s (k_i^ad c_i θ_0 − k_i^de θ_i)`, `i = 1..N`.
    pub fn sorption_rate(&self, c_trace: &[f64], theta: &SurfaceState, c_s: f64) -> Vec<f64> {
        let mut s = vec![0.0; self.n_species()];
        self.rate_into(c_trace, &theta.theta, &mut s);
        s.iter_mut().for_each(|x| *x *= c_s);
        s
    }

    /// Unscaled sorption rate into `out`; `theta` has length `1 + N`.
    #[inline]
    pub fn rate_into(&self, c_trace: &[f64], theta: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = self.k_ad[i] * c_trace[i] * theta[0] - self.k_de[i] * theta[i + 1];
        }
    }

    /// Vacancy companion `s_0 = −Σ_i s_i`.
    pub fn vacancy_rate(s: &[f64]) -> f64 {
        -s.iter().sum::<f64>()
    }

    /// Langmuir isotherm `θ_0 = 1 / (1 + Σ K_j c_j)`, `θ_i = K_i c_i θ_0`.
    pub fn equilibrium(&self, c_trace: &[f64]) -> SurfaceState {
        let k = self.isotherm_constants();
        let denom = 1.0 + k.iter().zip(c_trace).map(|(k, c)| k * c).sum::<f64>();
        let t0 = 1.0 / denom;
        let mut theta = Vec::with_capacity(k.len() + 1);
        theta.push(t0);
        theta.extend(k.iter().zip(c_trace).map(|(k, c)| k * c * t0));
        SurfaceState { theta }
    }
}

/// Fick-Onsager surface diffusion coefficients `D^Σ(θ)`, a `(1+N)×(1+N)`
/// matrix acting on `∇θ`.
pub trait SurfaceDiffusion: fmt::Debug + Send + Sync {
    /// Row-major matrix at the given occupancies (length `1 + N`).
    fn matrix(&self, theta: &[f64]) -> Vec<f64>;

    /// `∂D/∂θ_k`, row-major. The default uses central differences.
    fn derivative(&self, theta: &[f64], k: usize) -> Vec<f64> {
        let h = 1e-7 * theta[k].abs().max(1e-3);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += h;
        tm[k] -= h;
        let dp = self.matrix(&tp);
        let dm = self.matrix(&tm);
        dp.iter().zip(&dm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }
}

/// `D^Σ(θ) = d_ref (diag θ − θθᵀ)`: symmetric, zero row sums, nonpositive
/// off-diagonal and positive diagonal for interior θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangmuirDiffusion {
    pub d_ref: f64,
}

impl SurfaceDiffusion for LangmuirDiffusion {
    fn matrix(&self, theta: &[f64]) -> Vec<f64> {
        let n = theta.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { theta[i] } else { 0.0 };
                m[i * n + j] = self.d_ref * (diag - theta[i] * theta[j]);
            }
        }
        m
    }

    fn derivative(&self, theta: &[f64], k: usize) -> Vec<f64> {
        let n = theta.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d_ij = f64::from(u8::from(i == j));
                let d_ik = f64::from(u8::from(i == k));
                let d_jk = f64::from(u8::from(j == k));
                m[i * n + j] = self.d_ref * (d_ij * d_ik - d_ik * theta[j] - theta[i] * d_jk);
            }
        }
        m
    }
}

/// Occupancies to the `N` surface diffusion coefficients.
pub type DiffusionFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Any closure can serve as a diffusion model.
pub struct FnDiffusion(pub DiffusionFn);

impl fmt::Debug for FnDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnDiffusion(..)")
    }
}

impl SurfaceDiffusion for FnDiffusion {
    fn matrix(&self, theta: &[f64]) -> Vec<f64> {
        (self.0)(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnsagerCheck {
    Symmetry,
    RowSum,
    OffDiagonalSign,
    DiagonalSign,
    Kernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnsagerViolation {
    pub sample: usize,
    pub check: OnsagerCheck,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OnsagerReport {
    pub samples: usize,
    pub violations: Vec<OnsagerViolation>,
}

impl OnsagerReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks symmetry, zero row sums, the sign pattern and
/// `ker D = span{(1, ..., 1)}` at every sample state. Never fails; every
/// violation is listed with its sample index.
pub fn onsager_validate(d: &dyn SurfaceDiffusion, samples: &[SurfaceState]) -> OnsagerReport {
    let tol = 1e-12;
    let mut report = OnsagerReport { samples: samples.len(), violations: Vec::new() };
    for (s, state) in samples.iter().enumerate() {
        let n = state.theta.len();
        let m = d.matrix(&state.theta);
        let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
        let mut push = |check, detail: String| {
            report.violations.push(OnsagerViolation { sample: s, check, detail });
        };
        let mut sym = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                sym = sym.max((m[i * n + j] - m[j * n + i]).abs());
            }
        }
        if sym > tol * scale {
            push(OnsagerCheck::Symmetry, format!("max asymmetry {sym:e}"));
        }
        for i in 0..n {
            let rs: f64 = m[i * n..(i + 1) * n].iter().sum();
            if rs.abs() > tol * scale {
                push(OnsagerCheck::RowSum, format!("row {i} sums to {rs:e}"));
                break;
            }
        }
        'off: for i in 0..n {
            for j in 0..n {
                if i != j && m[i * n + j] > tol * scale {
                    push(OnsagerCheck::OffDiagonalSign, format!("entry ({i},{j}) = {:e}", m[i * n + j]));
                    break 'off;
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| m[i * n + i] <= 0.0) {
            push(OnsagerCheck::DiagonalSign, format!("diagonal {i} = {:e}", m[i * n + i]));
        }
        // rank of D on the complement of the ones vector must be n - 1
        let ones: Vec<f64> = vec![1.0 / libm::sqrt(n as f64); n];
        let q = orthonormal_complement(&[ones], n);
        let dq: Vec<Vec<f64>> =
            q.iter().map(|v| (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()).collect();
        let rank =
            if dq.iter().flatten().all(|x| x.abs() <= tol * scale) { 0 } else { orthonormal_span(&dq, 1e-10).len() };
        if rank != n - 1 {
            push(OnsagerCheck::Kernel, format!("rank {rank} on the ones-complement, need {}", n - 1));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::SpeciesSet;

    fn mp_surface(kf: f64, kb: f64) -> SurfaceReactionNetwork {
        SurfaceReactionNetwork::new(
            ReactionNetwork::new(
                SpeciesSet::numbered(3).unwrap(),
                vec![Reaction::new(vec![1, 1, 0], vec![0, 0, 1], kf, kb)],
            )
            .unwrap(),
        )
    }

    #[test]
    fn vacancy_closure_cases() {
        assert_eq!(SurfaceState::vacancy_closure(&[0.0; 3]).unwrap().theta, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(SurfaceState::vacancy_closure(&[0.25; 3]).unwrap().theta, vec![0.25; 4]);
        assert!(matches!(SurfaceState::vacancy_closure(&[0.6, 0.6, 0.0]), Err(SurfaceError::CapacityViolation { .. })));
        let t = SurfaceState::vacancy_closure(&[0.5, 0.5 + 1e-13]).unwrap();
        assert_eq!(t.theta[0], 0.0);
    }

    #[test]
    fn extension_rule() {
        assert_eq!(extend_surface_stoichiometry(&[1, 1, 0], &[0, 0, 1]), (vec![0, 1, 1, 0], vec![1, 0, 0, 1]));
        assert_eq!(extend_surface_stoichiometry(&[1, 0], &[0, 1]), (vec![0, 1, 0], vec![0, 0, 1]));
        assert_eq!(extend_surface_stoichiometry(&[1, 0, 0], &[0, 1, 1]), (vec![1, 1, 0, 0], vec![0, 0, 1, 1]));
    }

    #[test]
    fn surface_rates() {
        let net = mp_surface(1.0, 1.0);
        let r = net.surface_mass_action(&SurfaceState { theta: vec![0.25; 4] }, 1.0).unwrap();
        assert_eq!(r, vec![0.0; 4]);
        let net = mp_surface(2.0, 1.0);
        let r = net.surface_mass_action(&SurfaceState { theta: vec![0.1, 0.3, 0.4, 0.2] }, 1.0).unwrap();
        for (x, w) in r.iter().zip([0.22, -0.22, -0.22, 0.22]) {
            assert!((x - w).abs() < 1e-15);
        }
        assert!(r.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn sorption_cases() {
        let m = SorptionModel::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        let s = m.sorption_rate(&[1.0; 3], &SurfaceState { theta: vec![0.25; 4] }, 1.0);
        assert_eq!(s, vec![0.0; 3]);
        let m = SorptionModel::new(vec![2.0, 1.0, 1.0], vec![1.0; 3]).unwrap();
        let s = m.sorption_rate(&[1.0, 0.0, 0.0], &SurfaceState { theta: vec![0.5, 0.1, 0.2, 0.2] }, 2.0);
        for (x, w) in s.iter().zip([1.8, -0.4, -0.4]) {
            assert!((x - w).abs() < 1e-15);
        }
        let s = m.sorption_rate(&[5.0, 5.0, 5.0], &SurfaceState { theta: vec![0.0, 0.5, 0.3, 0.2] }, 1.0);
        assert!(s.iter().all(|&x| x <= 0.0));
        assert!(SorptionModel::new(vec![-1.0], vec![1.0]).is_err());
        assert!(SorptionModel::new(vec![1.0], vec![0.0]).is_err());
        assert!(SorptionModel::new(vec![0.0], vec![1.0]).is_ok());
    }

    #[test]
    fn langmuir_isotherm() {
        let m = SorptionModel::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(m.equilibrium(&[0.0; 3]).theta, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.equilibrium(&[1.0; 3]).theta, vec![0.25; 4]);
        let m1 = SorptionModel::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(m1.equilibrium(&[3.0]).theta, vec![0.25, 0.75]);
    }

    #[test]
    fn onsager_checks() {
        let samples = [SurfaceState { theta: vec![0.25; 4] }];
        let good = onsager_validate(&LangmuirDiffusion { d_ref: 1.0 }, &samples);
        assert!(good.passed(), "{good:?}");
        let ident = FnDiffusion(Box::new(|t: &[f64]| {
            let n = t.len();
            (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()
        }));
        let rep = onsager_validate(&ident, &samples);
        assert!(rep.violations.iter().any(|v| v.check == OnsagerCheck::RowSum));
        let zero = FnDiffusion(Box::new(|t: &[f64]| vec![0.0; t.len() * t.len()]));
        let rep = onsager_validate(&zero, &samples);
        assert!(rep.violations.iter().any(|v| v.check == OnsagerCheck::Kernel));
    }

    #[test]
    fn langmuir_diffusion_derivative_is_exact() {
        let d = LangmuirDiffusion { d_ref: 0.7 };
        let theta = [0.2, 0.3, 0.1, 0.4];
        let fd = FnDiffusion(Box::new(move |t: &[f64]| d.matrix(t)));
        for k in 0..4 {
            let a = d.derivative(&theta, k);
            let b = fd.derivative(&theta, k);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }
}
