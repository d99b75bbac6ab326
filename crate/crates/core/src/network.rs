//! Stoichiometry and mass-action kinetics.
//!
//! A [`ReactionNetwork`] is a list of reversible elementary reactions
//! `Σ α_i A_i ⇌ Σ β_i A_i` over a [`SpeciesSet`]. The net rate of reaction
//! `a` is `R_a = k_f c^α − k_b c^β` and the species production is
//! `r_i = Σ_a ν_i^a R_a` with `ν = β − α`. Powers use `0^0 = 1` so the rates
//! extend continuously to the boundary of the positive orthant.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{orthonormal_complement, orthonormal_span, solve_dense};
use crate::math::{dot, exp, ln, max_abs, powu, sqrt};

/// Relative tolerance for rank decisions on stoichiometric matrices.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkError {
    EmptySpecies,
    DuplicateName(String),
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    ZeroStoichiometry {
        reaction: usize,
    },
    NonPositiveRate {
        reaction: usize,
    },
    NegativeConcentration {
        index: usize,
    },
    /// A logarithm was requested of a zero concentration.
    ZeroConcentration {
        index: usize,
    },
}

impl fmt::Display for NetworkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkError::EmptySpecies => f.write_str("a species set needs at least one species"),
            NetworkError::DuplicateName(n) => write!(f, "duplicate species name `{n}`"),
            NetworkError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            NetworkError::ZeroStoichiometry { reaction } => {
                write!(f, "reaction {reaction} has zero net stoichiometry")
            }
            NetworkError::NonPositiveRate { reaction } => {
                write!(f, "reaction {reaction} needs strictly positive rate constants")
            }
            NetworkError::NegativeConcentration { index } => {
                write!(f, "negative concentration at species {index}")
            }
            NetworkError::ZeroConcentration { index } => {
                write!(f, "logarithm of zero concentration at species {index}")
            }
        }
    }
}

impl core::error::Error for NetworkError {}

/// Named species `A_1, ..., A_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSet {
    names: Vec<String>,
}

impl SpeciesSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, NetworkError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(NetworkError::EmptySpecies);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(NetworkError::DuplicateName(n.clone()));
            }
        }
        Ok(SpeciesSet { names })
    }

    /// Species named `A1, ..., AN`.
    pub fn numbered(n: usize) -> Result<Self, NetworkError> {
        Self::new((1..=n).map(|i| alloc::format!("A{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Monomial `x^e = Π x_i^{e_i}`.
#[inline]
pub fn monomial(x: &[f64], e: &[u32]) -> f64 {
    x.iter().zip(e).map(|(&xi, &ei)| powu(xi, ei)).product()
}

/// Partial derivative of `x^e` with respect to `x_j`.
#[inline]
pub fn monomial_partial(x: &[f64], e: &[u32], j: usize) -> f64 {
    if e[j] == 0 {
        return 0.0;
    }
    let mut p = f64::from(e[j]) * powu(x[j], e[j] - 1);
    for (i, (&xi, &ei)) in x.iter().zip(e).enumerate() {
        if i != j {
            p *= powu(xi, ei);
        }
    }
    p
}

/// One reversible elementary reaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub k_f: f64,
    pub k_b: f64,
}

impl Reaction {
    pub fn new(alpha: Vec<u32>, beta: Vec<u32>, k_f: f64, k_b: f64) -> Self {
        Reaction { alpha, beta, k_f, k_b }
    }

    /// Net stoichiometry `ν = β − α`.
    pub fn nu(&self) -> Vec<f64> {
        self.beta.iter().zip(&self.alpha).map(|(&b, &a)| f64::from(b) - f64::from(a)).collect()
    }

    /// Reaction order `|α|`.
    pub fn forward_order(&self) -> u32 {
        self.alpha.iter().sum()
    }

    /// Reaction order `|β|`.
    pub fn backward_order(&self) -> u32 {
        self.beta.iter().sum()
    }

    /// Net rate `R = k_f x^α − k_b x^β`.
    #[inline]
    pub fn net_rate(&self, x: &[f64]) -> f64 {
        self.k_f * monomial(x, &self.alpha) - self.k_b * monomial(x, &self.beta)
    }

    /// `∂R/∂x_j`.
    #[inline]
    pub fn net_rate_partial(&self, x: &[f64], j: usize) -> f64 {
        self.k_f * monomial_partial(x, &self.alpha, j) - self.k_b * monomial_partial(x, &self.beta, j)
    }
}

/// Reference chemical potentials, with `RT = 1` and `c* = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoParams {
    pub mu0: Vec<f64>,
}

impl ThermoParams {
    pub fn new(mu0: Vec<f64>) -> Self {
        ThermoParams { mu0 }
    }

    pub fn zero(n: usize) -> Self {
        ThermoParams { mu0: vec![0.0; n] }
    }

    /// `RT`, fixed by convention.
    pub const fn rt_scale(&self) -> f64 {
        1.0
    }

    /// Reference concentration, fixed by convention.
    pub const fn c_ref(&self) -> f64 {
        1.0
    }

    /// Chemical potentials `μ_i = μ_i^0 + ln c_i`.
    pub fn potentials(&self, c: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if c.len() != self.mu0.len() {
            return Err(NetworkError::DimensionMismatch { expected: self.mu0.len(), got: c.len() });
        }
        c.iter()
            .zip(&self.mu0)
            .enumerate()
            .map(|(i, (&ci, &m))| {
                if ci < 0.0 {
                    Err(NetworkError::NegativeConcentration { index: i })
                } else if ci == 0.0 {
                    Err(NetworkError::ZeroConcentration { index: i })
                } else {
                    Ok(m + ln(ci))
                }
            })
            .collect()
    }
}

/// Orthonormal basis of `span{ν^a}^⊥` with the orthogonal projector onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationBasis {
    pub vectors: Vec<Vec<f64>>,
    /// Row-major `N x N` projector `Σ_k e^k (e^k)ᵀ`.
    pub projector: Vec<f64>,
    n: usize,
}

impl ConservationBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| dot(&self.projector[i * n..(i + 1) * n], x)).collect()
    }
}

/// Result of the linear-independence test on the reaction vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReport {
    pub independent: bool,
    pub rank: usize,
    pub n_reactions: usize,
}

/// Outcome of the search for a strictly positive conservation vector.
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveConservation {
    /// A vector `e > 0` with `e·ν^a = 0` for all `a`, scaled to `min e = 1`.
    Found(Vec<f64>),
    /// No such vector; `species` is a component that cannot be made
    /// positive (for instance one forced to vanish by orthogonality).
    None { species: usize },
}

impl PositiveConservation {
    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            PositiveConservation::Found(v) => Some(v),
            PositiveConservation::None { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: SpeciesSet,
    pub reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn new(species: SpeciesSet, reactions: Vec<Reaction>) -> Result<Self, NetworkError> {
        let n = species.len();
        for (a, r) in reactions.iter().enumerate() {
            for len in [r.alpha.len(), r.beta.len()] {
                if len != n {
                    return Err(NetworkError::DimensionMismatch { expected: n, got: len });
                }
            }
            if r.alpha == r.beta {
                return Err(NetworkError::ZeroStoichiometry { reaction: a });
            }
            if !(r.k_f > 0.0 && r.k_b > 0.0 && r.k_f.is_finite() && r.k_b.is_finite()) {
                return Err(NetworkError::NonPositiveRate { reaction: a });
            }
        }
        Ok(ReactionNetwork { species, reactions })
    }

    /// Network without reactions.
    pub fn empty(species: SpeciesSet) -> Self {
        ReactionNetwork { species, reactions: Vec::new() }
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    /// Stoichiometric vectors `ν^a`, one per reaction.
    pub fn nu_vectors(&self) -> Vec<Vec<f64>> {
        self.reactions.iter().map(Reaction::nu).collect()
    }

    fn check_nonnegative(&self, c: &[f64]) -> Result<(), NetworkError> {
        if c.len() != self.n_species() {
            return Err(NetworkError::DimensionMismatch { expected: self.n_species(), got: c.len() });
        }
        if let Some(i) = c.iter().position(|&x| x < 0.0) {
            return Err(NetworkError::NegativeConcentration { index: i });
        }
        Ok(())
    }

    /// Net reaction rates `R_a(c)`.
    pub fn reaction_rates(&self, c: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check_nonnegative(c)?;
        Ok(self.reactions.iter().map(|r| r.net_rate(c)).collect())
    }

    /// Species production `r(c) = Σ_a ν^a R_a(c)`.
    pub fn mass_action_rate(&self, c: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check_nonnegative(c)?;
        let mut out = vec![0.0; self.n_species()];
        self.rate_into(c, &mut out);
        Ok(out)
    }

    /// Unchecked production rate, accumulated into `out` (which is
    /// overwritten).
    pub fn rate_into(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for r in &self.reactions {
            let rate = r.net_rate(c);
            for (o, (&b, &a)) in out.iter_mut().zip(r.beta.iter().zip(&r.alpha)) {
                *o += (f64::from(b) - f64::from(a)) * rate;
            }
        }
    }

    /// Unchecked Jacobian `∂r_i/∂c_j` into a row-major `N x N` slice.
    pub fn jacobian_into(&self, c: &[f64], jac: &mut [f64]) {
        let n = self.n_species();
        jac.iter_mut().for_each(|x| *x = 0.0);
        for r in &self.reactions {
            let nu = r.nu();
            for j in 0..n {
                let d = r.net_rate_partial(c, j);
                if d != 0.0 {
                    for i in 0..n {
                        jac[i * n + j] += nu[i] * d;
                    }
                }
            }
        }
    }

    /// Affinities `𝒜_a = Σ_i (μ_i^0 + ln c_i) ν_i^a`.
    pub fn affinity(&self, thermo: &ThermoParams, c: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if thermo.mu0.len() != self.n_species() {
            return Err(NetworkError::DimensionMismatch { expected: self.n_species(), got: thermo.mu0.len() });
        }
        let mu = thermo.potentials(c)?;
        Ok(self.reactions.iter().map(|r| dot(&mu, &r.nu())).collect())
    }

    /// Rank of the stoichiometric matrix and whether its rows are
    /// linearly independent.
    pub fn detailed_balance_check(&self) -> RankReport {
        let rank = orthonormal_span(&self.nu_vectors(), RANK_TOL).len();
        RankReport { independent: rank == self.n_reactions(), rank, n_reactions: self.n_reactions() }
    }

    /// Orthonormal basis of the conservation space and its projector.
    pub fn conservation_basis(&self) -> ConservationBasis {
        let n = self.n_species();
        let span = orthonormal_span(&self.nu_vectors(), RANK_TOL);
        let vectors = orthonormal_complement(&span, n);
        let mut projector = vec![0.0; n * n];
        for e in &vectors {
            for i in 0..n {
                for j in 0..n {
                    projector[i * n + j] += e[i] * e[j];
                }
            }
        }
        ConservationBasis { vectors, projector, n }
    }

    /// Searches for a strictly positive conservation vector.
    ///
    /// The all-ones vector is projected onto the conservation space first;
    /// if that is not positive, the vertices of `{y : M y ≥ 1}` (with `M`
    /// the basis as columns) are enumerated in lexicographic order of the
    /// active rows.
    pub fn positive_conservation_vector(&self) -> PositiveConservation {
        let n = self.n_species();
        let basis = self.conservation_basis();
        let d = basis.dim();
        let ones = vec![1.0; n];
        let p1 = basis.project(&ones);
        let pos_tol = 1e-12;
        if d > 0 && p1.iter().all(|&x| x > pos_tol) {
            return PositiveConservation::Found(scale_min_one(&p1));
        }
        let row_norm = |i: usize| basis.vectors.iter().map(|e| e[i] * e[i]).sum::<f64>();
        if let Some(species) = (0..n).find(|&i| row_norm(i) < 1e-20) {
            return PositiveConservation::None { species };
        }
        let nus = self.nu_vectors();
        let conserved = |e: &[f64]| {
            let ne = sqrt(dot(e, e));
            nus.iter().all(|nu| dot(e, nu).abs() <= 1e-10 * ne * sqrt(dot(nu, nu)))
        };
        if d > 0 && n <= 24 {
            let m = |i: usize, k: usize| basis.vectors[k][i];
            let mut rows: Vec<usize> = (0..d).collect();
            loop {
                let mut a = vec![0.0; d * d];
                for (r, &i) in rows.iter().enumerate() {
                    for k in 0..d {
                        a[r * d + k] = m(i, k);
                    }
                }
                let mut y = vec![1.0; d];
                if solve_dense(&mut a, d, &mut y).is_ok() {
                    let e: Vec<f64> = (0..n).map(|i| (0..d).map(|k| m(i, k) * y[k]).sum()).collect();
                    if e.iter().all(|&x| x >= 1.0 - 1e-9) && conserved(&e) {
                        return PositiveConservation::Found(scale_min_one(&e));
                    }
                }
                if !next_combination(&mut rows, n) {
                    break;
                }
            }
        }
        // certificate: the most negative entry of the projected ones vector
        let mut species = 0;
        for i in 1..n {
            if p1[i] < p1[species] {
                species = i;
            }
        }
        PositiveConservation::None { species }
    }

    /// Copy with backward constants replaced so that
    /// `k_b / k_f = exp(Σ_i ν_i μ_i^0)` holds for every reaction.
    pub fn with_detailed_balance(&self, thermo: &ThermoParams) -> Self {
        let mut out = self.clone();
        for r in &mut out.reactions {
            r.k_b = r.k_f * exp(dot(&r.nu(), &thermo.mu0));
        }
        out
    }

    /// Largest relative violation of `k_b / k_f = exp(Σ_i ν_i μ_i^0)`.
    pub fn detailed_balance_defect(&self, thermo: &ThermoParams) -> f64 {
        self.reactions
            .iter()
            .map(|r| {
                let want = exp(dot(&r.nu(), &thermo.mu0));
                ((r.k_b / r.k_f) - want).abs() / want
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_a 𝒜_a R_a`, nonpositive for detailed-balanced constants.
    pub fn dissipation(&self, thermo: &ThermoParams, c: &[f64]) -> Result<f64, NetworkError> {
        let aff = self.affinity(thermo, c)?;
        let rates = self.reaction_rates(c)?;
        Ok(dot(&aff, &rates))
    }
}

fn scale_min_one(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out: Vec<f64> = v.iter().map(|x| x / m).collect();
    // snap entries that are integers up to round-off, e.g. (1, 1, 2)
    let scale = max_abs(&out);
    for x in &mut out {
        let r = libm::round(*x);
        if (*x - r).abs() <= 1e-12 * scale.max(1.0) {
            *x = r;
        }
    }
    out
}

/// Advances `idx` (strictly increasing, values `< n`) to the next
/// combination in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(k_f: f64, k_b: f64) -> ReactionNetwork {
        ReactionNetwork::new(
            SpeciesSet::numbered(3).unwrap(),
            vec![Reaction::new(vec![1, 1, 0], vec![0, 0, 1], k_f, k_b)],
        )
        .unwrap()
    }

    #[test]
    fn rate_of_association_reaction() {
        let r = mp(2.0, 1.0).mass_action_rate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r, vec![-1.0, -1.0, 1.0]);
        let r = mp(1.0, 1.0).mass_action_rate(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r, vec![0.0; 3]);
        let empty = ReactionNetwork::empty(SpeciesSet::numbered(2).unwrap());
        assert_eq!(empty.mass_action_rate(&[0.3, 0.7]).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn rates_reject_bad_input() {
        let net = mp(1.0, 1.0);
        assert!(matches!(
            net.mass_action_rate(&[1.0, -1.0, 1.0]),
            Err(NetworkError::NegativeConcentration { index: 1 })
        ));
        assert!(matches!(net.mass_action_rate(&[1.0]), Err(NetworkError::DimensionMismatch { .. })));
        assert_eq!(net.mass_action_rate(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn affinities() {
        let net = mp(1.0, 1.0);
        let t0 = ThermoParams::zero(3);
        assert_eq!(net.affinity(&t0, &[1.0, 1.0, 1.0]).unwrap(), vec![0.0]);
        let a = net.affinity(&t0, &[1.0, 2.0, 3.0]).unwrap()[0];
        assert!((a - 0.405_465_108_108_164_4).abs() < 1e-12);
        let t = ThermoParams::new(vec![0.0, 0.0, ln(2.0)]);
        let a = net.affinity(&t, &[1.0, 1.0, 2.0]).unwrap()[0];
        assert!((a - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert!(matches!(net.affinity(&t0, &[0.0, 1.0, 1.0]), Err(NetworkError::ZeroConcentration { index: 0 })));
    }

    #[test]
    fn conservation_basis_of_association() {
        let b = mp(1.0, 1.0).conservation_basis();
        assert_eq!(b.dim(), 2);
        // projector onto span{(1,0,1),(0,1,1)} is I − ννᵀ/3
        let nu = [-1.0, -1.0, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 } - nu[i] * nu[j] / 3.0;
                assert!((b.projector[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conservation_basis_two_reactions() {
        let net = ReactionNetwork::new(
            SpeciesSet::numbered(3).unwrap(),
            vec![
                Reaction::new(vec![1, 1, 0], vec![0, 0, 1], 1.0, 1.0),
                Reaction::new(vec![0, 1, 0], vec![1, 0, 0], 1.0, 1.0),
            ],
        )
        .unwrap();
        let b = net.conservation_basis();
        assert_eq!(b.dim(), 1);
        let e = &b.vectors[0];
        let s = 6f64.sqrt();
        let sign = e[0].signum();
        for (x, w) in e.iter().zip([1.0 / s, 1.0 / s, 2.0 / s]) {
            assert!((sign * x - w).abs() < 1e-12);
        }
        let none = ReactionNetwork::empty(SpeciesSet::numbered(3).unwrap()).conservation_basis();
        assert_eq!(none.dim(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(none.projector[i * 3 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rank_reports() {
        let sp = || SpeciesSet::numbered(3).unwrap();
        let r = |a: [u32; 3], b: [u32; 3]| Reaction::new(a.to_vec(), b.to_vec(), 1.0, 1.0);
        let one = ReactionNetwork::new(sp(), vec![r([1, 1, 0], [0, 0, 1])]).unwrap();
        assert!(one.detailed_balance_check().independent);
        let dup = ReactionNetwork::new(sp(), vec![r([1, 1, 0], [0, 0, 1]), r([1, 1, 0], [0, 0, 1])]).unwrap();
        let rep = dup.detailed_balance_check();
        assert!(!rep.independent);
        assert_eq!(rep.rank, 1);
        let rev = ReactionNetwork::new(sp(), vec![r([1, 1, 0], [0, 0, 1]), r([0, 0, 1], [1, 1, 0])]).unwrap();
        assert!(!rev.detailed_balance_check().independent);
    }

    #[test]
    fn positive_vectors() {
        assert_eq!(mp(1.0, 1.0).positive_conservation_vector(), PositiveConservation::Found(vec![1.0, 1.0, 2.0]));
        let prod = ReactionNetwork::new(
            SpeciesSet::numbered(3).unwrap(),
            vec![Reaction::new(vec![0, 0, 0], vec![1, 0, 0], 1.0, 1.0)],
        )
        .unwrap();
        assert_eq!(prod.positive_conservation_vector(), PositiveConservation::None { species: 0 });
        let empty = ReactionNetwork::empty(SpeciesSet::numbered(4).unwrap());
        assert_eq!(empty.positive_conservation_vector(), PositiveConservation::Found(vec![1.0; 4]));
    }

    #[test]
    fn positive_vector_needs_vertex_search() {
        // A1 ⇌ 3 A2: projecting the ones vector gives a negative entry,
        // yet e = (3, 1) is positive and conserved
        let net = ReactionNetwork::new(
            SpeciesSet::numbered(2).unwrap(),
            vec![Reaction::new(vec![1, 0], vec![0, 3], 1.0, 1.0)],
        )
        .unwrap();
        let e = net.positive_conservation_vector();
        let v = e.vector().unwrap();
        assert!(v.iter().all(|&x| x > 0.0));
        assert!(dot(v, &[-1.0, 3.0]).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_differences() {
        let net = ReactionNetwork::new(
            SpeciesSet::numbered(3).unwrap(),
            vec![
                Reaction::new(vec![2, 1, 0], vec![0, 0, 1], 1.3, 0.7),
                Reaction::new(vec![0, 1, 0], vec![1, 0, 0], 0.4, 2.0),
            ],
        )
        .unwrap();
        let c = [0.7, 1.1, 0.4];
        let mut jac = vec![0.0; 9];
        net.jacobian_into(&c, &mut jac);
        let h = 1e-7;
        for j in 0..3 {
            let mut cp = c;
            cp[j] += h;
            let mut cm = c;
            cm[j] -= h;
            let rp = net.mass_action_rate(&cp).unwrap();
            let rm = net.mass_action_rate(&cm).unwrap();
            for i in 0..3 {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!((fd - jac[i * 3 + j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn invalid_reactions_are_rejected() {
        let sp = SpeciesSet::numbered(2).unwrap();
        assert!(ReactionNetwork::new(sp.clone(), vec![Reaction::new(vec![1, 0], vec![1, 0], 1.0, 1.0)]).is_err());
        assert!(ReactionNetwork::new(sp.clone(), vec![Reaction::new(vec![1, 0], vec![0, 1], 0.0, 1.0)]).is_err());
        assert!(ReactionNetwork::new(sp, vec![Reaction::new(vec![1], vec![0, 1], 1.0, 1.0)]).is_err());
        assert!(SpeciesSet::new(["a", "a"]).is_err());
    }
}
