//! Ready-made problems: the three-component model problem and a
//! single-species sorption problem.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{BulkField, Geometry, SurfaceField};
use crate::math::cos;
use crate::network::{Reaction, ReactionNetwork, SpeciesSet};
use crate::scales::ProcessTimes;
use crate::solver::{FullProblem, SystemState};
use crate::surface::{SorptionModel, SurfaceReactionNetwork};

/// Surface network `A1 + A2 ⇌ A3` with rate constants `κ^f`, `κ^b`.
pub fn mp_surface_network(kappa_f: f64, kappa_b: f64) -> SurfaceReactionNetwork {
    let species = SpeciesSet::new(["A1", "A2", "A3"]).expect("distinct names");
    let rx = Reaction::new(vec![1, 1, 0], vec![0, 0, 1], kappa_f, kappa_b);
    SurfaceReactionNetwork::new(ReactionNetwork::new(species, vec![rx]).expect("valid reaction"))
}

/// The model problem: three species without bulk reactions, unit
/// diffusivities, `κ^f = κ^b = 1` and `κ^ad = κ^de = 1`, so that the
/// boundary relation reads `c_1 c_2 = c_3`.
pub fn mp_problem(geometry: Geometry, times: ProcessTimes) -> FullProblem {
    mp_problem_with(geometry, times, 1.0, 1.0, [1.0; 3], [1.0; 3], [1.0; 3])
}

pub fn mp_problem_with(
    geometry: Geometry,
    times: ProcessTimes,
    kappa_f: f64,
    kappa_b: f64,
    k_ad: [f64; 3],
    k_de: [f64; 3],
    d: [f64; 3],
) -> FullProblem {
    let bulk = ReactionNetwork::empty(SpeciesSet::new(["A1", "A2", "A3"]).expect("distinct names"));
    let sorption = SorptionModel::new(k_ad.to_vec(), k_de.to_vec()).expect("valid sorption constants");
    FullProblem::new(geometry, bulk, mp_surface_network(kappa_f, kappa_b), sorption, d.to_vec(), 1.0, times)
        .expect("consistent model problem")
}

/// Model-problem data with averages `a = ⟨c_1 + c_3⟩ = 2`, `b = ⟨c_2 + c_3⟩
/// = 2` around the equilibrium `(1, 1, 1)`, perturbed by cosine modes of
/// relative size `amplitude` (< 1 keeps the data positive). The surface
/// starts on the sorption isotherm of the extrapolated traces.
pub fn mp_initial_state(p: &FullProblem, amplitude: f64) -> SystemState {
    let geom = p.geometry;
    let (lx, ly) = match geom {
        Geometry::Interval { length, .. } => (1.0, length),
        Geometry::Strip { lx, ly, .. } => (lx, ly),
    };
    let pi = core::f64::consts::PI;
    let bulk = BulkField::from_fn(&geom, 3, |s, x, y| {
        let wy = cos(pi * y / ly);
        let wx = if geom.hx().is_some() { cos(2.0 * pi * x / lx) } else { 1.0 };
        match s {
            0 => 1.0 + amplitude * wy,
            1 => 1.0 + amplitude * cos(2.0 * pi * y / ly) * wx,
            _ => 1.0 - 0.5 * amplitude * wy,
        }
    });
    with_isotherm_surface(p, bulk)
}

/// State with the given bulk field and the surface on the sorption
/// isotherm of its extrapolated traces.
pub fn with_isotherm_surface(p: &FullProblem, bulk: BulkField) -> SystemState {
    let n = p.n_species();
    let tr = p.extrapolated_traces(&bulk);
    let nodes = (0..p.geometry.n_nodes())
        .map(|k| {
            let t: Vec<f64> = tr[k * n..(k + 1) * n].iter().map(|v| v.max(0.0)).collect();
            p.sorption.equilibrium(&t)
        })
        .collect();
    SystemState { bulk, surface: SurfaceField { nodes }, time: 0.0 }
}

/// One species, no reactions, sorption constants `k_ad`, `k_de`.
pub fn sorption_problem(geometry: Geometry, times: ProcessTimes, k_ad: f64, k_de: f64) -> FullProblem {
    let species = SpeciesSet::new(["A"]).expect("one name");
    let bulk = ReactionNetwork::empty(species.clone());
    let surface = SurfaceReactionNetwork::new(ReactionNetwork::empty(species));
    let sorption = SorptionModel::new(vec![k_ad], vec![k_de]).expect("valid sorption constants");
    FullProblem::new(geometry, bulk, surface, sorption, vec![1.0], 1.0, times).expect("consistent problem")
}

/// Bulk profile `c_0 (1 + amplitude cos(π y / L))` with an empty surface.
pub fn sorption_initial_state(p: &FullProblem, c0: f64, amplitude: f64) -> SystemState {
    let geom = p.geometry;
    let ly = match geom {
        Geometry::Interval { length, .. } => length,
        Geometry::Strip { ly, .. } => ly,
    };
    let pi = core::f64::consts::PI;
    let bulk = BulkField::from_fn(&geom, 1, |_, _, y| c0 * (1.0 + amplitude * cos(pi * y / ly)));
    SystemState { bulk, surface: SurfaceField::empty(1, geom.n_nodes()), time: 0.0 }
}
