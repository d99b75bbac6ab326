use bulksurf_core::diagnostics::{mp_equilibrium, MpParameters};
use bulksurf_core::grid::{boundary_trace, normal_flux, BulkField, Geometry};
use bulksurf_core::network::{Reaction, ReactionNetwork, SpeciesSet};
use bulksurf_core::surface::{SorptionModel, SurfaceState};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn reaction(n: usize) -> impl Strategy<Value = Reaction> {
    (prop::collection::vec(0u32..3, n), prop::collection::vec(0u32..3, n), 0.1f64..10.0, 0.1f64..10.0)
        .prop_filter("nontrivial", |(a, b, _, _)| a != b)
        .prop_map(|(a, b, kf, kb)| Reaction::new(a, b, kf, kb))
}

proptest! {
    #[test]
    fn conservation_basis_is_orthonormal_and_annihilates_reactions(
        rs in prop::collection::vec(reaction(4), 0..4)
    ) {
        let net = ReactionNetwork::new(SpeciesSet::numbered(4).unwrap(), rs).unwrap();
        let basis = net.conservation_basis();
        for (i, e) in basis.vectors.iter().enumerate() {
            for nu in net.nu_vectors() {
                prop_assert!(dot(e, &nu).abs() < 1e-10);
            }
            for (j, f) in basis.vectors.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(e, f) - expected).abs() < 1e-10);
            }
        }
        let rank = net.detailed_balance_check().rank;
        prop_assert_eq!(basis.dim() + rank, 4);
    }

    #[test]
    fn positive_conservation_vector_is_conserved(rs in prop::collection::vec(reaction(3), 1..3)) {
        let net = ReactionNetwork::new(SpeciesSet::numbered(3).unwrap(), rs).unwrap();
        if let Some(e) = net.positive_conservation_vector().vector() {
            prop_assert!(e.iter().all(|&v| v > 0.0));
            for nu in net.nu_vectors() {
                prop_assert!(dot(e, &nu).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isotherm_lies_in_the_simplex_and_stops_sorption(
        k in prop::collection::vec((0.01f64..100.0, 0.01f64..100.0, 0.0f64..100.0), 1..5)
    ) {
        let m = SorptionModel::new(k.iter().map(|t| t.0).collect(), k.iter().map(|t| t.1).collect()).unwrap();
        let c: Vec<f64> = k.iter().map(|t| t.2).collect();
        let th: SurfaceState = m.equilibrium(&c);
        prop_assert!(th.theta.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(th.simplex_defect() < 1e-14);
        for r in m.sorption_rate(&c, &th, 1.0) {
            prop_assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn mp_equilibrium_is_nonnegative_and_conserves(a in 0.0f64..1e3, b in 0.0f64..1e3, kappa in 1e-3f64..1e3) {
        let p = MpParameters { a, b, kappa };
        let c = mp_equilibrium(&p).unwrap();
        prop_assert!(c.iter().all(|&v| v >= 0.0));
        for r in p.residuals(&c) {
            prop_assert!(r < 1e-12);
        }
    }

    #[test]
    fn trace_is_exact_for_linear_profiles(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 3usize..40) {
        let g = Geometry::interval(n, 2.0).unwrap();
        let field = BulkField::from_fn(&g, 1, |_, _, y| a + b * y);
        let t = boundary_trace(&field, &g);
        let scale = 1.0 + a.abs() + b.abs();
        prop_assert!((t[0] - a).abs() < 1e-10 * scale);
        prop_assert!((t[1] - a - 2.0 * b).abs() < 1e-10 * scale);
    }

    #[test]
    fn flux_is_exact_for_quadratic_profiles(a in -5.0f64..5.0, b in -5.0f64..5.0, q in -5.0f64..5.0, n in 3usize..40) {
        let g = Geometry::interval(n, 2.0).unwrap();
        let field = BulkField::from_fn(&g, 1, |_, _, y| a + b * y + q * y * y);
        let flux = normal_flux(&field, &g, &[1.0]);
        let scale = (1.0 + a.abs() + b.abs() + q.abs()) * n as f64;
        // outward normals −y at the bottom, +y at the top
        prop_assert!((flux[0] - b).abs() < 1e-11 * scale);
        prop_assert!((flux[1] + b + 4.0 * q).abs() < 1e-11 * scale);
    }
}
