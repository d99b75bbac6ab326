//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line with the measured quantities.

use std::time::Instant;

use bulksurf_core::diagnostics::{
    entropy_identity_residual, limit_convergence_study, mp_equilibrium, mp_equilibrium_newton, sample,
    strictly_decreasing, thermodynamic_defect, MpParameters, TrajectoryRecord,
};
use bulksurf_core::grid::{boundary_trace, laplacian_apply, normal_flux, surface_laplacian_apply, BulkField, Geometry};
use bulksurf_core::network::{PositiveConservation, Reaction, ReactionNetwork, SpeciesSet};
use bulksurf_core::presets::{
    mp_initial_state, mp_problem, sorption_initial_state, sorption_problem, with_isotherm_surface,
};
use bulksurf_core::scales::ProcessTimes;
use bulksurf_core::solver::{
    integrate, surface_attractor, FullProblem, ModelVariant, PhiStepper, Stepper, StepperConfig, SystemState,
};
use bulksurf_core::surface::{SorptionModel, SurfaceState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- pinned tolerances -------------------------------------------------

const EQ_RESIDUAL_TOL: f64 = 1e-12;
const EQ_NEWTON_TOL: f64 = 1e-9;
const EQ_RUNTIME_S: f64 = 1.0;
const DRIFT_TOL: f64 = 1e-8;
const CONSERVATION_RUNTIME_S: f64 = 30.0;
const POSITIVITY_TOL: f64 = -1e-12;
const ENERGY_TOL: f64 = 1e-6;
const ENERGY_SHRINK: f64 = 4.0;
const THREE_PARAM_RATIO: f64 = 0.1;
const LIMIT_RUNTIME_S: f64 = 300.0;
const PHI_AGREEMENT: f64 = 1e-8;
const PHI_MAX_ITER: usize = 50;
const MIN_ORDER: f64 = 1.9;
const ISOTHERM_RATE_TOL: f64 = 1e-14;
const ISOTHERM_SOLVER_TOL: f64 = 1e-8;
const ATTRACTOR_TOL: f64 = 1e-10;
const ATTRACTOR_UNIQUE_TOL: f64 = 1e-8;
const ALGEBRA_TOL: f64 = 1e-12;

fn report(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn interval(n: usize) -> Geometry {
    Geometry::interval(n, 1.0).unwrap()
}

/// Runs `variant` from `init` and records a summary of every step.
fn run(
    p: &FullProblem,
    variant: ModelVariant,
    init: &SystemState,
    cfg: &StepperConfig,
    t_end: f64,
    vectors: &[Vec<f64>],
) -> TrajectoryRecord {
    let mut st = Stepper::new(p, variant, cfg).unwrap();
    let (start, _) = st.prepare(init).unwrap();
    let mut rec = TrajectoryRecord::new();
    integrate(&mut st, &start, t_end, |s, stats| {
        rec.push(sample(s, p, variant, vectors, stats.newton_residual, None).unwrap()).unwrap();
    })
    .unwrap_or_else(|e| panic!("{variant} run failed: {e}"));
    rec
}

/// Same with the subproblem iteration.
fn run_phi(
    p: &FullProblem,
    init: &SystemState,
    cfg: &StepperConfig,
    t_end: f64,
    vectors: &[Vec<f64>],
) -> TrajectoryRecord {
    let mut st = PhiStepper::new(p, cfg).unwrap();
    let v = ModelVariant::ThreeParamMP;
    let mut rec = TrajectoryRecord::new();
    rec.push(sample(init, p, v, vectors, 0.0, None).unwrap()).unwrap();
    let mut s = init.clone();
    let steps = (t_end / cfg.dt).round() as usize;
    for _ in 0..steps {
        s = st.step(&s).unwrap();
        rec.push(sample(&s, p, v, vectors, st.last.defect, Some(st.last.iterations)).unwrap()).unwrap();
    }
    rec
}

fn mp_vectors() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]
}

// ---- 1 ----------------------------------------------------------------

#[test]
fn criterion_01_mp_equilibrium_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_res: f64 = 0.0;
    let mut worst_newton: f64 = 0.0;
    let mut params: Vec<MpParameters> = (0..100)
        .map(|_| MpParameters {
            a: 10.0 * (1.0 - rng.gen::<f64>()),
            b: 10.0 * (1.0 - rng.gen::<f64>()),
            kappa: 10.0 * (1.0 - rng.gen::<f64>()),
        })
        .collect();
    params.push(MpParameters { a: 0.0, b: 3.0, kappa: 2.0 });
    params.push(MpParameters { a: 4.0, b: 0.0, kappa: 0.5 });
    for p in &params {
        let c = mp_equilibrium(p).unwrap();
        for r in p.residuals(&c) {
            worst_res = worst_res.max(r);
        }
        for _ in 0..10 {
            let s = [10.0 * rng.gen::<f64>(), 10.0 * rng.gen::<f64>(), 10.0 * rng.gen::<f64>()];
            let n = mp_equilibrium_newton(p, s).expect("Newton cross-check converges");
            for i in 0..3 {
                worst_newton = worst_newton.max((n[i] - c[i]).abs());
            }
        }
    }
    let boundary = mp_equilibrium(&params[100]).unwrap() == [0.0, 3.0, 0.0]
        && mp_equilibrium(&params[101]).unwrap() == [4.0, 0.0, 0.0];
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst_res <= EQ_RESIDUAL_TOL && worst_newton <= EQ_NEWTON_TOL && boundary && secs <= EQ_RUNTIME_S,
        format!("max relative residual {worst_res:.2e}, max Newton deviation {worst_newton:.2e}, boundary rows {boundary}, {secs:.3} s"),
    );
}

// ---- 2 ----------------------------------------------------------------

#[test]
fn criterion_02_conservation() {
    let start = Instant::now();
    let p = mp_problem(interval(100), ProcessTimes::unit());
    let init = mp_initial_state(&p, 0.5);
    let cfg = StepperConfig::with_dt(1e-3);
    let three = run(&p, ModelVariant::ThreeParamMP, &init, &cfg, 1.0, &mp_vectors());
    let full = run(&p, ModelVariant::Full, &init, &cfg, 1.0, &mp_vectors());
    let (d3, df) = (three.max_total_drift(), full.max_total_drift());
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        d3 <= DRIFT_TOL && df <= DRIFT_TOL && secs <= CONSERVATION_RUNTIME_S,
        format!("relative drift three-parameter {d3:.2e}, full (with surface) {df:.2e}, {secs:.1} s"),
    );
}

// ---- 3 and 4 -----------------------------------------------------------

struct SuiteRun {
    name: &'static str,
    problem: FullProblem,
    variant: ModelVariant,
    init: SystemState,
    phi: bool,
    /// Whether the free energy is a Lyapunov function of this model.
    dissipative: bool,
}

fn with_bulk_reaction(p: &FullProblem) -> FullProblem {
    let mut q = p.clone();
    q.bulk = ReactionNetwork::new(
        SpeciesSet::new(["A1", "A2", "A3"]).unwrap(),
        vec![Reaction::new(vec![1, 1, 0], vec![0, 0, 1], 1.0, 1.0)],
    )
    .unwrap();
    q
}

fn suite() -> Vec<SuiteRun> {
    let g = interval(50);
    let strip = Geometry::strip(8, 8, 1.0, 1.0).unwrap();
    let mp = mp_problem(g, ProcessTimes::unit());
    let mp_init = mp_initial_state(&mp, 0.5);
    let mp_strip = mp_problem(strip, ProcessTimes::unit());
    let strip_init = mp_initial_state(&mp_strip, 0.5);
    let sorp = sorption_problem(g, ProcessTimes::unit(), 2.0, 1.0);
    let mut sorp_init = sorption_initial_state(&sorp, 1.0, 0.5);
    for node in &mut sorp_init.surface.nodes {
        node.theta = vec![0.9, 0.1];
    }
    let desorb = sorption_problem(g, ProcessTimes::unit(), 0.0, 1.0);
    let mut desorb_init = sorption_initial_state(&desorb, 1.0, 0.5);
    for node in &mut desorb_init.surface.nodes {
        node.theta = vec![0.3, 0.7];
    }
    let react = with_bulk_reaction(&mp);
    let mk = |name, problem: &FullProblem, variant, init: &SystemState, dissipative| SuiteRun {
        name,
        problem: problem.clone(),
        variant,
        init: init.clone(),
        phi: false,
        dissipative,
    };
    let mut out = vec![
        mk("MP full", &mp, ModelVariant::Full, &mp_init, true),
        mk("MP fast sorption", &mp, ModelVariant::FastSorption, &mp_init, true),
        mk("MP fast surface chemistry", &mp, ModelVariant::FastSurfaceChemistry, &mp_init, true),
        mk("MP two-parameter", &mp, ModelVariant::TwoParamSorpChem, &mp_init, true),
        mk("MP three-parameter", &mp, ModelVariant::ThreeParamMP, &mp_init, true),
        mk("MP fast surface diffusion", &mp, ModelVariant::FastSurfaceDiffusion, &mp_init, false),
        mk("MP fast accumulation", &mp, ModelVariant::FastAccumulation, &mp_init, false),
        mk("MP full on strip", &mp_strip, ModelVariant::Full, &strip_init, true),
        mk("MP two-parameter on strip", &mp_strip, ModelVariant::TwoParamSorpChem, &strip_init, true),
        mk("MP full with bulk reaction", &react, ModelVariant::Full, &mp_init, true),
        mk("sorption full", &sorp, ModelVariant::Full, &sorp_init, true),
        mk("sorption fast sorption", &sorp, ModelVariant::FastSorption, &sorp_init, true),
        mk("pure desorption full", &desorb, ModelVariant::Full, &desorb_init, false),
    ];
    out.push(SuiteRun { phi: true, ..mk("MP subproblem iteration", &mp, ModelVariant::ThreeParamMP, &mp_init, true) });
    out
}

fn suite_record(r: &SuiteRun, dt: f64) -> TrajectoryRecord {
    let cfg = StepperConfig::with_dt(dt);
    let vectors = r.problem.conservation_basis().vectors;
    if r.phi {
        run_phi(&r.problem, &r.init, &cfg, 0.2, &vectors)
    } else {
        run(&r.problem, r.variant, &r.init, &cfg, 0.2, &vectors)
    }
}

#[test]
fn criterion_03_positivity() {
    let runs = suite();
    let mut worst = f64::INFINITY;
    let mut names = Vec::new();
    for r in &runs {
        assert!(r.init.minimum(false).0 > 0.0, "{}: initial bulk not positive", r.name);
        let rec = suite_record(r, 2e-3);
        let m = rec.min_value();
        if m < POSITIVITY_TOL {
            names.push(r.name);
        }
        worst = worst.min(m);
    }
    report(
        3,
        names.is_empty() && runs.len() >= 10,
        format!("{} runs, global minimum {worst:.3e}, violations {names:?}", runs.len()),
    );
}

#[test]
fn criterion_04_free_energy_decay() {
    let mut lines = Vec::new();
    let mut pass = true;
    for r in suite().iter().filter(|r| r.dissipative) {
        assert!(thermodynamic_defect(&r.problem) < 1e-12, "{} is not detailed balanced", r.name);
        let v = suite_record(r, 2e-3).max_energy_increase();
        if v > ENERGY_TOL {
            let half = suite_record(r, 1e-3).max_energy_increase();
            let ok = half * ENERGY_SHRINK <= v;
            pass &= ok;
            lines.push(format!("{}: increase {v:.2e}, at dt/2 {half:.2e}", r.name));
        }
    }
    report(4, pass, format!("runs with increases above tolerance: {lines:?}"));
}

// ---- 5 ----------------------------------------------------------------

#[test]
fn criterion_05_entropy_identity() {
    let mut residuals = Vec::new();
    for level in 0..3 {
        let n = 25 << level;
        let dt = 4e-3 / (1 << level) as f64;
        let p = mp_problem(interval(n), ProcessTimes::unit());
        let init = mp_initial_state(&p, 0.5);
        let rec = run(&p, ModelVariant::ThreeParamMP, &init, &StepperConfig::with_dt(dt), 0.5, &mp_vectors());
        residuals.push(entropy_identity_residual(&rec));
    }
    let pass = residuals.windows(2).all(|w| w[1] < w[0]);
    report(5, pass, format!("residuals {residuals:?}"));
}

// ---- 6 ----------------------------------------------------------------

#[test]
fn criterion_06_limit_convergence() {
    let start = Instant::now();
    let eps = [1e-1, 1e-2, 1e-3];
    let cfg = StepperConfig::with_dt(1e-3);
    let sp = sorption_problem(interval(50), ProcessTimes::unit(), 2.0, 1.0);
    // well-prepared data: an empty surface would leave an O(1) initial
    // layer that the limit model cannot see
    let si = sorption_initial_state(&sp, 1.0, 0.5);
    let si = with_isotherm_surface(&sp, si.bulk);
    let fs = limit_convergence_study(&sp, &si, ModelVariant::FastSorption, &eps, 0.5, &cfg).unwrap();
    let mp = mp_problem(interval(50), ProcessTimes::unit());
    let mi = mp_initial_state(&mp, 0.5);
    let tp = limit_convergence_study(&mp, &mi, ModelVariant::ThreeParamMP, &eps, 0.5, &cfg).unwrap();
    let e = |rows: &[bulksurf_core::diagnostics::ConvergenceRow]| -> Vec<Option<f64>> {
        rows.iter().map(|r| r.error).collect()
    };
    let ratio = match (tp[0].error, tp[2].error) {
        (Some(a), Some(b)) => b / a,
        _ => f64::INFINITY,
    };
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        strictly_decreasing(&fs) && strictly_decreasing(&tp) && ratio < THREE_PARAM_RATIO && secs <= LIMIT_RUNTIME_S,
        format!(
            "fast sorption errors {:?}, three-parameter errors {:?} (ratio {ratio:.3e}), {secs:.1} s",
            e(&fs),
            e(&tp)
        ),
    );
}

// ---- 7 ----------------------------------------------------------------

#[test]
fn criterion_07_phi_iteration() {
    let p = mp_problem(interval(100), ProcessTimes::unit());
    let init = mp_initial_state(&p, 0.5);
    let cfg = StepperConfig::with_dt(1e-3);
    let mut newton = Stepper::new(&p, ModelVariant::ThreeParamMP, &cfg).unwrap();
    let (init, _) = newton.prepare(&init).unwrap();
    let mut phi = PhiStepper::new(&p, &cfg).unwrap();
    let (mut a, mut b) = (init.clone(), init);
    let (mut diff, mut max_iter, mut max_ratio) = (0.0f64, 0usize, 0.0f64);
    for _ in 0..1000 {
        a = newton.step(&a).unwrap();
        b = phi.step(&b).unwrap();
        diff = diff.max(bulksurf_core::math::max_diff(&a.bulk.data, &b.bulk.data));
        max_iter = max_iter.max(phi.last.iterations);
        max_ratio = max_ratio.max(phi.last.ratio);
    }
    report(
        7,
        diff <= PHI_AGREEMENT && max_iter <= PHI_MAX_ITER && max_ratio < 1.0,
        format!("max difference {diff:.2e}, max iterations {max_iter}, max contraction ratio {max_ratio:.3e}"),
    );
}

// ---- 8 ----------------------------------------------------------------

fn order(errors: &[f64]) -> f64 {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_08_discretization_orders() {
    use std::f64::consts::PI;
    let f = |y: f64| (2.0 * PI * y).sin() + 0.5 * (PI * y).cos();
    let fy = |y: f64| 2.0 * PI * (2.0 * PI * y).cos() - 0.5 * PI * (PI * y).sin();
    let fyy = |y: f64| -4.0 * PI * PI * (2.0 * PI * y).sin() - 0.5 * PI * PI * (PI * y).cos();
    let (mut lap, mut trace, mut flux, mut surf) = (vec![], vec![], vec![], vec![]);
    for n in [32usize, 64, 128, 256] {
        let g = interval(n);
        let h = g.h();
        let field = BulkField::from_fn(&g, 1, |_, _, y| f(y));
        // ghosts from the manufactured function beyond each face
        let ghosts = [f(-0.5 * h), f(1.0 + 0.5 * h)];
        let l = laplacian_apply(&field, &g, &[1.0], &ghosts).unwrap();
        lap.push((0..n).map(|c| (l.get(c, 0) - fyy(g.cell_center(c).1)).abs()).fold(0.0, f64::max));
        let t = boundary_trace(&field, &g);
        trace.push((t[0] - f(0.0)).abs().max((t[1] - f(1.0)).abs()));
        let q = normal_flux(&field, &g, &[1.0]);
        // −∂_n f: outward normal −y at the bottom, +y at the top
        flux.push((q[0] - fy(0.0)).abs().max((q[1] + fy(1.0)).abs()));
        let sg = Geometry::strip(n, 3, 1.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..sg.n_nodes()).map(|k| (2.0 * PI * sg.node_position(k).0).sin()).collect();
        let ls = surface_laplacian_apply(&vals, &sg);
        surf.push(ls.iter().zip(&vals).map(|(a, v)| (a + 4.0 * PI * PI * v).abs()).fold(0.0, f64::max));
    }
    let orders = [order(&lap), order(&surf), order(&trace), order(&flux)];
    report(
        8,
        orders.iter().all(|&o| o >= MIN_ORDER),
        format!(
            "observed orders laplacian {:.3}, surface laplacian {:.3}, trace {:.3}, normal flux {:.3}",
            orders[0], orders[1], orders[2], orders[3]
        ),
    );
}

// ---- 9 ----------------------------------------------------------------

#[test]
fn criterion_09_isotherm_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rate_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..5);
        let k_ad: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..10.0)).collect();
        let k_de: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..10.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let m = SorptionModel::new(k_ad, k_de).unwrap();
        let th = m.equilibrium(&c);
        for s in m.sorption_rate(&c, &th, 1.0) {
            rate_err = rate_err.max(s.abs());
        }
    }
    // fast-sorption boundary states against the isotherm of the solver traces
    let p = mp_problem(interval(50), ProcessTimes::unit());
    let mut st = Stepper::new(&p, ModelVariant::FastSorption, &StepperConfig::with_dt(1e-3)).unwrap();
    let (mut s, _) = st.prepare(&mp_initial_state(&p, 0.5)).unwrap();
    let mut solver_err: f64 = 0.0;
    for _ in 0..100 {
        s = st.step(&s).unwrap();
        let tr = st.solver_traces(&s.bulk).unwrap();
        for k in 0..2 {
            let iso = p.sorption.equilibrium(&tr[3 * k..3 * k + 3]);
            solver_err = solver_err.max(bulksurf_core::math::max_diff(&iso.theta, &s.surface.nodes[k].theta));
        }
    }
    // attractor without surface reactions, two starts
    let sp = sorption_problem(interval(10), ProcessTimes::unit(), 2.0, 0.5);
    let cfg = StepperConfig::default();
    let mut att_err: f64 = 0.0;
    let mut start_diff: f64 = 0.0;
    for c in [0.0, 0.3, 1.0, 7.0] {
        let rep = surface_attractor(&sp, &[c, 0.5 * c], &cfg, None, true).unwrap();
        start_diff = start_diff.max(rep.start_difference);
        for (k, cc) in [c, 0.5 * c].iter().enumerate() {
            let iso: SurfaceState = sp.sorption.equilibrium(&[*cc]);
            att_err = att_err.max(bulksurf_core::math::max_diff(&iso.theta, &rep.field.nodes[k].theta));
        }
    }
    report(
        9,
        rate_err <= ISOTHERM_RATE_TOL && solver_err <= ISOTHERM_SOLVER_TOL && att_err <= ATTRACTOR_TOL && start_diff <= ATTRACTOR_UNIQUE_TOL,
        format!("isotherm rate {rate_err:.2e}, fast-sorption boundary {solver_err:.2e}, attractor {att_err:.2e}, two-start difference {start_diff:.2e}"),
    );
}

// ---- 10 ---------------------------------------------------------------

#[test]
fn criterion_10_algebraic_layer() {
    let sp3 = || SpeciesSet::numbered(3).unwrap();
    let mp = ReactionNetwork::new(sp3(), vec![Reaction::new(vec![1, 1, 0], vec![0, 0, 1], 1.0, 1.0)]).unwrap();
    let two = ReactionNetwork::new(
        sp3(),
        vec![
            Reaction::new(vec![1, 1, 0], vec![0, 0, 1], 1.0, 1.0),
            Reaction::new(vec![0, 1, 0], vec![1, 0, 0], 1.0, 1.0),
        ],
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for net in [&mp, &two, &ReactionNetwork::empty(sp3())] {
        let b = net.conservation_basis();
        let n = b.n_species();
        for (i, e) in b.vectors.iter().enumerate() {
            for (j, f) in b.vectors.iter().enumerate() {
                let d: f64 = e.iter().zip(f).map(|(x, y)| x * y).sum();
                worst = worst.max((d - if i == j { 1.0 } else { 0.0 }).abs());
            }
            for nu in net.nu_vectors() {
                worst = worst.max(e.iter().zip(&nu).map(|(x, y)| x * y).sum::<f64>().abs());
            }
        }
        let p = &b.projector;
        for i in 0..n {
            for j in 0..n {
                let pp: f64 = (0..n).map(|k| p[i * n + k] * p[k * n + j]).sum();
                worst = worst.max((pp - p[i * n + j]).abs()).max((p[i * n + j] - p[j * n + i]).abs());
            }
        }
    }
    let rank_ok = mp.detailed_balance_check().independent
        && two.detailed_balance_check().independent
        && !ReactionNetwork::new(
            sp3(),
            vec![
                Reaction::new(vec![1, 1, 0], vec![0, 0, 1], 1.0, 1.0),
                Reaction::new(vec![0, 0, 1], vec![1, 1, 0], 1.0, 1.0),
            ],
        )
        .unwrap()
        .detailed_balance_check()
        .independent;
    let positive =
        matches!(mp.positive_conservation_vector(), PositiveConservation::Found(ref e) if e == &vec![1.0, 1.0, 2.0]);
    let none = matches!(
        ReactionNetwork::new(sp3(), vec![Reaction::new(vec![0, 0, 0], vec![1, 0, 0], 1.0, 1.0)])
            .unwrap()
            .positive_conservation_vector(),
        PositiveConservation::None { .. }
    );
    report(
        10,
        worst <= ALGEBRA_TOL && rank_ok && positive && none,
        format!("orthogonality/idempotence defect {worst:.2e}, rank cases {rank_ok}, (1,1,2) certificate {positive}, nonexistence {none}"),
    );
}
