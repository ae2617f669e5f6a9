use std::collections::HashSet;

use lattice_sar::estimator::{two_step_fit, EstimatorConfig};
use lattice_sar::lasso::{solve_path, ConstraintSpec, L1Ball, LambdaGrid, PenaltySpec, SolverOptions};
use lattice_sar::lattice::{interior_sites, window_indices, Lattice, NeighborhoodTemplate};
use lattice_sar::metrics::{mae, recovery_frequency, support_stats};
use lattice_sar::mlbench::{concentrated_loglik, ml_fit_with_eigen, LogDetEigen, MlOptions, DENSE_LIMIT};
use lattice_sar::resample::{build_first_step, build_second_step, eligible_sites, predict_endogenous, ResamplePlan, SamplingMode, Stage};
use lattice_sar::simulate::{base_weights, build_weights, generate_design, simulate_dataset, simulate_sar, solve_spatial, weights_from_vector, WeightScheme};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn scheme_strategy() -> impl Strategy<Value = WeightScheme> {
    (0usize..3, 0.0f64..0.95).prop_map(|(i, c)| match i {
        0 => WeightScheme::Queen { c },
        1 => WeightScheme::Rook { c },
        _ => WeightScheme::EastSouthEast { c },
    })
}

fn template_m() -> impl Strategy<Value = usize> {
    prop_oneof![Just(8usize), Just(24), Just(48)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn windows_are_distinct_and_exclude_centre(m in template_m(), rows in 7usize..20, cols in 7usize..20, pick in any::<prop::sample::Index>()) {
        let l = Lattice::new(rows, cols).unwrap();
        let t = NeighborhoodTemplate::new(m).unwrap();
        if let Ok(sites) = interior_sites(&l, t.ring()) {
            let s = sites[pick.index(sites.len())];
            let w = window_indices(&l, s, &t).unwrap();
            prop_assert_eq!(w.len(), m);
            prop_assert!(!w.contains(&s));
            prop_assert_eq!(w.iter().collect::<HashSet<_>>().len(), m);
        }
    }

    #[test]
    fn template_order_is_deterministic(m in template_m()) {
        prop_assert_eq!(NeighborhoodTemplate::new(m).unwrap(), NeighborhoodTemplate::new(m).unwrap());
    }

    #[test]
    fn interiors_are_nested(rows in 5usize..30, cols in 5usize..30, ring in 0usize..4) {
        let l = Lattice::new(rows, cols).unwrap();
        if let Ok(inner) = interior_sites(&l, ring + 1) {
            let outer: HashSet<usize> = interior_sites(&l, ring).unwrap().into_iter().collect();
            prop_assert!(inner.iter().all(|s| outer.contains(s)));
        }
    }

    #[test]
    fn generated_weights_are_valid(scheme in scheme_strategy(), side in 3usize..15) {
        let l = Lattice::new(side, side).unwrap();
        let w = build_weights(&l, &scheme).unwrap();
        for i in 0..l.n() {
            prop_assert_eq!(w.get(i, i), 0.0);
            for (_, v) in w.row(i) {
                prop_assert!(v >= 0.0);
            }
        }
        prop_assert!(w.max_row_sum() <= scheme.c() + 1e-12);
        prop_assert!(scheme.c() < 1.0);
    }

    #[test]
    fn neumann_series_matches_direct_solve(scheme in scheme_strategy(), side in 3usize..=10, seed in any::<u64>()) {
        let l = Lattice::new(side, side).unwrap();
        let w = build_weights(&l, &scheme).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DVector::from_fn(l.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let direct = solve_spatial(&w, &b).unwrap();
        let mut term = b.clone();
        let mut series = b.clone();
        for _ in 0..2000 {
            term = w.mul_vec(&term);
            series += &term;
            if term.amax() < 1e-14 {
                break;
            }
        }
        prop_assert!((direct - series).amax() <= 1e-6);
    }

    #[test]
    fn simulation_is_deterministic(scheme in scheme_strategy(), seed in any::<u64>()) {
        let l = Lattice::new(8, 8).unwrap();
        let w = build_weights(&l, &scheme).unwrap();
        let x = generate_design(l.n(), 2, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = simulate_sar(&w, &x, &[1.0, -0.5], 0.7, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        let b = simulate_sar(&w, &x, &[1.0, -0.5], 0.7, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        prop_assert_eq!(a.y, b.y);
    }

    #[test]
    fn design_rows_follow_plan_order(m in prop_oneof![Just(8usize), Just(24)], seed in any::<u64>()) {
        let l = Lattice::new(15, 15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = simulate_dataset(&l, &WeightScheme::Queen { c: 0.5 }, &[1.0, 2.0], 1.0, &mut rng).unwrap();
        let t = NeighborhoodTemplate::new(m).unwrap();
        let plan = ResamplePlan::draw(&l, &t, Stage::FirstStep, 20, SamplingMode::WithoutReplacement, &mut rng).unwrap();
        let d = build_first_step(&ds, &plan).unwrap();
        let mut perm: Vec<usize> = (0..plan.r()).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % plan.r());
        let permuted = ResamplePlan::new(&l, perm.iter().map(|i| plan.sites[*i]).collect(), t.clone(), Stage::FirstStep).unwrap();
        let dp = build_first_step(&ds, &permuted).unwrap();
        for (row, src) in perm.iter().enumerate() {
            prop_assert_eq!(dp.y[row], d.y[*src]);
            prop_assert_eq!(dp.z.row(row), d.z.row(*src));
            prop_assert_eq!(d.y[*src], ds.y[plan.sites[*src]]);
        }

        let theta: Vec<f64> = (0..2 * (m + 1)).map(|i| i as f64 * 0.01).collect();
        let pred = predict_endogenous(&theta, 0.1, &ds, &t).unwrap();
        let plan2 = ResamplePlan::draw(&l, &t, Stage::SecondStep, 10, SamplingMode::WithReplacement, &mut rng).unwrap();
        let d2 = build_second_step(&ds, &pred, &plan2).unwrap();
        for (row, s) in plan2.sites.iter().enumerate() {
            prop_assert_eq!(d2.y[row], ds.y[*s]);
            prop_assert_eq!(d2.x[(row, 1)], ds.x[(*s, 1)]);
        }
    }

    #[test]
    fn second_step_sites_are_first_step_eligible(m in template_m(), side in 11usize..30) {
        let l = Lattice::new(side, side).unwrap();
        let t = NeighborhoodTemplate::new(m).unwrap();
        if let Ok(second) = eligible_sites(&l, &t, Stage::SecondStep) {
            let first: HashSet<usize> = eligible_sites(&l, &t, Stage::FirstStep).unwrap().into_iter().collect();
            prop_assert!(second.iter().all(|s| first.contains(s)));
        }
    }

    #[test]
    fn constraints_hold_and_infinite_weights_freeze(seed in any::<u64>(), bound in 0.05f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (40, 6);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * DVector::from_vec(vec![1.0, -1.0, 0.8, 0.5, 0.0, 0.3])
            + DVector::from_fn(n, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
        let mut psi = vec![1.0; p];
        psi[4] = f64::INFINITY;
        let penalty = PenaltySpec { psi, gamma: 1.0, lambda_grid: LambdaGrid::Auto { count: 20, min_ratio: 1e-4 } };
        let cons = ConstraintSpec::spatial_weights(p, 4, bound);
        for fit in solve_path(&x, &y, &penalty, &cons, &SolverOptions::default()).unwrap() {
            prop_assert_eq!(fit.coef[4], 0.0);
            prop_assert!(fit.coef[2..].iter().all(|w| *w >= 0.0));
            prop_assert!(fit.coef[2..].iter().sum::<f64>() <= bound);
            prop_assert!(fit.kkt_violation <= 1e-5);
        }
    }

    #[test]
    fn ball_on_signed_coefficients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (30, 4);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)) + x.column(0) * 3.0 - x.column(1) * 2.0;
        let cons = ConstraintSpec { nonneg: vec![false; p], l1_ball: Some(L1Ball { mask: vec![true; p], bound: 1.0 }) };
        let penalty = PenaltySpec::uniform(p, LambdaGrid::Auto { count: 10, min_ratio: 1e-3 });
        for fit in solve_path(&x, &y, &penalty, &cons, &SolverOptions::default()).unwrap() {
            prop_assert!(fit.coef.iter().map(|b| b.abs()).sum::<f64>() <= 1.0, "{:?} {}", fit.coef, fit.ball_multiplier);
        }
    }

    #[test]
    fn metric_symmetry_and_triangle(a in prop::collection::vec(-2.0f64..2.0, 24), b in prop::collection::vec(-2.0f64..2.0, 24), c in prop::collection::vec(-2.0f64..2.0, 24)) {
        let ab = mae(&a, &b).unwrap();
        prop_assert_eq!(ab, mae(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!(mae(&a, &c).unwrap() <= ab + mae(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn support_rates_are_scale_invariant(est in prop::collection::vec(prop_oneof![Just(0.0f64), 0.01f64..1.0], 24), truth in prop::collection::vec(prop_oneof![Just(0.0f64), 0.01f64..1.0], 24), k in 0.1f64..10.0) {
        let e = support_stats(&est, &truth, 0.0).unwrap();
        let scaled = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let s = support_stats(&scaled(&est), &scaled(&truth), 0.0).unwrap();
        for v in [e.specificity, e.sensitivity].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(e.specificity, s.specificity);
        prop_assert_eq!(e.sensitivity, s.sensitivity);
    }

    #[test]
    fn frequency_counts_sum_indicators(fits in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0f64), 0.01f64..1.0], 8), 1..12)) {
        let t = NeighborhoodTemplate::new(8).unwrap();
        let f = recovery_frequency(&fits, &t, 1e-10).unwrap();
        for j in 0..8 {
            prop_assert_eq!(f.counts[j], fits.iter().filter(|w| w[j] > 1e-10).count());
        }
        prop_assert_eq!(f.total, fits.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn estimator_is_deterministic_and_subcritical(seed in any::<u64>(), c in 0.3f64..0.9) {
        let l = Lattice::new(25, 25).unwrap();
        let ds = simulate_dataset(&l, &WeightScheme::EastSouthEast { c }, &[1.0], 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let cfg = EstimatorConfig { seed, r1: 215, ..EstimatorConfig::default() };
        let a = two_step_fit(&ds, &cfg).unwrap();
        let b = two_step_fit(&ds, &cfg).unwrap();
        prop_assert!(a.c_hat < 1.0);
        prop_assert!(a.w_hat.iter().all(|w| *w >= 0.0));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ml_likelihood_shape_and_variance_identity(seed in any::<u64>(), c in 0.0f64..0.95, rook in any::<bool>()) {
        let l = Lattice::new(25, 25).unwrap();
        let scheme = if rook { WeightScheme::Rook { c } } else { WeightScheme::Queen { c } };
        let ds = simulate_dataset(&l, &scheme, &[1.0], 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let base = base_weights(&l, &scheme).unwrap();
        let eig = LogDetEigen::new(&base, DENSE_LIMIT).unwrap();
        let (lo, hi) = eig.interval;
        let grid: Vec<f64> = (1..=100).map(|i| lo + (hi - lo) * i as f64 / 101.0).collect();
        let ll: Vec<f64> = grid.iter().map(|c| concentrated_loglik(&ds, &base, &eig, true, *c).unwrap()).collect();
        // Strictly concave under moderate dependence; single-peaked throughout.
        if c <= 0.5 {
            for w in ll.windows(3) {
                prop_assert!(w[0] - 2.0 * w[1] + w[2] < 0.0);
            }
        }
        let peak = (0..ll.len()).max_by(|a, b| ll[*a].total_cmp(&ll[*b])).unwrap();
        prop_assert!((0..peak).all(|i| ll[i] < ll[i + 1]));
        prop_assert!((peak..ll.len() - 1).all(|i| ll[i] > ll[i + 1]));

        let fit = ml_fit_with_eigen(&ds, &base, &eig, &MlOptions::default()).unwrap();
        let wy = base.mul_vec(&ds.y);
        let xb = &ds.x * DVector::from_column_slice(&fit.beta_hat);
        let resid: f64 = (0..l.n())
            .map(|i| (ds.y[i] - fit.c_hat * wy[i] - xb[i] - fit.intercept).powi(2))
            .sum::<f64>() / l.n() as f64;
        prop_assert!((resid - fit.sigma2_hat).abs() <= 1e-9 * resid.max(1.0));
    }
}

#[test]
fn design_rows_are_site_invariant_in_distribution() {
    // Mean of a neighbour prediction column over two disjoint halves of the
    // interior agrees within five standard errors, pooled over many datasets.
    let l = Lattice::new(25, 25).unwrap();
    let t = NeighborhoodTemplate::new(8).unwrap();
    let sites = eligible_sites(&l, &t, Stage::FirstStep).unwrap();
    let (left, right): (Vec<usize>, Vec<usize>) = sites.iter().partition(|s| l.coords(**s).1 < 12);
    let mut diffs = Vec::new();
    for seed in 0..200 {
        let ds = simulate_dataset(&l, &WeightScheme::EastSouthEast { c: 0.8 }, &[1.0], 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mean = |v: &[usize]| v.iter().map(|s| ds.y[*s]).sum::<f64>() / v.len() as f64;
        diffs.push(mean(&left) - mean(&right));
    }
    let n = diffs.len() as f64;
    let m = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(m.abs() <= 5.0 * sd / n.sqrt(), "mean difference {m}, se {}", sd / n.sqrt());
}

#[test]
fn reconstructed_vector_weights_equal_scheme_weights_inside() {
    let l = Lattice::new(10, 10).unwrap();
    let t = NeighborhoodTemplate::new(24).unwrap();
    let scheme = WeightScheme::Rook { c: 0.4 };
    let w = weights_from_vector(&l, &t, &scheme.template_vector(&t).unwrap()).unwrap();
    let truth = build_weights(&l, &scheme).unwrap();
    for s in interior_sites(&l, 1).unwrap() {
        for j in 0..l.n() {
            assert_eq!(w.get(s, j), truth.get(s, j));
        }
    }
}
