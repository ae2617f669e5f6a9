use lattice_sar::estimator::{fit_model, fitted_values, reconstruct_weights, two_step_fit, EstimatorConfig, WeightModel};
use lattice_sar::lasso::{prior_estimate, solve_path, ConstraintSpec, LambdaGrid, PenaltySpec, SolverOptions, UNIT_BALL_BOUND};
use lattice_sar::lattice::{Lattice, NeighborhoodTemplate};
use lattice_sar::resample::{build_second_step, eligible_sites, EndogenousPrediction, ResamplePlan, Stage};
use lattice_sar::simulate::{build_weights, simulate_dataset, SarDataset, WeightScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(scheme: &WeightScheme, sigma: f64, seed: u64) -> SarDataset {
    let l = Lattice::new(25, 25).unwrap();
    simulate_dataset(&l, scheme, &[1.0], sigma, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Second-step lasso with the true response standing in for the instrument predictions.
fn oracle_supports(ds: &SarDataset, m: usize) -> Vec<Vec<bool>> {
    let template = NeighborhoodTemplate::new(m).unwrap();
    let sites = eligible_sites(&ds.lattice, &template, Stage::SecondStep).unwrap();
    let plan = ResamplePlan::new(&ds.lattice, sites, template, Stage::SecondStep).unwrap();
    let pred = EndogenousPrediction { values: ds.y.iter().map(|v| Some(*v)).collect() };
    let design = build_second_step(ds, &pred, &plan).unwrap();
    let a = design.combined();
    let prior = prior_estimate(&a, &design.y).unwrap();
    let penalty = PenaltySpec::adaptive(&prior, 1.0, LambdaGrid::default()).unwrap();
    let cons = ConstraintSpec::spatial_weights(1 + m, m, UNIT_BALL_BOUND);
    solve_path(&a, &design.y, &penalty, &cons, &SolverOptions::default())
        .unwrap()
        .into_iter()
        .map(|f| f.coef[1..].iter().map(|w| *w > 0.0).collect())
        .collect()
}

#[test]
fn oracle_instruments_recover_exact_support() {
    for scheme in [WeightScheme::Queen { c: 0.7 }, WeightScheme::EastSouthEast { c: 0.7 }, WeightScheme::Rook { c: 0.5 }] {
        let ds = data(&scheme, 0.01, 5);
        let truth: Vec<bool> = scheme.template_vector(&NeighborhoodTemplate::new(24).unwrap()).unwrap().iter().map(|w| *w > 0.0).collect();
        let paths = oracle_supports(&ds, 24);
        assert!(paths.iter().any(|s| *s == truth), "{scheme:?}");
    }
}

#[test]
fn null_model_selects_little() {
    let mut total = 0.0;
    let runs = 10;
    for seed in 0..runs {
        let ds = data(&WeightScheme::Queen { c: 0.0 }, 1.0, 100 + seed);
        let fit = two_step_fit(&ds, &EstimatorConfig { seed, ..EstimatorConfig::default() }).unwrap();
        total += fit.w_hat.iter().sum::<f64>();
    }
    let mean = total / runs as f64;
    assert!(mean <= 0.1, "mean l1 norm {mean}");
}

#[test]
fn fixed_queen_strength_is_recovered() {
    let runs = 10;
    let mut total = 0.0;
    for seed in 0..runs {
        let ds = data(&WeightScheme::Queen { c: 0.5 }, 1.0, 200 + seed);
        let model = WeightModel::Fixed(WeightScheme::Queen { c: 0.5 });
        let fit = fit_model(&ds, &model, &EstimatorConfig { seed, ..EstimatorConfig::default() }).unwrap();
        assert!(fit.w_hat[8..].iter().all(|w| *w == 0.0));
        let first = fit.w_hat[0];
        assert!(fit.w_hat[..8].iter().all(|w| (w - first).abs() < 1e-12));
        total += fit.c_hat;
    }
    let mean = total / runs as f64;
    assert!((0.3..=0.7).contains(&mean), "mean c_hat {mean}");
}

#[test]
fn reconstruction_matches_scheme_on_interior_rows() {
    let scheme = WeightScheme::Queen { c: 0.6 };
    let ds = data(&scheme, 1.0, 9);
    let mut fit = two_step_fit(&ds, &EstimatorConfig::default()).unwrap();
    fit.w_hat = scheme.template_vector(&fit.template).unwrap();
    let rebuilt = reconstruct_weights(&fit, &ds.lattice).unwrap();
    let truth = build_weights(&ds.lattice, &scheme).unwrap();
    for s in 0..ds.lattice.n() {
        if ds.lattice.border_distance(s) >= 1 {
            for j in 0..ds.lattice.n() {
                assert!((rebuilt.get(s, j) - truth.get(s, j)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fitted_values_cover_the_valid_interior() {
    let ds = data(&WeightScheme::EastSouthEast { c: 0.7 }, 1.0, 3);
    let fit = two_step_fit(&ds, &EstimatorConfig::default()).unwrap();
    let fv = fitted_values(&fit, &ds).unwrap();
    assert_eq!(fv.y_hat.len(), 625);
    assert_eq!(fv.valid.iter().filter(|v| **v).count(), 17 * 17);
    let r = fv.rmse(&ds.y).unwrap();
    assert!(r > 0.5 && r < 1.5, "rmse {r}");
}
