//! Two-step adaptive lasso with cross-sectional resampling.
//!
//! Step one regresses sampled responses on the regressors at the site and its
//! template neighbours (instruments) and predicts the response wherever the
//! window is complete. Step two regresses sampled responses on their own
//! regressors and the predicted responses of their neighbours, with the
//! neighbour weights constrained to be nonnegative and to sum below one.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{adaptive_lasso_cv, AdaptiveConfig, AdaptiveFit, ConstraintSpec, LambdaGrid, PriorKind, SolverOptions, UNIT_BALL_BOUND};
use crate::lattice::{Lattice, NeighborhoodTemplate};
use crate::resample::{
    build_first_step, build_second_step, eligible_sites, predict_endogenous, EndogenousPrediction, ResamplePlan, SamplingMode, Stage,
};
use crate::simulate::{weights_from_vector, SarDataset, SparseWeights, WeightScheme};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Template size (number of candidate neighbours).
    pub m: usize,
    /// First-step replications.
    pub r1: usize,
    /// Second-step replications; defaults to `min(r1, eligible second-step sites)`.
    pub r2: Option<usize>,
    pub gamma: f64,
    pub folds: usize,
    pub seed: u64,
    pub intercept: bool,
    pub sampling: SamplingMode,
    pub lambda_grid: LambdaGrid,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            m: 24,
            r1: 400,
            r2: None,
            gamma: 1.0,
            folds: 10,
            seed: 0,
            intercept: true,
            sampling: SamplingMode::WithoutReplacement,
            lambda_grid: LambdaGrid::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<NeighborhoodTemplate> {
        let template = NeighborhoodTemplate::new(self.m)?;
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds must be at least 2, got {}", self.folds)));
        }
        let min_r = 3 * self.folds;
        if self.r1 < min_r {
            return Err(Error::invalid(format!(
                "r1 = {} is below 3 x folds = {min_r}",
                self.r1
            )));
        }
        if let Some(r2) = self.r2 {
            if r2 < min_r {
                return Err(Error::invalid(format!("r2 = {r2} is below 3 x folds = {min_r}")));
            }
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(template)
    }

    fn adaptive(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            gamma: self.gamma,
            folds: self.folds,
            lambda_grid: self.lambda_grid.clone(),
            solver: SolverOptions {
                fit_intercept: self.intercept,
                ..SolverOptions::default()
            },
        }
    }
}

/// How the spatial weights enter the second step.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightModel {
    /// Every template weight estimated individually.
    Estimated,
    /// A prespecified pattern scaled by a single estimated strength.
    Fixed(WeightScheme),
}

impl WeightModel {
    pub fn label(&self) -> String {
        match self {
            WeightModel::Estimated => "estimate".into(),
            WeightModel::Fixed(s) => s.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageDiagnostics {
    pub r: usize,
    pub columns: usize,
    pub prior: PriorKind,
    pub best_index: usize,
    pub cv_error: f64,
    pub sweeps: usize,
    pub ball_multiplier: f64,
    pub selected: usize,
}

impl StageDiagnostics {
    fn from_fit(r: usize, fit: &AdaptiveFit) -> Self {
        StageDiagnostics {
            r,
            columns: fit.penalty.psi.len(),
            prior: fit.prior_kind,
            best_index: fit.cv.best_index,
            cv_error: fit.cv.cv_error[fit.cv.best_index],
            sweeps: fit.cv.fit.n_iter,
            ball_multiplier: fit.cv.fit.ball_multiplier,
            selected: fit.cv.fit.coef.iter().filter(|b| **b != 0.0).count(),
        }
    }
}

/// Output of the two-step estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepFit {
    pub template: NeighborhoodTemplate,
    pub model: WeightModel,
    /// First-step instrument coefficients, length `k(m+1)`.
    pub theta_hat: Vec<f64>,
    pub first_intercept: f64,
    /// Estimated weights over the template.
    pub w_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub intercept: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Spatial dependence strength, `sum(w_hat)`.
    pub c_hat: f64,
    pub first: StageDiagnostics,
    pub second: StageDiagnostics,
}

struct FirstStage {
    fit: AdaptiveFit,
    r: usize,
    prediction: EndogenousPrediction,
}

fn first_stage(
    dataset: &SarDataset,
    template: &NeighborhoodTemplate,
    config: &EstimatorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FirstStage> {
    let plan = ResamplePlan::draw(&dataset.lattice, template, Stage::FirstStep, config.r1, config.sampling, rng)?;
    let design = build_first_step(dataset, &plan)?;
    let l = design.z.ncols();
    let fit = adaptive_lasso_cv(&design.z, &design.y, &ConstraintSpec::none(l), &config.adaptive(), rng)?;
    let prediction = predict_endogenous(&fit.cv.fit.coef, fit.cv.fit.intercept, dataset, template)?;
    Ok(FirstStage { fit, r: plan.r(), prediction })
}

fn second_stage_plan(
    dataset: &SarDataset,
    template: &NeighborhoodTemplate,
    config: &EstimatorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ResamplePlan> {
    let eligible = eligible_sites(&dataset.lattice, template, Stage::SecondStep)?;
    let r2 = match (config.r2, config.sampling) {
        (Some(r), _) => r,
        (None, SamplingMode::WithReplacement) => config.r1,
        (None, SamplingMode::WithoutReplacement) => config.r1.min(eligible.len()),
    };
    if r2 < 3 * config.folds {
        return Err(Error::invalid(format!(
            "only {r2} second-step replications available; at least {} needed",
            3 * config.folds
        )));
    }
    ResamplePlan::draw(&dataset.lattice, template, Stage::SecondStep, r2, config.sampling, rng)
}

fn check_lattice(dataset: &SarDataset, template: &NeighborhoodTemplate) -> Result<()> {
    let ring = Stage::SecondStep.border_ring(template);
    let lat = &dataset.lattice;
    if 2 * ring >= lat.nrows().min(lat.ncols()) {
        return Err(Error::invalid(format!(
            "a {}x{} lattice is too small for m = {} (second step excludes a border of {ring})",
            lat.nrows(),
            lat.ncols(),
            template.m()
        )));
    }
    Ok(())
}

/// Runs both steps with individually estimated weights.
pub fn two_step_fit(dataset: &SarDataset, config: &EstimatorConfig) -> Result<TwoStepFit> {
    fit_model(dataset, &WeightModel::Estimated, config)
}

/// Runs both steps with the weights fixed to `scheme` up to a scalar strength.
pub fn fit_with_fixed_weights(dataset: &SarDataset, scheme: &WeightScheme, config: &EstimatorConfig) -> Result<TwoStepFit> {
    fit_model(dataset, &WeightModel::Fixed(scheme.clone()), config)
}

pub fn fit_model(dataset: &SarDataset, model: &WeightModel, config: &EstimatorConfig) -> Result<TwoStepFit> {
    let template = config.validate()?;
    check_lattice(dataset, &template)?;
    let unit_pattern = match model {
        WeightModel::Estimated => None,
        WeightModel::Fixed(scheme) => {
            let w = scheme.template_vector(&template)?;
            let s: f64 = w.iter().sum();
            Some(if s > 0.0 { w.iter().map(|v| v / s).collect::<Vec<f64>>() } else { w })
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = first_stage(dataset, &template, config, &mut rng)?;
    let plan = second_stage_plan(dataset, &template, config, &mut rng)?;
    let design = build_second_step(dataset, &first.prediction, &plan)?;
    let k = dataset.k();
    let m = template.m();

    let (fit, w_hat) = match &unit_pattern {
        None => {
            let a = design.combined();
            let cons = ConstraintSpec::spatial_weights(k + m, m, UNIT_BALL_BOUND);
            let fit = adaptive_lasso_cv(&a, &design.y, &cons, &config.adaptive(), &mut rng)?;
            let w = fit.cv.fit.coef[k..].to_vec();
            (fit, w)
        }
        Some(unit) => {
            let composite = &design.ybreve * DVector::from_column_slice(unit);
            let a = nalgebra::DMatrix::from_fn(plan.r(), k + 1, |i, j| if j < k { design.x[(i, j)] } else { composite[i] });
            let cons = ConstraintSpec::spatial_weights(k + 1, 1, UNIT_BALL_BOUND);
            let fit = adaptive_lasso_cv(&a, &design.y, &cons, &config.adaptive(), &mut rng)?;
            let c = fit.cv.fit.coef[k];
            let w = unit.iter().map(|u| u * c).collect();
            (fit, w)
        }
    };
    let c_hat: f64 = w_hat.iter().sum();
    debug_assert!(c_hat < 1.0 && w_hat.iter().all(|v| *v >= 0.0));

    Ok(TwoStepFit {
        first: StageDiagnostics::from_fit(first.r, &first.fit),
        second: StageDiagnostics::from_fit(plan.r(), &fit),
        theta_hat: first.fit.cv.fit.coef.clone(),
        first_intercept: first.fit.cv.fit.intercept,
        lambda1: first.fit.cv.best_lambda,
        beta_hat: fit.cv.fit.coef[..k].to_vec(),
        intercept: fit.cv.fit.intercept,
        lambda2: fit.cv.best_lambda,
        w_hat,
        c_hat,
        template,
        model: model.clone(),
    })
}

/// Full weight matrix implied by the estimated template weights.
pub fn reconstruct_weights(fit: &TwoStepFit, lattice: &Lattice) -> Result<SparseWeights> {
    weights_from_vector(lattice, &fit.template, &fit.w_hat)
}

/// Fitted response at every site; `valid` is false where the neighbour
/// predictions are incomplete and only the exogenous part is used.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedValues {
    pub y_hat: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FittedValues {
    /// RMSE against `y` over valid sites.
    pub fn rmse(&self, y: &DVector<f64>) -> Result<f64> {
        let (pred, obs): (Vec<f64>, Vec<f64>) = self
            .y_hat
            .iter()
            .zip(y.iter())
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|((a, b), _)| (*a, *b))
            .unzip();
        crate::metrics::rmse(&pred, &obs)
    }
}

pub fn fitted_values(fit: &TwoStepFit, dataset: &SarDataset) -> Result<FittedValues> {
    let pred = predict_endogenous(&fit.theta_hat, fit.first_intercept, dataset, &fit.template)?;
    let lattice = &dataset.lattice;
    let n = lattice.n();
    let mut y_hat = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for s in 0..n {
        let exog = fit.intercept + (0..dataset.k()).map(|p| dataset.x[(s, p)] * fit.beta_hat[p]).sum::<f64>();
        let spatial: Option<f64> = fit
            .template
            .offsets()
            .iter()
            .zip(&fit.w_hat)
            .map(|(o, w)| lattice.shift(s, *o).and_then(|j| pred.get(j)).map(|v| v * w))
            .sum();
        match spatial {
            Some(sp) => {
                y_hat.push(exog + sp);
                valid.push(true);
            }
            None => {
                y_hat.push(exog);
                valid.push(false);
            }
        }
    }
    Ok(FittedValues { y_hat, valid })
}

/// Seed of replication `index` derived from a base seed on an independent stream.
pub fn stream_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index + 1);
    rng.next_u64()
}

/// Mean and sample standard deviation of bootstrap estimates.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub iterations: usize,
    pub failures: usize,
    pub mean_beta: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub mean_w: Vec<f64>,
    pub se_w: Vec<f64>,
    pub mean_c: f64,
    pub se_c: f64,
    pub mean_intercept: f64,
    pub se_intercept: f64,
    pub fits: Vec<TwoStepFit>,
    pub errors: Vec<(usize, Error)>,
}

impl BootstrapResult {
    /// Fit whose every coefficient (both steps) is the bootstrap mean.
    pub fn mean_fit(&self) -> TwoStepFit {
        let n = self.fits.len() as f64;
        let avg = |get: &dyn Fn(&TwoStepFit) -> &[f64]| -> Vec<f64> {
            let mut acc = vec![0.0; get(&self.fits[0]).len()];
            for f in &self.fits {
                for (a, v) in acc.iter_mut().zip(get(f)) {
                    *a += v / n;
                }
            }
            acc
        };
        let mut out = self.fits[0].clone();
        out.theta_hat = avg(&|f| &f.theta_hat);
        out.first_intercept = self.fits.iter().map(|f| f.first_intercept).sum::<f64>() / n;
        out.beta_hat = self.mean_beta.clone();
        out.w_hat = self.mean_w.clone();
        out.c_hat = self.mean_w.iter().sum();
        out.intercept = self.mean_intercept;
        out.lambda1 = self.fits.iter().map(|f| f.lambda1).sum::<f64>() / n;
        out.lambda2 = self.fits.iter().map(|f| f.lambda2).sum::<f64>() / n;
        out
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `iterations` fits with site samples drawn with replacement.
pub fn bootstrap(dataset: &SarDataset, model: &WeightModel, config: &EstimatorConfig, iterations: usize) -> Result<BootstrapResult> {
    if iterations < 2 {
        return Err(Error::invalid(format!("bootstrap needs at least 2 iterations, got {iterations}")));
    }
    let seeds: Vec<u64> = (0..iterations as u64).map(|i| stream_seed(config.seed, i)).collect();
    bootstrap_with_seeds(dataset, model, config, &seeds)
}

/// Bootstrap with explicit per-iteration seeds.
pub fn bootstrap_with_seeds(
    dataset: &SarDataset,
    model: &WeightModel,
    config: &EstimatorConfig,
    seeds: &[u64],
) -> Result<BootstrapResult> {
    config.validate()?;
    let outcomes: Vec<Result<TwoStepFit>> = seeds
        .par_iter()
        .map(|seed| {
            let cfg = EstimatorConfig {
                seed: *seed,
                sampling: SamplingMode::WithReplacement,
                ..config.clone()
            };
            fit_model(dataset, model, &cfg)
        })
        .collect();
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(f) => fits.push(f),
            Err(e) if e.is_config() => return Err(e),
            Err(e) => errors.push((i, e)),
        }
    }
    if fits.is_empty() {
        return Err(errors.into_iter().next().map(|(_, e)| e).unwrap_or_else(|| Error::invalid("no bootstrap seeds")));
    }
    let column = |get: &dyn Fn(&TwoStepFit) -> f64| -> (f64, f64) {
        let v: Vec<f64> = fits.iter().map(get).collect();
        mean_sd(&v)
    };
    let k = fits[0].beta_hat.len();
    let m = fits[0].w_hat.len();
    let (mean_beta, se_beta): (Vec<f64>, Vec<f64>) = (0..k).map(|p| column(&|f| f.beta_hat[p])).unzip();
    let (mean_w, se_w): (Vec<f64>, Vec<f64>) = (0..m).map(|j| column(&|f| f.w_hat[j])).unzip();
    let (mean_c, se_c) = column(&|f| f.c_hat);
    let (mean_intercept, se_intercept) = column(&|f| f.intercept);
    Ok(BootstrapResult {
        iterations: seeds.len(),
        failures: errors.len(),
        mean_beta,
        se_beta,
        mean_w,
        se_w,
        mean_c,
        se_c,
        mean_intercept,
        se_intercept,
        fits,
        errors,
    })
}
