//! Maximum-likelihood SAR estimation with a prespecified weight matrix.
//!
//! The model is `y = c W y + X beta + eps` with `W` row-standardised. `beta`
//! and `sigma^2` are concentrated out, leaving a scalar search over `c` whose
//! log-determinant term is evaluated from the eigenvalues of `W`.

use std::time::Instant;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentOpt;
use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::{stream_seed, two_step_fit, EstimatorConfig};
use crate::lattice::Lattice;
use crate::resample::replication_counts;
use crate::simulate::{base_weights, simulate_dataset, SarDataset, SparseWeights, WeightScheme};

pub const DENSE_LIMIT: usize = 4096;
/// Eigenvalues below this magnitude are treated as zero when bounding `c`.
const EIGEN_ZERO: f64 = 1e-10;
/// Distance kept from the singular ends of the feasible interval.
const BOUNDARY_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MlOptions {
    pub intercept: bool,
    pub dense_limit: usize,
    pub std_errors: bool,
    /// Absolute accuracy of the search over `c`.
    pub c_tol: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            intercept: true,
            dense_limit: DENSE_LIMIT,
            std_errors: true,
            c_tol: 1e-8,
        }
    }
}

/// Eigenvalues of a base weight matrix, reused across likelihood evaluations.
#[derive(Debug, Clone)]
pub struct LogDetEigen {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Open interval of `c` on which `I - c W` is nonsingular and contains zero.
    pub interval: (f64, f64),
    pub symmetric: bool,
}

/// Positive `d` with `d_i W_ij = d_j W_ji` for all pairs, if one exists.
fn symmetrizer(w: &SparseWeights) -> Option<Vec<f64>> {
    let n = w.n();
    let mut d = vec![0.0; n];
    let mut stack = Vec::new();
    for root in 0..n {
        if d[root] > 0.0 {
            continue;
        }
        d[root] = 1.0;
        stack.push(root);
        while let Some(i) = stack.pop() {
            for (j, wij) in w.row(i) {
                let wji = w.get(j, i);
                if wji == 0.0 {
                    return None;
                }
                let dj = d[i] * wij / wji;
                if d[j] == 0.0 {
                    d[j] = dj;
                    stack.push(j);
                } else if (d[j] - dj).abs() > 1e-10 * d[j] {
                    return None;
                }
            }
        }
    }
    Some(d)
}

impl LogDetEigen {
    pub fn new(w: &SparseWeights, dense_limit: usize) -> Result<Self> {
        let n = w.n();
        if n > dense_limit {
            return Err(Error::Capability(format!(
                "n = {n} exceeds the dense eigenvalue limit of {dense_limit}; use the two-step estimator"
            )));
        }
        let (eigenvalues, symmetric) = match symmetrizer(w) {
            Some(d) => {
                let s = DMatrix::from_fn(n, n, |i, j| w.get(i, j) * (d[i] / d[j]).sqrt());
                let s = (&s + s.transpose()) * 0.5;
                let ev = s.symmetric_eigenvalues();
                (ev.iter().map(|v| Complex::new(*v, 0.0)).collect::<Vec<_>>(), true)
            }
            None => {
                let ev = w.to_dense().complex_eigenvalues();
                (ev.iter().copied().collect(), false)
            }
        };
        if eigenvalues.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Capability("eigenvalue computation failed; use the two-step estimator".into()));
        }
        let real: Vec<f64> = eigenvalues
            .iter()
            .filter(|v| v.im.abs() <= EIGEN_ZERO * (1.0 + v.re.abs()))
            .map(|v| v.re)
            .collect();
        let max = real.iter().copied().fold(0.0, f64::max);
        let min = real.iter().copied().fold(0.0, f64::min);
        let hi = if max > EIGEN_ZERO { 1.0 / max } else { 1.0 };
        let lo = if min < -EIGEN_ZERO { 1.0 / min } else { -1.0 };
        Ok(LogDetEigen {
            eigenvalues,
            interval: (lo, hi),
            symmetric,
        })
    }

    /// `log |det(I - c W)|`.
    pub fn log_det(&self, c: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| {
                let re = 1.0 - c * l.re;
                let im = c * l.im;
                0.5 * (re * re + im * im).ln()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub c_hat: f64,
    pub beta_hat: Vec<f64>,
    pub intercept: f64,
    pub sigma2_hat: f64,
    pub loglik: f64,
    /// Inverse-information standard errors, when requested.
    pub se_c: Option<f64>,
    pub se_beta: Option<Vec<f64>>,
    pub se_intercept: Option<f64>,
    pub se_sigma2: Option<f64>,
    pub interval: (f64, f64),
    pub evaluations: u64,
}

/// Regression pieces that do not depend on `c`.
struct Concentrated<'a> {
    eig: &'a LogDetEigen,
    /// Regressors, with a leading column of ones when an intercept is fitted.
    design: DMatrix<f64>,
    y: DVector<f64>,
    /// Least-squares coefficients of `y` and `W y` on the design.
    b_y: DVector<f64>,
    b_wy: DVector<f64>,
    /// Residuals of `y` and `W y` on the design.
    e_y: DVector<f64>,
    e_wy: DVector<f64>,
}

impl<'a> Concentrated<'a> {
    fn new(dataset: &SarDataset, w: &SparseWeights, eig: &'a LogDetEigen, intercept: bool) -> Result<Self> {
        let n = dataset.lattice.n();
        let k = dataset.k();
        let off = usize::from(intercept);
        let design = DMatrix::from_fn(n, k + off, |i, j| if j < off { 1.0 } else { dataset.x[(i, j - off)] });
        let y = dataset.y.clone();
        let wy = w.mul_vec(&y);
        let qr = design.clone().qr();
        let r = qr.r();
        let rank_ok = (0..r.ncols()).all(|j| r[(j, j)].abs() > 1e-10 * r.amax().max(f64::MIN_POSITIVE));
        if !rank_ok || n <= k + off + 1 {
            return Err(Error::DegenerateInput("regressor matrix is rank deficient".into()));
        }
        let solve = |v: &DVector<f64>| -> Result<DVector<f64>> {
            let qtv = qr.q().transpose() * v;
            r.solve_upper_triangular(&qtv)
                .ok_or_else(|| Error::DegenerateInput("regressor matrix is rank deficient".into()))
        };
        let b_y = solve(&y)?;
        let b_wy = solve(&wy)?;
        let e_y = &y - &design * &b_y;
        let e_wy = &wy - &design * &b_wy;
        Ok(Concentrated {
            eig,
            design,
            y,
            b_y,
            b_wy,
            e_y,
            e_wy,
        })
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn sigma2(&self, c: f64) -> f64 {
        (&self.e_y - &self.e_wy * c).norm_squared() / self.n()
    }

    fn loglik(&self, c: f64) -> f64 {
        let n = self.n();
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0) - 0.5 * n * self.sigma2(c).ln() + self.eig.log_det(c)
    }
}

struct NegLogLik<'a>(&'a Concentrated<'a>);

impl CostFunction for NegLogLik<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, c: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-self.0.loglik(*c))
    }
}

/// Concentrated log-likelihood of `c`, for grid checks.
pub fn concentrated_loglik(dataset: &SarDataset, w: &SparseWeights, eig: &LogDetEigen, intercept: bool, c: f64) -> Result<f64> {
    Ok(Concentrated::new(dataset, w, eig, intercept)?.loglik(c))
}

fn check_base(w: &SparseWeights, dataset: &SarDataset) -> Result<()> {
    if w.n() != dataset.lattice.n() {
        return Err(Error::invalid(format!("weight matrix has {} rows for {} sites", w.n(), dataset.lattice.n())));
    }
    if let Some(s) = w.row_sums().into_iter().find(|s| *s != 0.0 && (s - 1.0).abs() > 1e-10) {
        return Err(Error::invalid(format!("base weight matrix must be row-standardised, found row sum {s}")));
    }
    Ok(())
}

/// Fits the SAR model by maximum likelihood with `base` held fixed.
pub fn ml_fit(dataset: &SarDataset, base: &SparseWeights, opts: &MlOptions) -> Result<MlFit> {
    check_base(base, dataset)?;
    let eig = LogDetEigen::new(base, opts.dense_limit)?;
    ml_fit_with_eigen(dataset, base, &eig, opts)
}

/// As [`ml_fit`] with precomputed eigenvalues of `base`.
pub fn ml_fit_with_eigen(dataset: &SarDataset, base: &SparseWeights, eig: &LogDetEigen, opts: &MlOptions) -> Result<MlFit> {
    check_base(base, dataset)?;
    if !(opts.c_tol > 0.0) {
        return Err(Error::invalid("c tolerance must be positive"));
    }
    let conc = Concentrated::new(dataset, base, eig, opts.intercept)?;
    let (lo, hi) = eig.interval;
    let (a, b) = (lo + BOUNDARY_GAP * (hi - lo), hi - BOUNDARY_GAP * (hi - lo));
    // Brent reports accuracy below 3 tol.
    let solver = BrentOpt::new(a, b).set_tolerance(0.0, opts.c_tol / 3.0);
    let res = Executor::new(NegLogLik(&conc), solver)
        .configure(|s| s.max_iters(500))
        .run()
        .map_err(|e| Error::Numerical {
            reason: format!("likelihood search failed: {e}"),
            residual: f64::NAN,
            max_row_sum: 1.0,
        })?;
    let state = res.state();
    let c_hat = *state.get_best_param().ok_or_else(|| Error::Numerical {
        reason: "likelihood search returned no estimate".into(),
        residual: f64::NAN,
        max_row_sum: 1.0,
    })?;
    let evaluations = state.get_func_counts().get("cost_count").copied().unwrap_or(0);

    let coef = &conc.b_y - &conc.b_wy * c_hat;
    let sigma2_hat = conc.sigma2(c_hat);
    let off = usize::from(opts.intercept);
    let intercept = if opts.intercept { coef[0] } else { 0.0 };
    let beta_hat: Vec<f64> = coef.iter().skip(off).copied().collect();

    let mut fit = MlFit {
        c_hat,
        beta_hat,
        intercept,
        sigma2_hat,
        loglik: conc.loglik(c_hat),
        se_c: None,
        se_beta: None,
        se_intercept: None,
        se_sigma2: None,
        interval: eig.interval,
        evaluations,
    };
    if opts.std_errors {
        let se = information_std_errors(&conc, base, c_hat, &coef, sigma2_hat)?;
        fit.se_intercept = opts.intercept.then(|| se[0]);
        fit.se_beta = Some(se[off..off + fit.beta_hat.len()].to_vec());
        let p = conc.design.ncols();
        fit.se_c = Some(se[p]);
        fit.se_sigma2 = Some(se[p + 1]);
    }
    Ok(fit)
}

/// Square roots of the diagonal of the inverse information matrix for
/// `(coef, c, sigma^2)`.
fn information_std_errors(conc: &Concentrated, w: &SparseWeights, c: f64, coef: &DVector<f64>, s2: f64) -> Result<Vec<f64>> {
    let n = conc.y.len();
    let p = conc.design.ncols();
    let a = DMatrix::<f64>::identity(n, n) - w.to_dense() * c;
    let a_inv = a.lu().try_inverse().ok_or_else(|| Error::Numerical {
        reason: "I - cW is singular at the estimate".into(),
        residual: f64::NAN,
        max_row_sum: c.abs(),
    })?;
    let g = w.to_dense() * a_inv;
    let gxb = &g * (&conc.design * coef);
    let tr_g = g.trace();
    let tr_gg = (&g * &g).trace();
    let tr_gtg = g.norm_squared();

    let dim = p + 2;
    let mut info = DMatrix::zeros(dim, dim);
    let xtx = conc.design.transpose() * &conc.design;
    let xtgxb = conc.design.transpose() * &gxb;
    for i in 0..p {
        for j in 0..p {
            info[(i, j)] = xtx[(i, j)] / s2;
        }
        info[(i, p)] = xtgxb[i] / s2;
        info[(p, i)] = xtgxb[i] / s2;
    }
    info[(p, p)] = tr_gg + tr_gtg + gxb.norm_squared() / s2;
    info[(p, p + 1)] = tr_g / s2;
    info[(p + 1, p)] = tr_g / s2;
    info[(p + 1, p + 1)] = n as f64 / (2.0 * s2 * s2);
    let inv = info.try_inverse().ok_or_else(|| Error::Numerical {
        reason: "information matrix is singular".into(),
        residual: f64::NAN,
        max_row_sum: c.abs(),
    })?;
    Ok((0..dim).map(|i| inv[(i, i)].max(0.0).sqrt()).collect())
}

/// Reduced-form predictions `(I - c W)^{-1} (intercept + X beta)`.
pub fn ml_fitted_values(fit: &MlFit, dataset: &SarDataset, base: &SparseWeights) -> Result<Vec<f64>> {
    check_base(base, dataset)?;
    let n = dataset.lattice.n();
    let rhs = DVector::from_fn(n, |i, _| {
        fit.intercept + (0..dataset.k()).map(|p| dataset.x[(i, p)] * fit.beta_hat[p]).sum::<f64>()
    });
    let a = DMatrix::<f64>::identity(n, n) - base.to_dense() * fit.c_hat;
    a.lu().solve(&rhs).map(|v| v.iter().copied().collect()).ok_or_else(|| Error::Numerical {
        reason: "I - cW is singular at the estimate".into(),
        residual: f64::NAN,
        max_row_sum: fit.c_hat.abs(),
    })
}

/// One row of a timing table; `m` is `None` for maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub method: &'static str,
    pub m: Option<usize>,
    pub mean_s: f64,
    pub sd_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub ms: Vec<usize>,
    pub repetitions: usize,
    pub scheme: WeightScheme,
    pub seed: u64,
    pub estimator: EstimatorConfig,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            ms: vec![24, 48],
            repetitions: 20,
            scheme: WeightScheme::Queen { c: 0.5 },
            seed: 0,
            estimator: EstimatorConfig::default(),
        }
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Wall-clock cost of the two-step estimator at `r = r_max` for each template
/// size and of the maximum-likelihood fit (eigenvalues included), per lattice size.
pub fn timing_comparison(n_list: &[usize], config: &TimingConfig) -> Result<Vec<TimingRow>> {
    if config.repetitions == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let mut rows = Vec::new();
    for &n in n_list {
        let lattice = Lattice::square(n)?;
        let base = base_weights(&lattice, &config.scheme)?;
        let mut lasso_times = vec![Vec::new(); config.ms.len()];
        let mut ml_times = Vec::new();
        for rep in 0..config.repetitions {
            let seed = stream_seed(config.seed ^ n as u64, rep as u64);
            let ds = simulate_dataset(&lattice, &config.scheme, &[1.0], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))?;
            for (slot, &m) in config.ms.iter().enumerate() {
                let (_, _, r_max) = replication_counts(n, m)?;
                let cfg = EstimatorConfig {
                    m,
                    r1: r_max,
                    seed,
                    ..config.estimator.clone()
                };
                let t = Instant::now();
                two_step_fit(&ds, &cfg)?;
                lasso_times[slot].push(t.elapsed().as_secs_f64());
            }
            let t = Instant::now();
            ml_fit(&ds, &base, &MlOptions { std_errors: false, ..MlOptions::default() })?;
            ml_times.push(t.elapsed().as_secs_f64());
        }
        for (slot, &m) in config.ms.iter().enumerate() {
            let (mean_s, sd_s) = mean_sd(&lasso_times[slot]);
            rows.push(TimingRow { n, method: "lasso", m: Some(m), mean_s, sd_s });
        }
        let (mean_s, sd_s) = mean_sd(&ml_times);
        rows.push(TimingRow { n, method: "ml", m: None, mean_s, sd_s });
    }
    Ok(rows)
}
