//! Adaptive lasso by cyclic coordinate descent.
//!
//! Minimises `||y - A b||^2 + lambda * sum_j psi_j |b_j|` on the standardised,
//! centred problem, with optional per-coefficient nonnegativity and an l1-ball
//! bound on a subset of coefficients. The l1-ball bound is enforced exactly: a
//! Lagrange multiplier is added to the penalty of the bounded coefficients and
//! located by bisection whenever the unconstrained solution leaves the ball.
//!
//! Coefficients are reported on the original scale of the design.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Priors smaller than this in magnitude freeze their coefficient at zero.
pub const PRIOR_FLOOR: f64 = 1e-8;
/// Normal matrices with a condition estimate above this use the ridge prior.
pub const OLS_CONDITION_LIMIT: f64 = 1e8;
/// Ridge strength relative to the mean diagonal of the normal matrix.
pub const RIDGE_DELTA: f64 = 1e-3;
/// Bound used to realise the strict constraint `||w||_1 < 1`.
pub const UNIT_BALL_BOUND: f64 = 1.0 - 1e-6;

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Regularisation path specification.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// `count` log-spaced values from `lambda_max` down to `min_ratio * lambda_max`.
    Auto { count: usize, min_ratio: f64 },
    /// Explicit strictly descending values.
    Explicit(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            count: 100,
            min_ratio: 1e-4,
        }
    }
}

/// Per-coefficient penalty weights and the lambda path.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    /// Penalty weights; `f64::INFINITY` freezes a coefficient at zero.
    pub psi: Vec<f64>,
    /// Exponent used to derive `psi` from prior estimates.
    pub gamma: f64,
    pub lambda_grid: LambdaGrid,
}

impl PenaltySpec {
    /// Plain lasso: every weight equal to one.
    pub fn uniform(p: usize, lambda_grid: LambdaGrid) -> Self {
        PenaltySpec {
            psi: vec![1.0; p],
            gamma: 1.0,
            lambda_grid,
        }
    }

    /// Adaptive weights `1 / |prior|^gamma`.
    pub fn adaptive(prior: &[f64], gamma: f64, lambda_grid: LambdaGrid) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(PenaltySpec {
            psi: prior.iter().map(|b| adaptive_weight(*b, gamma)).collect(),
            gamma,
            lambda_grid,
        })
    }
}

pub fn adaptive_weight(prior: f64, gamma: f64) -> f64 {
    if prior.abs() < PRIOR_FLOOR || !prior.is_finite() {
        f64::INFINITY
    } else {
        prior.abs().powf(-gamma)
    }
}

/// Upper bound on the l1 norm of a subset of coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Ball {
    pub mask: Vec<bool>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub nonneg: Vec<bool>,
    pub l1_ball: Option<L1Ball>,
}

impl ConstraintSpec {
    pub fn none(p: usize) -> Self {
        ConstraintSpec {
            nonneg: vec![false; p],
            l1_ball: None,
        }
    }

    /// Nonnegativity and an l1 bound on the trailing `m` of `p` coefficients.
    pub fn spatial_weights(p: usize, m: usize, bound: f64) -> Self {
        let mask: Vec<bool> = (0..p).map(|j| j >= p - m).collect();
        ConstraintSpec {
            nonneg: mask.clone(),
            l1_ball: Some(L1Ball { mask, bound }),
        }
    }

    fn check(&self, p: usize) -> Result<()> {
        if self.nonneg.len() != p {
            return Err(Error::invalid(format!(
                "nonnegativity mask has length {}, expected {p}",
                self.nonneg.len()
            )));
        }
        if let Some(ball) = &self.l1_ball {
            if ball.mask.len() != p {
                return Err(Error::invalid(format!(
                    "l1-ball mask has length {}, expected {p}",
                    ball.mask.len()
                )));
            }
            if !(ball.bound > 0.0) {
                return Err(Error::invalid(format!("l1-ball bound must be positive, got {}", ball.bound)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub fit_intercept: bool,
    pub standardize: bool,
    /// Convergence threshold on the largest coordinate change (standardised scale).
    pub tol: f64,
    /// Largest admissible KKT residual per observation.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            fit_intercept: true,
            standardize: true,
            tol: 1e-7,
            kkt_tol: 1e-5,
            max_sweeps: 10_000,
        }
    }
}

/// Solution at one point of the path.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub lambda: f64,
    /// Coefficients on the original scale.
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Penalised objective on the standardised scale.
    pub objective: f64,
    /// Largest KKT residual per observation (standardised scale).
    pub kkt_violation: f64,
    pub n_iter: usize,
    /// Multiplier of the l1-ball constraint (zero when inactive).
    pub ball_multiplier: f64,
}

impl LassoFit {
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        let mut out = design * DVector::from_column_slice(&self.coef);
        out.add_scalar_mut(self.intercept);
        out
    }

    pub fn support(&self) -> Vec<bool> {
        self.coef.iter().map(|b| *b != 0.0).collect()
    }
}

/// Centred and standardised problem in Gram form.
struct Prepared {
    rows: usize,
    x_mean: Vec<f64>,
    y_mean: f64,
    scale: Vec<f64>,
    gram: DMatrix<f64>,
    xty: Vec<f64>,
    yty: f64,
    /// Coefficients with no usable variation; always zero.
    frozen: Vec<bool>,
}

impl Prepared {
    fn new(design: &DMatrix<f64>, response: &DVector<f64>, opts: &SolverOptions) -> Result<Self> {
        let (rows, p) = design.shape();
        if response.len() != rows {
            return Err(Error::invalid(format!(
                "design has {rows} rows but response has {}",
                response.len()
            )));
        }
        if rows == 0 {
            return Err(Error::invalid("empty design"));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design and response must be finite"));
        }
        let mut a = design.clone();
        let mut y = response.clone();
        let mut x_mean = vec![0.0; p];
        let mut y_mean = 0.0;
        if opts.fit_intercept {
            for (j, mean) in x_mean.iter_mut().enumerate() {
                *mean = a.column(j).mean();
                a.column_mut(j).add_scalar_mut(-*mean);
            }
            y_mean = y.mean();
            y.add_scalar_mut(-y_mean);
        }
        let mut scale = vec![1.0; p];
        let mut frozen = vec![false; p];
        for j in 0..p {
            let ss = a.column(j).norm_squared();
            let max_abs = design.column(j).amax();
            if ss <= 1e-24 * rows as f64 * (1.0 + max_abs * max_abs) {
                frozen[j] = true;
                continue;
            }
            if opts.standardize {
                scale[j] = (ss / rows as f64).sqrt();
                a.column_mut(j).scale_mut(1.0 / scale[j]);
            }
        }
        let gram = a.tr_mul(&a);
        let xty = a.tr_mul(&y);
        Ok(Prepared {
            rows,
            x_mean,
            y_mean,
            scale,
            gram,
            xty: xty.as_slice().to_vec(),
            yty: y.norm_squared(),
            frozen,
        })
    }

    fn p(&self) -> usize {
        self.scale.len()
    }

    fn residual_ss(&self, b: &[f64]) -> f64 {
        let bv = DVector::from_column_slice(b);
        let quad = (&self.gram * &bv).dot(&bv);
        let lin: f64 = self.xty.iter().zip(b).map(|(x, b)| x * b).sum();
        (self.yty - 2.0 * lin + quad).max(0.0)
    }

    fn lambda_max(&self, psi: &[f64]) -> f64 {
        (0..self.p())
            .filter(|j| !self.frozen[*j] && psi[*j].is_finite() && psi[*j] > 0.0)
            .map(|j| 2.0 * self.xty[j].abs() / psi[j])
            .fold(0.0, f64::max)
    }

    fn to_original(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = b.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let intercept = self.y_mean - coef.iter().zip(&self.x_mean).map(|(c, m)| c * m).sum::<f64>();
        (coef, intercept)
    }
}

/// Mutable coordinate-descent state: standardised coefficients and `q = A'y - G b`.
struct CdState {
    b: Vec<f64>,
    q: Vec<f64>,
}

impl CdState {
    fn zero(prep: &Prepared) -> Self {
        CdState {
            b: vec![0.0; prep.p()],
            q: prep.xty.clone(),
        }
    }
}

struct CdOutcome {
    sweeps: usize,
    max_change: f64,
    converged: bool,
}

fn penalised_objective(prep: &Prepared, b: &[f64], pen: &[f64]) -> f64 {
    prep.residual_ss(b)
        + b.iter()
            .zip(pen)
            .filter(|(b, _)| **b != 0.0)
            .map(|(b, p)| p * b.abs())
            .sum::<f64>()
}

/// KKT residual per observation for penalties `pen`.
fn kkt_residual(prep: &Prepared, state: &CdState, pen: &[f64], nonneg: &[bool]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..prep.p() {
        if prep.frozen[j] || !pen[j].is_finite() {
            continue;
        }
        let g = 2.0 * state.q[j];
        let b = state.b[j];
        let v = if b == 0.0 {
            if nonneg[j] {
                (g - pen[j]).max(0.0)
            } else {
                (g.abs() - pen[j]).max(0.0)
            }
        } else {
            (g - pen[j] * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst / prep.rows as f64
}

const KKT_CHECK_PERIOD: usize = 50;
const SINGULAR_RATIO: f64 = 1e-10;
/// Relative slack below the ball bound accepted for an active constraint.
const BALL_TOL: f64 = 1e-10;

/// Active-set refinement: solves the stationarity equations on the current
/// support with signs held fixed, stepping only as far as the first sign
/// change and dropping that coordinate before re-solving. A rank-deficient
/// support is first reduced along a null direction of its Gram block, which
/// leaves the fit unchanged and does not raise the penalty. Every step lowers
/// the objective. Returns whether the refined iterate passes the KKT check.
fn polish(prep: &Prepared, state: &mut CdState, pen: &[f64], nonneg: &[bool], opts: &SolverOptions) -> bool {
    let mut active: Vec<usize> = (0..prep.p()).filter(|j| state.b[*j] != 0.0).collect();
    if active.is_empty() {
        return false;
    }
    let mut b = state.b.clone();
    while !active.is_empty() {
        let a = active.len();
        let g = DMatrix::from_fn(a, a, |i, k| prep.gram[(active[i], active[k])]);
        let eig = g.symmetric_eigen();
        let (imin, emin) = eig.eigenvalues.argmin();
        let emax = eig.eigenvalues.max();
        if !(emax > 0.0) || !emin.is_finite() {
            return false;
        }
        let (target, full_step) = if emin <= SINGULAR_RATIO * emax {
            let mut d = eig.eigenvectors.column(imin).into_owned();
            let slope: f64 = active.iter().zip(d.iter()).map(|(j, v)| pen[*j] * b[*j].signum() * v).sum();
            let reaches_zero = |d: &DVector<f64>| active.iter().zip(d.iter()).any(|(j, v)| b[*j].signum() * v < 0.0);
            if slope > 0.0 || (slope == 0.0 && !reaches_zero(&d)) {
                d = -d;
            }
            if !reaches_zero(&d) {
                return false;
            }
            let target = DVector::from_fn(a, |i, _| b[active[i]] + d[i]);
            (target, false)
        } else {
            let rhs = DVector::from_fn(a, |i, _| {
                let j = active[i];
                prep.xty[j] - 0.5 * pen[j] * b[j].signum()
            });
            let mut inv_diag = eig.eigenvalues.clone();
            inv_diag.apply(|v| *v = 1.0 / *v);
            let v = &eig.eigenvectors;
            let sol = v * DMatrix::from_diagonal(&inv_diag) * v.transpose() * rhs;
            (sol, true)
        };
        if target.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut step = if full_step { 1.0 } else { f64::INFINITY };
        let mut hit = None;
        for (i, j) in active.iter().enumerate() {
            if target[i].signum() != b[*j].signum() || target[i] == 0.0 {
                let t = b[*j] / (b[*j] - target[i]);
                if t < step {
                    step = t;
                    hit = Some(i);
                }
            }
        }
        for (i, j) in active.iter().enumerate() {
            let old = b[*j];
            b[*j] += step * (target[i] - old);
            // Near-ties with the blocking coordinate can round across zero.
            if b[*j].signum() != old.signum() {
                b[*j] = 0.0;
            }
        }
        match hit {
            Some(i) => {
                b[active[i]] = 0.0;
                active.retain(|j| b[*j] != 0.0);
            }
            None => break,
        }
    }
    debug_assert!(nonneg.iter().zip(&b).all(|(n, v)| !n || *v >= 0.0));
    // An ill-conditioned solve can lose the descent property; keep the iterate then.
    if penalised_objective(prep, &b, pen) > penalised_objective(prep, &state.b, pen) {
        return false;
    }
    let gb = &prep.gram * DVector::from_column_slice(&b);
    state.q = (0..prep.p()).map(|k| prep.xty[k] - gb[k]).collect();
    state.b = b;
    kkt_residual(prep, state, pen, nonneg) <= 0.1 * opts.kkt_tol
}

/// Ball norm of the original-scale coefficients, summed exactly as a caller would.
fn original_ball_norm(prep: &Prepared, ball_weight: &[f64], b: &[f64]) -> f64 {
    b.iter()
        .zip(&prep.scale)
        .zip(ball_weight)
        .filter(|(_, c)| **c > 0.0)
        .map(|((b, s), _)| (b / s).abs())
        .sum()
}

/// Exact minimiser on the face given by the current support and signs, with
/// the ball as an equality when `active`. Adopted only if signs are kept,
/// the multiplier is nonnegative, the KKT check passes and the objective does
/// not rise. Returns the ball multiplier of the adopted point.
fn refine_face(
    prep: &Prepared,
    state: &mut CdState,
    base: &[f64],
    ball_weight: &[f64],
    ball: Option<f64>,
    active: bool,
    nonneg: &[bool],
    opts: &SolverOptions,
) -> Option<f64> {
    let equality = ball.filter(|_| active);
    let support: Vec<usize> = (0..prep.p()).filter(|j| state.b[*j] != 0.0).collect();
    let k = support.len();
    if k == 0 {
        return None;
    }
    let sign: Vec<f64> = support.iter().map(|j| state.b[*j].signum()).collect();
    let a: Vec<f64> = support.iter().zip(&sign).map(|(j, s)| ball_weight[*j] * s).collect();
    let dim = if equality.is_some() { k + 1 } else { k };
    if equality.is_some() && a.iter().all(|v| *v == 0.0) {
        return None;
    }
    let lhs = DMatrix::from_fn(dim, dim, |r, c| match (r < k, c < k) {
        (true, true) => prep.gram[(support[r], support[c])],
        (true, false) => 0.5 * a[r],
        (false, true) => a[c],
        (false, false) => 0.0,
    });
    let rhs = DVector::from_fn(dim, |r, _| {
        if r < k {
            prep.xty[support[r]] - 0.5 * base[support[r]] * sign[r]
        } else {
            // Aim just inside the ball so rounding cannot leave it.
            equality.map_or(0.0, |bound| bound * (1.0 - 1e-12))
        }
    });
    let sol = lhs.lu().solve(&rhs)?;
    let nu = if equality.is_some() { sol[k] } else { 0.0 };
    if !(nu >= 0.0) || (0..k).any(|i| !(sol[i] * sign[i] > 0.0)) {
        return None;
    }
    let mut b = vec![0.0; prep.p()];
    for (i, j) in support.iter().enumerate() {
        b[*j] = sol[i];
    }
    if let Some(bound) = ball {
        if original_ball_norm(prep, ball_weight, &b) > bound {
            return None;
        }
    }
    let pen: Vec<f64> = base.iter().zip(ball_weight).map(|(b, c)| b + nu * c).collect();
    let gb = &prep.gram * DVector::from_column_slice(&b);
    let candidate = CdState { q: (0..prep.p()).map(|j| prep.xty[j] - gb[j]).collect(), b };
    if kkt_residual(prep, &candidate, &pen, nonneg) > 0.1 * opts.kkt_tol
        || penalised_objective(prep, &candidate.b, base) > penalised_objective(prep, &state.b, base)
    {
        return None;
    }
    *state = candidate;
    Some(nu)
}

fn coordinate_descent(
    prep: &Prepared,
    state: &mut CdState,
    pen: &[f64],
    nonneg: &[bool],
    opts: &SolverOptions,
) -> CdOutcome {
    let p = prep.p();
    let unit: Vec<f64> = (0..p)
        .map(|j| (prep.gram[(j, j)] / prep.rows as f64).sqrt())
        .collect();
    let mut last_obj = if cfg!(debug_assertions) {
        penalised_objective(prep, &state.b, pen)
    } else {
        0.0
    };
    let mut max_change = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        max_change = 0.0;
        for j in 0..p {
            let old = state.b[j];
            let new = if prep.frozen[j] || !pen[j].is_finite() {
                0.0
            } else {
                let gjj = prep.gram[(j, j)];
                let rho = state.q[j] + gjj * old;
                let half = 0.5 * pen[j];
                if nonneg[j] {
                    (rho - half).max(0.0) / gjj
                } else {
                    soft_threshold(rho, half) / gjj
                }
            };
            let delta = new - old;
            if delta != 0.0 {
                state.b[j] = new;
                let col = prep.gram.column(j);
                for (qk, gk) in state.q.iter_mut().zip(col.iter()) {
                    *qk -= delta * gk;
                }
                max_change = max_change.max(delta.abs() * unit[j]);
            }
        }
        if cfg!(debug_assertions) {
            let obj = penalised_objective(prep, &state.b, pen);
            debug_assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "objective increased from {last_obj} to {obj}"
            );
            last_obj = obj;
        }
        // Ill-conditioned problems creep for many sweeps; past the first
        // KKT_CHECK_PERIOD sweeps every sweep is followed by an active-set polish.
        let polishing = sweep >= KKT_CHECK_PERIOD;
        if max_change < opts.tol || polishing {
            // Refresh q to shed accumulated rounding before the KKT check.
            let bv = DVector::from_column_slice(&state.b);
            let gb = &prep.gram * bv;
            for (k, qk) in state.q.iter_mut().enumerate() {
                *qk = prep.xty[k] - gb[k];
            }
            let certified = kkt_residual(prep, state, pen, nonneg) <= 0.1 * opts.kkt_tol
                || (polishing && polish(prep, state, pen, nonneg, opts));
            if certified {
                return CdOutcome {
                    sweeps: sweep,
                    max_change,
                    converged: true,
                };
            }
        }
    }
    CdOutcome {
        sweeps: opts.max_sweeps,
        max_change,
        converged: false,
    }
}

/// Solves one lambda, handling the l1 ball by multiplier bisection.
fn solve_point(
    prep: &Prepared,
    state: &mut CdState,
    lambda: f64,
    psi: &[f64],
    constraints: &ConstraintSpec,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    let p = prep.p();
    let base: Vec<f64> = psi.iter().map(|s| lambda * s).collect();
    let ball_weight: Vec<f64> = match &constraints.l1_ball {
        Some(ball) => (0..p)
            .map(|j| if ball.mask[j] { 1.0 / prep.scale[j] } else { 0.0 })
            .collect(),
        None => vec![0.0; p],
    };
    let ball_norm = |b: &[f64]| -> f64 { original_ball_norm(prep, &ball_weight, b) };
    let penalties = |mu: f64| -> Vec<f64> {
        base.iter()
            .zip(&ball_weight)
            .map(|(b, c)| if *c > 0.0 { b + mu * c } else { *b })
            .collect()
    };

    let mut total_sweeps = 0;
    let mut run = |state: &mut CdState, pen: &[f64]| -> Result<()> {
        let out = coordinate_descent(prep, state, pen, &constraints.nonneg, opts);
        total_sweeps += out.sweeps;
        if out.converged {
            Ok(())
        } else {
            let (coef, _) = prep.to_original(&state.b);
            Err(Error::Convergence {
                lambda,
                sweeps: out.sweeps,
                max_change: out.max_change,
                kkt: kkt_residual(prep, state, pen, &constraints.nonneg),
                last_iterate: coef,
            })
        }
    };

    let mut mu = 0.0;
    let mut pen = penalties(0.0);
    run(state, &pen)?;
    if let Some(ball) = &constraints.l1_ball {
        if ball_norm(&state.b) > ball.bound {
            // Bracket: grow the multiplier until the solution is inside the ball.
            let scale_hint = (0..p)
                .filter(|j| ball_weight[*j] > 0.0)
                .map(|j| 2.0 * prep.xty[j].abs() / ball_weight[j])
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            let excess = |b: &[f64]| ball_norm(b) - ball.bound;
            let mut lo = 0.0;
            let mut f_lo = excess(&state.b);
            let mut hi = 1e-3 * scale_hint;
            let mut hi_state = CdState { b: state.b.clone(), q: state.q.clone() };
            let mut f_hi;
            loop {
                pen = penalties(hi);
                run(&mut hi_state, &pen)?;
                f_hi = excess(&hi_state.b);
                if f_hi <= 0.0 {
                    break;
                }
                lo = hi;
                f_lo = f_hi;
                hi *= 4.0;
            }
            // Illinois regula falsi on the monotone excess; the feasible end
            // `hi` is kept and returned.
            let mut trial = CdState { b: hi_state.b.clone(), q: hi_state.q.clone() };
            let mut side = 0i8;
            for _ in 0..200 {
                if f_hi >= -BALL_TOL * ball.bound || hi - lo <= 1e-14 * hi {
                    break;
                }
                let mut mid = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                if !(mid > lo && mid < hi) {
                    mid = 0.5 * (lo + hi);
                }
                pen = penalties(mid);
                run(&mut trial, &pen)?;
                let f_mid = excess(&trial.b);
                if f_mid <= 0.0 {
                    hi = mid;
                    f_hi = f_mid;
                    hi_state.b.clone_from(&trial.b);
                    hi_state.q.clone_from(&trial.q);
                    if side == -1 {
                        f_lo *= 0.5;
                    }
                    side = -1;
                } else {
                    lo = mid;
                    f_lo = f_mid;
                    if side == 1 {
                        f_hi *= 0.5;
                    }
                    side = 1;
                }
            }
            mu = hi;
            pen = penalties(hi);
            *state = hi_state;
        }
    }

    let base_pen = penalties(0.0);
    let bound = constraints.l1_ball.as_ref().map(|b| b.bound);
    if let Some(nu) = refine_face(prep, state, &base_pen, &ball_weight, bound, mu > 0.0, &constraints.nonneg, opts) {
        mu = nu;
        pen = penalties(mu);
    }
    if let Some(ball) = &constraints.l1_ball {
        debug_assert!(ball_norm(&state.b) <= ball.bound);
    }
    let objective = penalised_objective(prep, &state.b, &base_pen);
    let kkt = kkt_residual(prep, state, &pen, &constraints.nonneg);
    let (coef, intercept) = prep.to_original(&state.b);
    Ok(LassoFit {
        lambda,
        coef,
        intercept,
        objective,
        kkt_violation: kkt,
        n_iter: total_sweeps,
        ball_multiplier: mu,
    })
}

fn resolve_grid(prep: &Prepared, penalty: &PenaltySpec) -> Result<Vec<f64>> {
    match &penalty.lambda_grid {
        LambdaGrid::Explicit(v) => {
            if v.is_empty() {
                return Err(Error::invalid("lambda grid is empty"));
            }
            if v.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                return Err(Error::invalid("lambda values must be finite and nonnegative"));
            }
            if v.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::invalid("lambda grid must be strictly descending"));
            }
            Ok(v.clone())
        }
        LambdaGrid::Auto { count, min_ratio } => {
            if *count == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                return Err(Error::invalid("automatic grid needs count >= 1 and 0 < min_ratio < 1"));
            }
            let lmax = prep.lambda_max(&penalty.psi).max(1e-300);
            Ok(log_grid(lmax, *min_ratio, *count))
        }
    }
}

/// `count` log-spaced values from `lmax` down to `min_ratio * lmax`.
pub fn log_grid(lmax: f64, min_ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lmax];
    }
    let step = min_ratio.ln() / (count - 1) as f64;
    (0..count).map(|i| lmax * (step * i as f64).exp()).collect()
}

/// Smallest lambda at which every penalised coefficient is zero:
/// `max_j 2 |A_j' y| / psi_j` on the centred, standardised problem.
pub fn lambda_max(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    psi: &[f64],
    opts: &SolverOptions,
) -> Result<f64> {
    Ok(Prepared::new(design, response, opts)?.lambda_max(psi))
}

fn validate_penalty(p: usize, penalty: &PenaltySpec) -> Result<()> {
    if penalty.psi.len() != p {
        return Err(Error::invalid(format!(
            "penalty has {} weights, design has {p} columns",
            penalty.psi.len()
        )));
    }
    if penalty.psi.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("penalty weights must be nonnegative"));
    }
    Ok(())
}

fn path_on(
    prep: &Prepared,
    lambdas: &[f64],
    penalty: &PenaltySpec,
    constraints: &ConstraintSpec,
    opts: &SolverOptions,
) -> Result<Vec<LassoFit>> {
    let mut state = CdState::zero(prep);
    lambdas
        .iter()
        .map(|l| solve_point(prep, &mut state, *l, &penalty.psi, constraints, opts))
        .collect()
}

/// Warm-started coordinate-descent solutions along the lambda path.
pub fn solve_path(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &PenaltySpec,
    constraints: &ConstraintSpec,
    opts: &SolverOptions,
) -> Result<Vec<LassoFit>> {
    let p = design.ncols();
    validate_penalty(p, penalty)?;
    constraints.check(p)?;
    let prep = Prepared::new(design, response, opts)?;
    let lambdas = resolve_grid(&prep, penalty)?;
    path_on(&prep, &lambdas, penalty, constraints, opts)
}

/// Prior coefficients for adaptive weights: OLS when well posed, ridge otherwise.
pub fn prior_estimate(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<Vec<f64>> {
    prior_estimate_detail(design, response).map(|(b, _)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Ols,
    Ridge,
}

pub fn prior_estimate_detail(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<(Vec<f64>, PriorKind)> {
    let (rows, p) = design.shape();
    if rows < 2 {
        return Err(Error::DegenerateInput(format!("prior estimation needs at least 2 rows, got {rows}")));
    }
    if response.len() != rows {
        return Err(Error::invalid("response length does not match design"));
    }
    if design.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInput("design matrix is identically zero".into()));
    }
    let gram = design.tr_mul(design);
    let rhs = design.tr_mul(response);
    let mut kind = PriorKind::Ridge;
    if p < rows {
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min > 0.0 && max / min < OLS_CONDITION_LIMIT {
            kind = PriorKind::Ols;
        }
    }
    let mut normal = gram.clone();
    if kind == PriorKind::Ridge {
        let delta = RIDGE_DELTA * gram.diagonal().mean();
        for j in 0..p {
            normal[(j, j)] += delta;
        }
    }
    let beta = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => normal
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateInput("normal matrix is singular".into()))?,
    };
    Ok((beta.as_slice().to_vec(), kind))
}

/// Result of K-fold cross-validation over the lambda path.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean held-out squared error per lambda.
    pub cv_error: Vec<f64>,
    pub best_index: usize,
    pub best_lambda: f64,
    /// Refit on all rows at `best_lambda`.
    pub fit: LassoFit,
    pub folds: usize,
}

/// Random fold labels `0..folds` with sizes differing by at most one.
pub fn fold_assignment<R: Rng + ?Sized>(rows: usize, folds: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(rng);
    let mut labels = vec![0; rows];
    for (pos, row) in order.into_iter().enumerate() {
        labels[row] = pos % folds;
    }
    labels
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// K-fold cross-validation; the smallest mean held-out error wins, ties going to
/// the larger lambda.
pub fn cross_validate<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &PenaltySpec,
    constraints: &ConstraintSpec,
    folds: usize,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<CvResult> {
    let (rows, p) = design.shape();
    if folds < 2 {
        return Err(Error::invalid(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if rows < folds {
        return Err(Error::invalid(format!("{rows} rows cannot be split into {folds} folds")));
    }
    validate_penalty(p, penalty)?;
    constraints.check(p)?;
    let full = Prepared::new(design, response, opts)?;
    let lambdas = resolve_grid(&full, penalty)?;
    let labels = fold_assignment(rows, folds, rng);

    let mut sq_err = vec![0.0; lambdas.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..rows).filter(|i| labels[*i] != fold).collect();
        let test: Vec<usize> = (0..rows).filter(|i| labels[*i] == fold).collect();
        let xt = select_rows(design, &train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|i| response[*i]));
        let xv = select_rows(design, &test);
        let prep = Prepared::new(&xt, &yt, opts)?;
        let path = path_on(&prep, &lambdas, penalty, constraints, opts)?;
        for (l, fit) in path.iter().enumerate() {
            let pred = fit.predict(&xv);
            sq_err[l] += test
                .iter()
                .zip(pred.iter())
                .map(|(i, yhat)| (response[*i] - yhat).powi(2))
                .sum::<f64>();
        }
    }
    let cv_error: Vec<f64> = sq_err.into_iter().map(|s| s / rows as f64).collect();
    let mut best_index = 0;
    for (l, e) in cv_error.iter().enumerate() {
        if *e < cv_error[best_index] {
            best_index = l;
        }
    }
    let refit = path_on(&full, &lambdas[..=best_index], penalty, constraints, opts)?;
    let fit = refit.into_iter().last().expect("non-empty path prefix");
    Ok(CvResult {
        best_lambda: lambdas[best_index],
        lambdas,
        cv_error,
        best_index,
        fit,
        folds,
    })
}

/// Adaptive-lasso settings shared by both estimation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub gamma: f64,
    pub folds: usize,
    pub lambda_grid: LambdaGrid,
    pub solver: SolverOptions,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            gamma: 1.0,
            folds: 10,
            lambda_grid: LambdaGrid::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveFit {
    /// Prior coefficients on the standardised scale.
    pub prior: Vec<f64>,
    pub prior_kind: PriorKind,
    pub penalty: PenaltySpec,
    pub cv: CvResult,
}

/// Prior estimate on the standardised problem, adaptive weights, then
/// cross-validated path.
pub fn adaptive_lasso_cv<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    constraints: &ConstraintSpec,
    config: &AdaptiveConfig,
    rng: &mut R,
) -> Result<AdaptiveFit> {
    let prep = Prepared::new(design, response, &config.solver)?;
    let (prior, prior_kind) = standardized_prior(&prep, design, response, &config.solver)?;
    let mut penalty = PenaltySpec::adaptive(&prior, config.gamma, config.lambda_grid.clone())?;
    for (psi, frozen) in penalty.psi.iter_mut().zip(&prep.frozen) {
        if *frozen {
            *psi = f64::INFINITY;
        }
    }
    let cv = cross_validate(
        design,
        response,
        &penalty,
        constraints,
        config.folds,
        &config.solver,
        rng,
    )?;
    Ok(AdaptiveFit {
        prior,
        prior_kind,
        penalty,
        cv,
    })
}

fn standardized_prior(
    prep: &Prepared,
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, PriorKind)> {
    let (rows, p) = design.shape();
    let active: Vec<usize> = (0..p).filter(|j| !prep.frozen[*j]).collect();
    if active.is_empty() {
        return Ok((vec![0.0; p], PriorKind::Ols));
    }
    let a = DMatrix::from_fn(rows, active.len(), |i, jj| {
        let j = active[jj];
        let centred = design[(i, j)] - prep.x_mean[j];
        centred / prep.scale[j]
    });
    let y = if opts.fit_intercept {
        response.add_scalar(-prep.y_mean)
    } else {
        response.clone()
    };
    let (b, kind) = prior_estimate_detail(&a, &y)?;
    let mut prior = vec![0.0; p];
    for (jj, j) in active.into_iter().enumerate() {
        prior[j] = b[jj];
    }
    Ok((prior, kind))
}
