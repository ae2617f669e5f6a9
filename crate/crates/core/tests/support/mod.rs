#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Small constrained lasso problem: minimise `||y - Xb||^2 + sum pen_j |b_j|`
/// subject to sign constraints and an optional l1 bound on masked coordinates.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub psi: Vec<f64>,
    pub nonneg: Vec<bool>,
    pub ball: Option<(Vec<bool>, f64)>,
    pub intercept: bool,
}

impl Instance {
    pub fn random<R: Rng>(rng: &mut R) -> Instance {
        let p = rng.random_range(1..=8);
        let n = rng.random_range(p + 5..=40);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth: Vec<f64> = (0..p)
            .map(|_| if rng.random_bool(0.5) { rng.random_range(-2.0..2.0) } else { 0.0 })
            .collect();
        let y = &x * DVector::from_vec(truth) + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let psi = (0..p).map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.5..2.0) }).collect();
        let nonneg = (0..p).map(|_| rng.random_bool(0.4)).collect();
        let ball = rng.random_bool(0.6).then(|| {
            let mask: Vec<bool> = (0..p).map(|_| rng.random_bool(0.6)).collect();
            (mask, rng.random_range(0.05..2.0))
        });
        Instance { x, y, psi, nonneg, ball, intercept: rng.random_bool(0.5) }
    }

    /// Design and response after removing column and response means when an intercept is fitted.
    pub fn centred(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        if self.intercept {
            for mut c in x.column_iter_mut() {
                let m = c.mean();
                c.add_scalar_mut(-m);
            }
            let m = y.mean();
            y.add_scalar_mut(-m);
        }
        (x, y)
    }

    pub fn objective(&self, b: &[f64], lambda: f64) -> f64 {
        let (x, y) = self.centred();
        let r = y - x * DVector::from_column_slice(b);
        r.norm_squared() + b.iter().zip(&self.psi).map(|(b, s)| lambda * s * b.abs()).sum::<f64>()
    }

    pub fn feasible(&self, b: &[f64], tol: f64) -> bool {
        let signs = b.iter().zip(&self.nonneg).all(|(b, nn)| !nn || *b >= -tol);
        let ball = self.ball.as_ref().is_none_or(|(mask, bound)| {
            b.iter().zip(mask).filter(|(_, m)| **m).map(|(b, _)| b.abs()).sum::<f64>() <= bound + tol
        });
        signs && ball
    }
}

/// Exact minimiser by enumeration of supports, sign patterns and ball activity.
/// On each face the restricted quadratic is solved in closed form; the global
/// minimum is the best sign-consistent, feasible face solution.
pub fn brute_force(inst: &Instance, lambda: f64) -> (Vec<f64>, f64) {
    let (x, y) = inst.centred();
    let p = x.ncols();
    let g = x.tr_mul(&x);
    let xty = x.tr_mul(&y);
    let mut best = (vec![0.0; p], inst.objective(&vec![0.0; p], lambda));
    let mut signs = vec![-1i8; p];
    loop {
        let support: Vec<usize> = (0..p).filter(|j| signs[*j] != 0).collect();
        let allowed = support.iter().all(|j| !(inst.nonneg[*j] && signs[*j] < 0));
        if allowed && !support.is_empty() {
            let k = support.len();
            let s: Vec<f64> = support.iter().map(|j| f64::from(signs[*j])).collect();
            let rhs: Vec<f64> = (0..k).map(|a| 2.0 * xty[support[a]] - lambda * inst.psi[support[a]] * s[a]).collect();
            let mut candidates = Vec::new();
            // Ball inactive.
            let gs = DMatrix::from_fn(k, k, |a, c| 2.0 * g[(support[a], support[c])]);
            if let Some(sol) = gs.clone().lu().solve(&DVector::from_vec(rhs.clone())) {
                candidates.push(sol.as_slice().to_vec());
            }
            // Ball active: sum over masked support of s_j b_j equals the bound.
            if let Some((mask, bound)) = &inst.ball {
                let a: Vec<f64> = (0..k).map(|i| if mask[support[i]] { s[i] } else { 0.0 }).collect();
                if a.iter().any(|v| *v != 0.0) {
                    let kkt = DMatrix::from_fn(k + 1, k + 1, |r, c| match (r < k, c < k) {
                        (true, true) => gs[(r, c)],
                        (true, false) => a[r],
                        (false, true) => a[c],
                        (false, false) => 0.0,
                    });
                    let mut b = rhs.clone();
                    b.push(*bound);
                    if let Some(sol) = kkt.lu().solve(&DVector::from_vec(b)) {
                        candidates.push(sol.as_slice()[..k].to_vec());
                    }
                }
            }
            for c in candidates {
                if c.iter().zip(&s).all(|(b, s)| b * s >= 0.0) {
                    let mut full = vec![0.0; p];
                    for (i, j) in support.iter().enumerate() {
                        full[*j] = c[i];
                    }
                    if inst.feasible(&full, 1e-12) {
                        let obj = inst.objective(&full, lambda);
                        if obj < best.1 {
                            best = (full, obj);
                        }
                    }
                }
            }
        }
        // Next sign pattern in {-1, 0, 1}^p.
        let mut i = 0;
        while i < p && signs[i] == 1 {
            signs[i] = -1;
            i += 1;
        }
        if i == p {
            break;
        }
        signs[i] += 1;
    }
    best
}
