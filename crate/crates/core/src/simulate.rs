//! Spatial weight matrices and SAR data generation through the reduced form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NeighborhoodTemplate, Offset};

/// Generating pattern of a spatial weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    /// Eight cells sharing an edge or a vertex, each weighted `c / 8`.
    Queen { c: f64 },
    /// Four cells sharing an edge, each weighted `c / 4`.
    Rook { c: f64 },
    /// East and south-east neighbours, each weighted `c / 2`.
    EastSouthEast { c: f64 },
    /// Arbitrary weights over a template; the row strength is `sum(w)`.
    FromVector {
        template: NeighborhoodTemplate,
        w: Vec<f64>,
    },
}

const QUEEN: [Offset; 8] = [
    Offset::new(-1, -1),
    Offset::new(-1, 0),
    Offset::new(-1, 1),
    Offset::new(0, -1),
    Offset::new(0, 1),
    Offset::new(1, -1),
    Offset::new(1, 0),
    Offset::new(1, 1),
];
const ROOK: [Offset; 4] = [
    Offset::new(-1, 0),
    Offset::new(0, -1),
    Offset::new(0, 1),
    Offset::new(1, 0),
];
const EAST_SOUTH_EAST: [Offset; 2] = [Offset::new(0, 1), Offset::new(1, 1)];

impl WeightScheme {
    /// Contiguity scheme from its name (`queen`, `rook` or `ese`), validated.
    pub fn from_name(name: &str, c: f64) -> Result<WeightScheme> {
        let scheme = match name {
            "queen" => WeightScheme::Queen { c },
            "rook" => WeightScheme::Rook { c },
            "ese" => WeightScheme::EastSouthEast { c },
            other => {
                return Err(Error::invalid(format!(
                    "unknown weight scheme {other:?}; expected queen, rook or ese"
                )))
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Queen { .. } => "queen",
            WeightScheme::Rook { .. } => "rook",
            WeightScheme::EastSouthEast { .. } => "ese",
            WeightScheme::FromVector { .. } => "vector",
        }
    }

    /// Row-sum strength of the scheme.
    pub fn c(&self) -> f64 {
        match self {
            WeightScheme::Queen { c } | WeightScheme::Rook { c } | WeightScheme::EastSouthEast { c } => *c,
            WeightScheme::FromVector { w, .. } => w.iter().sum(),
        }
    }

    /// Same pattern with a different strength. Vector schemes are rescaled.
    pub fn with_c(&self, c: f64) -> WeightScheme {
        match self {
            WeightScheme::Queen { .. } => WeightScheme::Queen { c },
            WeightScheme::Rook { .. } => WeightScheme::Rook { c },
            WeightScheme::EastSouthEast { .. } => WeightScheme::EastSouthEast { c },
            WeightScheme::FromVector { template, w } => {
                let s: f64 = w.iter().sum();
                let scale = if s > 0.0 { c / s } else { 0.0 };
                WeightScheme::FromVector {
                    template: template.clone(),
                    w: w.iter().map(|v| v * scale).collect(),
                }
            }
        }
    }

    /// Offsets carrying weight and their share of the row strength (shares sum to one
    /// unless the scheme is null).
    pub fn pattern(&self) -> Vec<(Offset, f64)> {
        let equal = |offs: &[Offset]| {
            let share = 1.0 / offs.len() as f64;
            offs.iter().map(|o| (*o, share)).collect()
        };
        match self {
            WeightScheme::Queen { .. } => equal(&QUEEN),
            WeightScheme::Rook { .. } => equal(&ROOK),
            WeightScheme::EastSouthEast { .. } => equal(&EAST_SOUTH_EAST),
            WeightScheme::FromVector { template, w } => {
                let s: f64 = w.iter().sum();
                template
                    .offsets()
                    .iter()
                    .zip(w)
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(o, v)| (*o, v / s))
                    .collect()
            }
        }
    }

    /// Weight vector of an interior row expressed over `template`.
    pub fn template_vector(&self, template: &NeighborhoodTemplate) -> Result<Vec<f64>> {
        let c = self.c();
        let mut w = vec![0.0; template.m()];
        for (offset, share) in self.pattern() {
            let pos = template.position(offset).ok_or_else(|| {
                Error::invalid(format!(
                    "offset ({}, {}) of the {} scheme lies outside the m = {} template",
                    offset.drow,
                    offset.dcol,
                    self.name(),
                    template.m()
                ))
            })?;
            w[pos] = share * c;
        }
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        match self {
            WeightScheme::FromVector { template, w } => check_weight_vector(template, w),
            _ => {
                let c = self.c();
                if !(0.0..1.0).contains(&c) {
                    return Err(Error::ConstraintViolation(format!(
                        "dependence strength c must lie in [0, 1), got {c}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Sparse nonnegative weight matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeights {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseWeights {
    /// Builds from per-row `(column, weight)` lists. Zero weights are dropped.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::invalid(format!("expected {n} rows, got {}", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|(j, _)| *j);
            for (j, v) in row {
                if j >= n || j == i {
                    return Err(Error::invalid(format!("invalid entry ({i}, {j})")));
                }
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::ConstraintViolation(format!(
                        "weight ({i}, {j}) = {v} is not a finite nonnegative number"
                    )));
                }
                if v > 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(SparseWeights { n, row_ptr, cols, vals })
    }

    pub fn zeros(n: usize) -> Self {
        SparseWeights {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn max_col_sum(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for (j, v) in self.cols.iter().zip(&self.vals) {
            sums[*j] += v;
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum::<f64>()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Copy with every nonempty row scaled to sum to one.
    pub fn row_standardized(&self) -> SparseWeights {
        let mut out = self.clone();
        for i in 0..self.n {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let s: f64 = self.vals[a..b].iter().sum();
            if s > 0.0 {
                out.vals[a..b].iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }
}

fn pattern_rows(lattice: &Lattice, pattern: &[(Offset, f64)], c: f64, renormalize: bool) -> Vec<Vec<(usize, f64)>> {
    (0..lattice.n())
        .map(|i| {
            let present: Vec<(usize, f64)> = pattern
                .iter()
                .filter_map(|(o, share)| lattice.shift(i, *o).map(|j| (j, *share)))
                .collect();
            let mass: f64 = present.iter().map(|(_, s)| s).sum();
            if renormalize && mass > 0.0 {
                present.into_iter().map(|(j, s)| (j, c * s / mass)).collect()
            } else {
                present.into_iter().map(|(j, s)| (j, c * s)).collect()
            }
        })
        .collect()
}

/// Weight matrix of a scheme. Contiguity schemes are renormalised on border rows
/// so that every row with at least one neighbour sums to `c`.
pub fn build_weights(lattice: &Lattice, scheme: &WeightScheme) -> Result<SparseWeights> {
    scheme.validate()?;
    if let WeightScheme::FromVector { template, w } = scheme {
        return weights_from_vector(lattice, template, w);
    }
    let rows = pattern_rows(lattice, &scheme.pattern(), scheme.c(), true);
    SparseWeights::from_rows(lattice.n(), rows)
}

/// Row-standardised (unit row sum) base matrix of a contiguity scheme, as used by
/// the maximum-likelihood benchmark.
pub fn base_weights(lattice: &Lattice, scheme: &WeightScheme) -> Result<SparseWeights> {
    let rows = pattern_rows(lattice, &scheme.pattern(), 1.0, true);
    SparseWeights::from_rows(lattice.n(), rows)
}

fn check_weight_vector(template: &NeighborhoodTemplate, w: &[f64]) -> Result<()> {
    if w.len() != template.m() {
        return Err(Error::invalid(format!(
            "weight vector has length {}, template has m = {}",
            w.len(),
            template.m()
        )));
    }
    if let Some(v) = w.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::ConstraintViolation(format!(
            "weights must be finite and nonnegative, found {v}"
        )));
    }
    let norm: f64 = w.iter().sum();
    if norm >= 1.0 {
        return Err(Error::ConstraintViolation(format!(
            "weight vector l1 norm must be below 1, got {norm}"
        )));
    }
    Ok(())
}

/// Exchangeable weight matrix placing `w` over every site's template neighbours.
/// Neighbours falling outside the grid are dropped without renormalisation.
pub fn weights_from_vector(
    lattice: &Lattice,
    template: &NeighborhoodTemplate,
    w: &[f64],
) -> Result<SparseWeights> {
    check_weight_vector(template, w)?;
    let pattern: Vec<(Offset, f64)> = template.offsets().iter().copied().zip(w.iter().copied()).collect();
    SparseWeights::from_rows(lattice.n(), pattern_rows(lattice, &pattern, 1.0, false))
}

/// `n x k` matrix of iid standard normal regressors.
pub fn generate_design<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, k);
    // Column-major fill so a column does not depend on k.
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    x
}

const SOLVE_REL_TOL: f64 = 1e-12;
const SOLVE_MAX_SWEEPS: usize = 20_000;

/// Solves `(I - W) y = b` by Gauss-Seidel sweeps.
///
/// Converges whenever every row sum of `W` is below one. Returns a numerical error
/// if the relative residual does not reach `1e-12` within the sweep budget.
pub fn solve_spatial(w: &SparseWeights, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = w.n();
    if b.len() != n {
        return Err(Error::invalid(format!("rhs length {} != {n}", b.len())));
    }
    let mut y = b.clone();
    let scale = b.amax().max(f64::MIN_POSITIVE);
    let mut residual = f64::INFINITY;
    for sweep in 0..SOLVE_MAX_SWEEPS {
        for i in 0..n {
            let acc: f64 = w.row(i).map(|(j, v)| v * y[j]).sum();
            y[i] = b[i] + acc;
        }
        if sweep % 4 == 3 || n <= 64 {
            residual = spatial_residual(w, &y, b);
            if !residual.is_finite() {
                break;
            }
            if residual <= SOLVE_REL_TOL * scale.max(y.amax()) {
                return Ok(y);
            }
        }
    }
    Err(Error::Numerical {
        reason: "spatial system (I - W) y = b did not converge; I - W may be singular".into(),
        residual,
        max_row_sum: w.max_row_sum(),
    })
}

/// `max_i |((I - W) y - b)_i|`.
pub fn spatial_residual(w: &SparseWeights, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let wy = w.mul_vec(y);
    (0..y.len())
        .map(|i| (y[i] - wy[i] - b[i]).abs())
        .fold(0.0, f64::max)
}

/// Draw of a SAR process with its innovation vector.
#[derive(Debug, Clone)]
pub struct SarSample {
    pub y: DVector<f64>,
    pub epsilon: DVector<f64>,
}

/// Draws `Y = (I - W)^{-1} (X beta + eps)` with `eps ~ N(0, sigma^2)`.
pub fn simulate_sar<R: Rng + ?Sized>(
    w: &SparseWeights,
    x: &DMatrix<f64>,
    beta: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<SarSample> {
    if x.nrows() != w.n() || x.ncols() != beta.len() {
        return Err(Error::invalid(format!(
            "design is {}x{}, expected {}x{}",
            x.nrows(),
            x.ncols(),
            w.n(),
            beta.len()
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    let epsilon = DVector::from_iterator(w.n(), (0..w.n()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)));
    let rhs = x * DVector::from_column_slice(beta) + &epsilon;
    let y = solve_spatial(w, &rhs)?;
    Ok(SarSample { y, epsilon })
}

/// Parameters used to generate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub scheme: WeightScheme,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// Observed lattice data, optionally with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct SarDataset {
    pub lattice: Lattice,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub truth: Option<GroundTruth>,
}

impl SarDataset {
    pub fn new(lattice: Lattice, y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.len() != lattice.n() || x.nrows() != lattice.n() {
            return Err(Error::invalid(format!(
                "lattice has {} sites but y has {} and x has {} rows",
                lattice.n(),
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::invalid("at least one regressor is required"));
        }
        Ok(SarDataset { lattice, y, x, truth: None })
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// True weight vector over `template`, when the generating scheme is known.
    pub fn true_w(&self, template: &NeighborhoodTemplate) -> Option<Result<Vec<f64>>> {
        self.truth.as_ref().map(|t| t.scheme.template_vector(template))
    }
}

/// Simulates a complete dataset: standard normal regressors, scheme weights and SAR response.
pub fn simulate_dataset<R: Rng + ?Sized>(
    lattice: &Lattice,
    scheme: &WeightScheme,
    beta: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<SarDataset> {
    let w = build_weights(lattice, scheme)?;
    let x = generate_design(lattice.n(), beta.len(), rng);
    let sample = simulate_sar(&w, &x, beta, sigma, rng)?;
    let mut ds = SarDataset::new(*lattice, sample.y, x)?;
    ds.truth = Some(GroundTruth {
        scheme: scheme.clone(),
        beta: beta.to_vec(),
        sigma,
    });
    Ok(ds)
}
