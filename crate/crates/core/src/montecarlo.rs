//! Monte Carlo study of weight recovery over scheme, strength, template size
//! and replication count.
//!
//! Every cell sharing a scheme and strength sees the same simulated datasets
//! (iteration `t` uses the same seed), so comparisons across `m` and `r` are
//! paired.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{stream_seed, two_step_fit, EstimatorConfig};
use crate::lattice::{Lattice, NeighborhoodTemplate};
use crate::metrics::{mae, recovery_frequency, support_stats, FrequencyMap, ZERO_TOL};
use crate::resample::replication_counts;
use crate::simulate::{simulate_dataset, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RMode {
    Min,
    Med,
    Max,
    Explicit(usize),
}

impl RMode {
    pub fn resolve(&self, n: usize, m: usize) -> Result<usize> {
        let (lo, med, hi) = replication_counts(n, m)?;
        Ok(match self {
            RMode::Min => lo,
            RMode::Med => med,
            RMode::Max => hi,
            RMode::Explicit(r) => *r,
        })
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(RMode::Min),
            "med" => Ok(RMode::Med),
            "max" => Ok(RMode::Max),
            other => other
                .parse()
                .map(RMode::Explicit)
                .map_err(|_| Error::invalid(format!("r mode must be min, med, max or an integer, got {other:?}"))),
        }
    }
}

impl fmt::Display for RMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RMode::Min => f.write_str("min"),
            RMode::Med => f.write_str("med"),
            RMode::Max => f.write_str("max"),
            RMode::Explicit(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCell {
    pub scheme: WeightScheme,
    pub m: usize,
    pub r_mode: RMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    /// Lattice side; the lattice is `side x side`.
    pub side: usize,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Template size, replications and seed are overridden per cell and iteration.
    pub estimator: EstimatorConfig,
    pub zero_tol: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            side: 25,
            beta: vec![1.0],
            sigma: 1.0,
            iterations: 100,
            seed: 0,
            estimator: EstimatorConfig::default(),
            zero_tol: ZERO_TOL,
        }
    }
}

/// Per-iteration accuracy of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub mae_beta: f64,
    pub mae_w: f64,
    pub pi0: Option<f64>,
    pub pi1: Option<f64>,
    pub c_hat: f64,
    pub w_hat: Vec<f64>,
}

/// Averages over the successful iterations of one cell.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub cell: McCell,
    pub r: usize,
    pub iterations: usize,
    pub failures: usize,
    pub mae_beta: f64,
    pub mae_w: f64,
    pub pi0: Option<f64>,
    pub pi1: Option<f64>,
    pub mean_c: f64,
    pub frequency: Option<FrequencyMap>,
    pub errors: Vec<(usize, Error)>,
    pub per_iteration: Vec<IterationMetrics>,
}

/// Full study grid: two schemes, three strengths, two template sizes, three replication modes.
pub fn study_grid() -> Vec<McCell> {
    let mut cells = Vec::new();
    for scheme in [WeightScheme::Queen { c: 0.0 }, WeightScheme::EastSouthEast { c: 0.0 }] {
        for c in [0.5, 0.7, 0.9] {
            for m in [24, 48] {
                for r_mode in [RMode::Min, RMode::Med, RMode::Max] {
                    cells.push(McCell { scheme: scheme.with_c(c), m, r_mode });
                }
            }
        }
    }
    cells
}

/// Seed of the dataset for iteration `t`, shared by all cells with the same
/// scheme and strength.
pub fn dataset_seed(base: u64, scheme: &WeightScheme, t: usize) -> u64 {
    let mut key = 0xcbf2_9ce4_8422_2325u64;
    for b in scheme.name().bytes().chain(scheme.c().to_bits().to_le_bytes()) {
        key = (key ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    stream_seed(base ^ key, t as u64)
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn run_cell(cell: &McCell, config: &McConfig) -> Result<CellSummary> {
    if config.iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    let lattice = Lattice::new(config.side, config.side)?;
    let template = NeighborhoodTemplate::new(cell.m)?;
    let truth = cell.scheme.template_vector(&template)?;
    let r = cell.r_mode.resolve(lattice.n(), cell.m)?;
    let base = EstimatorConfig {
        m: cell.m,
        r1: r,
        ..config.estimator.clone()
    };
    base.validate()?;

    let outcomes: Vec<Result<IterationMetrics>> = (0..config.iterations)
        .into_par_iter()
        .map(|t| {
            let seed = dataset_seed(config.seed, &cell.scheme, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = simulate_dataset(&lattice, &cell.scheme, &config.beta, config.sigma, &mut rng)?;
            let fit = two_step_fit(&ds, &EstimatorConfig { seed: stream_seed(seed, 0), ..base.clone() })?;
            let eval = support_stats(&fit.w_hat, &truth, config.zero_tol)?;
            Ok(IterationMetrics {
                mae_beta: mae(&fit.beta_hat, &config.beta)?,
                mae_w: eval.mae,
                pi0: eval.specificity,
                pi1: eval.sensitivity,
                c_hat: fit.c_hat,
                w_hat: fit.w_hat,
            })
        })
        .collect();

    let mut per_iteration = Vec::new();
    let mut errors = Vec::new();
    for (t, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(m) => per_iteration.push(m),
            Err(e) if e.is_config() => return Err(e),
            Err(e) => errors.push((t, e)),
        }
    }
    let it = &per_iteration;
    let frequency = if it.is_empty() {
        None
    } else {
        let fits: Vec<Vec<f64>> = it.iter().map(|m| m.w_hat.clone()).collect();
        Some(recovery_frequency(&fits, &template, config.zero_tol)?)
    };
    Ok(CellSummary {
        cell: cell.clone(),
        r,
        iterations: config.iterations,
        failures: errors.len(),
        mae_beta: mean(it.iter().map(|m| m.mae_beta)).unwrap_or(f64::NAN),
        mae_w: mean(it.iter().map(|m| m.mae_w)).unwrap_or(f64::NAN),
        pi0: mean(it.iter().filter_map(|m| m.pi0)),
        pi1: mean(it.iter().filter_map(|m| m.pi1)),
        mean_c: mean(it.iter().map(|m| m.c_hat)).unwrap_or(f64::NAN),
        frequency,
        errors,
        per_iteration,
    })
}

pub fn run_grid(cells: &[McCell], config: &McConfig) -> Result<Vec<CellSummary>> {
    cells.iter().map(|c| run_cell(c, config)).collect()
}
