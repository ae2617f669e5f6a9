//! Cross-sectional resampling: site selection and the design matrices of the
//! instrument stage and the full-model stage.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{exact_sqrt, interior_sites, window_indices, Lattice, NeighborhoodTemplate};
use crate::simulate::SarDataset;

/// Minimum replication count: ten folds of three observations.
pub const R_MIN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    FirstStep,
    SecondStep,
}

impl Stage {
    /// Border ring excluded from sampling at this stage.
    pub fn border_ring(&self, template: &NeighborhoodTemplate) -> usize {
        match self {
            Stage::FirstStep => template.ring(),
            // Every neighbour must itself carry a first-step prediction.
            Stage::SecondStep => 2 * template.ring(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SamplingMode {
    #[default]
    WithoutReplacement,
    WithReplacement,
}

/// Replication counts `(r_min, r_med, r_max)` for an `n`-site square lattice.
pub fn replication_counts(n: usize, m: usize) -> Result<(usize, usize, usize)> {
    let side = exact_sqrt(n).ok_or_else(|| Error::invalid(format!("n = {n} is not a perfect square")))?;
    let window = exact_sqrt(m + 1).ok_or_else(|| Error::invalid(format!("m + 1 = {} is not a perfect square", m + 1)))?;
    if window > side {
        return Err(Error::invalid(format!("template of size {m} does not fit a {side}x{side} grid")));
    }
    let r_max = (side - window).pow(2);
    if r_max < R_MIN {
        return Err(Error::invalid(format!(
            "grid too small: r_max = {r_max} is below the minimum of {R_MIN} replications"
        )));
    }
    Ok((R_MIN, (R_MIN + r_max) / 2, r_max))
}

/// Draws `r` sites from `eligible`.
pub fn sample_sites<R: Rng + ?Sized>(
    eligible: &[usize],
    r: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if r == 0 {
        return Err(Error::invalid("number of replications must be positive"));
    }
    match mode {
        SamplingMode::WithoutReplacement => {
            if r > eligible.len() {
                return Err(Error::invalid(format!(
                    "cannot draw {r} distinct sites from {} eligible sites",
                    eligible.len()
                )));
            }
            Ok(rand::seq::index::sample(rng, eligible.len(), r)
                .into_iter()
                .map(|i| eligible[i])
                .collect())
        }
        SamplingMode::WithReplacement => {
            if eligible.is_empty() {
                return Err(Error::invalid("no eligible sites to draw from"));
            }
            Ok((0..r).map(|_| eligible[rng.random_range(0..eligible.len())]).collect())
        }
    }
}

/// Sites sampled for one estimation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub sites: Vec<usize>,
    pub template: NeighborhoodTemplate,
    pub stage: Stage,
}

impl ResamplePlan {
    /// Checks that every site is eligible for the stage.
    pub fn new(lattice: &Lattice, sites: Vec<usize>, template: NeighborhoodTemplate, stage: Stage) -> Result<Self> {
        let ring = stage.border_ring(&template);
        for &s in &sites {
            if s >= lattice.n() {
                return Err(Error::invalid(format!("site {s} outside the lattice")));
            }
            if lattice.border_distance(s) < ring {
                let (row, col) = lattice.coords(s);
                return Err(Error::OutOfBounds { site: s, row, col });
            }
        }
        Ok(ResamplePlan { sites, template, stage })
    }

    /// Eligible sites for a stage, then a random draw of `r` of them.
    pub fn draw<R: Rng + ?Sized>(
        lattice: &Lattice,
        template: &NeighborhoodTemplate,
        stage: Stage,
        r: usize,
        mode: SamplingMode,
        rng: &mut R,
    ) -> Result<Self> {
        let eligible = eligible_sites(lattice, template, stage)?;
        let sites = sample_sites(&eligible, r, mode, rng)?;
        Ok(ResamplePlan {
            sites,
            template: template.clone(),
            stage,
        })
    }

    pub fn r(&self) -> usize {
        self.sites.len()
    }
}

pub fn eligible_sites(lattice: &Lattice, template: &NeighborhoodTemplate, stage: Stage) -> Result<Vec<usize>> {
    interior_sites(lattice, stage.border_ring(template))
}

/// Response and instruments at the sampled sites.
#[derive(Debug, Clone)]
pub struct FirstStepDesign {
    pub y: DVector<f64>,
    /// `r x k(m+1)`: own-site regressors, then neighbour-major blocks of `k`.
    pub z: DMatrix<f64>,
}

fn instrument_row(dataset: &SarDataset, site: usize, window: &[usize], out: &mut [f64]) {
    let k = dataset.k();
    for p in 0..k {
        out[p] = dataset.x[(site, p)];
    }
    for (nb, &j) in window.iter().enumerate() {
        for p in 0..k {
            out[k * (nb + 1) + p] = dataset.x[(j, p)];
        }
    }
}

pub fn build_first_step(dataset: &SarDataset, plan: &ResamplePlan) -> Result<FirstStepDesign> {
    if plan.stage != Stage::FirstStep {
        return Err(Error::Precondition("first-step design needs a first-step plan".into()));
    }
    let k = dataset.k();
    let l = k * (plan.template.m() + 1);
    let mut z = DMatrix::zeros(plan.r(), l);
    let mut row = vec![0.0; l];
    for (i, &s) in plan.sites.iter().enumerate() {
        let window = window_indices(&dataset.lattice, s, &plan.template)?;
        instrument_row(dataset, s, &window, &mut row);
        for (c, v) in row.iter().enumerate() {
            z[(i, c)] = *v;
        }
    }
    let y = DVector::from_iterator(plan.r(), plan.sites.iter().map(|s| dataset.y[*s]));
    Ok(FirstStepDesign { y, z })
}

/// First-step predictions of the endogenous response, one slot per site.
#[derive(Debug, Clone, PartialEq)]
pub struct EndogenousPrediction {
    pub values: Vec<Option<f64>>,
}

impl EndogenousPrediction {
    pub fn get(&self, site: usize) -> Option<f64> {
        self.values.get(site).copied().flatten()
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// `intercept + z(s)' theta` at every site whose template window is complete.
pub fn predict_endogenous(
    theta: &[f64],
    intercept: f64,
    dataset: &SarDataset,
    template: &NeighborhoodTemplate,
) -> Result<EndogenousPrediction> {
    let k = dataset.k();
    let l = k * (template.m() + 1);
    if theta.len() != l {
        return Err(Error::invalid(format!(
            "theta has length {}, expected l = k(m+1) = {l}",
            theta.len()
        )));
    }
    let lattice = &dataset.lattice;
    let mut values = vec![None; lattice.n()];
    let mut row = vec![0.0; l];
    if let Ok(sites) = interior_sites(lattice, template.ring()) {
        for s in sites {
            let window = window_indices(lattice, s, template)?;
            instrument_row(dataset, s, &window, &mut row);
            values[s] = Some(intercept + row.iter().zip(theta).map(|(z, t)| z * t).sum::<f64>());
        }
    }
    Ok(EndogenousPrediction { values })
}

/// Response, regressors and neighbour predictions at the sampled sites.
#[derive(Debug, Clone)]
pub struct SecondStepDesign {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    /// `r x m` neighbour predictions in template order.
    pub ybreve: DMatrix<f64>,
}

impl SecondStepDesign {
    /// `[X | Ybreve]`.
    pub fn combined(&self) -> DMatrix<f64> {
        let (r, k) = self.x.shape();
        let m = self.ybreve.ncols();
        DMatrix::from_fn(r, k + m, |i, j| if j < k { self.x[(i, j)] } else { self.ybreve[(i, j - k)] })
    }
}

/// Neighbour predictions of one site in template order.
pub fn neighbour_predictions(
    lattice: &Lattice,
    site: usize,
    template: &NeighborhoodTemplate,
    pred: &EndogenousPrediction,
) -> Result<Vec<f64>> {
    window_indices(lattice, site, template)?
        .into_iter()
        .map(|j| {
            pred.get(j).ok_or_else(|| {
                let (row, col) = lattice.coords(j);
                Error::Precondition(format!(
                    "no first-step prediction at neighbour ({row}, {col}) of site {site}"
                ))
            })
        })
        .collect()
}

pub fn build_second_step(
    dataset: &SarDataset,
    pred: &EndogenousPrediction,
    plan: &ResamplePlan,
) -> Result<SecondStepDesign> {
    if plan.stage != Stage::SecondStep {
        return Err(Error::Precondition("second-step design needs a second-step plan".into()));
    }
    let k = dataset.k();
    let m = plan.template.m();
    let r = plan.r();
    let mut x = DMatrix::zeros(r, k);
    let mut ybreve = DMatrix::zeros(r, m);
    for (i, &s) in plan.sites.iter().enumerate() {
        for p in 0..k {
            x[(i, p)] = dataset.x[(s, p)];
        }
        let nb = neighbour_predictions(&dataset.lattice, s, &plan.template, pred)?;
        for (j, v) in nb.into_iter().enumerate() {
            ybreve[(i, j)] = v;
        }
    }
    let y = DVector::from_iterator(r, plan.sites.iter().map(|s| dataset.y[*s]));
    Ok(SecondStepDesign { y, x, ybreve })
}
