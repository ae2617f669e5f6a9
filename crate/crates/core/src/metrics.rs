//! Accuracy of estimated weights and predictions.

use crate::error::{Error, Result};
use crate::lattice::NeighborhoodTemplate;

/// Default threshold below which an estimated weight counts as zero.
pub const ZERO_TOL: f64 = 1e-10;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty vectors"));
    }
    Ok(())
}

/// Mean absolute error `||a - b||_1 / len`.
pub fn mae(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(estimate, truth)?;
    Ok(estimate.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / estimate.len() as f64)
}

/// Root mean square error `||a - b||_2 / sqrt(len)`.
pub fn rmse(prediction: &[f64], observed: &[f64]) -> Result<f64> {
    same_len(prediction, observed)?;
    let ss: f64 = prediction.iter().zip(observed).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / prediction.len() as f64).sqrt())
}

/// Support recovery of one weight estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEval {
    pub mae: f64,
    /// Share of true zeros estimated as zero; `None` if the truth has no zeros.
    pub specificity: Option<f64>,
    /// Share of true non-zeros estimated as non-zero; `None` if the truth is all zero.
    pub sensitivity: Option<f64>,
    pub support_hat: Vec<bool>,
    pub support_true: Vec<bool>,
}

pub fn support_stats(estimate: &[f64], truth: &[f64], zero_tol: f64) -> Result<WeightEval> {
    same_len(estimate, truth)?;
    if !(zero_tol >= 0.0) {
        return Err(Error::invalid("zero tolerance must be nonnegative"));
    }
    let support_hat: Vec<bool> = estimate.iter().map(|v| v.abs() > zero_tol).collect();
    let support_true: Vec<bool> = truth.iter().map(|v| v.abs() > zero_tol).collect();
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (h, t) in support_hat.iter().zip(&support_true) {
        match (t, h) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(WeightEval {
        mae: mae(estimate, truth)?,
        specificity: ratio(tn, fp),
        sensitivity: ratio(tp, fn_),
        support_hat,
        support_true,
    })
}

/// How often each template cell was selected across a set of fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap {
    pub template: NeighborhoodTemplate,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl FrequencyMap {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|c| *c as f64 / self.total as f64).collect()
    }
}

pub fn recovery_frequency(
    fits: &[Vec<f64>],
    template: &NeighborhoodTemplate,
    zero_tol: f64,
) -> Result<FrequencyMap> {
    if fits.is_empty() {
        return Err(Error::invalid("no fits to count"));
    }
    let m = template.m();
    let mut counts = vec![0; m];
    for w in fits {
        if w.len() != m {
            return Err(Error::invalid(format!("weight vector of length {} for m = {m}", w.len())));
        }
        for (c, v) in counts.iter_mut().zip(w) {
            if v.abs() > zero_tol {
                *c += 1;
            }
        }
    }
    Ok(FrequencyMap {
        template: template.clone(),
        counts,
        total: fits.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::neighbor_template;
    use crate::simulate::WeightScheme;
    use proptest::prelude::*;

    #[test]
    fn mae_values() {
        let t = neighbor_template(24).unwrap();
        let w = WeightScheme::Queen { c: 0.5 }.template_vector(&t).unwrap();
        assert_eq!(mae(&w, &w).unwrap(), 0.0);
        let zero = vec![0.0; 24];
        assert!((mae(&zero, &w).unwrap() - 0.5 / 24.0).abs() < 1e-15);
        assert!((mae(&[0.4, 0.5], &[0.45, 0.45]).unwrap() - 0.05).abs() < 1e-15);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_values() {
        let y = [1.0, -2.0, 3.0, 0.5];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0; 4], &[0.0; 4]).unwrap(), 1.0);
        let shifted: Vec<f64> = y.iter().map(|v| v - 0.3).collect();
        assert!((rmse(&shifted, &y).unwrap() - 0.3).abs() < 1e-15);
        assert!(rmse(&[1.0], &[]).is_err());
    }

    #[test]
    fn support_values() {
        let t = neighbor_template(24).unwrap();
        let truth = WeightScheme::EastSouthEast { c: 0.9 }.template_vector(&t).unwrap();
        let zero = vec![0.0; 24];
        let e = support_stats(&zero, &truth, ZERO_TOL).unwrap();
        assert_eq!(e.specificity, Some(1.0));
        assert_eq!(e.sensitivity, Some(0.0));

        let exact = support_stats(&truth, &truth, ZERO_TOL).unwrap();
        assert_eq!((exact.specificity, exact.sensitivity), (Some(1.0), Some(1.0)));

        let east = t.position(crate::lattice::Offset::new(0, 1)).unwrap();
        let west = t.position(crate::lattice::Offset::new(0, -1)).unwrap();
        let mut est = vec![0.0; 24];
        est[east] = 0.4;
        est[west] = 0.1;
        let e = support_stats(&est, &truth, ZERO_TOL).unwrap();
        assert_eq!(e.sensitivity, Some(0.5));
        assert_eq!(e.specificity, Some(21.0 / 22.0));

        assert_eq!(support_stats(&[0.1], &[0.0], 0.0).unwrap().sensitivity, None);
        assert_eq!(support_stats(&[0.1], &[0.2], 0.0).unwrap().specificity, None);
    }

    #[test]
    fn frequency_counts() {
        let t = neighbor_template(8).unwrap();
        let full = vec![vec![0.1; 8]; 3];
        let f = recovery_frequency(&full, &t, ZERO_TOL).unwrap();
        assert_eq!(f.counts, vec![3; 8]);
        let empty = vec![vec![0.0; 8]; 3];
        assert_eq!(recovery_frequency(&empty, &t, ZERO_TOL).unwrap().counts, vec![0; 8]);
        let mut a = vec![0.0; 8];
        let mut b = vec![0.0; 8];
        a[1] = 0.2;
        b[5] = 0.3;
        let f = recovery_frequency(&[a, b], &t, ZERO_TOL).unwrap();
        assert_eq!(f.counts.iter().sum::<usize>(), 2);
        assert_eq!((f.counts[1], f.counts[5]), (1, 1));
        assert!(recovery_frequency(&[], &t, ZERO_TOL).is_err());
    }

    proptest! {
        #[test]
        fn mae_is_a_metric(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
            c in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let ab = mae(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - mae(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!(ab <= mae(&a, &c).unwrap() + mae(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn support_rates_scale_invariant(
            a in proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], 8),
            b in proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], 8),
            scale in 0.1f64..10.0,
        ) {
            let e = support_stats(&a, &b, 0.0).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v * scale).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * scale).collect();
            let s = support_stats(&sa, &sb, 0.0).unwrap();
            prop_assert_eq!(e.specificity, s.specificity);
            prop_assert_eq!(e.sensitivity, s.sensitivity);
            for v in [e.specificity, e.sensitivity].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn frequency_is_sum_of_indicators(
            fits in proptest::collection::vec(
                proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], 8), 1..20),
        ) {
            let t = neighbor_template(8).unwrap();
            let f = recovery_frequency(&fits, &t, ZERO_TOL).unwrap();
            for j in 0..8 {
                let direct = fits.iter().filter(|w| w[j] > ZERO_TOL).count();
                prop_assert_eq!(f.counts[j], direct);
                prop_assert!(f.counts[j] <= f.total);
            }
        }
    }
}
