//! Ranking metrics for outlier scores: ROC AUC and precision at k.

use serde::{Deserialize, Serialize};

use crate::error::{OdefsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub precision_at_k: f64,
    pub k: usize,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(OdefsError::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(OdefsError::Metric("scores must be finite".into()));
    }
    Ok(())
}

/// Probability that a random outlier outscores a random inlier, ties
/// counting one half. Computed from mid-ranks (Mann-Whitney U).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(OdefsError::Metric(
            "AUC needs at least one outlier and one inlier".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 2 * rank over positives keeps mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share the mid-rank (start + 1 + end) / 2
        let twice_mid = (start + 1 + end) as u128;
        let group_pos = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_mid * group_pos;
        start = end;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Fraction of labelled outliers among the `k` highest scores. `k`
/// defaults to the number of outliers; ties at the cut go to the lower
/// object index.
pub fn precision_at_k(scores: &[f64], labels: &[bool], k: Option<usize>) -> Result<f64> {
    check(scores, labels)?;
    let k = match k {
        Some(k) => k,
        None => labels.iter().filter(|&&l| l).count(),
    };
    if k == 0 || k > scores.len() {
        return Err(OdefsError::Metric(format!(
            "k must be in 1..={}, got {k}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let hits = order[..k].iter().filter(|&&i| labels[i]).count();
    Ok(hits as f64 / k as f64)
}

pub fn report(scores: &[f64], labels: &[bool], k: Option<usize>) -> Result<MetricReport> {
    let k = k.unwrap_or_else(|| labels.iter().filter(|&&l| l).count());
    Ok(MetricReport {
        auc: auc(scores, labels)?,
        precision_at_k: precision_at_k(scores, labels, Some(k))?,
        k,
    })
}

/// Descending-score rank (1 = most outlying), ties by lower index.
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rank = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3], &[true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.8, 0.3], &[true, false, false]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(auc(&[0.5, 0.4], &[true, true]).is_err());
        assert!(auc(&[0.5], &[true, false]).is_err());
    }

    #[test]
    fn precision_examples() {
        let labels = [false, true, false, true, false];
        assert_eq!(precision_at_k(&[0.1, 0.9, 0.2, 0.8, 0.3], &labels, None).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[0.9, 0.1, 0.8, 0.2, 0.3], &labels, None).unwrap(), 0.0);
        assert_eq!(precision_at_k(&[0.9, 0.1, 0.8, 0.2, 0.3], &labels, Some(5)).unwrap(), 0.4);
        // tie at the cut: lower index wins
        assert_eq!(precision_at_k(&[0.5, 0.5, 0.0, 0.0, 0.0], &labels, Some(1)).unwrap(), 0.0);
        assert!(precision_at_k(&[0.1; 5], &labels, Some(0)).is_err());
        assert!(precision_at_k(&[0.1; 5], &labels, Some(6)).is_err());
    }

    #[test]
    fn ranks_are_one_based_descending() {
        assert_eq!(ranks(&[0.2, 0.9, 0.2, 0.5]), vec![3, 1, 4, 2]);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_enumeration(
            data in prop::collection::vec((0u8..12, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let got = auc(&scores, &labels).unwrap();
            prop_assert!((got - brute_auc(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn metrics_invariant_under_increasing_maps(
            data in prop::collection::vec((0.0f64..10.0, any::<bool>()), 2..100)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&mapped, &labels).unwrap());
            prop_assert_eq!(
                precision_at_k(&scores, &labels, None).unwrap(),
                precision_at_k(&mapped, &labels, None).unwrap()
            );
        }
    }
}
