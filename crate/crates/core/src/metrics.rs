//! Threshold-free ranking metrics.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub prc_auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(alloc::format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Argument("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, grouped into blocks of equal score.
fn tie_blocks(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match blocks.last_mut() {
            Some(b) if scores[b[0]] == scores[i] => b.push(i),
            _ => blocks.push(alloc::vec![i]),
        }
    }
    blocks
}

/// Mann–Whitney estimate of P(pos > neg) + ½P(tie), with exact integer
/// counting up to the final division.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes"));
    }
    // twice the number of (pos, neg) wins, ties counting 1
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = neg as u128;
    for block in tie_blocks(scores) {
        let p = block.iter().filter(|&&i| labels[i]).count() as u128;
        let n = block.len() as u128 - p;
        neg_below -= n;
        twice_wins += 2 * p * neg_below + p * n;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Average precision, with tied scores treated as one block.
pub fn prc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("PRC-AUC needs at least one positive"));
    }
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for block in tie_blocks(scores) {
        let p = block.iter().filter(|&&i| labels[i]).count();
        tp += p;
        seen += block.len();
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

pub fn evaluate(scores: &[f64], labels: &[bool]) -> Result<EvalReport> {
    let (positives, negatives) = check(scores, labels)?;
    Ok(EvalReport { roc_auc: roc_auc(scores, labels)?, prc_auc: prc_auc(scores, labels)?, positives, negatives })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec;

    fn brute_roc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn simple_cases() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(prc_auc(&[4.0, 3.0, 2.0, 1.0], &[true, true, false, false]).unwrap(), 1.0);
        let ap = prc_auc(&[5.0, 4.0, 3.0, 2.0, 1.0], &[false, false, false, false, true]).unwrap();
        assert!((ap - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(roc_auc(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(prc_auc(&[1.0, 2.0], &[false, false]), Err(Error::UndefinedMetric(_))));
        assert!(prc_auc(&[1.0, 2.0], &[true, true]).is_ok());
    }

    #[test]
    fn matches_pairwise_count() {
        let mut rng = SeededRng::new(4);
        for _ in 0..200 {
            let n = 2 + rng.below(30);
            let scores: Vec<f64> = (0..n).map(|_| rng.below(6) as f64).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
            labels[0] = true;
            labels[1] = false;
            assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_roc(&scores, &labels));
        }
    }

    #[test]
    fn complement_and_monotone_transform() {
        let mut rng = SeededRng::new(8);
        let scores: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let labels: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        assert!((roc_auc(&neg, &labels).unwrap() - (1.0 - a)).abs() < 1e-15);
        let exp: Vec<f64> = scores.iter().map(|&s| libm::exp(s) * 3.0 + 1.0).collect();
        assert_eq!(roc_auc(&exp, &labels).unwrap(), a);
    }

    #[test]
    fn random_scores_have_base_rate_precision() {
        let mut rng = SeededRng::new(12);
        let scores: Vec<f64> = (0..10000).map(|_| rng.uniform()).collect();
        let labels: Vec<bool> = (0..10000).map(|_| rng.uniform() < 0.1).collect();
        let p = labels.iter().filter(|&&l| l).count() as f64 / 1e4;
        assert!((prc_auc(&scores, &labels).unwrap() - p).abs() < 0.1);
    }

    #[test]
    fn ties_ignore_order() {
        let scores = vec![1.0, 2.0, 2.0, 2.0, 3.0, 0.5];
        let a = prc_auc(&scores, &[false, true, false, false, true, false]).unwrap();
        let b = prc_auc(&scores, &[false, false, false, true, true, false]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_counts() {
        let r = evaluate(&[0.9, 0.1, 0.5], &[true, false, false]).unwrap();
        assert_eq!((r.positives, r.negatives), (1, 2));
        assert_eq!(r.roc_auc, 1.0);
    }

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
