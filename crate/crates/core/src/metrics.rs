//! Accuracy and calibration metrics: ACC, RMSE, AUC, ECE/MCE and
//! reliability-diagram rows.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Predicted probability of a correct answer with the observed label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub prob: f64,
    pub label: u8,
}

impl ScoredPair {
    pub fn new(prob: f64, label: u8) -> Self {
        Self { prob, label }
    }

    /// Predictions at exactly 0.5 count as predicting a correct answer.
    pub fn is_correct(&self) -> bool {
        (self.prob >= 0.5) == (self.label == 1)
    }
}

fn nonempty(pairs: &[ScoredPair], what: &'static str) -> Result<()> {
    if pairs.is_empty() {
        Err(Error::Empty(what))
    } else {
        Ok(())
    }
}

pub fn acc(pairs: &[ScoredPair]) -> Result<f64> {
    nonempty(pairs, "acc")?;
    Ok(pairs.iter().filter(|p| p.is_correct()).count() as f64 / pairs.len() as f64)
}

pub fn rmse(pairs: &[ScoredPair]) -> Result<f64> {
    nonempty(pairs, "rmse")?;
    let se: f64 = pairs
        .iter()
        .map(|p| (p.prob - f64::from(p.label)).powi(2))
        .sum();
    Ok((se / pairs.len() as f64).sqrt())
}

/// Average (mid) ranks, 1-based, of `values`.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney estimate of `P(prob_pos > prob_neg) + P(tie) / 2`.
pub fn auc(pairs: &[ScoredPair]) -> Result<f64> {
    nonempty(pairs, "auc")?;
    let n_pos = pairs.iter().filter(|p| p.label == 1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let probs: Vec<f64> = pairs.iter().map(|p| p.prob).collect();
    let ranks = mid_ranks(&probs);
    let rank_sum: f64 = pairs
        .iter()
        .zip(&ranks)
        .filter(|(p, _)| p.label == 1)
        .map(|(_, r)| r)
        .sum();
    let n_pos = n_pos as f64;
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Spearman rank correlation with mid-ranks for ties. `None` when either
/// input is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (mid_ranks(x), mid_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub count: usize,
    /// Fraction of correct predictions; `None` for an empty bin.
    pub acc: Option<f64>,
    pub avg_prob: Option<f64>,
}

impl Bin {
    pub fn gap(&self) -> Option<f64> {
        Some((self.acc? - self.avg_prob?).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bins: Vec<Bin>,
    pub total: usize,
    pub ece: f64,
    pub mce: f64,
}

/// 1-based bin of `prob` among `m` equal-width bins `((n-1)/m, n/m]`;
/// `prob = 0` falls into bin 1.
pub fn bin_of(prob: f64, m: usize) -> usize {
    let edge = |n: usize| n as f64 / m as f64;
    let mut n = ((prob * m as f64).ceil() as usize).clamp(1, m);
    while n > 1 && prob <= edge(n - 1) {
        n -= 1;
    }
    while n < m && prob > edge(n) {
        n += 1;
    }
    n
}

/// Equal-width binning with ECE (count-weighted mean gap) and MCE (largest
/// gap) over nonempty bins.
pub fn calibration(pairs: &[ScoredPair], bin_count: usize) -> Result<BinReport> {
    nonempty(pairs, "calibration")?;
    if bin_count == 0 {
        return Err(Error::Invalid("bin count must be positive".into()));
    }
    let mut counts = vec![0usize; bin_count];
    let mut correct = vec![0usize; bin_count];
    let mut prob_sum = vec![0.0; bin_count];
    for p in pairs {
        let b = bin_of(p.prob, bin_count) - 1;
        counts[b] += 1;
        correct[b] += usize::from(p.is_correct());
        prob_sum[b] += p.prob;
    }
    let bins: Vec<Bin> = (0..bin_count)
        .map(|b| {
            let c = counts[b];
            Bin {
                count: c,
                acc: (c > 0).then(|| correct[b] as f64 / c as f64),
                avg_prob: (c > 0).then(|| prob_sum[b] / c as f64),
            }
        })
        .collect();
    let total = pairs.len();
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    for bin in &bins {
        if let Some(gap) = bin.gap() {
            ece += bin.count as f64 / total as f64 * gap;
            mce = mce.max(gap);
        }
    }
    // A weighted mean never exceeds the maximum; rounding can, by an ulp.
    let ece = ece.min(mce);
    Ok(BinReport {
        bins,
        total,
        ece,
        mce,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReliabilityRow {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub acc: Option<f64>,
    pub avg_prob: Option<f64>,
    pub gap: Option<f64>,
}

pub fn reliability_rows(report: &BinReport) -> Vec<ReliabilityRow> {
    let m = report.bins.len();
    report
        .bins
        .iter()
        .enumerate()
        .map(|(i, b)| ReliabilityRow {
            bin: i + 1,
            lo: i as f64 / m as f64,
            hi: (i + 1) as f64 / m as f64,
            count: b.count,
            acc: b.acc,
            avg_prob: b.avg_prob,
            gap: b.gap(),
        })
        .collect()
}

pub const RELIABILITY_HEADER: &str = "bin,lo,hi,count,acc,avg_prob,gap";

/// Bin statistics are written with 12 decimals so that the ECE can be
/// recomputed from the file; empty bins leave `acc,avg_prob,gap` blank.
pub fn write_reliability_csv<W: Write>(rows: &[ReliabilityRow], mut out: W) -> std::io::Result<()> {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12}")).unwrap_or_default();
    writeln!(out, "{RELIABILITY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{},{},{}",
            r.bin,
            r.lo,
            r.hi,
            r.count,
            opt(r.acc),
            opt(r.avg_prob),
            opt(r.gap)
        )?;
    }
    Ok(())
}

/// All metrics for one set of predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub acc: f64,
    pub rmse: f64,
    /// `None` when the labels contain a single class.
    pub auc: Option<f64>,
    pub ece: f64,
    pub mce: f64,
}

impl MetricReport {
    pub fn compute(pairs: &[ScoredPair], bin_count: usize) -> Result<Self> {
        let cal = calibration(pairs, bin_count)?;
        let auc = match auc(pairs) {
            Ok(a) => Some(a),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            count: pairs.len(),
            acc: acc(pairs)?,
            rmse: rmse(pairs)?,
            auc,
            ece: cal.ece,
            mce: cal.mce,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn pairs(v: &[(f64, u8)]) -> Vec<ScoredPair> {
        v.iter().map(|&(p, l)| ScoredPair::new(p, l)).collect()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(acc(&pairs(&[(0.9, 1), (0.1, 0)])).unwrap(), 1.0);
        assert_eq!(acc(&pairs(&[(0.5, 1)])).unwrap(), 1.0);
        assert_eq!(acc(&pairs(&[(0.6, 0), (0.6, 1), (0.4, 0), (0.9, 1)])).unwrap(), 0.75);
        assert!(acc(&[]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&pairs(&[(1.0, 1), (0.0, 0)])).unwrap(), 0.0);
        assert_eq!(rmse(&pairs(&[(0.5, 1), (0.5, 0), (0.5, 1)])).unwrap(), 0.5);
        assert!((rmse(&pairs(&[(0.9, 1), (0.7, 0)])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&pairs(&[(0.9, 1), (0.1, 0)])).unwrap(), 1.0);
        assert_eq!(auc(&pairs(&[(0.4, 1), (0.4, 0), (0.4, 0)])).unwrap(), 0.5);
        assert_eq!(auc(&pairs(&[(0.8, 1), (0.8, 0), (0.3, 1), (0.9, 0)])).unwrap(), 0.125);
        assert!(matches!(auc(&pairs(&[(0.3, 1), (0.8, 1)])), Err(Error::SingleClass)));
    }

    #[test]
    fn calibration_examples() {
        let r = calibration(&pairs(&[(1.0 - 1e-9, 1); 5]), 10).unwrap();
        assert!(r.ece < 1e-8 && r.mce < 1e-8);

        let r = calibration(&pairs(&[(0.6, 1), (0.8, 0), (0.9, 1), (0.95, 1)]), 10).unwrap();
        let counts: Vec<usize> = r.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![0, 0, 0, 0, 0, 1, 0, 1, 1, 1]);
        assert!((r.ece - 0.3375).abs() < 1e-12);
        assert!((r.mce - 0.8).abs() < 1e-12);

        let p = pairs(&[(0.2, 1), (0.7, 0), (0.55, 1), (0.9, 1)]);
        let r = calibration(&p, 1).unwrap();
        let mean_prob = (0.2 + 0.7 + 0.55 + 0.9) / 4.0;
        let expected = (acc(&p).unwrap() - mean_prob).abs();
        assert!((r.ece - expected).abs() < 1e-15 && (r.mce - expected).abs() < 1e-15);
    }

    #[test]
    fn bin_edges_are_right_closed() {
        assert_eq!(bin_of(0.0, 10), 1);
        assert_eq!(bin_of(0.1, 10), 1);
        assert_eq!(bin_of(0.6, 10), 6);
        assert_eq!(bin_of(0.600001, 10), 7);
        assert_eq!(bin_of(0.3, 10), 3);
        assert_eq!(bin_of(0.7, 10), 7);
        assert_eq!(bin_of(1.0, 10), 10);
        assert_eq!(bin_of(0.5, 1), 1);
    }

    #[test]
    fn reliability_row_layout() {
        let r = calibration(&pairs(&[(0.6, 1), (0.8, 0), (0.9, 1), (0.95, 1)]), 10).unwrap();
        let rows = reliability_rows(&r);
        assert_eq!(rows.len(), 10);
        for (i, row) in rows.iter().enumerate() {
            assert!((row.lo - i as f64 / 10.0).abs() < 1e-15);
            assert!((row.hi - (i + 1) as f64 / 10.0).abs() < 1e-15);
            if let (Some(a), Some(p), Some(g)) = (row.acc, row.avg_prob, row.gap) {
                assert!((g - (a - p).abs()).abs() < 1e-12);
            }
        }
        assert_eq!(rows[0].count, 0);
        assert!(rows[0].acc.is_none());
        let mut buf = Vec::new();
        write_reliability_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin,lo,hi,count,acc,avg_prob,gap\n"));
        assert!(text.contains("\n1,0.000000,0.100000,0,,,\n"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[3.0, 2.0]), None);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(v in proptest::collection::vec((0.0f64..1.0, 0u8..2), 2..60)) {
            let p = pairs(&v);
            prop_assume!(p.iter().any(|x| x.label == 1) && p.iter().any(|x| x.label == 0));
            let q: Vec<ScoredPair> = p.iter().map(|x| ScoredPair::new(x.prob.powi(3) * 0.5 + 0.1, x.label)).collect();
            prop_assert!((auc(&p).unwrap() - auc(&q).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn bins_cover_all_samples(v in proptest::collection::vec((0.0f64..=1.0, 0u8..2), 1..80), m in 1usize..25) {
            let r = calibration(&pairs(&v), m).unwrap();
            prop_assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), v.len());
            prop_assert!(r.ece <= r.mce);
        }
    }

    #[test]
    fn ece_bounded_by_mce_on_random_inputs() {
        let mut rng = seeded(5);
        for _ in 0..1000 {
            let n = rng.random_range(1..50);
            let p: Vec<ScoredPair> = (0..n)
                .map(|_| ScoredPair::new(rng.random::<f64>(), rng.random_range(0..2)))
                .collect();
            let r = calibration(&p, rng.random_range(1..20)).unwrap();
            assert!(r.ece <= r.mce);
        }
    }
}
