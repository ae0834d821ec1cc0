//! Evaluation statistics: correlation coefficients between consistency
//! series, ROC / precision-recall curves, and the class agreement of
//! perceptual correspondences.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::maps::SegMap;
use crate::matching::{top_k, UnitFeatures};

fn check_series(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Undefined(format!("correlation needs n >= 2, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("series contain non-finite values".into()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_series(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_series(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check_series(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal);
            let dy = y[i].partial_cmp(&y[j]).unwrap_or(Ordering::Equal);
            match (dx, dy) {
                (Ordering::Equal, Ordering::Equal) => {
                    ties_x += 1;
                    ties_y += 1;
                }
                (Ordering::Equal, _) => ties_x += 1,
                (_, Ordering::Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = ((pairs - ties_x) as f64 * (pairs - ties_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Undefined("rank correlation of an all-tied series".into()));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
    pub n: usize,
}

pub fn correlation_report(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    Ok(CorrelationReport {
        pearson: pearson(x, y)?,
        spearman: spearman(x, y)?,
        kendall: kendall(x, y)?,
        n: x.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Score threshold (`score >= threshold` predicts positive); infinite for
    /// the curve's starting point.
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
    pub positive_count: usize,
    pub negative_count: usize,
}

/// ROC curve (x = FPR, y = TPR, area by trapezoids) and precision-recall
/// curve (x = recall, y = precision, area as average precision) for scores
/// where larger means "more likely positive". Tied scores form one point.
pub fn roc_pr(scores: &[f64], labels: &[bool]) -> Result<(CurveReport, CurveReport)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("scores contain non-finite values".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Undefined("curves need both positive and negative samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (positives as f64, negatives as f64);
    let start = |y| CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y,
    };
    let mut roc = vec![start(0.0)];
    let mut pr = vec![start(1.0)];
    let (mut roc_auc, mut ap) = (0.0, 0.0);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (fpr, tpr) = (fp as f64 / n, tp as f64 / p);
        let prev = roc.last().unwrap();
        roc_auc += (fpr - prev.x) * (tpr + prev.y) / 2.0;
        roc.push(CurvePoint { threshold, x: fpr, y: tpr });

        let precision = tp as f64 / (tp + fp) as f64;
        ap += (tpr - pr.last().unwrap().x) * precision;
        pr.push(CurvePoint {
            threshold,
            x: tpr,
            y: precision,
        });
    }
    let report = |points, auc| CurveReport {
        points,
        auc,
        positive_count: positives,
        negative_count: negatives,
    };
    Ok((report(roc, roc_auc), report(pr, ap)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAgreement {
    /// Fraction of source pixels whose best match has the same class.
    pub top1_rate: f64,
    /// Fraction with at least one same-class pixel among the `k` best.
    pub topk_rate: f64,
    /// Mean gap between the best and the `k`-th best correlation.
    pub corr_gap: f64,
}

/// How often perceptual correspondences between two labeled frames respect
/// the ground-truth classes.
pub fn class_agreement(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    src_gt: &SegMap,
    tgt_gt: &SegMap,
    k: usize,
) -> Result<ClassAgreement> {
    for (f, g, which) in [(src, src_gt, "source"), (tgt, tgt_gt, "target")] {
        if !g.same_grid(f.height(), f.width()) {
            return Err(Error::Shape(format!("{which} ground truth is not on the feature grid")));
        }
    }
    let best = top_k(src, tgt, k)?;
    let width = tgt.width();
    let (mut top1, mut topk, mut gap) = (0usize, 0usize, 0.0);
    for (s, list) in best.iter().enumerate() {
        let class = src_gt.labels()[s];
        let same = |c: &crate::matching::Coord| tgt_gt.labels()[c.index(width)] == class;
        if same(&list[0].0) {
            top1 += 1;
        }
        if list.iter().any(|(c, _)| same(c)) {
            topk += 1;
        }
        gap += list[0].1 - list[k - 1].1;
    }
    let n = best.len() as f64;
    Ok(ClassAgreement {
        top1_rate: top1 as f64 / n,
        topk_rate: topk as f64 / n,
        corr_gap: gap / n,
    })
}
