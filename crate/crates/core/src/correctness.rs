//! Pixel-wise correctness prediction for frames without ground truth.
//!
//! The correctness score is the segmentation confidence plus the consistency
//! map computed against the nearest labeled frame. Higher scores predict a
//! correct label; error detection ranks pixels by the negated score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{ScoreMap, SegMap};
use crate::tensor::{Tensor, TensorData};

/// Per-pixel row sums of probability tensors must be within this of 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceKind {
    Prob,
    Logits,
}

/// Per-pixel maximum class probability.
///
/// Accepts `(H, W)` probabilities (already maximal), `(H, W, K)`
/// probabilities, or `(H, W, K)` logits which are passed through a softmax.
pub fn confidence_from_scores(scores: &Tensor, kind: ConfidenceKind) -> Result<ScoreMap> {
    let TensorData::F32(values) = scores.data() else {
        return Err(Error::UnsupportedDtype(format!(
            "{} for confidence (float32 required)",
            scores.dtype().descr()
        )));
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite confidence score at element {i}")));
    }
    match (scores.shape(), kind) {
        (&[h, w], ConfidenceKind::Prob) => {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!("probability {v} outside [0, 1]")));
            }
            ScoreMap::new(h, w, values.iter().map(|&v| v as f64).collect())
        }
        (&[h, w, k], kind) if k >= 1 => {
            let z = values
                .chunks_exact(k)
                .enumerate()
                .map(|(i, row)| match kind {
                    ConfidenceKind::Prob => max_probability(row, i),
                    ConfidenceKind::Logits => Ok(max_softmax(row)),
                })
                .collect::<Result<Vec<_>>>()?;
            ScoreMap::new(h, w, z)
        }
        (shape, kind) => Err(Error::Shape(format!(
            "confidence tensor of shape {shape:?} is not valid for {kind:?} scores"
        ))),
    }
}

fn max_probability(row: &[f32], pixel: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for &p in row {
        let p = p as f64;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!(
                "probability {p} outside [0, 1] at pixel {pixel}"
            )));
        }
        sum += p;
        max = max.max(p);
    }
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::Validation(format!(
            "class probabilities at pixel {pixel} sum to {sum}"
        )));
    }
    Ok(max)
}

fn max_softmax(row: &[f32]) -> f64 {
    let top = row.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l as f64));
    // The largest class contributes exp(0) = 1 to the partition sum.
    let partition: f64 = row.iter().map(|&l| (l as f64 - top).exp()).sum();
    1.0 / partition
}

/// The labeled frame closest in time to `unlabeled`; ties go to the earlier
/// frame.
pub fn nearest_labeled_frame(unlabeled: usize, labeled: &[usize]) -> Result<usize> {
    labeled
        .iter()
        .copied()
        .min_by_key(|&tau| (tau.abs_diff(unlabeled), tau))
        .ok_or_else(|| Error::Validation("no labeled frames available".into()))
}

/// Nearest-neighbour enlargement of a feature-grid map to `height x width`.
pub fn upsample_nearest(map: &ScoreMap, height: usize, width: usize) -> Result<ScoreMap> {
    let (h, w) = (map.height(), map.width());
    if height < h || width < w {
        return Err(Error::Shape(format!(
            "cannot upsample a {h}x{w} map to {height}x{width}"
        )));
    }
    let values = (0..height)
        .flat_map(|i| (0..width).map(move |j| map.get(i * h / height, j * w / width)))
        .collect();
    ScoreMap::new(height, width, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessPrediction {
    pub alpha: ScoreMap,
    pub z: ScoreMap,
    pub rho_hat: ScoreMap,
}

impl CorrectnessPrediction {
    /// Scores where larger means "more likely misclassified".
    pub fn error_scores(&self) -> Vec<f64> {
        self.alpha.values().iter().map(|a| -a).collect()
    }
}

/// `alpha = z + weight * rho_hat`, with `rho_hat` lifted to `z`'s grid first.
/// The literal fusion uses `weight = 1`.
pub fn predict_correctness(z: &ScoreMap, rho_hat: &ScoreMap, weight: f64) -> Result<CorrectnessPrediction> {
    if !weight.is_finite() {
        return Err(Error::Validation(format!("fusion weight {weight} is not finite")));
    }
    let rho_hat = upsample_nearest(rho_hat, z.height(), z.width())?;
    let alpha = z
        .values()
        .iter()
        .zip(rho_hat.values())
        .map(|(z, r)| z + weight * r)
        .collect();
    Ok(CorrectnessPrediction {
        alpha: ScoreMap::new(z.height(), z.width(), alpha)?,
        z: z.clone(),
        rho_hat,
    })
}

/// `true` where the prediction is wrong (the positive class for error
/// detection).
pub fn correctness_labels(pred: &SegMap, gt: &SegMap) -> Result<Vec<bool>> {
    if !pred.same_grid(gt.height(), gt.width()) {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(pred.labels().iter().zip(gt.labels()).map(|(p, g)| p != g).collect())
}
