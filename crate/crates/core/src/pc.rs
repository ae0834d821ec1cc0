//! Perceptual-consistency arithmetic on top of the correlation search.
//!
//! Per pixel, the centred constrained correlation is divided by the centred
//! unconstrained correlation; a frame pair's consistency is the smaller of the
//! two directional means of that ratio. Ratios are not clamped, so on small
//! frames they can exceed 1 or go negative.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{ScoreMap, SegMap};
use crate::matching::{match_pair, MatchResult, SearchConfig, UnitFeatures};

/// Centred denominators within this distance of zero are degenerate.
pub const DEGENERATE_EPS: f64 = 1e-6;

/// A frame's normalized features paired with labels on the same grid.
#[derive(Debug, Clone)]
pub struct SegFrame {
    features: UnitFeatures,
    seg: SegMap,
}

impl SegFrame {
    pub fn new(features: UnitFeatures, seg: SegMap) -> Result<Self> {
        if !seg.same_grid(features.height(), features.width()) {
            return Err(Error::Shape(format!(
                "segmentation {}x{} is not on the {}x{} feature grid",
                seg.height(),
                seg.width(),
                features.height(),
                features.width()
            )));
        }
        Ok(SegFrame { features, seg })
    }

    pub fn features(&self) -> &UnitFeatures {
        &self.features
    }

    pub fn seg(&self) -> &SegMap {
        &self.seg
    }
}

/// One direction (source -> target) of a pairwise consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalConsistency {
    pub mean_c_star: f64,
    pub mean_c_dagger: f64,
    /// Mean of the per-pixel ratios.
    pub aggregate: f64,
    pub ratios: ScoreMap,
    /// Source pixels whose class is absent from the target.
    pub infeasible: usize,
    /// Pixels resolved by the degenerate-denominator rule.
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcPairResult {
    pub rho: f64,
    pub ab: DirectionalConsistency,
    pub ba: DirectionalConsistency,
}

impl PcPairResult {
    pub fn rho_ab(&self) -> f64 {
        self.ab.aggregate
    }

    pub fn rho_ba(&self) -> f64 {
        self.ba.aggregate
    }
}

/// Per-pixel ratio `(c_dagger - mean_dagger) / (c_star - mean_star)`.
///
/// Infeasible pixels score 0. Where `|c_star - mean_star| <= DEGENERATE_EPS`
/// the pixel scores 1 if the constrained side is also within epsilon of its
/// mean, else 0.
pub fn directional_consistency(m: &MatchResult) -> Result<DirectionalConsistency> {
    let star = &m.unconstrained;
    let dagger = &m.constrained;
    let mean_c_star = star.mean_correlation();
    let mean_c_dagger = dagger.mean_correlation();
    let mut infeasible = 0;
    let mut degenerate = 0;
    let ratios: Vec<f64> = (0..star.len())
        .map(|i| {
            if !dagger.is_feasible(i) {
                infeasible += 1;
                return 0.0;
            }
            let num = dagger.correlation[i] - mean_c_dagger;
            let den = star.correlation[i] - mean_c_star;
            if den.abs() <= DEGENERATE_EPS {
                degenerate += 1;
                if num.abs() <= DEGENERATE_EPS {
                    1.0
                } else {
                    0.0
                }
            } else {
                num / den
            }
        })
        .collect();
    let aggregate = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(DirectionalConsistency {
        mean_c_star,
        mean_c_dagger,
        aggregate,
        ratios: ScoreMap::new(m.height, m.width, ratios)?,
        infeasible,
        degenerate,
    })
}

pub fn pc_pair(a: &SegFrame, b: &SegFrame, cfg: &SearchConfig) -> Result<PcPairResult> {
    let (ab, ba) = rayon::join(
        || match_pair(&a.features, &b.features, &a.seg, &b.seg, cfg),
        || match_pair(&b.features, &a.features, &b.seg, &a.seg, cfg),
    );
    let ab = directional_consistency(&ab?)?;
    let ba = directional_consistency(&ba?)?;
    Ok(PcPairResult {
        rho: ab.aggregate.min(ba.aggregate),
        ab,
        ba,
    })
}

/// One-directional per-pixel consistency of an unlabeled frame's prediction
/// against a labeled frame's ground truth, on the feature grid.
pub fn pc_map_directional(
    unlabeled: &SegFrame,
    labeled: &SegFrame,
    cfg: &SearchConfig,
) -> Result<ScoreMap> {
    let m = match_pair(
        &unlabeled.features,
        &labeled.features,
        &unlabeled.seg,
        &labeled.seg,
        cfg,
    )?;
    Ok(directional_consistency(&m)?.ratios)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTcResult {
    /// Consecutive pairs `(t, t+1)` in order.
    pub per_pair: Vec<PcPairResult>,
    pub rho_tilde: f64,
}

/// Temporal consistency: mean pairwise consistency over consecutive frames.
pub fn pc_video(frames: &[SegFrame], cfg: &SearchConfig) -> Result<VideoTcResult> {
    if frames.len() < 2 {
        return Err(Error::InsufficientFrames(format!(
            "temporal consistency needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let per_pair = frames
        .par_windows(2)
        .map(|w| pc_pair(&w[0], &w[1], cfg))
        .collect::<Result<Vec<_>>>()?;
    let rho_tilde = per_pair.iter().map(|p| p.rho).sum::<f64>() / per_pair.len() as f64;
    Ok(VideoTcResult {
        per_pair,
        rho_tilde,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoLoss {
    pub name: String,
    /// Number of `(t, delta)` pairs summed.
    pub pairs: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcLoss {
    pub value: f64,
    pub per_video: Vec<VideoLoss>,
}

/// Mean over videos of the mean `1 - rho` over all frame pairs `(t, t+delta)`
/// with `1 <= delta <= window` that fall inside the video.
pub fn pc_loss(videos: &[(String, Vec<SegFrame>)], window: usize, cfg: &SearchConfig) -> Result<PcLoss> {
    if window < 1 {
        return Err(Error::Validation("loss window must be at least 1".into()));
    }
    if videos.is_empty() {
        return Err(Error::InsufficientFrames("no videos given".into()));
    }
    let mut per_video = Vec::with_capacity(videos.len());
    for (name, frames) in videos {
        let pairs: Vec<(usize, usize)> = (0..frames.len())
            .flat_map(|t| (1..=window).map(move |delta| (t, t + delta)))
            .filter(|&(_, u)| u < frames.len())
            .collect();
        if pairs.is_empty() {
            return Err(Error::InsufficientFrames(format!(
                "video '{name}' has no frame pair within the loss window"
            )));
        }
        let rhos = pairs
            .par_iter()
            .map(|&(t, u)| pc_pair(&frames[t], &frames[u], cfg).map(|p| p.rho))
            .collect::<Result<Vec<_>>>()?;
        let loss = rhos.iter().map(|rho| 1.0 - rho).sum::<f64>() / pairs.len() as f64;
        per_video.push(VideoLoss {
            name: name.clone(),
            pairs: pairs.len(),
            loss,
        });
    }
    let value = per_video.iter().map(|v| v.loss).sum::<f64>() / per_video.len() as f64;
    Ok(PcLoss { value, per_video })
}
