//! Dense cross-frame correlation search.
//!
//! For every source pixel we look for the target pixel whose (unit-normalized)
//! feature vector has the largest dot product with it, once over the whole
//! target grid and once restricted to target pixels carrying the source
//! pixel's label. Ties resolve to the first maximizer in row-major target
//! order, so every implementation here is deterministic and agrees exactly
//! with [`brute_force`].

pub mod brute_force;
mod kernel;

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::maps::{FeatureMap, SegMap};

/// Correlation recorded for a source pixel whose class has no pixel in the
/// searched target region.
pub const INFEASIBLE_CORRELATION: f64 = -1.0;

/// Feature vectors with norm below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub row: u32,
    pub col: u32,
}

impl Coord {
    pub fn from_index(index: usize, width: usize) -> Self {
        Coord {
            row: (index / width) as u32,
            col: (index % width) as u32,
        }
    }

    pub fn index(self, width: usize) -> usize {
        self.row as usize * width + self.col as usize
    }
}

/// A feature map whose pixel vectors are unit length or exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitFeatures(FeatureMap);

impl UnitFeatures {
    pub fn into_inner(self) -> FeatureMap {
        self.0
    }
}

impl Deref for UnitFeatures {
    type Target = FeatureMap;

    fn deref(&self) -> &FeatureMap {
        &self.0
    }
}

/// Scales every pixel vector to unit L2 norm so cosine similarity becomes a
/// dot product. Vectors with norm below [`ZERO_NORM`] become all-zero.
pub fn normalize_features(features: &FeatureMap) -> UnitFeatures {
    let mut out = features.clone();
    let dim = out.dim();
    for v in out.data_mut().chunks_exact_mut(dim) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < ZERO_NORM {
            v.fill(0.0);
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    UnitFeatures(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchConfig {
    /// Chebyshev radius of the square search window centred on the source
    /// pixel's own coordinates; `None` searches the whole target frame.
    pub window_radius: Option<usize>,
}

impl SearchConfig {
    pub fn full_frame() -> Self {
        SearchConfig::default()
    }

    pub fn window(radius: usize) -> Self {
        SearchConfig {
            window_radius: Some(radius),
        }
    }
}

/// Best correlation and its location, per source pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Matches {
    pub correlation: Vec<f64>,
    /// `None` where no admissible target pixel exists.
    pub argmax: Vec<Option<Coord>>,
}

impl Matches {
    pub fn len(&self) -> usize {
        self.correlation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correlation.is_empty()
    }

    pub fn is_feasible(&self, index: usize) -> bool {
        self.argmax[index].is_some()
    }

    pub fn mean_correlation(&self) -> f64 {
        self.correlation.iter().sum::<f64>() / self.correlation.len() as f64
    }
}

/// Both searches for one direction (source -> target).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub height: usize,
    pub width: usize,
    /// Unconstrained maximum correlation and its argmax.
    pub unconstrained: Matches,
    /// Label-constrained maximum correlation and its argmax.
    pub constrained: Matches,
}

fn check_dims(src: &FeatureMap, tgt: &FeatureMap, cfg: &SearchConfig) -> Result<()> {
    if src.dim() != tgt.dim() {
        return Err(Error::Shape(format!(
            "feature dimension mismatch: {} vs {}",
            src.dim(),
            tgt.dim()
        )));
    }
    if cfg.window_radius.is_some()
        && (src.height(), src.width()) != (tgt.height(), tgt.width())
    {
        return Err(Error::Shape(format!(
            "windowed search needs equal grids, got {}x{} and {}x{}",
            src.height(),
            src.width(),
            tgt.height(),
            tgt.width()
        )));
    }
    Ok(())
}

fn check_labels(features: &FeatureMap, seg: &SegMap, which: &str) -> Result<()> {
    if seg.same_grid(features.height(), features.width()) {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{which} segmentation is {}x{} but features are {}x{}; align it first",
            seg.height(),
            seg.width(),
            features.height(),
            features.width()
        )))
    }
}

pub fn match_unconstrained(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    cfg: &SearchConfig,
) -> Result<Matches> {
    check_dims(src, tgt, cfg)?;
    let (star, _) = kernel::search(src, tgt, None, cfg)?;
    Ok(star)
}

pub fn match_constrained(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    src_seg: &SegMap,
    tgt_seg: &SegMap,
    cfg: &SearchConfig,
) -> Result<Matches> {
    Ok(match_pair(src, tgt, src_seg, tgt_seg, cfg)?.constrained)
}

/// Runs the unconstrained and constrained searches in a single sweep.
pub fn match_pair(
    src: &UnitFeatures,
    tgt: &UnitFeatures,
    src_seg: &SegMap,
    tgt_seg: &SegMap,
    cfg: &SearchConfig,
) -> Result<MatchResult> {
    check_dims(src, tgt, cfg)?;
    check_labels(src, src_seg, "source")?;
    check_labels(tgt, tgt_seg, "target")?;
    let (unconstrained, constrained) =
        kernel::search(src, tgt, Some((src_seg.labels(), tgt_seg.labels())), cfg)?;
    let constrained = constrained.ok_or_else(|| Error::Internal("constrained pass missing".into()))?;
    Ok(MatchResult {
        height: src.height(),
        width: src.width(),
        unconstrained,
        constrained,
    })
}

/// The `k` most correlated target pixels for every source pixel, best first
/// (ties by row-major target order).
pub fn top_k(src: &UnitFeatures, tgt: &UnitFeatures, k: usize) -> Result<Vec<Vec<(Coord, f64)>>> {
    check_dims(src, tgt, &SearchConfig::full_frame())?;
    if k == 0 || k > tgt.pixel_count() {
        return Err(Error::Validation(format!(
            "k = {k} must lie in 1..={}",
            tgt.pixel_count()
        )));
    }
    Ok(kernel::top_k(src, tgt, k))
}

/// Nearest-neighbour subsampling of a segmentation map onto a coarser grid.
pub fn align_seg_to_features(seg: &SegMap, height: usize, width: usize) -> Result<SegMap> {
    let (h, w) = (seg.height(), seg.width());
    if height == 0 || width == 0 || height > h || width > w {
        return Err(Error::Shape(format!(
            "cannot align {h}x{w} segmentation to a {height}x{width} feature grid"
        )));
    }
    let pick = |i: usize, out: usize, full: usize| -> usize {
        let x = ((i as f64 + 0.5) * full as f64 / out as f64 - 0.5).round();
        (x.max(0.0) as usize).min(full - 1)
    };
    let rows: Vec<usize> = (0..height).map(|i| pick(i, height, h)).collect();
    let cols: Vec<usize> = (0..width).map(|j| pick(j, width, w)).collect();
    let labels = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| seg.get(r, c)))
        .collect();
    SegMap::new(height, width, seg.num_classes(), labels)
}
