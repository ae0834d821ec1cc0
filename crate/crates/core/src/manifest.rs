//! Video manifest: an ordered list of videos, each an ordered list of frame
//! records pointing at tensor files. Relative paths resolve against the
//! manifest's own directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::correctness::{confidence_from_scores, ConfidenceKind};
use crate::error::{Error, Result};
use crate::maps::{FeatureMap, FlowField, ScoreMap, SegMap};
use crate::tensor::read_tensor;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    num_classes: i64,
    videos: Vec<RawVideo>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVideo {
    name: String,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    features: PathBuf,
    pred_seg: PathBuf,
    #[serde(default)]
    gt_seg: Option<PathBuf>,
    #[serde(default)]
    confidence: Option<PathBuf>,
    #[serde(default)]
    confidence_kind: Option<ConfidenceKind>,
    #[serde(default)]
    flow_to_next: Option<PathBuf>,
    #[serde(default)]
    image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub features: PathBuf,
    pub pred_seg: PathBuf,
    pub gt_seg: Option<PathBuf>,
    pub confidence: Option<(PathBuf, ConfidenceKind)>,
    pub flow_to_next: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub name: String,
    pub frames: Vec<FrameRecord>,
}

impl Video {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// 1-based indices of frames that carry ground-truth segmentation.
    pub fn labeled_frames(&self) -> Vec<usize> {
        self.frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.gt_seg.is_some())
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Frame record by 1-based index.
    pub fn frame(&self, t: usize) -> Result<&FrameRecord> {
        t.checked_sub(1)
            .and_then(|i| self.frames.get(i))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "video '{}' has no frame {t} (frames are 1..={})",
                    self.name,
                    self.frames.len()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoManifest {
    pub num_classes: u32,
    pub videos: Vec<Video>,
}

impl VideoManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawManifest =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let num_classes = u32::try_from(raw.num_classes)
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::Schema(format!("num_classes must be >= 1, got {}", raw.num_classes)))?;
        let mut seen = HashSet::new();
        let mut videos = Vec::with_capacity(raw.videos.len());
        for video in raw.videos {
            if video.frames.is_empty() {
                return Err(Error::Schema(format!("video '{}' has no frames", video.name)));
            }
            if !seen.insert(video.name.clone()) {
                return Err(Error::Schema(format!("duplicate video name '{}'", video.name)));
            }
            let frames = video
                .frames
                .into_iter()
                .enumerate()
                .map(|(i, f)| resolve_frame(f, base_dir, &video.name, i + 1))
                .collect::<Result<Vec<_>>>()?;
            videos.push(Video {
                name: video.name,
                frames,
            });
        }
        Ok(VideoManifest {
            num_classes,
            videos,
        })
    }

    /// Per-video frame counts, in manifest order.
    pub fn video_lengths(&self) -> Vec<usize> {
        self.videos.iter().map(Video::len).collect()
    }

    pub fn video(&self, name: &str) -> Result<&Video> {
        self.videos
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::Validation(format!("no video named '{name}' in manifest")))
    }
}

fn resolve_frame(raw: RawFrame, base: &Path, video: &str, t: usize) -> Result<FrameRecord> {
    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    let confidence = match (raw.confidence, raw.confidence_kind) {
        (Some(path), Some(kind)) => Some((resolve(path), kind)),
        (Some(_), None) => {
            return Err(Error::Schema(format!(
                "video '{video}' frame {t}: confidence given without confidence_kind"
            )))
        }
        (None, _) => None,
    };
    Ok(FrameRecord {
        features: resolve(raw.features),
        pred_seg: resolve(raw.pred_seg),
        gt_seg: raw.gt_seg.map(resolve),
        confidence,
        flow_to_next: raw.flow_to_next.map(resolve),
        image: raw.image.map(resolve),
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<VideoManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    VideoManifest::parse(&text, base)
}

/// Everything stored for one frame, loaded and shape-checked.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub features: FeatureMap,
    pub pred: SegMap,
    pub gt: Option<SegMap>,
    pub confidence: Option<ScoreMap>,
    pub flow_to_next: Option<FlowField>,
}

impl FrameRecord {
    /// Loads every referenced tensor. Segmentation, confidence and flow must
    /// share one `H x W` grid.
    pub fn load(&self, num_classes: u32) -> Result<FrameData> {
        let features = FeatureMap::from_tensor(&read_tensor(&self.features)?)?;
        let pred = SegMap::from_tensor(&read_tensor(&self.pred_seg)?, num_classes)?;
        let (h, w) = (pred.height(), pred.width());
        let grid_check = |what: &str, gh: usize, gw: usize| {
            if (gh, gw) == (h, w) {
                Ok(())
            } else {
                Err(Error::Shape(format!(
                    "{what} is {gh}x{gw} but predicted segmentation is {h}x{w}"
                )))
            }
        };
        let gt = match &self.gt_seg {
            Some(p) => {
                let gt = SegMap::from_tensor(&read_tensor(p)?, num_classes)?;
                grid_check("ground truth", gt.height(), gt.width())?;
                Some(gt)
            }
            None => None,
        };
        let confidence = match &self.confidence {
            Some((p, kind)) => {
                let z = confidence_from_scores(&read_tensor(p)?, *kind)?;
                grid_check("confidence", z.height(), z.width())?;
                Some(z)
            }
            None => None,
        };
        let flow_to_next = match &self.flow_to_next {
            Some(p) => {
                let flow = FlowField::from_tensor(&read_tensor(p)?)?;
                grid_check("flow", flow.height(), flow.width())?;
                Some(flow)
            }
            None => None,
        };
        Ok(FrameData {
            features,
            pred,
            gt,
            confidence,
            flow_to_next,
        })
    }
}
