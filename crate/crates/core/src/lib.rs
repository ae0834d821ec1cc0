//! Perceptual consistency of video semantic segmentation.
//!
//! Pixels in two nearby frames are matched by cosine similarity of generic
//! perceptual features; the toolkit then measures how well segmentation
//! labels agree with those matches. On top of that it provides temporal
//! consistency over a video, pixel-wise correctness prediction for
//! unlabeled frames, a flow-warp mIoU baseline and evaluation statistics.

pub mod correctness;
pub mod error;
pub mod flow;
pub mod manifest;
pub mod maps;
pub mod matching;
pub mod pc;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use maps::{FeatureMap, FlowField, ScoreMap, SegMap};
pub use matching::{normalize_features, SearchConfig, UnitFeatures};
pub use pc::SegFrame;
