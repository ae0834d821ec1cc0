//! Per-frame grids: perceptual features, segmentation labels, scalar scores
//! and optical flow.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorData};

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    match values.into_iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Validation(format!("{what} has non-finite value at element {i}"))),
        None => Ok(()),
    }
}

fn expect_f32<'a>(t: &'a Tensor, what: &str) -> Result<&'a [f32]> {
    match t.data() {
        TensorData::F32(v) => Ok(v),
        other => Err(Error::UnsupportedDtype(format!(
            "{} for {what} (float32 required)",
            other.dtype().descr()
        ))),
    }
}

/// Per-pixel perceptual feature vectors on an `height x width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature map dimensions must be nonzero, got {height}x{width}x{dim}"
            )));
        }
        if data.len() != height * width * dim {
            return Err(Error::Shape(format!(
                "feature map {height}x{width}x{dim} needs {} values, got {}",
                height * width * dim,
                data.len()
            )));
        }
        check_finite(data.iter().copied(), "feature map")?;
        Ok(FeatureMap {
            height,
            width,
            dim,
            data,
        })
    }

    /// Builds a map from one vector per pixel, listed in row-major order.
    pub fn from_pixels(height: usize, width: usize, pixels: &[Vec<f64>]) -> Result<Self> {
        let dim = pixels.first().map_or(0, Vec::len);
        if pixels.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape("pixel vectors differ in length".into()));
        }
        Self::new(height, width, dim, pixels.concat())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[h, w, d] = t.shape() else {
            return Err(Error::Shape(format!(
                "feature tensor must be (H, W, D), got {:?}",
                t.shape()
            )));
        };
        let values = expect_f32(t, "features")?;
        Self::new(h, w, d, values.iter().map(|&v| v as f64).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Integer class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    height: usize,
    width: usize,
    num_classes: u32,
    labels: Vec<u32>,
}

impl SegMap {
    pub fn new(height: usize, width: usize, num_classes: u32, labels: Vec<u32>) -> Result<Self> {
        if num_classes < 1 {
            return Err(Error::Validation("num_classes must be at least 1".into()));
        }
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::Shape(format!(
                "segmentation {height}x{width} given {} labels",
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {l} at pixel {i} is outside [0, {num_classes})"
            )));
        }
        Ok(SegMap {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn from_tensor(t: &Tensor, num_classes: u32) -> Result<Self> {
        let &[h, w] = t.shape() else {
            return Err(Error::Shape(format!(
                "segmentation tensor must be (H, W), got {:?}",
                t.shape()
            )));
        };
        let labels = match t.data() {
            TensorData::U8(v) => v.iter().map(|&l| l as u32).collect(),
            TensorData::U16(v) => v.iter().map(|&l| l as u32).collect(),
            TensorData::I32(v) => v
                .iter()
                .map(|&l| {
                    u32::try_from(l)
                        .map_err(|_| Error::Validation(format!("negative label {l}")))
                })
                .collect::<Result<Vec<_>>>()?,
            TensorData::F32(_) => {
                return Err(Error::UnsupportedDtype(
                    "<f4 for segmentation (integer labels required)".into(),
                ))
            }
        };
        Self::new(h, w, num_classes, labels)
    }

    /// Stored as `u8` when the class count allows it, else `u16`/`i32`.
    pub fn to_tensor(&self) -> Tensor {
        let shape = vec![self.height, self.width];
        let data = if self.num_classes <= 256 {
            TensorData::U8(self.labels.iter().map(|&l| l as u8).collect())
        } else if self.num_classes <= 65536 {
            TensorData::U16(self.labels.iter().map(|&l| l as u16).collect())
        } else {
            TensorData::I32(self.labels.iter().map(|&l| l as i32).collect())
        };
        Tensor::new(shape, data).expect("segmentation shape is consistent")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn same_grid(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }
}

/// Scalar per-pixel values (confidence, consistency ratio, correctness score).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Shape(format!(
                "score map {height}x{width} given {} values",
                values.len()
            )));
        }
        check_finite(values.iter().copied(), "score map")?;
        Ok(ScoreMap {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[h, w] = t.shape() else {
            return Err(Error::Shape(format!(
                "score tensor must be (H, W), got {:?}",
                t.shape()
            )));
        };
        let values = expect_f32(t, "score map")?;
        Self::new(h, w, values.iter().map(|&v| v as f64).collect())
    }

    /// Narrows to float32 for storage.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.values.iter().map(|&v| v as f32).collect();
        Tensor::new(vec![self.height, self.width], TensorData::F32(data))
            .expect("score map shape is consistent")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Dense displacement field; channel 0 is the column (horizontal)
/// displacement and channel 1 the row (vertical) displacement, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 2 {
            return Err(Error::Shape(format!(
                "flow field {height}x{width}x2 given {} values",
                data.len()
            )));
        }
        check_finite(data.iter().copied(), "flow field")?;
        Ok(FlowField {
            height,
            width,
            data,
        })
    }

    pub fn uniform(height: usize, width: usize, dx: f64, dy: f64) -> Result<Self> {
        let data = std::iter::repeat_n([dx, dy], height * width)
            .flatten()
            .collect();
        Self::new(height, width, data)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[h, w, 2] = t.shape() else {
            return Err(Error::Shape(format!(
                "flow tensor must be (H, W, 2), got {:?}",
                t.shape()
            )));
        };
        let values = expect_f32(t, "flow")?;
        Self::new(h, w, values.iter().map(|&v| v as f64).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(horizontal, vertical)` displacement at a pixel.
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = 2 * (row * self.width + col);
        (self.data[i], self.data[i + 1])
    }
}
