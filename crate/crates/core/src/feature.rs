use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use crate::error::{MgdError, Result};

/// One sample's activations at one distillation position: `C` channels by
/// `N = H·W` spatial positions, row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Array2<f64>,
}

impl FeatureMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (c, n) = values.dim();
        if c == 0 || n == 0 {
            return Err(MgdError::Dimension(format!("feature map must be non-empty, got {c}x{n}")));
        }
        if let Some((idx, v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(MgdError::Value(format!("non-finite activation {v} at {idx:?}")));
        }
        Ok(Self { values })
    }

    pub fn from_rows(channels: usize, spatial: usize, data: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((channels, spatial), data)
            .map_err(|e| MgdError::Dimension(e.to_string()))?;
        Self::new(values)
    }

    pub fn zeros(channels: usize, spatial: usize) -> Self {
        Self { values: Array2::zeros((channels, spatial)) }
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn spatial(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.values.row(c)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn view_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.values.view_mut()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("feature maps are stored contiguously")
    }

    pub(crate) fn from_array_unchecked(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub(crate) fn ensure_same_shape(&self, other: &FeatureMap, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(MgdError::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}
