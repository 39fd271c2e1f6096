//! Channel-major image tensor.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("shape mismatch: {0}x{1}x{2} vs {3}x{4}x{5}")]
    ShapeMismatch(usize, usize, usize, usize, usize, usize),
    #[error("data length {got} does not match shape {channels}x{height}x{width}")]
    BadLength { got: usize, channels: usize, height: usize, width: usize },
}

/// A C×H×W real-valued pixel array, channel-major, values nominally in
/// `[0, 255]`. Intermediate results (e.g. an unclipped poisoned image) may
/// leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if data.len() != channels * height * width {
            return Err(ImageError::BadLength { got: data.len(), channels, height, width });
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, y: usize, x: usize, v: f64) {
        self.data[(channel * self.height + y) * self.width + x] = v;
    }

    /// Flat view, channel-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// One channel as a contiguous H×W plane.
    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    /// Clamps every pixel into `[0, 255]`.
    pub fn clip_to_pixel_range(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    /// Sum of squared pixel differences against `other`.
    pub fn sq_distance(&self, other: &ImageTensor) -> Result<f64, ImageError> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum())
    }

    pub fn check_same_shape(&self, other: &ImageTensor) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            let (c, h, w) = self.shape();
            let (c2, h2, w2) = other.shape();
            return Err(ImageError::ShapeMismatch(c, h, w, c2, h2, w2));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_channel_major() {
        let mut img = ImageTensor::zeros(3, 4, 5);
        img.set(2, 3, 4, 9.0);
        assert_eq!(img.as_slice()[(2 * 4 + 3) * 5 + 4], 9.0);
        assert_eq!(img.plane(2)[3 * 5 + 4], 9.0);
    }

    #[test]
    fn clip_clamps_both_ends() {
        let mut img = ImageTensor::from_vec(1, 1, 3, vec![-4.0, 12.0, 300.0]).unwrap();
        img.clip_to_pixel_range();
        assert_eq!(img.as_slice(), &[0.0, 12.0, 255.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(ImageTensor::from_vec(3, 2, 2, vec![0.0; 11]).is_err());
    }
}
