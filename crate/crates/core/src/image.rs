//! Single-channel pixel grids.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("intensity {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

/// Row-major `h x w` grid of reals, indexed `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(w: usize, h: usize) -> Self {
        Grid { w, h, data: vec![0.0; w * h] }
    }

    pub fn filled(w: usize, h: usize, value: f64) -> Self {
        Grid { w, h, data: vec![value; w * h] }
    }

    pub fn from_vec(w: usize, h: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != w * h {
            return Err(ImageError::BufferSize { expected: w * h, got: data.len() });
        }
        Ok(Grid { w, h, data })
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w, self.h)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.w + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid { w: self.w, h: self.h, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn ensure_dims(&self, w: usize, h: usize) -> Result<(), ImageError> {
        if (self.w, self.h) != (w, h) {
            return Err(ImageError::DimensionMismatch { expected: (w, h), got: (self.w, self.h) });
        }
        Ok(())
    }
}

/// Grayscale sketch image, ink = 1, background = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage(Grid);

impl RasterImage {
    pub fn blank(w: usize, h: usize) -> Self {
        RasterImage(Grid::zeros(w, h))
    }

    pub fn from_grid(grid: Grid) -> Result<Self, ImageError> {
        if let Some((index, &value)) =
            grid.as_slice().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(RasterImage(grid))
    }

    pub fn from_vec(w: usize, h: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        RasterImage::from_grid(Grid::from_vec(w, h, data)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn w(&self) -> usize {
        self.0.w
    }

    pub fn h(&self) -> usize {
        self.0.h
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.0.set(x, y, v);
    }

    pub fn pixels(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn ink_count(&self) -> usize {
        self.pixels().iter().filter(|&&v| v > 0.0).count()
    }

    /// Pixels with intensity `>= threshold`.
    pub fn binarize(&self, threshold: f64) -> Vec<bool> {
        self.pixels().iter().map(|&v| v >= threshold).collect()
    }
}

/// Intersection over union of two binary masks.
pub fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(b) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_rejects_out_of_range() {
        assert!(RasterImage::from_vec(2, 1, vec![0.0, 1.5]).is_err());
        assert!(RasterImage::from_vec(2, 1, vec![0.0, 1.0]).is_ok());
        assert!(RasterImage::from_vec(2, 2, vec![0.0]).is_err());
    }

    #[test]
    fn iou() {
        assert_eq!(mask_iou(&[true, true, false], &[true, false, false]), 0.5);
        assert_eq!(mask_iou(&[false], &[false]), 1.0);
    }
}
