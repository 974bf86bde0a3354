//! Scalar image-space rasters (footprints, depth maps).

/// Row-major H x W scalar raster in image space. NaN marks missing values
/// (e.g. depth on non-ground pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRaster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn missing(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![f64::NAN; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn idx(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[self.idx(u, v)]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        let i = self.idx(u, v);
        self.data[i] = value;
    }

    pub fn add(&mut self, u: usize, v: usize, value: f64) {
        let i = self.idx(u, v);
        self.data[i] += value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Clamp every element into [lo, hi].
    pub fn clamp_in_place(&mut self, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = v.clamp(lo, hi);
        }
    }
}
