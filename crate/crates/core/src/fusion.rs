//! Slope-aware adaptive feature fusion: anchor projection and sampling,
//! softmax anchor weights, the probability-weighted feature blend and the
//! confidence heightmap.

use nalgebra::Vector3;

use crate::geometry::{CameraModel, RoadFrame};
use crate::heightgrid::{bilinear_corners, BevGrid, HeightMap, SlopeAnchorSet};
use crate::{Error, Result};

/// C-channel raster. Used both for image-space features (height x width =
/// image dims) and BEV-space features (height = grid rows, width = grid cols).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("feature grid needs >= 1 channel".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!("empty feature grid {height}x{width}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn idx(&self, v: usize, u: usize) -> usize {
        debug_assert!(v < self.height && u < self.width);
        (v * self.width + u) * self.channels
    }

    pub fn get(&self, v: usize, u: usize) -> &[f64] {
        let i = self.idx(v, u);
        &self.data[i..i + self.channels]
    }

    pub fn set(&mut self, v: usize, u: usize, values: &[f64]) {
        assert_eq!(values.len(), self.channels);
        let i = self.idx(v, u);
        self.data[i..i + self.channels].copy_from_slice(values);
    }

    pub fn set_channel(&mut self, v: usize, u: usize, c: usize, value: f64) {
        assert!(c < self.channels);
        let i = self.idx(v, u) + c;
        self.data[i] = value;
    }

    pub fn channel(&self, v: usize, u: usize, c: usize) -> f64 {
        self.data[self.idx(v, u) + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Vector-valued bilinear sample at continuous (u, v); `out` receives the
    /// interpolated channels. Returns false (and zeros `out`) out of bounds.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        assert_eq!(out.len(), self.channels);
        out.fill(0.0);
        let Some(corners) = bilinear_corners(u, v, self.width, self.height) else {
            return false;
        };
        for (r, c, w) in corners {
            if w == 0.0 {
                continue;
            }
            let vals = self.get(r, c);
            for (o, val) in out.iter_mut().zip(vals) {
                *o += w * val;
            }
        }
        true
    }
}

/// Dense A x rows x cols tensor of per-anchor scalars (logits or weights).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTensor {
    anchors: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AnchorTensor {
    pub fn zeros(anchors: usize, rows: usize, cols: usize) -> Self {
        Self {
            anchors,
            rows,
            cols,
            data: vec![0.0; anchors * rows * cols],
        }
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn idx(&self, a: usize, r: usize, c: usize) -> usize {
        debug_assert!(a < self.anchors && r < self.rows && c < self.cols);
        (a * self.rows + r) * self.cols + c
    }

    pub fn get(&self, a: usize, r: usize, c: usize) -> f64 {
        self.data[self.idx(a, r, c)]
    }

    pub fn set(&mut self, a: usize, r: usize, c: usize, value: f64) {
        let i = self.idx(a, r, c);
        self.data[i] = value;
    }

    pub fn add(&mut self, a: usize, r: usize, c: usize, value: f64) {
        let i = self.idx(a, r, c);
        self.data[i] += value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-anchor, per-cell validity of the projected samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorValidity {
    anchors: usize,
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl AnchorValidity {
    pub fn new_invalid(anchors: usize, rows: usize, cols: usize) -> Self {
        Self {
            anchors,
            rows,
            cols,
            data: vec![false; anchors * rows * cols],
        }
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    fn idx(&self, a: usize, r: usize, c: usize) -> usize {
        debug_assert!(a < self.anchors && r < self.rows && c < self.cols);
        (a * self.rows + r) * self.cols + c
    }

    pub fn get(&self, a: usize, r: usize, c: usize) -> bool {
        self.data[self.idx(a, r, c)]
    }

    pub fn set(&mut self, a: usize, r: usize, c: usize, valid: bool) {
        let i = self.idx(a, r, c);
        self.data[i] = valid;
    }

    /// rows x cols mask of cells where no anchor has a valid sample.
    pub fn all_invalid_cells(&self) -> Vec<bool> {
        let mut out = vec![true; self.rows * self.cols];
        for a in 0..self.anchors {
            for i in 0..self.rows * self.cols {
                if self.data[a * self.rows * self.cols + i] {
                    out[i] = false;
                }
            }
        }
        out
    }
}

/// Per-pixel anchor probabilities: every cell sums to 1 over the anchor axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    grid: BevGrid,
    weights: AnchorTensor,
}

impl WeightField {
    /// Validates the probability invariants; prefer [`softmax_weights`] to
    /// construct one from logits.
    pub fn new(grid: BevGrid, weights: AnchorTensor) -> Result<Self> {
        if weights.rows != grid.rows || weights.cols != grid.cols {
            return Err(Error::ShapeMismatch(format!(
                "weights {}x{} vs grid {}x{}",
                weights.rows, weights.cols, grid.rows, grid.cols
            )));
        }
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let mut sum = 0.0;
                for a in 0..weights.anchors {
                    let w = weights.get(a, r, c);
                    if !(0.0..=1.0).contains(&w) {
                        return Err(Error::ShapeMismatch(format!(
                            "weight {w} at ({a},{r},{c}) outside [0,1]"
                        )));
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::ShapeMismatch(format!(
                        "weights at ({r},{c}) sum to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(Self { grid, weights })
    }

    pub fn grid(&self) -> &BevGrid {
        &self.grid
    }

    pub fn anchors(&self) -> usize {
        self.weights.anchors
    }

    pub fn get(&self, a: usize, r: usize, c: usize) -> f64 {
        self.weights.get(a, r, c)
    }

    pub fn weights(&self) -> &AnchorTensor {
        &self.weights
    }
}

/// Binary ground mask in image space (true = ground pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl GroundMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Self {
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

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, ground: bool) {
        self.data[v * self.width + u] = ground;
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }
}

/// Project every anchor's 3D hypothesis into the image and bilinearly sample
/// the image features, producing one BEV-shaped feature grid per anchor plus
/// validity masks. Invalid projections yield a zero feature and a false flag.
pub fn project_and_sample(
    anchors: &SlopeAnchorSet,
    frame: &RoadFrame,
    cam: &CameraModel,
    img_feat: &FeatureGrid,
) -> (Vec<FeatureGrid>, AnchorValidity) {
    let grid = *anchors.grid();
    let channels = img_feat.channels();
    let ego_from_road = frame.pose.invert();
    let mut sampled = Vec::with_capacity(anchors.count());
    let mut validity = AnchorValidity::new_invalid(anchors.count(), grid.rows, grid.cols);
    let mut feat = vec![0.0; channels];
    for a in 0..anchors.count() {
        let mut bev = FeatureGrid::zeros(grid.rows, grid.cols, channels).expect("nonempty grid");
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let (x, y) = grid.cell_center(r, c);
                let p_road = Vector3::new(x, y, anchors.height(a, r, c));
                let p_ego = ego_from_road.apply(&p_road);
                let proj = cam.project_point(&p_ego);
                if !proj.valid {
                    continue;
                }
                if img_feat.sample_bilinear(proj.u, proj.v, &mut feat) {
                    bev.set(r, c, &feat);
                    validity.set(a, r, c, true);
                }
            }
        }
        sampled.push(bev);
    }
    (sampled, validity)
}

/// Per-cell softmax over the anchor axis, max-subtracted for overflow safety.
/// `-inf` logits (masked anchors) get weight zero; cells where every logit is
/// `-inf` fall back to uniform weights.
pub fn softmax_weights(logits: &AnchorTensor, grid: BevGrid) -> WeightField {
    assert_eq!(
        (logits.rows, logits.cols),
        (grid.rows, grid.cols),
        "logits do not match the grid"
    );
    let a_count = logits.anchors;
    let mut weights = AnchorTensor::zeros(a_count, logits.rows, logits.cols);
    for r in 0..logits.rows {
        for c in 0..logits.cols {
            let mut max = f64::NEG_INFINITY;
            for a in 0..a_count {
                let l = logits.get(a, r, c);
                debug_assert!(!l.is_nan(), "NaN logit at ({a},{r},{c})");
                if l > max {
                    max = l;
                }
            }
            if max == f64::NEG_INFINITY {
                // Every anchor masked out: fall back to uniform.
                let w = 1.0 / a_count as f64;
                for a in 0..a_count {
                    weights.set(a, r, c, w);
                }
                continue;
            }
            let mut sum = 0.0;
            for a in 0..a_count {
                let l = logits.get(a, r, c);
                let e = if l == f64::NEG_INFINITY {
                    0.0
                } else {
                    (l - max).exp()
                };
                weights.set(a, r, c, e);
                sum += e;
            }
            for a in 0..a_count {
                let w = weights.get(a, r, c) / sum;
                weights.set(a, r, c, w);
            }
        }
    }
    WeightField { grid, weights }
}

/// Overwrite logits of invalid anchor samples with `-inf` so the softmax
/// renormalizes the probability mass onto valid anchors.
pub fn mask_logits(logits: &mut AnchorTensor, validity: &AnchorValidity) {
    assert_eq!(
        (logits.anchors, logits.rows, logits.cols),
        (validity.anchors, validity.rows, validity.cols),
        "validity does not match the logits"
    );
    for (l, ok) in logits.data.iter_mut().zip(&validity.data) {
        if !ok {
            *l = f64::NEG_INFINITY;
        }
    }
}

/// Probability-weighted blend of the anchor features:
/// `out(r,c) = sum_a w_a(r,c) * sampled_a(r,c)`.
pub fn fuse_features(sampled: &[FeatureGrid], w: &WeightField) -> Result<FeatureGrid> {
    if sampled.len() != w.anchors() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature grids vs {} anchor weights",
            sampled.len(),
            w.anchors()
        )));
    }
    let grid = w.grid;
    let channels = sampled
        .first()
        .map(FeatureGrid::channels)
        .ok_or_else(|| Error::ShapeMismatch("no anchor features".into()))?;
    for f in sampled {
        if f.height() != grid.rows || f.width() != grid.cols || f.channels() != channels {
            return Err(Error::ShapeMismatch(format!(
                "anchor feature {}x{}x{} vs expected {}x{}x{}",
                f.height(),
                f.width(),
                f.channels(),
                grid.rows,
                grid.cols,
                channels
            )));
        }
    }
    let mut out = FeatureGrid::zeros(grid.rows, grid.cols, channels)?;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let base = out.idx(r, c);
            for (a, f) in sampled.iter().enumerate() {
                let weight = w.get(a, r, c);
                let vals = f.get(r, c);
                for ch in 0..channels {
                    out.data[base + ch] += weight * vals[ch];
                }
            }
        }
    }
    Ok(out)
}

/// Expected anchor height under the weight field:
/// `H_conf(r,c) = sum_a w_a(r,c) * Anchor_a(r,c)`. All cells are data-valid;
/// callers mark no-data cells afterwards (see [`mark_nodata_cells`]).
pub fn confidence_heightmap(anchors: &SlopeAnchorSet, w: &WeightField) -> HeightMap {
    assert_eq!(anchors.grid(), w.grid(), "anchor grid does not match weights");
    assert_eq!(anchors.count(), w.anchors(), "anchor count mismatch");
    let grid = *anchors.grid();
    let mut map = HeightMap::filled(grid, 0.0).expect("zero is in range");
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let mut h = 0.0;
            for a in 0..anchors.count() {
                h += w.get(a, r, c) * anchors.height(a, r, c);
            }
            map.set(r, c, h).expect("anchor heights within bound");
        }
    }
    map
}

/// Mark cells of `map` as no-data wherever `cells` is true (row-major).
pub fn mark_nodata_cells(map: &mut HeightMap, cells: &[bool]) {
    let grid = *map.grid();
    assert_eq!(cells.len(), grid.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if cells[r * grid.cols + c] {
                map.set_nodata(r, c);
            }
        }
    }
}

/// Mean of the valid anchor samples per cell (zero where no anchor is valid).
/// This is the BEV feature the toy logit predictor consumes.
pub fn anchor_mean_feature(sampled: &[FeatureGrid], validity: &AnchorValidity) -> FeatureGrid {
    assert!(!sampled.is_empty());
    let rows = sampled[0].height();
    let cols = sampled[0].width();
    let channels = sampled[0].channels();
    let mut out = FeatureGrid::zeros(rows, cols, channels).expect("nonempty");
    for r in 0..rows {
        for c in 0..cols {
            let mut n = 0usize;
            let base = out.idx(r, c);
            for (a, f) in sampled.iter().enumerate() {
                if validity.get(a, r, c) {
                    n += 1;
                    let vals = f.get(r, c);
                    for ch in 0..channels {
                        out.data[base + ch] += vals[ch];
                    }
                }
            }
            if n > 0 {
                for ch in 0..channels {
                    out.data[base + ch] /= n as f64;
                }
            }
        }
    }
    out
}
