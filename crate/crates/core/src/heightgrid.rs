//! BEV grid definition, the heightmap container and multi-slope anchors.
//!
//! Grid layout: rows run longitudinally (road y), columns laterally (road x).
//! Continuous raster coordinates follow image convention: `u` is a fractional
//! column, `v` a fractional row.

use serde::{Deserialize, Serialize};

use crate::geometry::RoadFrame;
use crate::{Error, Result};

/// Heights above this magnitude are rejected as nonsense.
pub const HEIGHT_SANITY_BOUND: f64 = 50.0;

/// Bird's-eye-view grid over the road plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevGrid {
    pub rows: usize,
    pub cols: usize,
    pub meters_per_pixel: f64,
    pub x_min: f64,
    pub y_min: f64,
}

impl BevGrid {
    pub fn new(rows: usize, cols: usize, meters_per_pixel: f64, x_min: f64, y_min: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {rows}x{cols}")));
        }
        if !(meters_per_pixel > 0.0) || !meters_per_pixel.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "meters_per_pixel must be positive, got {meters_per_pixel}"
            )));
        }
        if !x_min.is_finite() || !y_min.is_finite() {
            return Err(Error::InvalidGrid("non-finite grid origin".into()));
        }
        Ok(Self {
            rows,
            cols,
            meters_per_pixel,
            x_min,
            y_min,
        })
    }

    /// The 200x48 grid at 0.5 m/px covering y in [0, 100) and x in [-12, 12).
    pub fn standard() -> Self {
        Self {
            rows: 200,
            cols: 48,
            meters_per_pixel: 0.5,
            x_min: -12.0,
            y_min: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Road-plane coordinates (x, y) of the center of cell (r, c).
    pub fn cell_center(&self, r: usize, c: usize) -> (f64, f64) {
        (
            self.x_min + (c as f64 + 0.5) * self.meters_per_pixel,
            self.y_min + (r as f64 + 0.5) * self.meters_per_pixel,
        )
    }

    /// Continuous raster coordinates (u = col, v = row) of road point (x, y).
    /// Inverse of [`cell_center`](Self::cell_center) at cell centers.
    pub fn grid_coords(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x_min) / self.meters_per_pixel - 0.5,
            (y - self.y_min) / self.meters_per_pixel - 0.5,
        )
    }

    /// Cell containing road point (x, y), if inside the grid extent.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = (x - self.x_min) / self.meters_per_pixel;
        let r = (y - self.y_min) / self.meters_per_pixel;
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (r, c) = (r.floor() as usize, c.floor() as usize);
        if r < self.rows && c < self.cols {
            Some((r, c))
        } else {
            None
        }
    }

    /// True when road point (x, y) lies inside the physical grid extent.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some()
    }
}

impl Default for BevGrid {
    fn default() -> Self {
        Self::standard()
    }
}

/// Corner taps for bilinear interpolation at (u, v) in a rows x cols raster:
/// `[(row, col, weight); 4]`, or `None` outside `[0, cols-1] x [0, rows-1]`.
pub fn bilinear_corners(u: f64, v: f64, cols: usize, rows: usize) -> Option<[(usize, usize, f64); 4]> {
    if cols == 0 || rows == 0 {
        return None;
    }
    let (u_max, v_max) = ((cols - 1) as f64, (rows - 1) as f64);
    if !(u >= 0.0 && u <= u_max && v >= 0.0 && v <= v_max) {
        return None;
    }
    // Clamp the base corner so the +1 neighbors stay in range at the far edge.
    let u0 = (u.floor() as usize).min(cols.saturating_sub(2));
    let v0 = (v.floor() as usize).min(rows.saturating_sub(2));
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let u1 = (u0 + 1).min(cols - 1);
    let v1 = (v0 + 1).min(rows - 1);
    Some([
        (v0, u0, (1.0 - fu) * (1.0 - fv)),
        (v0, u1, fu * (1.0 - fv)),
        (v1, u0, (1.0 - fu) * fv),
        (v1, u1, fu * fv),
    ])
}

/// BEV-gridded road height field in meters. Cells may be marked no-data;
/// internally those hold NaN and are never exposed as values.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    grid: BevGrid,
    frame: RoadFrame,
    data: Vec<f64>,
}

impl HeightMap {
    /// All cells valid and set to `value`.
    pub fn filled(grid: BevGrid, value: f64) -> Result<Self> {
        check_height(value)?;
        Ok(Self {
            grid,
            frame: RoadFrame::default(),
            data: vec![value; grid.len()],
        })
    }

    /// All cells no-data.
    pub fn nodata(grid: BevGrid) -> Self {
        Self {
            grid,
            frame: RoadFrame::default(),
            data: vec![f64::NAN; grid.len()],
        }
    }

    pub fn grid(&self) -> &BevGrid {
        &self.grid
    }

    pub fn frame(&self) -> &RoadFrame {
        &self.frame
    }

    pub fn set_frame(&mut self, frame: RoadFrame) {
        self.frame = frame;
    }

    pub fn with_frame(mut self, frame: RoadFrame) -> Self {
        self.frame = frame;
        self
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.grid.rows && c < self.grid.cols);
        r * self.grid.cols + c
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let v = self.data[self.idx(r, c)];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn is_valid(&self, r: usize, c: usize) -> bool {
        !self.data[self.idx(r, c)].is_nan()
    }

    pub fn set(&mut self, r: usize, c: usize, h: f64) -> Result<()> {
        check_height(h)?;
        let i = self.idx(r, c);
        self.data[i] = h;
        Ok(())
    }

    pub fn set_nodata(&mut self, r: usize, c: usize) {
        let i = self.idx(r, c);
        self.data[i] = f64::NAN;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    /// Raw row-major storage; no-data cells hold NaN.
    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Bilinear sample at continuous raster coordinates (u = col, v = row).
    /// Returns `(0.0, false)` outside the raster or when any corner with
    /// nonzero weight is no-data.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> (f64, bool) {
        let Some(corners) = bilinear_corners(u, v, self.grid.cols, self.grid.rows) else {
            return (0.0, false);
        };
        let mut acc = 0.0;
        for (r, c, w) in corners {
            if w == 0.0 {
                continue;
            }
            match self.get(r, c) {
                Some(h) => acc += w * h,
                None => return (0.0, false),
            }
        }
        (acc, true)
    }
}

fn check_height(h: f64) -> Result<()> {
    if !h.is_finite() || h.abs() > HEIGHT_SANITY_BOUND {
        return Err(Error::HeightOutOfRange(h));
    }
    Ok(())
}

/// Evaluate a continuous height function at every cell center.
pub fn rasterize_surface(grid: BevGrid, surface: impl Fn(f64, f64) -> f64) -> Result<HeightMap> {
    let mut map = HeightMap::nodata(grid);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let (x, y) = grid.cell_center(r, c);
            map.set(r, c, surface(x, y))?;
        }
    }
    Ok(map)
}

/// Planar slope hypotheses `Anchor_a(x, y) = slope_a * y` over a BEV grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeAnchorSet {
    grid: BevGrid,
    slopes: Vec<f64>,
    anchors: Vec<Vec<f64>>,
}

/// Default anchor grades: about -5, -2.5, 0, +2.5, +5 degrees.
pub const DEFAULT_SLOPES: [f64; 5] = [-0.087, -0.044, 0.0, 0.044, 0.087];

/// Build the anchor height fields for the given grades.
pub fn make_anchor_set(grid: BevGrid, slopes: &[f64]) -> Result<SlopeAnchorSet> {
    if slopes.is_empty() {
        return Err(Error::InvalidSlopes("need at least one slope".into()));
    }
    if slopes.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidSlopes("non-finite slope".into()));
    }
    if slopes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSlopes(format!(
            "slopes must be strictly increasing, got {slopes:?}"
        )));
    }
    let anchors = slopes
        .iter()
        .map(|&s| {
            let mut field = vec![0.0; grid.len()];
            for r in 0..grid.rows {
                let (_, y) = grid.cell_center(r, 0);
                let z = s * y;
                for c in 0..grid.cols {
                    field[r * grid.cols + c] = z;
                }
            }
            field
        })
        .collect();
    Ok(SlopeAnchorSet {
        grid,
        slopes: slopes.to_vec(),
        anchors,
    })
}

impl SlopeAnchorSet {
    pub fn grid(&self) -> &BevGrid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.slopes.len()
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn slope(&self, a: usize) -> f64 {
        self.slopes[a]
    }

    /// Anchor height at cell (r, c).
    pub fn height(&self, a: usize, r: usize, c: usize) -> f64 {
        self.anchors[a][r * self.grid.cols + c]
    }

    /// Full row-major height field of anchor `a`.
    pub fn field(&self, a: usize) -> &[f64] {
        &self.anchors[a]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cell_center_bijection() {
        let grid = BevGrid::standard();
        assert_eq!(grid.rows, 200);
        assert_eq!(grid.cols, 48);
        let (x, y) = grid.cell_center(0, 0);
        assert_eq!((x, y), (-11.75, 0.25));
        let (x, y) = grid.cell_center(199, 47);
        assert_eq!((x, y), (11.75, 99.75));
        for r in [0usize, 1, 57, 199] {
            for c in [0usize, 1, 23, 47] {
                let (x, y) = grid.cell_center(r, c);
                let (u, v) = grid.grid_coords(x, y);
                assert!((u - c as f64).abs() < 1e-12);
                assert!((v - r as f64).abs() < 1e-12);
                assert_eq!(grid.cell_of(x, y), Some((r, c)));
            }
        }
        assert_eq!(grid.cell_of(-12.01, 0.0), None);
        assert_eq!(grid.cell_of(0.0, 100.0), None);
    }

    #[test]
    fn grid_validation() {
        assert!(BevGrid::new(0, 4, 0.5, 0.0, 0.0).is_err());
        assert!(BevGrid::new(4, 4, 0.0, 0.0, 0.0).is_err());
        assert!(BevGrid::new(4, 4, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn anchor_zero_slope_is_flat() {
        let grid = BevGrid::standard();
        let set = make_anchor_set(grid, &[0.0]).unwrap();
        assert!(set.field(0).iter().all(|&z| z == 0.0));
    }

    #[test]
    fn anchor_height_tangent_oracle() {
        // slope tan(2.5 deg) at y = 10 m: z = 10 * tan(2.5 deg) ~ 0.4366 m
        let grid = BevGrid::new(40, 4, 0.5, -1.0, 0.0).unwrap();
        let s = 2.5f64.to_radians().tan();
        let set = make_anchor_set(grid, &[s]).unwrap();
        // y = 10 at row 19 center: y = 0 + (19 + 0.5) * 0.5 = 9.75; use row
        // whose center is exactly 10 => no such row at 0.5 m/px, so check the
        // formula at row 19 against the tangent oracle directly.
        let (_, y) = grid.cell_center(19, 0);
        assert!((set.height(0, 19, 2) - s * y).abs() < 1e-15);
        // And the oracle value itself at exactly y = 10 m.
        assert!((10.0 * s - 0.43660942908512057).abs() < 1e-12);
    }

    #[test]
    fn anchor_set_shapes_and_ordering() {
        let grid = BevGrid::standard();
        let set = make_anchor_set(grid, &DEFAULT_SLOPES).unwrap();
        assert_eq!(set.count(), 5);
        for a in 0..5 {
            assert_eq!(set.field(a).len(), grid.len());
        }
        assert!(make_anchor_set(grid, &[0.1, 0.1]).is_err());
        assert!(make_anchor_set(grid, &[0.2, 0.1]).is_err());
        assert!(make_anchor_set(grid, &[]).is_err());
    }

    #[test]
    fn anchor_antisymmetry() {
        let grid = BevGrid::standard();
        let set = make_anchor_set(grid, &[-0.03, 0.03]).unwrap();
        for i in 0..grid.len() {
            assert!((set.field(0)[i] + set.field(1)[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn rasterize_matches_function_at_nodes() {
        let grid = BevGrid::standard();
        let zero = rasterize_surface(grid, |_, _| 0.0).unwrap();
        assert!(zero.raw().iter().all(|&v| v == 0.0));

        let linear = rasterize_surface(grid, |_, y| 0.02 * y).unwrap();
        for r in 0..grid.rows {
            let (_, y) = grid.cell_center(r, 0);
            assert_eq!(linear.get(r, 3), Some(0.02 * y));
        }

        // Sinusoid checked against direct evaluation at cell centers.
        let wave = |_: f64, y: f64| 0.5 * (2.0 * std::f64::consts::PI * y / 80.0).sin();
        let map = rasterize_surface(grid, wave).unwrap();
        for r in (0..grid.rows).step_by(7) {
            for c in (0..grid.cols).step_by(5) {
                let (x, y) = grid.cell_center(r, c);
                assert_eq!(map.get(r, c), Some(wave(x, y)));
            }
        }
    }

    #[test]
    fn heightmap_set_get_nodata() {
        let grid = BevGrid::new(4, 4, 1.0, 0.0, 0.0).unwrap();
        let mut map = HeightMap::nodata(grid);
        assert_eq!(map.valid_count(), 0);
        map.set(1, 2, 3.5).unwrap();
        assert_eq!(map.get(1, 2), Some(3.5));
        assert_eq!(map.get(0, 0), None);
        map.set_nodata(1, 2);
        assert_eq!(map.get(1, 2), None);
        assert!(map.set(0, 0, f64::INFINITY).is_err());
        assert!(map.set(0, 0, 51.0).is_err());
        assert!(map.set(0, 0, f64::NAN).is_err());
    }

    #[test]
    fn bilinear_exact_at_integer_coordinates() {
        let grid = BevGrid::new(3, 3, 1.0, 0.0, 0.0).unwrap();
        let mut map = HeightMap::filled(grid, 0.0).unwrap();
        map.set(1, 1, 2.0).unwrap();
        map.set(2, 2, -1.5).unwrap();
        assert_eq!(map.sample_bilinear(1.0, 1.0), (2.0, true));
        assert_eq!(map.sample_bilinear(2.0, 2.0), (-1.5, true));
        assert_eq!(map.sample_bilinear(0.0, 0.0), (0.0, true));
    }

    #[test]
    fn bilinear_midpoint() {
        let grid = BevGrid::new(1, 2, 1.0, 0.0, 0.0).unwrap();
        let mut map = HeightMap::filled(grid, 0.0).unwrap();
        map.set(0, 1, 1.0).unwrap();
        let (v, ok) = map.sample_bilinear(0.5, 0.0);
        assert!(ok);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bilinear_out_of_bounds_is_invalid_zero() {
        let grid = BevGrid::new(4, 4, 1.0, 0.0, 0.0).unwrap();
        let map = HeightMap::filled(grid, 7.0).unwrap();
        assert_eq!(map.sample_bilinear(-0.1, 2.0), (0.0, false));
        assert_eq!(map.sample_bilinear(2.0, 3.0001), (0.0, false));
        // Edge of the sampleable domain is still valid.
        assert_eq!(map.sample_bilinear(3.0, 3.0), (7.0, true));
    }

    #[test]
    fn bilinear_nodata_corner_invalidates_sample() {
        let grid = BevGrid::new(2, 2, 1.0, 0.0, 0.0).unwrap();
        let mut map = HeightMap::filled(grid, 1.0).unwrap();
        map.set_nodata(1, 1);
        assert_eq!(map.sample_bilinear(0.5, 0.5), (0.0, false));
        // Zero-weight corners do not count: sampling exactly on a valid node
        // adjacent to the hole still works.
        assert_eq!(map.sample_bilinear(0.0, 1.0), (1.0, true));
    }

    #[test]
    fn bilinear_exact_for_affine_fields() {
        let grid = BevGrid::new(16, 12, 0.5, -3.0, 0.0).unwrap();
        let affine = |x: f64, y: f64| 0.3 + 0.07 * x - 0.011 * y;
        let map = rasterize_surface(grid, affine).unwrap();
        let mut t: f64 = 0.137;
        for _ in 0..200 {
            // Deterministic pseudo-random in-bounds points.
            t = (t * 997.0).fract();
            let u = t * (grid.cols - 1) as f64;
            let s = (t * 31.0).fract();
            let v = s * (grid.rows - 1) as f64;
            let x = grid.x_min + (u + 0.5) * grid.meters_per_pixel;
            let y = grid.y_min + (v + 0.5) * grid.meters_per_pixel;
            let (got, ok) = map.sample_bilinear(u, v);
            assert!(ok);
            assert!((got - affine(x, y)).abs() < 1e-9, "at ({u},{v})");
        }
    }
}
