//! Road-height evaluation metrics: MAE, RMSE and threshold accuracy, pooled
//! over the cells valid in both maps.

use std::fmt;

use crate::heightgrid::HeightMap;
use crate::{Error, Result};

/// Standard accuracy thresholds in meters.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.05, 0.1, 0.2];

/// One evaluation row: error metrics plus Acc@t per threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightReport {
    pub mae: f64,
    pub rmse: f64,
    /// (threshold, fraction) pairs in the order the thresholds were given.
    pub acc: Vec<(f64, f64)>,
    pub n_cells: usize,
}

impl HeightReport {
    /// `mae,rmse,acc@t...,n_cells` column names.
    pub fn csv_header(thresholds: &[f64]) -> String {
        let mut cols = vec!["mae".to_string(), "rmse".to_string()];
        for t in thresholds {
            cols.push(format!("acc@{t}"));
        }
        cols.push("n_cells".to_string());
        cols.join(",")
    }

    pub fn csv_line(&self) -> String {
        let mut cols = vec![format!("{}", self.mae), format!("{}", self.rmse)];
        for (_, frac) in &self.acc {
            cols.push(format!("{frac}"));
        }
        cols.push(format!("{}", self.n_cells));
        cols.join(",")
    }
}

impl fmt::Display for HeightReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  {:<10} {:>10}", "metric", "value")?;
        writeln!(f, "  {:<10} {:>10.4}", "MAE [m]", self.mae)?;
        writeln!(f, "  {:<10} {:>10.4}", "RMSE [m]", self.rmse)?;
        for (t, frac) in &self.acc {
            writeln!(f, "  {:<10} {:>10.4}", format!("Acc@{t}"), frac)?;
        }
        write!(f, "  {:<10} {:>10}", "cells", self.n_cells)
    }
}

fn for_each_joint_diff(
    pred: &HeightMap,
    gt: &HeightMap,
    mut visit: impl FnMut(f64),
) -> Result<usize> {
    if pred.grid() != gt.grid() {
        return Err(Error::ShapeMismatch(format!(
            "prediction grid {:?} vs ground-truth grid {:?}",
            pred.grid(),
            gt.grid()
        )));
    }
    let grid = pred.grid();
    let mut n = 0usize;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if let (Some(a), Some(b)) = (pred.get(r, c), gt.get(r, c)) {
                visit(a - b);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyValidSet);
    }
    Ok(n)
}

/// Mean absolute error over jointly valid cells.
pub fn mae(pred: &HeightMap, gt: &HeightMap) -> Result<f64> {
    let mut sum = 0.0;
    let n = for_each_joint_diff(pred, gt, |d| sum += d.abs())?;
    Ok(sum / n as f64)
}

/// Root mean squared error over jointly valid cells.
pub fn rmse(pred: &HeightMap, gt: &HeightMap) -> Result<f64> {
    let mut sum = 0.0;
    let n = for_each_joint_diff(pred, gt, |d| sum += d * d)?;
    Ok((sum / n as f64).sqrt())
}

/// Fraction of jointly valid cells with `|pred - gt| < t` (strict, so an
/// error exactly equal to the threshold does not count).
pub fn acc_at(pred: &HeightMap, gt: &HeightMap, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "accuracy threshold must be positive, got {t}"
        )));
    }
    let mut hits = 0usize;
    let n = for_each_joint_diff(pred, gt, |d| {
        if d.abs() < t {
            hits += 1;
        }
    })?;
    Ok(hits as f64 / n as f64)
}

/// Run the full metric suite over one pair of maps. The individual metrics
/// are computed by the same single-metric functions, so the report matches
/// them bit for bit.
pub fn evaluate(pred: &HeightMap, gt: &HeightMap, thresholds: &[f64]) -> Result<HeightReport> {
    let mae_v = mae(pred, gt)?;
    let rmse_v = rmse(pred, gt)?;
    let mut acc = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        acc.push((t, acc_at(pred, gt, t)?));
    }
    let mut n = 0usize;
    for_each_joint_diff(pred, gt, |_| n += 1)?;
    Ok(HeightReport {
        mae: mae_v,
        rmse: rmse_v,
        acc,
        n_cells: n,
    })
}
