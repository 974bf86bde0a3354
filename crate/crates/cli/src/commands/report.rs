//! Shared evaluation reporting: per-frame rows plus pooled and
//! frame-averaged aggregates, as CSV and a human-readable table.

use heightlab_core::heightgrid::HeightMap;
use heightlab_core::metrics::{evaluate, HeightReport};
use heightlab_core::Result;

pub struct ReportSet {
    pub thresholds: Vec<f64>,
    pub rows: Vec<(String, HeightReport)>,
    pub pooled: HeightReport,
}

/// Evaluate labeled (pred, gt) pairs: per-pair reports plus cell-pooled
/// aggregate metrics over all pairs.
pub fn build(
    pairs: &[(String, &HeightMap, &HeightMap)],
    thresholds: &[f64],
) -> Result<ReportSet> {
    let mut rows = Vec::with_capacity(pairs.len());
    let mut n_total = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut hits = vec![0usize; thresholds.len()];
    for (label, pred, gt) in pairs {
        let report = evaluate(pred, gt, thresholds)?;
        rows.push((label.clone(), report));
        let grid = pred.grid();
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                if let (Some(a), Some(b)) = (pred.get(r, c), gt.get(r, c)) {
                    let d = (a - b).abs();
                    abs_sum += d;
                    sq_sum += d * d;
                    for (k, t) in thresholds.iter().enumerate() {
                        if d < *t {
                            hits[k] += 1;
                        }
                    }
                    n_total += 1;
                }
            }
        }
    }
    let pooled = HeightReport {
        mae: abs_sum / n_total as f64,
        rmse: (sq_sum / n_total as f64).sqrt(),
        acc: thresholds
            .iter()
            .zip(&hits)
            .map(|(t, h)| (*t, *h as f64 / n_total as f64))
            .collect(),
        n_cells: n_total,
    };
    Ok(ReportSet {
        thresholds: thresholds.to_vec(),
        rows,
        pooled,
    })
}

impl ReportSet {
    /// Average of the per-frame metrics (cells can differ per frame, so this
    /// generally differs from the pooled row).
    pub fn frame_mean(&self) -> HeightReport {
        let n = self.rows.len() as f64;
        let mut mae = 0.0;
        let mut rmse = 0.0;
        let mut acc = vec![0.0; self.thresholds.len()];
        let mut cells = 0usize;
        for (_, r) in &self.rows {
            mae += r.mae;
            rmse += r.rmse;
            for (k, (_, frac)) in r.acc.iter().enumerate() {
                acc[k] += frac;
            }
            cells += r.n_cells;
        }
        HeightReport {
            mae: mae / n,
            rmse: rmse / n,
            acc: self
                .thresholds
                .iter()
                .zip(&acc)
                .map(|(t, a)| (*t, a / n))
                .collect(),
            n_cells: cells,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("frame,{}\n", HeightReport::csv_header(&self.thresholds));
        for (label, report) in &self.rows {
            out.push_str(&format!("{label},{}\n", report.csv_line()));
        }
        out.push_str(&format!("pooled,{}\n", self.pooled.csv_line()));
        out.push_str(&format!("frame_mean,{}\n", self.frame_mean().csv_line()));
        out
    }

    pub fn print_tables(&self) {
        println!("pooled over {} frames:", self.rows.len());
        println!("{}", self.pooled);
        println!("frame-averaged:");
        println!("{}", self.frame_mean());
    }
}
