//! `heightlab eval`: compare heightmap directories frame by frame.

use std::fs;
use std::path::{Path, PathBuf};

use heightlab_core::io::hgt1;
use heightlab_core::Error;

use super::report;
use crate::{CliError, CliResult, EvalArgs};

pub fn parse_thresholds(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for tok in text.split(',') {
        let t: f64 = tok
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold {tok:?}")))?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::Usage(format!(
                "thresholds must be positive, got {t}"
            )));
        }
        out.push(t);
    }
    if out.is_empty() {
        return Err(CliError::Usage("no thresholds given".into()));
    }
    Ok(out)
}

/// Heightmap files in `dir` matching the first prefix that has any, sorted
/// by file name.
pub fn collect_heightmaps(dir: &Path, prefixes: &[&str]) -> CliResult<Vec<PathBuf>> {
    for prefix in prefixes {
        let mut found = Vec::new();
        for entry in fs::read_dir(dir).map_err(Error::from)? {
            let entry = entry.map_err(Error::from)?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with(prefix) && name.ends_with(".hgt") {
                found.push(entry.path());
            }
        }
        if !found.is_empty() {
            found.sort();
            return Ok(found);
        }
    }
    Err(CliError::Core(Error::Format(format!(
        "no heightmaps matching {prefixes:?}*.hgt in {}",
        dir.display()
    ))))
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let thresholds = parse_thresholds(&args.thresholds)?;
    let pred_files = collect_heightmaps(&args.pred, &["pred_", "gt_"])?;
    let gt_files = collect_heightmaps(&args.gt, &["gt_"])?;
    if pred_files.len() != gt_files.len() {
        return Err(CliError::Core(Error::Format(format!(
            "{} predictions vs {} ground-truth frames",
            pred_files.len(),
            gt_files.len()
        ))));
    }
    let mut maps = Vec::with_capacity(pred_files.len());
    for (p, g) in pred_files.iter().zip(&gt_files) {
        let label = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        maps.push((label, hgt1::read_height_map(p)?, hgt1::read_height_map(g)?));
    }
    let pairs: Vec<(String, _, _)> = maps
        .iter()
        .map(|(label, p, g)| (label.clone(), p, g))
        .collect();
    let set = report::build(&pairs, &thresholds)?;
    print!("{}", set.to_csv());
    set.print_tables();
    if let Some(out) = &args.out {
        fs::write(out, set.to_csv()).map_err(Error::from)?;
    }
    Ok(())
}
