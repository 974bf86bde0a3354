//! `heightlab warp`: ego-motion-compensate a frame's heightmap into another
//! frame and report the overlap L1.

use std::fs;

use heightlab_core::consistency::{consistency_loss, relative_transform, warp_heightmap};
use heightlab_core::geometry::{RigidTransform, RoadFrame};
use heightlab_core::io::{hgt1, pgm, pose};
use heightlab_core::Error;

use crate::manifest::RunManifest;
use crate::{bundle, CliError, CliResult, WarpArgs};

fn parse_frames(text: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!(
            "--frames expects a:b, got {text:?}"
        )));
    }
    let a: usize = parts[0]
        .parse()
        .map_err(|_| CliError::Usage(format!("bad frame index {:?}", parts[0])))?;
    let b: usize = parts[1]
        .parse()
        .map_err(|_| CliError::Usage(format!("bad frame index {:?}", parts[1])))?;
    if a > b {
        return Err(CliError::Usage(format!(
            "--frames requires a <= b, got {a}:{b}"
        )));
    }
    Ok((a, b))
}

pub fn run(args: &WarpArgs) -> CliResult<()> {
    let (a, b) = parse_frames(&args.frames)?;
    let poses = pose::read_poses(&bundle::poses_path(&args.gt))?;
    if b >= poses.len() {
        return Err(CliError::Core(Error::Format(format!(
            "frame {b} out of range: pose file has {} frames",
            poses.len()
        ))));
    }
    let motions = pose::read_poses(&bundle::egomotion_path(&args.gt))?;
    if b > 0 && motions.len() < b {
        return Err(CliError::Core(Error::Format(format!(
            "ego-motion file has {} steps, need {b}",
            motions.len()
        ))));
    }
    let h_prev = hgt1::read_height_map(&bundle::gt_path(&args.gt, a))?;
    let h_curr = hgt1::read_height_map(&bundle::gt_path(&args.gt, b))?;

    // Chain the per-step ego motions from frame a to frame b.
    let mut chain = RigidTransform::identity();
    for motion in &motions[a..b] {
        chain = motion.compose(&chain);
    }
    let t_rel = relative_transform(
        &RoadFrame::new(poses[a], a),
        &RoadFrame::new(poses[b], b),
        &chain,
    );
    let (warped, mask) = warp_heightmap(&h_prev, &t_rel, h_curr.grid())?;
    let loss = consistency_loss(&warped, &h_curr, &mask);

    fs::create_dir_all(&args.out).map_err(Error::from)?;
    hgt1::write_height_map(&args.out.join("warped.hgt"), &warped)?;
    pgm::write_overlap_mask(&args.out.join("overlap.pgm"), &mask)?;
    let mut manifest = RunManifest::new(
        "warp",
        0,
        serde_json::json!({ "frames": format!("{a}:{b}"), "l_cons": loss }),
    )
    .input("bundle", args.gt.display().to_string());
    manifest.record_output("warped.hgt");
    manifest.record_output("overlap.pgm");
    manifest.write(&args.out)?;
    println!("l_cons {loss}");
    println!("overlap_cells {}", mask.count());
    Ok(())
}
