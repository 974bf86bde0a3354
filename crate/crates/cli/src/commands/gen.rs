//! `heightlab gen`: synthesize a full scene bundle from a scene spec.

use std::fs;

use heightlab_core::geometry::RigidTransform;
use heightlab_core::io::{fgr1, hgt1, pgm, pose};
use heightlab_core::synth::noise::frame_seed;
use heightlab_core::synth::{gen_surface, gen_trajectory, rasterize_gt, render_frame, SceneSpec};

use crate::manifest::RunManifest;
use crate::{bundle, CliResult, GenArgs};

pub fn run(args: &GenArgs) -> CliResult<()> {
    let json = fs::read_to_string(&args.spec).map_err(heightlab_core::Error::from)?;
    let mut spec = SceneSpec::from_json(&json)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let surface = gen_surface(&spec)?;
    let (traj, motions) = gen_trajectory(&spec, &surface)?;
    let cam = spec.camera.camera_model()?;
    fs::create_dir_all(&args.out).map_err(heightlab_core::Error::from)?;

    let mut manifest = RunManifest::new(
        "gen",
        spec.seed,
        serde_json::to_value(&spec).map_err(heightlab_core::Error::from)?,
    )
    .input("spec", args.spec.display().to_string());

    let poses: Vec<RigidTransform> = traj.iter().map(|tf| tf.road_frame.pose).collect();
    pose::write_poses(&bundle::poses_path(&args.out), &poses)?;
    manifest.record_output("poses.txt");
    pose::write_poses(&bundle::egomotion_path(&args.out), &motions)?;
    manifest.record_output("egomotion.txt");
    fs::write(bundle::scene_spec_path(&args.out), spec.to_json() + "\n")
        .map_err(heightlab_core::Error::from)?;
    manifest.record_output("scene.json");

    for (i, tf) in traj.iter().enumerate() {
        let rendered = render_frame(
            &surface,
            tf,
            &cam,
            spec.grid,
            spec.channels,
            frame_seed(spec.seed, i),
        );
        pgm::write_ground_mask(&bundle::mask_path(&args.out, i), &rendered.mask)?;
        manifest.record_output(format!("mask_{i:04}.pgm"));
        fgr1::write(&bundle::feat_path(&args.out, i), &rendered.features)?;
        manifest.record_output(format!("feat_{i:04}.hgt"));
        hgt1::write(
            &bundle::depth_path(&args.out, i),
            &hgt1::Hgt1::from_image_raster(&rendered.depth),
        )?;
        manifest.record_output(format!("depth_{i:04}.hgt"));
        let gt = rasterize_gt(&surface, tf, spec.grid)?;
        hgt1::write_height_map(&bundle::gt_path(&args.out, i), &gt)?;
        manifest.record_output(format!("gt_{i:04}.hgt"));
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {} frames to {}",
        traj.len(),
        args.out.display()
    );
    Ok(())
}
