//! `heightlab train`: fit the anchor-weight predictor on scene bundles and
//! report held-out accuracy.

use std::fs;

use heightlab_core::heightgrid::make_anchor_set;
use heightlab_core::io::prm1;
use heightlab_core::toytrain::{
    prepare_frame, prepare_scene, predict_heightmap, train, TrainConfig,
};
use heightlab_core::Error;

use super::report;
use crate::manifest::RunManifest;
use crate::{bundle, CliError, CliResult, TrainArgs};

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let json = fs::read_to_string(&args.config).map_err(Error::from)?;
    let mut config = TrainConfig::from_json(&json)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let mut scenes = Vec::with_capacity(args.scenes.len());
    for dir in &args.scenes {
        scenes.push((dir, bundle::read_scene(dir)?));
    }
    let grid = scenes[0].1 .0.grid;
    let channels = scenes[0].1 .0.channels;
    for (dir, (spec, _)) in &scenes {
        if spec.grid != grid || spec.channels != channels {
            return Err(CliError::Core(Error::Format(format!(
                "scene {} disagrees on grid or channel count",
                dir.display()
            ))));
        }
    }
    let anchors = make_anchor_set(grid, &config.slopes)?;

    let prepared: Vec<_> = scenes
        .iter()
        .map(|(_, (_, data))| prepare_scene(data, &anchors, Some(config.batch_frames)))
        .collect::<Result<_, _>>()?;
    let result = train(&config, &anchors, &prepared)?;

    fs::create_dir_all(&args.out).map_err(Error::from)?;
    prm1::write(&args.out.join("params.prm1"), &result.params)?;
    let mut trace = String::from("step,loss,l_sa,l_cons,l_h\n");
    for row in &result.trace {
        trace.push_str(&format!(
            "{},{},{},{},{}\n",
            row.step, row.total, row.l_sa, row.l_cons, row.l_h
        ));
    }
    fs::write(args.out.join("trace.csv"), trace).map_err(Error::from)?;

    // Held-out evaluation: the frames beyond the training window, falling
    // back to the training frames when every frame was trained on.
    let held_out_used = scenes
        .iter()
        .any(|(_, (_, data))| data.frames.len() > config.batch_frames);
    let mut evalled = Vec::new();
    for (dir, (spec, data)) in &scenes {
        let cam = spec.camera.camera_model()?;
        let scene_name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let skip = if held_out_used { config.batch_frames } else { 0 };
        for (i, frame) in data.frames.iter().enumerate().skip(skip) {
            let prepared_frame = prepare_frame(&cam, &anchors, frame)?;
            let (pred, _) = predict_heightmap(&result.params, &anchors, &prepared_frame)?;
            evalled.push((format!("{scene_name}_{i:04}"), pred, frame.gt.clone()));
        }
    }
    let pairs: Vec<(String, _, _)> = evalled
        .iter()
        .map(|(label, p, g)| (label.clone(), p, g))
        .collect();
    let thresholds = heightlab_core::metrics::DEFAULT_THRESHOLDS;
    let set = report::build(&pairs, &thresholds)?;
    fs::write(args.out.join("report.csv"), set.to_csv()).map_err(Error::from)?;
    print!("{}", set.to_csv());
    set.print_tables();

    let mut manifest = RunManifest::new(
        "train",
        config.seed,
        serde_json::json!({
            "config": config,
            "held_out": held_out_used,
        }),
    )
    .input("config", args.config.display().to_string());
    for (k, dir) in args.scenes.iter().enumerate() {
        manifest = manifest.input(&format!("scene_{k}"), dir.display().to_string());
    }
    manifest.record_output("params.prm1");
    manifest.record_output("trace.csv");
    manifest.record_output("report.csv");
    manifest.write(&args.out)?;
    Ok(())
}
