//! Scene bundle layout: a directory holding poses.txt, egomotion.txt,
//! per-frame masks / feature grids / depths / ground-truth heightmaps, the
//! resolved scene spec and the run manifest.

use std::path::{Path, PathBuf};

use heightlab_core::geometry::RoadFrame;
use heightlab_core::io::{fgr1, hgt1, pgm, pose};
use heightlab_core::synth::SceneSpec;
use heightlab_core::toytrain::{FrameData, SceneData};
use heightlab_core::{Error, Result};

pub fn mask_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("mask_{i:04}.pgm"))
}

pub fn feat_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("feat_{i:04}.hgt"))
}

pub fn depth_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("depth_{i:04}.hgt"))
}

pub fn gt_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("gt_{i:04}.hgt"))
}

pub fn poses_path(dir: &Path) -> PathBuf {
    dir.join("poses.txt")
}

pub fn egomotion_path(dir: &Path) -> PathBuf {
    dir.join("egomotion.txt")
}

pub fn scene_spec_path(dir: &Path) -> PathBuf {
    dir.join("scene.json")
}

/// Load the training-relevant parts of a bundle (depths are not needed).
pub fn read_scene(dir: &Path) -> Result<(SceneSpec, SceneData)> {
    let spec_json = std::fs::read_to_string(scene_spec_path(dir))?;
    let spec = SceneSpec::from_json(&spec_json)?;
    let poses = pose::read_poses(&poses_path(dir))?;
    if poses.len() != spec.length {
        return Err(Error::Format(format!(
            "bundle has {} poses but the spec declares {} frames",
            poses.len(),
            spec.length
        )));
    }
    let ego_motions = pose::read_poses(&egomotion_path(dir))?;
    if ego_motions.len() + 1 != spec.length {
        return Err(Error::Format(format!(
            "bundle has {} ego motions for {} frames",
            ego_motions.len(),
            spec.length
        )));
    }
    let cam = spec.camera.camera_model()?;
    let mut frames = Vec::with_capacity(spec.length);
    for (i, p) in poses.iter().enumerate() {
        let gt = hgt1::read_height_map(&gt_path(dir, i))?;
        if gt.grid() != &spec.grid {
            return Err(Error::Format(format!(
                "frame {i}: heightmap grid does not match the scene spec"
            )));
        }
        let ground_mask = pgm::read_ground_mask(&mask_path(dir, i))?;
        let features = fgr1::read(&feat_path(dir, i))?;
        if features.height() != cam.height
            || features.width() != cam.width
            || features.channels() != spec.channels
        {
            return Err(Error::Format(format!(
                "frame {i}: feature grid {}x{}x{} does not match the camera/spec",
                features.height(),
                features.width(),
                features.channels()
            )));
        }
        frames.push(FrameData {
            road_frame: RoadFrame::new(*p, i),
            gt,
            ground_mask,
            features,
        });
    }
    Ok((
        spec,
        SceneData {
            cam,
            frames,
            ego_motions,
        },
    ))
}
