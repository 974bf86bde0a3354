// Temporary benchmark tuning probe for the mixed-grade ablation.
use heightlab_core::heightgrid::{make_anchor_set, BevGrid, DEFAULT_SLOPES};
use heightlab_core::losses::LossWeights;
use heightlab_core::metrics::mae;
use heightlab_core::synth::{CameraRig, SceneSpec, SurfaceSpec};
use heightlab_core::toytrain::{
    predict_heightmap, prepare_scene, train, PredictorParams, SceneData, TrainConfig,
};

fn rig() -> CameraRig {
    CameraRig {
        width: 160,
        height: 120,
        fx: 120.0,
        fy: 120.0,
        cx: 79.5,
        cy: 59.5,
        ..CameraRig::default()
    }
}

fn benchmark_specs() -> Vec<SceneSpec> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let surfaces = [
        SurfaceSpec::Crest { amplitude: 1.2, wavelength: 260.0, phase: half_pi },
        SurfaceSpec::Crest { amplitude: 1.2, wavelength: 260.0, phase: -half_pi },
        SurfaceSpec::Crest { amplitude: 2.0, wavelength: 320.0, phase: half_pi },
        SurfaceSpec::Crest { amplitude: 2.0, wavelength: 320.0, phase: -half_pi },
        SurfaceSpec::Crest { amplitude: 0.8, wavelength: 220.0, phase: half_pi },
        SurfaceSpec::Crest { amplitude: 0.8, wavelength: 220.0, phase: -half_pi },
        SurfaceSpec::Composite { grade: 0.01, amplitude: 1.5, wavelength: 300.0, phase: half_pi, bank: 0.01 },
        SurfaceSpec::Composite { grade: -0.01, amplitude: 1.5, wavelength: 300.0, phase: -half_pi, bank: 0.0 },
    ];
    surfaces
        .iter()
        .enumerate()
        .map(|(k, s)| SceneSpec {
            surface: *s,
            seed: 100 + k as u64,
            length: 6,
            ego_speed: 10.0,
            frame_dt: 0.1,
            camera: rig(),
            channels: 6,
            grid: BevGrid::new(100, 24, 1.0, -12.0, 0.0).unwrap(),
        })
        .collect()
}

struct EvalOut {
    mae_pooled: f64,
    std_mean: f64,
}

fn eval_params(
    params: &PredictorParams,
    anchors: &heightlab_core::heightgrid::SlopeAnchorSet,
    scenes: &[heightlab_core::toytrain::PreparedScene],
) -> EvalOut {
    let mut abs = 0.0;
    let mut n = 0usize;
    let mut stds = Vec::new();
    for scene in scenes {
        let mut frame_maes = Vec::new();
        for frame in &scene.frames {
            let (pred, _) = predict_heightmap(params, anchors, frame).unwrap();
            let m = mae(&pred, &frame.gt).unwrap();
            frame_maes.push(m);
            let grid = pred.grid();
            for r in 0..grid.rows {
                for c in 0..grid.cols {
                    if let (Some(a), Some(b)) = (pred.get(r, c), frame.gt.get(r, c)) {
                        abs += (a - b).abs();
                        n += 1;
                    }
                }
            }
        }
        let mean = frame_maes.iter().sum::<f64>() / frame_maes.len() as f64;
        let var = frame_maes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
            / frame_maes.len() as f64;
        stds.push(var.sqrt());
    }
    EvalOut {
        mae_pooled: abs / n as f64,
        std_mean: stds.iter().sum::<f64>() / stds.len() as f64,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(150);
    let t0 = std::time::Instant::now();
    let specs = benchmark_specs();
    let grid = specs[0].grid;
    let anchors = make_anchor_set(grid, &DEFAULT_SLOPES).unwrap();
    let prepared: Vec<_> = specs
        .iter()
        .map(|s| prepare_scene(&SceneData::from_spec(s).unwrap(), &anchors, None).unwrap())
        .collect();
    println!("prep: {:.1}s", t0.elapsed().as_secs_f64());

    let baseline = PredictorParams::zeros(6, 5);
    let base = eval_params(&baseline, &anchors, &prepared);
    println!("baseline: MAE {:.4}  std {:.4}", base.mae_pooled, base.std_mean);

    let t1 = std::time::Instant::now();
    let cfg_cons = TrainConfig {
        learning_rate: lr,
        steps,
        batch_frames: 6,
        loss_weights: LossWeights::default(),
        seed: 42,
        ..TrainConfig::default()
    };
    let with_cons = train(&cfg_cons, &anchors, &prepared).unwrap();
    let cfg_nocons = TrainConfig {
        loss_weights: LossWeights::new(5.0, 0.0, 10.0).unwrap(),
        ..cfg_cons.clone()
    };
    let no_cons = train(&cfg_nocons, &anchors, &prepared).unwrap();
    let ec = eval_params(&with_cons.params, &anchors, &prepared);
    let en = eval_params(&no_cons.params, &anchors, &prepared);
    println!(
        "lr {lr} steps {steps} ({:.1}s): cons MAE {:.4} std {:.4} | nocons MAE {:.4} std {:.4} | improve(cons) {:.1}% | improve(nocons) {:.1}% | std drop {:.1}%",
        t1.elapsed().as_secs_f64(),
        ec.mae_pooled, ec.std_mean, en.mae_pooled, en.std_mean,
        100.0 * (1.0 - ec.mae_pooled / base.mae_pooled),
        100.0 * (1.0 - en.mae_pooled / base.mae_pooled),
        100.0 * (1.0 - ec.std_mean / en.std_mean),
    );
    // Loss traces every 25 steps for diagnosis.
    for (name, res) in [("cons", &with_cons), ("nocons", &no_cons)] {
        let rows: Vec<String> = res
            .trace
            .iter()
            .step_by(25)
            .map(|r| format!("s{} {:.4}", r.step, r.total))
            .collect();
        println!("{name} trace: {}", rows.join("  "));
    }
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
