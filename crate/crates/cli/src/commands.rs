//! Command implementations.

use crate::{config, Cli, CliError, Command};
use egoflow::dataio::{self, sig9};
use egoflow::egosolver::{robust_egomotion, RobustSolveOptions};
use egoflow::evalkit::{self, AteOptions};
use egoflow::flowviz;
use egoflow::geometry::{integrate_trajectory, CameraModel, EgoMotion, FlowField, Pose};
use egoflow::mfg::{self, MfgModel, TrainSample};
use egoflow::objmotion::{extract_object_motion, ObjMotionParams};
use egoflow::synthgen;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Generate {
            config,
            count,
            sequence,
        } => generate(&ctx, config.as_deref(), count, sequence),
        Command::Train {
            dataset,
            epochs,
            config,
            checkpoint_out,
        } => train(&ctx, &dataset, epochs, config.as_deref(), &checkpoint_out),
        Command::Predict {
            checkpoint,
            flow,
            topk,
            write_fields,
        } => predict(&ctx, &checkpoint, &flow, topk, write_fields),
        Command::Solve { flow, robust } => solve(&ctx, &flow, robust),
        Command::Extract {
            checkpoint,
            flow,
            depth,
        } => extract(&ctx, &checkpoint, &flow, &depth),
        Command::Eval {
            checkpoint,
            dataset,
            metric,
            sparsity_sweep,
        } => eval(
            &ctx,
            checkpoint.as_deref(),
            &dataset,
            metric.as_deref(),
            sparsity_sweep.as_deref(),
        ),
        Command::Viz {
            flow,
            trajectory,
            out,
        } => viz(&ctx, flow.as_deref(), &trajectory, &out),
    }
}

struct Context {
    seed: Option<u64>,
    out_dir: PathBuf,
    quiet: bool,
}

impl Context {
    fn say(&self, msg: String) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(BufWriter::new(File::create(self.out_path(name))?))
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<MfgModel, CliError> {
    Ok(mfg::load_model(open(path)?)?)
}

fn read_flow(path: &Path) -> Result<FlowField, CliError> {
    dataio::read_flow(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ego_line(label: &str, ego: &EgoMotion) -> String {
    format!(
        "{label} t = {} {} {}  omega = {} {} {}",
        sig9(ego.translation.x),
        sig9(ego.translation.y),
        sig9(ego.translation.z),
        sig9(ego.rotation.x),
        sig9(ego.rotation.y),
        sig9(ego.rotation.z),
    )
}

fn generate(
    ctx: &Context,
    config: Option<&Path>,
    count: usize,
    sequence: bool,
) -> Result<(), CliError> {
    let mut scene = config::scene_config(config)?;
    if let Some(seed) = ctx.seed {
        scene.seed = seed;
    }
    std::fs::create_dir_all(&ctx.out_dir)?;
    if sequence {
        let (samples, trajectory) = synthgen::generate_sequence(&scene, count)?;
        synthgen::save_dataset(&ctx.out_dir, &samples)?;
        let mut w = ctx.create(synthgen::POSES_NAME)?;
        dataio::write_pose_file(&mut w, &trajectory)?;
        ctx.say(format!(
            "generated sequence of {} poses ({} frames) into {}",
            trajectory.len(),
            samples.len(),
            ctx.out_dir.display()
        ));
    } else {
        let samples = synthgen::generate(&scene, count)?;
        synthgen::save_dataset(&ctx.out_dir, &samples)?;
        ctx.say(format!(
            "generated {} samples into {}",
            samples.len(),
            ctx.out_dir.display()
        ));
    }
    Ok(())
}

fn load_training_set(dataset: &Path) -> Result<(Vec<TrainSample>, CameraModel), CliError> {
    let samples = synthgen::load_dataset(dataset)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "{}: dataset is empty",
            dataset.display()
        )));
    }
    let cam = CameraModel::centered(samples[0].flow.width(), samples[0].flow.height());
    let train_samples = samples
        .into_iter()
        .map(|s| TrainSample {
            flow: s.flow,
            gt: s.gt_ego,
        })
        .collect();
    Ok((train_samples, cam))
}

fn train(
    ctx: &Context,
    dataset: &Path,
    epochs: usize,
    config: Option<&Path>,
    checkpoint_out: &Path,
) -> Result<(), CliError> {
    let (samples, cam) = load_training_set(dataset)?;
    let cfg = config::mfg_config(config, cam.width, cam.height)?;
    let seed = ctx.seed.unwrap_or(0);
    let mut model = mfg::MfgModel::new_seeded(cfg, seed)?;
    let log = mfg::train(&mut model, &samples, &cam, epochs, seed)?;

    if let Some(parent) = checkpoint_out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    mfg::save_model(BufWriter::new(File::create(checkpoint_out)?), &model)?;
    let mut log_file = ctx.create("train_log.csv")?;
    mfg::write_train_log_csv(&mut log_file, &log)?;

    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        ctx.say(format!(
            "trained {} epochs on {} samples: L_t {} -> {}, L_w {} -> {}, active {}",
            log.len(),
            samples.len(),
            sig9(first.trans_loss),
            sig9(last.trans_loss),
            sig9(first.rot_loss),
            sig9(last.rot_loss),
            sig9(last.active_count),
        ));
    } else {
        ctx.say("trained 0 epochs (model left at initialization)".to_string());
    }
    ctx.say(format!("checkpoint written to {}", checkpoint_out.display()));
    Ok(())
}

fn check_topk(topk: Option<f64>) -> Result<Option<f64>, CliError> {
    if let Some(k) = topk {
        if !(k > 0.0 && k <= 100.0) {
            return Err(CliError::Usage(format!(
                "--topk must be in (0, 100], got {k}"
            )));
        }
    }
    Ok(topk)
}

fn predict(
    ctx: &Context,
    checkpoint: &Path,
    flow: &Path,
    topk: Option<f64>,
    write_fields: bool,
) -> Result<(), CliError> {
    let topk = check_topk(topk)?;
    let model = load_model(checkpoint)?;
    let field = read_flow(flow)?;
    let cam = CameraModel::centered(model.config().width, model.config().height);
    let ego = model.predict_egomotion(&field, topk, &cam)?;
    println!("{}", ego_line("predicted", &ego));
    if write_fields {
        let out = match topk {
            Some(k) => model.forward_masked(&field, k)?,
            None => model.forward(&field)?,
        };
        dataio::write_flow(ctx.create("pred_trans.flo")?, &out.trans_field)?;
        dataio::write_flow(ctx.create("pred_rot.flo")?, &out.rot_field)?;
        ctx.say(format!(
            "predicted fields written to {}",
            ctx.out_dir.display()
        ));
    }
    Ok(())
}

fn solve(ctx: &Context, flow: &Path, robust: bool) -> Result<(), CliError> {
    let field = read_flow(flow)?;
    let cam = CameraModel::centered(field.width(), field.height());
    let mut opts = RobustSolveOptions::default();
    if !robust {
        // Plain least squares: the Huber corner never engages.
        opts.huber_delta = f64::INFINITY;
    }
    let report = robust_egomotion(&field, &cam, &opts)?;
    println!("{}", ego_line("solved", &report.ego));
    println!("residual_rms = {}", sig9(report.residual_rms));
    println!(
        "inliers = {} / {}",
        report.inlier_mask.count(),
        field.len()
    );
    if report.degenerate {
        println!("degenerate: input flow is identically zero");
    }
    if report.translation_ambiguous {
        println!("ambiguous: translation direction unconstrained");
    }
    let _ = ctx;
    Ok(())
}

fn extract(ctx: &Context, checkpoint: &Path, flow: &Path, depth: &Path) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let field = read_flow(flow)?;
    let rho = dataio::read_depth(open(depth)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", depth.display())))?;
    let out = model.forward(&field)?;
    let result = extract_object_motion(
        &field,
        &out.trans_field,
        &out.rot_field,
        &rho,
        &ObjMotionParams::default(),
    )?;

    dataio::write_mask(ctx.create("obj_mask.msk")?, &result.mask)?;
    dataio::write_flow(ctx.create("obj_velocity.flo")?, &result.velocity)?;
    dataio::write_flow(ctx.create("residual.flo")?, &result.residual)?;
    flowviz::write_raster(
        ctx.create("obj_velocity.ppm")?,
        &flowviz::flow_to_image(&result.velocity, None),
    )?;
    flowviz::write_raster(
        ctx.create("residual.ppm")?,
        &flowviz::flow_to_image(&result.residual, None),
    )?;

    let count = result.mask.count();
    let mean = if count > 0 {
        result
            .velocity
            .as_slice()
            .iter()
            .map(|v| v.norm())
            .sum::<f64>()
            / count as f64
    } else {
        0.0
    };
    ctx.say(format!(
        "object mask covers {count} of {} pixels, mean speed {}",
        field.len(),
        sig9(mean)
    ));
    ctx.say(format!("artifacts written to {}", ctx.out_dir.display()));
    Ok(())
}

fn eval(
    ctx: &Context,
    checkpoint: Option<&Path>,
    dataset: &Path,
    metric: Option<&str>,
    sweep: Option<&str>,
) -> Result<(), CliError> {
    if metric.is_none() && sweep.is_none() {
        return Err(CliError::Usage(
            "pick --metric ate|rpe and/or --sparsity-sweep".into(),
        ));
    }
    if let Some(name) = metric {
        if name != "ate" && name != "rpe" {
            return Err(CliError::Usage(format!(
                "unknown metric {name:?}, expected ate or rpe"
            )));
        }
    }
    let ks = sweep.map(parse_sweep_list).transpose()?;
    if ks.is_some() && checkpoint.is_none() {
        return Err(CliError::Usage("--sparsity-sweep needs --checkpoint".into()));
    }

    let (samples, cam) = load_training_set(dataset)?;
    let model = checkpoint.map(load_model).transpose()?;

    let gt_motions: Vec<EgoMotion> = samples.iter().map(|s| s.gt).collect();
    // Without a checkpoint the ground truth is evaluated against itself,
    // which checks the dataset and metric plumbing end to end.
    let predicted: Vec<EgoMotion> = match &model {
        Some(m) => samples
            .iter()
            .map(|s| m.predict_egomotion(&s.flow, None, &cam))
            .collect::<Result<_, _>>()?,
        None => gt_motions.clone(),
    };

    match metric {
        Some("ate") => {
            let pred_traj = integrate_trajectory(&predicted, &Pose::identity());
            let gt_traj = integrate_trajectory(&gt_motions, &Pose::identity());
            let report = evalkit::ate(&pred_traj, &gt_traj, &AteOptions::default())?;
            evalkit::write_metric_csv(ctx.create("ate.csv")?, "ate", &report)?;
            println!("ate mean = {} std = {}", sig9(report.mean), sig9(report.std));
        }
        Some("rpe") => {
            let (trans, rot) = evalkit::rpe(&predicted, &gt_motions)?;
            evalkit::write_metric_csv(ctx.create("rpe_trans.csv")?, "rpe_trans", &trans)?;
            evalkit::write_metric_csv(ctx.create("rpe_rot.csv")?, "rpe_rot", &rot)?;
            println!(
                "rpe trans mean = {} std = {}",
                sig9(trans.mean),
                sig9(trans.std)
            );
            println!("rpe rot mean = {} std = {}", sig9(rot.mean), sig9(rot.std));
        }
        Some(_) | None => {}
    }

    if let Some(ks) = ks {
        let model = model.as_ref().expect("checked above");
        let rows = evalkit::sparsity_sweep(model, &cam, &samples, &ks)?;
        evalkit::write_sweep_csv(ctx.create("sweep.csv")?, &rows)?;
        for row in &rows {
            println!("k = {} error = {}", row.keep_percent, sig9(row.error));
        }
    }
    Ok(())
}

/// Comma-separated top-k percentages, reported descending.
fn parse_sweep_list(list: &str) -> Result<Vec<f64>, CliError> {
    let mut ks = Vec::new();
    for tok in list.split(',') {
        let k: f64 = tok
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad sweep value {tok:?}")))?;
        if !(k > 0.0 && k <= 100.0) {
            return Err(CliError::Usage(format!("sweep value {k} outside (0, 100]")));
        }
        ks.push(k);
    }
    ks.sort_by(|a, b| b.total_cmp(a));
    Ok(ks)
}

fn viz(
    ctx: &Context,
    flow: Option<&Path>,
    trajectories: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    let raster = match (flow, trajectories.is_empty()) {
        (Some(_), false) | (None, true) => {
            return Err(CliError::Usage(
                "pick exactly one of --flow or --trajectory".into(),
            ));
        }
        (Some(path), true) => flowviz::flow_to_image(&read_flow(path)?, None),
        (None, false) => {
            let mut trajs = Vec::with_capacity(trajectories.len());
            let mut labels = Vec::with_capacity(trajectories.len());
            for path in trajectories {
                trajs.push(
                    dataio::read_pose_file(open(path)?)
                        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
                );
                labels.push(
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| path.display().to_string()),
                );
            }
            let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            flowviz::trajectory_plot(&trajs, &label_refs)?
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    flowviz::write_raster(BufWriter::new(File::create(out)?), &raster)?;
    ctx.say(format!("wrote {}", out.display()));
    Ok(())
}
