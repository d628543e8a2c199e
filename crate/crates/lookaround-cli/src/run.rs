//! Implementations of the six subcommands.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lookaround::autodiff::ParamStore;
use lookaround::completer::{init_params, rollout, ModelConfig, RolloutPolicy};
use lookaround::evalsuite::{
    evaluate_policies, run_transfer, train_classifier_random_policy, ClassifierConfig, PolicySpec,
};
use lookaround::gridworld::{
    generate_world, load_viewgrid, save_viewgrid, GridDims, ViewGrid, Viewpoint, WorldFamily,
    WorldSpec,
};
use lookaround::trainer::{load_checkpoint, pretrain_t1, save_checkpoint, train_policy,
    TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{
    check_optim, require, resolve_episode_len, DumpArgs, EvalArgs, Family, GenArgs, PretrainArgs,
    TrainArgs, TransferArgs,
};
use crate::errors::CliError;
use crate::manifest::write_manifest;
use crate::montage;

/// The fixed desk-scale grid every command works on: 4 elevations by
/// 8 azimuths of 16x16 grayscale views.
pub const DESK_DIMS: GridDims =
    GridDims { n_elev: 4, m_azim: 8, view_h: 16, view_w: 16, channels: 1 };

/// Modules held fixed during policy training: only the aggregator and the
/// act stage keep learning once single-glimpse pretraining has shaped the
/// encoder and decoder.
const POLICY_FREEZE: [&str; 3] = ["sense", "fuse", "decode"];

/// Loads every `.vgrd` file in `dir`, in filename order.
fn load_worlds(dir: &Path) -> Result<Vec<ViewGrid>, CliError> {
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|ext| ext == "vgrd") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Format(format!("no .vgrd worlds in {}", dir.display())));
    }
    let mut worlds = Vec::with_capacity(paths.len());
    for path in &paths {
        worlds.push(load_viewgrid(path)?);
    }
    Ok(worlds)
}

/// The single grid shape shared by every world in a dataset.
fn uniform_dims(worlds: &[ViewGrid]) -> Result<GridDims, CliError> {
    let dims = worlds[0].dims();
    if worlds.iter().any(|w| w.dims() != dims) {
        return Err(CliError::Format("dataset mixes grid dimensions".into()));
    }
    Ok(dims)
}

/// Checks that a loaded checkpoint has exactly the parameters `model` would
/// create — same names, same shapes — so a checkpoint trained under one
/// preset cannot silently drive another.
fn check_layout(params: &ParamStore, model: &ModelConfig) -> Result<(), CliError> {
    let reference = init_params(model, &mut ChaCha8Rng::seed_from_u64(0));
    if params.len() != reference.len() {
        return Err(CliError::Format(format!(
            "checkpoint holds {} parameters but this model has {}; \
             was it trained under a different preset or grid?",
            params.len(),
            reference.len()
        )));
    }
    for (name, value) in reference.iter() {
        let Some(loaded) = params.get(name) else {
            return Err(CliError::Format(format!("checkpoint is missing parameter {name}")));
        };
        if loaded.shape() != value.shape() {
            return Err(CliError::Format(format!(
                "checkpoint parameter {name} has shape {:?}, expected {:?}",
                loaded.shape(),
                value.shape()
            )));
        }
    }
    Ok(())
}

fn log_writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    require(args.count >= 1, "--count", "at least one world is required")?;
    let family_of = |index: usize| -> Result<WorldFamily, CliError> {
        match args.family {
            Family::Lighthouse => {
                let glyph_count = args.classes.unwrap_or(4);
                require(
                    (1..=255).contains(&glyph_count),
                    "--classes",
                    "lighthouse glyph count must lie in 1..=255",
                )?;
                Ok(WorldFamily::Lighthouse { glyph_count, sigma: 2.0 })
            }
            Family::GradientSky => {
                require(args.classes.is_none(), "--classes", "gradient-sky has no classes")?;
                Ok(WorldFamily::GradientSky)
            }
            Family::TexturedHalves => {
                let class_count = args.classes.unwrap_or(10);
                require(class_count >= 2, "--classes", "at least two texture classes are needed")?;
                Ok(WorldFamily::TexturedHalves { class_count, class: index as u32 % class_count })
            }
        }
    };
    fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let spec = WorldSpec {
            family: family_of(i)?,
            dims: DESK_DIMS,
            seed: args.seed.wrapping_add(i as u64),
        };
        let world = generate_world(&spec)?;
        let path = args.out.join(format!("world_{i:05}.vgrd"));
        save_viewgrid(&world, &path)?;
        outputs.push(path);
    }
    write_manifest(&args.out, "gen", args.seed, &[], &outputs)?;
    eprintln!("wrote {} worlds to {}", args.count, args.out.display());
    Ok(())
}

pub fn pretrain(args: &PretrainArgs) -> Result<(), CliError> {
    check_optim(args.updates, args.batch, args.lr, args.momentum)?;
    require(
        args.episode_len.is_none_or(|t| t == 1),
        "--T",
        "pretraining runs single-glimpse episodes; drop the flag or pass 1",
    )?;
    let worlds = load_worlds(&args.data)?;
    let model = ModelConfig::desk(uniform_dims(&worlds)?, args.preset.motion(), 1);
    let mut cfg = TrainConfig::new(args.seed, 1);
    cfg.lr = args.lr;
    cfg.momentum = args.momentum;
    cfg.batch = args.batch;
    cfg.pretrain_updates = args.updates;

    fs::create_dir_all(&args.out)?;
    let log_path = args.out.join("train.log");
    let mut log = log_writer(&log_path)?;
    let state = pretrain_t1(&worlds, &model, &cfg, Some(&mut log))?;
    log.flush()?;
    let ckpt_path = args.out.join("checkpoint.glmp");
    save_checkpoint(&state, &ckpt_path)?;
    write_manifest(&args.out, "pretrain", args.seed, &[args.data.clone()], &[ckpt_path, log_path])?;
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    check_optim(args.updates, args.batch, args.lr, args.momentum)?;
    require((0.0..1.0).contains(&args.beta), "--beta", "must lie in [0, 1)")?;
    let episode_len = resolve_episode_len(args.episode_len, args.preset)?;
    let worlds = load_worlds(&args.data)?;
    let model = ModelConfig::desk(uniform_dims(&worlds)?, args.preset.motion(), episode_len);
    let state = load_checkpoint(&args.checkpoint)?;
    check_layout(&state.params, &model)?;
    let mut cfg = TrainConfig::new(args.seed, episode_len);
    cfg.lr = args.lr;
    cfg.momentum = args.momentum;
    cfg.batch = args.batch;
    cfg.updates = args.updates;
    cfg.baseline_decay = args.beta;
    cfg.freeze = POLICY_FREEZE.iter().map(|m| m.to_string()).collect();

    fs::create_dir_all(&args.out)?;
    let log_path = args.out.join("train.log");
    let mut log = log_writer(&log_path)?;
    let state = train_policy(&worlds, &model, &cfg, state, Some(&mut log))?;
    log.flush()?;
    let ckpt_path = args.out.join("checkpoint.glmp");
    save_checkpoint(&state, &ckpt_path)?;
    write_manifest(
        &args.out,
        "train",
        args.seed,
        &[args.data.clone(), args.checkpoint.clone()],
        &[ckpt_path, log_path],
    )?;
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let episode_len = resolve_episode_len(args.episode_len, args.preset)?;
    let worlds = load_worlds(&args.data)?;
    let model = ModelConfig::desk(uniform_dims(&worlds)?, args.preset.motion(), episode_len);
    let state = load_checkpoint(&args.checkpoint)?;
    check_layout(&state.params, &model)?;
    let specs = [
        PolicySpec::Learned,
        PolicySpec::Random,
        PolicySpec::LargeAction { action: None },
        PolicySpec::PeekSaliency,
        PolicySpec::OneView,
    ];
    let table = evaluate_policies(
        &specs,
        &worlds,
        &state.params,
        &model,
        episode_len,
        args.mode.into(),
        args.seed,
    )?;
    let csv = table.to_csv();
    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("completion.csv");
    fs::write(&csv_path, &csv)?;
    print!("{csv}");
    write_manifest(
        &args.out,
        "eval",
        args.seed,
        &[args.data.clone(), args.checkpoint.clone()],
        &[csv_path],
    )?;
    Ok(())
}

pub fn transfer(args: &TransferArgs) -> Result<(), CliError> {
    check_optim(args.updates, args.batch, args.lr, args.momentum)?;
    let episode_len = resolve_episode_len(args.episode_len, args.preset)?;
    let train_worlds = load_worlds(&args.data.join("train"))?;
    let test_worlds = load_worlds(&args.data.join("test"))?;
    let model = ModelConfig::desk(uniform_dims(&train_worlds)?, args.preset.motion(), episode_len);
    let state = load_checkpoint(&args.checkpoint)?;
    check_layout(&state.params, &model)?;
    let mut cfg = ClassifierConfig::new(args.seed, episode_len);
    cfg.lr = args.lr;
    cfg.momentum = args.momentum;
    cfg.batch = args.batch;
    cfg.updates = args.updates;

    fs::create_dir_all(&args.out)?;
    let log_path = args.out.join("classifier.log");
    let mut log = log_writer(&log_path)?;
    let model_a = train_classifier_random_policy(&train_worlds, &model, &cfg, Some(&mut log))?;
    log.flush()?;
    let table = run_transfer(
        &model_a,
        &state.params,
        &model,
        &test_worlds,
        episode_len,
        args.mode.into(),
        args.seed,
    )?;
    let csv = table.to_csv();
    let csv_path = args.out.join("transfer.csv");
    fs::write(&csv_path, &csv)?;
    print!("{csv}");
    write_manifest(
        &args.out,
        "transfer",
        args.seed,
        &[args.data.clone(), args.checkpoint.clone()],
        &[csv_path, log_path],
    )?;
    Ok(())
}

pub fn dump(args: &DumpArgs) -> Result<(), CliError> {
    require(args.count >= 1, "--count", "at least one episode is required")?;
    let episode_len = resolve_episode_len(args.episode_len, args.preset)?;
    let worlds = load_worlds(&args.data)?;
    require(
        args.count <= worlds.len(),
        "--count",
        "asks for more worlds than the dataset holds",
    )?;
    let model = ModelConfig::desk(uniform_dims(&worlds)?, args.preset.motion(), episode_len);
    let state = load_checkpoint(&args.checkpoint)?;
    check_layout(&state.params, &model)?;

    fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::with_capacity(2 * args.count);
    for (i, world) in worlds.iter().take(args.count).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(i as u64);
        let dims = world.dims();
        let start = Viewpoint {
            elev: rng.random_range(0..dims.n_elev),
            azim: rng.random_range(0..dims.m_azim),
        };
        let trace = rollout(
            world,
            start,
            &model,
            &state.params,
            RolloutPolicy::Learned(args.mode.into()),
            &mut rng,
        )?;
        let png_path = args.out.join(format!("episode_{i:05}.png"));
        montage::save_montage(&trace, dims, &png_path)?;
        let txt_path = args.out.join(format!("episode_{i:05}.txt"));
        fs::write(&txt_path, montage::sidecar(&trace))?;
        outputs.push(png_path);
        outputs.push(txt_path);
    }
    write_manifest(
        &args.out,
        "dump",
        args.seed,
        &[args.data.clone(), args.checkpoint.clone()],
        &outputs,
    )?;
    eprintln!("wrote {} episode dumps to {}", args.count, args.out.display());
    Ok(())
}
