use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use reagent::data::{load_cloud, read_split, save_cloud, shape_set, write_split};
use reagent::env::{mat_rows, Episode};
use reagent::eval::{evaluate, make_eval_set, registered_source, run_agent, to_csv, trace_agent, EvalContext, Method, PolicyMode};
use reagent::geometry::{rotation_to_euler, RigidTransform};
use reagent::learn::Trainer;
use reagent::model::{self, AgentParams};
use reagent::rng::{derive_seed, stream};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, Common};

const TAG_TRAIN_SPLIT: u64 = 1;
const TAG_TEST_SPLIT: u64 = 2;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config(format!("missing --{name} (or the matching config key)")))
}

/// Writes to `path`, or to stdout when absent.
fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn load_params(path: &Path, cfg: &RunConfig) -> Result<AgentParams, CliError> {
    Ok(model::load_expecting(path, cfg.train.arch)?)
}

pub fn generate(common: &Common, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let root = required(out, &cfg.data_dir, "out")?;
    let n = cfg.corruption.n_total;
    let ds = &cfg.dataset;
    let train = shape_set(&ds.kinds, ds.train_shapes, n, derive_seed(cfg.seed, &[TAG_TRAIN_SPLIT]))?;
    let test = shape_set(&ds.kinds, ds.test_shapes, n, derive_seed(cfg.seed, &[TAG_TEST_SPLIT]))?;
    write_split(&root, "train", &train)?;
    write_split(&root, "test", &test)?;
    eprintln!("wrote {} train and {} test shapes to {}", train.len(), test.len(), root.display());
    Ok(())
}

pub fn train(common: &Common, data: Option<PathBuf>, out: Option<PathBuf>, epochs: Option<usize>) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let data = required(data, &cfg.data_dir, "data")?;
    let out = required(out, &cfg.out_dir, "out")?;
    let shapes = read_split(&data, "train")?;
    if shapes.is_empty() {
        return Err(CliError::Config(format!("no training shapes under {}", data.display())));
    }
    let test = if cfg.eval_every > 0 {
        let shapes = read_split(&data, "test")?;
        Some(make_eval_set(&shapes, &cfg.corruption, derive_seed(cfg.seed, &[TAG_TEST_SPLIT]))?)
    } else {
        None
    };
    let clouds = shapes.into_iter().map(|s| s.cloud).collect();
    let mut trainer = match &cfg.checkpoint {
        Some(p) => Trainer::with_params(load_params(p, &cfg)?, clouds, cfg.train, cfg.corruption, cfg.seed)?,
        None => Trainer::new(clouds, cfg.train, cfg.corruption, cfg.seed)?,
    };
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| io_err(&ckpt_dir, e))?;
    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?);
    for _ in 0..cfg.train.epochs {
        let mut stats = trainer.run_epoch()?;
        let done = trainer.epoch();
        if let Some(items) = test.as_ref().filter(|_| done % cfg.eval_every == 0) {
            let ctx = EvalContext {
                params: Some(&trainer.params),
                episode: cfg.train.episode(),
                icp: cfg.icp,
                expert: cfg.train.expert,
            };
            let rows = evaluate(&[Method::AgentArgmax], items, &ctx, cfg.seed)?;
            let s = &rows[0].0;
            stats.eval = Some(
                [
                    ("mae_r", s.mae_r),
                    ("mae_t", s.mae_t),
                    ("iso_r", s.iso_r),
                    ("iso_t", s.iso_t),
                    ("adi_auc", s.adi_auc),
                    ("modified_chamfer", s.modified_chamfer),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            );
        }
        writeln!(log, "{}", stats.to_json_line()).map_err(|e| io_err(&log_path, e))?;
        log.flush().map_err(|e| io_err(&log_path, e))?;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            model::save(&trainer.params, ckpt_dir.join(format!("epoch-{done:04}.ragt")))?;
        }
    }
    model::save(&trainer.params, out.join("model.ragt"))?;
    Ok(())
}

pub fn eval(
    common: &Common,
    data: Option<PathBuf>,
    split: &str,
    methods: &str,
    ckpt: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let methods = Method::parse_list(methods)?;
    let data = required(data, &cfg.data_dir, "data")?;
    let ckpt = ckpt.or_else(|| cfg.checkpoint.clone());
    let params = match &ckpt {
        Some(p) => Some(load_params(p, &cfg)?),
        None if methods.iter().any(|m| m.needs_agent()) => {
            return Err(CliError::Config("agent methods need --ckpt".into()));
        }
        None => None,
    };
    let shapes = read_split(&data, split)?;
    if shapes.is_empty() {
        return Err(CliError::Config(format!("dataset split '{split}' is empty")));
    }
    let items = make_eval_set(&shapes, &cfg.corruption, cfg.seed)?;
    let ctx = EvalContext {
        params: params.as_ref(),
        episode: cfg.train.episode(),
        icp: cfg.icp,
        expert: cfg.train.expert,
    };
    let rows: Vec<_> = evaluate(&methods, &items, &ctx, cfg.seed)?.into_iter().map(|(s, _)| s).collect();
    write_output(out.as_deref(), &to_csv(&rows)?)
}

#[derive(Serialize)]
struct RegistrationJson {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    euler_xyz_deg: [f64; 3],
    steps: usize,
}

fn start_episode(cfg: &RunConfig, pair: &crate::PairArgs) -> Result<(AgentParams, Episode), CliError> {
    let source = load_cloud(&pair.source)?;
    let target = load_cloud(&pair.target)?;
    let ckpt = pair
        .ckpt
        .clone()
        .or_else(|| cfg.checkpoint.clone())
        .ok_or_else(|| CliError::Config("missing --ckpt".into()))?;
    let params = load_params(&ckpt, cfg)?;
    let episode = Episode::reset(source, target, None, cfg.train.episode())?;
    Ok((params, episode))
}

fn policy_mode(pair: &crate::PairArgs) -> PolicyMode {
    if pair.sample {
        PolicyMode::Sample
    } else {
        PolicyMode::Argmax
    }
}

pub fn register(common: &Common, pair: &crate::PairArgs, registered: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (params, mut ep) = start_episode(&cfg, pair)?;
    let mut rng = stream(cfg.seed, &[]);
    run_agent(&params, &mut ep, policy_mode(pair), &mut rng, |_, _, _, _| Ok(()))?;
    let est: RigidTransform = ep.estimate();
    let json = RegistrationJson {
        rotation: mat_rows(&est.rotation),
        translation: est.translation.into(),
        euler_xyz_deg: rotation_to_euler(&est.rotation)?.to_degrees(),
        steps: ep.step_count(),
    };
    if let Some(p) = registered {
        save_cloud(&registered_source(ep.source0(), &est), &p)?;
    }
    let text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    write_output(pair.out.as_deref(), &text)
}

pub fn trace(common: &Common, pair: &crate::PairArgs) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (params, mut ep) = start_episode(&cfg, pair)?;
    let mut rng = stream(cfg.seed, &[]);
    let steps = trace_agent(&params, &mut ep, policy_mode(pair), &mut rng)?;
    let text: String = steps.iter().map(|s| s.to_json_line() + "\n").collect();
    write_output(pair.out.as_deref(), &text)
}
