use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hdrtv_data::{
    dataset_scenes, load_scene, load_scenes, make_synthetic, read_frame, write_frame, BitDepth, SynthConfig,
};
use hdrtv_metrics::{score_frame, MetricReport};
use hdrtv_model::{Checkpoint, DslNet, ModelConfig};
use hdrtv_train::{evaluate, predict_frame, Trainer, CHECKPOINT_FILE};

use crate::config::{parse_size, CliConfig, ModelOverrides};
use crate::{selftest, CliError, RUN_ROOT_ENV};

#[derive(Debug, Parser)]
#[command(name = "hdrtv", version, about = "Multi-frame SDR-to-HDR conversion")]
pub struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base directory for relative output paths.
    #[arg(long, global = true, env = RUN_ROOT_ENV)]
    pub run_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write procedural SDR/HDR scene pairs.
    MakeSynthetic(SynthArgs),
    /// Train a preset and report metrics on held-out scenes.
    Train(TrainArgs),
    /// Convert one frame of a scene with a trained checkpoint.
    Infer(InferArgs),
    /// Score predicted HDR frames against references.
    Eval(EvalArgs),
    /// Gradient checks, oracle equivalences and the parameter budget.
    Selftest,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// HxW
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// One of M0..M7, full, tiny, mresnet.
    #[arg(long)]
    pub preset: Option<String>,
    /// Dataset root: a manifest.txt or scene subdirectories.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for the log, checkpoint and report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trailing scenes kept out of training for the final report.
    #[arg(long)]
    pub holdout: Option<usize>,
    /// Rescale the schedule to this many iterations.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from the checkpoint in the run directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub frame_index: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn required<T>(v: Option<T>, flag: &str, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag} (config key {key})")))
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn data_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Runs one parsed invocation; `out` receives the human-readable result lines.
pub fn run(cli: Cli, out: &mut dyn FnMut(&str)) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if cli.run_root.is_some() {
        cfg.run_root = cli.run_root;
    }
    match cli.command {
        Command::MakeSynthetic(a) => synthesize(cfg, a, out),
        Command::Train(a) => train(cfg, a, out),
        Command::Infer(a) => infer(cfg, a, out),
        Command::Eval(a) => eval(cfg, a, out),
        Command::Selftest => {
            out(&format!("effective config:\n{}", cfg.to_toml()));
            if selftest::run_all(|line| out(line)) {
                Ok(())
            } else {
                Err(CliError::Numeric("selftest failed".into()))
            }
        }
    }
}

fn synthesize(mut cfg: CliConfig, a: SynthArgs, out: &mut dyn FnMut(&str)) -> Result<(), CliError> {
    let s = &mut cfg.synthetic;
    s.scenes = Some(a.scenes.or(s.scenes).unwrap_or(4));
    s.frames = Some(a.frames.or(s.frames).unwrap_or(10));
    s.size = Some(a.size.or(s.size.take()).unwrap_or_else(|| "32x32".into()));
    s.seed = Some(a.seed.or(s.seed).unwrap_or(0));
    s.out = Some(required(a.out.or(s.out.take()), "out", "synthetic.out")?);
    let (height, width) = parse_size(s.size.as_deref().expect("set above"))?;
    let (scenes, frames, seed) =
        (s.scenes.expect("set above"), s.frames.expect("set above"), s.seed.expect("set above"));
    if scenes == 0 || frames == 0 {
        return Err(CliError::Usage("scenes and frames must be positive".into()));
    }
    let dir = cfg.output_path(cfg.synthetic.out.as_ref().expect("set above"));
    cfg.write_snapshot(&parent_dir(&dir), "make-synthetic")?;
    let synth = SynthConfig { scenes, frames, height, width, seed, ..Default::default() };
    let dirs = make_synthetic(&synth, &dir)?;
    out(&format!("wrote {} scenes of {frames} frames ({height}x{width}) to {}", dirs.len(), dir.display()));
    Ok(())
}

fn train(mut cfg: CliConfig, a: TrainArgs, out: &mut dyn FnMut(&str)) -> Result<(), CliError> {
    let t = &mut cfg.train;
    let data_root = required(a.data.or(t.data.take()), "data", "train.data")?;
    t.data = Some(data_root.clone());
    t.out = Some(required(a.out.or(t.out.take()), "out", "train.out")?);
    let preset = a.preset.or(t.preset.take()).unwrap_or_else(|| "full".into());
    let model_cfg = t.model.apply(ModelConfig::preset(&preset)?);
    model_cfg.validate()?;
    t.preset = Some(preset);
    t.model = ModelOverrides::resolved(&model_cfg);
    if let Some(seed) = a.seed.or(t.seed) {
        t.optim.seed = seed;
    }
    t.seed = Some(t.optim.seed);
    if let Some(n) = a.iters.or(t.iters) {
        t.optim = t.optim.clone().with_total(n);
        t.iters = Some(n);
    }
    t.optim.validate()?;
    let holdout = a.holdout.or(t.holdout).unwrap_or(1);
    t.holdout = Some(holdout);
    let resume = a.resume || t.resume.unwrap_or(false);
    t.resume = Some(resume);
    let optim = t.optim.clone();

    let run_dir = cfg.output_path(cfg.train.out.as_ref().expect("set above"));
    cfg.write_snapshot(&run_dir, "train")?;

    let mut scenes = load_scenes(&dataset_scenes(&data_root)?)?;
    if holdout >= scenes.len() {
        return Err(CliError::Usage(format!("holdout {holdout} leaves no training scenes out of {}", scenes.len())));
    }
    let test = scenes.split_off(scenes.len() - holdout);
    let ckpt_path = run_dir.join(CHECKPOINT_FILE);
    let mut trainer = if ckpt_path.exists() {
        if !resume {
            return Err(CliError::Usage(format!(
                "{} exists; pass --resume or choose another --out",
                ckpt_path.display()
            )));
        }
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if ckpt.config != model_cfg {
            return Err(CliError::Usage(format!("{} was trained with a different model config", ckpt_path.display())));
        }
        Trainer::resume(ckpt, scenes)?
    } else {
        Trainer::new(DslNet::new(model_cfg, optim.seed)?, optim, scenes)?
    };
    out(&format!(
        "training {} ({} parameters) from iteration {} to {}",
        trainer.model().config().preset,
        trainer.model().param_count(),
        trainer.iter(),
        trainer.schedule().total
    ));
    let records = trainer.fit(&run_dir)?;
    if let Some(last) = records.last() {
        out(&format!("final training L1 {:.6} at iteration {}", last.loss, last.iter));
    }

    let (report, split) = if test.is_empty() {
        log::warn!("no held-out scenes; reporting on the training scenes");
        (evaluate(trainer.model(), trainer.data())?, "training")
    } else {
        (evaluate(trainer.model(), &test)?, "held-out")
    };
    let report_path = run_dir.join("report.txt");
    fs::write(&report_path, report.to_text()).map_err(data_err(&report_path))?;
    if let Some((p, s, d)) = report.mean() {
        out(&format!("{split} mean: PSNR {p:.4} dB, SR-SIM {s:.6}, deltaE_ITP {d:.4} ({})", report_path.display()));
    }
    Ok(())
}

fn infer(mut cfg: CliConfig, a: InferArgs, out: &mut dyn FnMut(&str)) -> Result<(), CliError> {
    let s = &mut cfg.infer;
    s.checkpoint = Some(required(a.checkpoint.or(s.checkpoint.take()), "checkpoint", "infer.checkpoint")?);
    s.scene = Some(required(a.scene.or(s.scene.take()), "scene", "infer.scene")?);
    s.frame_index = Some(required(a.frame_index.or(s.frame_index), "frame-index", "infer.frame_index")?);
    s.out = Some(required(a.out.or(s.out.take()), "out", "infer.out")?);
    let dest = cfg.output_path(cfg.infer.out.as_ref().expect("set above"));
    cfg.write_snapshot(&parent_dir(&dest), "infer")?;
    let s = &cfg.infer;

    let model = Checkpoint::load(s.checkpoint.as_ref().expect("set above"))?.into_model()?;
    let seq = load_scene(s.scene.as_ref().expect("set above"))?;
    let i = s.frame_index.expect("set above");
    if i >= seq.len() {
        return Err(CliError::Data(format!(
            "frame index {i} out of range: scene {} has {} frames",
            seq.scene_id,
            seq.len()
        )));
    }
    let pred = predict_frame(&model, &seq, i)?;
    if let Some(dir) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(data_err(dir))?;
    }
    write_frame(&dest, &pred, BitDepth::Sixteen)?;
    out(&format!("wrote {}", dest.display()));
    Ok(())
}

/// `NNNN.png` files of `dir`, or of `dir/hdr` when that exists.
fn hdr_frames(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let dir = if dir.join("hdr").is_dir() { dir.join("hdr") } else { dir.to_path_buf() };
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(&dir).map_err(data_err(&dir))? {
        let path = entry.map_err(data_err(&dir))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.strip_suffix(".png").is_some_and(|s| s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit())) {
            out.insert(name, path);
        }
    }
    Ok(out)
}

fn eval(mut cfg: CliConfig, a: EvalArgs, out: &mut dyn FnMut(&str)) -> Result<(), CliError> {
    let s = &mut cfg.eval;
    s.pred = Some(required(a.pred.or(s.pred.take()), "pred", "eval.pred")?);
    s.reference = Some(required(a.reference.or(s.reference.take()), "ref", "eval.ref")?);
    s.out = Some(required(a.out.or(s.out.take()), "out", "eval.out")?);
    let dest = cfg.output_path(cfg.eval.out.as_ref().expect("set above"));
    cfg.write_snapshot(&parent_dir(&dest), "eval")?;

    let pred = hdr_frames(cfg.eval.pred.as_ref().expect("set above"))?;
    let reference = hdr_frames(cfg.eval.reference.as_ref().expect("set above"))?;
    let only_pred: Vec<&String> = pred.keys().filter(|k| !reference.contains_key(*k)).collect();
    let only_ref: Vec<&String> = reference.keys().filter(|k| !pred.contains_key(*k)).collect();
    if !only_pred.is_empty() || !only_ref.is_empty() {
        let list = |v: &[&String]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            }
        };
        return Err(CliError::Data(format!(
            "frame sets differ: predictions without reference: {}; references without prediction: {}",
            list(&only_pred),
            list(&only_ref)
        )));
    }
    if pred.is_empty() {
        return Err(CliError::Data("no NNNN.png frames to score".into()));
    }
    let mut scores = Vec::with_capacity(pred.len());
    for (name, p) in &pred {
        let index: usize = name[..4].parse().expect("four digits");
        let a = read_frame(p, BitDepth::Sixteen)?;
        let b = read_frame(&reference[name], BitDepth::Sixteen)?;
        scores.push(score_frame(index, &a, &b).map_err(|e| CliError::Data(format!("{name}: {e}")))?);
    }
    let report = MetricReport::new(scores);
    if let Some(dir) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(data_err(dir))?;
    }
    fs::write(&dest, report.to_text()).map_err(data_err(&dest))?;
    if let Some((p, s, d)) = report.mean() {
        out(&format!("{} frames: PSNR {p:.4} dB, SR-SIM {s:.6}, deltaE_ITP {d:.4}", report.per_frame.len()));
    }
    Ok(())
}
