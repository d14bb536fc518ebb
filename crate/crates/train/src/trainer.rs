use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hdrtv_data::{sample_patches, SequencePair};
use hdrtv_model::{Checkpoint, DslNet, Mode};
use hdrtv_tensor::l1_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::Adam;
use crate::config::{Schedule, TrainConfig};
use crate::eval::batch_tensors;
use crate::{io_err, TrainError};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOSS_LOG_FILE: &str = "loss.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Everything besides parameters and moments needed to continue a run,
/// stored as the checkpoint metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    /// Completed iterations.
    pub iter: u64,
    pub adam_t: u64,
    /// ChaCha word position, decimal (it is a `u128`).
    pub rng_word_pos: String,
    pub rng_stream: u64,
    pub train: TrainConfig,
    pub train_digest: String,
    pub data_digest: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn train_digest(cfg: &TrainConfig) -> String {
    hex(&Sha256::digest(serde_json::to_vec(cfg).expect("config serializes")))
}

/// SHA-256 over scene ids, extents and every sample of both sides.
pub fn data_digest(data: &[SequencePair]) -> String {
    let mut h = Sha256::new();
    for seq in data {
        h.update((seq.scene_id.len() as u64).to_le_bytes());
        h.update(seq.scene_id.as_bytes());
        let (fh, fw) = seq.extents();
        for v in [seq.len(), fh, fw] {
            h.update((v as u64).to_le_bytes());
        }
        for f in seq.sdr.iter().chain(&seq.hdr) {
            for v in f.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex(&h.finalize())
}

pub struct Trainer {
    model: DslNet,
    cfg: TrainConfig,
    schedule: Schedule,
    adam: Adam,
    iter: u64,
    rng: ChaCha8Rng,
    data: Vec<SequencePair>,
    data_digest: String,
}

impl Trainer {
    pub fn new(model: DslNet, cfg: TrainConfig, data: Vec<SequencePair>) -> Result<Self, TrainError> {
        let schedule = cfg.schedule()?;
        check_data(&model, &cfg, &data)?;
        Ok(Trainer {
            adam: Adam::new(cfg.adam),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            data_digest: data_digest(&data),
            model,
            cfg,
            schedule,
            iter: 0,
            data,
        })
    }

    /// Continues the run saved in `ckpt`; `data` must be the data it was
    /// trained on.
    pub fn resume(ckpt: Checkpoint, data: Vec<SequencePair>) -> Result<Self, TrainError> {
        let meta = ckpt.metadata.as_deref().ok_or_else(|| TrainError::Checkpoint("no training state".into()))?;
        let state: TrainState =
            serde_json::from_str(meta).map_err(|e| TrainError::Checkpoint(format!("training state: {e}")))?;
        if train_digest(&state.train) != state.train_digest {
            return Err(TrainError::Checkpoint("training config digest mismatch".into()));
        }
        let digest = data_digest(&data);
        if digest != state.data_digest {
            return Err(TrainError::Checkpoint(format!(
                "checkpoint was trained on data {} but the given data hashes to {digest}",
                state.data_digest
            )));
        }
        let word_pos: u128 = state
            .rng_word_pos
            .parse()
            .map_err(|e| TrainError::Checkpoint(format!("rng position {:?}: {e}", state.rng_word_pos)))?;
        let aux = ckpt.aux.clone();
        let model = ckpt.into_model()?;
        let adam = Adam::from_records(state.train.adam, state.adam_t, &aux, model.params())?;
        let mut rng = ChaCha8Rng::seed_from_u64(state.train.seed);
        rng.set_stream(state.rng_stream);
        rng.set_word_pos(word_pos);
        let schedule = state.train.schedule()?;
        check_data(&model, &state.train, &data)?;
        Ok(Trainer { model, cfg: state.train, schedule, adam, iter: state.iter, rng, data, data_digest: digest })
    }

    pub fn model(&self) -> &DslNet {
        &self.model
    }

    pub fn into_model(self) -> DslNet {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn data(&self) -> &[SequencePair] {
        &self.data
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Completed iterations.
    pub fn iter(&self) -> u64 {
        self.iter
    }

    pub fn is_done(&self) -> bool {
        self.iter >= self.schedule.total
    }

    /// One optimizer update on a freshly sampled batch. A non-finite loss or
    /// gradient aborts before any parameter changes.
    pub fn step(&mut self) -> Result<LossRecord, TrainError> {
        let t = self.model.config().t;
        let mut samples = Vec::with_capacity(self.cfg.batch);
        for _ in 0..self.cfg.batch {
            let seq = &self.data[self.rng.random_range(0..self.data.len())];
            let center = self.rng.random_range(0..seq.len());
            samples.push(sample_patches(seq, center, t, self.cfg.patch, &mut self.rng)?);
        }
        let (frames, target) = batch_tensors(&samples)?;
        self.model.params().zero_grads();
        let pred = self.model.forward(&frames, Mode::Train)?;
        let loss = l1_loss(&pred, &target)?;
        let value = loss.item()? as f64;
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss { iter: self.iter });
        }
        loss.backward()?;
        let lr = self.schedule.lr(self.iter);
        self.adam.step(self.model.params_mut(), lr, self.cfg.clip_grad)?;
        let record = LossRecord { iter: self.iter, lr, loss: value };
        self.iter += 1;
        Ok(record)
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            iter: self.iter,
            adam_t: self.adam.t,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            rng_stream: self.rng.get_stream(),
            train: self.cfg.clone(),
            train_digest: train_digest(&self.cfg),
            data_digest: self.data_digest.clone(),
        }
    }

    pub fn checkpoint(&self) -> Result<Checkpoint, TrainError> {
        let mut ckpt = Checkpoint::of_model(&self.model);
        ckpt.metadata = Some(serde_json::to_string(&self.state()).expect("state serializes"));
        ckpt.aux = self.adam.to_records(self.model.params())?;
        Ok(ckpt)
    }

    /// Trains until iteration `stop` (capped at the schedule length), logging
    /// to `run_dir/loss.jsonl` and checkpointing to `run_dir/checkpoint.ckpt`
    /// every `checkpoint_every` iterations and at the end. On failure the last
    /// written checkpoint is left in place.
    pub fn fit_until(&mut self, run_dir: &Path, stop: u64) -> Result<Vec<LossRecord>, TrainError> {
        fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
        let mut log = LossLog::open(&run_dir.join(LOSS_LOG_FILE), self.iter)?;
        let ckpt_path = run_dir.join(CHECKPOINT_FILE);
        let stop = stop.min(self.schedule.total);
        let mut records = Vec::new();
        while self.iter < stop {
            let rec = self.step()?;
            log.append(&rec)?;
            records.push(rec);
            if rec.iter % 100 == 0 {
                log::info!("iter {} lr {:.3e} loss {:.6}", rec.iter, rec.lr, rec.loss);
            }
            if self.cfg.checkpoint_every > 0 && self.iter % self.cfg.checkpoint_every == 0 && self.iter < stop {
                self.checkpoint()?.save(&ckpt_path)?;
            }
        }
        self.checkpoint()?.save(&ckpt_path)?;
        Ok(records)
    }

    pub fn fit(&mut self, run_dir: &Path) -> Result<Vec<LossRecord>, TrainError> {
        self.fit_until(run_dir, self.schedule.total)
    }
}

fn check_data(model: &DslNet, cfg: &TrainConfig, data: &[SequencePair]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    let m = model.config().extent_multiple();
    if cfg.patch % m != 0 {
        return Err(TrainError::Config(format!("patch {} is not a multiple of {m}", cfg.patch)));
    }
    if let Some(seq) = data.iter().find(|s| s.extents().0 < cfg.patch || s.extents().1 < cfg.patch) {
        return Err(TrainError::Config(format!(
            "scene {} is {:?}, smaller than the {} patch",
            seq.scene_id,
            seq.extents(),
            cfg.patch
        )));
    }
    Ok(())
}

/// Append-only JSON lines `{"iter":…,"lr":…,"loss":…}`.
pub struct LossLog {
    path: PathBuf,
    file: fs::File,
}

impl LossLog {
    /// Opens `path` for a run resumed at iteration `from`: records at or past
    /// `from` (left by an interrupted run) are dropped, earlier ones kept.
    pub fn open(path: &Path, from: u64) -> Result<Self, TrainError> {
        let kept =
            if path.exists() { Self::read(path)?.into_iter().filter(|r| r.iter < from).collect() } else { Vec::new() };
        let mut file = fs::File::create(path).map_err(io_err(path))?;
        for r in &kept {
            writeln!(file, "{}", serde_json::to_string(r).expect("record serializes")).map_err(io_err(path))?;
        }
        Ok(LossLog { path: path.into(), file })
    }

    pub fn append(&mut self, rec: &LossRecord) -> Result<(), TrainError> {
        writeln!(self.file, "{}", serde_json::to_string(rec).expect("record serializes")).map_err(io_err(&self.path))
    }

    pub fn read(path: &Path) -> Result<Vec<LossRecord>, TrainError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| TrainError::Checkpoint(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect()
    }
}
