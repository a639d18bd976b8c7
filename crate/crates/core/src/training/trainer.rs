use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::stats::RunStats;
use crate::error::{Error, Result};
use crate::ingestion::Example;
use crate::metrics::{corpus_bleu, BleuReport};
use crate::model::{EncoderKind, Model, ModelConfig, Prepared, Vocabs};
use crate::numerics::rng::{stream_rng, Stream};
use crate::numerics::{check_rate, AdamConfig, AdamState, Dropout, ParamSnapshot, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Epochs without dev improvement before stopping; `None` never stops
    /// early.
    pub patience: Option<usize>,
    pub max_decode_len: usize,
    pub clip_norm: Option<f64>,
    /// Smooth zero n-gram counts in the dev score used for model selection.
    pub dev_smoothing: bool,
    /// Batches per length-sorted window.
    pub sort_window: usize,
    /// Write `epoch{N}.ckpt` after every epoch.
    pub save_every_epoch: bool,
    /// Draw a new sibling order for every linearised training source at each
    /// epoch after the first, instead of keeping one order throughout.
    pub relinearise_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_max: 30,
            batch_size: 64,
            lr: 0.001,
            dropout: 0.3,
            seed: 1,
            patience: Some(5),
            max_decode_len: 60,
            clip_norm: None,
            dev_smoothing: true,
            sort_window: 8,
            save_every_epoch: true,
            relinearise_each_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 || self.batch_size == 0 || self.max_decode_len == 0 || self.sort_window == 0 {
            return Err(Error::config(
                "epochs_max, batch_size, max_decode_len and sort_window must be positive",
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == Some(0) {
            return Err(Error::config("patience must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 {
                return Err(Error::config("clip_norm must be positive"));
            }
        }
        check_rate(self.dropout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Per-token mean negative log likelihood over the epoch.
    pub train_loss: f64,
    /// Summed negative log likelihood over the epoch.
    pub train_nll_sum: f64,
    pub dev_bleu: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_bleu: f64,
    pub stopped_early: bool,
    /// Gold probabilities clamped during training.
    pub clamped: usize,
}

/// Dev-score based stopping rule.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: Option<usize>,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records an epoch's score. Returns whether it is a new best and
    /// whether training should stop.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|(_, b)| score > b);
        if improved {
            self.best = Some((epoch, score));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let stop = self.patience.is_some_and(|p| self.since_best >= p);
        (improved, stop)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub bleu: BleuReport,
    pub outputs: Vec<Vec<String>>,
}

pub fn prepare_all(model: &Model, examples: &[Example]) -> Result<Vec<Prepared>> {
    examples.iter().map(|e| model.prepare(e)).collect()
}

/// Decodes every example and scores the outputs against the targets.
pub fn evaluate(model: &Model, examples: &[Example], max_len: usize, beam: usize, smoothing: bool) -> Result<Evaluation> {
    let mut outputs = Vec::with_capacity(examples.len());
    for ex in examples {
        let p = model.prepare(ex)?;
        outputs.push(model.decode(&p, max_len, beam)?.0);
    }
    let refs: Vec<Vec<Vec<String>>> = examples.iter().map(|e| vec![e.target.clone()]).collect();
    let bleu = corpus_bleu(&outputs, &refs, 4, smoothing)?;
    Ok(Evaluation { bleu, outputs })
}

/// Teacher-forced argmax accuracy over all target tokens (end token
/// included) and the number of examples whose greedy output equals the
/// target exactly.
pub fn fit_report(model: &Model, examples: &[Example], max_len: usize) -> Result<(f64, usize)> {
    let mut right = 0usize;
    let mut total = 0usize;
    let mut exact = 0usize;
    for ex in examples {
        let p = model.prepare(ex)?;
        let pred = model.teacher_forced_predictions(&p)?;
        right += pred.iter().zip(&p.target).filter(|(a, b)| a == b).count();
        total += p.target.len();
        if model.decode(&p, max_len, 1)?.0 == ex.target {
            exact += 1;
        }
    }
    Ok((if total == 0 { 0.0 } else { right as f64 / total as f64 }, exact))
}

/// Epoch batching: shuffle, sort windows of `sort_window` batches by target
/// length, then cut into batches.
fn epoch_batches<R: rand::Rng>(lengths: &[usize], cfg: &TrainConfig, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    let window = cfg.batch_size * cfg.sort_window;
    let mut batches = Vec::new();
    for chunk in order.chunks_mut(window) {
        chunk.sort_by_key(|&i| lengths[i]);
        batches.extend(chunk.chunks(cfg.batch_size).map(<[usize]>::to_vec));
    }
    batches
}

fn log_header(cfg: &TrainConfig, model: &Model) -> serde_json::Value {
    serde_json::json!({
        "header": {
            "dev_bleu_tokens": "model output before relexicalisation",
            "dev_smoothing": cfg.dev_smoothing,
            "seed": cfg.seed,
            "relinearise_each_epoch": cfg.relinearise_each_epoch,
            "params": model.param_count(),
            "vocab_fingerprint": model.vocabs.fingerprint(),
        }
    })
}

/// Trains `model` in place and leaves it holding the parameters of the best
/// dev epoch. With `out_dir`, writes `log.jsonl`, `epoch{N}.ckpt` and
/// `best.ckpt` there.
pub fn train(
    model: &mut Model,
    cfg: &TrainConfig,
    train_set: &[Example],
    dev_set: &[Example],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Data("training needs non-empty train and dev splits".into()));
    }
    let mut prepared = prepare_all(model, train_set)?;
    let lengths: Vec<usize> = prepared.iter().map(Prepared::target_len).collect();

    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("log.jsonl");
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{}", log_header(cfg, model)).map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };

    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            clip_norm: cfg.clip_norm,
            ..AdamConfig::default()
        },
        &model.store,
    );
    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout);
    let mut linearise_rng = stream_rng(cfg.seed, Stream::Linearise);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = ParamSnapshot::capture(&model.store);
    let mut log = Vec::new();
    let mut clamped = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs_max {
        let started = Instant::now();
        if cfg.relinearise_each_epoch && epoch > 1 && model.config.encoder == EncoderKind::Bilstm {
            let seed = linearise_rng.next_u64();
            prepared = train_set
                .iter()
                .map(|ex| model.prepare_relinearised(ex, seed))
                .collect::<Result<_>>()?;
        }
        let mut nll_sum = 0.0;
        let mut tokens = 0usize;
        for (b, idx) in epoch_batches(&lengths, cfg, &mut shuffle_rng).into_iter().enumerate() {
            let items: Vec<(&str, &[usize])> = idx
                .iter()
                .map(|&i| (prepared[i].id.as_str(), prepared[i].target.as_slice()))
                .collect();
            let batch = Batch::new(&items, cfg.batch_size)?;
            let grads = {
                let mut tape = Tape::new(&model.store);
                let mut drop = Dropout::train(cfg.dropout, &mut dropout_rng)?;
                let mut terms = Vec::with_capacity(idx.len());
                for &i in &idx {
                    let nll = model.loss(&mut tape, &prepared[i], &mut drop)?;
                    clamped += nll.clamped;
                    terms.push(nll.loss);
                }
                let total = tape.add_all(&terms)?;
                let value = tape.value(total).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss at epoch {epoch}, batch {b} (examples {})",
                        batch.ids.join(", ")
                    )));
                }
                nll_sum += value;
                tokens += batch.real_tokens();
                let mean = tape.scale(total, 1.0 / batch.real_tokens() as f64);
                tape.backward(mean)?
            };
            model.store.accumulate(&grads);
            adam.step(&mut model.store)?;
        }

        let dev = evaluate(model, dev_set, cfg.max_decode_len, 1, cfg.dev_smoothing)?;
        let entry = EpochLog {
            epoch,
            train_loss: nll_sum / tokens.max(1) as f64,
            train_nll_sum: nll_sum,
            dev_bleu: dev.bleu.bleu,
            lr: cfg.lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: loss {:.4}, dev BLEU {:.4}",
            entry.train_loss, entry.dev_bleu
        );
        if let Some((f, path)) = log_file.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&entry)?).map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let (Some(dir), true) = (out_dir, cfg.save_every_epoch) {
            model.save(&dir.join(format!("epoch{epoch}.ckpt")))?;
        }
        let (improved, stop) = stopper.observe(epoch, entry.dev_bleu);
        log.push(entry);
        if improved {
            best_params = ParamSnapshot::capture(&model.store);
            if let Some(dir) = out_dir {
                model.save(&dir.join("best.ckpt"))?;
            }
        }
        if stop {
            stopped_early = true;
            break;
        }
    }

    if clamped > 0 {
        warn!("{clamped} gold probabilities were clamped to the floor");
    }
    best_params.restore(&mut model.store)?;
    let (best_epoch, best_dev_bleu) = stopper.best().unwrap_or((0, 0.0));
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_dev_bleu,
        stopped_early,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub dev_bleu: f64,
    pub test_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRunOutcome {
    pub runs: Vec<RunRecord>,
    pub test_bleu: RunStats,
}

/// Trains `n_runs` models with seeds `base + k` and scores each on `test`.
/// With `out_dir`, run `k` writes into `run{k}/`, including `result.json`.
#[allow(clippy::too_many_arguments)]
pub fn multi_run(
    model_config: &ModelConfig,
    vocabs: &Vocabs,
    cfg: &TrainConfig,
    train_set: &[Example],
    dev_set: &[Example],
    test_set: &[Example],
    n_runs: usize,
    out_dir: Option<&Path>,
) -> Result<MultiRunOutcome> {
    multi_run_with(model_config, vocabs, cfg, train_set, dev_set, test_set, n_runs, out_dir, |_| Ok(()))
}

/// [`multi_run`] with a hook applied to each freshly built model before
/// training, e.g. to load pretrained embeddings.
#[allow(clippy::too_many_arguments)]
pub fn multi_run_with<F>(
    model_config: &ModelConfig,
    vocabs: &Vocabs,
    cfg: &TrainConfig,
    train_set: &[Example],
    dev_set: &[Example],
    test_set: &[Example],
    n_runs: usize,
    out_dir: Option<&Path>,
    mut init: F,
) -> Result<MultiRunOutcome>
where
    F: FnMut(&mut Model) -> Result<()>,
{
    if n_runs == 0 {
        return Err(Error::config("n_runs must be at least 1"));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for k in 0..n_runs {
        let seed = cfg.seed.wrapping_add(k as u64);
        let mut model = Model::new(
            ModelConfig {
                seed: model_config.seed.wrapping_add(k as u64),
                ..model_config.clone()
            },
            vocabs.clone(),
        )?;
        init(&mut model)?;
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        let dir = out_dir.map(|d| d.join(format!("run{k}")));
        let outcome = train(&mut model, &run_cfg, train_set, dev_set, dir.as_deref())?;
        let test = evaluate(&model, test_set, cfg.max_decode_len, 1, false)?;
        let record = RunRecord {
            run: k,
            seed,
            best_epoch: outcome.best_epoch,
            dev_bleu: outcome.best_dev_bleu,
            test_bleu: test.bleu.bleu,
        };
        if let Some(dir) = &dir {
            let path = dir.join("result.json");
            fs::write(&path, serde_json::to_string_pretty(&record)?).map_err(|e| Error::io(&path, e))?;
        }
        runs.push(record);
    }
    let test_bleu = RunStats::from_values(runs.iter().map(|r| r.test_bleu).collect())?;
    Ok(MultiRunOutcome { runs, test_bleu })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn increasing_scores_never_stop() {
        let mut s = EarlyStopping::new(Some(5));
        for e in 1..=30 {
            let (improved, stop) = s.observe(e, e as f64 / 100.0);
            assert!(improved && !stop);
        }
        assert_eq!(s.best().unwrap().0, 30);
    }

    #[test]
    fn peak_at_three_stops_at_eight() {
        let mut s = EarlyStopping::new(Some(5));
        let scores = [0.1, 0.2, 0.5, 0.4, 0.4, 0.3, 0.45, 0.49, 0.6];
        let mut stopped_at = None;
        for (i, &b) in scores.iter().enumerate() {
            if s.observe(i + 1, b).1 {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(8));
        assert_eq!(s.best(), Some((3, 0.5)));
    }

    #[test]
    fn batches_cover_every_example_once() {
        let lengths: Vec<usize> = (0..23).map(|i| (i * 7) % 11).collect();
        let cfg = TrainConfig {
            batch_size: 4,
            sort_window: 2,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = epoch_batches(&lengths, &cfg, &mut rng);
        assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= 4));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().unwrap_err().is_contract_violation());
    }
}
