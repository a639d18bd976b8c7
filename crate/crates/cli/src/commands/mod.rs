//! Command implementations.

mod ablate;
mod evaluate;
mod generate;
mod gradcheck;
mod preprocess;
mod train;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2t::decoder::load_pretrained_embeddings;
use g2t::ingestion::{read_jsonl, Example};
use g2t::model::Model;
use g2t::numerics::rng::{stream_rng, Stream};
use log::info;

use crate::artifacts::resolve_input;
use crate::settings::{overlay, Settings};
use crate::{Cli, Command, ModelArgs};

/// Shared per-invocation context.
pub struct Ctx {
    pub settings: Settings,
    pub data_root: Option<PathBuf>,
}

impl Ctx {
    pub fn input(&self, path: &Path) -> PathBuf {
        resolve_input(self.data_root.as_deref(), path)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        settings.set_seed(seed);
    }
    let mut ctx = Ctx {
        settings,
        data_root: cli.data_root,
    };
    match cli.command {
        Command::Preprocess(args) => preprocess::run(&mut ctx, args),
        Command::Train(args) => train::run(&mut ctx, args),
        Command::Generate(args) => generate::run(&mut ctx, args),
        Command::Evaluate(args) => evaluate::run(&mut ctx, args),
        Command::Ablate(args) => ablate::run(&mut ctx, args),
        Command::Gradcheck(args) => gradcheck::run(&mut ctx, args),
    }
}

/// Overlays model and optimisation flags onto the settings.
pub fn apply_model_args(s: &mut Settings, a: &ModelArgs) {
    let m = &mut s.model;
    overlay(&mut m.encoder, a.encoder);
    overlay(&mut m.gcn_layers, a.layers);
    overlay(&mut m.skip, a.skip);
    if let Some(h) = a.hidden {
        m.hidden = h;
        if a.embed_dim.is_none() {
            m.embed_dim = h;
        }
    }
    overlay(&mut m.embed_dim, a.embed_dim);
    overlay(&mut m.feature_dim, a.feature_dim);
    overlay(&mut m.copy, a.copy);
    overlay(&mut m.attention, a.attention);
    overlay(&mut m.input_feeding, a.input_feeding);
    overlay(&mut m.label_mode, a.label_mode);

    let t = &mut s.train;
    overlay(&mut t.epochs_max, a.epochs);
    overlay(&mut t.batch_size, a.batch_size);
    overlay(&mut t.lr, a.lr);
    overlay(&mut t.dropout, a.dropout);
    if let Some(p) = a.patience {
        t.patience = (p > 0).then_some(p);
    }
    overlay(&mut t.max_decode_len, a.max_decode_len);
    if a.clip_norm.is_some() {
        t.clip_norm = a.clip_norm;
    }
    overlay(&mut t.sort_window, a.sort_window);
    overlay(&mut t.dev_smoothing, a.dev_smoothing);
    overlay(&mut t.save_every_epoch, a.save_every_epoch);
    overlay(&mut t.relinearise_each_epoch, a.relinearise_each_epoch);
    if a.pretrained.is_some() {
        s.run.pretrained = a.pretrained.clone();
    }
}

pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

/// The train, dev and (optional) test splits of a preprocessed directory.
pub struct Splits {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Option<Vec<Example>>,
    pub paths: Vec<PathBuf>,
}

pub fn read_splits(dir: &Path) -> Result<Splits> {
    let train_path = dir.join("train.jsonl");
    let dev_path = dir.join("dev.jsonl");
    let test_path = dir.join("test.jsonl");
    let train = read_examples(&train_path)?;
    let dev = read_examples(&dev_path)?;
    let mut paths = vec![train_path, dev_path];
    let test = if test_path.exists() {
        let t = read_examples(&test_path)?;
        paths.push(test_path);
        Some(t)
    } else {
        None
    };
    if train.is_empty() || dev.is_empty() {
        return Err(g2t::Error::Data(format!("{}: train and dev splits must be non-empty", dir.display())).into());
    }
    Ok(Splits { train, dev, test, paths })
}

/// Initialises both embedding tables from a text embedding file.
pub fn apply_pretrained(model: &mut Model, path: &Path) -> g2t::Result<()> {
    let mut rng = stream_rng(model.config.seed, Stream::Init);
    let target_dim = model.config.embed_dim;
    let source_dim = model.config.embed_dim - model.config.node_feature_dim();
    let (target, t_cov) = load_pretrained_embeddings(path, &model.vocabs.target, target_dim, &mut rng)?;
    let (source, s_cov) = load_pretrained_embeddings(path, &model.vocabs.source, source_dim, &mut rng)?;
    model.set_target_embedding(target)?;
    model.set_source_embedding(source)?;
    info!(
        "pretrained embeddings cover {:.1}% of target and {:.1}% of source tokens",
        100.0 * t_cov.fraction,
        100.0 * s_cov.fraction
    );
    Ok(())
}
