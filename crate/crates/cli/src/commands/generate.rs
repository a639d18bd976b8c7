use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2t::ingestion::webnlg::relexicalise;
use g2t::model::{Model, Vocabs};

use super::{read_examples, Ctx};
use crate::artifacts::{OutputLock, RunManifest};
use crate::settings::overlay;
use crate::GenerateArgs;

pub fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Rejects a checkpoint whose vocabularies differ from `vocab`, or from the
/// `vocab.json` stored beside it when no file is named.
pub fn check_vocab(model: &Model, checkpoint: &Path, vocab: Option<&Path>) -> Result<Option<PathBuf>> {
    let path = match vocab {
        Some(p) => p.to_path_buf(),
        None => match checkpoint.parent().map(|d| d.join("vocab.json")) {
            Some(p) if p.exists() => p,
            _ => return Ok(None),
        },
    };
    let expected = Vocabs::load(&path)?.fingerprint();
    let actual = model.vocabs.fingerprint();
    if expected != actual {
        return Err(g2t::Error::Data(format!(
            "vocabulary mismatch: {} has hash {expected} but checkpoint {} has {actual}",
            path.display(),
            checkpoint.display()
        ))
        .into());
    }
    Ok(Some(path))
}

/// Decodes every example, optionally restoring surface strings.
pub fn decode_all(
    model: &Model,
    examples: &[g2t::ingestion::Example],
    max_len: usize,
    beam: usize,
    relex: bool,
) -> Result<Vec<Vec<String>>> {
    examples
        .iter()
        .map(|ex| {
            let p = model.prepare(ex)?;
            let (tokens, _) = model.decode(&p, max_len, beam)?;
            Ok(if relex { relexicalise(&tokens, &ex.relex) } else { tokens })
        })
        .collect()
}

pub fn run(ctx: &mut Ctx, args: GenerateArgs) -> Result<()> {
    let g = &mut ctx.settings.generate;
    overlay(&mut g.beam, args.beam);
    if args.max_len.is_some() {
        g.max_len = args.max_len;
    }
    let max_len = ctx.settings.generate.max_len.unwrap_or(ctx.settings.train.max_decode_len);
    let beam = ctx.settings.generate.beam;

    let checkpoint = ctx.input(&args.model);
    let input = ctx.input(&args.input);
    let vocab = args.vocab.as_ref().map(|v| ctx.input(v));
    let model = load_model(&checkpoint)?;
    let vocab = check_vocab(&model, &checkpoint, vocab.as_deref())?;
    let examples = read_examples(&input)?;

    let out_dir = match args.output.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let _lock = OutputLock::acquire(&out_dir)?;
    let mut manifest = RunManifest::new("generate", None, &ctx.settings.generate)?;
    for p in [Some(&checkpoint), Some(&input), vocab.as_ref()].into_iter().flatten() {
        manifest.input(p)?;
    }

    let outputs = decode_all(&model, &examples, max_len, beam, !args.no_relex)?;
    let file = fs::File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let mut w = BufWriter::new(file);
    for tokens in &outputs {
        writeln!(w, "{}", tokens.join(" "))?;
    }
    w.flush()?;
    manifest.artifact(&out_dir, &args.output);
    manifest.append(&out_dir)?;
    println!("wrote {} lines to {}", outputs.len(), args.output.display());
    Ok(())
}
