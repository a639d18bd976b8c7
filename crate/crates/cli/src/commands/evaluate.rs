use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use g2t::ingestion::webnlg::relexicalise;
use g2t::metrics::{corpus_bleu, split_tokens};

use super::generate::{decode_all, load_model};
use super::{read_examples, Ctx};
use crate::{ContractViolation, EvaluateArgs};

/// Reference token sequences from a JSONL dataset (surface form) or a plain
/// text file.
fn read_references(path: &Path) -> Result<Vec<Vec<String>>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(read_examples(path)?
            .iter()
            .map(|ex| relexicalise(&ex.target, &ex.relex))
            .collect());
    }
    read_lines(path)
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(split_tokens).collect())
}

pub fn run(ctx: &mut Ctx, args: EvaluateArgs) -> Result<()> {
    let (hyps, refs): (Vec<Vec<String>>, Vec<Vec<Vec<String>>>) = match (&args.hyp, &args.model) {
        (Some(hyp), None) => {
            let hyps = read_lines(&ctx.input(hyp))?;
            let mut refs: Vec<Vec<Vec<String>>> = vec![Vec::new(); hyps.len()];
            for r in &args.reference {
                let path = ctx.input(r);
                let lines = read_references(&path)?;
                if lines.len() != hyps.len() {
                    return Err(g2t::Error::Data(format!(
                        "{} has {} lines but the hypotheses have {}",
                        path.display(),
                        lines.len(),
                        hyps.len()
                    ))
                    .into());
                }
                for (slot, line) in refs.iter_mut().zip(lines) {
                    slot.push(line);
                }
            }
            (hyps, refs)
        }
        (None, Some(model)) => {
            let input = ctx.input(args.input.as_deref().expect("clap requires --input with --model"));
            let model = load_model(&ctx.input(model))?;
            let examples = read_examples(&input)?;
            let max_len = args.max_len.unwrap_or(ctx.settings.train.max_decode_len);
            let beam = args.beam.unwrap_or(ctx.settings.generate.beam);
            let hyps = decode_all(&model, &examples, max_len, beam, true)?;
            let refs = examples.iter().map(|ex| vec![relexicalise(&ex.target, &ex.relex)]).collect();
            (hyps, refs)
        }
        _ => return Err(ContractViolation("give either --hyp with --ref, or --model with --input".into()).into()),
    };
    let report = corpus_bleu(&hyps, &refs, args.max_n, args.smooth)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
