use std::fs;

use anyhow::{Context, Result};
use g2t::model::{Model, Vocabs};
use g2t::training::{evaluate, multi_run_with, train};
use log::warn;
use serde_json::json;

use super::{apply_model_args, apply_pretrained, read_splits, Ctx};
use crate::artifacts::{OutputLock, RunManifest};
use crate::settings::overlay;
use crate::TrainArgs;

pub fn run(ctx: &mut Ctx, args: TrainArgs) -> Result<()> {
    apply_model_args(&mut ctx.settings, &args.model);
    overlay(&mut ctx.settings.run.runs, args.runs);
    let s = ctx.settings.clone();
    s.model.validate()?;
    s.train.validate()?;
    if s.run.runs == 0 {
        return Err(g2t::Error::Config("--runs must be at least 1".into()).into());
    }
    let pretrained = s.run.pretrained.as_ref().map(|p| ctx.input(p));

    let splits = read_splits(&ctx.input(&args.data))?;
    let out = &args.out;
    let _lock = OutputLock::acquire(out)?;
    let mut manifest = RunManifest::new("train", Some(s.train.seed), &s)?;
    for p in splits.paths.iter().chain(&pretrained) {
        manifest.input(p)?;
    }

    let config_path = out.join("config.toml");
    fs::write(&config_path, s.to_toml()?).with_context(|| format!("writing {}", config_path.display()))?;
    manifest.artifact(out, &config_path);
    let vocabs = Vocabs::build(&splits.train, &s.model)?;
    let vocab_path = out.join("vocab.json");
    vocabs.save(&vocab_path)?;
    manifest.artifact(out, &vocab_path);

    let init = |model: &mut Model| match &pretrained {
        Some(p) => apply_pretrained(model, p),
        None => Ok(()),
    };

    let summary = if s.run.runs == 1 {
        let mut model = Model::new(s.model.clone(), vocabs)?;
        init(&mut model)?;
        println!("parameters: {}", model.param_count());
        let outcome = train(&mut model, &s.train, &splits.train, &splits.dev, Some(out))?;
        for e in 1..=outcome.log.len() {
            if s.train.save_every_epoch {
                manifest.artifact(out, &out.join(format!("epoch{e}.ckpt")));
            }
        }
        manifest.artifact(out, &out.join("log.jsonl"));
        manifest.artifact(out, &out.join("best.ckpt"));
        let test_bleu = match &splits.test {
            Some(test) => Some(evaluate(&model, test, s.train.max_decode_len, 1, false)?.bleu.bleu),
            None => None,
        };
        println!(
            "best epoch {} with dev BLEU {:.4}{}",
            outcome.best_epoch,
            outcome.best_dev_bleu,
            test_bleu.map_or(String::new(), |b| format!("; test BLEU {b:.4}"))
        );
        json!({
            "parameters": model.param_count(),
            "best_epoch": outcome.best_epoch,
            "dev_bleu": outcome.best_dev_bleu,
            "test_bleu": test_bleu,
            "stopped_early": outcome.stopped_early,
        })
    } else {
        let test = match &splits.test {
            Some(t) => t,
            None => {
                warn!("no test.jsonl; reporting the dev split instead");
                &splits.dev
            }
        };
        let outcome = multi_run_with(
            &s.model,
            &vocabs,
            &s.train,
            &splits.train,
            &splits.dev,
            test,
            s.run.runs,
            Some(out),
            init,
        )?;
        for r in &outcome.runs {
            let dir = out.join(format!("run{}", r.run));
            for name in ["log.jsonl", "best.ckpt", "result.json"] {
                manifest.artifact(out, &dir.join(name));
            }
            if s.train.save_every_epoch {
                for e in 1..=count_epochs(&dir.join("log.jsonl"))? {
                    manifest.artifact(out, &dir.join(format!("epoch{e}.ckpt")));
                }
            }
        }
        println!(
            "test BLEU {:.4} ± {:.4} over {} runs",
            outcome.test_bleu.mean, outcome.test_bleu.stddev, s.run.runs
        );
        serde_json::to_value(&outcome)?
    };

    let summary_path = out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    manifest.artifact(out, &summary_path);
    manifest.append(out)?;
    Ok(())
}

/// Epoch lines in a training log (the first line is a header).
fn count_epochs(log: &std::path::Path) -> Result<usize> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    Ok(text.lines().count().saturating_sub(1))
}
