use std::fmt::Write as _;
use std::fs;

use anyhow::{Context, Result};
use g2t::encoders::SkipKind;
use g2t::model::{EncoderKind, Model, ModelConfig, Vocabs};
use g2t::training::{multi_run_with, RunStats};
use log::{info, warn};
use serde::Serialize;

use super::{apply_model_args, apply_pretrained, read_splits, Ctx};
use crate::artifacts::{OutputLock, RunManifest};
use crate::settings::overlay;
use crate::{AblateArgs, ContractViolation};

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub layers: usize,
    pub skip: SkipKind,
    pub parameters: usize,
    pub bleu: RunStats,
}

/// Grid cells to run. A single layer has nothing to skip over, so only the
/// plain stack is built for it.
pub fn grid(min_layers: usize, max_layers: usize, skips: &[SkipKind]) -> Vec<(usize, SkipKind)> {
    let mut out = Vec::new();
    for layers in min_layers..=max_layers {
        for &skip in SkipKind::ALL.iter().filter(|s| skips.contains(s)) {
            if layers == 1 && skip != SkipKind::None {
                continue;
            }
            out.push((layers, skip));
        }
    }
    out
}

/// Markdown table with BLEU and size columns per skip kind; absent cells
/// are `-`.
pub fn render(cells: &[Cell], min_layers: usize, max_layers: usize) -> String {
    let short = |s: SkipKind| match s {
        SkipKind::None => "none",
        SkipKind::Residual => "res",
        SkipKind::Dense => "den",
    };
    let mut t = String::from("| L |");
    for prefix in ["BLEU", "SIZE"] {
        for s in SkipKind::ALL {
            let _ = write!(t, " {prefix} {} |", short(s));
        }
    }
    t.push_str("\n|---|---|---|---|---|---|---|\n");
    for layers in min_layers..=max_layers {
        let row: Vec<Option<&Cell>> = SkipKind::ALL
            .iter()
            .map(|&s| cells.iter().find(|c| c.layers == layers && c.skip == s))
            .collect();
        if row.iter().all(Option::is_none) {
            continue;
        }
        let _ = write!(t, "| {layers}L |");
        for c in &row {
            match c {
                Some(c) => {
                    let _ = write!(t, " {:.4} ± {:.4} |", c.bleu.mean, c.bleu.stddev);
                }
                None => t.push_str(" - |"),
            }
        }
        for c in &row {
            match c {
                Some(c) => {
                    let _ = write!(t, " {} |", c.parameters);
                }
                None => t.push_str(" - |"),
            }
        }
        t.push('\n');
    }
    t
}

pub fn run(ctx: &mut Ctx, args: AblateArgs) -> Result<()> {
    apply_model_args(&mut ctx.settings, &args.model);
    let a = &mut ctx.settings.ablate;
    overlay(&mut a.min_layers, args.min_layers);
    overlay(&mut a.max_layers, args.max_layers);
    overlay(&mut a.skips, args.skips);
    overlay(&mut a.runs, args.runs);
    let s = ctx.settings.clone();
    if s.model.encoder != EncoderKind::Gcn {
        return Err(ContractViolation("ablation varies GCN layers; use --encoder gcn".into()).into());
    }
    if s.ablate.min_layers == 0 || s.ablate.min_layers > s.ablate.max_layers || s.ablate.runs == 0 {
        return Err(ContractViolation(format!(
            "invalid grid: layers {}..={}, runs {}",
            s.ablate.min_layers, s.ablate.max_layers, s.ablate.runs
        ))
        .into());
    }
    s.train.validate()?;
    let pretrained = s.run.pretrained.as_ref().map(|p| ctx.input(p));

    let splits = read_splits(&ctx.input(&args.data))?;
    let test = match &splits.test {
        Some(t) => t,
        None => {
            warn!("no test.jsonl; reporting the dev split instead");
            &splits.dev
        }
    };
    let out = &args.out;
    let _lock = OutputLock::acquire(out)?;
    let mut manifest = RunManifest::new("ablate", Some(s.train.seed), &s)?;
    for p in splits.paths.iter().chain(&pretrained) {
        manifest.input(p)?;
    }
    let vocabs = Vocabs::build(&splits.train, &s.model)?;

    let mut cells = Vec::new();
    for (layers, skip) in grid(s.ablate.min_layers, s.ablate.max_layers, &s.ablate.skips) {
        let cfg = ModelConfig {
            gcn_layers: layers,
            skip,
            ..s.model.clone()
        };
        let parameters = Model::new(cfg.clone(), vocabs.clone())?.param_count();
        let dir = out.join(format!("{layers}L-{}", skip.as_str()));
        info!("training {layers} layers with {} connections", skip.as_str());
        let outcome = multi_run_with(
            &cfg,
            &vocabs,
            &s.train,
            &splits.train,
            &splits.dev,
            test,
            s.ablate.runs,
            Some(&dir),
            |m| match &pretrained {
                Some(p) => apply_pretrained(m, p),
                None => Ok(()),
            },
        )?;
        for r in 0..s.ablate.runs {
            for name in ["log.jsonl", "best.ckpt", "result.json"] {
                manifest.artifact(out, &dir.join(format!("run{r}")).join(name));
            }
        }
        cells.push(Cell {
            layers,
            skip,
            parameters,
            bleu: outcome.test_bleu,
        });
    }

    let table = render(&cells, s.ablate.min_layers, s.ablate.max_layers);
    let json_path = out.join("ablation.json");
    fs::write(&json_path, serde_json::to_string_pretty(&cells)?).with_context(|| format!("writing {}", json_path.display()))?;
    let md_path = out.join("ablation.md");
    fs::write(&md_path, &table).with_context(|| format!("writing {}", md_path.display()))?;
    manifest.artifact(out, &json_path);
    manifest.artifact(out, &md_path);
    manifest.append(out)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(layers: usize, skip: SkipKind) -> Cell {
        Cell {
            layers,
            skip,
            parameters: 100 * layers,
            bleu: RunStats::from_values(vec![0.5, 0.6]).unwrap(),
        }
    }

    #[test]
    fn single_layer_has_only_the_plain_cell() {
        assert_eq!(grid(1, 1, &SkipKind::ALL), vec![(1, SkipKind::None)]);
        let g = grid(1, 3, &SkipKind::ALL);
        assert_eq!(g.len(), 1 + 3 + 3);
    }

    #[test]
    fn table_marks_absent_cells() {
        let cells = vec![cell(1, SkipKind::None), cell(2, SkipKind::Residual)];
        let t = render(&cells, 1, 2);
        let rows: Vec<&str> = t.lines().collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2], "| 1L | 0.5500 ± 0.0707 | - | - | 100 | - | - |");
        assert_eq!(rows[3], "| 2L | - | 0.5500 ± 0.0707 | - | - | 200 | - |");
    }
}
