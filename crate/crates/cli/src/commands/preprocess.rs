use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use g2t::ingestion::dataset::size_warnings;
use g2t::ingestion::sr11::{anonymise_sr, anonymise_target, parse_sr11_text};
use g2t::ingestion::webnlg::{delexicalise, parse_triple_text, reify, split_multiword_entities};
use g2t::ingestion::{
    filter_long_targets, linearise, write_jsonl, DatasetSplit, Example, LineariseOptions, SplitName,
    Task,
};
use g2t::model::Vocabs;
use g2t::numerics::rng::example_seed;
use log::{info, warn};
use serde::Serialize;

use super::Ctx;
use crate::artifacts::{OutputLock, RunManifest};
use crate::settings::overlay;
use crate::PreprocessArgs;

#[derive(Debug, Serialize)]
struct SplitStats {
    parsed: usize,
    kept: usize,
    filtered: usize,
}

#[derive(Debug, Serialize)]
struct Stats {
    task: Task,
    splits: BTreeMap<SplitName, SplitStats>,
    relations: usize,
    warnings: Vec<String>,
}

/// Input files keyed by split.
fn discover(input: &Path, single: SplitName) -> Result<Vec<(SplitName, PathBuf)>> {
    if !input.is_dir() {
        if !input.exists() {
            return Err(g2t::Error::Data(format!("{} does not exist", input.display())).into());
        }
        return Ok(vec![(single, input.to_path_buf())]);
    }
    let found: Vec<_> = SplitName::ALL
        .iter()
        .map(|&s| (s, input.join(format!("{}.txt", s.as_str()))))
        .filter(|(_, p)| p.exists())
        .collect();
    if found.is_empty() {
        return Err(g2t::Error::Data(format!("{} holds none of train.txt, dev.txt, test.txt", input.display())).into());
    }
    Ok(found)
}

/// Parsed examples plus the relation names they use.
fn parse(task: Task, text: &str, source: &str) -> g2t::Result<(Vec<Example>, BTreeSet<String>)> {
    let mut relations = BTreeSet::new();
    let mut out = Vec::new();
    match task {
        Task::Webnlg => {
            for rec in parse_triple_text(text, source)? {
                relations.extend(rec.triples.iter().map(|t| t.relation.clone()));
                let d = delexicalise(&rec.triples, &rec.target, &rec.categories)
                    .map_err(|e| g2t::Error::Data(format!("{source}: example {}: {e}", rec.id)))?;
                let graph = split_multiword_entities(&reify(&rec.id, &d.triples));
                let mut ex = Example::new(graph, d.target);
                ex.relex = d.relex;
                out.push(ex);
            }
        }
        Task::Sr11 => {
            for rec in parse_sr11_text(text, source)? {
                relations.extend(rec.graph.edges.iter().map(|e| e.label.clone()));
                let anon = anonymise_sr(&rec.graph, &rec.entity_types);
                let mut ex = Example::new(anon.graph, anonymise_target(&rec.target, &anon.relex));
                ex.relex = anon.relex;
                out.push(ex);
            }
        }
    }
    Ok((out, relations))
}

/// Lowercases labels and target tokens, leaving placeholders intact.
fn lowercase(ex: &mut Example) {
    let lower = |s: &mut String, keep: &BTreeMap<String, String>| {
        if !keep.contains_key(s.as_str()) {
            *s = s.to_lowercase();
        }
    };
    for node in &mut ex.graph.nodes {
        lower(&mut node.label, &ex.relex);
    }
    for t in &mut ex.target {
        lower(t, &ex.relex);
    }
}

pub fn run(ctx: &mut Ctx, args: PreprocessArgs) -> Result<()> {
    let p = &mut ctx.settings.preprocess;
    overlay(&mut p.task, args.task);
    overlay(&mut p.linearise, args.linearise);
    overlay(&mut p.edge_labels, args.edge_labels);
    overlay(&mut p.max_target_len, args.max_target_len);
    overlay(&mut p.lowercase, args.lowercase);
    let p = ctx.settings.preprocess.clone();
    let seed = ctx.settings.seed();

    let inputs = discover(&ctx.input(&args.input), args.split)?;
    let _lock = OutputLock::acquire(&args.out)?;
    let mut manifest = RunManifest::new("preprocess", Some(seed), &ctx.settings)?;
    let mut stats = Stats {
        task: p.task,
        splits: BTreeMap::new(),
        relations: 0,
        warnings: Vec::new(),
    };
    let mut relations = BTreeSet::new();
    let mut train_examples = None;

    for (name, path) in inputs {
        manifest.input(&path)?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let (mut examples, rels) = parse(p.task, &text, &path.display().to_string())?;
        relations.extend(rels);
        for ex in &mut examples {
            if p.lowercase {
                lowercase(ex);
            }
            if p.linearise {
                let opts = LineariseOptions {
                    edge_labels: p.edge_labels,
                };
                ex.linearised = Some(linearise(&ex.graph, example_seed(seed, ex.id()), opts)?);
            }
            ex.graph.validate().into_result(ex.id())?;
        }
        let parsed = examples.len();
        let (split, filtered) = filter_long_targets(DatasetSplit { name, examples }, p.max_target_len);
        if filtered > 0 {
            info!("{}: dropped {filtered} examples with targets over {} tokens", name.as_str(), p.max_target_len);
        }
        let out = args.out.join(format!("{}.jsonl", name.as_str()));
        write_jsonl(&out, &split.examples)?;
        manifest.artifact(&args.out, &out);
        stats.splits.insert(
            name,
            SplitStats {
                parsed,
                kept: split.examples.len(),
                filtered,
            },
        );
        if name == SplitName::Train {
            train_examples = Some(split.examples);
        }
    }

    stats.relations = relations.len();
    let counts = stats.splits.iter().map(|(k, v)| (*k, v.kept)).collect();
    stats.warnings = size_warnings(p.task, &counts, relations.len());
    for w in &stats.warnings {
        warn!("{w}");
    }
    if let Some(train) = train_examples {
        let path = args.out.join("vocab.json");
        Vocabs::build(&train, &ctx.settings.model)?.save(&path)?;
        manifest.artifact(&args.out, &path);
    }
    let stats_path = args.out.join("stats.json");
    let report = serde_json::to_string_pretty(&stats)?;
    fs::write(&stats_path, &report).with_context(|| format!("writing {}", stats_path.display()))?;
    manifest.artifact(&args.out, &stats_path);
    manifest.append(&args.out)?;
    println!("{report}");
    Ok(())
}
