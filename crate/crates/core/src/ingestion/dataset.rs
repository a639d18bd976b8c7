//! Examples, dataset splits and the canonical JSONL graph format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, LabeledGraph, Node};

pub const MAX_TARGET_LEN: usize = 50;

/// One (graph, target) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub graph: LabeledGraph,
    pub target: Vec<String>,
    /// Precomputed linearisation for the sequential encoder.
    pub linearised: Option<Vec<String>>,
    /// Placeholder to surface string, applied after generation.
    pub relex: BTreeMap<String, String>,
}

impl Example {
    pub fn new(graph: LabeledGraph, target: Vec<String>) -> Self {
        Example {
            graph,
            target,
            linearised: None,
            relex: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.graph.id
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    #[serde(default)]
    target: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    linearised: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    relex: BTreeMap<String, String>,
}

impl From<&Example> for Record {
    fn from(ex: &Example) -> Self {
        Record {
            id: ex.graph.id.clone(),
            nodes: ex.graph.nodes.clone(),
            edges: ex.graph.edges.clone(),
            target: ex.target.clone(),
            linearised: ex.linearised.clone(),
            relex: ex.relex.clone(),
        }
    }
}

impl From<Record> for Example {
    fn from(r: Record) -> Self {
        Example {
            graph: LabeledGraph::new(r.id, r.nodes, r.edges),
            target: r.target,
            linearised: r.linearised,
            relex: r.relex,
        }
    }
}

pub fn to_json_line(ex: &Example) -> Result<String> {
    Ok(serde_json::to_string(&Record::from(ex))?)
}

pub fn from_json_line(line: &str) -> Result<Example> {
    let rec: Record = serde_json::from_str(line)?;
    Ok(rec.into())
}

/// Reads one example per non-blank line. Every graph is validated.
pub fn read_jsonl(path: &Path) -> Result<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{}:{}", path.display(), i + 1);
        let ex = from_json_line(&line).map_err(|e| Error::parse(&loc, e.to_string()))?;
        ex.graph
            .validate()
            .into_result(ex.id())
            .map_err(|e| Error::parse(&loc, e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        writeln!(w, "{}", to_json_line(ex)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitName::Train),
            "dev" => Some(SplitName::Dev),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub examples: Vec<Example>,
}

/// Keeps the examples whose target has at most `max_len` tokens, in order.
/// Returns the filtered split and the number of dropped examples.
pub fn filter_long_targets(split: DatasetSplit, max_len: usize) -> (DatasetSplit, usize) {
    let before = split.examples.len();
    let examples: Vec<Example> = split
        .examples
        .into_iter()
        .filter(|ex| ex.target.len() <= max_len)
        .collect();
    let dropped = before - examples.len();
    (
        DatasetSplit {
            name: split.name,
            examples,
        },
        dropped,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Webnlg,
    Sr11,
}

/// Reference corpus sizes: (train, dev, test) example counts and the number
/// of distinct relations.
pub fn reference_sizes(task: Task) -> ([usize; 3], usize) {
    match task {
        Task::Webnlg => ([18102, 871, 971], 373),
        Task::Sr11 => ([39279, 1034, 2398], 117),
    }
}

/// Warnings for every count that differs from the reference corpus.
pub fn size_warnings(task: Task, counts: &BTreeMap<SplitName, usize>, relations: usize) -> Vec<String> {
    let (sizes, rels) = reference_sizes(task);
    let mut out = Vec::new();
    for (name, expected) in SplitName::ALL.iter().zip(sizes) {
        if let Some(&got) = counts.get(name) {
            if got != expected {
                out.push(format!(
                    "{} split has {got} examples; the reference corpus has {expected}",
                    name.as_str()
                ));
            }
        }
    }
    if relations != rels {
        out.push(format!(
            "{relations} distinct relations; the reference corpus has {rels}"
        ));
    }
    out
}
