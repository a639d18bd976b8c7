//! RDF triple sets: reification, multi-word entity chains,
//! delexicalisation and the block-structured triple text format.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::{Edge, LabeledGraph, Node};

pub const ARG0: &str = "A0";
pub const ARG1: &str = "A1";
pub const NE: &str = "NE";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, object: impl Into<String>) -> Result<Self> {
        let t = Triple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        };
        if t.subject.is_empty() || t.relation.is_empty() || t.object.is_empty() {
            return Err(Error::Data(format!(
                "triple ({} | {} | {}) has an empty field",
                t.subject, t.relation, t.object
            )));
        }
        Ok(t)
    }
}

/// Turns every triple's relation into its own node, linked to the subject by
/// an `A0` edge and to the object by an `A1` edge. Entities are shared across
/// triples; relation nodes never are. Nodes are created in triple order:
/// subject, object, then the relation node.
pub fn reify<'a>(id: &str, triples: &'a [Triple]) -> LabeledGraph {
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges = Vec::new();
    let mut entities: HashMap<&str, usize> = HashMap::new();
    let mut entity = |nodes: &mut Vec<Node>, name: &'a str| -> usize {
        *entities.entry(name).or_insert_with(|| {
            nodes.push(Node::new(name));
            nodes.len() - 1
        })
    };
    for t in triples {
        let s = entity(&mut nodes, &t.subject);
        let o = entity(&mut nodes, &t.object);
        nodes.push(Node::new(t.relation.clone()));
        let r = nodes.len() - 1;
        edges.push(Edge::new(r, s, ARG0));
        edges.push(Edge::new(r, o, ARG1));
    }
    LabeledGraph::new(id, nodes, edges)
}

/// Relation nodes of a reified graph: the sources of `A0`/`A1` edges.
pub fn relation_nodes(g: &LabeledGraph) -> Vec<bool> {
    let mut is_rel = vec![false; g.node_count()];
    for e in &g.edges {
        if (e.label == ARG0 || e.label == ARG1) && e.src < is_rel.len() {
            is_rel[e.src] = true;
        }
    }
    is_rel
}

/// Replaces each multi-word entity node by a chain of one node per word,
/// linked head to tail by `NE` edges. Edges that touched the entity attach to
/// the first word. Relation nodes are left alone.
pub fn split_multiword_entities(g: &LabeledGraph) -> LabeledGraph {
    let is_rel = relation_nodes(g);
    let mut nodes = Vec::new();
    let mut chain_edges = Vec::new();
    let mut head_of = Vec::with_capacity(g.node_count());
    for (i, node) in g.nodes.iter().enumerate() {
        let words: Vec<&str> = node.label.split_whitespace().collect();
        if is_rel[i] || words.len() <= 1 {
            head_of.push(nodes.len());
            nodes.push(node.clone());
            continue;
        }
        let head = nodes.len();
        head_of.push(head);
        for (k, w) in words.iter().enumerate() {
            nodes.push(Node::with_features(*w, if k == 0 { node.features.clone() } else { Vec::new() }));
            if k > 0 {
                chain_edges.push(Edge::new(head + k - 1, head + k, NE));
            }
        }
    }
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .map(|e| Edge::new(head_of[e.src], head_of[e.dst], e.label.clone()))
        .collect();
    edges.extend(chain_edges);
    LabeledGraph::new(g.id.clone(), nodes, edges)
}

/// Entity strings recovered from `NE` chains (and single nodes), i.e. the
/// inverse of [`split_multiword_entities`] on labels.
pub fn chain_labels(g: &LabeledGraph) -> Vec<String> {
    let mut next = vec![None; g.node_count()];
    let mut has_prev = vec![false; g.node_count()];
    for e in g.edges.iter().filter(|e| e.label == NE) {
        next[e.src] = Some(e.dst);
        has_prev[e.dst] = true;
    }
    let mut out = Vec::new();
    for start in (0..g.node_count()).filter(|&v| !has_prev[v]) {
        let mut words = vec![g.nodes[start].label.as_str()];
        let mut cur = start;
        while let Some(n) = next[cur] {
            words.push(&g.nodes[n].label);
            cur = n;
        }
        out.push(words.join(" "));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delexicalised {
    pub triples: Vec<Triple>,
    pub target: Vec<String>,
    /// Placeholder to surface string.
    pub relex: BTreeMap<String, String>,
}

/// Replaces mapped entity strings by their placeholders in subject/object
/// positions and in the target (matched as whole-token subsequences).
pub fn delexicalise(
    triples: &[Triple],
    target: &[String],
    category_map: &BTreeMap<String, String>,
) -> Result<Delexicalised> {
    let mut relex: BTreeMap<String, String> = BTreeMap::new();
    for t in triples {
        for entity in [&t.subject, &t.object] {
            if let Some(ph) = category_map.get(entity) {
                match relex.get(ph) {
                    Some(existing) if existing != entity => {
                        return Err(Error::Data(format!(
                            "placeholder collision: `{existing}` and `{entity}` both map to {ph}"
                        )));
                    }
                    _ => {
                        relex.insert(ph.clone(), entity.clone());
                    }
                }
            }
        }
    }
    let swap = |s: &String| -> String {
        category_map
            .get(s)
            .filter(|ph| relex.contains_key(*ph))
            .cloned()
            .unwrap_or_else(|| s.clone())
    };
    let out_triples = triples
        .iter()
        .map(|t| Triple {
            subject: swap(&t.subject),
            relation: t.relation.clone(),
            object: swap(&t.object),
        })
        .collect();

    // Longest entities first so that "New York City" wins over "New York".
    let mut by_len: Vec<(Vec<&str>, &str)> = relex
        .iter()
        .map(|(ph, surface)| (surface.split_whitespace().collect(), ph.as_str()))
        .collect();
    by_len.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(b.1)));
    let mut out_target = Vec::with_capacity(target.len());
    let mut i = 0;
    'outer: while i < target.len() {
        for (words, ph) in &by_len {
            let n = words.len();
            if n > 0 && i + n <= target.len() && target[i..i + n].iter().zip(words).all(|(a, b)| a == b) {
                out_target.push(ph.to_string());
                i += n;
                continue 'outer;
            }
        }
        out_target.push(target[i].clone());
        i += 1;
    }
    Ok(Delexicalised {
        triples: out_triples,
        target: out_target,
        relex,
    })
}

/// Restores surface strings for placeholder tokens.
pub fn relexicalise(tokens: &[String], relex: &BTreeMap<String, String>) -> Vec<String> {
    tokens
        .iter()
        .flat_map(|t| match relex.get(t) {
            Some(surface) => surface.split_whitespace().map(str::to_string).collect(),
            None => vec![t.clone()],
        })
        .collect()
}

/// One example of the triple text format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleRecord {
    pub id: String,
    pub triples: Vec<Triple>,
    pub target: Vec<String>,
    /// Per-example entity to placeholder assignments from `# delex:` lines.
    pub categories: BTreeMap<String, String>,
}

/// Parses blank-line separated blocks of `subject | relation | object` lines
/// with a `# text:` line holding the tokenized target. Optional `# id:` and
/// `# delex: entity | PLACEHOLDER` lines are also understood.
pub fn parse_triple_text(text: &str, source: &str) -> Result<Vec<TripleRecord>> {
    let mut records = Vec::new();
    let mut current: Option<TripleRecord> = None;
    let mut block_start = 0;

    let finish = |rec: Option<TripleRecord>, records: &mut Vec<TripleRecord>, line: usize| -> Result<()> {
        if let Some(mut rec) = rec {
            if rec.triples.is_empty() {
                return Err(Error::parse(format!("{source}:{line}"), "block has no triples"));
            }
            if rec.id.is_empty() {
                rec.id = format!("{}", records.len());
            }
            records.push(rec);
        }
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            finish(current.take(), &mut records, block_start)?;
            continue;
        }
        let rec = current.get_or_insert_with(|| {
            block_start = lineno;
            TripleRecord {
                id: String::new(),
                triples: Vec::new(),
                target: Vec::new(),
                categories: BTreeMap::new(),
            }
        });
        let loc = || format!("{source}:{lineno}");
        if let Some(rest) = line.strip_prefix("# text:") {
            rec.target = rest.split_whitespace().map(str::to_string).collect();
        } else if let Some(rest) = line.strip_prefix("# id:") {
            rec.id = rest.trim().to_string();
        } else if let Some(rest) = line.strip_prefix("# delex:") {
            let (entity, ph) = rest
                .split_once('|')
                .ok_or_else(|| Error::parse(loc(), "expected `# delex: entity | PLACEHOLDER`"))?;
            rec.categories.insert(entity.trim().to_string(), ph.trim().to_string());
        } else if line.starts_with('#') {
            continue;
        } else {
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    loc(),
                    format!("expected `subject | relation | object`, found {} fields", fields.len()),
                ));
            }
            for (k, f) in fields.iter().enumerate() {
                if f.is_empty() {
                    return Err(Error::parse(format!("{}, field {}", loc(), k + 1), "empty field"));
                }
            }
            rec.triples.push(Triple::new(fields[0], fields[1], fields[2])?);
        }
    }
    finish(current.take(), &mut records, block_start)?;
    Ok(records)
}
