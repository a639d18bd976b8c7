//! Semantic dependency records: `(parent label child)` tuples plus per-lemma
//! feature lines, and typed-entity anonymisation.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::{is_key_value, Edge, LabeledGraph, Node};

/// Name of the pseudo-root that heads every record.
pub const SROOT: &str = "SROOT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyRecord {
    pub id: String,
    pub graph: LabeledGraph,
    pub target: Vec<String>,
    /// Named-entity type per node index, from `# ne:` lines.
    pub entity_types: BTreeMap<usize, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tuple<'a> {
    parent: &'a str,
    label: &'a str,
    child: &'a str,
}

/// Extracts every `( a b c )` group from `text`. `line_offset` is the
/// 1-based line number of the first line, used for error positions.
fn scan_tuples<'a>(text: &'a str, source: &str, line_offset: usize) -> Result<Vec<Tuple<'a>>> {
    let mut tuples = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = line_offset + k;
        let mut rest = line;
        let mut col = 0;
        loop {
            let trimmed = rest.trim_start();
            col += rest.len() - trimmed.len();
            rest = trimmed;
            if rest.is_empty() {
                break;
            }
            if !rest.starts_with('(') {
                return Err(Error::parse(
                    format!("{source}:{lineno}:{}", col + 1),
                    format!("expected `(`, found `{}`", rest.chars().next().unwrap_or(' ')),
                ));
            }
            let close = rest.find(')').ok_or_else(|| {
                Error::parse(format!("{source}:{lineno}:{}", col + 1), "unterminated tuple")
            })?;
            let inner = &rest[1..close];
            let fields: Vec<&str> = inner.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    format!("{source}:{lineno}:{}", col + 1),
                    format!(
                        "tuple `({inner})` has {} fields, expected (parent label child)",
                        fields.len()
                    ),
                ));
            }
            tuples.push(Tuple {
                parent: fields[0],
                label: fields[1],
                child: fields[2],
            });
            col += close + 1;
            rest = &rest[close + 1..];
        }
    }
    Ok(tuples)
}

/// Builds a graph from tuple text: one node per distinct lemma (in order of
/// first appearance, so `SROOT` is normally node 0) and one `parent -> child`
/// edge per tuple.
pub fn parse_sr11(record: &str) -> Result<LabeledGraph> {
    let tuples = scan_tuples(record, "record", 1)?;
    build_graph("", &tuples, &HashMap::new())
}

fn build_graph(id: &str, tuples: &[Tuple<'_>], features: &HashMap<&str, Vec<String>>) -> Result<LabeledGraph> {
    if tuples.is_empty() {
        return Err(Error::parse(id.to_string(), "no tuples"));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::with_capacity(tuples.len());
    let node_of = |lemma: &str, nodes: &mut Vec<Node>, index: &mut HashMap<&str, usize>| -> usize {
        if let Some(&i) = index.get(lemma) {
            return i;
        }
        let feats = features.get(lemma).cloned().unwrap_or_default();
        nodes.push(Node::with_features(lemma, feats));
        nodes.len() - 1
    };
    for t in tuples {
        let p = node_of(t.parent, &mut nodes, &mut index);
        index.insert(t.parent, p);
        let c = node_of(t.child, &mut nodes, &mut index);
        index.insert(t.child, c);
        edges.push(Edge::new(p, c, t.label));
    }
    Ok(LabeledGraph::new(id, nodes, edges))
}

/// Parses a file of blank-line separated dependency records. Each record has
/// one or more tuple lines, optional `lemma<TAB>feat=val,feat=val` feature
/// lines, an optional `# text:` target, `# id:` and `# ne: lemma<TAB>TYPE`
/// lines.
pub fn parse_sr11_text(text: &str, source: &str) -> Result<Vec<DependencyRecord>> {
    let mut out = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let start = i;
        while i < lines.len() && !lines[i].trim().is_empty() {
            i += 1;
        }
        out.push(parse_block(&lines[start..i], start + 1, source, out.len())?);
    }
    Ok(out)
}

fn parse_block(lines: &[&str], first_line: usize, source: &str, ordinal: usize) -> Result<DependencyRecord> {
    let mut id = String::new();
    let mut target = Vec::new();
    let mut tuples = Vec::new();
    let mut features: HashMap<&str, Vec<String>> = HashMap::new();
    let mut types: Vec<(&str, String)> = Vec::new();

    for (k, raw) in lines.iter().enumerate() {
        let lineno = first_line + k;
        let line = raw.trim_end();
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("# text:") {
            target = rest.split_whitespace().map(str::to_string).collect();
        } else if let Some(rest) = trimmed.strip_prefix("# id:") {
            id = rest.trim().to_string();
        } else if let Some(rest) = trimmed.strip_prefix("# ne:") {
            let mut parts = rest.trim().split('\t');
            match (parts.next(), parts.next()) {
                (Some(lemma), Some(ty)) if !lemma.is_empty() && !ty.trim().is_empty() => {
                    types.push((lemma.trim(), ty.trim().to_string()))
                }
                _ => {
                    return Err(Error::parse(
                        format!("{source}:{lineno}"),
                        "expected `# ne: lemma<TAB>TYPE`",
                    ))
                }
            }
        } else if trimmed.starts_with('#') {
            continue;
        } else if trimmed.starts_with('(') {
            tuples.extend(scan_tuples(trimmed, source, lineno)?);
        } else {
            let (lemma, feats) = trimmed.split_once('\t').ok_or_else(|| {
                Error::parse(
                    format!("{source}:{lineno}"),
                    "expected a tuple line or `lemma<TAB>feat=val,...`",
                )
            })?;
            let mut list = Vec::new();
            for (f_idx, f) in feats.split(',').map(str::trim).filter(|f| !f.is_empty()).enumerate() {
                if !is_key_value(f) {
                    return Err(Error::parse(
                        format!("{source}:{lineno}, field {}", f_idx + 1),
                        format!("feature `{f}` is not key=value"),
                    ));
                }
                list.push(f.to_string());
            }
            features.insert(lemma, list);
        }
    }
    if id.is_empty() {
        id = ordinal.to_string();
    }
    if tuples.is_empty() {
        return Err(Error::parse(format!("{source}:{first_line}"), "no tuples"));
    }
    let graph = build_graph(&id, &tuples, &features)?;
    let mut entity_types = BTreeMap::new();
    for (lemma, ty) in types {
        let node = graph
            .nodes
            .iter()
            .position(|n| n.label == lemma)
            .ok_or_else(|| Error::parse(format!("{source}:{first_line}"), format!("`# ne:` names unknown lemma `{lemma}`")))?;
        entity_types.insert(node, ty);
    }
    Ok(DependencyRecord {
        id,
        graph,
        target,
        entity_types,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anonymised {
    pub graph: LabeledGraph,
    /// Placeholder to original label.
    pub relex: BTreeMap<String, String>,
}

/// Replaces each typed node's label by `TYPE_k`, where `k` numbers the
/// distinct entities of that type in node-index order from 0.
pub fn anonymise_sr(g: &LabeledGraph, types: &BTreeMap<usize, String>) -> Anonymised {
    let mut graph = g.clone();
    let mut next: HashMap<&str, usize> = HashMap::new();
    let mut assigned: HashMap<(&str, &str), String> = HashMap::new();
    let mut relex = BTreeMap::new();
    for (v, node) in g.nodes.iter().enumerate() {
        let Some(ty) = types.get(&v) else { continue };
        let key = (ty.as_str(), node.label.as_str());
        let placeholder = assigned
            .entry(key)
            .or_insert_with(|| {
                let k = next.entry(ty.as_str()).or_insert(0);
                let ph = format!("{ty}_{k}");
                *k += 1;
                ph
            })
            .clone();
        relex.insert(placeholder.clone(), node.label.clone());
        graph.nodes[v].label = placeholder;
    }
    Anonymised { graph, relex }
}

/// Applies an anonymisation's placeholders to target tokens.
pub fn anonymise_target(target: &[String], relex: &BTreeMap<String, String>) -> Vec<String> {
    let inverse: HashMap<&str, &str> = relex.iter().map(|(ph, s)| (s.as_str(), ph.as_str())).collect();
    target
        .iter()
        .map(|t| inverse.get(t.as_str()).map_or_else(|| t.clone(), |ph| ph.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tuple_record() {
        let g = parse_sr11("(SROOT SROOT will) (will P .)").unwrap();
        let labels: Vec<&str> = g.labels().collect();
        assert_eq!(labels, vec!["SROOT", "will", "."]);
        assert_eq!(g.edges, vec![Edge::new(0, 1, "SROOT"), Edge::new(1, 2, "P")]);
    }

    #[test]
    fn empty_record_is_an_error() {
        let err = parse_sr11("").unwrap_err();
        assert!(err.to_string().contains("no tuples"));
    }

    #[test]
    fn malformed_tuple_reports_position() {
        let err = parse_sr11("(SROOT SROOT will) (will P)").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("record:1:20"), "{msg}");
    }

    #[test]
    fn features_attach_to_lemmas() {
        let text = "(SROOT SROOT be) (be SBJ we)\nwe\tnum=pl,person=1\n# text: we are\n";
        let recs = parse_sr11_text(text, "f").unwrap();
        assert_eq!(recs.len(), 1);
        let we = recs[0].graph.nodes.iter().find(|n| n.label == "we").unwrap();
        assert_eq!(we.features, vec!["num=pl", "person=1"]);
        assert_eq!(recs[0].target, vec!["we", "are"]);
    }

    #[test]
    fn bad_feature_is_a_parse_error() {
        let text = "(SROOT SROOT be)\nbe\tnum\n";
        let err = parse_sr11_text(text, "f").unwrap_err();
        assert!(err.to_string().contains("f:2, field 1"), "{err}");
    }

    fn typed(labels: &[&str], types: &[(usize, &str)]) -> (LabeledGraph, BTreeMap<usize, String>) {
        let g = LabeledGraph::new("t", labels.iter().map(|l| Node::new(*l)).collect(), vec![]);
        let t = types.iter().map(|(i, ty)| (*i, ty.to_string())).collect();
        (g, t)
    }

    #[test]
    fn anonymise_without_types_is_identity() {
        let (g, t) = typed(&["a", "b"], &[]);
        assert_eq!(anonymise_sr(&g, &t).graph, g);
    }

    #[test]
    fn anonymise_counts_per_type() {
        let (g, t) = typed(&["Ann", "buy", "Bob"], &[(0, "PER"), (2, "PER")]);
        let labels: Vec<String> = anonymise_sr(&g, &t).graph.nodes.into_iter().map(|n| n.label).collect();
        assert_eq!(labels, vec!["PER_0", "buy", "PER_1"]);

        let (g, t) = typed(&["Ann", "Rome", "Bob"], &[(0, "PER"), (1, "LOC"), (2, "PER")]);
        let a = anonymise_sr(&g, &t);
        let labels: Vec<&str> = a.graph.labels().collect();
        assert_eq!(labels, vec!["PER_0", "LOC_0", "PER_1"]);
        let target: Vec<String> = ["Ann", "met", "Bob", "in", "Rome"].iter().map(|s| s.to_string()).collect();
        assert_eq!(anonymise_target(&target, &a.relex), vec!["PER_0", "met", "PER_1", "in", "LOC_0"]);
    }
}
