//! Directed labeled graphs: the common input representation for every
//! encoder.
//!
//! Node identity is positional: node `i` is `nodes[i]`. Edges refer to
//! nodes by index. The self-loop used by the graph convolution is *not*
//! stored as an edge; [`LabeledGraph::neighbourhood`] synthesizes it, so a
//! genuine `v -> v` edge in the source data stays distinguishable.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved label of the synthetic self-loop entry.
pub const SELF_LABEL: &str = "self";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub label: String,
    /// `key=value` annotations, e.g. `num=sg`.
    #[serde(default)]
    pub features: Vec<String>,
}

impl Node {
    pub fn new(label: impl Into<String>) -> Self {
        Node {
            label: label.into(),
            features: Vec::new(),
        }
    }

    pub fn with_features(label: impl Into<String>, features: Vec<String>) -> Self {
        Node {
            label: label.into(),
            features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

impl Edge {
    pub fn new(src: usize, dst: usize, label: impl Into<String>) -> Self {
        Edge {
            src,
            dst,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDirection {
    In,
    Out,
    Loop,
}

impl EdgeDirection {
    pub const ALL: [EdgeDirection; 3] = [EdgeDirection::In, EdgeDirection::Out, EdgeDirection::Loop];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeDirection::In => "in",
            EdgeDirection::Out => "out",
            EdgeDirection::Loop => "loop",
        }
    }
}

/// One entry of a node's neighbourhood: the neighbour `node`, the label of
/// the connecting edge and the direction of that edge relative to the
/// centre node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbour<'a> {
    pub node: usize,
    pub label: &'a str,
    pub direction: EdgeDirection,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledGraph {
    #[serde(default)]
    pub id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl LabeledGraph {
    pub fn new(id: impl Into<String>, nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        LabeledGraph {
            id: id.into(),
            nodes,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.label.as_str())
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.dst == v).count()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.src == v).count()
    }

    /// Neighbourhood of `v`: the synthetic self-loop first, then one entry per
    /// outgoing edge, then one per incoming edge, each group in edge insertion
    /// order.
    pub fn neighbourhood(&self, v: usize) -> Result<Vec<Neighbour<'_>>> {
        if v >= self.nodes.len() {
            return Err(Error::contract(format!(
                "node index {v} out of range for graph `{}` with {} nodes",
                self.id,
                self.nodes.len()
            )));
        }
        let mut out = vec![Neighbour {
            node: v,
            label: SELF_LABEL,
            direction: EdgeDirection::Loop,
        }];
        out.extend(self.edges.iter().filter(|e| e.src == v).map(|e| Neighbour {
            node: e.dst,
            label: &e.label,
            direction: EdgeDirection::Out,
        }));
        out.extend(self.edges.iter().filter(|e| e.dst == v).map(|e| Neighbour {
            node: e.src,
            label: &e.label,
            direction: EdgeDirection::In,
        }));
        Ok(out)
    }

    /// All neighbourhoods at once, in node order. Equivalent to calling
    /// [`neighbourhood`](Self::neighbourhood) for each node but linear in the
    /// edge count.
    pub fn neighbourhoods(&self) -> Vec<Vec<Neighbour<'_>>> {
        let n = self.nodes.len();
        let mut outgoing: Vec<Vec<Neighbour<'_>>> = vec![Vec::new(); n];
        let mut incoming: Vec<Vec<Neighbour<'_>>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.src < n && e.dst < n {
                outgoing[e.src].push(Neighbour {
                    node: e.dst,
                    label: &e.label,
                    direction: EdgeDirection::Out,
                });
                incoming[e.dst].push(Neighbour {
                    node: e.src,
                    label: &e.label,
                    direction: EdgeDirection::In,
                });
            }
        }
        outgoing
            .into_iter()
            .zip(incoming)
            .enumerate()
            .map(|(v, (out, inc))| {
                let mut all = Vec::with_capacity(1 + out.len() + inc.len());
                all.push(Neighbour {
                    node: v,
                    label: SELF_LABEL,
                    direction: EdgeDirection::Loop,
                });
                all.extend(out);
                all.extend(inc);
                all
            })
            .collect()
    }

    /// Undirected hop distance from `source` to every node; `None` when
    /// unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
        let mut dist = vec![None; n];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &w in &adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn validate(&self) -> ValidationReport {
        validate_graph(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyGraph,
    EmptyNodeLabel { node: usize },
    MalformedFeature { node: usize, feature: String },
    EdgeSrcOutOfRange { edge: usize, src: usize },
    EdgeDstOutOfRange { edge: usize, dst: usize },
    EmptyEdgeLabel { edge: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGraph => write!(f, "empty graph"),
            Violation::EmptyNodeLabel { node } => write!(f, "node {node}: empty label"),
            Violation::MalformedFeature { node, feature } => {
                write!(f, "node {node}: malformed feature `{feature}` (expected key=value)")
            }
            Violation::EdgeSrcOutOfRange { edge, src } => {
                write!(f, "edge {edge}: edge src out of range ({src})")
            }
            Violation::EdgeDstOutOfRange { edge, dst } => {
                write!(f, "edge {edge}: edge dst out of range ({dst})")
            }
            Violation::EmptyEdgeLabel { edge } => write!(f, "edge {edge}: empty label"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self, id: &str) -> Result<()> {
        if self.is_ok() {
            return Ok(());
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        Err(Error::Data(format!("graph `{id}` is invalid: {}", msgs.join("; "))))
    }
}

pub(crate) fn is_key_value(feature: &str) -> bool {
    match feature.split_once('=') {
        Some((k, v)) => !k.is_empty() && !v.is_empty(),
        None => false,
    }
}

/// Checks every structural invariant of a [`LabeledGraph`]. Violations are
/// reported as data; the function never fails.
pub fn validate_graph(g: &LabeledGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let n = g.nodes.len();
    if n == 0 && g.edges.is_empty() {
        violations.push(Violation::EmptyGraph);
    }
    for (i, node) in g.nodes.iter().enumerate() {
        if node.label.is_empty() {
            violations.push(Violation::EmptyNodeLabel { node: i });
        }
        for feat in &node.features {
            if !is_key_value(feat) {
                violations.push(Violation::MalformedFeature {
                    node: i,
                    feature: feat.clone(),
                });
            }
        }
    }
    for (i, e) in g.edges.iter().enumerate() {
        if e.src >= n {
            violations.push(Violation::EdgeSrcOutOfRange { edge: i, src: e.src });
        }
        if e.dst >= n {
            violations.push(Violation::EdgeDstOutOfRange { edge: i, dst: e.dst });
        }
        if e.label.is_empty() {
            violations.push(Violation::EmptyEdgeLabel { edge: i });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_nodes() -> LabeledGraph {
        LabeledGraph::new("t", vec![Node::new("a"), Node::new("b")], vec![])
    }

    #[test]
    fn empty_graph_is_a_violation() {
        let report = validate_graph(&LabeledGraph::default());
        assert_eq!(report.violations, vec![Violation::EmptyGraph]);
        assert_eq!(report.violations[0].to_string(), "empty graph");
    }

    #[test]
    fn dangling_edge_is_reported() {
        let mut g = two_nodes();
        g.edges.push(Edge::new(0, 5, "r"));
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].to_string().contains("edge dst out of range"));
    }

    #[test]
    fn malformed_features_are_reported() {
        let g = LabeledGraph::new(
            "f",
            vec![Node::with_features("x", vec!["num=sg".into(), "=r".into(), "bare".into()])],
            vec![],
        );
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn isolated_node_has_only_self_loop() {
        let g = two_nodes();
        let nb = g.neighbourhood(1).unwrap();
        assert_eq!(
            nb,
            vec![Neighbour {
                node: 1,
                label: SELF_LABEL,
                direction: EdgeDirection::Loop
            }]
        );
    }

    #[test]
    fn parallel_edges_yield_parallel_entries() {
        let mut g = two_nodes();
        g.edges.push(Edge::new(0, 1, "r"));
        g.edges.push(Edge::new(0, 1, "s"));
        let nb = g.neighbourhood(0).unwrap();
        let outs: Vec<_> = nb
            .iter()
            .filter(|e| e.direction == EdgeDirection::Out)
            .map(|e| (e.node, e.label))
            .collect();
        assert_eq!(outs, vec![(1, "r"), (1, "s")]);
    }

    #[test]
    fn genuine_self_edge_stays_distinct_from_loop() {
        let mut g = two_nodes();
        g.edges.push(Edge::new(0, 0, "same"));
        let nb = g.neighbourhood(0).unwrap();
        assert_eq!(nb.len(), 3);
        assert_eq!(nb[0].direction, EdgeDirection::Loop);
        assert_eq!(nb[1].label, "same");
        assert_eq!(nb[2].label, "same");
    }

    #[test]
    fn out_of_range_neighbourhood_is_contract_error() {
        let err = two_nodes().neighbourhood(2).unwrap_err();
        assert!(err.is_contract_violation());
    }

    #[test]
    fn batch_neighbourhoods_agree_with_single_queries() {
        let g = LabeledGraph::new(
            "g",
            vec![Node::new("a"), Node::new("b"), Node::new("c")],
            vec![Edge::new(0, 1, "r"), Edge::new(2, 1, "s"), Edge::new(1, 0, "t")],
        );
        let all = g.neighbourhoods();
        for v in 0..3 {
            assert_eq!(all[v], g.neighbourhood(v).unwrap());
        }
    }
}
