//! Small synthetic data sets for smoke tests, gradient checks and
//! overfitting runs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{Edge, LabeledGraph, Node};
use crate::ingestion::Example;
use crate::numerics::rng::{stream_rng, Stream};

const ENTITIES: [&str; 12] = [
    "aenir", "castle", "paris", "london", "alice", "bob", "river", "tower", "bridge", "museum", "garden", "harbour",
];
const RELATIONS: [(&str, &str); 4] = [
    ("precededBy", "follows"),
    ("locatedIn", "lies_in"),
    ("owner", "owns"),
    ("near", "borders"),
];

/// Three nodes, two labelled edges and a four-token target.
pub fn toy_example() -> Example {
    Example::new(
        LabeledGraph::new(
            "toy",
            vec![
                Node::with_features("aenir", vec!["num=sg".into()]),
                Node::new("precededBy"),
                Node::with_features("castle", vec!["num=sg".into(), "bracket=r".into()]),
            ],
            vec![Edge::new(1, 0, "A0"), Edge::new(1, 2, "A1")],
        ),
        ["aenir", "follows", "castle", "."].iter().map(|s| s.to_string()).collect(),
    )
}

/// `n` random four-node graphs whose targets are a deterministic verbalisation
/// of their edges: `src relation dst` per edge, then `.`. Two or three edges
/// give six to ten tokens.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = stream_rng(seed, Stream::Init);
    (0..n)
        .map(|i| {
            let labels: Vec<&str> = ENTITIES.choose_multiple(&mut rng, 4).copied().collect();
            let edge_count = rng.gen_range(2..=3);
            let mut pairs: Vec<(usize, usize)> = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();
            pairs.shuffle(&mut rng);
            let mut edges = Vec::new();
            let mut target = Vec::new();
            for &(s, d) in pairs.iter().take(edge_count) {
                let (rel, verb) = RELATIONS[rng.gen_range(0..RELATIONS.len())];
                edges.push(Edge::new(s, d, rel));
                target.extend([labels[s], verb, labels[d]].map(str::to_string));
            }
            target.push(".".to_string());
            Example::new(
                LabeledGraph::new(format!("syn{i}"), labels.iter().map(|&l| Node::new(l)).collect(), edges),
                target,
            )
        })
        .collect()
}
