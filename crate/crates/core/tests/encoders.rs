//! Locality and permutation equivariance of the GCN encoder on random graphs.

use g2t::encoders::{label_vocab, GcnEncoder, GraphIndex, LabelMode, SkipKind};
use g2t::graph::{Edge, LabeledGraph, Node};
use g2t::numerics::{Dropout, ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTH: usize = 4;

struct Setup {
    store: ParamStore,
    encoder: GcnEncoder,
    labels: g2t::vocab::Vocab,
}

fn setup(layers: usize, skip: SkipKind, seed: u64) -> Setup {
    let labels = label_vocab(["a", "b"]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let encoder = GcnEncoder::build(&mut store, "gcn", WIDTH, WIDTH, layers, skip, labels.len(), &mut rng).unwrap();
    // Non-zero biases so that every parameter group takes part.
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for x in store.value_mut(id).data_mut() {
            if *x == 0.0 {
                *x = rng.gen_range(-0.3..0.3);
            }
        }
    }
    Setup { store, encoder, labels }
}

fn encode(s: &Setup, g: &LabeledGraph, h: &Tensor) -> Tensor {
    let index = GraphIndex::new(g, &s.labels, LabelMode::Strict).unwrap();
    let mut tape = Tape::new(&s.store);
    let h0 = tape.constant(h.clone());
    let out = s.encoder.encode(&mut tape, h0, &index, &mut Dropout::eval()).unwrap();
    tape.value(out).clone()
}

fn case() -> impl Strategy<Value = (LabeledGraph, Tensor, usize, SkipKind, u64)> {
    (2usize..10, 1usize..4, prop::sample::select(SkipKind::ALL.to_vec()), any::<u64>()).prop_flat_map(
        |(n, layers, skip, seed)| {
            let edges = prop::collection::vec((0..n, 0..n, prop::bool::ANY), 0..(n + 3));
            let h = prop::collection::vec(-1.0f64..1.0, n * WIDTH);
            (edges, h).prop_map(move |(edges, h)| {
                let g = LabeledGraph::new(
                    "r",
                    (0..n).map(|i| Node::new(format!("v{i}"))).collect(),
                    edges.into_iter().map(|(s, d, a)| Edge::new(s, d, if a { "a" } else { "b" })).collect(),
                );
                (g, Tensor::from_vec(n, WIDTH, h).unwrap(), layers, skip, seed)
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distant_perturbations_are_invisible((g, h, layers, skip, seed) in case(), target in any::<prop::sample::Index>()) {
        let s = setup(layers, skip, seed);
        let base = encode(&s, &g, &h);
        let t = target.index(g.node_count());
        let mut moved_input = h.clone();
        for x in moved_input.row_slice_mut(t) {
            *x += 1.5;
        }
        let moved = encode(&s, &g, &moved_input);
        let dist = g.hop_distances(t);
        for v in 0..g.node_count() {
            if dist[v].is_none_or(|d| d > layers) {
                prop_assert_eq!(base.row_slice(v), moved.row_slice(v), "node {} at {:?}", v, dist[v]);
            }
        }
    }

    #[test]
    fn permuting_nodes_permutes_outputs((g, h, layers, skip, seed) in case(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let s = setup(layers, skip, seed);
        let n = g.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let mut nodes = vec![Node::new(""); n];
        let mut hp = Tensor::zeros(n, WIDTH);
        for v in 0..n {
            nodes[perm[v]] = g.nodes[v].clone();
            hp.row_slice_mut(perm[v]).copy_from_slice(h.row_slice(v));
        }
        let gp = LabeledGraph::new(
            "p",
            nodes,
            g.edges.iter().map(|e| Edge::new(perm[e.src], perm[e.dst], e.label.clone())).collect(),
        );
        let base = encode(&s, &g, &h);
        let permuted = encode(&s, &gp, &hp);
        prop_assert_eq!(base.shape(), permuted.shape());
        for v in 0..n {
            prop_assert_eq!(base.row_slice(v), permuted.row_slice(perm[v]));
        }
    }
}
