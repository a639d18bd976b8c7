use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeDirection, LabeledGraph, SELF_LABEL};
use crate::numerics::{Dropout, ParamId, ParamStore, Tape, Var};
use crate::vocab::{Vocab, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipKind {
    #[default]
    None,
    Residual,
    Dense,
}

impl SkipKind {
    pub const ALL: [SkipKind; 3] = [SkipKind::None, SkipKind::Residual, SkipKind::Dense];

    pub fn as_str(self) -> &'static str {
        match self {
            SkipKind::None => "none",
            SkipKind::Residual => "residual",
            SkipKind::Dense => "dense",
        }
    }
}

/// How edge gates are obtained. `Constant` replaces every gate by a fixed
/// value and exists for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GateMode {
    #[default]
    Learned,
    Constant(f64),
}

/// Whether edge labels missing from the label vocabulary are an error or
/// fall back to the unknown label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Strict,
    #[default]
    Open,
}

/// Edge-label vocabulary: `<unk>` and `self` followed by the given labels.
pub fn label_vocab<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> Vocab {
    let mut seen: Vec<&str> = labels.into_iter().collect();
    seen.sort_unstable();
    seen.dedup();
    Vocab::from_tokens(&[UNK, SELF_LABEL], seen)
}

/// Position of a direction in per-direction parameter arrays.
pub fn direction_slot(dir: EdgeDirection) -> usize {
    match dir {
        EdgeDirection::In => 0,
        EdgeDirection::Out => 1,
        EdgeDirection::Loop => 2,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Entries {
    centre: Vec<usize>,
    neighbour: Vec<usize>,
    label: Vec<usize>,
}

/// Neighbourhood entries of a graph grouped by direction, with labels
/// resolved to label-vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphIndex {
    nodes: usize,
    by_dir: [Entries; 3],
}

impl GraphIndex {
    pub fn new(g: &LabeledGraph, labels: &Vocab, mode: LabelMode) -> Result<Self> {
        g.validate().into_result(&g.id)?;
        let mut by_dir: [Entries; 3] = Default::default();
        for (v, hood) in g.neighbourhoods().into_iter().enumerate() {
            for nb in hood {
                let label = match (labels.get(nb.label), mode) {
                    (Some(id), _) => id,
                    (None, LabelMode::Open) => labels.id_or_unk(nb.label)?,
                    (None, LabelMode::Strict) => {
                        return Err(Error::Unknown {
                            kind: "edge label",
                            value: nb.label.to_string(),
                        })
                    }
                };
                let e = &mut by_dir[direction_slot(nb.direction)];
                e.centre.push(v);
                e.neighbour.push(nb.node);
                e.label.push(label);
            }
        }
        Ok(GraphIndex { nodes: g.node_count(), by_dir })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }
}

/// Parameters of one GCN layer, each array indexed by [`direction_slot`].
#[derive(Debug, Clone)]
pub struct GcnLayerParams {
    /// `input_width x width` direction matrices.
    pub weight: [ParamId; 3],
    /// `labels x width` label-bias tables.
    pub label_bias: [ParamId; 3],
    /// `input_width x 1` gate weights.
    pub gate_w: [ParamId; 3],
    /// `1 x 1` gate biases.
    pub gate_b: [ParamId; 3],
    pub input_width: usize,
    pub width: usize,
}

impl GcnLayerParams {
    pub fn build<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_width: usize,
        width: usize,
        labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut weight = Vec::new();
        let mut label_bias = Vec::new();
        let mut gate_w = Vec::new();
        let mut gate_b = Vec::new();
        for dir in EdgeDirection::ALL {
            let d = dir.as_str();
            weight.push(store.xavier(format!("{prefix}.w_{d}"), input_width, width, rng)?);
            label_bias.push(store.zeros(format!("{prefix}.label_bias_{d}"), labels, width)?);
            gate_w.push(store.xavier(format!("{prefix}.gate_w_{d}"), input_width, 1, rng)?);
            gate_b.push(store.zeros(format!("{prefix}.gate_b_{d}"), 1, 1)?);
        }
        let arr = |v: Vec<ParamId>| [v[0], v[1], v[2]];
        Ok(GcnLayerParams {
            weight: arr(weight),
            label_bias: arr(label_bias),
            gate_w: arr(gate_w),
            gate_b: arr(gate_b),
            input_width,
            width,
        })
    }
}

/// One gated, direction-aware graph convolution:
/// `h'_v = ReLU(Σ gate(u) · (h_u W_dir + b_{dir,label}))` over the
/// neighbourhood of `v`, where `gate(u) = sigmoid(h_u · w_dir + b_dir)`.
pub fn gcn_layer(tape: &mut Tape<'_>, h: Var, index: &GraphIndex, p: &GcnLayerParams, gate: GateMode) -> Result<Var> {
    let [rows, cols] = tape.shape(h);
    if rows != index.nodes || cols != p.input_width {
        return Err(Error::Shape {
            op: "gcn_layer",
            lhs: [rows, cols],
            rhs: [index.nodes, p.input_width],
        });
    }
    let mut parts = Vec::with_capacity(3);
    for (slot, e) in index.by_dir.iter().enumerate() {
        if e.centre.is_empty() {
            continue;
        }
        let w = tape.param(p.weight[slot]);
        let projected = tape.matmul(h, w)?;
        let msg = tape.gather_rows(projected, &e.neighbour)?;
        let table = tape.param(p.label_bias[slot]);
        let bias = tape.gather_rows(table, &e.label)?;
        let msg = tape.add(msg, bias)?;
        let msg = match gate {
            GateMode::Learned => {
                let gw = tape.param(p.gate_w[slot]);
                let gb = tape.param(p.gate_b[slot]);
                let score = tape.matmul(h, gw)?;
                let score = tape.add_broadcast(score, gb)?;
                let node_gate = tape.sigmoid(score);
                let edge_gate = tape.gather_rows(node_gate, &e.neighbour)?;
                tape.mul_col(msg, edge_gate)?
            }
            GateMode::Constant(c) => tape.scale(msg, c),
        };
        parts.push(tape.scatter_add_rows(msg, &e.centre, index.nodes)?);
    }
    let mut total = parts[0];
    for &part in &parts[1..] {
        total = tape.add(total, part)?;
    }
    Ok(tape.relu(total))
}

/// A stack of GCN layers with optional skip connections.
#[derive(Debug, Clone)]
pub struct GcnEncoder {
    pub layers: Vec<GcnLayerParams>,
    pub skip: SkipKind,
    pub gate: GateMode,
    pub input_width: usize,
    pub hidden: usize,
}

impl GcnEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn build<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_width: usize,
        hidden: usize,
        layers: usize,
        skip: SkipKind,
        labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::config("a GCN encoder needs at least one layer"));
        }
        if skip == SkipKind::Residual && input_width != hidden {
            return Err(Error::config(format!(
                "residual connections need the input width ({input_width}) to equal the hidden size ({hidden})"
            )));
        }
        let mut params = Vec::with_capacity(layers);
        let mut width = input_width;
        for k in 0..layers {
            params.push(GcnLayerParams::build(store, &format!("{prefix}.layer{k}"), width, hidden, labels, rng)?);
            width = next_width(skip, width, hidden);
        }
        Ok(GcnEncoder {
            layers: params,
            skip,
            gate: GateMode::Learned,
            input_width,
            hidden,
        })
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_width, |w, _| next_width(self.skip, w, self.hidden))
    }

    /// Runs every layer on the `nodes x input_width` matrix `h0`. Dropout is
    /// applied to the input of every layer after the first.
    pub fn encode(&self, tape: &mut Tape<'_>, h0: Var, index: &GraphIndex, drop: &mut Dropout<'_>) -> Result<Var> {
        let mut h = h0;
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                h = drop.apply(tape, h)?;
            }
            let out = gcn_layer(tape, h, index, layer, self.gate)?;
            h = match self.skip {
                SkipKind::None => out,
                SkipKind::Residual => tape.add(out, h)?,
                SkipKind::Dense => tape.concat_cols(&[out, h])?,
            };
        }
        Ok(h)
    }
}

fn next_width(skip: SkipKind, width: usize, hidden: usize) -> usize {
    match skip {
        SkipKind::None | SkipKind::Residual => hidden,
        SkipKind::Dense => width + hidden,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{Edge, Node};
    use crate::numerics::Tensor;

    fn graph(n: usize, edges: &[(usize, usize, &str)]) -> LabeledGraph {
        LabeledGraph::new(
            "t",
            (0..n).map(|i| Node::new(format!("n{i}"))).collect(),
            edges.iter().map(|&(s, d, l)| Edge::new(s, d, l)).collect(),
        )
    }

    fn random_h(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn isolated_node_with_identity_loop_is_relu() {
        let g = graph(1, &[]);
        let labels = label_vocab([]);
        let index = GraphIndex::new(&g, &labels, LabelMode::Strict).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = GcnLayerParams::build(&mut store, "l", 3, 3, labels.len(), &mut rng).unwrap();
        *store.value_mut(p.weight[2]) = Tensor::identity(3);
        let mut tape = Tape::new(&store);
        let h = tape.constant(Tensor::row(&[1.0, -2.0, 0.5]));
        let out = gcn_layer(&mut tape, h, &index, &p, GateMode::Constant(1.0)).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn zero_gates_give_zero_output() {
        let g = graph(3, &[(0, 1, "r"), (1, 2, "s")]);
        let labels = label_vocab(["r", "s"]);
        let index = GraphIndex::new(&g, &labels, LabelMode::Strict).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GcnLayerParams::build(&mut store, "l", 4, 4, labels.len(), &mut rng).unwrap();
        let h0 = random_h(3, 4, &mut rng);
        let mut tape = Tape::new(&store);
        let h = tape.constant(h0);
        let out = gcn_layer(&mut tape, h, &index, &p, GateMode::Constant(0.0)).unwrap();
        assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unknown_label_strict_vs_open() {
        let g = graph(2, &[(0, 1, "new")]);
        let labels = label_vocab(["r"]);
        assert!(GraphIndex::new(&g, &labels, LabelMode::Strict).is_err());
        let idx = GraphIndex::new(&g, &labels, LabelMode::Open).unwrap();
        assert_eq!(idx.by_dir[direction_slot(EdgeDirection::Out)].label, vec![labels.get(UNK).unwrap()]);
    }

    #[test]
    fn residual_with_zero_gates_is_identity() {
        let g = graph(3, &[(0, 1, "r"), (2, 1, "r")]);
        let labels = label_vocab(["r"]);
        let index = GraphIndex::new(&g, &labels, LabelMode::Strict).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut enc = GcnEncoder::build(&mut store, "gcn", 5, 5, 3, SkipKind::Residual, labels.len(), &mut rng).unwrap();
        enc.gate = GateMode::Constant(0.0);
        let h0 = random_h(3, 5, &mut rng);
        let mut tape = Tape::new(&store);
        let h = tape.constant(h0.clone());
        let out = enc.encode(&mut tape, h, &index, &mut Dropout::eval()).unwrap();
        assert_eq!(tape.value(out), &h0);
    }

    #[test]
    fn widths_follow_skip_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (skip, want) in [(SkipKind::None, 4), (SkipKind::Residual, 4), (SkipKind::Dense, 4 * 8)] {
            let mut store = ParamStore::new();
            let enc = GcnEncoder::build(&mut store, "gcn", 4, 4, 7, skip, 3, &mut rng).unwrap();
            assert_eq!(enc.output_width(), want, "{skip:?}");
        }
        let mut store = ParamStore::new();
        let err = GcnEncoder::build(&mut store, "gcn", 3, 4, 2, SkipKind::Residual, 3, &mut rng).unwrap_err();
        assert!(err.is_contract_violation());
    }

    #[test]
    fn dense_stack_output_has_expected_shape() {
        let g = graph(2, &[(0, 1, "r")]);
        let labels = label_vocab(["r"]);
        let index = GraphIndex::new(&g, &labels, LabelMode::Strict).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = GcnEncoder::build(&mut store, "gcn", 3, 3, 2, SkipKind::Dense, labels.len(), &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let h = tape.constant(random_h(2, 3, &mut rng));
        let out = enc.encode(&mut tape, h, &index, &mut Dropout::eval()).unwrap();
        assert_eq!(tape.shape(out), [2, 9]);
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let g = graph(2, &[]);
        let labels = label_vocab([]);
        let index = GraphIndex::new(&g, &labels, LabelMode::Strict).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GcnLayerParams::build(&mut store, "l", 3, 3, labels.len(), &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let h = tape.constant(Tensor::zeros(3, 3));
        assert!(gcn_layer(&mut tape, h, &index, &p, GateMode::Learned).is_err());
    }
}
