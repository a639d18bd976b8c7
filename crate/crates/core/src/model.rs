//! The complete graph-to-sequence model: vocabularies, parameters, loss and
//! decoding for one example at a time.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{AttentionKind, Decoded, Decoder, DecoderConfig, Memory, Nll, Source};
use crate::encoders::{compose_node_inputs, label_vocab, BiLstmEncoder, GcnEncoder, GraphIndex, LabelMode, SkipKind};
use crate::error::{Error, Result};
use crate::ingestion::{linearise, Example, LineariseOptions};
use crate::numerics::rng::{example_seed, stream_rng, Stream};
use crate::numerics::{Dropout, ParamId, ParamSnapshot, ParamStore, Tape, Tensor, Var};
use crate::vocab::{Vocab, EOS_ID, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Gcn,
    Bilstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub gcn_layers: usize,
    pub skip: SkipKind,
    pub hidden: usize,
    /// Width of node (or source token) inputs and of target embeddings.
    pub embed_dim: usize,
    /// Columns of the node input taken by summed node features; the lemma
    /// embedding gets the rest. Zero disables features.
    pub feature_dim: usize,
    pub copy: bool,
    pub attention: AttentionKind,
    pub input_feeding: bool,
    pub label_mode: LabelMode,
    /// Seeds parameter initialisation and on-the-fly linearisation.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Gcn,
            gcn_layers: 4,
            skip: SkipKind::Residual,
            hidden: 256,
            embed_dim: 256,
            feature_dim: 0,
            copy: false,
            attention: AttentionKind::General,
            input_feeding: true,
            label_mode: LabelMode::Open,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Feature columns actually used: node features only reach graph
    /// encoders.
    pub fn node_feature_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Gcn => self.feature_dim,
            EncoderKind::Bilstm => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::config("hidden and embed_dim must be positive"));
        }
        if self.feature_dim >= self.embed_dim {
            return Err(Error::config(format!(
                "feature_dim {} must be smaller than embed_dim {}",
                self.feature_dim, self.embed_dim
            )));
        }
        if self.encoder == EncoderKind::Gcn && self.gcn_layers == 0 {
            return Err(Error::config("gcn_layers must be at least 1"));
        }
        Ok(())
    }
}

/// Every vocabulary a model depends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub source: Vocab,
    pub target: Vocab,
    pub labels: Vocab,
    pub features: Vocab,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    source: Vec<String>,
    target: Vec<String>,
    labels: Vec<String>,
    features: Vec<String>,
}

impl Vocabs {
    /// Builds vocabularies from training examples. Source tokens are node
    /// labels for graph encoders and linearised tokens for the sequential one.
    pub fn build(examples: &[Example], config: &ModelConfig) -> Result<Self> {
        let mut source_tokens: Vec<String> = Vec::new();
        for ex in examples {
            match config.encoder {
                EncoderKind::Gcn => source_tokens.extend(ex.graph.labels().map(str::to_string)),
                EncoderKind::Bilstm => source_tokens.extend(source_sequence(ex, config.seed)?),
            }
        }
        Ok(Vocabs {
            source: Vocab::build_tokens(source_tokens.iter().map(String::as_str), 1),
            target: Vocab::build_tokens(examples.iter().flat_map(|e| e.target.iter().map(String::as_str)), 1),
            labels: label_vocab(examples.iter().flat_map(|e| e.graph.edges.iter().map(|x| x.label.as_str()))),
            features: Vocab::build(
                &[UNK],
                examples
                    .iter()
                    .flat_map(|e| e.graph.nodes.iter().flat_map(|n| n.features.iter().map(String::as_str))),
                1,
            ),
        })
    }

    fn lists(&self) -> VocabLists {
        VocabLists {
            source: self.source.tokens().to_vec(),
            target: self.target.tokens().to_vec(),
            labels: self.labels.tokens().to_vec(),
            features: self.features.tokens().to_vec(),
        }
    }

    fn from_lists(lists: VocabLists) -> Self {
        let list = |v: Vec<String>| Vocab::from_tokens(&[], v);
        Vocabs {
            source: list(lists.source),
            target: list(lists.target),
            labels: list(lists.labels),
            features: list(lists.features),
        }
    }

    /// Writes the token lists and their hash as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabFile {
            fingerprint: self.fingerprint(),
            vocabs: self.lists(),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`Vocabs::save`], rejecting it when the stored
    /// hash does not match the lists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: VocabFile = serde_json::from_str(&text)?;
        let vocabs = Vocabs::from_lists(file.vocabs);
        if vocabs.fingerprint() != file.fingerprint {
            return Err(Error::Data(format!(
                "{}: vocabulary hash {} does not match the stored {}",
                path.display(),
                vocabs.fingerprint(),
                file.fingerprint
            )));
        }
        Ok(vocabs)
    }

    /// Hash over all four vocabularies.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in [&self.source, &self.target, &self.labels, &self.features] {
            h.update(v.fingerprint().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Source token sequence for the sequential encoder.
pub fn source_sequence(ex: &Example, seed: u64) -> Result<Vec<String>> {
    match &ex.linearised {
        Some(seq) => Ok(seq.clone()),
        None => linearise(&ex.graph, example_seed(seed, ex.id()), LineariseOptions::default()),
    }
}

/// Model inputs for one example, resolved against the vocabularies.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    index: Option<GraphIndex>,
    source_ids: Vec<usize>,
    feature_ids: Vec<Vec<usize>>,
    copy_ids: Vec<usize>,
    /// Source tokens outside the target vocabulary, in extended-id order.
    pub oov: Vec<String>,
    /// Target ids (extended vocabulary) followed by the end token.
    pub target: Vec<usize>,
}

impl Prepared {
    pub fn target_len(&self) -> usize {
        self.target.len()
    }
}

#[derive(Debug, Clone)]
enum EncoderParams {
    Gcn(GcnEncoder),
    Bilstm(BiLstmEncoder),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub store: ParamStore,
    source_embedding: ParamId,
    feature_embedding: Option<ParamId>,
    encoder: EncoderParams,
    pub decoder: Decoder,
}

impl Model {
    pub fn new(config: ModelConfig, vocabs: Vocabs) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, Stream::Init);
        let mut store = ParamStore::new();
        let feature_dim = config.node_feature_dim();
        let source_embedding = store.xavier(
            "src.embedding",
            vocabs.source.len(),
            config.embed_dim - feature_dim,
            &mut rng,
        )?;
        let feature_embedding = if feature_dim > 0 {
            Some(store.xavier("src.feature_embedding", vocabs.features.len(), feature_dim, &mut rng)?)
        } else {
            None
        };
        let (encoder, memory_width) = match config.encoder {
            EncoderKind::Gcn => {
                let enc = GcnEncoder::build(
                    &mut store,
                    "gcn",
                    config.embed_dim,
                    config.hidden,
                    config.gcn_layers,
                    config.skip,
                    vocabs.labels.len(),
                    &mut rng,
                )?;
                let w = enc.output_width();
                (EncoderParams::Gcn(enc), w)
            }
            EncoderKind::Bilstm => {
                let enc = BiLstmEncoder::build(&mut store, "bilstm", config.embed_dim, config.hidden, &mut rng)?;
                (EncoderParams::Bilstm(enc), config.hidden)
            }
        };
        let decoder = Decoder::build(
            &mut store,
            "dec",
            DecoderConfig {
                vocab: vocabs.target.len(),
                embed: config.embed_dim,
                hidden: config.hidden,
                memory_width,
                attention: config.attention,
                input_feeding: config.input_feeding,
                copy: config.copy,
            },
            &mut rng,
        )?;
        Ok(Model {
            config,
            vocabs,
            store,
            source_embedding,
            feature_embedding,
            encoder,
            decoder,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn memory_width(&self) -> usize {
        self.decoder.config.memory_width
    }

    pub fn source_embedding(&self) -> ParamId {
        self.source_embedding
    }

    pub fn target_embedding(&self) -> ParamId {
        self.decoder.embedding
    }

    pub fn prepare(&self, ex: &Example) -> Result<Prepared> {
        self.prepare_inner(ex, None)
    }

    /// Like [`prepare`](Self::prepare), but the sequential encoder sees a
    /// fresh linearisation drawn from `seed` instead of the stored one.
    pub fn prepare_relinearised(&self, ex: &Example, seed: u64) -> Result<Prepared> {
        self.prepare_inner(ex, Some(seed))
    }

    fn prepare_inner(&self, ex: &Example, relinearise: Option<u64>) -> Result<Prepared> {
        let (tokens, index) = match self.config.encoder {
            EncoderKind::Gcn => (
                ex.graph.labels().map(str::to_string).collect::<Vec<_>>(),
                Some(GraphIndex::new(&ex.graph, &self.vocabs.labels, self.config.label_mode)?),
            ),
            EncoderKind::Bilstm => {
                let seq = match relinearise {
                    Some(seed) => linearise(&ex.graph, example_seed(seed, ex.id()), LineariseOptions::default())?,
                    None => source_sequence(ex, self.config.seed)?,
                };
                (seq, None)
            }
        };
        if tokens.is_empty() {
            return Err(Error::Data(format!("example `{}` has an empty source", ex.id())));
        }
        let source_ids = tokens
            .iter()
            .map(|t| self.vocabs.source.id_or_unk(t))
            .collect::<Result<Vec<_>>>()?;
        let feature_ids = match self.config.encoder {
            EncoderKind::Gcn => ex
                .graph
                .nodes
                .iter()
                .map(|n| {
                    n.features
                        .iter()
                        .map(|f| self.vocabs.features.id_or_unk(f))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
            EncoderKind::Bilstm => Vec::new(),
        };

        let target_vocab = &self.vocabs.target;
        let mut oov: Vec<String> = Vec::new();
        let mut oov_index: HashMap<&str, usize> = HashMap::new();
        let mut copy_ids = Vec::with_capacity(tokens.len());
        for t in &tokens {
            let id = match target_vocab.get(t) {
                Some(id) => id,
                None => *oov_index.entry(t.as_str()).or_insert_with(|| {
                    oov.push(t.clone());
                    target_vocab.len() + oov.len() - 1
                }),
            };
            copy_ids.push(id);
        }
        let mut target = Vec::with_capacity(ex.target.len() + 1);
        for t in &ex.target {
            let id = match target_vocab.get(t) {
                Some(id) => id,
                None if self.config.copy => match oov_index.get(t.as_str()) {
                    Some(&id) => id,
                    None => target_vocab.id_or_unk(t)?,
                },
                None => target_vocab.id_or_unk(t)?,
            };
            target.push(id);
        }
        target.push(EOS_ID);
        Ok(Prepared {
            id: ex.id().to_string(),
            index,
            source_ids,
            feature_ids,
            copy_ids,
            oov,
            target,
        })
    }

    /// Encoder states for one example.
    pub fn encode(&self, tape: &mut Tape<'_>, p: &Prepared, drop: &mut Dropout<'_>) -> Result<Var> {
        let table = tape.param(self.source_embedding);
        let inputs = match self.feature_embedding {
            Some(fe) => {
                let ft = tape.param(fe);
                compose_node_inputs(tape, table, ft, &p.source_ids, &p.feature_ids)?
            }
            _ => tape.gather_rows(table, &p.source_ids)?,
        };
        let inputs = drop.apply(tape, inputs)?;
        match (&self.encoder, &p.index) {
            (EncoderParams::Gcn(enc), Some(index)) => enc.encode(tape, inputs, index, drop),
            (EncoderParams::Bilstm(enc), _) => enc.encode(tape, inputs, drop),
            (EncoderParams::Gcn(_), None) => Err(Error::contract("graph encoder given a sequence input")),
        }
    }

    fn source(&self, tape: &mut Tape<'_>, p: &Prepared, drop: &mut Dropout<'_>) -> Result<Source> {
        let states = self.encode(tape, p, drop)?;
        Ok(Source {
            memory: Memory::new(tape, states, None)?,
            copy_ids: p.copy_ids.clone(),
            ext_width: self.vocabs.target.len() + p.oov.len(),
        })
    }

    /// Teacher-forced summed negative log likelihood of the example target.
    pub fn loss(&self, tape: &mut Tape<'_>, p: &Prepared, drop: &mut Dropout<'_>) -> Result<Nll> {
        let src = self.source(tape, p, drop)?;
        self.decoder.nll(tape, &src, &p.target, drop)
    }

    /// Argmax prediction at every target position under teacher forcing.
    pub fn teacher_forced_predictions(&self, p: &Prepared) -> Result<Vec<usize>> {
        let mut tape = Tape::new(&self.store);
        let mut eval = Dropout::eval();
        let src = self.source(&mut tape, p, &mut eval)?;
        let dists = self.decoder.teacher_forced(&mut tape, &src, &p.target, &mut eval)?;
        Ok(dists
            .into_iter()
            .map(|d| crate::decoder::argmax_allowed(tape.value(d).data()).0)
            .collect())
    }

    /// Decodes one example; `beam` ≤ 1 means greedy search.
    pub fn decode(&self, p: &Prepared, max_len: usize, beam: usize) -> Result<(Vec<String>, Decoded)> {
        let mut tape = Tape::new(&self.store);
        let src = self.source(&mut tape, p, &mut Dropout::eval())?;
        let decoded = self.decoder.beam(&mut tape, &src, max_len, beam)?;
        let tokens = decoded.tokens.iter().map(|&id| self.token(p, id)).collect();
        Ok((tokens, decoded))
    }

    fn token(&self, p: &Prepared, id: usize) -> String {
        let v = &self.vocabs.target;
        match v.token(id) {
            Some(t) => t.to_string(),
            None => p.oov.get(id - v.len()).cloned().unwrap_or_else(|| UNK.to_string()),
        }
    }

    /// Replaces the source embedding rows with `table` (same shape).
    pub fn set_source_embedding(&mut self, table: Tensor) -> Result<()> {
        set_table(&mut self.store, self.source_embedding, table)
    }

    pub fn set_target_embedding(&mut self, table: Tensor) -> Result<()> {
        set_table(&mut self.store, self.decoder.embedding, table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            config: self.config.clone(),
            vocab_fingerprint: self.vocabs.fingerprint(),
            vocabs: self.vocabs.lists(),
            params: ParamSnapshot::capture(&self.store),
        };
        let json = serde_json::to_string(&file)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Data(format!("{}: not a model checkpoint", path.display())));
        }
        let vocabs = Vocabs::from_lists(file.vocabs);
        if vocabs.fingerprint() != file.vocab_fingerprint {
            return Err(Error::Data(format!(
                "{}: vocabulary hash {} does not match the stored {}",
                path.display(),
                vocabs.fingerprint(),
                file.vocab_fingerprint
            )));
        }
        let mut model = Model::new(file.config, vocabs)?;
        file.params.restore(&mut model.store)?;
        Ok(model)
    }
}

const MODEL_FORMAT: &str = "g2t-model-v1";

#[derive(Serialize, Deserialize)]
struct VocabFile {
    fingerprint: String,
    vocabs: VocabLists,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: ModelConfig,
    vocab_fingerprint: String,
    vocabs: VocabLists,
    params: ParamSnapshot,
}

fn set_table(store: &mut ParamStore, id: ParamId, table: Tensor) -> Result<()> {
    if store.value(id).shape() != table.shape() {
        return Err(Error::Shape {
            op: "set_embedding",
            lhs: store.value(id).shape(),
            rhs: table.shape(),
        });
    }
    *store.value_mut(id) = table;
    Ok(())
}
