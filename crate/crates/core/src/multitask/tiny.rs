//! Tiny pre-norm transformer: one shared encoder, two independent decoders.
//!
//! Small enough to train on a CPU in seconds and to check gradients by
//! finite differences, while keeping the structure of a full-size
//! encoder-decoder summarizer.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::autodiff::{Grads, Graph, ParamGroup, ParamId, ParamStore, Var};
use super::backend::{AttentionTensor, DecoderHead, EncoderState, HeadCounters, Seq2SeqBackend};
use super::tensor::Matrix;
use super::ModelError;
use crate::sequencing::{TokenId, TrainingExample, SPECIALS};
use crate::text::short_digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_dim: usize,
    pub max_input_positions: usize,
    pub max_output_positions: usize,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            vocab_size: 512,
            d_model: 64,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ffn_dim: 256,
            max_input_positions: 1024,
            max_output_positions: 128,
        }
    }
}

impl TinyConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.vocab_size <= SPECIALS.close as usize {
            return Err(ModelError::InvalidConfig("vocabulary smaller than the reserved ids".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross_attn: Attention,
    norm3: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct Decoder {
    positions: ParamId,
    layers: Vec<DecoderLayer>,
    final_norm: Norm,
    out_w: ParamId,
    out_b: ParamId,
}

/// Summed negative log-likelihoods of one example.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExampleNll {
    pub summary_sum: f64,
    pub summary_tokens: usize,
    pub commonsense_sum: f64,
    pub commonsense_tokens: usize,
}

struct Builder<'r> {
    store: ParamStore,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn normal(&mut self, name: String, group: ParamGroup, rows: usize, cols: usize, std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| dist.sample(self.rng)).collect();
        self.store.add(name, group, Matrix::from_vec(rows, cols, data))
    }

    fn constant(&mut self, name: String, group: ParamGroup, cols: usize, value: f64) -> ParamId {
        self.store.add(name, group, Matrix::filled(1, cols, value))
    }

    fn norm(&mut self, prefix: &str, group: ParamGroup, d: usize) -> Norm {
        Norm {
            gain: self.constant(format!("{prefix}.gain"), group, d, 1.0),
            bias: self.constant(format!("{prefix}.bias"), group, d, 0.0),
        }
    }

    fn attention(&mut self, prefix: &str, group: ParamGroup, d: usize) -> Attention {
        let std = (1.0 / d as f64).sqrt();
        Attention {
            wq: self.normal(format!("{prefix}.wq"), group, d, d, std),
            wk: self.normal(format!("{prefix}.wk"), group, d, d, std),
            wv: self.normal(format!("{prefix}.wv"), group, d, d, std),
            wo: self.normal(format!("{prefix}.wo"), group, d, d, std),
        }
    }

    fn ffn(&mut self, prefix: &str, group: ParamGroup, d: usize, f: usize) -> FeedForward {
        FeedForward {
            w1: self.normal(format!("{prefix}.w1"), group, d, f, (1.0 / d as f64).sqrt()),
            b1: self.constant(format!("{prefix}.b1"), group, f, 0.0),
            w2: self.normal(format!("{prefix}.w2"), group, f, d, (1.0 / f as f64).sqrt()),
            b2: self.constant(format!("{prefix}.b2"), group, d, 0.0),
        }
    }

    fn decoder(&mut self, prefix: &str, group: ParamGroup, c: &TinyConfig) -> Decoder {
        let d = c.d_model;
        let positions = self.normal(format!("{prefix}.positions"), group, c.max_output_positions, d, 0.02);
        let layers = (0..c.decoder_layers)
            .map(|l| {
                let p = format!("{prefix}.layer{l}");
                DecoderLayer {
                    norm1: self.norm(&format!("{p}.norm1"), group, d),
                    self_attn: self.attention(&format!("{p}.self_attn"), group, d),
                    norm2: self.norm(&format!("{p}.norm2"), group, d),
                    cross_attn: self.attention(&format!("{p}.cross_attn"), group, d),
                    norm3: self.norm(&format!("{p}.norm3"), group, d),
                    ffn: self.ffn(&format!("{p}.ffn"), group, d, c.ffn_dim),
                }
            })
            .collect();
        Decoder {
            positions,
            layers,
            final_norm: self.norm(&format!("{prefix}.final_norm"), group, d),
            out_w: self.normal(format!("{prefix}.out_w"), group, d, c.vocab_size, (1.0 / d as f64).sqrt()),
            out_b: self.constant(format!("{prefix}.out_b"), group, c.vocab_size, 0.0),
        }
    }
}

#[derive(Debug)]
pub struct TinyTransformer {
    config: TinyConfig,
    store: ParamStore,
    token_embedding: ParamId,
    encoder_positions: ParamId,
    encoder_layers: Vec<EncoderLayer>,
    encoder_norm: Norm,
    summary: Decoder,
    commonsense: Decoder,
    counters: HeadCounters,
}

impl Clone for TinyTransformer {
    fn clone(&self) -> Self {
        let mut copy = TinyTransformer::new(self.config, 0).expect("config already validated");
        copy.store = self.store.clone();
        copy
    }
}

fn position_ids(n: usize) -> Vec<usize> {
    (0..n).collect()
}

impl TinyTransformer {
    /// Randomly initialized model. Shared parameters are drawn first, then
    /// the summary decoder, then the commonsense decoder, from one stream.
    pub fn new(config: TinyConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::default(),
            rng: &mut rng,
        };
        let d = config.d_model;
        let shared = ParamGroup::Shared;
        let token_embedding = b.normal("tok_emb".into(), shared, config.vocab_size, d, 0.02);
        let encoder_positions = b.normal("enc.positions".into(), shared, config.max_input_positions, d, 0.02);
        let encoder_layers = (0..config.encoder_layers)
            .map(|l| {
                let p = format!("enc.layer{l}");
                EncoderLayer {
                    norm1: b.norm(&format!("{p}.norm1"), shared, d),
                    attn: b.attention(&format!("{p}.attn"), shared, d),
                    norm2: b.norm(&format!("{p}.norm2"), shared, d),
                    ffn: b.ffn(&format!("{p}.ffn"), shared, d, config.ffn_dim),
                }
            })
            .collect();
        let encoder_norm = b.norm("enc.final_norm", shared, d);
        let summary = b.decoder("dec_summary", ParamGroup::SummaryDecoder, &config);
        let commonsense = b.decoder("dec_commonsense", ParamGroup::CommonsenseDecoder, &config);
        let store = b.store;
        Ok(TinyTransformer {
            config,
            store,
            token_embedding,
            encoder_positions,
            encoder_layers,
            encoder_norm,
            summary,
            commonsense,
            counters: HeadCounters::default(),
        })
    }

    pub fn config(&self) -> &TinyConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn decoder(&self, head: DecoderHead) -> &Decoder {
        match head {
            DecoderHead::Summary => &self.summary,
            DecoderHead::Commonsense => &self.commonsense,
        }
    }

    fn check_tokens(&self, ids: &[TokenId], max: usize) -> Result<Vec<usize>, ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > max {
            return Err(ModelError::SequenceTooLong { len: ids.len(), max });
        }
        ids.iter()
            .map(|&t| {
                if (t as usize) < self.config.vocab_size {
                    Ok(t as usize)
                } else {
                    Err(ModelError::TokenOutOfRange(t))
                }
            })
            .collect()
    }

    fn norm(&self, g: &mut Graph, n: Norm, x: Var) -> Var {
        let gain = g.param(n.gain);
        let bias = g.param(n.bias);
        g.layer_norm(x, gain, bias)
    }

    fn attention(
        &self,
        g: &mut Graph,
        a: Attention,
        query_in: Var,
        kv_in: Var,
        causal: bool,
        mut capture: Option<&mut Vec<Matrix>>,
    ) -> Var {
        let (wq, wk, wv, wo) = (g.param(a.wq), g.param(a.wk), g.param(a.wv), g.param(a.wo));
        let q = g.matmul(query_in, wq);
        let k = g.matmul(kv_in, wk);
        let v = g.matmul(kv_in, wv);
        let dh = self.config.d_model / self.config.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let probs = g.softmax(scores, causal);
            if let Some(c) = capture.as_deref_mut() {
                c.push(g.value(probs).clone());
            }
            outs.push(g.matmul(probs, vh));
        }
        let cat = g.concat_cols(&outs);
        g.matmul(cat, wo)
    }

    fn ffn(&self, g: &mut Graph, f: FeedForward, x: Var) -> Var {
        let (w1, b1, w2, b2) = (g.param(f.w1), g.param(f.b1), g.param(f.w2), g.param(f.b2));
        let h = g.matmul(x, w1);
        let h = g.add_row(h, b1);
        let h = g.gelu(h);
        let h = g.matmul(h, w2);
        g.add_row(h, b2)
    }

    fn run_encoder(&self, g: &mut Graph, ids: &[usize], mut capture: Option<&mut Vec<Matrix>>) -> Var {
        let table = g.param(self.token_embedding);
        let tok = g.gather(table, ids);
        let pos_table = g.param(self.encoder_positions);
        let pos = g.gather(pos_table, &position_ids(ids.len()));
        let mut x = g.add(tok, pos);
        for layer in &self.encoder_layers {
            let h = self.norm(g, layer.norm1, x);
            let a = self.attention(g, layer.attn, h, h, false, capture.as_deref_mut());
            x = g.add(x, a);
            let h = self.norm(g, layer.norm2, x);
            let f = self.ffn(g, layer.ffn, h);
            x = g.add(x, f);
        }
        self.norm(g, self.encoder_norm, x)
    }

    fn run_decoder(&self, g: &mut Graph, head: DecoderHead, encoded: Var, ids: &[usize]) -> Var {
        self.counters.bump(head);
        let dec = self.decoder(head);
        let table = g.param(self.token_embedding);
        let tok = g.gather(table, ids);
        let pos_table = g.param(dec.positions);
        let pos = g.gather(pos_table, &position_ids(ids.len()));
        let mut x = g.add(tok, pos);
        for layer in &dec.layers {
            let h = self.norm(g, layer.norm1, x);
            let a = self.attention(g, layer.self_attn, h, h, true, None);
            x = g.add(x, a);
            let h = self.norm(g, layer.norm2, x);
            let c = self.attention(g, layer.cross_attn, h, encoded, false, None);
            x = g.add(x, c);
            let h = self.norm(g, layer.norm3, x);
            let f = self.ffn(g, layer.ffn, h);
            x = g.add(x, f);
        }
        let h = self.norm(g, dec.final_norm, x);
        let (w, b) = (g.param(dec.out_w), g.param(dec.out_b));
        let logits = g.matmul(h, w);
        g.add_row(logits, b)
    }

    /// Teacher-forced decoder inputs: begin marker, then the target shifted.
    fn teacher_inputs(&self, target: &[TokenId]) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
        let targets = self.check_tokens(target, self.config.max_output_positions)?;
        let mut inputs = Vec::with_capacity(targets.len());
        inputs.push(SPECIALS.bos as usize);
        inputs.extend_from_slice(&targets[..targets.len() - 1]);
        Ok((inputs, targets))
    }

    /// Summed NLL of both targets. When `grads` is given, the gradient of
    /// `weights.0 * summary_sum + weights.1 * commonsense_sum` is added to
    /// it. A `None` commonsense weight skips the commonsense decoder.
    pub fn example_loss(
        &self,
        example: &TrainingExample,
        summary_weight: f64,
        commonsense_weight: Option<f64>,
        grads: Option<&mut Grads>,
    ) -> Result<ExampleNll, ModelError> {
        let input = self.check_tokens(example.input(), self.config.max_input_positions)?;
        let mut g = Graph::new(&self.store);
        let encoded = self.run_encoder(&mut g, &input, None);
        let (ds_in, ds_tgt) = self.teacher_inputs(&example.summary_ids)?;
        let ds_logits = self.run_decoder(&mut g, DecoderHead::Summary, encoded, &ds_in);
        let ds = g.nll(ds_logits, &ds_tgt);
        let mut out = ExampleNll {
            summary_sum: g.value(ds).data[0],
            summary_tokens: ds_tgt.len(),
            ..ExampleNll::default()
        };
        let mut terms = vec![(ds, summary_weight)];
        if let Some(w) = commonsense_weight {
            if example.commonsense_ids.is_empty() {
                return Err(ModelError::EmptyTarget(example.id.clone()));
            }
            let (cs_in, cs_tgt) = self.teacher_inputs(&example.commonsense_ids)?;
            let cs_logits = self.run_decoder(&mut g, DecoderHead::Commonsense, encoded, &cs_in);
            let cs = g.nll(cs_logits, &cs_tgt);
            out.commonsense_sum = g.value(cs).data[0];
            out.commonsense_tokens = cs_tgt.len();
            terms.push((cs, w));
        }
        if let Some(grads) = grads {
            let root = g.weighted_sum(&terms);
            g.backward_into(root, grads);
        }
        Ok(out)
    }

    pub fn param_ids(&self, group: ParamGroup) -> Vec<ParamId> {
        self.store
            .params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group == group)
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    const MAGIC: &'static [u8; 8] = b"TINYSEQ1";

    /// Binary checkpoint: magic, header length, JSON header, little-endian f64 data.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        #[derive(Serialize)]
        struct Header<'a> {
            config: &'a TinyConfig,
            params: Vec<(&'a str, usize, usize)>,
        }
        let header = Header {
            config: &self.config,
            params: self
                .store
                .params
                .iter()
                .map(|p| (p.name.as_str(), p.value.rows, p.value.cols))
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut bytes = Vec::with_capacity(16 + header.len() + self.store.scalar_count() * 8);
        bytes.extend_from_slice(Self::MAGIC);
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header);
        for p in &self.store.params {
            for v in &p.value.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| ModelError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| ModelError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Header {
            config: TinyConfig,
            params: Vec<(String, usize, usize)>,
        }
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| ModelError::io(path, e))?;
        let bad = |why: &str| ModelError::BadCheckpoint(format!("{}: {why}", path.display()));
        if bytes.len() < 16 || &bytes[..8] != Self::MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(bytes.get(16..16 + hlen).ok_or_else(|| bad("short header"))?)
            .map_err(|e| bad(&e.to_string()))?;
        let mut model = TinyTransformer::new(header.config, 0)?;
        if header.params.len() != model.store.len() {
            return Err(bad("parameter count mismatch"));
        }
        let mut offset = 16 + hlen;
        for (p, (name, rows, cols)) in model.store.params.iter_mut().zip(&header.params) {
            if p.name != *name || p.value.rows != *rows || p.value.cols != *cols {
                return Err(bad(&format!("unexpected parameter {name}")));
            }
            for v in p.value.data.iter_mut() {
                let chunk = bytes.get(offset..offset + 8).ok_or_else(|| bad("truncated data"))?;
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                offset += 8;
            }
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(model)
    }
}

impl Seq2SeqBackend for TinyTransformer {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn encode(&self, input: &[TokenId]) -> Result<EncoderState, ModelError> {
        let ids = self.check_tokens(input, self.config.max_input_positions)?;
        let mut g = Graph::new(&self.store);
        let out = self.run_encoder(&mut g, &ids, None);
        Ok(EncoderState {
            input: input.to_vec(),
            hidden: Some(g.value(out).clone()),
        })
    }

    fn next_token_logprobs(
        &self,
        head: DecoderHead,
        encoded: &EncoderState,
        prefix: &[TokenId],
    ) -> Result<Vec<f64>, ModelError> {
        let hidden = encoded
            .hidden
            .clone()
            .ok_or_else(|| ModelError::InvalidConfig("encoder state has no hidden states".into()))?;
        let ids = self.check_tokens(prefix, self.config.max_output_positions)?;
        let mut g = Graph::new(&self.store);
        let enc = g.constant(hidden);
        let logits = self.run_decoder(&mut g, head, enc, &ids);
        let lv = g.value(logits);
        let last = lv.row(lv.rows - 1);
        let max = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + last.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(last.iter().map(|v| v - log_z).collect())
    }

    fn encoder_attention(&self, input: &[TokenId]) -> Result<AttentionTensor, ModelError> {
        let ids = self.check_tokens(input, self.config.max_input_positions)?;
        let mut g = Graph::new(&self.store);
        let mut captured = Vec::new();
        self.run_encoder(&mut g, &ids, Some(&mut captured));
        let mut t = AttentionTensor::zeros(self.config.encoder_layers, self.config.heads, ids.len());
        for (i, m) in captured.iter().enumerate() {
            t.set_head(i / self.config.heads, i % self.config.heads, m);
        }
        Ok(t)
    }

    fn decoder_invocations(&self, head: DecoderHead) -> usize {
        self.counters.get(head)
    }

    fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.store.scalar_count() * 8);
        for p in &self.store.params {
            for v in &p.value.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        format!("tiny:{}", short_digest(&bytes, 16))
    }
}
