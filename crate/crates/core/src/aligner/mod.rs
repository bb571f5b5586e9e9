//! Reverse-direction attentional encoder-decoder: a bidirectional LSTM reads
//! WRL words and an attentive LSTM decoder emits UL symbols. Every UL symbol
//! thus receives an attention distribution over WRL positions.

mod attention;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelUtterance, Vocabulary, BOS, EOS};
use crate::error::{Error, Result};
use crate::numerics::{
    backward, checkpoint_from_str, checkpoint_to_string, lstm_cell, Gradients, Graph, NodeId, ParamId, ParamStore,
    Real, Tensor,
};

pub use attention::{format_attention, parse_attention, read_attention, write_attention, AttentionMatrix};
pub use train::{train, train_with_progress, EpochRecord, TrainingLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignerConfig {
    pub hidden_size: usize,
    /// Embedding width; 0 means "same as `hidden_size`".
    pub embedding_size: usize,
    pub layers: usize,
    /// Attention softmax temperature, used in training and extraction alike.
    pub temperature: f64,
    pub dropout: f64,
    /// Also drop out source embeddings (off by default).
    pub source_dropout: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub maxout_pool: usize,
    pub init_scale: f64,
    pub forget_bias: f64,
    pub seed: u64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            embedding_size: 0,
            layers: 1,
            temperature: 10.0,
            dropout: 0.5,
            source_dropout: false,
            batch_size: 32,
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 30,
            clip_norm: 5.0,
            maxout_pool: 2,
            init_scale: 0.1,
            forget_bias: 1.0,
            seed: 1,
        }
    }
}

impl AlignerConfig {
    pub fn embedding_dim(&self) -> usize {
        if self.embedding_size == 0 {
            self.hidden_size
        } else {
            self.embedding_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden_size == 0 || self.batch_size == 0 || self.max_epochs == 0 || self.maxout_pool == 0 {
            return bad("hidden size, batch size, max epochs and maxout pool must be positive".into());
        }
        if self.layers != 1 {
            return bad(format!("only single-layer encoder and decoder are supported, got {}", self.layers));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) || !(self.init_scale > 0.0) {
            return bad("learning rate, clip norm and init scale must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ids {
    src_emb: ParamId,
    tgt_emb: ParamId,
    enc_fwd_w: ParamId,
    enc_fwd_b: ParamId,
    enc_bwd_w: ParamId,
    enc_bwd_b: ParamId,
    init_w: ParamId,
    init_b: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
    att_src: ParamId,
    att_state: ParamId,
    att_b: ParamId,
    att_v: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
}

const PARAM_NAMES: [&str; 18] = [
    "source_embedding",
    "target_embedding",
    "encoder_forward_w",
    "encoder_forward_b",
    "encoder_backward_w",
    "encoder_backward_b",
    "init_w",
    "init_b",
    "decoder_w",
    "decoder_b",
    "attention_source_w",
    "attention_state_w",
    "attention_b",
    "attention_v",
    "output_w",
    "output_b",
    "projection_w",
    "projection_b",
];

impl Ids {
    fn resolve<F: Real>(store: &ParamStore<F>) -> Result<Self> {
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter `{name}`")))
        };
        Ok(Self {
            src_emb: get(PARAM_NAMES[0])?,
            tgt_emb: get(PARAM_NAMES[1])?,
            enc_fwd_w: get(PARAM_NAMES[2])?,
            enc_fwd_b: get(PARAM_NAMES[3])?,
            enc_bwd_w: get(PARAM_NAMES[4])?,
            enc_bwd_b: get(PARAM_NAMES[5])?,
            init_w: get(PARAM_NAMES[6])?,
            init_b: get(PARAM_NAMES[7])?,
            dec_w: get(PARAM_NAMES[8])?,
            dec_b: get(PARAM_NAMES[9])?,
            att_src: get(PARAM_NAMES[10])?,
            att_state: get(PARAM_NAMES[11])?,
            att_b: get(PARAM_NAMES[12])?,
            att_v: get(PARAM_NAMES[13])?,
            out_w: get(PARAM_NAMES[14])?,
            out_b: get(PARAM_NAMES[15])?,
            proj_w: get(PARAM_NAMES[16])?,
            proj_b: get(PARAM_NAMES[17])?,
        })
    }
}

/// Expected parameter shapes, in `PARAM_NAMES` order.
fn param_shapes(cfg: &AlignerConfig, src_vocab: usize, tgt_vocab: usize) -> Vec<Vec<usize>> {
    let n = cfg.hidden_size;
    let e = cfg.embedding_dim();
    let p = cfg.maxout_pool;
    vec![
        vec![src_vocab, e],
        vec![tgt_vocab, e],
        vec![4 * n, e + n],
        vec![4 * n],
        vec![4 * n, e + n],
        vec![4 * n],
        vec![n, 2 * n],
        vec![n],
        vec![4 * n, e + 2 * n + n],
        vec![4 * n],
        vec![n, 2 * n],
        vec![n, n],
        vec![n],
        vec![1, n],
        vec![p * n, n + e + 2 * n],
        vec![p * n],
        vec![tgt_vocab, n],
        vec![tgt_vocab],
    ]
}

/// Gram-Schmidt on a Gaussian matrix.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        for r in &rows {
            let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    rows
}

/// LSTM weights `(4n, input + n)` with uniform input part and orthogonal
/// recurrent blocks.
fn init_lstm(input: usize, n: usize, cfg: &AlignerConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cols = input + n;
    let mut w = vec![0.0; 4 * n * cols];
    for gate in 0..4 {
        let q = orthogonal(n, rng);
        for r in 0..n {
            let row = gate * n + r;
            for c in 0..input {
                w[row * cols + c] = rng.random_range(-cfg.init_scale..=cfg.init_scale);
            }
            for c in 0..n {
                w[row * cols + input + c] = q[r][c];
            }
        }
    }
    w
}

/// Zero gate biases except the forget gate.
fn lstm_bias(n: usize, forget_bias: f64) -> Vec<f64> {
    let mut b = vec![0.0; 4 * n];
    b[n..2 * n].iter_mut().for_each(|x| *x = forget_bias);
    b
}

/// Source ids, decoder input ids (BOS then the symbols) and target ids
/// (the symbols then EOS) of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub id: String,
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

impl EncodedPair {
    pub fn decoder_inputs(&self) -> impl Iterator<Item = u32> + '_ {
        std::iter::once(BOS).chain(self.target.iter().copied())
    }

    pub fn outputs(&self) -> impl Iterator<Item = u32> + '_ {
        self.target.iter().copied().chain(std::iter::once(EOS))
    }
}

/// Per-step attention and cross-entropy recorded while running the decoder.
struct Trace {
    loss: NodeId,
    attention_logits: Vec<NodeId>,
    output_ce: Vec<NodeId>,
    maxout_inputs: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignerModel<F: Real = f32> {
    pub config: AlignerConfig,
    /// WRL side: encoder input.
    pub source_vocab: Vocabulary,
    /// UL side: decoder output.
    pub target_vocab: Vocabulary,
    params: ParamStore<F>,
    ids: IdsHolder,
}

#[derive(Debug, Clone, Copy)]
struct IdsHolder(Ids);

impl PartialEq for IdsHolder {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: AlignerConfig,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the dropout stream of one training example, independent of
/// which worker evaluates it.
pub(crate) fn example_seed(seed: u64, epoch: usize, batch: usize, index: usize) -> u64 {
    splitmix(splitmix(splitmix(seed ^ epoch as u64) ^ batch as u64) ^ index as u64)
}

impl<F: Real> AlignerModel<F> {
    /// Randomly initialized model bound to the two vocabularies.
    pub fn new(config: AlignerConfig, source_vocab: Vocabulary, target_vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        if source_vocab.is_empty() || target_vocab.is_empty() {
            return Err(Error::Data("aligner vocabularies must be nonempty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = config.hidden_size;
        let e = config.embedding_dim();
        let shapes = param_shapes(&config, source_vocab.len(), target_vocab.len());
        let mut store = ParamStore::new();
        for (k, (name, shape)) in PARAM_NAMES.iter().zip(&shapes).enumerate() {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = match k {
                2 | 4 => init_lstm(e, n, &config, &mut rng),
                8 => init_lstm(e + 2 * n, n, &config, &mut rng),
                3 | 5 | 9 => lstm_bias(n, config.forget_bias),
                _ => (0..len)
                    .map(|_| rng.random_range(-config.init_scale..=config.init_scale))
                    .collect(),
            };
            store.add(*name, Tensor::new(shape.clone(), data.into_iter().map(F::of).collect())?);
        }
        let ids = Ids::resolve(&store)?;
        Ok(Self {
            config,
            source_vocab,
            target_vocab,
            params: store,
            ids: IdsHolder(ids),
        })
    }

    fn from_parts(
        config: AlignerConfig,
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        params: ParamStore<F>,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(&config, source_vocab.len(), target_vocab.len());
        if params.len() != PARAM_NAMES.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} parameters, expected {}",
                params.len(),
                PARAM_NAMES.len()
            )));
        }
        for (name, shape) in PARAM_NAMES.iter().zip(&shapes) {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter `{name}`")))?;
            if params.get(id).shape() != shape.as_slice() {
                return Err(Error::Data(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    params.get(id).shape()
                )));
            }
        }
        let ids = Ids::resolve(&params)?;
        Ok(Self {
            config,
            source_vocab,
            target_vocab,
            params,
            ids: IdsHolder(ids),
        })
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn cast<G: Real>(&self) -> AlignerModel<G> {
        AlignerModel {
            config: self.config.clone(),
            source_vocab: self.source_vocab.clone(),
            target_vocab: self.target_vocab.clone(),
            params: self.params.cast(),
            ids: self.ids,
        }
    }

    /// Maps an utterance to ids: unseen WRL words become UNK, unseen UL
    /// symbols are an error.
    pub fn encode_pair(&self, utt: &ParallelUtterance) -> Result<EncodedPair> {
        let source = utt.wrl_words.iter().map(|w| self.source_vocab.id_or_unk(w)).collect();
        let target = utt
            .ul_symbols
            .iter()
            .map(|s| {
                self.target_vocab
                    .id(s)
                    .ok_or_else(|| Error::Data(format!("utterance {}: UL symbol `{s}` not in model vocabulary", utt.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedPair {
            id: utt.id.clone(),
            source,
            target,
        })
    }

    fn check_ids(&self, source: &[u32], target: &[u32]) -> Result<()> {
        if source.is_empty() {
            return Err(Error::Data("empty source sequence".into()));
        }
        if let Some(&bad) = source.iter().find(|&&i| i as usize >= self.source_vocab.len()) {
            return Err(Error::Data(format!("source id {bad} outside vocabulary of {}", self.source_vocab.len())));
        }
        if let Some(&bad) = target.iter().find(|&&i| i as usize >= self.target_vocab.len()) {
            return Err(Error::Data(format!("target id {bad} outside vocabulary of {}", self.target_vocab.len())));
        }
        Ok(())
    }

    fn dropout_node(&self, g: &mut Graph<'_, F>, x: NodeId, rng: &mut Option<ChaCha8Rng>) -> Result<NodeId> {
        let p = self.config.dropout;
        match rng {
            Some(r) if p > 0.0 => {
                let keep = F::of(1.0 / (1.0 - p));
                let mask = (0..g.value(x).len())
                    .map(|_| if r.random::<f64>() < p { F::zero() } else { keep })
                    .collect();
                g.mul_const(x, mask)
            }
            _ => Ok(x),
        }
    }

    /// Encoder states as a tape node of shape `(A, 2n)`, plus the initial
    /// decoder state.
    fn encode_on(
        &self,
        g: &mut Graph<'_, F>,
        source: &[u32],
        rng: &mut Option<ChaCha8Rng>,
    ) -> Result<(NodeId, NodeId)> {
        let ids = self.ids.0;
        let n = self.config.hidden_size;
        let emb = g.param(ids.src_emb);
        let mut xs = Vec::with_capacity(source.len());
        for &w in source {
            let x = g.row(emb, w as usize)?;
            let x = if self.config.source_dropout {
                self.dropout_node(g, x, rng)?
            } else {
                x
            };
            xs.push(x);
        }
        let zero = || Tensor::zeros(vec![n]);
        let (fw, fb) = (g.param(ids.enc_fwd_w), g.param(ids.enc_fwd_b));
        let (bw, bb) = (g.param(ids.enc_bwd_w), g.param(ids.enc_bwd_b));
        let mut fwd = Vec::with_capacity(xs.len());
        let mut state = (g.input(zero()), g.input(zero()));
        for &x in &xs {
            state = lstm_cell(g, fw, fb, x, state)?;
            fwd.push(state.0);
        }
        let mut bwd = vec![fwd[0]; xs.len()];
        let mut state = (g.input(zero()), g.input(zero()));
        for (i, &x) in xs.iter().enumerate().rev() {
            state = lstm_cell(g, bw, bb, x, state)?;
            bwd[i] = state.0;
        }
        let rows: Vec<NodeId> = fwd.iter().zip(&bwd).map(|(&f, &b)| g.concat(&[f, b])).collect();
        let h = g.stack(&rows)?;
        let last = g.concat(&[*fwd.last().unwrap(), bwd[0]]);
        let (iw, ib) = (g.param(ids.init_w), g.param(ids.init_b));
        let s0 = g.linear(iw, last, Some(ib))?;
        let s0 = g.tanh(s0);
        Ok((h, s0))
    }

    /// Attention logits and context for one decoder state.
    fn attend_on(&self, g: &mut Graph<'_, F>, h: NodeId, keys: NodeId, s_prev: NodeId) -> Result<(NodeId, NodeId, NodeId)> {
        let ids = self.ids.0;
        let (w2, b2, v) = (g.param(ids.att_state), g.param(ids.att_b), g.param(ids.att_v));
        let q = g.linear(w2, s_prev, Some(b2))?;
        let pre = g.add_row(keys, q)?;
        let act = g.tanh(pre);
        let e = g.matmul_t(act, v)?;
        let alpha = g.softmax(e, F::of(self.config.temperature))?;
        let c = g.weighted_sum(alpha, h)?;
        Ok((e, alpha, c))
    }

    /// Teacher-forced pass over one pair; `rng` enables dropout.
    fn run(&self, g: &mut Graph<'_, F>, pair: &EncodedPair, mut rng: Option<ChaCha8Rng>) -> Result<Trace> {
        self.check_ids(&pair.source, &pair.target)?;
        let ids = self.ids.0;
        let n = self.config.hidden_size;
        let (h, s0) = self.encode_on(g, &pair.source, &mut rng)?;
        let w1 = g.param(ids.att_src);
        let keys = g.matmul_t(h, w1)?;
        let temb = g.param(ids.tgt_emb);
        let (dw, db) = (g.param(ids.dec_w), g.param(ids.dec_b));
        let (ow, ob) = (g.param(ids.out_w), g.param(ids.out_b));
        let (pw, pb) = (g.param(ids.proj_w), g.param(ids.proj_b));
        let mut state = (s0, g.input(Tensor::zeros(vec![n])));
        let mut trace = Trace {
            loss: s0,
            attention_logits: Vec::new(),
            output_ce: Vec::new(),
            maxout_inputs: Vec::new(),
        };
        for (w_prev, w_t) in pair.decoder_inputs().zip(pair.outputs()) {
            let emb = g.row(temb, w_prev as usize)?;
            let emb = self.dropout_node(g, emb, &mut rng)?;
            let (e, _alpha, c) = self.attend_on(g, h, keys, state.0)?;
            let cat = g.concat(&[state.0, emb, c]);
            let cat = self.dropout_node(g, cat, &mut rng)?;
            let z = g.linear(ow, cat, Some(ob))?;
            let m = g.maxout(z, self.config.maxout_pool)?;
            let logits = g.linear(pw, m, Some(pb))?;
            let ce = g.cross_entropy(logits, w_t as usize)?;
            let input = g.concat(&[emb, c]);
            state = lstm_cell(g, dw, db, input, state)?;
            trace.attention_logits.push(e);
            trace.output_ce.push(ce);
            trace.maxout_inputs.push(z);
        }
        trace.loss = g.sum(&trace.output_ce)?;
        Ok(trace)
    }

    /// Summed token cross-entropy of one pair (no dropout).
    pub fn pair_loss(&self, pair: &EncodedPair) -> Result<F> {
        let mut g = Graph::new(&self.params);
        let t = self.run(&mut g, pair, None)?;
        let loss = g.value(t.loss).item();
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("{}: non-finite loss", pair.id)));
        }
        Ok(loss)
    }

    /// Loss and parameter gradients of one pair. `dropout_seed` enables
    /// dropout with a fixed mask stream.
    pub fn pair_gradients(&self, pair: &EncodedPair, dropout_seed: Option<u64>) -> Result<(F, Gradients<F>)> {
        let mut g = Graph::new(&self.params);
        let t = self.run(&mut g, pair, dropout_seed.map(ChaCha8Rng::seed_from_u64))?;
        let loss = g.value(t.loss).item();
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("{}: non-finite loss", pair.id)));
        }
        Ok((loss, backward(&g, t.loss)?))
    }

    /// Mean per-pair loss over a batch and the mean gradient, reduced in
    /// batch order.
    pub fn batch_gradients(&self, pairs: &[&EncodedPair], seeds: Option<&[u64]>) -> Result<(F, Gradients<F>)> {
        use rayon::prelude::*;
        if pairs.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let parts: Vec<(F, Gradients<F>)> = pairs
            .par_iter()
            .enumerate()
            .map(|(k, p)| self.pair_gradients(p, seeds.map(|s| s[k])))
            .collect::<Result<Vec<_>>>()?;
        let mut total = F::zero();
        let mut grads = self.params.zero_gradients();
        for (l, gr) in &parts {
            total = total + *l;
            grads.add_assign(gr);
        }
        let inv = F::one() / F::of(pairs.len() as f64);
        grads.scale(inv);
        Ok((total * inv, grads))
    }

    /// Mean per-pair loss of a batch without dropout.
    pub fn batch_loss(&self, pairs: &[&EncodedPair]) -> Result<F> {
        Ok(self.batch_gradients(pairs, None)?.0)
    }

    /// Smallest gap between competing maxout inputs over a teacher-forced
    /// pass; small values mean the loss is near a kink.
    pub fn maxout_margin(&self, pair: &EncodedPair) -> Result<F> {
        let mut g = Graph::new(&self.params);
        let t = self.run(&mut g, pair, None)?;
        let pool = self.config.maxout_pool;
        let mut best = F::infinity();
        for &z in &t.maxout_inputs {
            for chunk in g.value(z).data().chunks(pool) {
                let mut sorted = chunk.to_vec();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                if sorted.len() > 1 {
                    best = best.min(sorted[0] - sorted[1]);
                }
            }
        }
        Ok(best)
    }

    /// Encoder states `h_1..h_A`, each `forward ⊕ backward` (shape `(A, 2n)`).
    pub fn encode(&self, source: &[u32]) -> Result<Tensor<F>> {
        self.check_ids(source, &[])?;
        let mut g = Graph::new(&self.params);
        let (h, _) = self.encode_on(&mut g, source, &mut None)?;
        Ok(g.value(h).clone())
    }

    /// Initial decoder state from the final encoder states.
    pub fn initial_state(&self, source: &[u32]) -> Result<Tensor<F>> {
        self.check_ids(source, &[])?;
        let mut g = Graph::new(&self.params);
        let (_, s0) = self.encode_on(&mut g, source, &mut None)?;
        Ok(g.value(s0).clone())
    }

    /// Attention weights and context vector for encoder states `h` (shape
    /// `(A, 2n)`) and previous decoder state `s_prev`.
    pub fn attend(&self, h: &Tensor<F>, s_prev: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        let n = self.config.hidden_size;
        if h.shape().len() != 2 || h.cols() != 2 * n {
            return Err(Error::shape("encoder states", format!("(A, {})", 2 * n), format!("{:?}", h.shape())));
        }
        if s_prev.len() != n {
            return Err(Error::shape("decoder state", n, s_prev.len()));
        }
        let mut g = Graph::new(&self.params);
        let hn = g.input(h.clone());
        let w1 = g.param(self.ids.0.att_src);
        let keys = g.matmul_t(hn, w1)?;
        let s = g.input(s_prev.clone());
        let (_, alpha, c) = self.attend_on(&mut g, hn, keys, s)?;
        let a = g.value(alpha);
        Ok((Tensor::vector(a.data().to_vec()), g.value(c).clone()))
    }

    /// One decoder step from state `(s, cell)`, ground-truth previous symbol
    /// `w_prev` and context `c_t`: the output distribution and the next state.
    pub fn decode_step(
        &self,
        state: (&Tensor<F>, &Tensor<F>),
        w_prev: u32,
        context: &Tensor<F>,
    ) -> Result<(Tensor<F>, (Tensor<F>, Tensor<F>))> {
        let n = self.config.hidden_size;
        if state.0.len() != n || state.1.len() != n {
            return Err(Error::shape("decoder state", n, state.0.len().max(state.1.len())));
        }
        if context.len() != 2 * n {
            return Err(Error::shape("context", 2 * n, context.len()));
        }
        self.check_ids(&[BOS], &[w_prev])?;
        let ids = self.ids.0;
        let mut g = Graph::new(&self.params);
        let s = g.input(state.0.clone());
        let cell = g.input(state.1.clone());
        let c = g.input(context.clone());
        let temb = g.param(ids.tgt_emb);
        let emb = g.row(temb, w_prev as usize)?;
        let cat = g.concat(&[s, emb, c]);
        let (ow, ob) = (g.param(ids.out_w), g.param(ids.out_b));
        let z = g.linear(ow, cat, Some(ob))?;
        let m = g.maxout(z, self.config.maxout_pool)?;
        let (pw, pb) = (g.param(ids.proj_w), g.param(ids.proj_b));
        let logits = g.linear(pw, m, Some(pb))?;
        let y = crate::numerics::softmax_with_temperature(g.value(logits), F::one())?;
        let input = g.concat(&[emb, c]);
        let (dw, db) = (g.param(ids.dec_w), g.param(ids.dec_b));
        let (hn, cn) = lstm_cell(&mut g, dw, db, input, (s, cell))?;
        Ok((y, (g.value(hn).clone(), g.value(cn).clone())))
    }

    /// Teacher-forced decoding of a full reference; one attention row per UL
    /// symbol plus, if `include_eos`, the EOS row.
    pub fn forced_decode(&self, utt: &ParallelUtterance, include_eos: bool) -> Result<AttentionMatrix> {
        let pair = self.encode_pair(utt)?;
        self.forced_decode_pair(&pair, include_eos)
    }

    pub fn forced_decode_pair(&self, pair: &EncodedPair, include_eos: bool) -> Result<AttentionMatrix> {
        let mut g = Graph::new(&self.params);
        let t = self.run(&mut g, pair, None)?;
        let cols = pair.source.len();
        let rows = pair.target.len() + usize::from(include_eos);
        let inv_t = 1.0 / self.config.temperature;
        let mut weights = Vec::with_capacity(rows * cols);
        for &e in &t.attention_logits[..rows] {
            let logits: Vec<f64> = g.value(e).data().iter().map(|&x| Real::to_f64(x) * inv_t).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            weights.extend(exp.iter().map(|x| x / z));
        }
        AttentionMatrix::new(pair.id.clone(), rows, cols, weights, include_eos)
    }

    /// Per-step output distributions under teacher forcing (rows include EOS).
    pub fn output_distributions(&self, pair: &EncodedPair) -> Result<Vec<Vec<F>>> {
        let mut g = Graph::new(&self.params);
        let t = self.run(&mut g, pair, None)?;
        Ok(t.output_ce
            .iter()
            .map(|&ce| g.probabilities(ce).expect("cross-entropy node").to_vec())
            .collect())
    }
}

impl AlignerModel<f32> {
    /// Writes the parameter checkpoint to `path` and a JSON sidecar with the
    /// config and vocabularies next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, checkpoint_to_string(&self.params)).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&Sidecar {
            config: self.config.clone(),
            source_vocab: self.source_vocab.clone(),
            target_vocab: self.target_vocab.clone(),
        })
        .map_err(|e| Error::Data(e.to_string()))?;
        fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params = checkpoint_from_str(&text)?;
        let side = sidecar_path(path);
        let json = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mut sc: Sidecar =
            serde_json::from_str(&json).map_err(|e| Error::Data(format!("{}: {e}", side.display())))?;
        sc.source_vocab.restore_index();
        sc.target_vocab.restore_index();
        Self::from_parts(sc.config, sc.source_vocab, sc.target_vocab, params)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
