//! A one-layer gated recurrent language model with exact conditionals.
//!
//! Output ids are `0..V` with [`EOS`] = 0. Two input-only ids sit past the
//! output range: `BOS = V` starts every sequence and `PAD = V + 1` fills
//! batch slots after a sequence has ended.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{gemm, log_softmax_in_place, sigmoid, Graph, Tensor, Var};
use crate::distributions::CategoricalDist;
use crate::error::{Error, Result};

pub use checkpoint::{checkpoint_hash, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    train, EpochLog, OptimizerConfig, OptimizerKind, StepReport, TrainOutcome, TrainRun, Trainer,
};

/// End-of-sequence id; always the last token of a [`TokenSequence`].
pub const EOS: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output vocabulary size, EOS included.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 50,
            embed_dim: 64,
            hidden_dim: 128,
        }
    }
}

impl ModelConfig {
    pub fn bos(&self) -> usize {
        self.vocab_size
    }

    pub fn pad(&self) -> usize {
        self.vocab_size + 1
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "model needs vocab ≥ 2 and positive dims, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Parameter shapes in declared (serialization) order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let (v, e, h) = (self.vocab_size, self.embed_dim, self.hidden_dim);
        vec![
            vec![v + 2, e],
            vec![e, h],
            vec![e, h],
            vec![e, h],
            vec![h, h],
            vec![h, h],
            vec![h, h],
            vec![1, h],
            vec![1, h],
            vec![1, h],
            vec![1, h],
            vec![h, v],
            vec![1, v],
        ]
    }
}

// Indices into `SequenceModel::params`.
pub(crate) const EMBED: usize = 0;
pub(crate) const W_XR: usize = 1;
pub(crate) const W_XZ: usize = 2;
pub(crate) const W_XN: usize = 3;
pub(crate) const W_HR: usize = 4;
pub(crate) const W_HZ: usize = 5;
pub(crate) const W_HN: usize = 6;
pub(crate) const B_R: usize = 7;
pub(crate) const B_Z: usize = 8;
pub(crate) const B_N: usize = 9;
pub(crate) const B_HN: usize = 10;
pub(crate) const W_OUT: usize = 11;
pub(crate) const B_OUT: usize = 12;

/// A target sequence ending in [`EOS`], with an optional conditioning context
/// that is fed after BOS but never scored.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub context: Vec<usize>,
    pub tokens: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self {
            context: Vec::new(),
            tokens,
        }
    }

    /// Appends EOS to a body.
    pub fn from_body(body: &[usize]) -> Self {
        let mut tokens = body.to_vec();
        tokens.push(EOS);
        Self::new(tokens)
    }

    pub fn body(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self, vocab: usize) -> Result<()> {
        if self.tokens.last() != Some(&EOS) {
            return Err(Error::Config("token sequence must end with EOS".into()));
        }
        if let Some(&id) = self.tokens[..self.tokens.len() - 1]
            .iter()
            .chain(&self.context)
            .find(|&&t| t >= vocab || t == EOS)
        {
            return Err(Error::TokenOutOfRange { id, vocab });
        }
        Ok(())
    }
}

/// Outcome of ancestral sampling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sampled {
    pub tokens: Vec<usize>,
    /// Whether EOS was drawn within the length budget.
    pub terminated: bool,
}

impl Sampled {
    pub fn into_sequence(self) -> Option<TokenSequence> {
        self.terminated.then(|| TokenSequence::new(self.tokens))
    }
}

/// Recurrent states of a batch of streams.
#[derive(Clone, Debug)]
pub struct StreamState {
    h: Vec<f64>,
    batch: usize,
}

impl StreamState {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel {
    config: ModelConfig,
    params: Vec<Tensor>,
}

impl SequenceModel {
    /// All-zero parameters: every conditional is uniform.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = config.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
        Ok(Self { config, params })
    }

    /// Learner initialization: embeddings ~ N(0, 1), everything else
    /// ~ U(−1/√H, 1/√H).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let uni = Uniform::new(-bound, bound).expect("valid bounds");
        let normal = Normal::new(0.0, 1.0).expect("valid sigma");
        let params = config
            .param_shapes()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n: usize = s.iter().product();
                let vals: Vec<f64> = if i == EMBED {
                    (0..n).map(|_| normal.sample(&mut rng)).collect()
                } else {
                    (0..n).map(|_| uni.sample(&mut rng)).collect()
                };
                Tensor::new(s.clone(), vals).expect("shape matches")
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if params.len() != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter().zip(&shapes) {
            if p.shape() != s.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "from_params",
                    left: p.shape().to_vec(),
                    right: s.clone(),
                });
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    // ---- tape-free inference ------------------------------------------

    fn zero_state(&self, batch: usize) -> Vec<f64> {
        vec![0.0; batch * self.config.hidden_dim]
    }

    /// One recurrent step for a batch of input ids.
    fn cell(&self, ids: &[usize], h: &[f64]) -> Vec<f64> {
        let (e, hd) = (self.config.embed_dim, self.config.hidden_dim);
        let b = ids.len();
        let emb = self.params[EMBED].values();
        let mut x = Vec::with_capacity(b * e);
        for &id in ids {
            x.extend_from_slice(&emb[id * e..(id + 1) * e]);
        }
        let proj = |w: usize, input: &[f64], k: usize, bias: usize| {
            let mut out = vec![0.0; b * hd];
            let bv = self.params[bias].values();
            for row in out.chunks_mut(hd) {
                row.copy_from_slice(bv);
            }
            gemm(b, k, hd, input, false, self.params[w].values(), false, &mut out);
            out
        };
        let mut r = proj(W_XR, &x, e, B_R);
        gemm(b, hd, hd, h, false, self.params[W_HR].values(), false, &mut r);
        let mut z = proj(W_XZ, &x, e, B_Z);
        gemm(b, hd, hd, h, false, self.params[W_HZ].values(), false, &mut z);
        let xn = proj(W_XN, &x, e, B_N);
        let hn = proj(W_HN, h, hd, B_HN);
        let mut out = vec![0.0; b * hd];
        for i in 0..b * hd {
            let ri = sigmoid(r[i]);
            let zi = sigmoid(z[i]);
            let ni = (xn[i] + ri * hn[i]).tanh();
            out[i] = (1.0 - zi) * ni + zi * h[i];
        }
        out
    }

    /// Row-wise log-probabilities `[B×V]` from hidden states `[B×H]`.
    fn log_probs(&self, h: &[f64]) -> Vec<f64> {
        let (hd, v) = (self.config.hidden_dim, self.config.vocab_size);
        let b = h.len() / hd;
        let mut out = vec![0.0; b * v];
        let bias = self.params[B_OUT].values();
        for row in out.chunks_mut(v) {
            row.copy_from_slice(bias);
        }
        gemm(b, hd, v, h, false, self.params[W_OUT].values(), false, &mut out);
        for row in out.chunks_mut(v) {
            log_softmax_in_place(row);
        }
        out
    }

    /// Hidden state after consuming BOS, the context, and `prefix`.
    fn state_after(&self, context: &[usize], prefix: &[usize]) -> Vec<f64> {
        let mut h = self.zero_state(1);
        for &id in std::iter::once(&self.config.bos()).chain(context).chain(prefix) {
            h = self.cell(&[id], &h);
        }
        h
    }

    /// `p_θ(· | y_<t)` for an unconditional prefix.
    pub fn step_dist(&self, prefix: &[usize]) -> Result<CategoricalDist> {
        self.step_dist_with_context(&[], prefix)
    }

    pub fn step_dist_with_context(&self, context: &[usize], prefix: &[usize]) -> Result<CategoricalDist> {
        let v = self.config.vocab_size;
        if let Some(&id) = context.iter().chain(prefix).find(|&&t| t >= v) {
            return Err(Error::TokenOutOfRange { id, vocab: v });
        }
        let h = self.state_after(context, prefix);
        let lp = self.log_probs(&h);
        CategoricalDist::new(lp.iter().map(|x| x.exp()).collect())
    }

    /// Per-step log-probabilities `log p(y_t | y_<t)` of every token.
    pub fn token_logprobs(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        seq.validate(self.config.vocab_size)?;
        Ok(self.batch_token_logprobs(std::slice::from_ref(seq)).remove(0))
    }

    /// `Σ_t log p(y_t | y_<t)`, EOS term included.
    pub fn sequence_logprob(&self, seq: &TokenSequence) -> Result<f64> {
        Ok(self.token_logprobs(seq)?.iter().sum())
    }

    /// Batched [`Self::sequence_logprob`]; each entry equals the single-sequence
    /// result.
    pub fn sequence_logprobs(&self, seqs: &[TokenSequence]) -> Result<Vec<f64>> {
        for s in seqs {
            s.validate(self.config.vocab_size)?;
        }
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(256) {
            for lps in self.batch_token_logprobs(chunk) {
                out.push(lps.iter().sum());
            }
        }
        Ok(out)
    }

    fn batch_token_logprobs(&self, seqs: &[TokenSequence]) -> Vec<Vec<f64>> {
        let v = self.config.vocab_size;
        let b = seqs.len();
        let inputs: Vec<Vec<usize>> = seqs
            .iter()
            .map(|s| {
                let mut ids = vec![self.config.bos()];
                ids.extend(&s.context);
                ids.extend(&s.tokens[..s.tokens.len() - 1]);
                ids
            })
            .collect();
        let steps = inputs.iter().map(Vec::len).max().unwrap_or(0);
        let mut out: Vec<Vec<f64>> = seqs.iter().map(|s| Vec::with_capacity(s.len())).collect();
        let mut h = self.zero_state(b);
        for t in 0..steps {
            let ids: Vec<usize> = inputs
                .iter()
                .map(|inp| inp.get(t).copied().unwrap_or(self.config.pad()))
                .collect();
            h = self.cell(&ids, &h);
            let lp = self.log_probs(&h);
            for (i, s) in seqs.iter().enumerate() {
                let first_scored = s.context.len();
                if t >= first_scored && t < inputs[i].len() {
                    let target = s.tokens[t - first_scored];
                    out[i].push(lp[i * v + target]);
                }
            }
        }
        out
    }

    /// Ancestral sampling from the exact conditionals until EOS or `max_len`
    /// tokens.
    pub fn sample<R: Rng + ?Sized>(&self, max_len: usize, rng: &mut R) -> Sampled {
        let mut state = self.begin(1);
        let mut tokens = Vec::new();
        while tokens.len() < max_len {
            let tok = draw_from_log_probs(&self.next_log_probs(&state), rng);
            tokens.push(tok);
            if tok == EOS {
                return Sampled {
                    tokens,
                    terminated: true,
                };
            }
            self.feed(&mut state, &[tok]);
        }
        Sampled {
            tokens,
            terminated: false,
        }
    }

    /// `exp(total NLL / total tokens)`, EOS counted as a token.
    pub fn perplexity(&self, dataset: &[TokenSequence]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Empty("perplexity dataset"));
        }
        let lps = self.sequence_logprobs(dataset)?;
        let tokens: usize = dataset.iter().map(TokenSequence::len).sum();
        Ok((-lps.iter().sum::<f64>() / tokens as f64).exp())
    }

    /// Fresh states for `batch` independent streams, BOS already consumed.
    pub fn begin(&self, batch: usize) -> StreamState {
        let h = self.zero_state(batch);
        let bos = vec![self.config.bos(); batch];
        StreamState {
            h: self.cell(&bos, &h),
            batch,
        }
    }

    /// Advances every stream by one input id (use [`ModelConfig::pad`] for
    /// finished streams).
    pub fn feed(&self, state: &mut StreamState, ids: &[usize]) {
        debug_assert_eq!(ids.len(), state.batch);
        state.h = self.cell(ids, &state.h);
    }

    /// Next-token log-probabilities, `[B×V]` row-major.
    pub fn next_log_probs(&self, state: &StreamState) -> Vec<f64> {
        self.log_probs(&state.h)
    }

    /// `n` samples where sample `i` uses `sub_rng(seed, i)`; identical to
    /// calling [`Self::sample`] with that generator.
    pub fn sample_many(&self, n: usize, max_len: usize, seed: u64) -> Vec<Sampled> {
        self.sample_many_from(0, n, max_len, seed)
    }

    /// Samples from streams `first..first + n`.
    pub fn sample_many_from(&self, first: usize, n: usize, max_len: usize, seed: u64) -> Vec<Sampled> {
        let v = self.config.vocab_size;
        let mut out = Vec::with_capacity(n);
        let end = first + n;
        let mut start = first;
        while start < end {
            let b = (end - start).min(256);
            let mut rngs: Vec<ChaCha8Rng> = (start..start + b).map(|i| sub_rng(seed, i as u64)).collect();
            let mut state = self.begin(b);
            let mut tokens: Vec<Vec<usize>> = vec![Vec::new(); b];
            let mut done = vec![false; b];
            for _ in 0..max_len {
                let lp = self.next_log_probs(&state);
                let mut inputs = vec![self.config.pad(); b];
                for i in 0..b {
                    if done[i] {
                        continue;
                    }
                    let tok = draw_from_log_probs(&lp[i * v..(i + 1) * v], &mut rngs[i]);
                    tokens[i].push(tok);
                    if tok == EOS {
                        done[i] = true;
                    } else {
                        inputs[i] = tok;
                    }
                }
                if done.iter().all(|&d| d) {
                    break;
                }
                self.feed(&mut state, &inputs);
            }
            out.extend(tokens.into_iter().zip(done).map(|(tokens, terminated)| Sampled { tokens, terminated }));
            start += b;
        }
        out
    }

    // ---- tape forward ---------------------------------------------------

    /// Registers every parameter as a leaf.
    pub fn leaves(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.clone())).collect()
    }

    /// Log-probabilities `[L·B × V]` for a batch in time-major row order
    /// (row `t·B + b` predicts token `t` of sequence `b`).
    pub fn forward_graph(&self, g: &mut Graph, p: &[Var], batch: &[&TokenSequence]) -> Result<Var> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Empty("batch"));
        }
        for s in batch {
            if !s.context.is_empty() {
                return Err(Error::Config(
                    "batched training expects unconditional sequences".into(),
                ));
            }
        }
        let steps = batch.iter().map(|s| s.len()).max().unwrap_or(0);
        let hd = self.config.hidden_dim;
        let mut h = g.leaf(Tensor::zeros(&[b, hd]));
        let mut hs = Vec::with_capacity(steps);
        for t in 0..steps {
            let ids: Vec<usize> = batch
                .iter()
                .map(|s| match t {
                    0 => self.config.bos(),
                    _ if t < s.len() => s.tokens[t - 1],
                    _ => self.config.pad(),
                })
                .collect();
            let x = g.gather_rows(p[EMBED], &ids)?;
            let gate = |g: &mut Graph, wx: usize, wh: usize, bias: usize| -> Result<Var> {
                let a = g.matmul(x, p[wx])?;
                let c = g.matmul(h, p[wh])?;
                let s = g.add(a, c)?;
                g.add_row(s, p[bias])
            };
            let r_pre = gate(g, W_XR, W_HR, B_R)?;
            let r = g.sigmoid(r_pre);
            let z_pre = gate(g, W_XZ, W_HZ, B_Z)?;
            let z = g.sigmoid(z_pre);
            let xn0 = g.matmul(x, p[W_XN])?;
            let xn = g.add_row(xn0, p[B_N])?;
            let hn0 = g.matmul(h, p[W_HN])?;
            let hn = g.add_row(hn0, p[B_HN])?;
            let rhn = g.mul(r, hn)?;
            let n_pre = g.add(xn, rhn)?;
            let n = g.tanh(n_pre);
            // h' = n + z⊙(h − n)
            let diff = g.sub(h, n)?;
            let zd = g.mul(z, diff)?;
            h = g.add(n, zd)?;
            hs.push(h);
        }
        let all = g.concat_rows(&hs)?;
        let logits0 = g.matmul(all, p[W_OUT])?;
        let logits = g.add_row(logits0, p[B_OUT])?;
        g.log_softmax(logits)
    }
}

/// Inverse-CDF draw from a row of log-probabilities.
pub(crate) fn draw_from_log_probs<R: Rng + ?Sized>(lp: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in lp.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    lp.len() - 1
}

/// Deterministic per-item generator: stream `index` of a ChaCha keyed by `seed`.
pub fn sub_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Targets;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 5,
            embed_dim: 3,
            hidden_dim: 4,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = SequenceModel::zeros(tiny()).unwrap();
        let d = m.step_dist(&[1, 2]).unwrap();
        for p in d.probs() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        let seqs = [TokenSequence::from_body(&[1, 3]), TokenSequence::from_body(&[4])];
        assert!((m.perplexity(&seqs).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn step_dist_is_deterministic_and_normalized() {
        let m = SequenceModel::init(tiny(), 3).unwrap();
        let a = m.step_dist(&[2, 4]).unwrap();
        let b = m.step_dist(&[2, 4]).unwrap();
        assert_eq!(a, b);
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.step_dist(&[7]).is_err());
    }

    #[test]
    fn uniform_binary_logprob() {
        let m = SequenceModel::zeros(ModelConfig {
            vocab_size: 2,
            embed_dim: 2,
            hidden_dim: 2,
        })
        .unwrap();
        let s = TokenSequence::from_body(&[1, 1]);
        assert!((m.sequence_logprob(&s).unwrap() - 3.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn logprob_is_sum_of_step_dists() {
        let m = SequenceModel::init(tiny(), 9).unwrap();
        let s = TokenSequence::from_body(&[3, 1, 4, 4]);
        let mut total = 0.0;
        for t in 0..s.len() {
            total += m.step_dist(&s.tokens[..t]).unwrap().prob(s.tokens[t]).ln();
        }
        assert!((m.sequence_logprob(&s).unwrap() - total).abs() < 1e-12);
    }

    #[test]
    fn batched_scores_match_single() {
        let m = SequenceModel::init(tiny(), 4).unwrap();
        let seqs = vec![
            TokenSequence::from_body(&[1, 2, 3]),
            TokenSequence::from_body(&[]),
            TokenSequence::from_body(&[4, 4, 4, 4, 4, 1]),
        ];
        let batch = m.sequence_logprobs(&seqs).unwrap();
        for (s, b) in seqs.iter().zip(batch) {
            assert_eq!(m.sequence_logprob(s).unwrap().to_bits(), b.to_bits());
        }
    }

    #[test]
    fn context_conditions_but_is_not_scored() {
        let m = SequenceModel::init(tiny(), 6).unwrap();
        let mut s = TokenSequence::from_body(&[2]);
        let plain = m.sequence_logprob(&s).unwrap();
        s.context = vec![3, 1];
        let cond = m.sequence_logprob(&s).unwrap();
        let manual = m.step_dist_with_context(&[3, 1], &[]).unwrap().prob(2).ln()
            + m.step_dist_with_context(&[3, 1], &[2]).unwrap().prob(EOS).ln();
        assert!((cond - manual).abs() < 1e-12);
        assert_ne!(plain, cond);
    }

    #[test]
    fn tape_forward_matches_inference() {
        let m = SequenceModel::init(tiny(), 8).unwrap();
        let a = TokenSequence::from_body(&[1, 2]);
        let b = TokenSequence::from_body(&[4, 3, 3, 2]);
        let mut g = Graph::new();
        let p = m.leaves(&mut g);
        let lp = m.forward_graph(&mut g, &p, &[&a, &b]).unwrap();
        let t = Targets::time_major(&[&a.tokens, &b.tokens]);
        let vals = g.value(lp).values();
        let v = m.vocab_size();
        let mut per_seq = [0.0, 0.0];
        for i in 0..t.len() {
            if t.mask[i] {
                per_seq[t.seq_index[i]] += vals[i * v + t.ids[i]];
            }
        }
        assert!((per_seq[0] - m.sequence_logprob(&a).unwrap()).abs() < 1e-12);
        assert!((per_seq[1] - m.sequence_logprob(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn certain_eos_gives_empty_body() {
        let mut m = SequenceModel::zeros(tiny()).unwrap();
        m.params_mut()[B_OUT].values_mut()[EOS] = 1e3;
        let mut rng = sub_rng(1, 0);
        let s = m.sample(10, &mut rng);
        assert_eq!(s.tokens, vec![EOS]);
        assert!(s.terminated);
    }

    #[test]
    fn seeded_sampling_repeats() {
        let m = SequenceModel::init(tiny(), 2).unwrap();
        let a = m.sample(12, &mut sub_rng(5, 3));
        let b = m.sample(12, &mut sub_rng(5, 3));
        assert_eq!(a, b);
        let short = m.sample(1, &mut sub_rng(5, 3));
        assert!(short.tokens.len() == 1);
    }

    #[test]
    fn batched_sampling_matches_single() {
        let m = SequenceModel::init(tiny(), 12).unwrap();
        let many = m.sample_many(40, 8, 77);
        for (i, s) in many.iter().enumerate() {
            assert_eq!(*s, m.sample(8, &mut sub_rng(77, i as u64)));
        }
    }

    #[test]
    fn sequence_validation() {
        assert!(TokenSequence::new(vec![1, 2]).validate(5).is_err());
        assert!(TokenSequence::new(vec![1, 9, EOS]).validate(5).is_err());
        assert!(TokenSequence::new(vec![1, EOS, EOS]).validate(5).is_err());
        assert!(TokenSequence::from_body(&[1, 4]).validate(5).is_ok());
        assert_eq!(TokenSequence::from_body(&[1, 4]).body(), &[1, 4]);
    }
}
