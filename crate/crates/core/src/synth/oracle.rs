//! Oracle construction: a frozen recurrent model with exact probabilities.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{
    checkpoint_hash, train, ModelConfig, SequenceModel, TokenSequence, TrainRun, B_OUT, EMBED, EOS,
    W_HN, W_HR, W_HZ, W_OUT, W_XN, W_XR, W_XZ,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleMode {
    /// Random weights drawn from `seed`, shaped into a Zipf-like, peaked
    /// distribution with a calibrated stopping rate.
    FixedSeededRandom,
    /// MLE on a whitespace-tokenized text file, one sequence per line.
    TrainedOnCorpus { path: PathBuf, epochs: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub mode: OracleMode,
    pub model: ModelConfig,
    pub seed: u64,
    /// Gain on the recurrent and input weights (1 ≈ standard scaling).
    pub recurrent_gain: f64,
    /// Gain on the output projection; larger gives peakier conditionals.
    pub output_gain: f64,
    /// Unigram bias `−s·ln(rank)` over word ids.
    pub zipf_exponent: f64,
    /// Target expected length (EOS included) for the stopping-rate calibration.
    pub mean_length: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            mode: OracleMode::FixedSeededRandom,
            model: ModelConfig::default(),
            seed: 7,
            recurrent_gain: 1.5,
            output_gain: 2.0,
            zipf_exponent: 2.0,
            mean_length: 9.0,
        }
    }
}

/// A built oracle and its provenance.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub model: SequenceModel,
    pub hash: String,
    /// Held-out perplexity when trained on a corpus.
    pub dev_ppl: Option<f64>,
    /// Word list by id when built from a corpus (`<eos>` and `<unk>` first).
    pub words: Option<Vec<String>>,
}

pub fn build_oracle(spec: &OracleSpec) -> Result<Oracle> {
    match &spec.mode {
        OracleMode::FixedSeededRandom => {
            let model = random_oracle(spec)?;
            Ok(Oracle {
                hash: checkpoint_hash(&model),
                model,
                dev_ppl: None,
                words: None,
            })
        }
        OracleMode::TrainedOnCorpus { path, epochs } => corpus_oracle(spec, path, *epochs),
    }
}

fn random_oracle(spec: &OracleSpec) -> Result<SequenceModel> {
    let cfg = spec.model;
    let mut model = SequenceModel::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (e, h) = (cfg.embed_dim as f64, cfg.hidden_dim as f64);
    let shapes = cfg.param_shapes();
    for (i, shape) in shapes.iter().enumerate() {
        let std = match i {
            EMBED => 1.0,
            W_OUT => spec.output_gain / h.sqrt(),
            B_OUT => 0.0,
            W_XR | W_XZ | W_XN => spec.recurrent_gain / e.sqrt(),
            W_HR | W_HZ | W_HN => spec.recurrent_gain / h.sqrt(),
            // gate biases
            _ => 0.5,
        };
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            let vals = model.params_mut()[i].values_mut();
            debug_assert_eq!(vals.len(), shape.iter().product::<usize>());
            for x in vals.iter_mut() {
                *x = normal.sample(&mut rng);
            }
        }
    }
    {
        let b = model.params_mut()[B_OUT].values_mut();
        for (j, x) in b.iter_mut().enumerate().skip(1) {
            *x = -spec.zipf_exponent * (j as f64).ln();
        }
    }
    calibrate_eos(&mut model, spec.mean_length, spec.seed)?;
    Ok(model)
}

/// Expected length (EOS included) over fixed sample streams, each truncated at
/// a generous cap.
fn mean_length(model: &SequenceModel, seed: u64) -> f64 {
    const DRAWS: usize = 1000;
    const CAP: usize = 120;
    let samples = model.sample_many(DRAWS, CAP, seed ^ 0xCA11_B8A7E);
    samples.iter().map(|s| s.tokens.len()).sum::<usize>() as f64 / DRAWS as f64
}

/// Bisects the EOS output bias so the expected length hits `target`.
fn calibrate_eos(model: &mut SequenceModel, target: f64, seed: u64) -> Result<()> {
    if !(target > 1.0) {
        return Err(Error::OutOfRange {
            name: "mean_length",
            value: target,
            range: "(1, ∞)",
        });
    }
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        model.params_mut()[B_OUT].values_mut()[EOS] = mid;
        // a larger EOS bias shortens sequences
        if mean_length(model, seed) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    model.params_mut()[B_OUT].values_mut()[EOS] = 0.5 * (lo + hi);
    Ok(())
}

/// Id 0 is EOS and id 1 is the unknown-word bucket; words take ids from 2 in
/// descending frequency (ties broken lexicographically).
pub fn corpus_vocabulary(text: &str, vocab_size: usize) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for w in text.split_whitespace() {
        *freq.entry(w).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut words = vec!["<eos>".to_string(), "<unk>".to_string()];
    words.extend(ranked.into_iter().take(vocab_size.saturating_sub(2)).map(|(w, _)| w.to_string()));
    words
}

fn corpus_oracle(spec: &OracleSpec, path: &PathBuf, epochs: usize) -> Result<Oracle> {
    if !path.exists() {
        return Err(Error::MissingCorpus(path.clone()));
    }
    let text = fs::read_to_string(path)?;
    let words = corpus_vocabulary(&text, spec.model.vocab_size);
    let index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let seqs: Vec<TokenSequence> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let body: Vec<usize> = l
                .split_whitespace()
                .map(|w| index.get(w).copied().unwrap_or(1))
                .collect();
            TokenSequence::from_body(&body)
        })
        .collect();
    if seqs.len() < 2 {
        return Err(Error::Empty("corpus needs at least two lines"));
    }
    let mut cfg = spec.model;
    cfg.vocab_size = words.len().max(3);
    let n_dev = (seqs.len() / 10).max(1);
    let (dev, tr) = seqs.split_at(n_dev);
    let init = SequenceModel::init(cfg, spec.seed)?;
    let run = TrainRun {
        epochs,
        seed: spec.seed,
        ..TrainRun::default()
    };
    let out = train(&init, tr, dev, &run)?;
    let dev_ppl = out.model.perplexity(dev)?;
    Ok(Oracle {
        hash: checkpoint_hash(&out.model),
        model: out.model,
        dev_ppl: Some(dev_ppl),
        words: Some(words),
    })
}
