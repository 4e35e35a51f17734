//! Perturbation chains and the estimation-error tables built from them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{sub_rng, SequenceModel, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Repeat,
    Delete,
    Substitute,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 3] = [PerturbKind::Repeat, PerturbKind::Delete, PerturbKind::Substitute];

    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::Repeat => "repeat",
            PerturbKind::Delete => "delete",
            PerturbKind::Substitute => "substitute",
        }
    }
}

/// One edit, or `None` when the body is too short (or the vocabulary too
/// small) for `kind`. EOS is always kept at the end.
pub fn perturb<R: Rng + ?Sized>(seq: &TokenSequence, kind: PerturbKind, vocab: usize, rng: &mut R) -> Option<TokenSequence> {
    let mut body = seq.body().to_vec();
    match kind {
        PerturbKind::Repeat => {
            if body.is_empty() {
                return None;
            }
            let i = rng.random_range(0..body.len());
            body.insert(i, body[i]);
        }
        PerturbKind::Delete => {
            if body.len() < 2 {
                return None;
            }
            body.pop();
        }
        PerturbKind::Substitute => {
            // word ids are 1..vocab; a real edit needs at least two of them
            if body.is_empty() || vocab < 3 {
                return None;
            }
            let i = rng.random_range(0..body.len());
            let old = body[i];
            let mut new = rng.random_range(1..vocab - 1);
            if new >= old {
                new += 1;
            }
            body[i] = new;
        }
    }
    let mut out = TokenSequence::from_body(&body);
    out.context = seq.context.clone();
    Some(out)
}

/// One scored row of a trace; `step` 0 is the unperturbed origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub origin_id: usize,
    pub step: usize,
    pub kind: String,
    /// Body length, EOS excluded.
    pub length: usize,
    pub log_p_o: f64,
    pub log_p_theta: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationTrace {
    pub origin_id: usize,
    pub rows: Vec<TraceRow>,
    /// Sequences behind `rows`; empty when loaded from CSV.
    pub sequences: Vec<TokenSequence>,
    /// Kind choices that could not be applied, one entry per event.
    pub skipped: Vec<String>,
}

/// Builds a chain of up to `steps` edits per origin and scores every
/// variant under both models. Origin `i` draws from stream `i` of `seed`.
pub fn build_traces(
    dataset: &[TokenSequence],
    model: &SequenceModel,
    oracle: &SequenceModel,
    steps: usize,
    kinds: &[PerturbKind],
    seed: u64,
) -> Result<Vec<PerturbationTrace>> {
    if model.vocab_size() != oracle.vocab_size() {
        return Err(Error::VocabMismatch(model.vocab_size(), oracle.vocab_size()));
    }
    if kinds.is_empty() {
        return Err(Error::Empty("perturbation kinds"));
    }
    let vocab = oracle.vocab_size();
    let mut traces = Vec::with_capacity(dataset.len());
    for (id, origin) in dataset.iter().enumerate() {
        origin.validate(vocab)?;
        let mut rng = sub_rng(seed, id as u64);
        let mut sequences = vec![origin.clone()];
        let mut labels = vec!["origin".to_string()];
        let mut skipped = Vec::new();
        for step in 1..=steps {
            let current = sequences.last().expect("origin present");
            let mut order = kinds.to_vec();
            let first = rng.random_range(0..order.len());
            order.swap(0, first);
            order[1..].shuffle(&mut rng);
            let mut next = None;
            for k in order {
                match perturb(current, k, vocab, &mut rng) {
                    Some(s) => {
                        next = Some((k, s));
                        break;
                    }
                    None => skipped.push(format!("step {step}: {} not applicable", k.name())),
                }
            }
            match next {
                Some((k, s)) => {
                    labels.push(k.name().to_string());
                    sequences.push(s);
                }
                None => {
                    skipped.push(format!("step {step}: chain ended"));
                    break;
                }
            }
        }
        traces.push((id, sequences, labels, skipped));
    }

    let flat: Vec<TokenSequence> = traces.iter().flat_map(|t| t.1.iter().cloned()).collect();
    let lp_theta = model.sequence_logprobs(&flat)?;
    let lp_o = oracle.sequence_logprobs(&flat)?;
    let mut k = 0;
    Ok(traces
        .into_iter()
        .map(|(origin_id, sequences, labels, skipped)| {
            let rows = sequences
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(step, (s, kind))| {
                    let row = TraceRow {
                        origin_id,
                        step,
                        kind,
                        length: s.body().len(),
                        log_p_o: lp_o[k],
                        log_p_theta: lp_theta[k],
                        error: lp_theta[k] - lp_o[k],
                    };
                    k += 1;
                    row
                })
                .collect();
            PerturbationTrace {
                origin_id,
                rows,
                sequences,
                skipped,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCell {
    pub bucket: usize,
    pub log_p_o_lo: f64,
    pub log_p_o_hi: f64,
    pub step: usize,
    pub mean_error: f64,
    pub count: usize,
}

pub const DEFAULT_BUCKETS: usize = 20;

/// Mean error by (equal-width `log p_o` bucket, perturbation count).
pub fn error_map(traces: &[PerturbationTrace], buckets: usize) -> Result<Vec<ErrorCell>> {
    let rows: Vec<&TraceRow> = traces.iter().flat_map(|t| &t.rows).collect();
    if rows.is_empty() {
        return Err(Error::Empty("traces"));
    }
    if buckets == 0 {
        return Err(Error::Config("error map needs at least one bucket".into()));
    }
    let lo = rows.iter().map(|r| r.log_p_o).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.log_p_o).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / buckets as f64;
    let bucket_of = |x: f64| {
        if width > 0.0 {
            (((x - lo) / width) as usize).min(buckets - 1)
        } else {
            0
        }
    };
    let mut cells: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = cells.entry((bucket_of(r.log_p_o), r.step)).or_insert((0.0, 0));
        e.0 += r.error;
        e.1 += 1;
    }
    Ok(cells
        .into_iter()
        .map(|((bucket, step), (sum, count))| ErrorCell {
            bucket,
            log_p_o_lo: lo + width * bucket as f64,
            log_p_o_hi: lo + width * (bucket + 1) as f64,
            step,
            mean_error: sum / count as f64,
            count,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    pub mean_max_error: f64,
    pub origins: usize,
}

/// `(origin length, max_{i≥1} Error)` for every trace with at least one edit.
pub fn max_overestimation_points(traces: &[PerturbationTrace]) -> Vec<(usize, f64)> {
    traces
        .iter()
        .filter_map(|t| {
            let origin = t.rows.iter().find(|r| r.step == 0)?;
            let max = t
                .rows
                .iter()
                .filter(|r| r.step >= 1)
                .map(|r| r.error)
                .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))))?;
            Some((origin.length, max))
        })
        .collect()
}

/// Per-origin maximum error over its edits, averaged within origin lengths.
pub fn max_overestimation_by_length(traces: &[PerturbationTrace]) -> Result<Vec<LengthRow>> {
    if traces.is_empty() {
        return Err(Error::Empty("traces"));
    }
    let mut by_len: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (len, max) in max_overestimation_points(traces) {
        let e = by_len.entry(len).or_insert((0.0, 0));
        e.0 += max;
        e.1 += 1;
    }
    Ok(by_len
        .into_iter()
        .map(|(length, (sum, n))| LengthRow {
            length,
            mean_max_error: sum / n as f64,
            origins: n,
        })
        .collect())
}

/// Least-squares slope of per-origin maximum error against origin length.
pub fn overestimation_slope(traces: &[PerturbationTrace]) -> Option<f64> {
    let pts = max_overestimation_points(traces);
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

pub fn write_traces_csv(path: &Path, traces: &[PerturbationTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in traces.iter().flat_map(|t| &t.rows) {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces_csv(path: &Path) -> Result<Vec<PerturbationTrace>> {
    let text = fs::read(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_slice());
    let mut out: Vec<PerturbationTrace> = Vec::new();
    for row in rdr.deserialize::<TraceRow>() {
        let row = row.map_err(csv_err)?;
        match out.last_mut() {
            Some(t) if t.origin_id == row.origin_id => t.rows.push(row),
            _ => out.push(PerturbationTrace {
                origin_id: row.origin_id,
                rows: vec![row],
                sequences: Vec::new(),
                skipped: Vec::new(),
            }),
        }
    }
    Ok(out)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}
