//! Oracle sampling into train/dev/test splits and their on-disk form.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{SequenceModel, TokenSequence};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Datasets {
    pub train: Vec<TokenSequence>,
    pub dev: Vec<TokenSequence>,
    pub test: Vec<TokenSequence>,
    pub manifest: DatasetManifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub name: String,
    pub seed: u64,
    pub count: usize,
    /// Draws rejected for not reaching EOS within `max_len`.
    pub resampled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub oracle_hash: String,
    pub seed: u64,
    pub max_len: usize,
    pub splits: Vec<SplitInfo>,
}

/// Sub-seed of split `k`; distinct splits never share a sample stream.
pub fn split_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ k
}

/// `n` terminated samples; rejected draws are replaced from later streams.
pub fn sample_terminated(model: &SequenceModel, n: usize, max_len: usize, seed: u64) -> (Vec<TokenSequence>, usize) {
    let mut out = Vec::with_capacity(n);
    let mut rejected = 0;
    let mut drawn = 0usize;
    while out.len() < n {
        let want = n - out.len();
        // stream offsets keep every draw reproducible regardless of chunking
        let batch = model.sample_many_from(drawn, want, max_len, seed);
        drawn += want;
        for s in batch {
            match s.into_sequence() {
                Some(seq) => out.push(seq),
                None => rejected += 1,
            }
        }
    }
    (out, rejected)
}

pub fn synthesize(
    oracle: &SequenceModel,
    oracle_hash: &str,
    sizes: (usize, usize, usize),
    max_len: usize,
    seed: u64,
) -> Result<Datasets> {
    let (n_train, n_dev, n_test) = sizes;
    if n_train == 0 || n_dev == 0 || n_test == 0 {
        return Err(Error::Empty("every split needs at least one sequence"));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut splits = Vec::new();
    let mut sets = Vec::new();
    for (k, (name, n)) in [("train", n_train), ("dev", n_dev), ("test", n_test)].into_iter().enumerate() {
        let s = split_seed(seed, k as u64);
        let (seqs, resampled) = sample_terminated(oracle, n, max_len, s);
        splits.push(SplitInfo {
            name: name.to_string(),
            seed: s,
            count: n,
            resampled,
        });
        sets.push(seqs);
    }
    let test = sets.pop().expect("three splits");
    let dev = sets.pop().expect("three splits");
    let train = sets.pop().expect("three splits");
    Ok(Datasets {
        train,
        dev,
        test,
        manifest: DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            oracle_hash: oracle_hash.to_string(),
            seed,
            max_len,
            splits,
        },
    })
}

/// One sequence per line, space-separated ids, trailing EOS included.
pub fn write_dataset(path: &Path, seqs: &[TokenSequence]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for s in seqs {
        let line: Vec<String> = s.tokens.iter().map(usize::to_string).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path, vocab: usize) -> Result<Vec<TokenSequence>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let tokens = l
                .split(' ')
                .map(|t| t.parse::<usize>().map_err(|e| Error::Config(format!("bad token {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let seq = TokenSequence::new(tokens);
            seq.validate(vocab)?;
            Ok(seq)
        })
        .collect()
}

impl Datasets {
    /// Writes `train.txt`, `dev.txt`, `test.txt` and `dataset_manifest.json`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_dataset(&dir.join("train.txt"), &self.train)?;
        write_dataset(&dir.join("dev.txt"), &self.dev)?;
        write_dataset(&dir.join("test.txt"), &self.test)?;
        fs::write(
            dir.join("dataset_manifest.json"),
            serde_json::to_string_pretty(&self.manifest)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, vocab: usize) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join("dataset_manifest.json"))?)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "dataset format {} is not {DATASET_FORMAT_VERSION}",
                manifest.format_version
            )));
        }
        Ok(Self {
            train: read_dataset(&dir.join("train.txt"), vocab)?,
            dev: read_dataset(&dir.join("dev.txt"), vocab)?,
            test: read_dataset(&dir.join("test.txt"), vocab)?,
            manifest,
        })
    }
}
