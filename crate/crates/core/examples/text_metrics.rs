//! Corpus BLEU, SelfBLEU, Distinct-n, repetition and a paired bootstrap on
//! whitespace-tokenized sentences.

use std::collections::HashMap;

use tailr::error::Result;
use tailr::metrics::{bleu_n, distinct_n, paired_bootstrap, rep_l, self_bleu_n};

fn ids(lines: &[&str], vocab: &mut HashMap<String, usize>) -> Vec<Vec<usize>> {
    lines
        .iter()
        .map(|l| {
            l.split_whitespace()
                .map(|w| {
                    let n = vocab.len();
                    *vocab.entry(w.to_string()).or_insert(n)
                })
                .collect()
        })
        .collect()
}

fn main() -> Result<()> {
    let mut vocab = HashMap::new();
    let refs = ids(
        &["the cat sat on the mat", "a dog ran in the park", "the bird sang at dawn"],
        &mut vocab,
    );
    let hyps = ids(
        &["the cat sat on a mat", "a dog ran in the park today", "the the the bird bird"],
        &mut vocab,
    );
    for n in 1..=4 {
        println!("BLEU-{n} {:6.2}   SelfBLEU-{n} {:6.2}", bleu_n(&hyps, &refs, n)?, self_bleu_n(&hyps, n, 1000, 0)?);
    }
    println!("Distinct-1 {:.3}  Distinct-2 {:.3}", distinct_n(&hyps, 1)?, distinct_n(&hyps, 2)?);
    println!("rep-4 {:.3}", rep_l(&hyps, 4)?);

    let a = [0.31, 0.42, 0.28, 0.35, 0.40, 0.33, 0.29, 0.37];
    let b = [0.30, 0.36, 0.27, 0.30, 0.38, 0.31, 0.25, 0.36];
    println!("paired bootstrap p-value (a not better than b): {:.3}", paired_bootstrap(&a, &b, 1000, 7)?);
    Ok(())
}
