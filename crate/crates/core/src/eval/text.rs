//! Reconstruction metrics over token sequences.

use std::collections::HashMap;
use std::hash::Hash;

/// ROUGE-L recall weight.
pub const ROUGE_BETA: f64 = 1.2;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and total candidate n-grams.
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let clipped = cand.iter().map(|(g, &c)| c.min(*refs.get(g).unwrap_or(&0))).sum();
    (clipped, cand.values().sum())
}

/// `exp(1 − r/c)` when the candidate is shorter than the reference.
pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len > reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Corpus BLEU with n-gram counts summed over all pairs, no smoothing.
/// Orders for which the candidates hold no n-gram at all are left out of
/// the geometric mean; any order with candidates but no match gives 0.
pub fn corpus_bleu<T: Eq + Hash>(pairs: &[(&[T], &[T])], max_n: usize) -> f64 {
    let cand_len: usize = pairs.iter().map(|(c, _)| c.len()).sum();
    let ref_len: usize = pairs.iter().map(|(_, r)| r.len()).sum();
    if cand_len == 0 || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n {
        let (mut matched, mut total) = (0usize, 0usize);
        for (c, r) in pairs {
            let (m, t) = modified_precision(c, r, n);
            matched += m;
            total += t;
        }
        if total == 0 {
            continue;
        }
        if matched == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
        orders += 1;
    }
    brevity_penalty(cand_len, ref_len) * (log_sum / orders as f64).exp()
}

pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    corpus_bleu(&[(candidate, reference)], max_n)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure `(1+β²)PR / (R + β²P)`.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean sentence-level ROUGE-L over pairs; 0 for no pairs.
pub fn corpus_rouge_l<T: Eq>(pairs: &[(&[T], &[T])]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(c, r)| rouge_l(c, r)).sum::<f64>() / pairs.len() as f64
}
