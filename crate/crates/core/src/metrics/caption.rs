use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};

type Gram<'a> = &'a [String];

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Gram<'_>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 against one reference.
///
/// Precisions of order two and up get add-one smoothing, but only when some
/// precision would otherwise be zero; a zero unigram precision still scores 0.
pub fn bleu4(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        matched[n - 1] = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        total[n - 1] = candidate.len().saturating_sub(n - 1);
    }
    if matched[0] == 0 {
        return 0.0;
    }
    let smooth = (0..4).any(|i| matched[i] == 0);
    let log_precision: f64 = (0..4)
        .map(|i| {
            let (m, t) = if smooth && i > 0 {
                (matched[i] + 1, total[i] + 1)
            } else {
                (matched[i], total[i])
            };
            (m as f64 / t as f64).ln()
        })
        .sum::<f64>()
        / 4.0;
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let brevity = if c >= r { 0.0 } else { 1.0 - r / c };
    (log_precision + brevity).exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

const ROUGE_BETA: f64 = 1.2;

/// LCS F-measure with recall weighted by β = 1.2.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs(candidate, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Maps each candidate position to a reference position, one to one.
fn align(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let stemmer = Stemmer::create(Algorithm::English);
    let stem =
        |v: &[String]| -> Vec<String> { v.iter().map(|w| stemmer.stem(w).into_owned()).collect() };
    let (cs, rs) = (stem(candidate), stem(reference));
    let mut ref_used = vec![false; reference.len()];
    let mut cand_of: Vec<Option<usize>> = vec![None; candidate.len()];
    let stages: [(&[String], &[String]); 2] = [(candidate, reference), (&cs, &rs)];
    for (cand, refs) in stages {
        for i in 0..cand.len() {
            if cand_of[i].is_some() {
                continue;
            }
            let free = |j: usize| !ref_used[j] && refs[j] == cand[i];
            // Extending the previous candidate's alignment keeps chunks
            // together; otherwise take the earliest free match.
            let follow = i
                .checked_sub(1)
                .and_then(|k| cand_of[k])
                .map(|j| j + 1)
                .filter(|&j| j < refs.len() && free(j));
            if let Some(j) = follow.or_else(|| (0..refs.len()).find(|&j| free(j))) {
                ref_used[j] = true;
                cand_of[i] = Some(j);
            }
        }
    }
    cand_of
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}

/// METEOR without synonym matching: exact then stem alignment, harmonic
/// mean weighted towards recall, fragmentation penalty.
///
/// Identical sequences of length `m` score `1 - 0.5 / m³` because a single
/// chunk still pays `γ · (1/m)^β`.
pub fn meteor_lite(candidate: &[String], reference: &[String]) -> f64 {
    let pairs = align(candidate, reference);
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
    fmean * (1.0 - penalty)
}

pub const CIDER_SIGMA: f64 = 6.0;

struct TfIdf<'a> {
    weights: [HashMap<Gram<'a>, f64>; 4],
    counts: [HashMap<Gram<'a>, usize>; 4],
    /// Squared Euclidean norms per order.
    sq_norms: [f64; 4],
    len: usize,
}

fn tfidf<'a>(tokens: &'a [String], df: &[HashMap<Gram<'a>, usize>; 4], log_docs: f64) -> TfIdf<'a> {
    let counts: [HashMap<Gram<'a>, usize>; 4] =
        std::array::from_fn(|i| ngram_counts(tokens, i + 1));
    let weights: [HashMap<Gram<'a>, f64>; 4] = std::array::from_fn(|i| {
        counts[i]
            .iter()
            .map(|(g, &c)| {
                let d = df[i].get(g).copied().unwrap_or(0).max(1) as f64;
                (*g, c as f64 * (log_docs - d.ln()))
            })
            .collect()
    });
    let sq_norms = std::array::from_fn(|i| {
        let mut sq: Vec<f64> = weights[i].values().map(|w| w * w).collect();
        sq.sort_by(f64::total_cmp);
        sq.iter().sum::<f64>()
    });
    TfIdf {
        weights,
        counts,
        sq_norms,
        len: tokens.len(),
    }
}

/// CIDEr-D over a corpus of `(candidate, references)` items, returning one
/// score in `[0, 10]` per item. Document frequencies come from `idf_corpus`
/// (one entry per reference document).
///
/// N-gram weights are `tf · (ln N − ln max(1, df))`. When every n-gram of an
/// order has weight zero on both sides (a one-document corpus, or n-grams
/// shared by every document) the cosine is undefined; that order then counts
/// 1 if the two raw n-gram multisets agree and 0 otherwise.
pub fn cider_d_items(
    items: &[(&[String], &[Vec<String>])],
    idf_corpus: &[&[Vec<String>]],
) -> Vec<f64> {
    let mut df: [HashMap<Gram<'_>, usize>; 4] = Default::default();
    for doc in idf_corpus {
        for (n, table) in df.iter_mut().enumerate() {
            let mut seen: Vec<Gram<'_>> = doc
                .iter()
                .flat_map(|r| ngram_counts(r, n + 1).into_keys())
                .collect();
            seen.sort();
            seen.dedup();
            for g in seen {
                *table.entry(g).or_insert(0) += 1;
            }
        }
    }
    let log_docs = (idf_corpus.len().max(1) as f64).ln();
    items
        .iter()
        .map(|(cand, refs)| {
            if cand.is_empty() || refs.is_empty() {
                return 0.0;
            }
            let c = tfidf(cand, &df, log_docs);
            let per_ref: Vec<f64> = refs
                .iter()
                .map(|r| {
                    let r = tfidf(r, &df, log_docs);
                    let delta = c.len as f64 - r.len as f64;
                    let gauss = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
                    let sims: f64 = (0..4)
                        .map(|n| {
                            if c.sq_norms[n] == 0.0 && r.sq_norms[n] == 0.0 {
                                return f64::from(u8::from(
                                    c.counts[n] == r.counts[n] && !c.counts[n].is_empty(),
                                ));
                            }
                            if c.sq_norms[n] == 0.0 || r.sq_norms[n] == 0.0 {
                                return 0.0;
                            }
                            let mut terms: Vec<f64> = c.weights[n]
                                .iter()
                                .filter_map(|(g, &w)| r.weights[n].get(g).map(|&v| w.min(v) * v))
                                .collect();
                            terms.sort_by(f64::total_cmp);
                            // sqrt(s · s) == s exactly, so identical vectors give 1.
                            terms.iter().sum::<f64>() / (c.sq_norms[n] * r.sq_norms[n]).sqrt()
                        })
                        .sum();
                    gauss * sims / 4.0
                })
                .collect();
            (10.0 * per_ref.iter().sum::<f64>() / per_ref.len() as f64).clamp(0.0, 10.0)
        })
        .collect()
}

/// Corpus CIDEr-D: the mean item score, with the references themselves as
/// the document collection.
pub fn cider_d(items: &[(&[String], &[Vec<String>])]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let docs: Vec<&[Vec<String>]> = items.iter().map(|(_, r)| *r).collect();
    super::stable_mean(&cider_d_items(items, &docs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn bleu_hand_case() {
        let s = bleu4(&t("the man walks"), &t("the man walks away"));
        assert!((s - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!((s - 0.7165).abs() < 1e-4);
        assert_eq!(bleu4(&t("a b c d e"), &t("a b c d e")), 1.0);
        assert_eq!(bleu4(&t("x y z w"), &t("a b c d")), 0.0);
        assert_eq!(bleu4(&[], &t("a b")), 0.0);
    }

    #[test]
    fn rouge_hand_case() {
        let s = rouge_l(&t("a b c d"), &t("a c d"));
        let (p, r) = (0.75, 1.0);
        let expect = (1.0 + 1.44) * p * r / (r + 1.44 * p);
        assert!((s - expect).abs() < 1e-15);
        assert_eq!(rouge_l(&t("a b c"), &t("a b c")), 1.0);
        assert_eq!(rouge_l(&t("a b"), &t("c d")), 0.0);
    }

    #[test]
    fn meteor_identity_and_stems() {
        let s = meteor_lite(&t("a b c d e"), &t("a b c d e"));
        assert_eq!(s, 1.0 - 0.5 / 125.0);
        assert!((s - 0.996).abs() < 1e-12);
        assert_eq!(meteor_lite(&t("x y"), &t("a b")), 0.0);
        assert!(meteor_lite(&t("walks"), &t("walking")) > 0.0);
    }

    #[test]
    fn meteor_chunks() {
        // Two chunks over four matches: penalty 0.5 · (2/4)³.
        let s = meteor_lite(&t("c d a b"), &t("a b c d"));
        assert!((s - (1.0 - 0.5 * 0.125)).abs() < 1e-15);
    }

    #[test]
    fn cider_identity_is_ten() {
        let docs: Vec<(Vec<String>, Vec<Vec<String>>)> = [
            "the person walks into the store",
            "a woman stands near the door",
            "the man turns around then runs away",
        ]
        .iter()
        .map(|s| (t(s), vec![t(s)]))
        .collect();
        let items: Vec<(&[String], &[Vec<String>])> = docs
            .iter()
            .map(|(c, r)| (c.as_slice(), r.as_slice()))
            .collect();
        assert!((cider_d(&items) - 10.0).abs() < 1e-12);
        let single = [(docs[0].0.as_slice(), docs[0].1.as_slice())];
        assert_eq!(cider_d(&single), 10.0);
    }
}
