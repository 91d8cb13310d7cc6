//! ROUGE-1/2/L F1 scoring over pre-tokenized text.
//!
//! No stemming and no stopword removal: tokens are compared verbatim (they are
//! already case-folded by the corpus tokenizer). Multi-sentence texts are
//! scored after concatenating their token lists in order, and ROUGE-L is the
//! plain sequence-level LCS over those concatenations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return Self::default();
        }
        let precision = overlap as f64 / candidate_total as f64;
        let recall = overlap as f64 / reference_total as f64;
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// ROUGE-1, ROUGE-2 and ROUGE-L for one candidate/reference pair (or the mean
/// over a corpus).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
}

impl RougeTriple {
    pub fn score<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Self {
        Self {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference),
        }
    }

    /// Mean of ROUGE-1 and ROUGE-2 F1, the model-selection criterion.
    pub fn mean_r1_r2(&self) -> f64 {
        (self.rouge1.f1 + self.rouge2.f1) / 2.0
    }
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn as_strs<S: AsRef<str>>(tokens: &[S]) -> Vec<&str> {
    tokens.iter().map(AsRef::as_ref).collect()
}

/// Clipped n-gram overlap score. Either side lacking n-grams yields zeros.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> RougeScore {
    let cand = as_strs(candidate);
    let refs = as_strs(reference);
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refs, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(overlap, cand_total, ref_total)
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) memory.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore {
    if candidate.is_empty() || reference.is_empty() {
        return RougeScore::default();
    }
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Unweighted mean of per-pair precision, recall and F1 for every variant.
pub fn corpus_rouge<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<RougeTriple> {
    if pairs.is_empty() {
        return Err(Error::invalid("corpus_rouge needs at least one pair"));
    }
    let scores: Vec<RougeTriple> = pairs
        .iter()
        .map(|(cand, reference)| RougeTriple::score(cand, reference))
        .collect();
    Ok(mean_triples(&scores))
}

pub(crate) fn mean_triples(scores: &[RougeTriple]) -> RougeTriple {
    let k = scores.len() as f64;
    let mean = |get: &dyn Fn(&RougeTriple) -> RougeScore| {
        let mut acc = RougeScore::default();
        for s in scores {
            let v = get(s);
            acc.precision += v.precision;
            acc.recall += v.recall;
            acc.f1 += v.f1;
        }
        RougeScore {
            precision: acc.precision / k,
            recall: acc.recall / k,
            f1: acc.f1 / k,
        }
    };
    RougeTriple {
        rouge1: mean(&|s| s.rouge1),
        rouge2: mean(&|s| s.rouge2),
        rouge_l: mean(&|s| s.rouge_l),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn identity_is_one() {
        let t = toks("the cat sat");
        assert_eq!(rouge_n(&t, &t, 1).f1, 1.0);
        assert_eq!(rouge_n(&t, &t, 2).f1, 1.0);
        assert_eq!(rouge_l(&t, &t).f1, 1.0);
    }

    #[test]
    fn unigram_partial_overlap() {
        let s = rouge_n(&toks("the cat sat"), &toks("the cat"), 1);
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn missing_bigrams_give_zero() {
        assert_eq!(rouge_n(&toks("a"), &toks("b c"), 2), RougeScore::default());
    }

    #[test]
    fn clipped_counts() {
        // "the the the" vs "the": overlap clipped to 1.
        let s = rouge_n(&toks("the the the"), &toks("the"), 1);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn lcs_example() {
        let s = rouge_l(&toks("a x b y"), &toks("a b"));
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        let s = rouge_l(&toks("a b c"), &toks("d e"));
        assert_eq!(s, RougeScore::default());
        let empty: Vec<String> = vec![];
        assert_eq!(rouge_l(&empty, &toks("d e")), RougeScore::default());
    }

    #[test]
    fn corpus_means() {
        let pairs = vec![(toks("a b"), toks("a b")), (toks("c d"), toks("e f"))];
        let m = corpus_rouge(&pairs).unwrap();
        assert_eq!(m.rouge1.f1, 0.5);
        assert_eq!(m.rouge2.f1, 0.5);
        assert_eq!(m.rouge_l.f1, 0.5);

        let single = vec![(toks("the cat sat"), toks("the cat"))];
        assert_eq!(
            corpus_rouge(&single).unwrap(),
            RougeTriple::score(&single[0].0, &single[0].1)
        );

        let ten: Vec<_> = (0..10).map(|_| (toks("a b c"), toks("a c"))).collect();
        let one = RougeTriple::score(&ten[0].0, &ten[0].1);
        let mean = corpus_rouge(&ten).unwrap();
        assert!((mean.rouge1.f1 - one.rouge1.f1).abs() < 1e-12);
        assert!((mean.rouge_l.f1 - one.rouge_l.f1).abs() < 1e-12);

        let none: Vec<(Vec<String>, Vec<String>)> = vec![];
        assert!(corpus_rouge(&none).is_err());
    }

    fn token_vec() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
            .prop_map(|v| v.into_iter().map(str::to_owned).collect())
    }

    proptest! {
        #[test]
        fn swapping_sides_swaps_p_and_r(c in token_vec(), r in token_vec(), n in 1usize..=2) {
            let fwd = rouge_n(&c, &r, n);
            let back = rouge_n(&r, &c, n);
            prop_assert!((fwd.precision - back.recall).abs() < 1e-12);
            prop_assert!((fwd.recall - back.precision).abs() < 1e-12);
            prop_assert!((fwd.f1 - back.f1).abs() < 1e-12);
        }

        #[test]
        fn f1_bounded(c in token_vec(), r in token_vec()) {
            for s in [rouge_n(&c, &r, 1), rouge_n(&c, &r, 2), rouge_l(&c, &r)] {
                prop_assert!(s.f1 >= 0.0);
                prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
                prop_assert!(s.precision <= 1.0 && s.recall <= 1.0);
            }
        }

        #[test]
        fn absent_token_never_raises_unigram_precision(c in token_vec(), r in token_vec()) {
            let before = rouge_n(&c, &r, 1).precision;
            let mut longer = c.clone();
            longer.push("zzz".to_owned());
            prop_assert!(rouge_n(&longer, &r, 1).precision <= before + 1e-12);
        }

        #[test]
        fn self_lcs_is_one(c in token_vec()) {
            prop_assume!(!c.is_empty());
            prop_assert_eq!(rouge_l(&c, &c).f1, 1.0);
        }
    }
}
