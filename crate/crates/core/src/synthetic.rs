//! Small generated corpora for smoke tests and integration checks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::DocumentRecord;

/// Random sentence of 6 to 10 pseudo-words drawn from a `vocab`-word lexicon.
fn sentence(rng: &mut ChaCha8Rng, vocab: usize) -> String {
    let len = rng.random_range(6..11);
    let mut words: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect();
    words.push(".".into());
    words.join(" ")
}

/// `docs` documents of `n` random sentences whose summary is `m` of those
/// sentences, copied verbatim at random positions.
pub fn verbatim_subset_corpus(docs: usize, n: usize, m: usize, seed: u64) -> Vec<DocumentRecord> {
    assert!(m >= 1 && m <= n, "need 1 <= m <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|d| {
            let doc: Vec<String> = (0..n).map(|_| sentence(&mut rng, 400)).collect();
            let mut picks = sample(&mut rng, n, m).into_vec();
            picks.sort_unstable();
            let summary: Vec<String> = picks.iter().map(|&i| doc[i].clone()).collect();
            DocumentRecord::from_raw(format!("doc{d}"), &doc, &summary).expect("non-empty sentences")
        })
        .collect()
}

/// Like [`verbatim_subset_corpus`] but the summary is always the first `m`
/// sentences.
pub fn lead_corpus(docs: usize, n: usize, m: usize, seed: u64) -> Vec<DocumentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|d| {
            let doc: Vec<String> = (0..n).map(|_| sentence(&mut rng, 400)).collect();
            DocumentRecord::from_raw(format!("lead{d}"), &doc, &doc[..m]).expect("non-empty sentences")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = verbatim_subset_corpus(8, 6, 2, 1);
        assert_eq!(a, verbatim_subset_corpus(8, 6, 2, 1));
        assert!(a.iter().all(|r| r.n() == 6 && r.summary_sentences.len() == 2));
        for r in &a {
            assert!(r.summary_sentences.iter().all(|s| r.doc_sentences.contains(s)));
        }
        let l = lead_corpus(3, 5, 2, 2);
        assert!(l.iter().all(|r| r.summary_sentences[..] == r.doc_sentences[..2]));
    }
}
