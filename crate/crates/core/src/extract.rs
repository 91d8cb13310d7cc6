//! Extraction by generation: sample summary representations with the reverse
//! process, then pick the document sentences they match best.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, OracleLabels};
use crate::diffusion::{initial_transition, sample};
use crate::embedding::EmbeddingProvider;
use crate::encoder::matching_scores;
use crate::error::{Error, Result};
use crate::model::{DiffuSumModel, ValidationMetrics};
use crate::rouge::{corpus_rouge, RougeTriple};
use crate::tensor::{cosine, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    /// Selected document positions, ascending.
    pub indices: Vec<usize>,
    /// Matching distribution of every generated slot over the document.
    pub scores: Vec<Vec<f64>>,
    pub seed: u64,
    /// Set when more sentences were requested than the document has.
    pub truncated: bool,
}

/// Intermediate representations of one inference run.
#[derive(Debug, Clone)]
pub struct InferenceTrace {
    pub h_doc: Matrix,
    pub generated: Matrix,
    pub result: ExtractionResult,
}

/// Derives an independent per-record seed from a base seed (splitmix64).
pub fn record_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Resolves slots in descending order of their top score; each slot takes its
/// best index not already taken. Returns the chosen indices sorted ascending.
pub fn dedup_select(scores: &[Vec<f64>]) -> Vec<usize> {
    let top = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| top(&scores[b]).total_cmp(&top(&scores[a])).then(a.cmp(&b)));
    let n = scores.first().map_or(0, Vec::len);
    let mut taken = vec![false; n];
    let mut picked = Vec::with_capacity(scores.len());
    for slot in order {
        let best = (0..n)
            .filter(|&i| !taken[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if scores[slot][b] >= scores[slot][i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = best {
            taken[i] = true;
            picked.push(i);
        }
    }
    picked.sort_unstable();
    picked
}

pub fn infer_trace(
    model: &DiffuSumModel,
    provider: &EmbeddingProvider,
    record: &DocumentRecord,
    m: usize,
    seed: u64,
) -> Result<InferenceTrace> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let n = record.n();
    if n == 0 {
        return Err(Error::invalid(format!(
            "record {:?} has no document sentences",
            record.id
        )));
    }
    let initial = provider.embed_document(record)?.to_matrix();
    let h_doc = model.encoder.encode_all(&model.store, &initial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc_x0 = initial_transition(&h_doc, &model.schedule, &mut rng);
    let slots = m.min(n);
    let denoiser = model.denoiser.bind(&model.store);
    let generated = sample(&denoiser, &doc_x0, slots, &model.schedule, &mut rng)?;
    let scores: Vec<Vec<f64>> = (0..slots).map(|j| matching_scores(generated.row(j), &h_doc)).collect();
    let indices = dedup_select(&scores);
    Ok(InferenceTrace {
        h_doc,
        generated,
        result: ExtractionResult {
            indices,
            scores,
            seed,
            truncated: m > n,
        },
    })
}

pub fn infer(
    model: &DiffuSumModel,
    provider: &EmbeddingProvider,
    record: &DocumentRecord,
    m: usize,
    seed: u64,
) -> Result<ExtractionResult> {
    infer_trace(model, provider, record, m, seed).map(|t| t.result)
}

pub fn lead_baseline(n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    Ok((0..m.min(n)).collect())
}

pub fn oracle_baseline(labels: Option<&OracleLabels>) -> Result<Vec<usize>> {
    labels
        .map(|l| l.oracle_indices.clone())
        .ok_or_else(|| Error::invalid("ORACLE labels are missing for this record"))
}

/// Corpus ROUGE of per-record selections against the references.
pub fn selection_triple(records: &[DocumentRecord], selections: &[Vec<usize>]) -> Result<RougeTriple> {
    if records.len() != selections.len() {
        return Err(Error::invalid("one selection per record is required"));
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = records
        .iter()
        .zip(selections)
        .map(|(r, s)| (r.selection_tokens(s), r.reference_tokens()))
        .collect();
    corpus_rouge(&pairs)
}

pub fn selection_metrics(records: &[DocumentRecord], selections: &[Vec<usize>]) -> Result<ValidationMetrics> {
    let triple = selection_triple(records, selections)?;
    Ok(ValidationMetrics {
        rouge1: triple.rouge1.f1,
        rouge2: triple.rouge2.f1,
        rouge_l: triple.rouge_l.f1,
        mean_r1_r2: triple.mean_r1_r2(),
    })
}

/// Full inference over `records` scored against their references. Each
/// record extracts `extract_count` sentences, or as many as its reference has.
pub fn validate(
    model: &DiffuSumModel,
    records: &[DocumentRecord],
    provider: &EmbeddingProvider,
    extract_count: Option<usize>,
    seed: u64,
) -> Result<ValidationMetrics> {
    if records.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let selections = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let m = extract_count.unwrap_or(r.summary_sentences.len());
            infer(model, provider, r, m, record_seed(seed, i)).map(|e| e.indices)
        })
        .collect::<Result<Vec<_>>>()?;
    selection_metrics(records, &selections)
}

/// Encoded document, encoded ORACLE and generated rows of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationExport {
    pub id: String,
    pub doc: Vec<Vec<f64>>,
    pub oracle: Vec<Vec<f64>>,
    pub generated: Vec<Vec<f64>>,
    /// Mean cosine between generated slot `j` and encoded ORACLE slot `j`.
    pub mean_cosine: f64,
}

pub fn export_representations(
    model: &DiffuSumModel,
    provider: &EmbeddingProvider,
    record: &DocumentRecord,
    labels: &OracleLabels,
    seed: u64,
) -> Result<RepresentationExport> {
    labels.validate(record.n())?;
    if labels.m() == 0 {
        return Err(Error::invalid("ORACLE labels are empty"));
    }
    let trace = infer_trace(model, provider, record, labels.m(), seed)?;
    let initial = provider.embed_document(record)?.to_matrix();
    let oracle = model
        .encoder
        .encode_all(&model.store, &initial.select_rows(&labels.alignment))?;
    let mean_cosine = (0..labels.m())
        .map(|j| cosine(trace.generated.row(j), oracle.row(j)))
        .sum::<f64>()
        / labels.m() as f64;
    Ok(RepresentationExport {
        id: record.id.clone(),
        doc: trace.h_doc.to_rows(),
        oracle: oracle.to_rows(),
        generated: trace.generated.to_rows(),
        mean_cosine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_takes_runner_up() {
        let scores = vec![vec![0.7, 0.2, 0.1], vec![0.6, 0.3, 0.1]];
        assert_eq!(dedup_select(&scores), vec![0, 1]);
        // The more confident slot wins the contested index.
        let scores = vec![vec![0.5, 0.1, 0.4], vec![0.9, 0.05, 0.05]];
        assert_eq!(dedup_select(&scores), vec![0, 2]);
    }

    #[test]
    fn dedup_distinct_argmaxes() {
        let scores = vec![vec![0.1, 0.1, 0.8], vec![0.7, 0.2, 0.1]];
        assert_eq!(dedup_select(&scores), vec![0, 2]);
        let all = vec![vec![0.5, 0.5]; 2];
        assert_eq!(dedup_select(&all), vec![0, 1]);
    }

    #[test]
    fn baselines() {
        assert_eq!(lead_baseline(5, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(lead_baseline(2, 3).unwrap(), vec![0, 1]);
        assert!(lead_baseline(2, 0).is_err());
        let labels = OracleLabels::from_indices(vec![2]);
        assert_eq!(oracle_baseline(Some(&labels)).unwrap(), vec![2]);
        assert!(oracle_baseline(None).is_err());
    }

    #[test]
    fn record_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|i| record_seed(101, i)).collect();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), seeds.len());
        assert_eq!(record_seed(101, 3), record_seed(101, 3));
        assert_ne!(record_seed(101, 3), record_seed(102, 3));
    }

    #[test]
    fn perfect_selection_scores_one() {
        let r = DocumentRecord::from_raw(
            "a",
            &["the cat sat .", "a dog ran .", "birds fly high ."],
            &["a dog ran ."],
        )
        .unwrap();
        let m = selection_metrics(std::slice::from_ref(&r), &[vec![1]]).unwrap();
        assert_eq!((m.rouge1, m.rouge2, m.rouge_l), (1.0, 1.0, 1.0));
        assert_eq!(m.mean_r1_r2, (m.rouge1 + m.rouge2) / 2.0);
    }
}
