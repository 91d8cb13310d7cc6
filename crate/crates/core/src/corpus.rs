//! Corpus loading, tokenization and greedy ORACLE label construction.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rouge::{rouge_n, RougeScore};

pub type Sentence = Vec<String>;

/// Lowercases and splits on whitespace, with every punctuation character
/// emitted as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut buf = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut buf, &mut tokens);
        } else if ch.is_alphanumeric() {
            buf.extend(ch.to_lowercase());
        } else {
            flush(&mut buf, &mut tokens);
            tokens.push(ch.to_lowercase().collect());
        }
    }
    flush(&mut buf, &mut tokens);
    tokens
}

fn flush(buf: &mut String, tokens: &mut Vec<String>) {
    if !buf.is_empty() {
        tokens.push(std::mem::take(buf));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub doc_sentences: Vec<Sentence>,
    pub summary_sentences: Vec<Sentence>,
}

impl DocumentRecord {
    /// Builds a record from raw sentence strings, dropping sentences that
    /// tokenize to nothing. Returns `None` if either side ends up empty.
    pub fn from_raw<S: AsRef<str>>(id: impl Into<String>, document: &[S], summary: &[S]) -> Option<Self> {
        let clean = |v: &[S]| -> Vec<Sentence> {
            v.iter()
                .map(|s| tokenize(s.as_ref()))
                .filter(|t| !t.is_empty())
                .collect()
        };
        let doc_sentences = clean(document);
        let summary_sentences = clean(summary);
        if doc_sentences.is_empty() || summary_sentences.is_empty() {
            return None;
        }
        Some(Self {
            id: id.into(),
            doc_sentences,
            summary_sentences,
        })
    }

    pub fn n(&self) -> usize {
        self.doc_sentences.len()
    }

    pub fn doc_word_count(&self) -> usize {
        self.doc_sentences.iter().map(Vec::len).sum()
    }

    pub fn summary_word_count(&self) -> usize {
        self.summary_sentences.iter().map(Vec::len).sum()
    }

    /// The reference summary as one token sequence.
    pub fn reference_tokens(&self) -> Vec<String> {
        self.summary_sentences.concat()
    }

    /// Concatenation of the given document sentences, in document order.
    pub fn selection_tokens(&self, indices: &[usize]) -> Vec<String> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted
            .iter()
            .flat_map(|&i| self.doc_sentences[i].iter().cloned())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.doc_sentences.is_empty() || self.summary_sentences.is_empty() {
            return Err(Error::invalid(format!("record {:?} has an empty side", self.id)));
        }
        if self
            .doc_sentences
            .iter()
            .chain(&self.summary_sentences)
            .any(Vec::is_empty)
        {
            return Err(Error::invalid(format!("record {:?} has an empty sentence", self.id)));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    document: Vec<String>,
    summary: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<DocumentRecord>,
    /// Lines that parsed but had an empty document or summary after cleaning.
    pub skipped: usize,
}

/// Reads a JSONL corpus (`{"id", "document": [..], "summary": [..]}` per line).
pub fn load_corpus(path: impl AsRef<Path>, limit: Option<usize>) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = LoadedCorpus::default();
    if limit == Some(0) {
        return Ok(out);
    }
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match DocumentRecord::from_raw(raw.id, &raw.document, &raw.summary) {
            Some(rec) => out.records.push(rec),
            None => {
                out.skipped += 1;
                log::warn!(
                    "{}:{}: skipping record with empty document or summary",
                    path.display(),
                    i + 1
                );
            }
        }
        if limit.is_some_and(|l| out.records.len() >= l) {
            break;
        }
    }
    Ok(out)
}

/// Greedy ORACLE selection for one record.
///
/// `oracle_indices` is ascending. `alignment[j]` is the document sentence that
/// summary slot `j` is trained to match; for ORACLE labels the slots follow
/// document order, so it equals `oracle_indices`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLabels {
    pub oracle_indices: Vec<usize>,
    pub alignment: Vec<usize>,
}

impl OracleLabels {
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        Self {
            alignment: indices.clone(),
            oracle_indices: indices,
        }
    }

    pub fn m(&self) -> usize {
        self.alignment.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in &self.alignment {
            if i >= n {
                return Err(Error::invalid(format!("label index {i} out of range for n={n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("duplicate label index {i}")));
            }
        }
        let mut sorted = self.alignment.clone();
        sorted.sort_unstable();
        if sorted != self.oracle_indices {
            return Err(Error::invalid("alignment is not a permutation of oracle_indices"));
        }
        Ok(())
    }
}

/// ROUGE-2 F1 of a document-order selection against the concatenated reference.
pub fn selection_rouge(record: &DocumentRecord, reference: &[String], indices: &[usize], n: usize) -> RougeScore {
    rouge_n(&record.selection_tokens(indices), reference, n)
}

/// Greedily adds the sentence that most increases ROUGE-2 F1 until no addition
/// strictly improves it or `max_sentences` are selected. Ties go to the lowest
/// index. If the best first pick has zero ROUGE-2, the first pick is made by
/// ROUGE-1 F1 instead so the oracle is never empty.
pub fn greedy_oracle(record: &DocumentRecord, max_sentences: usize) -> OracleLabels {
    let reference = record.reference_tokens();
    let n = record.n();
    let cap = max_sentences.max(1).min(n);
    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0.0f64;

    let best_addition = |selected: &[usize], order: usize| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|i| !selected.contains(i)) {
            let mut trial = selected.to_vec();
            trial.push(i);
            let score = selection_rouge(record, &reference, &trial, order).f1;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        best
    };

    while selected.len() < cap {
        let Some((idx, score)) = best_addition(&selected, 2) else {
            break;
        };
        if score > current {
            selected.push(idx);
            current = score;
        } else if selected.is_empty() {
            // No bigram overlap anywhere: fall back to unigram overlap.
            let (idx, _) = best_addition(&selected, 1).expect("n >= 1");
            selected.push(idx);
        } else {
            break;
        }
    }
    OracleLabels::from_indices(selected)
}

/// Aligns each reference-summary sentence to a distinct document sentence by
/// greedy ROUGE-2 (ROUGE-1 fallback) matching, for training on abstractive
/// references instead of ORACLE sentences. Slots beyond `n` are dropped.
pub fn reference_alignment(record: &DocumentRecord) -> OracleLabels {
    let n = record.n();
    let mut taken = vec![false; n];
    let mut alignment = Vec::new();
    for sent in record.summary_sentences.iter().take(n) {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let r2 = rouge_n(&record.doc_sentences[i], sent, 2).f1;
            let r1 = rouge_n(&record.doc_sentences[i], sent, 1).f1;
            if best.is_none_or(|(_, b2, b1)| r2 > b2 || (r2 == b2 && r1 > b1)) {
                best = Some((i, r2, r1));
            }
        }
        let (i, _, _) = best.expect("fewer slots than sentences");
        taken[i] = true;
        alignment.push(i);
    }
    let mut oracle_indices = alignment.clone();
    oracle_indices.sort_unstable();
    OracleLabels {
        oracle_indices,
        alignment,
    }
}

/// Known per-dataset extraction counts.
pub fn known_extract_count(name: &str) -> Option<usize> {
    let key: String = name
        .to_ascii_lowercase()
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .collect();
    if key.contains("cnndm") || key.contains("cnndailymail") {
        Some(3)
    } else if key.contains("xsum") {
        Some(2)
    } else if key.contains("pubmed") {
        Some(6)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: String,
    pub path: PathBuf,
    pub extract_count: Option<usize>,
    pub record_count: usize,
}

impl DatasetManifest {
    /// Describes a corpus file, taking the extract count from `dataset` if
    /// given, else from the file name.
    pub fn describe(path: &Path, dataset: Option<&str>, record_count: usize) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let extract_count = dataset
            .and_then(known_extract_count)
            .or_else(|| known_extract_count(&stem));
        Self {
            split: stem,
            path: path.to_path_buf(),
            extract_count,
            record_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub mean_doc_words: f64,
    pub mean_summary_words: f64,
    pub mean_doc_sentences: f64,
    pub mean_summary_sentences: f64,
}

pub fn corpus_stats(records: &[DocumentRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(Error::invalid("corpus_stats on an empty corpus"));
    }
    let k = records.len() as f64;
    let mean = |f: &dyn Fn(&DocumentRecord) -> usize| records.iter().map(|r| f(r) as f64).sum::<f64>() / k;
    Ok(CorpusStats {
        records: records.len(),
        mean_doc_words: mean(&DocumentRecord::doc_word_count),
        mean_summary_words: mean(&DocumentRecord::summary_word_count),
        mean_doc_sentences: mean(&|r| r.doc_sentences.len()),
        mean_summary_sentences: mean(&|r| r.summary_sentences.len()),
    })
}

/// One line of a labels file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub id: String,
    pub oracle: Vec<usize>,
}

pub fn write_labels(path: impl AsRef<Path>, lines: &[LabelLine]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        let json = serde_json::to_string(line).expect("label line serializes");
        writeln!(w, "{json}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelLine>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
