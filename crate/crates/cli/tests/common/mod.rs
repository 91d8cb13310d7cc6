#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use diffusum::DocumentRecord;
use diffusum_cli::{run, Cli, CliResult};
use serde_json::json;

/// Writes records as a corpus JSONL file (tokens re-joined with spaces).
pub fn write_corpus(path: &Path, records: &[DocumentRecord]) {
    let join = |s: &[Vec<String>]| s.iter().map(|t| t.join(" ")).collect::<Vec<_>>();
    let text: String = records
        .iter()
        .map(|r| {
            let line = json!({
                "id": r.id,
                "document": join(&r.doc_sentences),
                "summary": join(&r.summary_sentences),
            });
            format!("{line}\n")
        })
        .collect();
    fs::write(path, text).unwrap();
}

/// Small architecture that trains in seconds on the synthetic corpora.
pub fn toy_config(epochs: usize, seed: u64, use_matching_loss: bool) -> String {
    format!(
        "embed_dim = 64\n\
         hidden_dim = 16\n\
         model_width = 32\n\
         ffn_width = 64\n\
         encoder_layers = 2\n\
         encoder_heads = 4\n\
         denoiser_layers = 2\n\
         denoiser_heads = 4\n\
         time_dim = 16\n\
         max_positions = 16\n\
         diffusion_steps = 50\n\
         dropout = 0.0\n\
         lr = 1e-3\n\
         eta = 1.0\n\
         epochs = {epochs}\n\
         batch_size = 8\n\
         validate_every = 10000\n\
         extract_count = 2\n\
         seed = {seed}\n\
         use_matching_loss = {use_matching_loss}\n"
    )
}

/// Runs the CLI in-process and returns its stdout.
pub fn run_cli<S: AsRef<str>>(args: &[S]) -> CliResult<String> {
    let argv = std::iter::once("diffusum").chain(args.iter().map(AsRef::as_ref));
    let cli = Cli::try_parse_from(argv).expect("arguments parse");
    let mut out = Vec::new();
    run(cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    pub fn write(&self, name: &str, text: &str) -> String {
        fs::write(self.path(name), text).unwrap();
        self.arg(name)
    }

    pub fn corpus(&self, name: &str, records: &[DocumentRecord]) -> String {
        write_corpus(&self.path(name), records);
        self.arg(name)
    }
}
