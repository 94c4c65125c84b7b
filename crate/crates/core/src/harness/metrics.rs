use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TRACE_FILE: &str = "planner_trace.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    /// Episodes driven by the exploration strategy.
    Explore,
    /// Episodes driven by the deterministic actor.
    Eval,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Explore => "explore",
            Stream::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    /// 1-based training episode this record belongs to.
    pub episode: usize,
    pub stream: Stream,
    pub reward: f64,
    pub success: bool,
    pub steps: usize,
    pub seconds: f64,
    pub seed: u64,
}

/// Per-step planner diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub episode: usize,
    pub step: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub fallback: bool,
    /// Objective after every accepted iterate.
    pub trace: Vec<f64>,
}

/// Appends one JSON object per line and flushes after each.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>> {
    read_jsonl(path)
}
