use std::fmt;
use std::fs::File;
use std::path::Path;

use serde::Serialize;

use super::BenchError;
use crate::data::{ingest_csv, synth_corpus, tokenize, write_csv, Label};

/// Width of one token-length histogram bin.
const BIN_WIDTH: usize = 16;
const BINS: usize = 8;

/// Writes `synth_corpus(n, seed)` in the ingest schema.
pub fn synth_to_csv(n: usize, seed: u64, out: &Path) -> Result<(), BenchError> {
    let file = File::create(out).map_err(|e| BenchError::io(out, e))?;
    write_csv(&synth_corpus(n, seed), file)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub records: usize,
    pub petitioner: usize,
    pub respondent: usize,
    pub mean_tokens: f64,
    pub max_tokens: usize,
    /// Counts per 16-token bin; the last bin is open-ended.
    pub length_histogram: Vec<usize>,
}

pub fn inspect_corpus(path: &Path) -> Result<CorpusStats, BenchError> {
    let records = ingest_csv(path)?;
    let lengths: Vec<usize> = records.iter().map(|r| tokenize(&r.context).len()).collect();
    let mut length_histogram = vec![0; BINS];
    for &l in &lengths {
        length_histogram[(l / BIN_WIDTH).min(BINS - 1)] += 1;
    }
    let count = |l: Label| records.iter().filter(|r| r.judgment == l).count();
    Ok(CorpusStats {
        records: records.len(),
        petitioner: count(Label::Petitioner),
        respondent: count(Label::Respondent),
        mean_tokens: lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64,
        max_tokens: lengths.iter().copied().max().unwrap_or(0),
        length_histogram,
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {}", self.records)?;
        writeln!(f, "petitioner: {}", self.petitioner)?;
        writeln!(f, "respondent: {}", self.respondent)?;
        writeln!(f, "tokens: mean {:.1}, max {}", self.mean_tokens, self.max_tokens)?;
        writeln!(f, "token-length histogram:")?;
        let peak = self.length_histogram.iter().copied().max().unwrap_or(0).max(1);
        for (i, &c) in self.length_histogram.iter().enumerate() {
            let lo = i * BIN_WIDTH;
            let range = if i + 1 == BINS {
                format!("{lo}+")
            } else {
                format!("{lo}-{}", lo + BIN_WIDTH - 1)
            };
            writeln!(f, "  {range:>8} {c:>5} {}", "#".repeat(c * 40 / peak))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_then_inspect() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        synth_to_csv(200, 7, &a).unwrap();
        synth_to_csv(200, 7, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let stats = inspect_corpus(&a).unwrap();
        assert_eq!(stats.records, 200);
        assert!(stats.petitioner.abs_diff(stats.respondent) <= 1);
        assert_eq!(stats.length_histogram.iter().sum::<usize>(), 200);
        assert!(stats.to_string().starts_with("records: 200\n"));
    }
}
