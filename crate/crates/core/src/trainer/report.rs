use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::loss::{LossBreakdown, LossWeights};
use crate::config::Mode;
use crate::error::{Error, Result};

/// Loss terms and learning rate of one optimizer step, measured before the
/// update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub lr: f64,
    pub dc: f64,
    pub hk: f64,
    pub sc: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub mode: Mode,
    pub iters: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Loss at the parameters returned by training (after the last step).
    pub final_loss: LossBreakdown,
    /// Optional evaluation metrics attached by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<serde_json::Value>,
}

/// Training history. Serialized as JSON lines: one `iter` line per step, then
/// a `summary` line. Wall-clock time is deliberately absent so that reruns
/// produce identical bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub records: Vec<IterRecord>,
    pub summary: ReportSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Iter(IterRecord),
    Summary(ReportSummary),
}

impl TrainReport {
    /// Mean total loss over records `[from, to)`.
    pub fn mean_total(&self, from: usize, to: usize) -> f64 {
        let s = &self.records[from.min(self.records.len())..to.min(self.records.len())];
        if s.is_empty() {
            return f64::NAN;
        }
        s.iter().map(|r| r.total).sum::<f64>() / s.len() as f64
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Iter(*r))?;
            writeln!(w).map_err(|e| Error::io("<report>", e))?;
        }
        serde_json::to_writer(&mut w, &Line::Summary(self.summary.clone()))?;
        writeln!(w).map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        let mut summary = None;
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<report>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                Line::Iter(rec) => records.push(rec),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or_else(|| Error::Invalid("report has no summary line".into()))?;
        Ok(TrainReport { records, summary })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let rep = TrainReport {
            records: (0..3)
                .map(|i| IterRecord {
                    iter: i,
                    lr: 1e-3,
                    dc: 0.5 / (i + 1) as f64,
                    hk: 0.1,
                    sc: 0.0,
                    total: 0.6,
                })
                .collect(),
            summary: ReportSummary {
                mode: Mode::Hk,
                iters: 3,
                seed: 7,
                weights: LossWeights::new(1.0, 2.0).unwrap(),
                final_loss: LossBreakdown::default(),
                metrics: None,
            },
        };
        let text = rep.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("\"kind\":\"iter\""));
        let back = TrainReport::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, rep);
        assert!((rep.mean_total(0, 3) - 0.6).abs() < 1e-15);
    }
}
