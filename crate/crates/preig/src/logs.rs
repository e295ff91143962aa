//! JSON-lines training logs and the population history CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use preig_core::optim::StepRecord;
use preig_core::pbt::{CandidateLog, GenerationSummary};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct StepLine<'a> {
    generation: usize,
    candidate: usize,
    stage: &'a str,
    step: usize,
    loss: f64,
    grad_norm: f64,
}

#[derive(Debug, Serialize)]
struct BreakdownLine {
    epoch: usize,
    candidate: usize,
    data_loss: f64,
    physics_loss: f64,
    total: f64,
    violation_fraction: f64,
    val_loss: Option<f64>,
    failed: bool,
}

fn jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One line per optimizer step: stage, step, loss, gradient norm.
pub fn write_steps(path: &Path, logs: &[CandidateLog]) -> Result<()> {
    let lines = logs.iter().flat_map(|l| {
        l.steps.iter().map(move |s: &StepRecord| StepLine {
            generation: l.generation,
            candidate: l.index,
            stage: s.stage.as_str(),
            step: s.step,
            loss: s.loss,
            grad_norm: s.grad_norm,
        })
    });
    jsonl(path, lines)
}

/// One line per candidate per generation with its training loss breakdown.
/// Failed candidates carry nulls.
pub fn write_breakdowns(path: &Path, logs: &[CandidateLog]) -> Result<()> {
    let lines = logs.iter().map(|l| {
        let b = l.breakdown;
        BreakdownLine {
            epoch: l.generation,
            candidate: l.index,
            data_loss: b.map_or(f64::NAN, |b| b.data_loss),
            physics_loss: b.map_or(f64::NAN, |b| b.physics_loss),
            total: b.map_or(f64::NAN, |b| b.total),
            violation_fraction: b.map_or(f64::NAN, |b| b.violation_fraction),
            val_loss: (!l.failed).then_some(l.val_loss),
            failed: l.failed,
        }
    });
    jsonl(path, lines)
}

pub fn history_csv(history: &[GenerationSummary]) -> String {
    let mut out = String::from("generation,best_val,median_val,best_eta,best_lambda2\n");
    for h in history {
        out.push_str(&format!("{},{},{},{},{}\n", h.generation, h.best_val, h.median_val, h.best_eta, h.best_lambda2));
    }
    out
}

pub fn write_history(path: &Path, history: &[GenerationSummary]) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}
