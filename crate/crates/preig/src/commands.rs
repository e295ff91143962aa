//! The four subcommands. Each writes its primary outputs under the
//! configured output directory and returns a short summary for the caller.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use preig_core::dataset::Window;
use preig_core::gru::{forward, price_jacobian};
use preig_core::loss::{violation_fraction, PhysicsScope};
use preig_core::metrics::EvalReport;
use serde::Serialize;

use crate::checkpoint::{sidecar_path, Checkpoint, Sidecar};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::logs::{write_breakdowns, write_history, write_steps};
use crate::parallel::ThreadedEvaluator;
use crate::pipeline::{denoise_table, prepare, score, train, validation_loss, Prepared};
use crate::report::{svg_chart, write_report};
use crate::table::{load_csv, write_json, Schema};

/// Rows a forecast or evaluation is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum WindowChoice {
    #[default]
    Test,
    Validation,
    Train,
}

impl WindowChoice {
    fn resolve(self, prep: &Prepared) -> Window {
        let ds = &prep.dataset;
        match self {
            WindowChoice::Test => ds.test_window(),
            WindowChoice::Validation => ds.val_window(),
            WindowChoice::Train => ds.fit_window(),
        }
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    Ok(cfg.output.clone())
}

pub fn default_checkpoint(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("model.json")
}

pub fn denoise(cfg: &RunConfig) -> Result<PathBuf> {
    let schema = Schema::load(&cfg.schema)?;
    let table = load_csv(&cfg.data, &schema)?;
    let (smooth, orders) = denoise_table(&table, cfg)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("denoised.csv");
    smooth.write_csv(&path)?;
    write_json(&dir.join("denoise_orders.json"), &orders)?;
    for (name, k) in &orders {
        info!("{name}: order {k}");
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub val_loss: f64,
    pub eta: f64,
    pub lambda2: f64,
}

pub fn train_cmd(cfg: &RunConfig) -> Result<TrainSummary> {
    let prep = prepare(cfg)?;
    let ds = &prep.dataset;
    info!(
        "dataset: {} rows ({} train, {} validation, {} test), {} features",
        ds.rows,
        ds.fit_window().len(),
        ds.val_window().len(),
        ds.test_window().len(),
        ds.dim
    );
    let evaluator = ThreadedEvaluator::from_env();
    info!("training {} candidates for {} generations on {} threads", cfg.pbt.population, cfg.pbt.generations, evaluator.threads);
    let trained = train(&prep, cfg, &evaluator)?;
    let dir = out_dir(cfg)?;
    let best = &trained.outcome.best;
    let ck_path = default_checkpoint(cfg);
    Checkpoint::new(&trained.params, cfg.model.seed).save(&ck_path)?;
    let val_loss = best.val_loss.unwrap_or(f64::INFINITY);
    Sidecar { eta: best.eta, lambda2: best.lambda2, seed: best.seed, val_loss }.save(&sidecar_path(&ck_path))?;
    write_history(&dir.join("history.csv"), &trained.outcome.history)?;
    write_steps(&dir.join("train_steps.jsonl"), &trained.outcome.logs)?;
    write_breakdowns(&dir.join("train_breakdown.jsonl"), &trained.outcome.logs)?;
    write_json(&dir.join("preprocessing.json"), &prep.preprocessing)?;
    for h in &trained.outcome.history {
        info!("generation {}: best {:.6e}, median {:.6e}", h.generation, h.best_val, h.median_val);
    }
    Ok(TrainSummary { checkpoint: ck_path, val_loss, eta: best.eta, lambda2: best.lambda2 })
}

fn load_model(cfg: &RunConfig, prep: &Prepared, checkpoint: &Path) -> Result<preig_core::gru::GruParams> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.check_dims(prep.dataset.dim, cfg.model.hidden)?;
    ck.params()
}

pub fn forecast(cfg: &RunConfig, checkpoint: &Path, window: WindowChoice, plot: bool) -> Result<EvalReport> {
    let prep = prepare(cfg)?;
    let params = load_model(cfg, &prep, checkpoint)?;
    let w = window.resolve(&prep);
    let rep = score(&prep, cfg, &params, w)?;
    let dir = out_dir(cfg)?;
    write_report(&dir, "forecast", &rep)?;
    if plot {
        let actual: Vec<f64> = rep.rows.iter().map(|r| r.actual).collect();
        let pred: Vec<f64> = rep.rows.iter().map(|r| r.predicted).collect();
        let labels: Vec<String> = rep.rows.iter().map(|r| r.label.clone()).collect();
        let title = format!("{}: actual vs predicted", prep.raw.target().name);
        let path = dir.join("forecast.svg");
        fs::write(&path, svg_chart(&title, &labels, &actual, &pred)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub window: String,
    pub rows: usize,
    pub rmse: f64,
    pub mape: f64,
    /// Under the configured physics scope.
    pub violation_fraction: f64,
    pub violation_fraction_same_step: f64,
    pub violation_fraction_all_lags: f64,
    /// Largest same-step price derivative in the window (normalized units).
    pub max_same_step_derivative: f64,
    pub validation_loss: f64,
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, window: WindowChoice) -> Result<Evaluation> {
    let prep = prepare(cfg)?;
    let params = load_model(cfg, &prep, checkpoint)?;
    let w = window.resolve(&prep);
    let rep = score(&prep, cfg, &params, w)?;
    let tr = forward(&params, prep.dataset.inputs(w.end))?;
    let jac = price_jacobian(&params, &tr, prep.dataset.price_channel)?;
    let max_same = w.range().map(|t| jac.get(t, t).expect("t <= t")).fold(f64::NEG_INFINITY, f64::max);
    let eval = Evaluation {
        window: format!("{window:?}").to_lowercase(),
        rows: w.len(),
        rmse: rep.rmse,
        mape: rep.mape,
        violation_fraction: rep.violation_fraction.unwrap_or(0.0),
        violation_fraction_same_step: violation_fraction(&jac, w, PhysicsScope::SameStep),
        violation_fraction_all_lags: violation_fraction(&jac, w, PhysicsScope::AllLags),
        max_same_step_derivative: max_same,
        validation_loss: validation_loss(&prep, cfg, &params)?,
    };
    write_json(&out_dir(cfg)?.join("evaluation.json"), &eval)?;
    Ok(eval)
}
