//! Load, denoise, select lags, assemble, train and score, driven by a
//! [`RunConfig`].

use std::collections::BTreeMap;

use preig_core::dataset::{assemble, select_lag, RawSeries, SplitSpec, TimeSeriesDataset, Window};
use preig_core::denoise::denoise_fit;
use preig_core::gru::{forward, price_jacobian, GruParams};
use preig_core::loss::Problem;
use preig_core::metrics::{report, EvalReport, ViolationAudit};
use preig_core::pbt::{self, Evaluator, PbtOutcome, TrainingSetup};
use serde::Serialize;

use crate::config::{LagSource, RunConfig};
use crate::error::{Error, Result};
use crate::table::{Role, Table};

/// Replace feature columns (and the target when configured) by their
/// Chebyshev reconstructions. Returns the new table and the order chosen for
/// each smoothed column.
pub fn denoise_table(table: &Table, cfg: &RunConfig) -> Result<(Table, BTreeMap<String, usize>)> {
    let mut out = table.clone();
    let mut orders = BTreeMap::new();
    if !cfg.denoise.enabled {
        return Ok((out, orders));
    }
    for col in &mut out.columns {
        let wanted = match col.role {
            Role::Feature | Role::Price => true,
            Role::Target => cfg.denoise.apply_to_target,
            Role::Ignore => false,
        };
        if wanted {
            let fit = denoise_fit(&col.values, cfg.denoise.max_order, cfg.denoise.criterion.into())?;
            orders.insert(col.name.clone(), fit.order);
            col.values = fit.fitted;
        }
    }
    Ok((out, orders))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preprocessing {
    pub denoise_orders: BTreeMap<String, usize>,
    pub lags: BTreeMap<String, usize>,
    pub train_end: usize,
    pub rows: usize,
}

/// Everything derived from the data before training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: Table,
    pub denoised: Table,
    pub dataset: TimeSeriesDataset,
    /// Date label of each dataset row.
    pub labels: Vec<String>,
    pub preprocessing: Preprocessing,
}

fn truncate(s: &RawSeries, n: usize) -> Result<RawSeries> {
    Ok(RawSeries::new(s.name.clone(), s.values[..n].to_vec(), s.timestamps[..n].to_vec())?)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let schema = crate::table::Schema::load(&cfg.schema)?;
    let raw = crate::table::load_csv(&cfg.data, &schema)?;
    prepare_table(raw, cfg)
}

pub fn prepare_table(raw: Table, cfg: &RunConfig) -> Result<Prepared> {
    let (denoised, denoise_orders) = denoise_table(&raw, cfg)?;
    let train_end = cfg.split.train_end(&raw.labels)?;
    let (feats, price_channel) = denoised.features();
    let features: Vec<RawSeries> = feats.iter().map(|c| denoised.series(c)).collect::<Result<_>>()?;
    let target = denoised.series(denoised.target())?;

    // correlations use training rows only
    let lag_source = match cfg.lags.select_on {
        LagSource::Denoised => &denoised,
        LagSource::Raw => &raw,
    };
    let (lag_feats, _) = lag_source.features();
    let lag_target = truncate(&lag_source.series(lag_source.target())?, train_end)?;
    let mut lags = Vec::with_capacity(features.len());
    let mut lag_map = BTreeMap::new();
    for c in lag_feats {
        if train_end < cfg.lags.max_lag + 3 {
            return Err(Error::Config(format!(
                "{} training rows are too few to select lags up to {}",
                train_end, cfg.lags.max_lag
            )));
        }
        let lag = select_lag(&truncate(&lag_source.series(c)?, train_end)?, &lag_target, cfg.lags.max_lag)?;
        lags.push(lag);
        lag_map.insert(c.name.clone(), lag);
    }

    let split = SplitSpec { train_end, val_fraction: cfg.split.val_fraction };
    let dataset = assemble(&features, price_channel, &target, &lags, &split)?;
    let labels = raw.labels[dataset.offset..].to_vec();
    let preprocessing = Preprocessing { denoise_orders, lags: lag_map, train_end, rows: dataset.rows };
    Ok(Prepared { raw, denoised, dataset, labels, preprocessing })
}

/// Raw-unit targets of `window`. With denoising applied to the target these
/// are the smoothed values the model was trained against; reports compare
/// against the original series instead (see [`score`]).
fn original_targets(prep: &Prepared, window: Window) -> Vec<f64> {
    let col = prep.raw.target();
    window.range().map(|r| col.values[r + prep.dataset.offset]).collect()
}

pub fn training_setup<'a>(prep: &'a Prepared, cfg: &RunConfig) -> TrainingSetup<'a> {
    let ds = &prep.dataset;
    let normalized = cfg.model.normalize_target;
    TrainingSetup {
        train: Problem::from_dataset(ds, ds.fit_window(), normalized),
        val: Problem::from_dataset(ds, ds.val_window(), normalized),
        input_dim: ds.dim,
        weights: cfg.loss_weights(0.0),
        config: cfg.population(),
    }
}

pub struct Trained {
    pub outcome: PbtOutcome,
    pub params: GruParams,
}

pub fn train(prep: &Prepared, cfg: &RunConfig, evaluator: &dyn Evaluator) -> Result<Trained> {
    let setup = training_setup(prep, cfg);
    let outcome = pbt::run(&setup, evaluator)?;
    let params = GruParams::from_theta(prep.dataset.dim, cfg.model.hidden, outcome.best.theta.clone())?;
    Ok(Trained { outcome, params })
}

/// Validation MSE in the units the model was trained in; the number PBT
/// ranks candidates by.
pub fn validation_loss(prep: &Prepared, cfg: &RunConfig, params: &GruParams) -> Result<f64> {
    Ok(pbt::validation_mse(params, &training_setup(prep, cfg).val)?)
}

/// Model outputs for the rows of `window`, in original target units.
pub fn predict(prep: &Prepared, cfg: &RunConfig, params: &GruParams, window: Window) -> Result<Vec<f64>> {
    let ds = &prep.dataset;
    let tr = forward(params, ds.inputs(window.end))?;
    let out = &tr.f[window.range()];
    Ok(if cfg.model.normalize_target { out.iter().map(|&v| ds.target_params.invert(v)).collect() } else { out.to_vec() })
}

/// Accuracy against the original target plus the sign audit of the price
/// Jacobian over `window`.
pub fn score(prep: &Prepared, cfg: &RunConfig, params: &GruParams, window: Window) -> Result<EvalReport> {
    if window.is_empty() {
        return Err(Error::Config("evaluation window is empty".into()));
    }
    let ds = &prep.dataset;
    let pred = predict(prep, cfg, params, window)?;
    let actual = original_targets(prep, window);
    let tr = forward(params, ds.inputs(window.end))?;
    let jac = price_jacobian(params, &tr, ds.price_channel)?;
    let audit = ViolationAudit { jacobian: &jac, window, scope: cfg.loss.physics_scope.into() };
    Ok(report(&actual, &pred, &prep.labels[window.range()], Some(audit))?)
}
