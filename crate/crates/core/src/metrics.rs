//! Forecast accuracy metrics and per-row error tables.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::Window;
use crate::gru::PriceJacobian;
use crate::loss::{violation_fraction, PhysicsScope};
use crate::math::sqrt;
use crate::{Error, Result};

/// Actuals this close to zero make percentage errors undefined.
pub const MAPE_ZERO_GUARD: f64 = 1e-9;

fn check(y: &[f64], pred: &[f64]) -> Result<()> {
    if y.len() != pred.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: pred.len() });
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    Ok(())
}

pub fn rmse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check(y, pred)?;
    let mse = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(sqrt(mse))
}

/// `|actual - predicted| / |actual| * 100`.
pub fn pct_error(actual: f64, predicted: f64) -> f64 {
    (actual - predicted).abs() / actual.abs() * 100.0
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], pred: &[f64]) -> Result<f64> {
    check(y, pred)?;
    if let Some(index) = y.iter().position(|v| v.abs() <= MAPE_ZERO_GUARD) {
        return Err(Error::MapeUndefined { index });
    }
    Ok(y.iter().zip(pred).map(|(&a, &p)| pct_error(a, p)).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub actual: f64,
    pub predicted: f64,
    pub pct_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub rmse: f64,
    pub mape: f64,
    pub violation_fraction: Option<f64>,
}

/// Jacobian entries to audit for sign violations alongside a report.
#[derive(Debug, Clone, Copy)]
pub struct ViolationAudit<'a> {
    pub jacobian: &'a PriceJacobian,
    pub window: Window,
    pub scope: PhysicsScope,
}

pub fn report(y: &[f64], pred: &[f64], labels: &[String], audit: Option<ViolationAudit<'_>>) -> Result<EvalReport> {
    check(y, pred)?;
    if labels.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: labels.len() });
    }
    let mape = mape(y, pred)?;
    let rows = labels
        .iter()
        .zip(y.iter().zip(pred))
        .map(|(l, (&a, &p))| ReportRow { label: l.clone(), actual: a, predicted: p, pct_error: pct_error(a, p) })
        .collect();
    Ok(EvalReport {
        rows,
        rmse: rmse(y, pred)?,
        mape,
        violation_fraction: audit.map(|a| violation_fraction(a.jacobian, a.window, a.scope)),
    })
}
