//! Forecast report files: a results table (Time, Real, Predicted, Error),
//! a JSON report and an SVG chart.

use std::path::Path;

use preig_core::metrics::EvalReport;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::write_json;

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("Time,Real,Predicted,Error\n");
    for r in &report.rows {
        out.push_str(&format!("{},{:.3},{:.3},{:.2}%\n", r.label, r.actual, r.predicted, r.pct_error));
    }
    out
}

#[derive(Debug, Serialize)]
struct RowJson<'a> {
    time: &'a str,
    actual: f64,
    predicted: f64,
    pct_error: f64,
}

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    rows: Vec<RowJson<'a>>,
    rmse: f64,
    mape: f64,
    violation_fraction: Option<f64>,
}

pub fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, report_csv(report)).map_err(|e| Error::io(&csv_path, e))?;
    let json = ReportJson {
        rows: report
            .rows
            .iter()
            .map(|r| RowJson { time: &r.label, actual: r.actual, predicted: r.predicted, pct_error: r.pct_error })
            .collect(),
        rmse: report.rmse,
        mape: report.mape,
        violation_fraction: report.violation_fraction,
    };
    write_json(&dir.join(format!("{stem}.json")), &json)
}

/// Line chart of actual against predicted values.
pub fn svg_chart(title: &str, labels: &[String], actual: &[f64], predicted: &[f64]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let n = actual.len().max(1);
    let (lo, hi) = actual
        .iter()
        .chain(predicted)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let x = |i: usize| PAD + (W - 2.0 * PAD) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let line = |vals: &[f64]| {
        vals.iter().enumerate().map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v))).collect::<Vec<_>>().join(" ")
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    s.push_str(&format!("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", W / 2.0, escape(title)));
    s.push_str(&format!(
        "<path d=\"M{PAD},{PAD} V{} H{}\" fill=\"none\" stroke=\"#444\"/>\n",
        H - PAD,
        W - PAD
    ));
    s.push_str(&format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n", PAD - 4.0, y(hi) + 4.0, hi));
    s.push_str(&format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n", PAD - 4.0, y(lo) + 4.0, lo));
    if let (Some(first), Some(last)) = (labels.first(), labels.last()) {
        s.push_str(&format!("<text x=\"{PAD}\" y=\"{}\">{}</text>\n", H - PAD + 18.0, escape(first)));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            W - PAD,
            H - PAD + 18.0,
            escape(last)
        ));
    }
    s.push_str(&format!("<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n", line(actual)));
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n",
        line(predicted)
    ));
    let lx = W - PAD - 130.0;
    s.push_str(&format!("<line x1=\"{lx}\" y1=\"40\" x2=\"{}\" y2=\"40\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n", lx + 24.0));
    s.push_str(&format!("<text x=\"{}\" y=\"44\">actual</text>\n", lx + 30.0));
    s.push_str(&format!(
        "<line x1=\"{lx}\" y1=\"58\" x2=\"{}\" y2=\"58\" stroke=\"#d62728\" stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n",
        lx + 24.0
    ));
    s.push_str(&format!("<text x=\"{}\" y=\"62\">predicted</text>\n", lx + 30.0));
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
