//! CSV time-series tables and the JSON schema that assigns column roles.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use preig_core::dataset::RawSeries;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    /// The price feature the monotonicity penalty differentiates against.
    Price,
    Target,
    Ignore,
}

/// Column name to role. Every data column must be listed; the leading date
/// column may be omitted or marked `ignore`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: BTreeMap<String, Role>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        for role in [Role::Price, Role::Target] {
            let n = schema.columns.values().filter(|&&r| r == role).count();
            if n != 1 {
                return Err(Error::Config(format!(
                    "{}: schema needs exactly one {} column, found {n}",
                    path.display(),
                    role_name(role)
                )));
            }
        }
        Ok(schema)
    }
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Feature => "feature",
        Role::Price => "price",
        Role::Target => "target",
        Role::Ignore => "ignore",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: Role,
    pub values: Vec<f64>,
}

/// A parsed table: date labels, their integer keys and the numeric columns
/// (ignored columns are dropped), in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub date_column: String,
    pub labels: Vec<String>,
    pub timestamps: Vec<i64>,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DateKind {
    Month,
    Day,
    Second,
}

/// Integer key for a date label: months for `YYYY-MM`, days for
/// `YYYY-MM-DD`, seconds for date-times.
fn parse_date(s: &str) -> Option<(DateKind, i64)> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
        if s.len() <= 7 {
            return Some((DateKind::Month, d.year() as i64 * 12 + d.month0() as i64));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some((DateKind::Day, d.num_days_from_ce() as i64));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some((DateKind::Second, t.and_utc().timestamp()));
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| (DateKind::Second, t.timestamp()))
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 {
        return Err(Error::Data { path: path.into(), message: "need a date column and at least one data column".into() });
    }
    let date_column = header[0].clone();
    if let Some(role) = schema.columns.get(&date_column) {
        if *role != Role::Ignore {
            return Err(Error::Config(format!("date column '{date_column}' cannot have role {}", role_name(*role))));
        }
    }
    let mut roles = Vec::with_capacity(header.len() - 1);
    for name in &header[1..] {
        match schema.columns.get(name) {
            Some(r) => roles.push(*r),
            None => return Err(Error::Config(format!("column '{name}' is not listed in the schema"))),
        }
    }
    for name in schema.columns.keys() {
        if !header.contains(name) {
            return Err(Error::Config(format!("schema column '{name}' not found in {}", path.display())));
        }
    }

    let mut labels = Vec::new();
    let mut timestamps: Vec<i64> = Vec::new();
    let mut kind = None;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); roles.len()];
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let cell_err = |column: &str, message: String| Error::Parse { path: path.into(), row, column: column.into(), message };
        let label = rec.get(0).unwrap_or_default();
        let (k, key) = parse_date(label).ok_or_else(|| cell_err(&date_column, format!("unrecognized date '{label}'")))?;
        if *kind.get_or_insert(k) != k {
            return Err(cell_err(&date_column, format!("date '{label}' uses a different format from earlier rows")));
        }
        if timestamps.last().is_some_and(|&prev| key <= prev) {
            return Err(cell_err(&date_column, "timestamps not increasing".into()));
        }
        for (j, (role, col)) in roles.iter().zip(values.iter_mut()).enumerate() {
            if *role == Role::Ignore {
                continue;
            }
            let name = &header[j + 1];
            let cell = rec.get(j + 1).unwrap_or_default();
            if cell.is_empty() {
                return Err(cell_err(name, "empty cell".into()));
            }
            let v: f64 = cell.parse().map_err(|_| cell_err(name, format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(cell_err(name, format!("non-finite value '{cell}'")));
            }
            col.push(v);
        }
        labels.push(label.to_owned());
        timestamps.push(key);
    }
    if labels.len() < 2 {
        return Err(Error::Data { path: path.into(), message: format!("need at least 2 rows, found {}", labels.len()) });
    }
    let columns = header[1..]
        .iter()
        .zip(roles)
        .zip(values)
        .filter(|((_, r), _)| *r != Role::Ignore)
        .map(|((name, role), values)| Column { name: name.clone(), role, values })
        .collect();
    Ok(Table { path: path.into(), date_column, labels, timestamps, columns })
}

impl Table {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn series(&self, col: &Column) -> Result<RawSeries> {
        Ok(RawSeries::new(col.name.clone(), col.values.clone(), self.timestamps.clone())?)
    }

    pub fn target(&self) -> &Column {
        self.columns.iter().find(|c| c.role == Role::Target).expect("schema guarantees one target")
    }

    /// Feature and price columns in file order, with the position of price.
    pub fn features(&self) -> (Vec<&Column>, usize) {
        let feats: Vec<&Column> = self.columns.iter().filter(|c| matches!(c.role, Role::Feature | Role::Price)).collect();
        let price = feats.iter().position(|c| c.role == Role::Price).expect("schema guarantees one price");
        (feats, price)
    }

    /// Write the table back out (ignored columns are not included).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut header = vec![self.date_column.clone()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (i, label) in self.labels.iter().enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
