//! Number formatting and CSV tables.

use std::path::Path;

use impact_game_core::{PricePath, StrategyArray};

use crate::error::CliError;

/// Significant digits of every printed float.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits. Non-finite values
/// pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal text of the rounded value.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    if r == 0.0 {
        "0".into()
    } else if (1e-6..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// A rectangular table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|x| fmt_num(*x))).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path.display().to_string(), e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| CliError::Output(format!("{}: bad number {s:?}: {e}", path.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Rows are trading times; columns `time`, then `a{i}_j{j}` per asset and agent.
pub fn strategy_table(times: &[f64], xi: &StrategyArray) -> Table {
    let mut header = vec!["time".to_string()];
    for i in 0..xi.assets() {
        for j in 0..xi.agents() {
            header.push(format!("a{i}_j{j}"));
        }
    }
    let rows = (0..xi.times())
        .map(|k| {
            let mut row = vec![times[k]];
            for i in 0..xi.assets() {
                for j in 0..xi.agents() {
                    row.push(xi.get(i, j, k));
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Inverse of [`strategy_table`].
pub fn strategies_from_table(table: &Table, assets: usize, agents: usize) -> Result<StrategyArray, CliError> {
    if table.header.len() != 1 + assets * agents {
        return Err(CliError::Output(format!(
            "strategy table has {} columns, expected {}",
            table.header.len(),
            1 + assets * agents
        )));
    }
    let mut xi = StrategyArray::zeros(assets, agents, table.rows.len());
    for (k, row) in table.rows.iter().enumerate() {
        for i in 0..assets {
            for j in 0..agents {
                xi.set(i, j, k, row[1 + i * agents + j]);
            }
        }
    }
    Ok(xi)
}

/// Columns `time`, then `unaffected_i`, `affected_i`, `drift_i` per asset.
pub fn price_table(path: &PricePath) -> Table {
    let m = path.unaffected.ncols();
    let mut header = vec!["time".to_string()];
    for name in ["unaffected", "affected", "drift"] {
        header.extend((0..m).map(|i| format!("{name}_{i}")));
    }
    let rows = path
        .times
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let mut row = vec![t];
            for src in [&path.unaffected, &path.affected, &path.drift] {
                row.extend((0..m).map(|i| src[(r, i)]));
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// JSON value with every float rounded for output.
pub fn rounded(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(v) => Value::Array(v.into_iter().map(rounded).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}
