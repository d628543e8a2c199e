//! Result tables and their CSV form.

use std::fmt::Write;

/// One completion-error measurement: a method's mean reconstruction error
/// (scaled by 1000, the conventional reporting scale) after glimpse `t`,
/// and how much of the single-glimpse baseline's error it removed.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRow {
    pub method: String,
    pub t: usize,
    pub mse_x1000: f64,
    /// `100 * (mse_1view - mse) / mse_1view` at the same `t`.
    pub improvement_pct: f64,
}

/// One recognition measurement: a driver's classification accuracy after
/// glimpse `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferRow {
    pub method: String,
    pub t: usize,
    pub accuracy: f64,
}

/// A finished result table, either flavour.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricTable {
    Completion(Vec<CompletionRow>),
    Transfer(Vec<TransferRow>),
}

impl MetricTable {
    /// Renders the table as CSV: a fixed header, values with 4 decimals,
    /// rows sorted by (method, t).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            MetricTable::Completion(rows) => {
                out.push_str("method,t,mse_x1000,improvement_pct\n");
                let mut rows = rows.clone();
                rows.sort_by(|a, b| (a.method.as_str(), a.t).cmp(&(b.method.as_str(), b.t)));
                for row in &rows {
                    writeln!(
                        out,
                        "{},{},{:.4},{:.4}",
                        row.method, row.t, row.mse_x1000, row.improvement_pct
                    )
                    .expect("writing to a String cannot fail");
                }
            }
            MetricTable::Transfer(rows) => {
                out.push_str("method,t,accuracy\n");
                let mut rows = rows.clone();
                rows.sort_by(|a, b| (a.method.as_str(), a.t).cmp(&(b.method.as_str(), b.t)));
                for row in &rows {
                    writeln!(out, "{},{},{:.4}", row.method, row.t, row.accuracy)
                        .expect("writing to a String cannot fail");
                }
            }
        }
        out
    }
}
