//! Error metrics and result tables.

mod emit;
mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lights::LightMode;

pub use emit::{emit_report, parse_report_csv, render_csv, render_markdown, report_file_name, ReportFormat};
pub use metrics::{compute_metrics, MetricSet};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("input: {0}")]
    Input(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub period: String,
    pub light: LightMode,
    pub seq_len: Option<usize>,
    pub train: usize,
    pub test: usize,
    pub dims: usize,
    /// Column label and metrics, in display order.
    pub models: Vec<(String, MetricSet)>,
}

impl ResultRow {
    pub(crate) fn sort_key(&self) -> (&str, &str, LightMode, Option<usize>) {
        (&self.dataset, &self.period, self.light, self.seq_len)
    }
}
