use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{MetricSet, ReportError, ResultRow};
use crate::lights::LightMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }
}

fn sorted(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut v: Vec<&ResultRow> = rows.iter().collect();
    v.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    v
}

fn model_columns(rows: &[&ResultRow]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in rows {
        for (name, _) in &r.models {
            if !cols.contains(name) {
                cols.push(name.clone());
            }
        }
    }
    cols
}

pub fn render_markdown(rows: &[ResultRow]) -> String {
    let rows = sorted(rows);
    let models = model_columns(&rows);
    let with_seq = rows.iter().any(|r| r.seq_len.is_some());

    let mut head = vec!["Dataset", "Period", "Light"];
    if with_seq {
        head.push("Seq Length");
    }
    head.extend(["Train: Test", "Dims"]);
    let mut header: Vec<String> = head.iter().map(|s| s.to_string()).collect();
    for m in &models {
        for metric in ["MAE", "MSE", "RMSE"] {
            header.push(format!("{m} {metric}"));
        }
    }
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in &rows {
        let mut cells = vec![r.dataset.clone(), r.period.clone(), r.light.label().to_string()];
        if with_seq {
            cells.push(r.seq_len.map_or("-".into(), |s| s.to_string()));
        }
        cells.push(format!("{}: {}", r.train, r.test));
        cells.push(r.dims.to_string());
        for m in &models {
            match r.models.iter().find(|(n, _)| n == m) {
                Some((_, s)) => cells.extend([s.mae, s.mse, s.rmse].map(|v| format!("{v:.4}"))),
                None => cells.extend(["-".to_string(), "-".to_string(), "-".to_string()]),
            }
        }
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    if models.iter().any(|m| m.starts_with("PatchTST")) {
        out.push_str("\nPatchTST columns: inputs are min-max scaled only; no instance normalization is applied.\n");
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvLine {
    dataset: String,
    period: String,
    light: LightMode,
    seq_len: Option<usize>,
    train: usize,
    test: usize,
    dims: usize,
    model: String,
    n: usize,
    mae: String,
    mse: String,
    rmse: String,
    mae_full: f64,
    mse_full: f64,
    rmse_full: f64,
}

/// Long format: one line per (row, model). The `*_full` columns carry
/// shortest round-trip decimals, so parsing them back is exact.
pub fn render_csv(rows: &[ResultRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in sorted(rows) {
        for (model, m) in &r.models {
            w.serialize(CsvLine {
                dataset: r.dataset.clone(),
                period: r.period.clone(),
                light: r.light,
                seq_len: r.seq_len,
                train: r.train,
                test: r.test,
                dims: r.dims,
                model: model.clone(),
                n: m.n,
                mae: format!("{:.4}", m.mae),
                mse: format!("{:.4}", m.mse),
                rmse: format!("{:.4}", m.rmse),
                mae_full: m.mae,
                mse_full: m.mse,
                rmse_full: m.rmse,
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ResultRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<ResultRow> = Vec::new();
    for line in rdr.deserialize() {
        let l: CsvLine = line?;
        let metrics = MetricSet {
            mae: l.mae_full,
            mse: l.mse_full,
            rmse: l.rmse_full,
            n: l.n,
        };
        match rows.last_mut() {
            Some(r)
                if (r.dataset.as_str(), r.period.as_str(), r.light, r.seq_len)
                    == (l.dataset.as_str(), l.period.as_str(), l.light, l.seq_len) =>
            {
                r.models.push((l.model, metrics))
            }
            _ => rows.push(ResultRow {
                dataset: l.dataset,
                period: l.period,
                light: l.light,
                seq_len: l.seq_len,
                train: l.train,
                test: l.test,
                dims: l.dims,
                models: vec![(l.model, metrics)],
            }),
        }
    }
    Ok(rows)
}

/// `report-<hash>.<ext>`, with a Unix timestamp inserted when requested.
pub fn report_file_name(config_hash: &str, format: ReportFormat, timestamp: bool) -> String {
    if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        format!("report-{config_hash}-{secs}.{}", format.extension())
    } else {
        format!("report-{config_hash}.{}", format.extension())
    }
}

pub fn emit_report(
    rows: &[ResultRow],
    format: ReportFormat,
    dir: &Path,
    config_hash: &str,
    timestamp: bool,
) -> Result<PathBuf, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Input("no result rows".into()));
    }
    let text = match format {
        ReportFormat::Markdown => render_markdown(rows),
        ReportFormat::Csv => render_csv(rows)?,
    };
    std::fs::create_dir_all(dir).map_err(|e| ReportError::Io(dir.display().to_string(), e))?;
    let path = dir.join(report_file_name(config_hash, format, timestamp));
    std::fs::write(&path, text).map_err(|e| ReportError::Io(path.display().to_string(), e))?;
    Ok(path)
}
