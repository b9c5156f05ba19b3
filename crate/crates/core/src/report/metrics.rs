use serde::{Deserialize, Serialize};

use super::ReportError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub n: usize,
}

pub fn compute_metrics(preds: &[f64], targets: &[f64]) -> Result<MetricSet, ReportError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(ReportError::Input(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = preds.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
    }
    let mse = sq / n;
    Ok(MetricSet {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        n: preds.len(),
    })
}
