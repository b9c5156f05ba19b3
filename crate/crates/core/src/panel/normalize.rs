use serde::{Deserialize, Serialize};

use super::{Panel, PanelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScope {
    #[default]
    TrainAndTest,
    TrainOnly,
}

/// Per-column min-max scaling. A constant column maps to 0.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub scope: NormScope,
}

pub fn fit_normalizer(train: &Panel, test: &Panel, scope: NormScope) -> Result<Normalizer, PanelError> {
    if train.schema != test.schema {
        return Err(PanelError::Schema("train and test schemas differ".into()));
    }
    let mut min = Vec::with_capacity(train.width());
    let mut max = Vec::with_capacity(train.width());
    let columns: Vec<String> = train.schema.columns().map(str::to_string).collect();
    for (col, name) in columns.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let test_values = match scope {
            NormScope::TrainAndTest => Some(test.column_values(col)),
            NormScope::TrainOnly => None,
        };
        for v in train.column_values(col).chain(test_values.into_iter().flatten()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Err(PanelError::AllMissing(name.clone()));
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(Normalizer {
        columns,
        min,
        max,
        scope,
    })
}

impl Normalizer {
    pub fn is_degenerate(&self, col: usize) -> bool {
        self.max[col] == self.min[col]
    }

    pub fn transform(&self, col: usize, v: f64) -> f64 {
        if self.is_degenerate(col) {
            0.0
        } else {
            (v - self.min[col]) / (self.max[col] - self.min[col])
        }
    }

    /// Inverse scaling; a degenerate column maps back to its constant.
    pub fn inverse(&self, col: usize, v: f64) -> f64 {
        if self.is_degenerate(col) {
            self.min[col]
        } else {
            v * (self.max[col] - self.min[col]) + self.min[col]
        }
    }

    pub fn target_col(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn apply(&self, panel: &Panel) -> Result<Panel, PanelError> {
        if !panel.schema.columns().eq(self.columns.iter().map(String::as_str)) {
            return Err(PanelError::Schema("normalizer was fit on different columns".into()));
        }
        Ok(panel.map_columns(|col, v| self.transform(col, v)))
    }
}
