//! Country × period indicator panels: loading, splitting, normalization,
//! sample construction and light-feature merging.
//!
//! Panel CSV layout:
//!
//! ```text
//! country,period,<indicator_1>,...,<indicator_n>,<target>
//! USA,2015,2.1,,0.4,2.9
//! ```
//!
//! An empty cell is a missing value. Periods are `YYYY` or `YYYYQn`.

mod merge;
mod normalize;
mod period;
mod samples;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lights::LightMode;

pub use merge::{light_column_names, merge_light_features};
pub use normalize::{fit_normalizer, NormScope, Normalizer};
pub use period::{Frequency, Period, PeriodParseError};
pub use samples::{
    make_regression_samples, make_window_samples, Channels, RegressionSample, Target, WindowSample, WindowSpec, ZVector,
};
pub use split::{split_by_time, SplitMode, SplitPolicy};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("validation: {0}")]
    Validation(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("column {0:?} has no present values in the fit scope")]
    AllMissing(String),
    #[error("no light data for {country} {period}: {detail}")]
    LightCoverage {
        country: String,
        period: Period,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    /// Indicator columns in order, light columns last.
    pub indicator_names: Vec<String>,
    pub target_name: String,
    pub frequency: Frequency,
    /// How many trailing indicator columns are merged light features.
    #[serde(default)]
    pub light_columns: usize,
    #[serde(default)]
    pub light_mode: LightMode,
}

impl PanelSchema {
    pub fn new(indicator_names: Vec<String>, target_name: impl Into<String>, frequency: Frequency) -> Self {
        Self {
            indicator_names,
            target_name: target_name.into(),
            frequency,
            light_columns: 0,
            light_mode: LightMode::None,
        }
    }

    pub fn n_indicators(&self) -> usize {
        self.indicator_names.len()
    }

    /// Indicator columns followed by the target.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.indicator_names
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.target_name.as_str()))
    }

    pub fn width(&self) -> usize {
        self.indicator_names.len() + 1
    }

    pub fn validate(&self) -> Result<(), PanelError> {
        let mut seen = HashSet::new();
        for name in self.columns() {
            if name.is_empty() || name == "country" || name == "period" {
                return Err(PanelError::Schema(format!("invalid column name {name:?}")));
            }
            if !seen.insert(name) {
                return Err(PanelError::Schema(format!("column {name:?} appears twice")));
            }
        }
        if self.light_columns > self.indicator_names.len() {
            return Err(PanelError::Schema("more light columns than indicators".into()));
        }
        Ok(())
    }

    /// Reads the schema from a CSV header; the last column is the target.
    pub fn from_header(header: &[&str], frequency: Frequency) -> Result<Self, PanelError> {
        if header.len() < 3 || header[0] != "country" || header[1] != "period" {
            return Err(PanelError::Schema(
                "header must be country,period,<indicators...>,<target>".into(),
            ));
        }
        let n = header.len();
        let schema = PanelSchema::new(
            header[2..n - 1].iter().map(|s| s.to_string()).collect(),
            header[n - 1],
            frequency,
        );
        schema.validate()?;
        Ok(schema)
    }

    /// Short stable hash of the schema, recorded next to checkpoints.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Values are stored flat as `[country][period][column]` with the target
/// as the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub schema: PanelSchema,
    pub countries: Vec<String>,
    pub periods: Vec<Period>,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl Panel {
    pub fn new(
        schema: PanelSchema,
        countries: Vec<String>,
        periods: Vec<Period>,
        values: Vec<f64>,
        present: Vec<bool>,
    ) -> Result<Self, PanelError> {
        schema.validate()?;
        let len = countries.len() * periods.len() * schema.width();
        if values.len() != len || present.len() != len {
            return Err(PanelError::Validation(format!(
                "expected {len} cells, got {} values and {} mask entries",
                values.len(),
                present.len()
            )));
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PanelError::Validation("periods must be strictly increasing".into()));
        }
        if let Some(p) = periods.iter().find(|p| p.frequency() != schema.frequency) {
            return Err(PanelError::Validation(format!(
                "period {p} does not match the schema frequency"
            )));
        }
        let unique: BTreeSet<&String> = countries.iter().collect();
        if unique.len() != countries.len() {
            return Err(PanelError::Validation("duplicate country".into()));
        }
        if values.iter().zip(&present).any(|(v, &p)| p && !v.is_finite()) {
            return Err(PanelError::Validation("non-finite present value".into()));
        }
        Ok(Self {
            schema,
            countries,
            periods,
            values,
            present,
        })
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    /// Feature dimensionality of a regression sample.
    pub fn dims(&self) -> usize {
        self.schema.n_indicators()
    }

    pub fn target_col(&self) -> usize {
        self.width() - 1
    }

    fn offset(&self, c: usize, p: usize) -> usize {
        (c * self.periods.len() + p) * self.width()
    }

    pub fn get(&self, c: usize, p: usize, col: usize) -> Option<f64> {
        let i = self.offset(c, p) + col;
        self.present[i].then_some(self.values[i])
    }

    /// The row of values and the row of presence flags.
    pub fn row(&self, c: usize, p: usize) -> (&[f64], &[bool]) {
        let o = self.offset(c, p);
        (&self.values[o..o + self.width()], &self.present[o..o + self.width()])
    }

    pub fn set(&mut self, c: usize, p: usize, col: usize, value: Option<f64>) {
        let i = self.offset(c, p) + col;
        self.values[i] = value.unwrap_or(0.0);
        self.present[i] = value.is_some();
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }

    /// The panel restricted to the periods for which `keep` holds.
    pub fn select_periods(&self, keep: impl Fn(&Period) -> bool) -> Panel {
        let idx: Vec<usize> = (0..self.periods.len()).filter(|&p| keep(&self.periods[p])).collect();
        let mut values = Vec::with_capacity(self.countries.len() * idx.len() * self.width());
        let mut present = Vec::with_capacity(values.capacity());
        for c in 0..self.countries.len() {
            for &p in &idx {
                let (v, m) = self.row(c, p);
                values.extend_from_slice(v);
                present.extend_from_slice(m);
            }
        }
        Panel {
            schema: self.schema.clone(),
            countries: self.countries.clone(),
            periods: idx.iter().map(|&p| self.periods[p]).collect(),
            values,
            present,
        }
    }

    pub(crate) fn column_values(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.width();
        self.values
            .iter()
            .zip(&self.present)
            .skip(col)
            .step_by(w)
            .filter(|(_, &p)| p)
            .map(|(&v, _)| v)
    }

    pub(crate) fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Panel {
        let w = self.width();
        let values = self
            .values
            .iter()
            .zip(&self.present)
            .enumerate()
            .map(|(i, (&v, &p))| if p { f(i % w, v) } else { v })
            .collect();
        Panel { values, ..self.clone() }
    }

    pub fn present_cells(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    /// Writes the panel back in the CSV layout it was loaded from.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), PanelError> {
        let io = |e: csv::Error| PanelError::Validation(format!("csv write: {e}"));
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["country", "period"];
        header.extend(self.schema.columns());
        out.write_record(&header).map_err(io)?;
        for (c, country) in self.countries.iter().enumerate() {
            for (p, period) in self.periods.iter().enumerate() {
                let (v, m) = self.row(c, p);
                if !m.iter().any(|&x| x) {
                    continue;
                }
                let mut rec = vec![country.clone(), period.to_string()];
                rec.extend(
                    v.iter()
                        .zip(m)
                        .map(|(x, &pr)| if pr { format!("{x:?}") } else { String::new() }),
                );
                out.write_record(&rec).map_err(io)?;
            }
        }
        out.flush()
            .map_err(|e| PanelError::Validation(format!("csv write: {e}")))?;
        Ok(())
    }
}

fn read_panel<R: std::io::Read>(reader: R, schema: Option<PanelSchema>) -> Result<Panel, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| PanelError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    if header_refs.len() < 3 || header_refs[0] != "country" || header_refs[1] != "period" {
        return Err(PanelError::Schema("header must start with country,period".into()));
    }

    let mut rows: BTreeMap<(String, Period), (u64, csv::StringRecord)> = BTreeMap::new();
    let mut frequency = schema.as_ref().map(|s| s.frequency);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PanelError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let country = rec.get(0).unwrap_or("").to_string();
        if country.is_empty() {
            return Err(PanelError::Parse {
                line,
                msg: "empty country code".into(),
            });
        }
        let period: Period = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e: PeriodParseError| PanelError::Parse {
                line,
                msg: e.to_string(),
            })?;
        match frequency {
            Some(f) if f != period.frequency() => {
                return Err(PanelError::Parse {
                    line,
                    msg: format!("period {period} does not match the {f:?} frequency"),
                })
            }
            None => frequency = Some(period.frequency()),
            _ => {}
        }
        if let Some((first, _)) = rows.get(&(country.clone(), period)) {
            return Err(PanelError::Validation(format!(
                "duplicate row ({country}, {period}) on lines {first} and {line}"
            )));
        }
        rows.insert((country, period), (line, rec));
    }
    let frequency = frequency.ok_or_else(|| PanelError::Validation("panel has no rows".into()))?;

    let schema = match schema {
        Some(s) => s,
        None => PanelSchema::from_header(&header_refs, frequency)?,
    };
    schema.validate()?;
    let mut col_of = vec![usize::MAX; header.len()];
    let mut found = vec![false; schema.width()];
    for (h, name) in header.iter().enumerate().skip(2) {
        match schema.columns().position(|c| c == name) {
            Some(col) if !found[col] => {
                col_of[h] = col;
                found[col] = true;
            }
            Some(_) => return Err(PanelError::Schema(format!("column {name:?} appears twice"))),
            None => return Err(PanelError::Schema(format!("unknown column {name:?}"))),
        }
    }
    if let Some(missing) = schema.columns().zip(&found).find(|(_, &f)| !f) {
        return Err(PanelError::Schema(format!("missing column {:?}", missing.0)));
    }

    let countries: Vec<String> = rows
        .keys()
        .map(|k| k.0.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let periods: Vec<Period> = rows.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    let w = schema.width();
    let mut values = vec![0.0; countries.len() * periods.len() * w];
    let mut present = vec![false; values.len()];
    for ((country, period), (line, rec)) in &rows {
        if rec.len() != header.len() {
            return Err(PanelError::Parse {
                line: *line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let c = countries.binary_search(country).expect("collected above");
        let p = periods.binary_search(period).expect("collected above");
        let base = (c * periods.len() + p) * w;
        for (h, cell) in rec.iter().enumerate().skip(2) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| PanelError::Parse {
                line: *line,
                msg: format!("column {:?}: {cell:?} is not a number", header[h]),
            })?;
            if !v.is_finite() {
                return Err(PanelError::Parse {
                    line: *line,
                    msg: format!("column {:?}: non-finite value", header[h]),
                });
            }
            values[base + col_of[h]] = v;
            present[base + col_of[h]] = true;
        }
    }
    Panel::new(schema, countries, periods, values, present)
}

/// Loads a panel CSV against a known schema. Columns may appear in any
/// order but must match the schema exactly.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<Panel, PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_panel(std::io::BufReader::new(file), Some(schema.clone()))
}

/// Loads a panel CSV, taking the schema from its header (last column is the
/// target) and the frequency from its period keys.
pub fn load_panel_inferred(path: impl AsRef<Path>) -> Result<Panel, PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_panel(std::io::BufReader::new(file), None)
}

pub fn parse_panel(text: &str, schema: Option<&PanelSchema>) -> Result<Panel, PanelError> {
    read_panel(text.as_bytes(), schema.cloned())
}
