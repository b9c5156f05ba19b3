use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{load_mask, load_raster, CountryMask};
use super::zonal::{zonal_stats, ZonalStats};
use super::{LightMode, LightsError};
use crate::panel::Period;

pub const RASTER_EXT: &str = "nlr";
pub const MASK_EXT: &str = "nlm";

/// One row of the light CSV: `country,year,month,sum,mean,std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRecord {
    pub country: String,
    pub year: i32,
    pub month: u8,
    pub sum: f64,
    pub mean: f64,
    pub std: f64,
}

/// Monthly statistics of one country keyed by (year, month).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LightSeries {
    pub months: BTreeMap<(i32, u8), ZonalStats>,
}

/// Light series for every country.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LightTable {
    pub series: BTreeMap<String, LightSeries>,
}

impl LightTable {
    pub fn from_records(records: &[LightRecord]) -> Result<Self, LightsError> {
        let mut t = LightTable::default();
        for r in records {
            if !(1..=12).contains(&r.month) {
                return Err(LightsError::Format(format!(
                    "{} {}: month {} out of range",
                    r.country, r.year, r.month
                )));
            }
            if ![r.sum, r.mean, r.std].iter().all(|v| v.is_finite()) {
                return Err(LightsError::Format(format!(
                    "{} {}-{:02}: non-finite statistic",
                    r.country, r.year, r.month
                )));
            }
            let stats = ZonalStats {
                sum: r.sum,
                mean: r.mean,
                std: r.std,
            };
            let prev = t
                .series
                .entry(r.country.clone())
                .or_default()
                .months
                .insert((r.year, r.month), stats);
            if prev.is_some() {
                return Err(LightsError::Format(format!(
                    "duplicate light record {} {}-{:02}",
                    r.country, r.year, r.month
                )));
            }
        }
        Ok(t)
    }

    pub fn records(&self) -> Vec<LightRecord> {
        self.series
            .iter()
            .flat_map(|(country, s)| {
                s.months.iter().map(move |(&(year, month), z)| LightRecord {
                    country: country.clone(),
                    year,
                    month,
                    sum: z.sum,
                    mean: z.mean,
                    std: z.std,
                })
            })
            .collect()
    }
}

pub fn read_light_csv(r: impl std::io::Read) -> Result<LightTable, LightsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["country", "year", "month", "sum", "mean", "std"] {
        return Err(LightsError::Format(format!(
            "light CSV header must be country,year,month,sum,mean,std, found {}",
            header.join(",")
        )));
    }
    let records = rdr.deserialize().collect::<Result<Vec<LightRecord>, _>>()?;
    LightTable::from_records(&records)
}

pub fn load_light_csv(path: impl AsRef<Path>) -> Result<LightTable, LightsError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| LightsError::Path(path.display().to_string(), e))?;
    read_light_csv(std::io::BufReader::new(f)).map_err(|e| e.at(path))
}

pub fn write_light_csv(w: impl std::io::Write, records: &[LightRecord]) -> Result<(), LightsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Features of one (country, period): averages of the monthly statistics,
/// or every month's mean in calendar order.
pub fn period_features(
    table: &LightTable,
    country: &str,
    period: Period,
    mode: LightMode,
) -> Result<Vec<f64>, LightsError> {
    if mode == LightMode::None {
        return Ok(Vec::new());
    }
    let missing = |month: u8| LightsError::MissingMonth {
        country: country.to_string(),
        year: period.year,
        month,
    };
    let months = period.months();
    let series = table.series.get(country).ok_or_else(|| missing(months[0]))?;
    let stats: Vec<&ZonalStats> = months
        .iter()
        .map(|&m| series.months.get(&(period.year, m)).ok_or_else(|| missing(m)))
        .collect::<Result<_, _>>()?;
    let k = stats.len() as f64;
    let avg = |f: fn(&ZonalStats) -> f64| stats.iter().map(|s| f(s)).sum::<f64>() / k;
    Ok(match mode {
        LightMode::None => unreachable!(),
        LightMode::SumMeanStd => vec![avg(|s| s.sum), avg(|s| s.mean), avg(|s| s.std)],
        LightMode::Mean => vec![avg(|s| s.mean)],
        LightMode::EveryMonthMean => stats.iter().map(|s| s.mean).collect(),
    })
}

fn parse_year_month(stem: &str) -> Option<(i32, u8)> {
    let (y, m) = stem.split_once('-')?;
    if y.len() != 4 || m.len() != 2 {
        return None;
    }
    let month: u8 = m.parse().ok()?;
    (1..=12).contains(&month).then_some((y.parse().ok()?, month))
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, LightsError> {
    let entries = std::fs::read_dir(dir).map_err(|e| LightsError::Path(dir.display().to_string(), e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.extension().and_then(|x| x.to_str()) == Some(ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Zonal statistics of every `YYYY-MM.nlr` raster in `raster_dir` for every
/// `<COUNTRY>.nlm` mask in `mask_dir`, sorted by country, year, month.
pub fn lights_from_dirs(raster_dir: &Path, mask_dir: &Path) -> Result<Vec<LightRecord>, LightsError> {
    let rasters = files_with_ext(raster_dir, RASTER_EXT)?;
    if rasters.is_empty() {
        return Err(LightsError::Format(format!(
            "no .{RASTER_EXT} rasters in {}",
            raster_dir.display()
        )));
    }
    let masks: Vec<CountryMask> = files_with_ext(mask_dir, MASK_EXT)?
        .iter()
        .map(load_mask)
        .collect::<Result<_, _>>()?;
    if masks.is_empty() {
        return Err(LightsError::Format(format!(
            "no .{MASK_EXT} masks in {}",
            mask_dir.display()
        )));
    }
    let per_raster: Vec<Vec<LightRecord>> = rasters
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let (year, month) = parse_year_month(stem).ok_or_else(|| {
                LightsError::Format(format!("{}: raster name must be YYYY-MM.{RASTER_EXT}", path.display()))
            })?;
            let grid = load_raster(path)?;
            masks
                .iter()
                .map(|m| {
                    let z = zonal_stats(&grid, m).map_err(|e| e.at(path))?;
                    Ok(LightRecord {
                        country: m.country.clone(),
                        year,
                        month,
                        sum: z.sum,
                        mean: z.mean,
                        std: z.std,
                    })
                })
                .collect()
        })
        .collect::<Result<_, LightsError>>()?;
    let mut records: Vec<LightRecord> = per_raster.into_iter().flatten().collect();
    records.sort_by(|a, b| (&a.country, a.year, a.month).cmp(&(&b.country, b.year, b.month)));
    if records
        .windows(2)
        .any(|w| (&w[0].country, w[0].year, w[0].month) == (&w[1].country, w[1].year, w[1].month))
    {
        return Err(LightsError::Format("two rasters map to the same month".into()));
    }
    Ok(records)
}
