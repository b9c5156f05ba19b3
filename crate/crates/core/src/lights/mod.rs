//! Night-time light features: raster and mask files, zonal statistics,
//! monthly series and their aggregation to panel periods.

pub mod raster;
pub mod series;
pub mod zonal;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::Frequency;

pub use raster::{load_mask, load_raster, BrightnessGrid, CountryMask};
pub use series::{
    lights_from_dirs, load_light_csv, period_features, read_light_csv, write_light_csv, LightRecord, LightSeries,
    LightTable,
};
pub use zonal::{zonal_stats, ZonalStats};

#[derive(Debug, Error)]
pub enum LightsError {
    #[error("{0}: {1}")]
    Path(String, #[source] std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("mask for {0} selects no cells")]
    EmptyMask(String),
    #[error("no light record for {country} {year}-{month:02}")]
    MissingMonth { country: String, year: i32, month: u8 },
    #[error("{0}: {1}")]
    At(String, Box<LightsError>),
}

impl LightsError {
    pub(crate) fn at(self, path: &Path) -> Self {
        match self {
            e @ (LightsError::Path(..) | LightsError::At(..)) => e,
            e => LightsError::At(path.display().to_string(), Box::new(e)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightMode {
    #[default]
    None,
    SumMeanStd,
    Mean,
    EveryMonthMean,
}

impl LightMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(LightMode::None),
            "sum_mean_std" => Some(LightMode::SumMeanStd),
            "mean" => Some(LightMode::Mean),
            "every_month_mean" => Some(LightMode::EveryMonthMean),
            _ => None,
        }
    }

    /// Columns this mode appends to a panel.
    pub fn extra_dims(self, frequency: Frequency) -> usize {
        match self {
            LightMode::None => 0,
            LightMode::SumMeanStd => 3,
            LightMode::Mean => 1,
            LightMode::EveryMonthMean => frequency.months_per_period(),
        }
    }

    /// Label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            LightMode::None => "none",
            LightMode::SumMeanStd => "sum, mean, std",
            LightMode::Mean => "mean",
            LightMode::EveryMonthMean => "every month mean",
        }
    }
}
