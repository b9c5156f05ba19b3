use serde::{Deserialize, Serialize};

use super::{Panel, PanelError};

/// Minimum number of training periods left after the test span.
pub const MIN_TRAIN_PERIODS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    LastYear,
    LastTwoYears,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub mode: SplitMode,
    pub derived_from_period_range: bool,
}

impl SplitPolicy {
    /// The `13-19` range holds out its last year; every other range holds
    /// out its last two years.
    pub fn from_period_label(label: &str) -> Self {
        let mode = if label.trim() == "13-19" {
            SplitMode::LastYear
        } else {
            SplitMode::LastTwoYears
        };
        Self {
            mode,
            derived_from_period_range: true,
        }
    }

    pub fn explicit(mode: SplitMode) -> Self {
        Self {
            mode,
            derived_from_period_range: false,
        }
    }
}

/// Splits on calendar years: the test span is the final one or two years of
/// periods, the train span everything before.
pub fn split_by_time(panel: &Panel, policy: SplitPolicy) -> Result<(Panel, Panel), PanelError> {
    let last = panel
        .periods
        .last()
        .ok_or_else(|| PanelError::InsufficientHistory("panel has no periods".into()))?
        .year;
    let first_test_year = match policy.mode {
        SplitMode::LastYear => last,
        SplitMode::LastTwoYears => last - 1,
    };
    let n_train = panel.periods.iter().filter(|p| p.year < first_test_year).count();
    if n_train < MIN_TRAIN_PERIODS {
        return Err(PanelError::InsufficientHistory(format!(
            "{n_train} training periods before {first_test_year}, need {MIN_TRAIN_PERIODS}"
        )));
    }
    Ok((
        panel.select_periods(|p| p.year < first_test_year),
        panel.select_periods(|p| p.year >= first_test_year),
    ))
}
