use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Yearly,
    Quarterly,
}

impl Frequency {
    pub fn months_per_period(self) -> usize {
        match self {
            Frequency::Yearly => 12,
            Frequency::Quarterly => 3,
        }
    }
}

/// A year (`"2015"`) or a year-quarter (`"2015Q3"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    pub year: i32,
    pub quarter: Option<u8>,
}

impl Period {
    pub fn year(year: i32) -> Self {
        Self { year, quarter: None }
    }

    pub fn quarter(year: i32, q: u8) -> Self {
        assert!((1..=4).contains(&q), "quarter {q} out of range");
        Self { year, quarter: Some(q) }
    }

    pub fn frequency(&self) -> Frequency {
        if self.quarter.is_some() {
            Frequency::Quarterly
        } else {
            Frequency::Yearly
        }
    }

    /// The next period of the same frequency.
    pub fn succ(&self) -> Self {
        match self.quarter {
            None => Period::year(self.year + 1),
            Some(4) => Period::quarter(self.year + 1, 1),
            Some(q) => Period::quarter(self.year, q + 1),
        }
    }

    /// Calendar months covered, in order.
    pub fn months(&self) -> Vec<u8> {
        match self.quarter {
            None => (1..=12).collect(),
            Some(q) => (3 * q - 2..=3 * q).collect(),
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.quarter {
            None => write!(f, "{:04}", self.year),
            Some(q) => write!(f, "{:04}Q{q}", self.year),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid period {0:?}, expected YYYY or YYYYQn")]
pub struct PeriodParseError(pub String);

impl FromStr for Period {
    type Err = PeriodParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PeriodParseError(s.to_string());
        let (y, q) = match s.split_once(['Q', 'q']) {
            Some((y, q)) => (y, Some(q)),
            None => (s, None),
        };
        if y.len() != 4 || !y.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        match q {
            None => Ok(Period::year(year)),
            Some(q) => match q.parse::<u8>() {
                Ok(q @ 1..=4) if q.to_string().len() == 1 => Ok(Period::quarter(year, q)),
                _ => Err(bad()),
            },
        }
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
