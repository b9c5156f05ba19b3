use serde::{Deserialize, Serialize};

use super::{Panel, Period};
use crate::lights::LightMode;

/// `(x_1, ..., x_n, y)` for one country and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZVector {
    pub indicators: Vec<f64>,
    pub gdp: f64,
}

impl ZVector {
    pub fn from_slice(z: &[f64]) -> Self {
        let (gdp, indicators) = z.split_last().expect("non-empty z vector");
        Self {
            indicators: indicators.to_vec(),
            gdp: *gdp,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.indicators.clone();
        v.push(self.gdp);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub country: String,
    pub period: Period,
    pub x: Vec<f64>,
    pub y: f64,
}

/// One sample per (country, period) with the target and every indicator
/// present, ordered by country then period.
pub fn make_regression_samples(panel: &Panel) -> Vec<RegressionSample> {
    let t = panel.target_col();
    let mut out = Vec::new();
    for (c, country) in panel.countries.iter().enumerate() {
        for (p, period) in panel.periods.iter().enumerate() {
            let (v, m) = panel.row(c, p);
            if m.iter().all(|&x| x) {
                out.push(RegressionSample {
                    country: country.clone(),
                    period: *period,
                    x: v[..t].to_vec(),
                    y: v[t],
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channels {
    /// Past GDP growth (plus any light columns) predicting the next GDP value.
    GdpOnly,
    /// Past z vectors predicting the next z vector.
    MultiIndicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub h: usize,
    pub channels: Channels,
    pub light_mode: LightMode,
}

impl WindowSpec {
    /// Width `d` of each window row for a panel with `n` base indicators.
    pub fn input_dim(&self, n: usize, frequency: super::Frequency) -> usize {
        let lights = self.light_mode.extra_dims(frequency);
        match self.channels {
            Channels::GdpOnly => 1 + lights,
            Channels::MultiIndicator => n + 1 + lights,
        }
    }

    /// Panel columns feeding each window row: light columns then GDP for
    /// `GdpOnly`, every column for `MultiIndicator`.
    pub fn columns(&self, panel: &Panel) -> Vec<usize> {
        let w = panel.width();
        match self.channels {
            Channels::GdpOnly => (w - 1 - panel.schema.light_columns..w).collect(),
            Channels::MultiIndicator => (0..w).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Scalar(f64),
    Z(ZVector),
}

impl Target {
    pub fn gdp(&self) -> f64 {
        match self {
            Target::Scalar(y) => *y,
            Target::Z(z) => z.gdp,
        }
    }

    /// Flat form with GDP last.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Target::Scalar(y) => vec![*y],
            Target::Z(z) => z.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub country: String,
    pub target_period: Period,
    /// `h` rows of width `d`, oldest first.
    pub inputs: Vec<Vec<f64>>,
    pub target: Target,
}

/// Sliding windows over maximal runs of consecutive periods where every
/// used column is present. A run of length `T` yields `T - h` samples.
pub fn make_window_samples(panel: &Panel, spec: &WindowSpec) -> Vec<WindowSample> {
    if spec.h == 0 {
        return Vec::new();
    }
    let cols = spec.columns(panel);
    let t = panel.target_col();
    let mut out = Vec::new();
    for (c, country) in panel.countries.iter().enumerate() {
        let mut run = 0usize;
        for p in 0..panel.periods.len() {
            let (_, m) = panel.row(c, p);
            let complete = cols.iter().all(|&k| m[k]);
            let contiguous = p > 0 && panel.periods[p - 1].succ() == panel.periods[p];
            run = match (complete, contiguous) {
                (false, _) => 0,
                (true, true) => run + 1,
                (true, false) => 1,
            };
            if run <= spec.h {
                continue;
            }
            let inputs = (p - spec.h..p)
                .map(|q| {
                    let (v, _) = panel.row(c, q);
                    cols.iter().map(|&k| v[k]).collect()
                })
                .collect();
            let (v, _) = panel.row(c, p);
            let target = match spec.channels {
                Channels::GdpOnly => Target::Scalar(v[t]),
                Channels::MultiIndicator => Target::Z(ZVector::from_slice(v)),
            };
            out.push(WindowSample {
                country: country.clone(),
                target_period: panel.periods[p],
                inputs,
                target,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{Frequency, PanelSchema};
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn gdp_panel(rows: Vec<(&str, Vec<Option<f64>>)>, periods: Vec<Period>) -> Panel {
        let freq = periods[0].frequency();
        let mut values = Vec::new();
        let mut present = Vec::new();
        let mut countries = Vec::new();
        for (name, ys) in rows {
            countries.push(name.to_string());
            for y in ys {
                values.extend([1.0, y.unwrap_or(0.0)]);
                present.extend([true, y.is_some()]);
            }
        }
        Panel::new(
            PanelSchema::new(vec!["a".into()], "gdp", freq),
            countries,
            periods,
            values,
            present,
        )
        .unwrap()
    }

    fn years(n: usize) -> Vec<Period> {
        (0..n).map(|i| Period::year(2000 + i as i32)).collect()
    }

    fn gdp_spec(h: usize) -> WindowSpec {
        WindowSpec {
            h,
            channels: Channels::GdpOnly,
            light_mode: LightMode::None,
        }
    }

    #[test]
    fn counts_per_run() {
        let full = gdp_panel(vec![("X", (0..10).map(|i| Some(i as f64)).collect())], years(10));
        let s = make_window_samples(&full, &gdp_spec(8));
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].inputs, (0..8).map(|i| vec![i as f64]).collect::<Vec<_>>());
        assert_eq!(s[0].target, Target::Scalar(8.0));

        let mut ys: Vec<Option<f64>> = (0..12).map(|i| Some(i as f64)).collect();
        ys[6] = None;
        let gap = gdp_panel(vec![("X", ys)], years(12));
        assert!(make_window_samples(&gap, &gdp_spec(8)).is_empty());

        let twelve = gdp_panel(vec![("X", (0..12).map(|i| Some(i as f64)).collect())], years(12));
        assert!(make_window_samples(&twelve, &gdp_spec(12)).is_empty());
    }

    #[test]
    fn missing_period_breaks_the_run() {
        let periods = vec![
            Period::year(2000),
            Period::year(2001),
            Period::year(2003),
            Period::year(2004),
        ];
        let p = gdp_panel(vec![("X", vec![Some(1.0); 4])], periods);
        assert_eq!(make_window_samples(&p, &gdp_spec(1)).len(), 2);
    }

    #[test]
    fn multi_indicator_targets_are_z_vectors() {
        let p = gdp_panel(vec![("X", (0..4).map(|i| Some(i as f64)).collect())], years(4));
        let spec = WindowSpec {
            h: 2,
            channels: Channels::MultiIndicator,
            light_mode: LightMode::None,
        };
        let s = make_window_samples(&p, &spec);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].inputs, vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(s[0].target.to_vec(), vec![1.0, 2.0]);
        assert_eq!(spec.input_dim(1, Frequency::Yearly), 2);
    }

    #[test]
    fn regression_samples_drop_masked_rows() {
        let mut ys: Vec<Option<f64>> = (0..5).map(|i| Some(i as f64)).collect();
        ys[2] = None;
        let p = gdp_panel(vec![("X", ys.clone()), ("Y", vec![Some(0.0); 5])], years(5));
        let s = make_regression_samples(&p);
        assert_eq!(s.len(), 9);
        assert!(s
            .windows(2)
            .all(|w| (&w[0].country, w[0].period) < (&w[1].country, w[1].period)));
    }

    /// Checks every (country, t) directly for presence of periods t-h..t.
    fn brute_force(panel: &Panel, h: usize) -> BTreeSet<(String, Period, Vec<u64>)> {
        let t = panel.target_col();
        let mut out = BTreeSet::new();
        for (c, country) in panel.countries.iter().enumerate() {
            for p in h..panel.periods.len() {
                let ok = (p - h..=p).all(|q| panel.get(c, q, t).is_some())
                    && (p - h..p).all(|q| panel.periods[q].succ() == panel.periods[q + 1]);
                if ok {
                    let window = (p - h..p).map(|q| panel.get(c, q, t).unwrap().to_bits()).collect();
                    out.insert((country.clone(), panel.periods[p], window));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn windowing_matches_brute_force(
            countries in 1usize..=5,
            n_periods in 1usize..=30,
            h in 1usize..10,
            mask_seed in prop::collection::vec(0u8..10, 150),
            gaps in prop::collection::vec(any::<bool>(), 30),
        ) {
            // Random missing cells (~20%) and random holes in the period axis.
            let mut periods = Vec::new();
            let mut year = 1980;
            for i in 0..n_periods {
                year += if gaps[i] && i % 3 == 0 { 2 } else { 1 };
                periods.push(Period::year(year));
            }
            let rows: Vec<(&str, Vec<Option<f64>>)> = ["A", "B", "C", "D", "E"][..countries]
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let ys = (0..n_periods)
                        .map(|p| (mask_seed[c * 30 + p] >= 2).then_some((c * 100 + p) as f64))
                        .collect();
                    (*name, ys)
                })
                .collect();
            let panel = gdp_panel(rows, periods);
            let got: BTreeSet<(String, Period, Vec<u64>)> = make_window_samples(&panel, &gdp_spec(h))
                .into_iter()
                .map(|s| (s.country, s.target_period, s.inputs.iter().map(|r| r[0].to_bits()).collect()))
                .collect();
            prop_assert_eq!(got, brute_force(&panel, h));
        }

        #[test]
        fn sample_order_is_deterministic(n in 3usize..12) {
            let p = gdp_panel(vec![("A", vec![Some(1.0); n]), ("B", vec![Some(2.0); n])], years(n));
            let a = make_window_samples(&p, &gdp_spec(2));
            prop_assert_eq!(&a, &make_window_samples(&p.clone(), &gdp_spec(2)));
            prop_assert!(a.windows(2).all(|w| (&w[0].country, w[0].target_period) < (&w[1].country, w[1].target_period)));
        }
    }
}
