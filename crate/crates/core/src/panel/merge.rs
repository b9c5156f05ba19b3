use super::{Frequency, Panel, PanelError};
use crate::lights::{period_features, LightMode, LightTable};

/// Names of the columns `mode` appends.
pub fn light_column_names(mode: LightMode, frequency: Frequency) -> Vec<String> {
    match mode {
        LightMode::None => Vec::new(),
        LightMode::SumMeanStd => vec!["light_sum".into(), "light_mean".into(), "light_std".into()],
        LightMode::Mean => vec!["light_mean".into()],
        LightMode::EveryMonthMean => (1..=frequency.months_per_period())
            .map(|m| format!("light_mean_m{m:02}"))
            .collect(),
    }
}

/// Appends light features as trailing indicator columns, ahead of the
/// target. Rows with no present value at all get missing light cells; every
/// other row must be covered by the light table.
pub fn merge_light_features(panel: &Panel, lights: &LightTable, mode: LightMode) -> Result<Panel, PanelError> {
    if mode == LightMode::None {
        return Ok(panel.clone());
    }
    if panel.schema.light_columns > 0 {
        return Err(PanelError::Schema("panel already has light columns".into()));
    }
    let names = light_column_names(mode, panel.schema.frequency);
    let k = names.len();
    let mut schema = panel.schema.clone();
    schema.indicator_names.extend(names);
    schema.light_columns = k;
    schema.light_mode = mode;
    schema.validate()?;

    let w = panel.width();
    let mut values = Vec::with_capacity(panel.countries.len() * panel.periods.len() * (w + k));
    let mut present = Vec::with_capacity(values.capacity());
    for (c, country) in panel.countries.iter().enumerate() {
        for (p, &period) in panel.periods.iter().enumerate() {
            let (v, m) = panel.row(c, p);
            values.extend_from_slice(&v[..w - 1]);
            present.extend_from_slice(&m[..w - 1]);
            if m.iter().any(|&x| x) {
                let f = period_features(lights, country, period, mode).map_err(|e| PanelError::LightCoverage {
                    country: country.clone(),
                    period,
                    detail: e.to_string(),
                })?;
                debug_assert_eq!(f.len(), k);
                values.extend(f);
                present.extend(std::iter::repeat_n(true, k));
            } else {
                values.extend(std::iter::repeat_n(0.0, k));
                present.extend(std::iter::repeat_n(false, k));
            }
            values.push(v[w - 1]);
            present.push(m[w - 1]);
        }
    }
    Panel::new(schema, panel.countries.clone(), panel.periods.clone(), values, present)
}

#[cfg(test)]
mod tests {
    use super::super::{PanelSchema, Period};
    use super::*;
    use crate::lights::LightRecord;

    fn panel(n: usize, periods: Vec<Period>) -> Panel {
        let freq = periods[0].frequency();
        let w = n + 1;
        let cells = periods.len() * w;
        Panel::new(
            PanelSchema::new((0..n).map(|i| format!("x{i}")).collect(), "gdp", freq),
            vec!["USA".into()],
            periods,
            (0..cells).map(|i| i as f64).collect(),
            vec![true; cells],
        )
        .unwrap()
    }

    fn lights(years: std::ops::RangeInclusive<i32>) -> LightTable {
        let recs: Vec<LightRecord> = years
            .flat_map(|y| {
                (1..=12).map(move |m| LightRecord {
                    country: "USA".into(),
                    year: y,
                    month: m,
                    sum: 100.0 + m as f64,
                    mean: m as f64,
                    std: 0.5,
                })
            })
            .collect();
        LightTable::from_records(&recs).unwrap()
    }

    #[test]
    fn dims_law_matches_the_reference_table() {
        let yearly = panel(13, (2013..=2019).map(Period::year).collect());
        let quarterly = panel(
            20,
            (2017..=2019)
                .flat_map(|y| (1..=4).map(move |q| Period::quarter(y, q)))
                .collect(),
        );
        let t = lights(2013..=2019);
        let modes = [
            LightMode::None,
            LightMode::SumMeanStd,
            LightMode::Mean,
            LightMode::EveryMonthMean,
        ];
        let dims = |p: &Panel| modes.map(|m| merge_light_features(p, &t, m).unwrap().dims());
        assert_eq!(dims(&yearly), [13, 16, 14, 25]);
        assert_eq!(dims(&quarterly), [20, 23, 21, 23]);
    }

    #[test]
    fn light_columns_sit_before_the_target() {
        let p = panel(2, vec![Period::year(2015), Period::year(2016)]);
        let m = merge_light_features(&p, &lights(2015..=2016), LightMode::Mean).unwrap();
        assert_eq!(m.schema.indicator_names, vec!["x0", "x1", "light_mean"]);
        assert_eq!(m.row(0, 0).0, &[0.0, 1.0, 6.5, 2.0]);
        assert_eq!(m.schema.light_columns, 1);
    }

    #[test]
    fn missing_coverage_names_country_and_period() {
        let p = panel(1, vec![Period::year(2015), Period::year(2016)]);
        match merge_light_features(&p, &lights(2015..=2015), LightMode::Mean) {
            Err(PanelError::LightCoverage { country, period, .. }) => {
                assert_eq!((country.as_str(), period), ("USA", Period::year(2016)))
            }
            other => panic!("{other:?}"),
        }
    }
}
