//! Seeded synthetic panels and night-light rasters for fixtures, demos and
//! end-to-end tests.
//!
//! Indicators follow independent AR(1) processes. GDP growth is an AR(1)
//! term plus a fixed linear mix of same-period indicators plus noise.
//! Each country owns a rectangular block of the raster grid whose
//! brightness tracks that country's GDP growth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::lights::{BrightnessGrid, CountryMask};
use crate::panel::{Frequency, Panel, PanelError, PanelSchema, Period};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub countries: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub frequency: Frequency,
    pub indicators: usize,
    /// Probability that an indicator cell is missing.
    pub missing_rate: f64,
    pub seed: u64,
}

/// `AAA`, `AAB`, ... in sorted order.
pub fn country_codes(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let l = |k: usize| (b'A' + (k % 26) as u8) as char;
            format!("{}{}{}", l(i / 676), l(i / 26), l(i))
        })
        .collect()
}

pub fn indicator_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("ind{i:02}")).collect()
}

pub fn periods(spec: &SynthSpec) -> Vec<Period> {
    (spec.first_year..=spec.last_year)
        .flat_map(|y| match spec.frequency {
            Frequency::Yearly => vec![Period::year(y)],
            Frequency::Quarterly => (1..=4).map(|q| Period::quarter(y, q)).collect(),
        })
        .collect()
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn synthetic_panel(spec: &SynthSpec) -> Result<Panel, PanelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.indicators;
    let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.6..0.6)).collect();
    let countries = country_codes(spec.countries);
    let periods = periods(spec);
    let w = n + 1;
    let mut values = Vec::with_capacity(countries.len() * periods.len() * w);
    let mut present = Vec::with_capacity(values.capacity());
    for _ in &countries {
        let level = rng.gen_range(1.0..4.0);
        let mut x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let mut g = level;
        for _ in &periods {
            for xi in x.iter_mut() {
                *xi = 0.6 * *xi + 0.8 * normal(&mut rng);
            }
            let mix: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
            g = level + 0.4 * (g - level) + mix + 0.3 * normal(&mut rng);
            for &xi in &x {
                let keep = rng.gen::<f64>() >= spec.missing_rate;
                values.push(if keep { xi } else { 0.0 });
                present.push(keep);
            }
            values.push(g);
            present.push(true);
        }
    }
    let schema = PanelSchema::new(indicator_names(n), "gdp_growth", spec.frequency);
    Panel::new(schema, countries, periods, values, present)
}

/// Grid layout: countries tile a `cols x rows` block layout of `block x block`
/// cells, leaving a one-cell dark border column on the right.
#[derive(Debug, Clone, Copy)]
pub struct RasterLayout {
    pub block: usize,
    pub cols: usize,
    pub rows: usize,
}

impl RasterLayout {
    pub fn for_countries(n: usize, block: usize) -> Self {
        let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
        Self {
            block,
            cols,
            rows: n.div_ceil(cols),
        }
    }

    pub fn width(&self) -> usize {
        self.cols * self.block + 1
    }

    pub fn height(&self) -> usize {
        self.rows * self.block
    }

    fn owner(&self, x: usize, y: usize) -> Option<usize> {
        if x >= self.cols * self.block {
            return None;
        }
        Some((y / self.block) * self.cols + x / self.block)
    }
}

pub fn synthetic_masks(
    countries: &[String],
    layout: RasterLayout,
) -> Result<Vec<CountryMask>, crate::lights::LightsError> {
    let (w, h) = (layout.width(), layout.height());
    countries
        .iter()
        .enumerate()
        .map(|(i, code)| {
            let cells = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .map(|(x, y)| layout.owner(x, y) == Some(i))
                .collect();
            CountryMask::new(code.clone(), w, h, cells)
        })
        .collect()
}

/// A raster keyed by `(year, month)`.
pub type MonthlyRaster = ((i32, u8), BrightnessGrid);

/// One raster per calendar month covered by `panel`, keyed `(year, month)`.
/// Brightness in a country's block is `5 + 0.5 * gdp + noise`, floored at 0.
pub fn synthetic_rasters(
    panel: &Panel,
    layout: RasterLayout,
    seed: u64,
) -> Result<Vec<MonthlyRaster>, crate::lights::LightsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (layout.width(), layout.height());
    let t = panel.target_col();
    let mut out = Vec::new();
    for (p, period) in panel.periods.iter().enumerate() {
        for month in period.months() {
            let base: Vec<f64> = (0..panel.countries.len())
                .map(|c| 5.0 + 0.5 * panel.get(c, p, t).unwrap_or(0.0))
                .collect();
            let mut values = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let v = match layout.owner(x, y) {
                        Some(c) if c < base.len() => (base[c] + 0.2 * normal(&mut rng)).max(0.0),
                        _ => 0.0,
                    };
                    values.push(v as f32);
                }
            }
            out.push(((period.year, month), BrightnessGrid::new(w, h, values)?));
        }
    }
    Ok(out)
}
