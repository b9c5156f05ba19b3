//! From files on disk to normalized train and test sample sets.

use std::collections::BTreeSet;

use super::config::{ExperimentConfig, Task};
use super::ExperimentError;
use crate::embeddings::{load_embeddings, observation_key, EmbeddingSet};
use crate::lights::{load_light_csv, LightMode};
use crate::models::{Family, RtToken};
use crate::nn::Tensor;
use crate::panel::{
    fit_normalizer, load_panel, load_panel_inferred, make_regression_samples, make_window_samples,
    merge_light_features, split_by_time, Channels, Normalizer, Panel, PanelSchema, Period, WindowSpec,
};

/// Samples in one of the model input layouts, all in normalized units.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub keys: Vec<(String, Period)>,
    /// Feature vector, or the window flattened row by row.
    pub flat: Vec<Vec<f64>>,
    /// `[h, d]` windows; empty for regression.
    pub seq: Vec<Tensor<f64>>,
    /// Indicator tokens; filled only for the RT family.
    pub tokens: Vec<Vec<RtToken<f64>>>,
    /// Targets with GDP growth last.
    pub targets: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn flat_dim(&self) -> usize {
        self.flat.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn gdp_targets(&self) -> Vec<f64> {
        self.targets
            .iter()
            .map(|t| *t.last().expect("non-empty target"))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    /// Panel with light columns merged, before scaling.
    pub panel: Panel,
    pub normalizer: Normalizer,
    pub train: SampleSet,
    pub test: SampleSet,
    /// Features per sample (regression) or per window row.
    pub dims: usize,
    pub embed_dim: Option<usize>,
}

fn load_base_panel(cfg: &ExperimentConfig) -> Result<Panel, ExperimentError> {
    let panel = load_panel_inferred(&cfg.dataset)?;
    let Some(target) = &cfg.target else { return Ok(panel) };
    if *target == panel.schema.target_name {
        return Ok(panel);
    }
    let mut names: Vec<String> = panel.schema.columns().map(str::to_string).collect();
    let pos = names
        .iter()
        .position(|n| n == target)
        .ok_or_else(|| ExperimentError::Config(format!("target column {target:?} not in the panel")))?;
    names.remove(pos);
    let schema = PanelSchema::new(names, target.clone(), panel.schema.frequency);
    Ok(load_panel(&cfg.dataset, &schema)?)
}

fn window_spec(cfg: &ExperimentConfig) -> WindowSpec {
    WindowSpec {
        h: cfg.seq_len.unwrap_or(0),
        channels: if cfg.task == Task::MultiIndicator {
            Channels::MultiIndicator
        } else {
            Channels::GdpOnly
        },
        light_mode: cfg.light_mode,
    }
}

fn tokens_for(
    panel: &Panel,
    emb: &EmbeddingSet,
    country: &str,
    period: Period,
    x: &[f64],
) -> Result<Vec<RtToken<f64>>, ExperimentError> {
    let key = observation_key(country, period);
    panel
        .schema
        .indicator_names
        .iter()
        .zip(x)
        .map(|(name, &value)| {
            Ok(RtToken {
                embedding: emb.lookup(name, Some(&key))?,
                value,
            })
        })
        .collect()
}

/// Loads, merges, splits, scales and windows the data described by `cfg`.
///
/// Scaling statistics come from the split panels. Windows are cut from the
/// whole scaled panel, so a test window may look back into training periods;
/// a sample is a test sample when its target period is a test period.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let mut panel = load_base_panel(cfg)?;
    if cfg.light_mode != LightMode::None {
        let path = cfg.lights.as_ref().expect("validated: lights path present");
        let table = load_light_csv(path)?;
        panel = merge_light_features(&panel, &table, cfg.light_mode)?;
    }
    let (train_p, test_p) = split_by_time(&panel, cfg.split)?;
    let normalizer = fit_normalizer(&train_p, &test_p, cfg.normalization)?;
    let embeddings = match (&cfg.embeddings, cfg.family) {
        (Some(path), Family::Rt) => Some(load_embeddings(path)?),
        _ => None,
    };

    let mut train = SampleSet::default();
    let mut test = SampleSet::default();
    let dims;
    if cfg.task.is_windowed() {
        let spec = window_spec(cfg);
        let scaled = normalizer.apply(&panel)?;
        let test_periods: BTreeSet<Period> = test_p.periods.iter().copied().collect();
        dims = spec.input_dim(
            panel.schema.n_indicators() - panel.schema.light_columns,
            panel.schema.frequency,
        );
        for s in make_window_samples(&scaled, &spec) {
            let set = if test_periods.contains(&s.target_period) {
                &mut test
            } else {
                &mut train
            };
            set.keys.push((s.country, s.target_period));
            set.flat.push(s.inputs.concat());
            set.seq.push(Tensor::from_rows(&s.inputs));
            set.targets.push(s.target.to_vec());
        }
    } else {
        dims = panel.dims();
        for (set, part) in [(&mut train, &train_p), (&mut test, &test_p)] {
            let scaled = normalizer.apply(part)?;
            for s in make_regression_samples(&scaled) {
                if let Some(emb) = &embeddings {
                    set.tokens.push(tokens_for(&scaled, emb, &s.country, s.period, &s.x)?);
                }
                set.keys.push((s.country, s.period));
                set.flat.push(s.x);
                set.targets.push(vec![s.y]);
            }
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(ExperimentError::Data(format!(
            "{} training and {} test samples; both must be non-empty",
            train.len(),
            test.len()
        )));
    }
    Ok(Prepared {
        panel,
        normalizer,
        train,
        test,
        dims,
        embed_dim: embeddings.map(|e| e.dim()),
    })
}
