use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::data::{prepare, Prepared, SampleSet};
use super::manifest::{save_checkpoint, write_json, CheckpointMeta, CheckpointRole, Manifest, MANIFEST_FILE};
use super::trainer::{model_spec, predict, Checkpoint, FamilyTrainer, Shapes};
use super::ExperimentError;
use crate::models::{Family, StackedLinear};
use crate::panel::Normalizer;
use crate::report::{compute_metrics, emit_report, MetricSet, ResultRow};
use crate::training::grid_search;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub reports: Vec<PathBuf>,
}

fn shapes(cfg: &ExperimentConfig, prep: &Prepared) -> Shapes {
    let t = &prep.train;
    Shapes {
        flat_dim: t.flat_dim(),
        window: t.seq.first().and_then(|s| s.dims2()),
        out_dim: t.out_dim(),
        embed_dim: if cfg.family == Family::Rt { prep.embed_dim } else { None },
    }
}

/// Test metrics on the original GDP scale.
fn test_metrics(preds: &[Vec<f64>], test: &SampleSet, norm: &Normalizer) -> Result<MetricSet, ExperimentError> {
    let col = norm.target_col();
    let p: Vec<f64> = preds
        .iter()
        .map(|r| norm.inverse(col, *r.last().expect("non-empty")))
        .collect();
    let t: Vec<f64> = test.gdp_targets().iter().map(|&v| norm.inverse(col, v)).collect();
    Ok(compute_metrics(&p, &t)?)
}

fn checkpoint_metrics(ckpt: &Checkpoint, prep: &Prepared) -> Result<MetricSet, ExperimentError> {
    let idx: Vec<usize> = (0..prep.test.len()).collect();
    let preds = predict(ckpt, &prep.test, &idx)?;
    test_metrics(&preds, &prep.test, &prep.normalizer)
}

/// Ordinary least squares on every training sample, the reference column
/// of every report.
fn linear_baseline(prep: &Prepared) -> Result<MetricSet, ExperimentError> {
    let model = StackedLinear::fit(&prep.train.flat, &prep.train.targets, 0.0)?;
    let preds = prep
        .test
        .flat
        .iter()
        .map(|x| model.predict_one(x))
        .collect::<Result<Vec<_>, _>>()?;
    test_metrics(&preds, &prep.test, &prep.normalizer)
}

fn create_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(dir.display().to_string(), e))
}

/// Runs the full protocol for one config and writes checkpoints, the
/// manifest and reports to `<output_dir>/run-<hash>/`. `jobs` sets the
/// worker count of the grid search; outputs do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunOutcome, ExperimentError> {
    let prep = prepare(cfg)?;
    let shapes = shapes(cfg, &prep);
    let points = cfg.grid.points();
    for p in &points {
        model_spec(&cfg.model, p, &shapes).map_err(|e| ExperimentError::Config(format!("grid point {p:?}: {e}")))?;
    }
    if prep.train.len() < cfg.cv.k {
        return Err(ExperimentError::Data(format!(
            "{} training samples cannot fill {} folds",
            prep.train.len(),
            cfg.cv.k
        )));
    }

    let trainer = FamilyTrainer::new(cfg, &prep.train, shapes);
    let cv = grid_search(&trainer, &points, prep.train.len(), &cfg.cv, cfg.seed, jobs)?;

    let dir = cfg.output_dir.join(format!("run-{}", cfg.hash));
    create_dir(&dir)?;
    let fingerprint = prep.panel.schema.fingerprint();
    let meta = |ckpt: &Checkpoint, seed: u64| CheckpointMeta {
        spec: ckpt.spec.clone(),
        point: ckpt.point.clone(),
        schema_fingerprint: fingerprint.clone(),
        normalizer: prep.normalizer.clone(),
        train_count: ckpt.train_count,
        seed,
        curve: ckpt.curve.clone(),
    };
    let best_seed = cv.fold_seeds[cv.best_fold];
    let checkpoints = vec![
        save_checkpoint(
            &dir,
            CheckpointRole::BestValid,
            &cv.best_valid,
            &meta(&cv.best_valid, best_seed),
            Some(cv.best_fold),
        )?,
        save_checkpoint(
            &dir,
            CheckpointRole::Final,
            &cv.final_model,
            &meta(&cv.final_model, cv.final_seed),
            None,
        )?,
    ];

    let name = cfg.family.display_name();
    let row = ResultRow {
        dataset: cfg
            .dataset_label
            .clone()
            .unwrap_or_else(|| format!("{:?}", prep.panel.schema.frequency).to_lowercase()),
        period: cfg.period_label.clone(),
        light: cfg.light_mode,
        seq_len: cfg.seq_len,
        train: prep.train.len(),
        test: prep.test.len(),
        dims: prep.dims,
        models: vec![
            (Family::Linear.display_name().to_string(), linear_baseline(&prep)?),
            (
                format!("{name} Best Valid Model"),
                checkpoint_metrics(&cv.best_valid, &prep)?,
            ),
            (
                format!("{name} Final Model"),
                checkpoint_metrics(&cv.final_model, &prep)?,
            ),
        ],
    };

    let mut manifest = Manifest {
        config_hash: cfg.hash.clone(),
        task: cfg.task,
        family: cfg.family,
        dataset_label: row.dataset.clone(),
        period_label: cfg.period_label.clone(),
        light_mode: cfg.light_mode,
        seq_len: cfg.seq_len,
        split: cfg.split,
        schema_fingerprint: fingerprint.clone(),
        cv: cfg.cv,
        seed: cfg.seed,
        n_train: prep.train.len(),
        n_test: prep.test.len(),
        best_valid_loss: cv.best_valid_loss(),
        folds: cv.folds,
        fold_seeds: cv.fold_seeds,
        final_seed: cv.final_seed,
        grid: cv.points,
        winner: cv.winner,
        best_fold: cv.best_fold,
        checkpoints,
        results: vec![row],
        formats: cfg.formats.clone(),
        timestamp: cfg.timestamp,
        reports: Vec::new(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let reports = write_reports(&mut manifest, &dir)?;
    write_json(&manifest_path, &manifest)?;
    Ok(RunOutcome {
        dir,
        manifest_path,
        manifest,
        reports,
    })
}

fn write_reports(manifest: &mut Manifest, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut paths = Vec::new();
    for &fmt in &manifest.formats {
        paths.push(emit_report(
            &manifest.results,
            fmt,
            dir,
            &manifest.config_hash,
            manifest.timestamp,
        )?);
    }
    manifest.reports = paths
        .iter()
        .map(|p| p.file_name().expect("file path").to_string_lossy().into_owned())
        .collect();
    Ok(paths)
}

/// Re-emits the reports of a finished run from its manifest, into `out`
/// or the manifest's directory.
pub fn rerender_reports(manifest_path: impl AsRef<Path>, out: Option<&Path>) -> Result<Vec<PathBuf>, ExperimentError> {
    let manifest_path = manifest_path.as_ref();
    let mut manifest = Manifest::load(manifest_path)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    write_reports(&mut manifest, &dir)
}
