//! Grid search with k-fold cross-validation and two checkpoints per run:
//! the best single fold model of the winning grid point, and a model
//! retrained on every training sample with the winning hyperparameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kfold::{kfold_split, CvConfig};
use super::{derive_seed, TrainError};

/// Seed stream used for the final retrain; fold `f` uses stream `f + 1`.
pub const FINAL_SEED_STREAM: u64 = 0;

/// One point of the hyperparameter grid. Knobs left `None` fall back to
/// the experiment's base configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_gdp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_eps: Option<f64>,
}

/// Axes of the grid. An empty axis is not searched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpace {
    pub lr: Vec<f64>,
    pub width: Vec<usize>,
    pub depth: Vec<usize>,
    pub dim: Vec<usize>,
    pub w_gdp: Vec<f64>,
    pub patch_len: Vec<usize>,
    pub ridge_eps: Vec<f64>,
}

fn axis<V: Copy>(values: &[V]) -> Vec<Option<V>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

impl GridSpace {
    /// Cartesian product in declaration order, last axis fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for lr in axis(&self.lr) {
            for width in axis(&self.width) {
                for depth in axis(&self.depth) {
                    for dim in axis(&self.dim) {
                        for w_gdp in axis(&self.w_gdp) {
                            for patch_len in axis(&self.patch_len) {
                                for ridge_eps in axis(&self.ridge_eps) {
                                    out.push(GridPoint {
                                        lr,
                                        width,
                                        depth,
                                        dim,
                                        w_gdp,
                                        patch_len,
                                        ridge_eps,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Trains and scores models on subsets of a fixed training sample list.
pub trait FoldTrainer: Sync {
    type Checkpoint: Send;

    fn fit(&self, point: &GridPoint, train_idx: &[usize], seed: u64) -> Result<Self::Checkpoint, TrainError>;

    fn validate(&self, ckpt: &Self::Checkpoint, valid_idx: &[usize]) -> Result<f64, TrainError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    /// `None` marks a fold whose training diverged.
    pub fold_losses: Vec<Option<f64>>,
    /// Arithmetic mean of the fold losses; `None` if any fold diverged.
    pub mean_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CvRun<C> {
    pub folds: Vec<Vec<usize>>,
    pub fold_seeds: Vec<u64>,
    pub final_seed: u64,
    pub points: Vec<PointResult>,
    pub winner: usize,
    pub best_fold: usize,
    pub best_valid: C,
    pub final_model: C,
    pub final_train_count: usize,
}

impl<C> CvRun<C> {
    pub fn winning_point(&self) -> &GridPoint {
        &self.points[self.winner].point
    }

    pub fn best_valid_loss(&self) -> f64 {
        self.points[self.winner].fold_losses[self.best_fold].expect("winner has finite folds")
    }
}

fn run_fold<F: FoldTrainer>(
    trainer: &F,
    point: &GridPoint,
    folds: &[Vec<usize>],
    fold: usize,
    seed: u64,
) -> Result<(f64, F::Checkpoint), TrainError> {
    let train_idx: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != fold)
        .flat_map(|(_, idx)| idx.iter().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let ckpt = trainer.fit(point, &train_idx, seed)?;
    let loss = trainer.validate(&ckpt, &folds[fold])?;
    if !loss.is_finite() {
        return Err(TrainError::Diverged {
            last_finite_epoch: None,
        });
    }
    Ok((loss, ckpt))
}

/// Runs every (grid point, fold) pair on a pool of `jobs` threads. Results
/// are merged in grid and fold order, so the outcome does not depend on
/// `jobs`.
pub fn grid_search<F: FoldTrainer>(
    trainer: &F,
    points: &[GridPoint],
    n_samples: usize,
    cv: &CvConfig,
    base_seed: u64,
    jobs: usize,
) -> Result<CvRun<F::Checkpoint>, TrainError> {
    if points.is_empty() {
        return Err(TrainError::Config("grid has no points".into()));
    }
    let folds = kfold_split(n_samples, cv)?;
    let fold_seeds: Vec<u64> = (0..cv.k).map(|f| derive_seed(base_seed, f as u64 + 1)).collect();
    let final_seed = derive_seed(base_seed, FINAL_SEED_STREAM);

    let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cv.k).map(move |f| (p, f))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(f64, F::Checkpoint), TrainError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, f)| run_fold(trainer, &points[p], &folds, f, fold_seeds[f]))
            .collect()
    });

    let mut results = results.into_iter();
    let mut summaries = Vec::with_capacity(points.len());
    let mut kept: Vec<Option<(usize, F::Checkpoint)>> = Vec::with_capacity(points.len());
    for point in points {
        let mut fold_losses = Vec::with_capacity(cv.k);
        let mut failure = None;
        let mut best: Option<(usize, f64, F::Checkpoint)> = None;
        for f in 0..cv.k {
            match results.next().expect("one result per task") {
                Ok((loss, ckpt)) => {
                    fold_losses.push(Some(loss));
                    if best.as_ref().is_none_or(|b| loss < b.1) {
                        best = Some((f, loss, ckpt));
                    }
                }
                Err(e @ TrainError::Diverged { .. }) => {
                    fold_losses.push(None);
                    failure.get_or_insert_with(|| format!("fold {f}: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        let mean_loss = if failure.is_none() {
            Some(fold_losses.iter().map(|l| l.unwrap()).sum::<f64>() / cv.k as f64)
        } else {
            None
        };
        kept.push(if mean_loss.is_some() {
            best.map(|(f, _, c)| (f, c))
        } else {
            None
        });
        summaries.push(PointResult {
            point: point.clone(),
            fold_losses,
            mean_loss,
            failure,
        });
    }

    let mut winner: Option<usize> = None;
    for (i, s) in summaries.iter().enumerate() {
        if let Some(m) = s.mean_loss {
            if winner.is_none_or(|w| m < summaries[w].mean_loss.unwrap()) {
                winner = Some(i);
            }
        }
    }
    let winner = winner.ok_or(TrainError::AllDiverged)?;
    let (best_fold, best_valid) = kept.swap_remove(winner).expect("winner has a fold model");

    let all: Vec<usize> = (0..n_samples).collect();
    let final_model = trainer.fit(&summaries[winner].point, &all, final_seed)?;

    Ok(CvRun {
        folds,
        fold_seeds,
        final_seed,
        points: summaries,
        winner,
        best_fold,
        best_valid,
        final_model,
        final_train_count: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_linear;
    use crate::models::linear::LinearModel;

    /// Scores each fold by a fixed table; the checkpoint records its inputs.
    struct Table {
        losses: Vec<Vec<f64>>,
    }

    impl FoldTrainer for Table {
        type Checkpoint = (usize, usize, u64);

        fn fit(&self, point: &GridPoint, train_idx: &[usize], seed: u64) -> Result<Self::Checkpoint, TrainError> {
            Ok((point.width.unwrap(), train_idx.len(), seed))
        }

        fn validate(&self, ckpt: &Self::Checkpoint, valid_idx: &[usize]) -> Result<f64, TrainError> {
            let p = ckpt.0;
            let loss = self.losses[p][valid_idx[0] % 3];
            if loss.is_nan() {
                return Err(TrainError::Diverged {
                    last_finite_epoch: Some(2),
                });
            }
            Ok(loss)
        }
    }

    fn widths(n: usize) -> Vec<GridPoint> {
        GridSpace {
            width: (0..n).collect(),
            ..Default::default()
        }
        .points()
    }

    // Folds are built on 0..3 with k=3, so fold f holds exactly one index.
    fn fold_of(run: &CvRun<(usize, usize, u64)>, sample: usize) -> usize {
        run.folds.iter().position(|f| f.contains(&sample)).unwrap()
    }

    #[test]
    fn single_point_wins_and_best_fold_is_argmin() {
        let t = Table {
            losses: vec![vec![0.3, 0.1, 0.2]],
        };
        let run = grid_search(&t, &widths(1), 3, &CvConfig { k: 3, seed: 5 }, 9, 2).unwrap();
        assert_eq!(run.winner, 0);
        assert_eq!(run.best_fold, fold_of(&run, 1));
        assert_eq!(run.best_valid_loss(), 0.1);
        assert!((run.points[0].mean_loss.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(run.final_model, (0, 3, derive_seed(9, FINAL_SEED_STREAM)));
        assert_eq!(run.best_valid.1, 2);
    }

    #[test]
    fn dominating_point_wins_and_ties_go_to_grid_order() {
        let t = Table {
            losses: vec![vec![0.5, 0.5, 0.5], vec![0.4, 0.4, 0.4], vec![0.4, 0.4, 0.4]],
        };
        let run = grid_search(&t, &widths(3), 3, &CvConfig { k: 3, seed: 0 }, 0, 1).unwrap();
        assert_eq!(run.winner, 1);
    }

    #[test]
    fn diverged_points_are_skipped_until_none_remain() {
        let t = Table {
            losses: vec![vec![0.1, f64::NAN, 0.1], vec![0.9, 0.9, 0.9]],
        };
        let run = grid_search(&t, &widths(2), 3, &CvConfig { k: 3, seed: 0 }, 0, 1).unwrap();
        assert_eq!(run.winner, 1);
        assert!(run.points[0].mean_loss.is_none());
        let t = Table {
            losses: vec![vec![f64::NAN; 3]],
        };
        assert!(matches!(
            grid_search(&t, &widths(1), 3, &CvConfig { k: 3, seed: 0 }, 0, 1),
            Err(TrainError::AllDiverged)
        ));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let t = Table {
            losses: vec![vec![0.3, 0.2, 0.1], vec![0.2, 0.3, 0.25], vec![0.05, 0.9, 0.3]],
        };
        let cv = CvConfig { k: 3, seed: 11 };
        let a = grid_search(&t, &widths(3), 3, &cv, 4, 1).unwrap();
        let b = grid_search(&t, &widths(3), 3, &cv, 4, 4).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(
            (a.winner, a.best_fold, a.best_valid),
            (b.winner, b.best_fold, b.best_valid)
        );
    }

    #[test]
    fn grid_order_is_last_axis_fastest() {
        let pts = GridSpace {
            lr: vec![0.1, 0.01],
            width: vec![4, 8],
            ..Default::default()
        }
        .points();
        let got: Vec<(f64, usize)> = pts.iter().map(|p| (p.lr.unwrap(), p.width.unwrap())).collect();
        assert_eq!(got, vec![(0.1, 4), (0.1, 8), (0.01, 4), (0.01, 8)]);
        assert_eq!(GridSpace::default().points(), vec![GridPoint::default()]);
    }

    struct Ridge {
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    }

    impl FoldTrainer for Ridge {
        type Checkpoint = LinearModel<f64>;

        fn fit(&self, point: &GridPoint, idx: &[usize], _seed: u64) -> Result<LinearModel<f64>, TrainError> {
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| self.x[i].clone()).collect();
            let y: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
            Ok(fit_linear(&x, &y, point.ridge_eps.unwrap())?)
        }

        fn validate(&self, m: &LinearModel<f64>, idx: &[usize]) -> Result<f64, TrainError> {
            Ok(idx
                .iter()
                .map(|&i| (m.predict_one(&self.x[i]).unwrap() - self.y[i]).powi(2))
                .sum::<f64>()
                / idx.len() as f64)
        }
    }

    #[test]
    fn noiseless_linear_data_prefers_no_ridge() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin(), (t * 0.11).cos(), t / 30.0]
            })
            .collect();
        let y = x.iter().map(|r| 1.5 * r[0] - 2.0 * r[1] + 0.7 * r[2] + 0.3).collect();
        let space = GridSpace {
            ridge_eps: vec![0.0, 1e-2, 1.0],
            ..Default::default()
        };
        let run = grid_search(&Ridge { x, y }, &space.points(), 30, &CvConfig::default(), 0, 2).unwrap();
        assert_eq!(run.winning_point().ridge_eps, Some(0.0));
        assert!(run.points[0].mean_loss.unwrap() < 1e-20);
    }
}
