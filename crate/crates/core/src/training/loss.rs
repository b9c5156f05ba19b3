//! Training and validation losses.
//!
//! Vectors follow the z-vector layout: indicators first, GDP growth last.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{Graph, GraphError, NodeId, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ScalarMse,
    WeightedMultivariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Weight of the GDP term; only read by the weighted loss.
    pub w_gdp: f64,
}

impl LossConfig {
    pub fn scalar_mse() -> Self {
        Self {
            kind: LossKind::ScalarMse,
            w_gdp: 1.0,
        }
    }

    pub fn weighted(w_gdp: f64) -> Self {
        Self {
            kind: LossKind::WeightedMultivariate,
            w_gdp,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.kind == LossKind::WeightedMultivariate && !(self.w_gdp > 0.0 && self.w_gdp.is_finite()) {
            return Err(TrainError::Config(format!("W_GDP must be > 0, got {}", self.w_gdp)));
        }
        Ok(())
    }

    /// Validation counterpart: GDP-only for the multivariate loss.
    pub fn validation_mode(&self) -> ValidationMode {
        match self.kind {
            LossKind::ScalarMse => ValidationMode::Scalar,
            LossKind::WeightedMultivariate => ValidationMode::GdpOnly,
        }
    }
}

/// `sum_i (x_i - x̂_i)^2 + W_GDP (y - ŷ)^2` with the GDP component last.
pub fn weighted_multivariate_loss<T: Scalar>(pred: &[T], target: &[T], w_gdp: T) -> Result<T, TrainError> {
    check_pair(pred, target, w_gdp)?;
    let n = pred.len() - 1;
    let indicators: T = pred[..n]
        .iter()
        .zip(&target[..n])
        .map(|(&p, &t)| (t - p) * (t - p))
        .sum();
    let gdp = target[n] - pred[n];
    Ok(indicators + w_gdp * gdp * gdp)
}

/// Gradient of [`weighted_multivariate_loss`] with respect to `pred`.
pub fn weighted_multivariate_loss_grad<T: Scalar>(pred: &[T], target: &[T], w_gdp: T) -> Result<Vec<T>, TrainError> {
    check_pair(pred, target, w_gdp)?;
    let n = pred.len() - 1;
    let two = T::of(2.0);
    Ok(pred
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (&p, &t))| {
            let w = if i == n { w_gdp } else { T::one() };
            two * w * (p - t)
        })
        .collect())
}

fn check_pair<T: Scalar>(pred: &[T], target: &[T], w_gdp: T) -> Result<(), TrainError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(TrainError::Shape(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    if !(w_gdp > T::zero()) {
        return Err(TrainError::Config("W_GDP must be > 0".into()));
    }
    Ok(())
}

/// Mean of the per-sample weighted loss over a batch.
pub fn batch_weighted_loss<T: Scalar>(preds: &[Vec<T>], targets: &[Vec<T>], w_gdp: T) -> Result<T, TrainError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(TrainError::Shape("batch sizes differ or are empty".into()));
    }
    let mut total = T::zero();
    for (p, t) in preds.iter().zip(targets) {
        total = total + weighted_multivariate_loss(p, t, w_gdp)?;
    }
    Ok(total / T::of(preds.len() as f64))
}

/// Builds the batch training loss on a `[batch, m]` output node.
pub(crate) fn loss_node<T: Scalar>(
    g: &mut Graph<T>,
    out: NodeId,
    targets: Tensor<T>,
    cfg: &LossConfig,
) -> Result<NodeId, GraphError> {
    let (batch, m) = targets.dims2().expect("targets are [batch, m]");
    let t = g.constant(targets);
    let diff = g.sub(out, t)?;
    let sq = g.mul(diff, diff)?;
    match cfg.kind {
        LossKind::ScalarMse => {
            let s = g.sum(sq)?;
            g.scale(s, T::one() / T::of((batch * m) as f64))
        }
        LossKind::WeightedMultivariate => {
            let mut w = vec![T::one(); m];
            w[m - 1] = T::of(cfg.w_gdp);
            let w = g.constant(Tensor::new(vec![m, 1], w));
            let per_sample = g.matmul(sq, w)?;
            let s = g.sum(per_sample)?;
            g.scale(s, T::one() / T::of(batch as f64))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Plain MSE over every output component.
    Scalar,
    /// MSE over the trailing GDP component only.
    GdpOnly,
}

pub fn validation_loss<T: Scalar>(preds: &[Vec<T>], targets: &[Vec<T>], mode: ValidationMode) -> Result<T, TrainError> {
    if preds.is_empty() {
        return Err(TrainError::Shape("validation set is empty".into()));
    }
    if preds.len() != targets.len() {
        return Err(TrainError::Shape(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        if p.len() != t.len() || p.is_empty() {
            return Err(TrainError::Shape("prediction/target width mismatch".into()));
        }
        match mode {
            ValidationMode::Scalar => {
                for (&a, &b) in p.iter().zip(t) {
                    total = total + (a - b) * (a - b);
                    count += 1;
                }
            }
            ValidationMode::GdpOnly => {
                let (a, b) = (p[p.len() - 1], t[t.len() - 1]);
                total = total + (a - b) * (a - b);
                count += 1;
            }
        }
    }
    Ok(total / T::of(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_case() {
        // indicator errors (1, -2), gdp error 3, W = 4 -> 1 + 4 + 4 * 9
        let target = [1.0, -2.0, 3.0];
        let pred = [0.0, 0.0, 0.0];
        assert_eq!(weighted_multivariate_loss(&pred, &target, 4.0).unwrap(), 41.0);
    }

    #[test]
    fn exact_prediction_is_zero() {
        let z = [0.3, -1.2, 4.5];
        assert_eq!(weighted_multivariate_loss(&z, &z, 2.5).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(weighted_multivariate_loss(&[1.0, 2.0], &[1.0], 1.0).is_err());
        assert!(weighted_multivariate_loss(&[1.0], &[1.0], 0.0).is_err());
        assert!(LossConfig::weighted(-1.0).validate().is_err());
    }

    #[test]
    fn validation_examples() {
        // scalar: ((1-1)^2 + (2-4)^2) / 2 = 2
        let v = validation_loss(&[vec![1.0], vec![2.0]], &[vec![1.0], vec![4.0]], ValidationMode::Scalar).unwrap();
        assert_eq!(v, 2.0);
        let gdp_only =
            validation_loss(&[vec![9.0, -3.0, 1.5]], &[vec![0.0, 0.0, 1.5]], ValidationMode::GdpOnly).unwrap();
        assert_eq!(gdp_only, 0.0);
        assert_eq!(
            validation_loss(&[vec![0.5]], &[vec![0.5]], ValidationMode::Scalar).unwrap(),
            0.0
        );
        assert!(validation_loss::<f64>(&[], &[], ValidationMode::Scalar).is_err());
    }

    #[test]
    fn graph_loss_matches_direct_evaluation() {
        let preds = vec![vec![0.1, 0.7, -0.2], vec![1.0, -0.5, 0.4]];
        let targets = vec![vec![0.0, 1.0, 0.3], vec![0.5, -0.5, -0.1]];
        let mut g = Graph::new();
        let out = g.input("out", Tensor::from_rows(&preds)).unwrap();
        let l = loss_node(&mut g, out, Tensor::from_rows(&targets), &LossConfig::weighted(3.0)).unwrap();
        let direct: f64 = batch_weighted_loss(&preds, &targets, 3.0).unwrap();
        assert!((g.value(l).item().unwrap() - direct).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            z in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..8),
            w in 0.1f64..10.0,
        ) {
            let pred: Vec<f64> = z.iter().map(|p| p.0).collect();
            let target: Vec<f64> = z.iter().map(|p| p.1).collect();
            let grad = weighted_multivariate_loss_grad(&pred, &target, w).unwrap();
            let eps = 1e-5;
            for i in 0..pred.len() {
                let mut hi = pred.clone();
                let mut lo = pred.clone();
                hi[i] += eps;
                lo[i] -= eps;
                let fd = (weighted_multivariate_loss(&hi, &target, w).unwrap()
                    - weighted_multivariate_loss(&lo, &target, w).unwrap()) / (2.0 * eps);
                let rel = crate::nn::relative_error(grad[i], fd);
                prop_assert!(rel < 1e-6, "component {} rel err {}", i, rel);
            }
        }

        #[test]
        fn loss_strictly_increases_with_gdp_weight(
            z in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..8),
            w in 0.1f64..10.0,
            dw in 0.01f64..5.0,
        ) {
            let pred: Vec<f64> = z.iter().map(|p| p.0).collect();
            let target: Vec<f64> = z.iter().map(|p| p.1).collect();
            let last = pred.len() - 1;
            prop_assume!(pred[last] != target[last]);
            let a = weighted_multivariate_loss(&pred, &target, w).unwrap();
            let b = weighted_multivariate_loss(&pred, &target, w + dw).unwrap();
            prop_assert!(b > a);
        }
    }
}
