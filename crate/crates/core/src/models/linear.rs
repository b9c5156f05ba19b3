//! Closed-form least squares with optional ridge penalty.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

/// Ridge penalty applied when the unpenalized normal equations are singular.
pub const FALLBACK_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    /// Penalty actually used by the solve.
    pub ridge_eps: T,
    /// True when `ridge_eps = 0` was requested but the system was singular and
    /// [`FALLBACK_RIDGE`] was used instead.
    pub fallback_used: bool,
}

impl<T: Scalar> LinearModel<T> {
    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_one(&self, x: &[T]) -> Result<T, ModelError> {
        if x.len() != self.weights.len() {
            return Err(ModelError::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(x).fold(self.bias, |acc, (&w, &v)| acc + w * v))
    }
}

fn check_finite<T: Scalar>(x: &[Vec<T>], y: &[T]) -> Result<usize, ModelError> {
    let d = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != d) {
        return Err(ModelError::Shape("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("regression inputs".into()));
    }
    Ok(d)
}

/// Solves `(Xc'Xc + eps I) w = Xc'yc` on column-centered data, then sets the
/// bias from the means. With `ridge_eps = 0` a singular system is retried
/// with [`FALLBACK_RIDGE`], recorded in [`LinearModel::fallback_used`].
pub fn fit_linear<T: Scalar>(x: &[Vec<T>], y: &[T], ridge_eps: T) -> Result<LinearModel<T>, ModelError> {
    if x.is_empty() {
        return Err(ModelError::Config("linear regression needs at least one sample".into()));
    }
    if x.len() != y.len() {
        return Err(ModelError::Shape(format!("{} rows vs {} targets", x.len(), y.len())));
    }
    if ridge_eps < T::zero() {
        return Err(ModelError::Config("ridge_eps must be >= 0".into()));
    }
    let d = check_finite(x, y)?;
    let n = T::of(x.len() as f64);
    let mut x_mean = vec![T::zero(); d];
    for row in x {
        for (m, &v) in x_mean.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m = *m / n);
    let y_mean = y.iter().copied().sum::<T>() / n;

    let mut gram = vec![T::zero(); d * d];
    let mut rhs = vec![T::zero(); d];
    let mut xc = vec![T::zero(); d];
    for (row, &yi) in x.iter().zip(y) {
        for j in 0..d {
            xc[j] = row[j] - x_mean[j];
        }
        let yc = yi - y_mean;
        for i in 0..d {
            rhs[i] = rhs[i] + xc[i] * yc;
            for j in 0..=i {
                gram[i * d + j] = gram[i * d + j] + xc[i] * xc[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[j * d + i] = gram[i * d + j];
        }
    }

    let solve = |eps: T| {
        let mut a = gram.clone();
        for i in 0..d {
            a[i * d + i] = a[i * d + i] + eps;
        }
        cholesky_solve(&mut a, &rhs, d)
    };
    let (weights, eps, fallback_used) = match solve(ridge_eps) {
        Some(w) => (w, ridge_eps, false),
        None if ridge_eps == T::zero() => {
            let eps = T::of(FALLBACK_RIDGE);
            let w = solve(eps).ok_or(ModelError::Singular)?;
            (w, eps, true)
        }
        None => return Err(ModelError::Singular),
    };
    let bias = y_mean - weights.iter().zip(&x_mean).map(|(&w, &m)| w * m).sum::<T>();
    Ok(LinearModel {
        weights,
        bias,
        ridge_eps: eps,
        fallback_used,
    })
}

/// In-place Cholesky factorization and solve. Returns `None` when a pivot is
/// not safely positive relative to the largest diagonal entry.
fn cholesky_solve<T: Scalar>(a: &mut [T], b: &[T], d: usize) -> Option<Vec<T>> {
    let max_diag = (0..d).map(|i| a[i * d + i]).fold(T::zero(), T::max);
    let tol = max_diag * T::epsilon() * T::of(64.0 * d.max(1) as f64);
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s = s - a[j * d + k] * a[j * d + k];
        }
        if !(s > tol) {
            return None;
        }
        let l = s.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s = s - a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / l;
        }
    }
    let mut z = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            z[i] = z[i] - a[i * d + k] * z[k];
        }
        z[i] = z[i] / a[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            z[i] = z[i] - a[k * d + i] * z[k];
        }
        z[i] = z[i] / a[i * d + i];
    }
    Some(z)
}

pub fn predict_linear<T: Scalar>(model: &LinearModel<T>, x: &[Vec<T>]) -> Result<Vec<T>, ModelError> {
    x.iter().map(|row| model.predict_one(row)).collect()
}

/// One independent [`LinearModel`] per output column; used for vector
/// autoregression where every component of the next z-vector is regressed on
/// the flattened window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedLinear<T> {
    pub outputs: Vec<LinearModel<T>>,
}

impl<T: Scalar> StackedLinear<T> {
    pub fn fit(x: &[Vec<T>], y: &[Vec<T>], ridge_eps: T) -> Result<Self, ModelError> {
        let m = y.first().map_or(0, Vec::len);
        if m == 0 || y.iter().any(|r| r.len() != m) {
            return Err(ModelError::Shape(
                "targets must be non-empty rows of equal width".into(),
            ));
        }
        let outputs = (0..m)
            .map(|j| {
                let col: Vec<T> = y.iter().map(|r| r[j]).collect();
                fit_linear(x, &col, ridge_eps)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { outputs })
    }

    pub fn input_dim(&self) -> usize {
        self.outputs.first().map_or(0, LinearModel::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn predict_one(&self, x: &[T]) -> Result<Vec<T>, ModelError> {
        self.outputs.iter().map(|m| m.predict_one(x)).collect()
    }

    pub fn any_fallback(&self) -> bool {
        self.outputs.iter().any(|m| m.fallback_used)
    }

    /// `linear.w: [d, m]`, `linear.b: [m]`.
    pub fn to_store(&self) -> ParamStore<T> {
        let d = self.input_dim();
        let m = self.output_dim();
        let mut w = Tensor::zeros(&[d, m]);
        for (j, model) in self.outputs.iter().enumerate() {
            for (i, &v) in model.weights.iter().enumerate() {
                w.data_mut()[i * m + j] = v;
            }
        }
        let b = Tensor::vector(self.outputs.iter().map(|m| m.bias).collect());
        let mut store = ParamStore::new();
        store.insert("linear.w", w);
        store.insert("linear.b", b);
        store
    }

    pub fn from_store(store: &ParamStore<T>) -> Result<Self, ModelError> {
        let w = store
            .get("linear.w")
            .ok_or_else(|| ModelError::Config("missing linear.w".into()))?;
        let b = store
            .get("linear.b")
            .ok_or_else(|| ModelError::Config("missing linear.b".into()))?;
        let (d, m) = w
            .dims2()
            .ok_or_else(|| ModelError::Shape("linear.w must be rank 2".into()))?;
        if b.len() != m {
            return Err(ModelError::Shape("linear.b width mismatch".into()));
        }
        let outputs = (0..m)
            .map(|j| LinearModel {
                weights: (0..d).map(|i| w.get2(i, j)).collect(),
                bias: b.data()[j],
                ridge_eps: T::zero(),
                fallback_used: false,
            })
            .collect();
        Ok(Self { outputs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.7 - 2.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = fit_linear(&x, &y, 0.0).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-10);
        assert!((m.bias - 1.0).abs() < 1e-10);
        assert!(!m.fallback_used);
    }

    #[test]
    fn duplicated_column_engages_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let a = rng.gen_range(-1.0..1.0);
                vec![a, a, rng.gen_range(-1.0..1.0)]
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - 3.0 * r[2] + 0.5).collect();
        let m = fit_linear(&x, &y, 0.0).unwrap();
        assert!(m.fallback_used);
        assert_eq!(m.ridge_eps, FALLBACK_RIDGE);
        // min-norm split of the duplicated coefficient
        assert!((m.weights[0] - 0.5).abs() < 1e-6);
        assert!((m.weights[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_weights_predict_bias() {
        let m = LinearModel {
            weights: vec![0.0; 3],
            bias: 3.0,
            ridge_eps: 0.0,
            fallback_used: false,
        };
        let preds = predict_linear(&m, &[vec![1.0, 2.0, 3.0], vec![-5.0, 0.0, 9.0]]).unwrap();
        assert_eq!(preds, vec![3.0, 3.0]);
        assert!(predict_linear(&m, &[vec![1.0]]).is_err());
    }

    #[test]
    fn residuals_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + rng.gen_range(-0.1..0.1)).collect();
        let m = fit_linear(&x, &y, 0.0).unwrap();
        let preds = predict_linear(&m, &x).unwrap();
        for ((row, &yi), &p) in x.iter().zip(&y).zip(&preds) {
            let manual = m.bias + row.iter().zip(&m.weights).map(|(a, b)| a * b).sum::<f64>();
            assert!(((yi - p) - (yi - manual)).abs() < 1e-14);
        }
        // least-squares residuals are orthogonal to the centered columns and sum to zero
        let resid_sum: f64 = y.iter().zip(&preds).map(|(a, b)| a - b).sum();
        assert!(resid_sum.abs() < 1e-10);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            fit_linear(&[vec![f64::NAN]], &[1.0], 0.0),
            Err(ModelError::NonFinite(_))
        ));
        assert!(fit_linear::<f64>(&[], &[], 0.0).is_err());
    }

    #[test]
    fn stacked_predicts_each_column_and_round_trips_store() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64 / 10.0]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] + 1.0, 2.0 * r[1] - r[0]]).collect();
        let s = StackedLinear::fit(&x, &y, 0.0).unwrap();
        let p = s.predict_one(&x[5]).unwrap();
        assert!((p[0] - y[5][0]).abs() < 1e-9 && (p[1] - y[5][1]).abs() < 1e-9);
        let back = StackedLinear::from_store(&s.to_store()).unwrap();
        assert_eq!(back.predict_one(&x[5]).unwrap(), p);
    }

    /// Uncentered normal equations `[1 X]'[1 X] b = [1 X]'y` solved by
    /// Gaussian elimination with partial pivoting.
    fn gauss_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let d = x[0].len() + 1;
        let mut a = vec![vec![0.0; d + 1]; d];
        for (row, &yi) in x.iter().zip(y) {
            let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += z[i] * z[j];
                }
                a[i][d] += z[i] * yi;
            }
        }
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..d {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=d {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..d).map(|i| a[i][d] / a[i][i]).collect()
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = rng.gen_range(1..=10);
        let n = rng.gen_range(d + 5..=200);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = x
            .iter()
            .map(|r| 0.3 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1))
            .collect();
        (x, y)
    }

    #[test]
    fn matches_gaussian_elimination_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (x, y) = random_problem(&mut rng);
            let m = fit_linear(&x, &y, 0.0).unwrap();
            let b = gauss_oracle(&x, &y);
            assert!((m.bias - b[0]).abs() < 1e-8);
            for (w, o) in m.weights.iter().zip(&b[1..]) {
                assert!((w - o).abs() < 1e-8, "{w} vs {o}");
            }
        }
    }

    #[test]
    fn matches_pseudo_inverse_oracle() {
        use nalgebra::{DMatrix, DVector};
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..30 {
            let (x, y) = random_problem(&mut rng);
            let d = x[0].len();
            let design = DMatrix::from_fn(x.len(), d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
            let b = design.pseudo_inverse(1e-12).unwrap() * DVector::from_vec(y.clone());
            let m = fit_linear(&x, &y, 0.0).unwrap();
            assert!((m.bias - b[0]).abs() < 1e-8);
            for j in 0..d {
                assert!((m.weights[j] - b[j + 1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ridge_matches_augmented_oracle() {
        // Ridge on centered data equals OLS on rows augmented with sqrt(eps) I.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (x, y) = random_problem(&mut rng);
        let d = x[0].len();
        let eps: f64 = 0.7;
        let n = x.len() as f64;
        let mx: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let my = y.iter().sum::<f64>() / n;
        let mut xa: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().zip(&mx).map(|(a, b)| a - b).collect())
            .collect();
        let mut ya: Vec<f64> = y.iter().map(|v| v - my).collect();
        for j in 0..d {
            let mut row = vec![0.0; d];
            row[j] = eps.sqrt();
            xa.push(row);
            ya.push(0.0);
        }
        let design = nalgebra::DMatrix::from_fn(xa.len(), d, |i, j| xa[i][j]);
        let w = design.pseudo_inverse(1e-12).unwrap() * nalgebra::DVector::from_vec(ya);
        let m = fit_linear(&x, &y, eps).unwrap();
        for j in 0..d {
            assert!((m.weights[j] - w[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn works_in_f32() {
        let x: Vec<Vec<f32>> = (0..8).map(|i| vec![i as f32]).collect();
        let y: Vec<f32> = x.iter().map(|r| 0.5 * r[0] - 1.0).collect();
        let m = fit_linear(&x, &y, 0.0).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-4);
    }
}
