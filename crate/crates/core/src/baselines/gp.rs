//! Gaussian-process surrogate with a squared-exponential ARD kernel on
//! standardized targets. Hyperparameters are fixed, not learned.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::BaselineError;
use crate::stats::{normal_cdf, normal_pdf};

pub const MIN_JITTER: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GpModel {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub jitter: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        lengthscales: &[f64],
        signal_var: f64,
        jitter: f64,
    ) -> Result<Self, BaselineError> {
        assert_eq!(inputs.len(), targets.len());
        assert!(inputs.iter().all(|x| x.len() == lengthscales.len()));
        let jitter = jitter.max(MIN_JITTER);
        let n = inputs.len();
        let y_mean = targets.iter().sum::<f64>() / n.max(1) as f64;
        let var = targets.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n.max(1) as f64;
        let y_std = if var > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, targets.iter().map(|t| (t - y_mean) / y_std));

        let mut model_k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = se_kernel(&inputs[i], &inputs[j], lengthscales, signal_var);
                model_k[(i, j)] = k;
                model_k[(j, i)] = k;
            }
            model_k[(i, i)] += jitter;
        }
        let chol = Cholesky::new(model_k).ok_or(BaselineError::CholeskyFailure { jitter })?;
        let alpha = chol.solve(&y);
        Ok(Self {
            lengthscales: lengthscales.to_vec(),
            signal_var,
            jitter,
            inputs: inputs.to_vec(),
            targets: targets.to_vec(),
            y_mean,
            y_std,
            chol,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        se_kernel(a, b, &self.lengthscales, self.signal_var)
    }

    /// Covariance matrix of the observed inputs including jitter.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// Posterior mean and variance of the latent function in standardized
    /// units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let k_star = DVector::from_iterator(self.len(), self.inputs.iter().map(|xi| self.kernel(xi, x)));
        let mean = k_star.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k_star).expect("triangular factor is invertible");
        let var = (self.kernel(x, x) - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in the units of the targets.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (self.y_mean + m * self.y_std, v * self.y_std * self.y_std)
    }

    /// Lowest posterior mean over the observed inputs, in standardized units.
    fn incumbent(&self) -> f64 {
        self.inputs
            .iter()
            .map(|x| self.predict_standardized(x).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Expected improvement below the incumbent for a minimization problem,
    /// in target units. A posterior variance within a small multiple of the
    /// jitter is treated as zero, so observed inputs score exactly zero.
    pub fn expected_improvement(&self, x: &[f64]) -> f64 {
        self.expected_improvement_with(x, self.incumbent())
    }

    fn expected_improvement_with(&self, x: &[f64], best: f64) -> f64 {
        let (mean, var) = self.predict_standardized(x);
        let gain = best - mean;
        let ei = if var <= 100.0 * self.jitter * self.signal_var {
            gain.max(0.0)
        } else {
            let sd = var.sqrt();
            let z = gain / sd;
            (gain * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
        };
        ei * self.y_std
    }

    /// Index and value of the candidate with the largest expected
    /// improvement; ties go to the earliest.
    pub fn argmax_ei(&self, candidates: &[Vec<f64>]) -> Option<(usize, f64)> {
        let best = self.incumbent();
        let mut out: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let ei = self.expected_improvement_with(c, best);
            if out.is_none_or(|(_, b)| ei > b) {
                out = Some((i, ei));
            }
        }
        out
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

pub fn se_kernel(a: &[f64], b: &[f64], lengthscales: &[f64], signal_var: f64) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    signal_var * (-0.5 * d2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(n: usize, d: usize, seed: u64) -> GpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| (6.0 * v).sin()).sum::<f64>() + 3.0).collect();
        GpModel::fit(&xs, &ys, &vec![0.2; d], 1.0, 1e-8).unwrap()
    }

    #[test]
    fn interpolates_observations() {
        let gp = random_model(20, 4, 7);
        for (x, y) in gp.inputs.clone().iter().zip(gp.targets().to_vec()) {
            let (m, v) = gp.predict(x);
            assert!((m - y).abs() < 1e-6, "{m} vs {y}");
            assert!(v < 1e-6);
        }
    }

    #[test]
    fn ei_vanishes_at_observed_points() {
        let gp = random_model(20, 4, 9);
        for x in gp.inputs.clone() {
            assert!(gp.expected_improvement(&x).abs() < 1e-9);
        }
        // Somewhere away from the data EI is positive.
        assert!(gp.expected_improvement(&[0.5, 0.5, 0.5, 0.5]) > 0.0 || gp.expected_improvement(&[0.0; 4]) > 0.0);
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        let gp = random_model(25, 5, 1);
        let k = gp.covariance();
        assert!((&k - k.transpose()).amax() < 1e-12);
        assert!(Cholesky::new(k).is_some());
    }

    #[test]
    fn duplicate_inputs_fail_without_enough_jitter() {
        let xs = vec![vec![0.3, 0.3]; 3];
        let ys = vec![1.0, 2.0, 3.0];
        // Duplicate rows are singular up to the jitter, which keeps them PD.
        assert!(GpModel::fit(&xs, &ys, &[0.2, 0.2], 1.0, 1e-8).is_ok());
        let bad = GpModel::fit(&xs, &ys, &[0.2, 0.2], -1.0, 1e-8);
        assert!(matches!(bad, Err(BaselineError::CholeskyFailure { .. })));
    }
}
