//! Bayesian optimization of the alignment objective with expected
//! improvement on a GP surrogate over the unit cube.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gp::GpModel;
use super::{trajectory_objective, BaselineError, IdentificationResult, Method};
use crate::dynamics::BallState;
use crate::params::ParamSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_candidates: usize,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub jitter: f64,
    pub max_retries: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self { n_init: 5, n_candidates: 1024, lengthscale: 0.2, signal_var: 1.0, jitter: 1e-8, max_retries: 3 }
    }
}

/// Every evaluation made by [`minimize`], in order.
#[derive(Debug, Clone, Default)]
pub struct BoTrace {
    pub inputs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Proposals that fell back to random sampling after Cholesky failures.
    pub random_fallbacks: usize,
}

impl BoTrace {
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
        best
    }
}

fn random_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

fn fit_with_retries(trace: &BoTrace, dim: usize, cfg: &BoConfig) -> Option<GpModel> {
    // Non-finite objectives are capped at the worst finite value.
    let worst = trace.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let targets: Vec<f64> = trace.values.iter().map(|&v| if v.is_finite() { v } else { worst }).collect();
    let ls = vec![cfg.lengthscale; dim];
    let mut jitter = cfg.jitter;
    for _ in 0..=cfg.max_retries {
        match GpModel::fit(&trace.inputs, &targets, &ls, cfg.signal_var, jitter) {
            Ok(gp) => return Some(gp),
            Err(_) => jitter *= 10.0,
        }
    }
    None
}

/// Minimizes `objective` over `[0, 1]^dim` with `n_evals` evaluations.
pub fn minimize<R: Rng + ?Sized>(
    objective: impl Fn(&[f64]) -> f64,
    dim: usize,
    n_evals: usize,
    cfg: &BoConfig,
    rng: &mut R,
) -> Result<BoTrace, BaselineError> {
    if n_evals <= cfg.n_init {
        return Err(BaselineError::Budget(format!(
            "{n_evals} evaluations leave nothing after {} initial points",
            cfg.n_init
        )));
    }
    let mut trace = BoTrace::default();
    for _ in 0..cfg.n_init {
        let x = random_point(dim, rng);
        trace.values.push(objective(&x));
        trace.inputs.push(x);
    }
    while trace.values.len() < n_evals {
        // Candidates are drawn even when the fit fails so the random stream
        // does not depend on numerical luck.
        let candidates: Vec<Vec<f64>> = (0..cfg.n_candidates).map(|_| random_point(dim, rng)).collect();
        let x = match fit_with_retries(&trace, dim, cfg).and_then(|gp| gp.argmax_ei(&candidates)) {
            Some((idx, _)) => candidates[idx].clone(),
            None => {
                trace.random_fallbacks += 1;
                random_point(dim, rng)
            }
        };
        trace.values.push(objective(&x));
        trace.inputs.push(x);
    }
    Ok(trace)
}

/// Identifies parameters by Bayesian optimization of the trajectory
/// objective over the free dimensions of `space`.
pub fn identify_bo<R: Rng + ?Sized>(
    observed: &[[f64; 2]],
    init: &BallState,
    dt: f64,
    space: &ParamSpace,
    n_evals: usize,
    cfg: &BoConfig,
    rng: &mut R,
) -> Result<IdentificationResult, BaselineError> {
    if observed.is_empty() {
        return Err(BaselineError::EmptyObservation);
    }
    let start = Instant::now();
    let dim = space.free_dims().len();
    let trace = minimize(
        |u| trajectory_objective(&space.from_unit(u), init, observed, dt),
        dim,
        n_evals,
        cfg,
        rng,
    )?;
    let (idx, objective) = trace.best().expect("at least one evaluation");
    Ok(IdentificationResult {
        theta_hat: space.from_unit(&trace.inputs[idx]),
        objective,
        n_evals: trace.values.len(),
        wall_time: start.elapsed().as_secs_f64(),
        method: Method::Bo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bowl(u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(i, v)| (v - 0.3 - 0.1 * i as f64).powi(2)).sum()
    }

    #[test]
    fn budget_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(minimize(bowl, 2, 5, &BoConfig::default(), &mut rng).is_err());
        let trace = minimize(bowl, 2, 6, &BoConfig::default(), &mut rng).unwrap();
        assert_eq!(trace.values.len(), 6);
    }

    #[test]
    fn beats_random_search_on_a_bowl() {
        let cfg = BoConfig::default();
        let mut bo_best = Vec::new();
        let mut rs_best = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bo_best.push(minimize(bowl, 4, 20, &cfg, &mut rng).unwrap().best().unwrap().1);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            rs_best.push((0..20).map(|_| bowl(&random_point(4, &mut rng))).fold(f64::INFINITY, f64::min));
        }
        let med = |v: &[f64]| crate::stats::median(v);
        assert!(med(&bo_best) <= med(&rs_best), "{} vs {}", med(&bo_best), med(&rs_best));
    }

    #[test]
    fn deterministic_under_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            minimize(bowl, 3, 10, &BoConfig::default(), &mut rng).unwrap().values
        };
        assert_eq!(run(), run());
    }
}
