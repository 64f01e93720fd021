//! Simulation alignment by uniform sampling: simulate every candidate and
//! keep the one whose trajectory is closest to the observation.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::{trajectory_objective, BaselineError, IdentificationResult, Method};
use crate::dynamics::{BallState, PhysParams};
use crate::params::ParamSpace;

/// Scores every candidate and returns the index and objective of the best
/// one. Ties go to the earliest candidate.
pub fn align_candidates(
    candidates: &[PhysParams],
    init: &BallState,
    observed: &[[f64; 2]],
    dt: f64,
) -> Option<(usize, f64)> {
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| trajectory_objective(c, init, observed, dt))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_nan() && best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best
}

/// Draws `n_samples` parameter vectors uniformly over `space` and returns the
/// best-aligned one.
pub fn identify_lsq<R: Rng + ?Sized>(
    observed: &[[f64; 2]],
    init: &BallState,
    dt: f64,
    space: &ParamSpace,
    n_samples: usize,
    rng: &mut R,
) -> Result<IdentificationResult, BaselineError> {
    if observed.is_empty() {
        return Err(BaselineError::EmptyObservation);
    }
    if n_samples == 0 {
        return Err(BaselineError::Budget("need at least one sample".into()));
    }
    let start = Instant::now();
    let candidates: Vec<PhysParams> = (0..n_samples).map(|_| space.sample_uniform(rng)).collect();
    let (idx, objective) = align_candidates(&candidates, init, observed, dt).unwrap_or((0, f64::INFINITY));
    Ok(IdentificationResult {
        theta_hat: candidates[idx],
        objective,
        n_evals: n_samples,
        wall_time: start.elapsed().as_secs_f64(),
        method: Method::Lsq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate_frames;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pool_containing_truth_returns_it() {
        let space = ParamSpace::flat_table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = PhysParams::new(0.77, -9.3, 0.012, 0.41, 0.0);
        let init = BallState::flight(1.0, 3.0, 1.2, 0.0);
        let obs = simulate_frames(&init, &truth, 80, 0.05).unwrap().normalized_positions();
        let mut pool: Vec<PhysParams> = (0..200).map(|_| space.sample_uniform(&mut rng)).collect();
        pool.insert(117, truth);
        let (idx, obj) = align_candidates(&pool, &init, &obs, 0.05).unwrap();
        assert_eq!(idx, 117);
        assert_eq!(pool[idx], truth);
        assert!(obj < 1e-12);
    }

    #[test]
    fn budget_and_empty_checks() {
        let space = ParamSpace::flat_table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = BallState::flight(1.0, 3.0, 1.2, 0.0);
        assert_eq!(
            identify_lsq(&[], &init, 0.05, &space, 10, &mut rng).unwrap_err(),
            BaselineError::EmptyObservation
        );
        assert!(identify_lsq(&[[0.1, 0.5]], &init, 0.05, &space, 0, &mut rng).is_err());
        let res = identify_lsq(&[[0.1, 0.6]], &init, 0.05, &space, 7, &mut rng).unwrap();
        assert_eq!(res.n_evals, 7);
        assert!(res.objective >= 0.0);
    }
}
