//! Exact dynamic mode decomposition on delay-embedded 2-D positions.
//!
//! Snapshot `k` stacks positions `k .. k + embed_dim`, giving a state of
//! dimension `2 * embed_dim`. The linear operator is fit from consecutive
//! snapshot pairs through a truncated SVD and iterated to forecast.

use nalgebra::{Complex, DMatrix, DVector};

use super::BaselineError;

/// Singular values below this fraction of the largest are dropped.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DmdForecaster {
    pub embed_dim: usize,
    pub rank: usize,
    operator: DMatrix<f64>,
    reduced: DMatrix<f64>,
    first: DVector<f64>,
    last: DVector<f64>,
    n_observed: usize,
}

fn snapshot(observed: &[[f64; 2]], k: usize, m: usize) -> DVector<f64> {
    DVector::from_iterator(2 * m, observed[k..k + m].iter().flat_map(|p| [p[0], p[1]]))
}

/// Fits an exact DMD forecaster to the observed positions.
pub fn identify_dmd(observed: &[[f64; 2]], embed_dim: usize) -> Result<DmdForecaster, BaselineError> {
    let m = embed_dim;
    if m == 0 {
        return Err(BaselineError::Budget("embedding dimension must be positive".into()));
    }
    if observed.len() < 2 * m {
        return Err(BaselineError::Budget(format!(
            "need at least {} observations for embedding {m}, got {}",
            2 * m,
            observed.len()
        )));
    }
    if observed.iter().all(|p| p == &observed[0]) {
        return Err(BaselineError::DegenerateData("constant input".into()));
    }
    let n_snap = observed.len() - m + 1;
    let cols: Vec<DVector<f64>> = (0..n_snap).map(|k| snapshot(observed, k, m)).collect();
    let x = DMatrix::from_columns(&cols[..n_snap - 1]);
    let y = DMatrix::from_columns(&cols[1..]);

    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left vectors requested");
    let v_t = svd.v_t.as_ref().expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s_max = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > RANK_TOL * s_max)
        .count()
        .min(m);
    if rank == 0 || !(s_max > 0.0) {
        return Err(BaselineError::DegenerateData("effective rank 0".into()));
    }
    let ur = DMatrix::from_columns(&order[..rank].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let vr = DMatrix::from_columns(
        &order[..rank].iter().map(|&i| v_t.row(i).transpose().into_owned()).collect::<Vec<_>>(),
    );
    let s_inv = DMatrix::from_diagonal(&DVector::from_iterator(
        rank,
        order[..rank].iter().map(|&i| 1.0 / svd.singular_values[i]),
    ));
    let y_v_sinv = &y * &vr * &s_inv;
    let reduced = ur.transpose() * &y_v_sinv;
    let operator = &y_v_sinv * ur.transpose();
    Ok(DmdForecaster {
        embed_dim: m,
        rank,
        operator,
        reduced,
        first: cols[0].clone(),
        last: cols[n_snap - 1].clone(),
        n_observed: observed.len(),
    })
}

impl DmdForecaster {
    /// DMD eigenvalues (eigenvalues of the reduced operator).
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.reduced.complex_eigenvalues().iter().copied().collect()
    }

    fn roll(&self, start: &DVector<f64>, steps: usize) -> Vec<[f64; 2]> {
        let m = self.embed_dim;
        let mut z = start.clone();
        (0..steps)
            .map(|_| {
                z = &self.operator * &z;
                [z[2 * (m - 1)], z[2 * (m - 1) + 1]]
            })
            .collect()
    }

    /// The `horizon` positions following the observed window.
    pub fn forecast(&self, horizon: usize) -> Vec<[f64; 2]> {
        self.roll(&self.last, horizon)
    }

    /// Replays the fitted window from its first snapshot.
    pub fn reconstruct(&self) -> Vec<[f64; 2]> {
        let m = self.embed_dim;
        let mut out: Vec<[f64; 2]> = (0..m).map(|i| [self.first[2 * i], self.first[2 * i + 1]]).collect();
        out.extend(self.roll(&self.first, self.n_observed - m));
        out
    }
}
