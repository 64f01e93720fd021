//! Sequential Monte Carlo over the joint ball state and physical parameters.
//!
//! Each particle carries a state and a parameter vector. Updates propagate
//! every particle through the hybrid dynamics for one frame, weight it by an
//! isotropic Gaussian likelihood of the tracked centroid in pixel space, and
//! resample systematically once the effective sample size falls below a
//! fraction of the particle count. Parameters are jittered only when
//! resampling. Forecasts roll particles forward with frozen parameters.

use std::io::{BufRead, Write};

use nalgebra::{SMatrix, SVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, normalize_position, BallState, Mode, PhysParams};
use crate::fmt::sig9;
use crate::params::{ParamRange, ParamSpace};
use crate::stats::{logsumexp, quantile, weighted_mean_std, weighted_quantiles};
use crate::video::{PixelObservation, WorldToPx};

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("the filter needs two visible observations to start")]
    NeedVisibleFrames,
    #[error("observation for frame {got} arrived after frame {current}")]
    OutOfOrder { current: usize, got: usize },
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcConfig {
    pub n_particles: usize,
    /// Standard deviation of the centroid likelihood (px).
    pub sigma_obs_px: f64,
    /// Spread of initial positions around the first centroid (px).
    pub init_pos_sd_px: f64,
    /// Spread of initial velocities around the finite difference (px/frame).
    pub init_vel_sd_px: f64,
    /// Resample when ESS drops below this fraction of the particle count.
    pub resample_threshold: f64,
    /// Parameter jitter at resampling, as a fraction of each prior range.
    pub jitter_fraction: f64,
    /// Parameter jitter after a detected change.
    pub boosted_jitter_fraction: f64,
    /// Velocity jitter after a detected change (px/frame).
    pub boosted_velocity_jitter_px: f64,
    /// Bandwidth of the shrinkage kernel applied to the joint state and
    /// parameter vector at resampling; zero disables it.
    pub kernel_bandwidth: f64,
    /// Upper bound on tempering stages per frame; zero disables tempering.
    pub max_tempering_stages: usize,
    /// Enables change detection on the one-step predictive likelihood.
    pub change_detection: bool,
    /// A frame whose predictive log-likelihood falls below this quantile of
    /// the running history counts as a change.
    pub change_percentile: f64,
    /// How far below that quantile (nats) the frame must fall.
    pub change_margin: f64,
    /// Visible frames after initialization that are never recorded in the
    /// history, while the filter is still converging.
    pub change_burn_in: usize,
    /// History length required before change detection arms.
    pub change_min_history: usize,
    /// Number of recent frames the history keeps.
    pub change_window: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 2000,
            sigma_obs_px: 1.5,
            init_pos_sd_px: 1.0,
            init_vel_sd_px: 2.0,
            resample_threshold: 0.5,
            jitter_fraction: 0.01,
            boosted_jitter_fraction: 0.05,
            boosted_velocity_jitter_px: 0.0,
            kernel_bandwidth: 0.2,
            max_tempering_stages: 10,
            change_detection: false,
            change_percentile: 0.01,
            change_margin: 0.5,
            change_burn_in: 20,
            change_min_history: 20,
            change_window: 100,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<(), SmcError> {
        let bad = |m: &str| Err(SmcError::InvalidConfig(m.to_string()));
        if self.n_particles == 0 {
            return bad("need at least one particle");
        }
        if !(self.sigma_obs_px > 0.0) {
            return bad("observation noise must be positive");
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return bad("resample threshold outside [0, 1]");
        }
        if !(0.0..1.0).contains(&self.kernel_bandwidth) {
            return bad("kernel bandwidth outside [0, 1)");
        }
        if !(0.0..1.0).contains(&self.change_percentile) {
            return bad("change percentile outside [0, 1)");
        }
        if [
            self.init_pos_sd_px,
            self.init_vel_sd_px,
            self.jitter_fraction,
            self.boosted_jitter_fraction,
            self.boosted_velocity_jitter_px,
            self.kernel_bandwidth,
            self.change_margin,
        ]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("spreads must be non-negative");
        }
        Ok(())
    }
}

/// Camera geometry and frame interval the filter observes through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub world_to_px: WorldToPx,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: BallState,
    pub theta: PhysParams,
    pub log_weight: f64,
}

/// Summary of the filter after one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPosterior {
    pub frame: usize,
    pub mean: [f64; 5],
    pub std: [f64; 5],
    pub ess: f64,
    /// Log-likelihood of the observation under the one-step prediction;
    /// NaN on occluded frames.
    pub log_predictive: f64,
    /// Mean ball position (m).
    pub pos_mean: [f64; 2],
    /// Trace of the positional covariance (m²).
    pub pos_cov_trace: f64,
    pub resampled: bool,
    /// Intermediate tempering stages used to assimilate this frame.
    pub tempering_stages: usize,
    /// Change detection fired on this frame.
    pub boosted: bool,
    /// Every particle was impossible and the weights were reset.
    pub degenerate: bool,
}

impl ParamPosterior {
    pub fn mean_params(&self) -> PhysParams {
        PhysParams::from_array(self.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanEntry {
    pub frame: usize,
    pub median: [f64; 2],
    pub q10: [f64; 2],
    pub q90: [f64; 2],
}

/// Forecast quantiles in normalized units; entry 0 is the current frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFan {
    pub entries: Vec<FanEntry>,
}

impl PredictionFan {
    pub fn horizon(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn medians(&self) -> Vec<[f64; 2]> {
        self.entries.iter().map(|e| e.median).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,med_x,med_y,q10_x,q10_y,q90_x,q90_y")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.frame,
                sig9(e.median[0]),
                sig9(e.median[1]),
                sig9(e.q10[0]),
                sig9(e.q10[1]),
                sig9(e.q90[0]),
                sig9(e.q90[1])
            )?;
        }
        Ok(())
    }

    /// Reads the prediction CSV written by this crate or by any other
    /// producer of the same schema.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SmcError> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "frame,med_x,med_y,q10_x,q10_y,q90_x,q90_y" {
            return Err(SmcError::Csv(format!("unexpected header '{header}'")));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(SmcError::Csv(format!("expected 7 fields in '{line}'")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| SmcError::Csv(format!("'{s}': {e}")));
            entries.push(FanEntry {
                frame: f[0].trim().parse().map_err(|e| SmcError::Csv(format!("frame '{}': {e}", f[0])))?,
                median: [num(f[1])?, num(f[2])?],
                q10: [num(f[3])?, num(f[4])?],
                q90: [num(f[5])?, num(f[6])?],
            });
        }
        Ok(Self { entries })
    }
}

/// One row of the posterior trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRow {
    pub frame: usize,
    pub param: String,
    pub mean: f64,
    pub std: f64,
    pub ess: f64,
}

/// Writes `frame,param,mean,std,ess` rows, one per parameter and frame.
pub fn write_posterior_csv<W: Write>(trace: &[ParamPosterior], mut out: W) -> std::io::Result<()> {
    writeln!(out, "frame,param,mean,std,ess")?;
    for p in trace {
        for (i, name) in PhysParams::NAMES.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", p.frame, name, sig9(p.mean[i]), sig9(p.std[i]), sig9(p.ess))?;
        }
    }
    Ok(())
}

/// Reads a posterior trace CSV. Parameter names are kept as written, so
/// traces with extra slots (such as positions) parse as well.
pub fn read_posterior_csv<R: BufRead>(input: R) -> Result<Vec<PosteriorRow>, SmcError> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "frame,param,mean,std,ess" {
        return Err(SmcError::Csv(format!("unexpected header '{header}'")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(SmcError::Csv(format!("expected 5 fields in '{line}'")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| SmcError::Csv(format!("'{s}': {e}")));
        rows.push(PosteriorRow {
            frame: f[0].trim().parse().map_err(|e| SmcError::Csv(format!("frame '{}': {e}", f[0])))?,
            param: f[1].trim().to_string(),
            mean: num(f[2])?,
            std: num(f[3])?,
            ess: num(f[4])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    config: SmcConfig,
    camera: Camera,
    prior: ParamSpace,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    frame: usize,
    history: Vec<f64>,
    visible_seen: usize,
}

fn place_on_surface(state: &mut BallState, theta: &PhysParams) {
    if state.mode == Mode::Rolling || state.y < theta.table_h {
        state.y = theta.table_h;
        if state.mode == Mode::Rolling {
            state.vy = 0.0;
        }
    }
}

/// Starts a filter from two visible observations: positions scatter around
/// the first centroid and velocities around the finite difference.
pub fn init_filter(
    config: &SmcConfig,
    prior: &ParamSpace,
    camera: Camera,
    first: &PixelObservation,
    second: &PixelObservation,
    seed: u64,
) -> Result<ParticleFilter, SmcError> {
    config.validate()?;
    if !first.visible || !second.visible || second.t_index <= first.t_index {
        return Err(SmcError::NeedVisibleFrames);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (second.t_index - first.t_index) as f64;
    let (vpx, vpy) = ((second.cx - first.cx) / frames, (second.cy - first.cy) / frames);
    let pos_noise = Normal::new(0.0, config.init_pos_sd_px).expect("finite spread");
    let vel_noise = Normal::new(0.0, config.init_vel_sd_px).expect("finite spread");
    let w2p = camera.world_to_px;
    let log_w = -(config.n_particles as f64).ln();
    let particles = (0..config.n_particles)
        .map(|_| {
            let theta = prior.sample_uniform(&mut rng);
            let px = first.cx + pos_noise.sample(&mut rng);
            let py = first.cy + pos_noise.sample(&mut rng);
            let dpx = vpx + vel_noise.sample(&mut rng);
            let dpy = vpy + vel_noise.sample(&mut rng);
            let (x, y) = w2p.unproject(px, py);
            let vx = dpx / w2p.sx / camera.dt;
            let vy = dpy / w2p.sy / camera.dt;
            let mut state = BallState::flight(x, y, vx, vy);
            place_on_surface(&mut state, &theta);
            Particle { state, theta, log_weight: log_w }
        })
        .collect();
    Ok(ParticleFilter {
        config: config.clone(),
        camera,
        prior: *prior,
        particles,
        rng,
        frame: first.t_index,
        history: Vec::new(),
        visible_seen: 0,
    })
}

impl ParticleFilter {
    /// Builds a filter from explicit particles; weights are normalized.
    pub fn from_particles(
        config: &SmcConfig,
        prior: &ParamSpace,
        camera: Camera,
        mut particles: Vec<Particle>,
        frame: usize,
        seed: u64,
    ) -> Result<Self, SmcError> {
        config.validate()?;
        if particles.is_empty() {
            return Err(SmcError::InvalidConfig("no particles".into()));
        }
        normalize(&mut particles);
        Ok(Self {
            config: config.clone(),
            camera,
            prior: *prior,
            particles,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame,
            history: Vec::new(),
            visible_seen: 0,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn config(&self) -> &SmcConfig {
        &self.config
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn set_change_detection(&mut self, on: bool) {
        self.config.change_detection = on;
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.log_weight.exp().powi(2)).sum::<f64>()
    }

    fn propagate(&mut self, frames: usize) {
        let dt = self.camera.dt * frames as f64;
        self.particles.par_iter_mut().for_each(|p| {
            if !p.log_weight.is_finite() {
                return;
            }
            match dynamics::step(&p.state, &p.theta, dt) {
                Ok(s) => p.state = s,
                Err(_) => p.log_weight = f64::NEG_INFINITY,
            }
        });
    }

    /// Advances the filter to the observation's frame and assimilates it.
    /// Occluded observations only propagate.
    pub fn update(&mut self, obs: &PixelObservation) -> Result<ParamPosterior, SmcError> {
        if obs.t_index <= self.frame {
            return Err(SmcError::OutOfOrder { current: self.frame, got: obs.t_index });
        }
        self.propagate(obs.t_index - self.frame);
        self.frame = obs.t_index;

        let mut boosted = false;
        let mut degenerate = false;
        let mut log_predictive = f64::NAN;
        let mut stages = 0;
        if obs.visible {
            let loglik = self.log_likelihoods(obs);
            let joint: Vec<f64> = self.particles.iter().zip(&loglik).map(|(p, l)| p.log_weight + l).collect();
            let predictive = logsumexp(&joint);
            log_predictive = predictive;
            if predictive.is_finite() {
                self.visible_seen += 1;
                if self.config.change_detection && self.visible_seen > self.config.change_burn_in {
                    let armed = self.history.len() >= self.config.change_min_history;
                    let cut = if armed { quantile(&self.history, self.config.change_percentile) } else { f64::NEG_INFINITY };
                    boosted = predictive < cut - self.config.change_margin;
                    // Frames below the quantile stay out of the history even
                    // when they fall short of the margin.
                    if predictive >= cut {
                        self.history.push(predictive);
                        if self.history.len() > self.config.change_window {
                            self.history.remove(0);
                        }
                    }
                }
                stages = self.assimilate(obs, loglik);
            } else {
                degenerate = true;
            }
        } else if self.particles.iter().all(|p| !p.log_weight.is_finite()) {
            degenerate = true;
        }
        if degenerate {
            let w = -(self.particles.len() as f64).ln();
            for p in &mut self.particles {
                p.log_weight = w;
            }
        }
        normalize(&mut self.particles);

        let resampled = boosted || self.ess() < self.config.resample_threshold * self.particles.len() as f64;
        if resampled {
            let frac = if boosted { self.config.boosted_jitter_fraction } else { self.config.jitter_fraction };
            self.resample(frac, boosted);
        }
        let mut post = self.posterior();
        post.resampled = resampled;
        post.boosted = boosted;
        post.degenerate = degenerate;
        post.tempering_stages = stages;
        post.log_predictive = log_predictive;
        Ok(post)
    }

    fn log_likelihoods(&self, obs: &PixelObservation) -> Vec<f64> {
        let sigma2 = self.config.sigma_obs_px * self.config.sigma_obs_px;
        let norm = -(2.0 * std::f64::consts::PI * sigma2).ln();
        let w2p = self.camera.world_to_px;
        self.particles
            .iter()
            .map(|p| {
                let (px, py) = w2p.project(p.state.x, p.state.y);
                norm - 0.5 * ((px - obs.cx).powi(2) + (py - obs.cy).powi(2)) / sigma2
            })
            .collect()
    }

    /// Folds the likelihood into the weights. When the full likelihood would
    /// drop the ESS below the resampling threshold, it is applied in tempered
    /// fractions with a resample and kernel move after each; returns the
    /// number of intermediate stages.
    fn assimilate(&mut self, obs: &PixelObservation, mut loglik: Vec<f64>) -> usize {
        let target = self.config.resample_threshold * self.particles.len() as f64;
        let mut remaining = 1.0;
        let mut stages = 0;
        loop {
            let ess_at = |phi: f64| {
                let lw: Vec<f64> = self.particles.iter().zip(&loglik).map(|(p, l)| p.log_weight + phi * l).collect();
                let z = logsumexp(&lw);
                1.0 / lw.iter().map(|v| (2.0 * (v - z)).exp()).sum::<f64>()
            };
            if stages >= self.config.max_tempering_stages || ess_at(remaining) >= target {
                break;
            }
            let (mut lo, mut hi) = (0.0, remaining);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if ess_at(mid) >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let phi = lo.max(1e-3 * remaining);
            for (p, l) in self.particles.iter_mut().zip(&loglik) {
                p.log_weight += phi * l;
            }
            normalize(&mut self.particles);
            self.resample(0.0, false);
            remaining -= phi;
            stages += 1;
            loglik = self.log_likelihoods(obs);
        }
        for (p, l) in self.particles.iter_mut().zip(&loglik) {
            p.log_weight += remaining * l;
        }
        stages
    }

    fn resample(&mut self, frac: f64, boosted: bool) {
        let n = self.particles.len();
        let w: Vec<f64> = self.particles.iter().map(|p| p.log_weight.exp()).collect();
        let ranges = self.prior.ranges();
        let zs: Vec<SVector<f64, JOINT>> = self.particles.iter().map(|p| pack(p, &ranges)).collect();
        let (mean, root) = joint_moments(&zs, &w);
        let u0: f64 = self.rng.random::<f64>() / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut cum = 0.0;
        let mut i = 0;
        for k in 0..n {
            let target = u0 + k as f64 / n as f64;
            while i < n - 1 && cum + w[i] < target {
                cum += w[i];
                i += 1;
            }
            out.push((self.particles[i], zs[i]));
        }
        let h = self.config.kernel_bandwidth;
        let shrink = (1.0 - h * h).sqrt();
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let vel_sd = if boosted { self.config.boosted_velocity_jitter_px } else { 0.0 };
        let w2p = self.camera.world_to_px;
        let log_w = -(n as f64).ln();
        let mut moved: Vec<SVector<f64, JOINT>> = out
            .iter()
            .map(|&(_, z)| {
                if h > 0.0 {
                    let eps = SVector::<f64, JOINT>::from_fn(|_, _| unit.sample(&mut self.rng));
                    z * shrink + mean * (1.0 - shrink) + root * eps * h
                } else {
                    z
                }
            })
            .collect();
        // Each resample loses a little spread to sampling noise, and tempering
        // resamples many times per frame. Restore the weighted moments of the
        // parameters so unobserved ones do not drift toward a point.
        let target_sd: Vec<f64> = (0..JOINT).map(|k| (root.row(k) * root.row(k).transpose())[0].max(0.0).sqrt()).collect();
        for k in 4..JOINT {
            let m = moved.iter().map(|z| z[k]).sum::<f64>() / n as f64;
            let sd = (moved.iter().map(|z| (z[k] - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sd > 1e-12 && target_sd[k] > 0.0 {
                let scale = target_sd[k] / sd;
                for z in &mut moved {
                    z[k] = mean[k] + (z[k] - m) * scale;
                }
            }
        }
        let mut particles: Vec<Particle> = out.into_iter().map(|(p, _)| p).collect();
        for (p, z) in particles.iter_mut().zip(moved) {
            let mut theta = unpack_theta(&z, &ranges);
            for (v, r) in theta.iter_mut().zip(ranges.iter()) {
                if frac > 0.0 && !r.is_degenerate() {
                    *v += frac * r.width() * unit.sample(&mut self.rng);
                }
                *v = r.reflect(*v);
            }
            p.theta = PhysParams::from_array(theta);
            p.state.x = z[0];
            p.state.vx = z[2];
            if p.state.mode == Mode::Flight {
                p.state.y = z[1];
                p.state.vy = z[3];
                if vel_sd > 0.0 {
                    p.state.vx += vel_sd * unit.sample(&mut self.rng) / w2p.sx / self.camera.dt;
                    p.state.vy += vel_sd * unit.sample(&mut self.rng) / w2p.sy / self.camera.dt;
                }
            }
            place_on_surface(&mut p.state, &p.theta);
            p.log_weight = log_w;
        }
        self.particles = particles;
    }

    /// Current weighted summary without changing the filter.
    pub fn posterior(&self) -> ParamPosterior {
        let w: Vec<f64> = self.particles.iter().map(|p| p.log_weight.exp()).collect();
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        for k in 0..5 {
            let it = self.particles.iter().zip(&w).map(move |(p, &w)| (p.theta.to_array()[k], w));
            (mean[k], std[k]) = weighted_mean_std(it);
        }
        let (mx, sx) = weighted_mean_std(self.particles.iter().zip(&w).map(|(p, &w)| (p.state.x, w)));
        let (my, sy) = weighted_mean_std(self.particles.iter().zip(&w).map(|(p, &w)| (p.state.y, w)));
        ParamPosterior {
            frame: self.frame,
            mean,
            std,
            ess: self.ess(),
            log_predictive: f64::NAN,
            pos_mean: [mx, my],
            pos_cov_trace: sx * sx + sy * sy,
            resampled: false,
            tempering_stages: 0,
            boosted: false,
            degenerate: false,
        }
    }

    /// Rolls every particle `horizon` frames ahead with its parameters frozen
    /// and summarizes the normalized positions per frame.
    pub fn predict(&self, horizon: usize) -> PredictionFan {
        let dt = self.camera.dt;
        let paths: Vec<Vec<[f64; 2]>> = self
            .particles
            .par_iter()
            .map(|p| {
                let mut s = p.state;
                let mut path = Vec::with_capacity(horizon + 1);
                path.push(normalize_position(s.x, s.y));
                for _ in 0..horizon {
                    if let Ok(next) = dynamics::step(&s, &p.theta, dt) {
                        s = next;
                    }
                    path.push(normalize_position(s.x, s.y));
                }
                path
            })
            .collect();
        let w: Vec<f64> = self.particles.iter().map(|p| p.log_weight.exp()).collect();
        let entries = (0..=horizon)
            .into_par_iter()
            .map(|k| {
                let mut qs = [[0.0; 3]; 2];
                for (axis, q) in qs.iter_mut().enumerate() {
                    let mut pairs: Vec<(f64, f64)> = paths.iter().zip(&w).map(|(path, &w)| (path[k][axis], w)).collect();
                    let v = weighted_quantiles(&mut pairs, &[0.1, 0.5, 0.9]);
                    *q = [v[0], v[1], v[2]];
                }
                FanEntry {
                    frame: self.frame + k,
                    median: [qs[0][1], qs[1][1]],
                    q10: [qs[0][0], qs[1][0]],
                    q90: [qs[0][2], qs[1][2]],
                }
            })
            .collect();
        PredictionFan { entries }
    }

    /// Runs the filter over a sequence of observations and returns one
    /// posterior per observation after the filter's current frame.
    pub fn run(&mut self, observations: &[PixelObservation]) -> Result<Vec<ParamPosterior>, SmcError> {
        let start = self.frame;
        observations.iter().filter(|o| o.t_index > start).map(|o| self.update(o)).collect()
    }

    /// Like [`ParticleFilter::run`] with change detection switched on.
    pub fn track_changing(&mut self, observations: &[PixelObservation]) -> Result<Vec<ParamPosterior>, SmcError> {
        self.set_change_detection(true);
        self.run(observations)
    }
}

const JOINT: usize = 9;
const UNIT_EPS: f64 = 1e-6;

/// Kernel coordinates: the state as is and each free parameter as the logit
/// of its position in the prior range, so kernel moves never leave the range.
fn pack(p: &Particle, ranges: &[ParamRange; 5]) -> SVector<f64, JOINT> {
    let t = p.theta.to_array();
    let mut z = SVector::<f64, JOINT>::from([p.state.x, p.state.y, p.state.vx, p.state.vy, 0.0, 0.0, 0.0, 0.0, 0.0]);
    for k in 0..5 {
        z[4 + k] = if ranges[k].is_degenerate() {
            t[k]
        } else {
            let u = ranges[k].to_unit(t[k]).clamp(UNIT_EPS, 1.0 - UNIT_EPS);
            (u / (1.0 - u)).ln()
        };
    }
    z
}

fn unpack_theta(z: &SVector<f64, JOINT>, ranges: &[ParamRange; 5]) -> [f64; 5] {
    std::array::from_fn(|k| {
        if ranges[k].is_degenerate() {
            ranges[k].lo
        } else {
            ranges[k].from_unit(1.0 / (1.0 + (-z[4 + k]).exp()))
        }
    })
}

/// Weighted mean of the joint state and parameter vector and a square root
/// of its covariance.
fn joint_moments(zs: &[SVector<f64, JOINT>], w: &[f64]) -> (SVector<f64, JOINT>, SMatrix<f64, JOINT, JOINT>) {
    let mut mean = SVector::<f64, JOINT>::zeros();
    for (z, &w) in zs.iter().zip(w) {
        mean += z * w;
    }
    let mut cov = SMatrix::<f64, JOINT, JOINT>::zeros();
    for (z, &w) in zs.iter().zip(w) {
        let d = z - mean;
        cov += d * d.transpose() * w;
    }
    // Unbiased for unequal weights; the plug-in estimate loses a factor
    // (1 - sum w^2) per resample and compounds over many stages.
    // Parameters move jointly with the state but independently of each
    // other; sample correlations between parameters the data says nothing
    // about otherwise leak information from the identified ones.
    for i in 4..JOINT {
        for j in 4..JOINT {
            if i != j {
                cov[(i, j)] = 0.0;
            }
        }
    }
    let w2: f64 = w.iter().map(|w| w * w).sum();
    if w2 < 1.0 {
        cov /= 1.0 - w2;
    }
    let eig = SymmetricEigen::new(cov);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = eig.eigenvectors * SMatrix::from_diagonal(&sqrt_vals);
    (mean, root)
}

fn normalize(particles: &mut [Particle]) {
    let lw: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let z = logsumexp(&lw);
    if z.is_finite() {
        for p in particles.iter_mut() {
            p.log_weight -= z;
        }
    } else {
        let w = -(particles.len() as f64).ln();
        for p in particles.iter_mut() {
            p.log_weight = w;
        }
    }
}

/// Starts a filter on the first two consecutive visible observations of a
/// sequence and runs it over the rest.
pub fn filter_sequence(
    config: &SmcConfig,
    prior: &ParamSpace,
    camera: Camera,
    observations: &[PixelObservation],
    seed: u64,
) -> Result<(ParticleFilter, Vec<ParamPosterior>), SmcError> {
    let start = observations
        .windows(2)
        .position(|w| w[0].visible && w[1].visible)
        .ok_or(SmcError::NeedVisibleFrames)?;
    let mut filter = init_filter(config, prior, camera, &observations[start], &observations[start + 1], seed)?;
    let trace = filter.run(&observations[start + 1..])?;
    Ok((filter, trace))
}
