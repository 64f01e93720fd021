//! Evaluation grids: identification error against observed frames, forward
//! prediction after a few observation windows, posterior traces across
//! parameter switches, and the interception table.
//!
//! Each suite returns plain rows that the CLI writes as CSV and the
//! acceptance tests check directly.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{identify_bo, identify_dmd, identify_lsq, BaselineError, BoConfig};
use crate::dataset::{self, DatasetError, GeneratedClip, RandomizationSpec, Regime, Resolution, Split};
use crate::dynamics::{self, BallState, DynamicsError, Mode, PhysParams};
use crate::fmt::sig9;
use crate::interception::{self, CampaignRow, InterceptConfig, InterceptError, Policy};
use crate::params::{ParamRange, ParamSpace};
use crate::smc::{self, Camera, ParamPosterior, SmcConfig, SmcError};
use crate::stats::{median, mse};
use crate::video::{self, VideoError, DEFAULT_THRESHOLD};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Filter(#[from] SmcError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Intercept(#[from] InterceptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sysid,
    Forward,
    Varying,
    Intercept,
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Suite::Sysid => "sysid",
            Suite::Forward => "forward",
            Suite::Varying => "varying",
            Suite::Intercept => "intercept",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sysid" => Ok(Suite::Sysid),
            "forward" => Ok(Suite::Forward),
            "varying" => Ok(Suite::Varying),
            "intercept" => Ok(Suite::Intercept),
            other => Err(format!("unknown suite '{other}' (expected sysid, forward, varying or intercept)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub seed: u64,
    /// 28×28 test clips used by the identification and forecast grids.
    pub clips: usize,
    pub n_frames: usize,
    pub sysid_frames: Vec<usize>,
    pub lsq_samples: usize,
    pub bo_evals: usize,
    pub bo: BoConfig,
    pub forward_windows: Vec<usize>,
    pub horizon: usize,
    pub dmd_embed: usize,
    pub filter: SmcConfig,
    /// Filter used on the 100×50 parameter-switch scenarios.
    pub varying_filter: SmcConfig,
    pub varying_switch_frame: usize,
    pub varying_frames: usize,
    /// Frames after the switch at which the response is read off.
    pub varying_lag: usize,
    pub intercept: InterceptConfig,
    pub intercept_trials: usize,
    pub intercept_seeds: Vec<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clips: 30,
            n_frames: 200,
            sysid_frames: vec![10, 20, 50, 100, 150, 200],
            lsq_samples: 2000,
            bo_evals: 20,
            bo: BoConfig::default(),
            forward_windows: vec![20, 50, 100],
            horizon: 100,
            dmd_embed: 8,
            filter: SmcConfig { sigma_obs_px: 0.3, ..SmcConfig::default() },
            varying_filter: SmcConfig { n_particles: 5000, sigma_obs_px: 1.0, change_detection: true, ..SmcConfig::default() },
            varying_switch_frame: 60,
            varying_frames: 110,
            varying_lag: 30,
            intercept: InterceptConfig::default(),
            intercept_trials: 35,
            intercept_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        if self.clips == 0 || self.n_frames < 2 {
            return bad("need at least one clip of two frames".into());
        }
        if let Some(&w) = self.sysid_frames.iter().find(|&&w| w < 2 || w > self.n_frames) {
            return bad(format!("identification window {w} outside 2..={}", self.n_frames));
        }
        if let Some(&w) = self.forward_windows.iter().find(|&&w| w + self.horizon > self.n_frames) {
            return bad(format!("window {w} plus horizon {} exceeds {} frames", self.horizon, self.n_frames));
        }
        if let Some(&w) = self.forward_windows.iter().find(|&&w| w < 2 * self.dmd_embed) {
            return bad(format!("window {w} shorter than twice the DMD embedding"));
        }
        if self.bo_evals <= self.bo.n_init || self.lsq_samples == 0 {
            return bad("baseline budgets too small".into());
        }
        if self.varying_switch_frame + self.varying_lag >= self.varying_frames {
            return bad("varying scenarios end before the read-off frame".into());
        }
        self.filter.validate()?;
        self.varying_filter.validate()?;
        self.intercept.validate()?;
        Ok(())
    }

    fn spec(&self) -> RandomizationSpec {
        RandomizationSpec::small(Split::Test, self.seed)
    }

    fn clips(&self) -> Result<Vec<GeneratedClip>, BenchError> {
        Ok(dataset::generate_clips(&self.spec(), self.clips, Resolution::SMALL, self.n_frames, self.n_frames)?)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Expected squared range-normalized error of a draw from the uniform prior,
/// averaged over the free dimensions.
pub fn prior_error(space: &ParamSpace, truth: &PhysParams) -> f64 {
    let r = space.ranges();
    let t = truth.to_array();
    let dims = space.free_dims();
    if dims.is_empty() {
        return 0.0;
    }
    dims.iter()
        .map(|&i| {
            let (a, b) = ((t[i] - r[i].lo) / r[i].width(), (r[i].hi - t[i]) / r[i].width());
            (a.powi(3) + b.powi(3)) / 3.0
        })
        .sum::<f64>()
        / dims.len() as f64
}

/// Filter run over one clip: the posterior after each requested frame count
/// and, when `horizon > 0`, the median forecast from there.
struct SmcCheckpoint {
    posterior: ParamPosterior,
    forecast: Vec<[f64; 2]>,
    /// Wall time of the filter from initialization to this checkpoint.
    seconds: f64,
}

fn smc_checkpoints(
    cfg: &SmcConfig,
    prior: &ParamSpace,
    clip: &GeneratedClip,
    counts: &[usize],
    horizon: usize,
    seed: u64,
) -> Result<Vec<SmcCheckpoint>, BenchError> {
    let t0 = Instant::now();
    let obs = video::track(&clip.clip, DEFAULT_THRESHOLD);
    let camera = Camera { world_to_px: clip.clip.meta.world_to_px, dt: clip.trajectory.dt };
    let start = obs.windows(2).position(|w| w[0].visible && w[1].visible).ok_or(SmcError::NeedVisibleFrames)?;
    let mut filter = smc::init_filter(cfg, prior, camera, &obs[start], &obs[start + 1], seed)?;
    let mut out = Vec::with_capacity(counts.len());
    for &n in counts {
        while filter.frame() + 1 < n {
            filter.update(&obs[filter.frame() + 1])?;
        }
        let seconds = t0.elapsed().as_secs_f64();
        let forecast = if horizon > 0 {
            filter.predict(horizon).entries[1..].iter().map(|e| e.median).collect()
        } else {
            Vec::new()
        };
        out.push(SmcCheckpoint { posterior: filter.posterior(), forecast, seconds });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidRow {
    pub method: String,
    pub frames: usize,
    pub clips: usize,
    pub median_error: f64,
    /// Median squared normalized error per component (e, g, c, r, table_h).
    pub median_component: [f64; 5],
    pub median_seconds: f64,
}

#[derive(Default)]
struct Tally {
    error: Vec<f64>,
    comp: [Vec<f64>; 5],
    secs: Vec<f64>,
}

impl Tally {
    fn push(&mut self, space: &ParamSpace, est: &PhysParams, truth: &PhysParams, secs: f64) {
        self.error.push(space.normalized_error(est, truth));
        let (a, b) = (est.to_array(), truth.to_array());
        for i in 0..5 {
            self.comp[i].push(space.component_error(i, a[i], b[i]));
        }
        self.secs.push(secs);
    }

    fn row(&self, method: &str, frames: usize) -> SysidRow {
        SysidRow {
            method: method.to_string(),
            frames,
            clips: self.error.len(),
            median_error: median(&self.error),
            median_component: std::array::from_fn(|i| median(&self.comp[i])),
            median_seconds: median(&self.secs),
        }
    }
}

/// Identification error against the number of observed frames for the
/// filter, sampling alignment at full and at the BO budget, BO, and the
/// uniform prior.
pub fn run_sysid(cfg: &BenchConfig) -> Result<Vec<SysidRow>, BenchError> {
    cfg.validate()?;
    let space = cfg.spec().ranges;
    let clips = cfg.clips()?;
    let lsq_budget = format!("lsq-{}", cfg.bo_evals);
    let per_clip: Vec<Vec<(String, usize, PhysParams, PhysParams, f64)>> = clips
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<_, BenchError> {
            let truth = g.label.params_at(0);
            let dt = g.trajectory.dt;
            let mut rows = Vec::new();
            let cps = smc_checkpoints(&cfg.filter, &space, g, &cfg.sysid_frames, 0, cfg.seed ^ i as u64)?;
            for (&w, cp) in cfg.sysid_frames.iter().zip(&cps) {
                rows.push(("smc".to_string(), w, cp.posterior.mean_params(), truth, cp.seconds));
                let observed = &g.label.positions[..w];
                let mut rng = cfg.rng(1 + 4 * i as u64);
                let r = identify_lsq(observed, &g.label.init, dt, &space, cfg.lsq_samples, &mut rng)?;
                rows.push(("lsq".to_string(), w, r.theta_hat, truth, r.wall_time));
                let r = identify_lsq(observed, &g.label.init, dt, &space, cfg.bo_evals, &mut rng)?;
                rows.push((lsq_budget.clone(), w, r.theta_hat, truth, r.wall_time));
                let r = identify_bo(observed, &g.label.init, dt, &space, cfg.bo_evals, &cfg.bo, &mut rng)?;
                rows.push(("bo".to_string(), w, r.theta_hat, truth, r.wall_time));
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for &w in &cfg.sysid_frames {
        for method in ["smc", "lsq", lsq_budget.as_str(), "bo"] {
            let mut t = Tally::default();
            for (m, fw, est, truth, secs) in per_clip.iter().flatten() {
                if m == method && *fw == w {
                    t.push(&space, est, truth, *secs);
                }
            }
            out.push(t.row(method, w));
        }
        let errs: Vec<f64> = clips.iter().map(|g| prior_error(&space, &g.label.params_at(0))).collect();
        out.push(SysidRow {
            method: "prior".to_string(),
            frames: w,
            clips: errs.len(),
            median_error: median(&errs),
            median_component: [f64::NAN; 5],
            median_seconds: 0.0,
        });
    }
    Ok(out)
}

pub fn write_sysid_csv<W: Write>(rows: &[SysidRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,frames,clips,median_error,median_e,median_g,median_c,median_r,median_table_h,median_seconds")?;
    for r in rows {
        let c: Vec<String> = r.median_component.iter().map(|v| sig9(*v)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.frames,
            r.clips,
            sig9(r.median_error),
            c.join(","),
            sig9(r.median_seconds)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardRow {
    pub method: String,
    pub observed: usize,
    pub horizon: usize,
    pub clips: usize,
    pub median_mse: f64,
    pub mean_mse: f64,
}

/// Forecast error over the next `horizon` frames after each observation
/// window, in normalized units², for the filter, sampling alignment and DMD.
pub fn run_forward(cfg: &BenchConfig) -> Result<Vec<ForwardRow>, BenchError> {
    cfg.validate()?;
    let space = cfg.spec().ranges;
    let clips = cfg.clips()?;
    let h = cfg.horizon;
    let per_clip: Vec<[Vec<f64>; 3]> = clips
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<_, BenchError> {
            let truth = &g.label.positions;
            let dt = g.trajectory.dt;
            let mut errs: [Vec<f64>; 3] = Default::default();
            let cps = smc_checkpoints(&cfg.filter, &space, g, &cfg.forward_windows, h, cfg.seed ^ i as u64)?;
            for (&w, cp) in cfg.forward_windows.iter().zip(&cps) {
                let future = &truth[w..w + h];
                errs[0].push(mse(&cp.forecast, future));

                let mut rng = cfg.rng(1 + 4 * i as u64);
                let r = identify_lsq(&truth[..w], &g.label.init, dt, &space, cfg.lsq_samples, &mut rng)?;
                let rollout = dynamics::simulate_frames(&g.label.init, &r.theta_hat, w + h, dt)?;
                errs[1].push(mse(&rollout.normalized_positions()[w..], future));

                let dmd = identify_dmd(&truth[..w], cfg.dmd_embed)?;
                errs[2].push(mse(&dmd.forecast(h), future));
            }
            Ok(errs)
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for (m, method) in ["smc", "lsq", "dmd"].iter().enumerate() {
        for (k, &w) in cfg.forward_windows.iter().enumerate() {
            let v: Vec<f64> = per_clip.iter().map(|e| e[m][k]).collect();
            out.push(ForwardRow {
                method: method.to_string(),
                observed: w,
                horizon: h,
                clips: v.len(),
                median_mse: median(&v),
                mean_mse: v.iter().sum::<f64>() / v.len() as f64,
            });
        }
    }
    Ok(out)
}

pub fn write_forward_csv<W: Write>(rows: &[ForwardRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "method,observed,horizon,clips,median_mse,mean_mse")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.method, r.observed, r.horizon, r.clips, sig9(r.median_mse), sig9(r.mean_mse))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchKind {
    /// Gravity changes; the flight arcs show it immediately.
    G,
    /// Rolling retention changes while the ball is still airborne.
    R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaryingScenario {
    pub id: usize,
    pub kind: SwitchKind,
    pub init: BallState,
    pub before: PhysParams,
    pub after: PhysParams,
}

/// Switch scenarios on a flat surface: five gravity pairs in both
/// directions crossed with four launches, once switching g and once r.
pub fn varying_scenarios() -> Vec<VaryingScenario> {
    let pairs = [(-7.0, -12.0), (-12.0, -7.0), (-8.0, -11.5), (-11.5, -8.0), (-9.81, -12.5)];
    let launches = [(1.0, 3.0, 0.3, 2.0), (0.8, 4.0, 0.5, 0.0), (1.5, 3.5, 0.2, 1.0), (0.6, 2.5, 0.4, 3.0)];
    let mut out = Vec::new();
    for kind in [SwitchKind::G, SwitchKind::R] {
        for (gi, &(g0, g1)) in pairs.iter().enumerate() {
            for &(x, y, vx, vy) in &launches {
                let before = PhysParams::new(0.85 + 0.02 * gi as f64, g0, 0.01, 0.2, 0.0);
                let after = match kind {
                    SwitchKind::G => PhysParams { g: g1, ..before },
                    SwitchKind::R => PhysParams { r: 0.6, ..before },
                };
                out.push(VaryingScenario { id: out.len(), kind, init: BallState::flight(x, y, vx, vy), before, after });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaryingOutcome {
    pub scenario: VaryingScenario,
    /// No frame up to the read-off is in rolling mode.
    pub airborne: bool,
    /// Fraction of the way the switched component's posterior mean moved
    /// from the old to the new value at the read-off frame.
    pub progress: f64,
    /// Posterior mean and stddev of the switched component on the last
    /// frame before the switch and at the read-off frame.
    pub mean_before: f64,
    pub std_before: f64,
    pub mean_after: f64,
    pub std_after: f64,
    pub trace: Vec<ParamPosterior>,
}

impl VaryingOutcome {
    /// Shift of the posterior mean in units of the pre-switch stddev.
    pub fn shift_z(&self) -> f64 {
        (self.mean_after - self.mean_before).abs() / self.std_before.max(f64::MIN_POSITIVE)
    }
}

/// Runs the filter with change detection over every scenario, rendered at
/// 100×50 with a 0.05 s frame interval.
pub fn run_varying(cfg: &BenchConfig) -> Result<Vec<VaryingOutcome>, BenchError> {
    cfg.validate()?;
    let dt = dynamics::REFERENCE_DT;
    let meta = Resolution::WIDE.render_meta();
    let camera = Camera { world_to_px: meta.world_to_px, dt };
    let prior = ParamSpace::flat_table();
    let (switch, n, lag) = (cfg.varying_switch_frame, cfg.varying_frames, cfg.varying_lag);
    varying_scenarios()
        .into_par_iter()
        .map(|sc| {
            let regimes = [Regime { start_frame: 0, params: sc.before }, Regime { start_frame: switch, params: sc.after }];
            let (traj, _) = dataset::simulate_regimes(&sc.init, &regimes, n, dt)?;
            let airborne = traj.states[..=switch + lag].iter().all(|s| s.mode != Mode::Rolling);
            let clip = video::render(&traj, &meta)?;
            let obs = video::track(&clip, DEFAULT_THRESHOLD);
            let (_, trace) = smc::filter_sequence(&cfg.varying_filter, &prior, camera, &obs, cfg.seed ^ (sc.id as u64 + 1))?;
            let at = |f: usize| trace.iter().find(|p| p.frame == f).cloned().ok_or(SmcError::NeedVisibleFrames);
            let (pre, post) = (at(switch - 1)?, at(switch + lag)?);
            let k = match sc.kind {
                SwitchKind::G => 1,
                SwitchKind::R => 3,
            };
            let (old, new) = (sc.before.to_array()[k], sc.after.to_array()[k]);
            Ok(VaryingOutcome {
                progress: (post.mean[k] - old) / (new - old),
                mean_before: pre.mean[k],
                std_before: pre.std[k],
                mean_after: post.mean[k],
                std_after: post.std[k],
                airborne,
                scenario: sc,
                trace,
            })
        })
        .collect()
}

/// Writes one summary row per scenario.
pub fn write_varying_csv<W: Write>(outcomes: &[VaryingOutcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "scenario,kind,old,new,airborne,progress,mean_before,std_before,mean_after,std_after")?;
    for o in outcomes {
        let k = if o.scenario.kind == SwitchKind::G { 1 } else { 3 };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            o.scenario.id,
            if o.scenario.kind == SwitchKind::G { "g" } else { "r" },
            sig9(o.scenario.before.to_array()[k]),
            sig9(o.scenario.after.to_array()[k]),
            o.airborne,
            sig9(o.progress),
            sig9(o.mean_before),
            sig9(o.std_before),
            sig9(o.mean_after),
            sig9(o.std_after)
        )?;
    }
    Ok(())
}

/// Writes the per-frame posterior of every scenario:
/// `scenario,frame,param,mean,std,truth,boosted`.
pub fn write_varying_traces<W: Write>(outcomes: &[VaryingOutcome], switch: usize, mut out: W) -> std::io::Result<()> {
    const NAMES: [&str; 5] = ["e", "g", "c", "r", "table_h"];
    writeln!(out, "scenario,frame,param,mean,std,truth,boosted")?;
    for o in outcomes {
        for p in &o.trace {
            let truth = if p.frame < switch { o.scenario.before } else { o.scenario.after }.to_array();
            for k in 0..5 {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    o.scenario.id,
                    p.frame,
                    NAMES[k],
                    sig9(p.mean[k]),
                    sig9(p.std[k]),
                    sig9(truth[k]),
                    p.boosted as u8
                )?;
            }
        }
    }
    Ok(())
}

pub fn run_intercept(cfg: &BenchConfig) -> Result<Vec<CampaignRow>, BenchError> {
    cfg.validate()?;
    Ok(interception::run_campaign(&cfg.intercept, cfg.intercept_trials, &Policy::ALL, &cfg.intercept_seeds)?)
}

/// Prior stddev of each component under `space`.
pub fn prior_std(space: &ParamSpace) -> [f64; 5] {
    let r: [ParamRange; 5] = space.ranges();
    std::array::from_fn(|i| r[i].uniform_std())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_error_matches_sampling() {
        let space = ParamSpace::flat_table();
        let truth = PhysParams::new(0.7, -10.0, 0.04, 0.1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mc: f64 = (0..n).map(|_| space.normalized_error(&space.sample_uniform(&mut rng), &truth)).sum::<f64>() / n as f64;
        assert!((mc - prior_error(&space, &truth)).abs() < 2e-3, "{mc} vs {}", prior_error(&space, &truth));
    }

    #[test]
    fn scenarios_cover_both_kinds() {
        let s = varying_scenarios();
        assert_eq!(s.len(), 40);
        assert!(s.iter().all(|v| match v.kind {
            SwitchKind::G => v.before.g != v.after.g && v.before.r == v.after.r,
            SwitchKind::R => v.before.r != v.after.r && v.before.g == v.after.g,
        }));
    }

    #[test]
    fn forward_grid_has_one_row_per_method_and_window() {
        let cfg = BenchConfig {
            clips: 2,
            lsq_samples: 50,
            filter: SmcConfig { n_particles: 200, sigma_obs_px: 0.3, ..SmcConfig::default() },
            ..BenchConfig::default()
        };
        let rows = run_forward(&cfg).unwrap();
        assert_eq!(rows.len(), 9);
        let mut buf = Vec::new();
        write_forward_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }

    #[test]
    fn invalid_windows_are_rejected() {
        let cfg = BenchConfig { forward_windows: vec![150], ..BenchConfig::default() };
        assert!(matches!(cfg.validate(), Err(BenchError::InvalidConfig(_))));
        let cfg = BenchConfig { sysid_frames: vec![1], ..BenchConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
