//! Simulated catching experiment: a gripper that only moves vertically, at a
//! limited speed, sits at a fixed column and must meet a ball thrown toward
//! it.
//!
//! Each trial samples a throw, renders the ball frame by frame at 20 Hz and
//! lets a policy pick the gripper setpoint after every frame. The predictive
//! policy runs a fresh particle filter on the tracked centroids, rolls the
//! particles forward until the median path reaches the gripper column and
//! aims at the median height there. The random policies pick uniform
//! setpoints once or twice a second. A trial succeeds when the gripper is
//! within `gripper_half + ball_radius` of the ball at the crossing instant.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Resolution;
use crate::dynamics::{self, BallState, DynamicsError, Mode, PhysParams, WORLD_HEIGHT, WORLD_WIDTH};
use crate::fmt::sig9;
use crate::stats::weighted_quantiles;
use crate::params::{ParamRange, ParamSpace};
use crate::smc::{self, Camera, Particle, ParticleFilter, SmcConfig, SmcError};
use crate::video::{self, RenderMeta, VideoError, DEFAULT_THRESHOLD};

#[derive(Debug, Error)]
pub enum InterceptError {
    #[error("no throw reached the gripper column after {attempts} attempts")]
    NoCrossing { attempts: usize },
    #[error("invalid interception settings: {0}")]
    InvalidConfig(String),
    #[error("malformed trial log: {0}")]
    Csv(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Filter(#[from] SmcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Predictive,
    Random1Hz,
    Random2Hz,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Predictive, Policy::Random1Hz, Policy::Random2Hz];

    /// Frames between random setpoints at 20 Hz; `None` for the predictive
    /// policy.
    fn random_period(self, dt: f64) -> Option<usize> {
        let hz = match self {
            Policy::Predictive => return None,
            Policy::Random1Hz => 1.0,
            Policy::Random2Hz => 2.0,
        };
        Some(((1.0 / hz) / dt).round().max(1.0) as usize)
    }

    fn stream(self) -> u64 {
        match self {
            Policy::Predictive => 1,
            Policy::Random1Hz => 2,
            Policy::Random2Hz => 3,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Predictive => "predictive",
            Policy::Random1Hz => "random-1hz",
            Policy::Random2Hz => "random-2hz",
        })
    }
}

impl FromStr for Policy {
    type Err = InterceptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predictive" => Ok(Policy::Predictive),
            "random-1hz" => Ok(Policy::Random1Hz),
            "random-2hz" => Ok(Policy::Random2Hz),
            other => Err(InterceptError::InvalidConfig(format!("unknown policy {other:?}"))),
        }
    }
}

/// The gripper: fixed column, vertical travel limited to `v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub x_g: f64,
    pub y_g: f64,
    pub v_max: f64,
    pub gripper_half: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ArmState {
    /// Height after moving toward `setpoint` for `t` seconds.
    pub fn height_after(&self, setpoint: f64, t: f64) -> f64 {
        let target = setpoint.clamp(self.y_min, self.y_max);
        let reach = self.v_max * t;
        self.y_g + (target - self.y_g).clamp(-reach, reach)
    }

    pub fn advance(&mut self, setpoint: f64, t: f64) {
        self.y_g = self.height_after(setpoint, t);
    }
}

/// Ranges the throws are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThrowSpec {
    pub init_x: ParamRange,
    /// Launch height above the surface (m).
    pub init_height: ParamRange,
    pub init_vx: ParamRange,
    pub init_vy: ParamRange,
    pub min_bounces: usize,
    pub max_bounces: usize,
    /// Allowed crossing times (s).
    pub crossing_time: ParamRange,
}

impl Default for ThrowSpec {
    fn default() -> Self {
        Self {
            init_x: ParamRange::new(0.5, 1.5),
            init_height: ParamRange::new(1.0, 3.0),
            init_vx: ParamRange::new(2.0, 4.5),
            init_vy: ParamRange::new(-1.0, 2.0),
            min_bounces: 1,
            max_bounces: 3,
            crossing_time: ParamRange::new(2.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterceptConfig {
    /// Horizontal position of the gripper column (m).
    pub x_g: f64,
    /// Maximum vertical gripper speed (m/s).
    pub v_max: f64,
    /// Capture half-height of the gripper (m).
    pub gripper_half: f64,
    pub ball_radius: f64,
    /// Upper actuation limit (m); the lower limit is the surface.
    pub y_max: f64,
    /// Gripper height at the start of each trial (m).
    pub home_height: f64,
    pub dt: f64,
    pub width: u32,
    pub height: u32,
    pub ball_radius_px: f64,
    /// Physical parameters of the throws; the filter uses the same ranges as
    /// its prior.
    pub ranges: ParamSpace,
    pub throw: ThrowSpec,
    pub filter: SmcConfig,
    /// Longest forecast the predictive policy rolls out (frames).
    pub max_horizon: usize,
    /// Particles drawn from the posterior for each forecast.
    pub predict_particles: usize,
    /// How close, in pixels, the median forecast must come to the gripper
    /// column to count as crossing it.
    pub crossing_tol_px: f64,
    pub max_world_attempts: usize,
    /// Starts the filter on the true state and parameters instead of the
    /// prior; an upper bound for the predictive policy.
    pub known_physics: bool,
}

impl Default for InterceptConfig {
    fn default() -> Self {
        let res = Resolution::WIDE;
        Self {
            x_g: 8.0,
            v_max: 0.5,
            gripper_half: 0.06,
            ball_radius: 0.02,
            y_max: 4.5,
            home_height: 1.2,
            dt: 0.05,
            width: res.width,
            height: res.height,
            ball_radius_px: res.ball_radius_px,
            ranges: ParamSpace::default(),
            throw: ThrowSpec::default(),
            filter: SmcConfig { n_particles: 4000, sigma_obs_px: 0.3, ..SmcConfig::default() },
            max_horizon: 60,
            predict_particles: 500,
            crossing_tol_px: 1.0,
            max_world_attempts: 10_000,
            known_physics: false,
        }
    }
}

impl InterceptConfig {
    pub fn validate(&self) -> Result<(), InterceptError> {
        let bad = |m: String| Err(InterceptError::InvalidConfig(m));
        if !(self.v_max > 0.0) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.x_g > 0.0 && self.x_g < WORLD_WIDTH) {
            return bad(format!("gripper column {} outside the world", self.x_g));
        }
        if !(self.gripper_half >= 0.0 && self.ball_radius >= 0.0) {
            return bad("capture sizes must be non-negative".into());
        }
        if !(self.y_max > self.ranges.table_h.hi && self.y_max <= WORLD_HEIGHT) {
            return bad(format!("actuation limit {} must lie above the surface range", self.y_max));
        }
        if !self.ranges.is_valid() {
            return bad(format!("parameter ranges {:?}", self.ranges));
        }
        let t = &self.throw;
        if t.min_bounces > t.max_bounces {
            return bad("min_bounces exceeds max_bounces".into());
        }
        for r in [t.init_x, t.init_height, t.init_vx, t.init_vy, t.crossing_time] {
            if !r.is_valid() {
                return bad(format!("throw range {r:?}"));
            }
        }
        if t.init_x.hi >= self.x_g {
            return bad("throws must start left of the gripper".into());
        }
        if self.max_horizon == 0 || self.predict_particles == 0 {
            return bad("max_horizon and predict_particles must be positive".into());
        }
        if self.max_world_attempts == 0 {
            return bad("max_world_attempts must be positive".into());
        }
        self.filter.validate()?;
        Ok(())
    }

    pub fn render_meta(&self) -> RenderMeta {
        RenderMeta::new(self.width, self.height, self.ball_radius_px)
    }

    pub fn capture_window(&self) -> f64 {
        self.gripper_half + self.ball_radius
    }

    fn arm(&self, table_h: f64) -> ArmState {
        ArmState {
            x_g: self.x_g,
            y_g: self.home_height.clamp(table_h, self.y_max),
            v_max: self.v_max,
            gripper_half: self.gripper_half,
            y_min: table_h,
            y_max: self.y_max,
        }
    }
}

/// A sampled throw that is known to reach the gripper column.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub params: PhysParams,
    pub init: BallState,
    /// States at every frame up to and including the first one past the
    /// gripper column.
    pub states: Vec<BallState>,
    pub crossing_time: f64,
    pub crossing_y: f64,
    pub bounces: usize,
}

impl World {
    /// Index of the last frame before the crossing.
    pub fn last_frame(&self) -> usize {
        self.states.len() - 2
    }
}

/// Time in `(0, dt]` after `s` at which the ball reaches column `x_g`,
/// assuming it is left of it at 0 and at or right of it after `dt`.
fn crossing_offset(s: &BallState, p: &PhysParams, dt: f64, x_g: f64) -> Result<f64, DynamicsError> {
    let (mut lo, mut hi) = (0.0_f64, dt);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dynamics::step(s, p, mid)?.x >= x_g {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Simulates one candidate throw; `None` when it misses the requirements.
fn try_throw(cfg: &InterceptConfig, params: PhysParams, init: BallState) -> Result<Option<World>, DynamicsError> {
    let dt = cfg.dt;
    let t_max = cfg.throw.crossing_time.hi;
    let max_frames = (t_max / dt).ceil() as usize + 1;
    let mut states = vec![init];
    let mut impacts = Vec::new();
    let mut s = init;
    for k in 0..max_frames {
        let next = dynamics::step_logged(&s, &params, dt, k as f64 * dt, &mut impacts)?;
        let inside = next.y <= WORLD_HEIGHT && next.x >= 0.0;
        if !inside || next.mode == Mode::Rolling {
            return Ok(None);
        }
        if next.x >= cfg.x_g {
            let tau = crossing_offset(&s, &params, dt, cfg.x_g)?;
            let at = dynamics::step(&s, &params, tau)?;
            let crossing_time = k as f64 * dt + tau;
            let bounces = impacts.iter().filter(|i| i.time < crossing_time).count();
            states.push(next);
            let ok = cfg.throw.crossing_time.contains(crossing_time)
                && (cfg.throw.min_bounces..=cfg.throw.max_bounces).contains(&bounces)
                && at.y <= cfg.y_max;
            return Ok(ok.then(|| World { params, init, states, crossing_time, crossing_y: at.y, bounces }));
        }
        states.push(next);
        s = next;
    }
    Ok(None)
}

fn world_rng(world_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
    rng.set_stream(0);
    rng
}

/// Draws throws until one crosses the gripper column after the configured
/// number of bounces.
pub fn sample_world(cfg: &InterceptConfig, world_seed: u64) -> Result<World, InterceptError> {
    cfg.validate()?;
    let mut rng = world_rng(world_seed);
    let t = &cfg.throw;
    for _ in 0..cfg.max_world_attempts {
        let params = cfg.ranges.sample_uniform(&mut rng);
        let init = BallState::flight(
            t.init_x.sample(&mut rng),
            params.table_h + t.init_height.sample(&mut rng),
            t.init_vx.sample(&mut rng),
            t.init_vy.sample(&mut rng),
        );
        if init.y > WORLD_HEIGHT {
            continue;
        }
        if let Some(world) = try_throw(cfg, params, init)? {
            return Ok(world);
        }
    }
    Err(InterceptError::NoCrossing { attempts: cfg.max_world_attempts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialLogRow {
    pub frame: usize,
    pub ball_x: f64,
    pub ball_y: f64,
    pub y_g: f64,
    pub setpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy: Policy,
    pub world_seed: u64,
    pub success: bool,
    /// Vertical distance between gripper and ball at the crossing (m).
    pub miss_distance: f64,
    pub crossing_time: f64,
    pub bounces: usize,
    /// One row per frame; the final row holds the crossing instant itself.
    pub log: Vec<TrialLogRow>,
}

/// Writes `frame,ball_x,ball_y,y_g,setpoint`. The last row is the crossing
/// instant, where `ball_x` equals the gripper column.
pub fn write_trial_log<W: Write>(log: &[TrialLogRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "frame,ball_x,ball_y,y_g,setpoint")?;
    for r in log {
        writeln!(out, "{},{},{},{},{}", r.frame, sig9(r.ball_x), sig9(r.ball_y), sig9(r.y_g), sig9(r.setpoint))?;
    }
    Ok(())
}

pub fn read_trial_log<R: BufRead>(input: R) -> Result<Vec<TrialLogRow>, InterceptError> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "frame,ball_x,ball_y,y_g,setpoint" {
        return Err(InterceptError::Csv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(InterceptError::Csv(format!("line {}: expected 5 fields", i + 2)));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| InterceptError::Csv(format!("line {}: {e}", i + 2)));
        rows.push(TrialLogRow {
            frame: f[0].trim().parse().map_err(|e| InterceptError::Csv(format!("line {}: {e}", i + 2)))?,
            ball_x: num(f[1])?,
            ball_y: num(f[2])?,
            y_g: num(f[3])?,
            setpoint: num(f[4])?,
        });
    }
    Ok(rows)
}

/// Miss distance recorded in the crossing row of a trial log.
pub fn miss_from_log(log: &[TrialLogRow]) -> Option<f64> {
    log.last().map(|r| (r.ball_y - r.y_g).abs())
}

struct Predictor {
    filter: Option<ParticleFilter>,
    pending: Option<video::PixelObservation>,
    camera: Camera,
    seed: u64,
}

impl Predictor {
    fn new(cfg: &InterceptConfig, world: &World, seed: u64) -> Result<Self, InterceptError> {
        let camera = Camera { world_to_px: cfg.render_meta().world_to_px, dt: cfg.dt };
        let filter = if cfg.known_physics {
            let particles = vec![
                Particle { state: world.init, theta: world.params, log_weight: -(cfg.filter.n_particles as f64).ln() };
                cfg.filter.n_particles
            ];
            Some(ParticleFilter::from_particles(&cfg.filter, &cfg.ranges, camera, particles, 0, seed)?)
        } else {
            None
        };
        Ok(Self { filter, pending: None, camera, seed })
    }

    fn observe(&mut self, cfg: &InterceptConfig, obs: video::PixelObservation) -> Result<(), InterceptError> {
        match &mut self.filter {
            Some(f) => {
                if obs.t_index > f.frame() {
                    f.update(&obs)?;
                }
            }
            None => match self.pending {
                Some(prev) if prev.visible && obs.visible => {
                    self.filter = Some(smc::init_filter(&cfg.filter, &cfg.ranges, self.camera, &prev, &obs, self.seed)?);
                }
                _ => self.pending = Some(obs),
            },
        }
        Ok(())
    }

    /// Median height where the median forecast first reaches the gripper
    /// column, if it does within the horizon.
    fn aim(&self, cfg: &InterceptConfig) -> Option<f64> {
        let f = self.filter.as_ref()?;
        let tol = cfg.crossing_tol_px / self.camera.world_to_px.sx.abs();
        let (mut states, thetas, w) = rollout_set(f.particles(), cfg.predict_particles);
        let mut pairs = Vec::with_capacity(states.len());
        let median = |pairs: &mut Vec<(f64, f64)>, states: &[BallState], pick: fn(&BallState) -> f64| {
            pairs.clear();
            pairs.extend(states.iter().zip(&w).map(|(s, &w)| (pick(s), w)));
            weighted_quantiles(pairs, &[0.5])[0]
        };
        let mut prev = (
            median(&mut pairs, &states, |s| s.x),
            median(&mut pairs, &states, |s| s.y),
        );
        for _ in 0..cfg.max_horizon {
            for (s, theta) in states.iter_mut().zip(&thetas) {
                if let Ok(next) = dynamics::step(s, theta, cfg.dt) {
                    *s = next;
                }
            }
            let x = median(&mut pairs, &states, |s| s.x);
            if x >= cfg.x_g - tol {
                let y = median(&mut pairs, &states, |s| s.y);
                // place the aim where the median path meets x_g between frames
                let frac = if x > prev.0 { ((cfg.x_g - prev.0) / (x - prev.0)).clamp(0.0, 1.0) } else { 1.0 };
                return Some(prev.1 + frac * (y - prev.1));
            }
            prev = (x, median(&mut pairs, &states, |s| s.y));
        }
        None
    }
}

/// Particles to roll forward: all of them when there are at most `limit`,
/// otherwise a systematic draw of `limit` with equal weights.
fn rollout_set(particles: &[Particle], limit: usize) -> (Vec<BallState>, Vec<PhysParams>, Vec<f64>) {
    if particles.len() <= limit {
        return (
            particles.iter().map(|p| p.state).collect(),
            particles.iter().map(|p| p.theta).collect(),
            particles.iter().map(|p| p.log_weight.exp()).collect(),
        );
    }
    let mut states = Vec::with_capacity(limit);
    let mut thetas = Vec::with_capacity(limit);
    let mut cum = 0.0;
    let mut j = 0;
    for i in 0..limit {
        let u = (i as f64 + 0.5) / limit as f64;
        while j + 1 < particles.len() && cum + particles[j].log_weight.exp() < u {
            cum += particles[j].log_weight.exp();
            j += 1;
        }
        states.push(particles[j].state);
        thetas.push(particles[j].theta);
    }
    (states, thetas, vec![1.0 / limit as f64; limit])
}

/// Runs one closed-loop trial of `policy` on the throw drawn from
/// `world_seed`.
pub fn run_trial(cfg: &InterceptConfig, policy: Policy, world_seed: u64) -> Result<TrialResult, InterceptError> {
    let world = sample_world(cfg, world_seed)?;
    run_trial_on(cfg, policy, &world, world_seed)
}

/// Like [`run_trial`] on an already sampled throw.
pub fn run_trial_on(
    cfg: &InterceptConfig,
    policy: Policy,
    world: &World,
    world_seed: u64,
) -> Result<TrialResult, InterceptError> {
    cfg.validate()?;
    let meta = cfg.render_meta();
    let mut arm = cfg.arm(world.params.table_h);
    let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
    rng.set_stream(policy.stream());
    let mut predictor = match policy {
        Policy::Predictive => Some(Predictor::new(cfg, world, world_seed)?),
        _ => None,
    };
    let period = policy.random_period(cfg.dt);
    let mut setpoint = arm.y_g;
    let mut log = Vec::with_capacity(world.states.len());
    let last = world.last_frame();
    for (k, s) in world.states.iter().enumerate().take(last + 1) {
        match (&mut predictor, period) {
            (Some(p), _) => {
                let (px, py) = meta.world_to_px.project(s.x, s.y);
                let frame = video::render_frame(&meta, (px, py), None, None);
                let obs = match video::track_frame(&frame, meta.width, DEFAULT_THRESHOLD) {
                    Some((cx, cy)) => video::PixelObservation { t_index: k, cx, cy, visible: true },
                    None => video::PixelObservation { t_index: k, cx: f64::NAN, cy: f64::NAN, visible: false },
                };
                p.observe(cfg, obs)?;
                if let Some(y) = p.aim(cfg) {
                    setpoint = y;
                }
            }
            (None, Some(every)) => {
                if k % every == 0 {
                    setpoint = rng.random_range(arm.y_min..arm.y_max);
                }
            }
            (None, None) => {}
        }
        log.push(TrialLogRow { frame: k, ball_x: s.x, ball_y: s.y, y_g: arm.y_g, setpoint });
        if k < last {
            arm.advance(setpoint, cfg.dt);
        }
    }
    let t_in = world.crossing_time - last as f64 * cfg.dt;
    let y_g = arm.height_after(setpoint, t_in);
    let miss_distance = (world.crossing_y - y_g).abs();
    log.push(TrialLogRow { frame: last + 1, ball_x: cfg.x_g, ball_y: world.crossing_y, y_g, setpoint });
    Ok(TrialResult {
        policy,
        world_seed,
        success: miss_distance <= cfg.capture_window(),
        miss_distance,
        crossing_time: world.crossing_time,
        bounces: world.bounces,
        log,
    })
}

/// Seed of trial `trial` in campaign `seed`; shared by every policy so the
/// policies face the same throws.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + trial as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub seed: u64,
    pub policy: Policy,
    pub trials: usize,
    pub successes: usize,
}

impl CampaignRow {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// One trial of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignTrial {
    pub seed: u64,
    pub trial: usize,
    pub result: TrialResult,
}

/// Runs `n_trials` throws per seed under every policy. Every policy faces
/// the same throws; trials run in parallel.
pub fn campaign_trials(
    cfg: &InterceptConfig,
    n_trials: usize,
    policies: &[Policy],
    seeds: &[u64],
) -> Result<Vec<CampaignTrial>, InterceptError> {
    cfg.validate()?;
    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| (0..n_trials).map(move |i| (s, i))).collect();
    let worlds: Vec<World> = jobs
        .par_iter()
        .map(|&(s, i)| sample_world(cfg, trial_seed(s, i)))
        .collect::<Result<_, _>>()?;
    let runs: Vec<(usize, Policy)> = (0..jobs.len()).flat_map(|j| policies.iter().map(move |&p| (j, p))).collect();
    runs.par_iter()
        .map(|&(j, policy)| {
            let (seed, trial) = jobs[j];
            let result = run_trial_on(cfg, policy, &worlds[j], trial_seed(seed, trial))?;
            Ok(CampaignTrial { seed, trial, result })
        })
        .collect()
}

/// Success counts per seed and policy, in the order given.
pub fn summarize(trials: &[CampaignTrial], policies: &[Policy], seeds: &[u64]) -> Vec<CampaignRow> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for &policy in policies {
            let of: Vec<&CampaignTrial> = trials.iter().filter(|t| t.seed == seed && t.result.policy == policy).collect();
            rows.push(CampaignRow {
                seed,
                policy,
                trials: of.len(),
                successes: of.iter().filter(|t| t.result.success).count(),
            });
        }
    }
    rows
}

/// Runs `n_trials` throws per seed under every policy and tallies the
/// successes.
pub fn run_campaign(
    cfg: &InterceptConfig,
    n_trials: usize,
    policies: &[Policy],
    seeds: &[u64],
) -> Result<Vec<CampaignRow>, InterceptError> {
    let trials = campaign_trials(cfg, n_trials, policies, seeds)?;
    Ok(summarize(&trials, policies, seeds))
}

/// Writes `seed,policy,trials,successes,rate`.
pub fn write_campaign_csv<W: Write>(rows: &[CampaignRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "seed,policy,trials,successes,rate")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.seed, r.policy, r.trials, r.successes, sig9(r.rate()))?;
    }
    Ok(())
}
