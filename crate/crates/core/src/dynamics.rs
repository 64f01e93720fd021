//! Hybrid bouncing-ball dynamics.
//!
//! Flight is integrated with fixed-substep RK4 under gravity and quadratic
//! drag. Impacts with the bounce surface are localized by bisection on the
//! integrated flow, the vertical velocity is reflected and scaled by the
//! restitution factor, and slow bounces collapse into a rolling mode where the
//! horizontal velocity decays geometrically.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::sig9;

/// Largest RK4 substep used inside a frame interval (s).
pub const MAX_SUBSTEP: f64 = 0.005;
/// Tolerance on localized impact times (s).
pub const EVENT_TOL: f64 = 1e-9;
/// Post-bounce vertical speed below which the ball starts rolling (m/s).
pub const ROLL_CUTOFF_VY: f64 = 0.05;
/// Horizontal speed below which a rolling ball is stopped (m/s).
pub const ROLL_STOP_VX: f64 = 1e-3;
/// Frame interval the rolling retention factor refers to (s).
pub const REFERENCE_DT: f64 = 0.05;
/// Allowed penetration of the bounce surface (m).
pub const GROUND_EPS: f64 = 1e-9;
/// Width and height of the simulated world box (m).
pub const WORLD_WIDTH: f64 = 10.0;
pub const WORLD_HEIGHT: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state became non-finite: {0:?}")]
    NonFiniteState(BallState),
    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("duration {duration} is shorter than one step of {dt}")]
    InvalidDuration { duration: f64, dt: f64 },
}

/// Physical parameters of the ball and its environment. Mass is fixed to one
/// and folded into the drag constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Restitution factor.
    pub e: f64,
    /// Vertical gravitational acceleration (negative).
    pub g: f64,
    /// Quadratic drag constant per unit mass.
    pub c: f64,
    /// Rolling retention per reference frame interval.
    pub r: f64,
    /// Height of the bounce surface.
    pub table_h: f64,
}

impl PhysParams {
    pub const NAMES: [&'static str; 5] = ["e", "g", "c", "r", "table_h"];

    pub fn new(e: f64, g: f64, c: f64, r: f64, table_h: f64) -> Self {
        Self { e, g, c, r, table_h }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |what: &str| Err(DynamicsError::InvalidParams(format!("{what} ({self:?})")));
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return bad("non-finite component");
        }
        if !(0.0..=1.0).contains(&self.e) {
            return bad("restitution outside [0, 1]");
        }
        if self.g >= 0.0 {
            return bad("gravity must be negative");
        }
        if self.c < 0.0 {
            return bad("drag must be non-negative");
        }
        if !(0.0..1.0).contains(&self.r) {
            return bad("rolling retention outside [0, 1)");
        }
        if self.table_h < 0.0 {
            return bad("surface height must be non-negative");
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.e, self.g, self.c, self.r, self.table_h]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

impl Default for PhysParams {
    fn default() -> Self {
        Self::new(0.8, -9.81, 0.01, 0.5, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Flight,
    Rolling,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Flight => f.write_str("flight"),
            Mode::Rolling => f.write_str("rolling"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub mode: Mode,
}

impl BallState {
    pub fn flight(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy, mode: Mode::Flight }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }

    /// Kinetic plus potential energy per unit mass, relative to the surface.
    pub fn energy(&self, params: &PhysParams) -> f64 {
        0.5 * (self.vx * self.vx + self.vy * self.vy) + params.g.abs() * (self.y - params.table_h)
    }

    fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    fn with_array(&self, a: [f64; 4]) -> Self {
        Self { x: a[0], y: a[1], vx: a[2], vy: a[3], mode: self.mode }
    }
}

/// A surface impact found while stepping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impact {
    /// Time since the start of the simulation (s).
    pub time: f64,
    /// Vertical velocity just before the impact.
    pub vy_in: f64,
    /// Whether the impact put the ball into rolling mode.
    pub started_rolling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<BallState>,
    pub params: Option<PhysParams>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.states.iter().map(|s| [s.x, s.y]).collect()
    }

    /// Positions divided by the world box extents.
    pub fn normalized_positions(&self) -> Vec<[f64; 2]> {
        self.states.iter().map(|s| normalize_position(s.x, s.y)).collect()
    }

    /// Whether every state lies inside the world box.
    pub fn fits_world(&self) -> bool {
        self.states
            .iter()
            .all(|s| (0.0..=WORLD_WIDTH).contains(&s.x) && (0.0..=WORLD_HEIGHT).contains(&s.y))
    }

    /// Writes `t,x,y,vx,vy,mode` rows with nine significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y,vx,vy,mode")?;
        for (i, s) in self.states.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                sig9(i as f64 * self.dt),
                sig9(s.x),
                sig9(s.y),
                sig9(s.vx),
                sig9(s.vy),
                s.mode
            )?;
        }
        Ok(())
    }
}

pub fn normalize_position(x: f64, y: f64) -> [f64; 2] {
    [x / WORLD_WIDTH, y / WORLD_HEIGHT]
}

/// Instantaneous flight acceleration under gravity and quadratic drag.
pub fn accel(state: &BallState, params: &PhysParams) -> (f64, f64) {
    accel_xy(state.vx, state.vy, params)
}

#[inline]
fn accel_xy(vx: f64, vy: f64, params: &PhysParams) -> (f64, f64) {
    let speed = (vx * vx + vy * vy).sqrt();
    (-params.c * vx * speed, params.g - params.c * vy * speed)
}

#[inline]
fn derivative(s: [f64; 4], params: &PhysParams) -> [f64; 4] {
    let (ax, ay) = accel_xy(s[2], s[3], params);
    [s[2], s[3], ax, ay]
}

#[inline]
fn rk4(s: [f64; 4], params: &PhysParams, h: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], k: f64| {
        [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]]
    };
    let k1 = derivative(s, params);
    let k2 = derivative(add(s, k1, 0.5 * h), params);
    let k3 = derivative(add(s, k2, 0.5 * h), params);
    let k4 = derivative(add(s, k3, h), params);
    let mut out = s;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn substeps(dt: f64) -> (usize, f64) {
    let n = ((dt / MAX_SUBSTEP) - 1e-12).ceil().max(1.0) as usize;
    (n, dt / n as f64)
}

/// Earliest time in `(0, h]` at which the flow from `s` reaches the surface,
/// given that it is above the surface at 0 and below at `h`. Bisects until the
/// bracket stops shrinking, which is far below `EVENT_TOL`.
fn bisect_impact(s: [f64; 4], params: &PhysParams, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, h);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rk4(s, params, mid)[1] < params.table_h {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Time to the next surface impact within `dt`, or `None` if the ball stays
/// above the surface (or is already rolling).
pub fn solve_impact_time(state: &BallState, params: &PhysParams, dt: f64) -> Option<f64> {
    if state.mode != Mode::Flight || !(dt > 0.0) {
        return None;
    }
    let (n, h) = substeps(dt);
    let mut s = state.as_array();
    for k in 0..n {
        let next = rk4(s, params, h);
        if next[1] < params.table_h && s[1] >= params.table_h {
            let tau = bisect_impact(s, params, h);
            let hit = rk4(s, params, tau);
            if hit[3] < 0.0 {
                return Some(k as f64 * h + tau);
            }
        }
        s = next;
    }
    None
}

fn roll(state: &mut BallState, params: &PhysParams, t: f64) {
    if params.r <= 0.0 {
        state.vx = 0.0;
    } else {
        let rate = params.r.ln() / REFERENCE_DT;
        let decay = (rate * t).exp();
        state.x += state.vx * (decay - 1.0) / rate;
        state.vx *= decay;
    }
    if state.vx.abs() < ROLL_STOP_VX {
        state.vx = 0.0;
    }
    state.y = params.table_h;
    state.vy = 0.0;
}

/// Advances by one substep of length `h`, handling impacts inside it.
fn advance(
    state: &mut BallState,
    params: &PhysParams,
    h: f64,
    t0: f64,
    impacts: &mut Option<&mut Vec<Impact>>,
) {
    let mut elapsed = 0.0;
    // Impacts are at least 2·ROLL_CUTOFF_VY/|g| apart, so a substep holds
    // very few of them; the bound only guards against a malformed state.
    for _ in 0..64 {
        let remaining = h - elapsed;
        if remaining <= 0.0 {
            return;
        }
        match state.mode {
            Mode::Rolling => {
                roll(state, params, remaining);
                return;
            }
            Mode::Flight => {
                let s = state.as_array();
                let next = rk4(s, params, remaining);
                if next[1] >= params.table_h || s[1] < params.table_h {
                    *state = state.with_array(next);
                    if state.y < params.table_h {
                        state.y = params.table_h;
                    }
                    return;
                }
                let tau = bisect_impact(s, params, remaining);
                let hit = rk4(s, params, tau);
                elapsed += tau;
                let vy_in = hit[3];
                let vy_out = -params.e * vy_in;
                let started_rolling = vy_out.abs() < ROLL_CUTOFF_VY;
                *state = BallState {
                    x: hit[0],
                    y: params.table_h,
                    vx: hit[2],
                    vy: if started_rolling { 0.0 } else { vy_out },
                    mode: if started_rolling { Mode::Rolling } else { Mode::Flight },
                };
                if let Some(log) = impacts.as_deref_mut() {
                    log.push(Impact { time: t0 + elapsed, vy_in, started_rolling });
                }
            }
        }
    }
}

fn step_inner(
    state: &BallState,
    params: &PhysParams,
    dt: f64,
    t0: f64,
    mut impacts: Option<&mut Vec<Impact>>,
) -> Result<BallState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let (n, h) = substeps(dt);
    let mut s = *state;
    for k in 0..n {
        advance(&mut s, params, h, t0 + k as f64 * h, &mut impacts);
    }
    if !s.is_finite() {
        return Err(DynamicsError::NonFiniteState(s));
    }
    Ok(s)
}

/// Advances the state by `dt`, applying every bounce and mode switch inside
/// the interval.
pub fn step(state: &BallState, params: &PhysParams, dt: f64) -> Result<BallState, DynamicsError> {
    step_inner(state, params, dt, 0.0, None)
}

/// Like [`step`] but also appends the impacts it crossed, timestamped
/// relative to `t0`.
pub fn step_logged(
    state: &BallState,
    params: &PhysParams,
    dt: f64,
    t0: f64,
    impacts: &mut Vec<Impact>,
) -> Result<BallState, DynamicsError> {
    step_inner(state, params, dt, t0, Some(impacts))
}

/// Simulates `duration` seconds, sampled every `dt`; the result holds
/// `ceil(duration / dt) + 1` states.
pub fn simulate(
    init: &BallState,
    params: &PhysParams,
    duration: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    if !(duration >= dt * (1.0 - 1e-12)) {
        return Err(DynamicsError::InvalidDuration { duration, dt });
    }
    let steps = (duration / dt - 1e-9).ceil() as usize;
    simulate_frames(init, params, steps + 1, dt)
}

/// Simulates exactly `n_frames` states starting at `init`.
pub fn simulate_frames(
    init: &BallState,
    params: &PhysParams,
    n_frames: usize,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    Ok(simulate_with_impacts(init, params, n_frames, dt)?.0)
}

/// Simulates `n_frames` states and reports every impact on the way.
pub fn simulate_with_impacts(
    init: &BallState,
    params: &PhysParams,
    n_frames: usize,
    dt: f64,
) -> Result<(Trajectory, Vec<Impact>), DynamicsError> {
    params.validate()?;
    if !init.is_finite() {
        return Err(DynamicsError::NonFiniteState(*init));
    }
    let mut states = Vec::with_capacity(n_frames);
    let mut impacts = Vec::new();
    let mut s = *init;
    for i in 0..n_frames {
        if i > 0 {
            s = step_logged(&s, params, dt, (i - 1) as f64 * dt, &mut impacts)?;
        }
        states.push(s);
    }
    Ok((Trajectory { dt, states, params: Some(*params) }, impacts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(e: f64, g: f64, c: f64, r: f64) -> PhysParams {
        PhysParams::new(e, g, c, r, 0.0)
    }

    /// Semi-implicit Euler with a tiny fixed step; the independent reference
    /// for flight and first-impact timing.
    fn euler_first_impact(mut s: BallState, params: &PhysParams, h: f64, t_max: f64) -> Option<f64> {
        let mut t = 0.0;
        while t < t_max {
            let (ax, ay) = accel(&s, params);
            s.vx += ax * h;
            s.vy += ay * h;
            let y_prev = s.y;
            s.x += s.vx * h;
            s.y += s.vy * h;
            if s.y < params.table_h && s.vy < 0.0 {
                // Linear interpolation inside the last step.
                let frac = (y_prev - params.table_h) / (y_prev - s.y);
                return Some(t + frac * h);
            }
            t += h;
        }
        None
    }

    #[test]
    fn accel_examples() {
        let s = BallState::flight(0.0, 1.0, 0.0, 0.0);
        assert_eq!(accel(&s, &p(0.8, -9.81, 0.05, 0.0)), (0.0, -9.81));
        let s = BallState::flight(0.0, 1.0, 3.0, -4.0);
        let (ax, ay) = accel(&s, &p(0.8, -9.81, 0.01, 0.0));
        assert_relative_eq!(ax, -0.15, epsilon = 1e-12);
        assert_relative_eq!(ay, -9.61, epsilon = 1e-12);
        let s = BallState::flight(0.0, 1.0, 1.0, 1.0);
        let (ax, ay) = accel(&s, &p(0.8, -6.81, 0.05, 0.0));
        let speed = 2f64.sqrt();
        assert!((ax - (-0.05 * speed)).abs() < 1e-12);
        assert!((ay - (-6.81 - 0.05 * speed)).abs() < 1e-12);
    }

    #[test]
    fn ballistic_step() {
        let s = BallState::flight(0.0, 1.0, 1.0, 0.0);
        let out = step(&s, &p(0.8, -9.81, 0.0, 0.0), 0.1).unwrap();
        assert_relative_eq!(out.x, 0.1, epsilon = 1e-12);
        assert_relative_eq!(out.y, 0.95095, epsilon = 1e-12);
        assert_relative_eq!(out.vx, 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.vy, -0.981, epsilon = 1e-12);
    }

    #[test]
    fn rolling_applies_one_reference_factor() {
        let s = BallState { x: 0.0, y: 0.0, vx: 1.0, vy: 0.0, mode: Mode::Rolling };
        let out = step(&s, &p(0.8, -9.81, 0.0, 0.5), 0.05).unwrap();
        assert_relative_eq!(out.vx, 0.5, epsilon = 1e-12);
        assert_eq!(out.mode, Mode::Rolling);
        assert_eq!(out.y, 0.0);
    }

    #[test]
    fn rolling_with_zero_retention_stops_immediately() {
        let s = BallState { x: 1.0, y: 0.0, vx: 1.0, vy: 0.0, mode: Mode::Rolling };
        let out = step(&s, &p(0.8, -9.81, 0.0, 0.0), 0.05).unwrap();
        assert_eq!((out.x, out.vx), (1.0, 0.0));
    }

    #[test]
    fn impact_inside_single_step() {
        let params = p(0.8, -9.81, 0.0, 0.0);
        let s = BallState::flight(0.0, 2.0, 0.0, 0.0);
        let t_star = (2.0 * 2.0 / 9.81_f64).sqrt();
        let out = step(&s, &params, 1.0).unwrap();
        let expected = 0.8 * 9.81 * t_star - 9.81 * (1.0 - t_star);
        assert!((out.vy - expected).abs() < 1e-6, "{} vs {}", out.vy, expected);
        let expected_y = 0.8 * 9.81 * t_star * (1.0 - t_star) - 0.5 * 9.81 * (1.0 - t_star).powi(2);
        assert!((out.y - expected_y).abs() < 1e-6);
    }

    #[test]
    fn impact_time_closed_form() {
        let params = p(0.8, -9.81, 0.0, 0.0);
        let s = BallState::flight(0.0, 2.0, 0.0, 0.0);
        let t = solve_impact_time(&s, &params, 1.0).unwrap();
        assert!((t - (4.0 / 9.81_f64).sqrt()).abs() < 1e-9);
        let up = BallState::flight(0.0, 2.0, 0.0, 5.0);
        assert_eq!(solve_impact_time(&up, &params, 0.1), None);
    }

    #[test]
    fn impact_time_with_drag_matches_euler_oracle() {
        let params = p(0.8, -9.81, 0.05, 0.0);
        let s = BallState::flight(0.0, 2.0, 0.0, 0.0);
        let t = solve_impact_time(&s, &params, 1.0).unwrap();
        let oracle = euler_first_impact(s, &params, 1e-7, 1.0).unwrap();
        assert!(t > 0.638_564_0);
        assert!((t - oracle).abs() < 1e-6, "{t} vs {oracle}");
    }

    #[test]
    fn slow_bounce_switches_to_rolling() {
        let params = p(0.5, -9.81, 0.0, 0.5);
        let s = BallState::flight(0.0, 0.0001, 1.0, -0.05);
        let out = step(&s, &params, 0.05).unwrap();
        assert_eq!(out.mode, Mode::Rolling);
        assert_eq!(out.y, 0.0);
        assert_eq!(out.vy, 0.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let s = BallState::flight(0.0, 1.0, 0.0, 0.0);
        assert!(matches!(step(&s, &PhysParams::default(), 0.0), Err(DynamicsError::InvalidStep(_))));
        assert!(simulate(&s, &p(1.5, -9.81, 0.0, 0.0), 1.0, 0.1).is_err());
        assert!(simulate(&s, &PhysParams::default(), 0.01, 0.1).is_err());
        let bad = BallState::flight(f64::NAN, 1.0, 0.0, 0.0);
        assert!(matches!(
            simulate(&bad, &PhysParams::default(), 1.0, 0.1),
            Err(DynamicsError::NonFiniteState(_))
        ));
    }

    #[test]
    fn simulate_length() {
        let s = BallState::flight(1.0, 2.0, 0.5, 0.0);
        let traj = simulate(&s, &PhysParams::default(), 10.0, 0.05).unwrap();
        assert_eq!(traj.len(), 201);
        let traj = simulate(&s, &PhysParams::default(), 0.12, 0.05).unwrap();
        assert_eq!(traj.len(), 4);
    }

    #[test]
    fn csv_export_header_and_precision() {
        let s = BallState::flight(1.0, 2.0, 0.5, 0.0);
        let traj = simulate(&s, &PhysParams::default(), 0.1, 0.05).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,y,vx,vy,mode"));
        assert_eq!(lines.next(), Some("0,1,2,0.5,0,flight"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0.05");
        let y: f64 = row[2].parse().unwrap();
        assert!((y - traj.states[1].y).abs() < 1e-8);
    }
}
