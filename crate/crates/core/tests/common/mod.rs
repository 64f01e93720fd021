#![allow(dead_code)]

use hybrid_sysid::{BallState, Mode, PhysParams};

pub struct OracleRun {
    /// Positions sampled every `dt`, starting with the initial state.
    pub positions: Vec<[f64; 2]>,
    pub impacts: Vec<f64>,
}

/// Fine fixed-step reference integrator written independently of the crate:
/// velocity first, then position with the trapezoid of old and new velocity
/// (exact for constant acceleration). Surface crossings are located by linear
/// interpolation inside the step. Rolling follows the same convention as the
/// library: the horizontal speed is multiplied by `r` per 0.05 s.
pub fn oracle(init: &BallState, p: &PhysParams, n_frames: usize, dt: f64, h: f64) -> OracleRun {
    let (mut x, mut y, mut vx, mut vy) = (init.x, init.y, init.vx, init.vy);
    let mut rolling = init.mode == Mode::Rolling;
    let mut positions = vec![[x, y]];
    let mut impacts = Vec::new();
    let per_frame = (dt / h).round() as usize;
    let h = dt / per_frame as f64;
    let mut t = 0.0;
    for _ in 1..n_frames {
        for _ in 0..per_frame {
            if rolling {
                let k = (p.r.ln() / 0.05) * h;
                let nvx = if p.r > 0.0 { vx * k.exp() } else { 0.0 };
                x += 0.5 * (vx + nvx) * h;
                vx = if nvx.abs() < 1e-3 { 0.0 } else { nvx };
                t += h;
                continue;
            }
            let speed = (vx * vx + vy * vy).sqrt();
            let (ax, ay) = (-p.c * vx * speed, p.g - p.c * vy * speed);
            let (nvx, nvy) = (vx + ax * h, vy + ay * h);
            let (nx, ny) = (x + 0.5 * (vx + nvx) * h, y + 0.5 * (vy + nvy) * h);
            if ny < p.table_h && y >= p.table_h {
                let f = (y - p.table_h) / (y - ny);
                let vy_in = vy + f * (nvy - vy);
                let vx_hit = vx + f * (nvx - vx);
                x += f * (nx - x);
                y = p.table_h;
                impacts.push(t + f * h);
                let out = -p.e * vy_in;
                vx = vx_hit;
                if out.abs() < 0.05 {
                    rolling = true;
                    vy = 0.0;
                    // the rest of the step rolls
                    let rest = (1.0 - f) * h;
                    let nvx = if p.r > 0.0 { vx * ((p.r.ln() / 0.05) * rest).exp() } else { 0.0 };
                    x += 0.5 * (vx + nvx) * rest;
                    vx = nvx;
                } else {
                    let rest = (1.0 - f) * h;
                    vy = out;
                    let speed = (vx * vx + vy * vy).sqrt();
                    let (ax, ay) = (-p.c * vx * speed, p.g - p.c * vy * speed);
                    let (nvx, nvy) = (vx + ax * rest, vy + ay * rest);
                    x += 0.5 * (vx + nvx) * rest;
                    y += 0.5 * (vy + nvy) * rest;
                    vx = nvx;
                    vy = nvy;
                }
            } else {
                x = nx;
                y = ny;
                vx = nvx;
                vy = nvy;
            }
            t += h;
        }
        positions.push([x, y]);
    }
    OracleRun { positions, impacts }
}

pub fn max_position_gap(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
        .fold(0.0, f64::max)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
