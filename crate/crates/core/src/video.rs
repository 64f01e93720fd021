//! Synthetic grayscale video of the ball and centroid tracking.
//!
//! Frames are stored as 8-bit intensities (intensity × 255). Every level the
//! renderer produces is an exact multiple of 1/5, so quantization is lossless.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Trajectory, WORLD_HEIGHT, WORLD_WIDTH};

/// Intensity levels of the five blur sub-discs, newest first.
pub const BLUR_LEVELS: [u8; 5] = [255, 204, 153, 102, 51];
/// Intensity of the optional surface line; kept below the default tracker
/// threshold so it never pulls centroids.
pub const SURFACE_LEVEL: u8 = 51;
pub const DEFAULT_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("frame {frame}: projected center ({px:.2}, {py:.2}) is outside the {width}x{height} image")]
    OutOfFrame { frame: usize, px: f64, py: f64, width: u32, height: u32 },
    #[error("invalid render settings: {0}")]
    InvalidMeta(String),
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine map from world metres to pixel coordinates (column, row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldToPx {
    pub sx: f64,
    pub ox: f64,
    pub sy: f64,
    pub oy: f64,
}

impl WorldToPx {
    /// Maps the world box onto the frame with row 0 at the top. Ball centers
    /// on the box boundary land `margin` pixels inside the image so the whole
    /// disc stays visible.
    pub fn for_frame(width: u32, height: u32, margin: f64) -> Self {
        let (w, h) = (width as f64, height as f64);
        let sx = (w - 1.0 - 2.0 * margin) / WORLD_WIDTH;
        let sy = -(h - 1.0 - 2.0 * margin) / WORLD_HEIGHT;
        Self { sx, ox: margin, sy, oy: h - 1.0 - margin }
    }

    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.sx + self.ox, y * self.sy + self.oy)
    }

    pub fn unproject(&self, px: f64, py: f64) -> (f64, f64) {
        ((px - self.ox) / self.sx, (py - self.oy) / self.sy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderMeta {
    pub width: u32,
    pub height: u32,
    pub ball_radius_px: f64,
    /// Blacked-out column band `[start, end)`.
    pub occlusion_band: Option<(u32, u32)>,
    pub blur_enabled: bool,
    pub draw_surface: bool,
    pub world_to_px: WorldToPx,
}

impl RenderMeta {
    pub fn new(width: u32, height: u32, ball_radius_px: f64) -> Self {
        Self {
            width,
            height,
            ball_radius_px,
            occlusion_band: None,
            blur_enabled: false,
            draw_surface: false,
            world_to_px: WorldToPx::for_frame(width, height, ball_radius_px),
        }
    }

    pub fn validate(&self) -> Result<(), VideoError> {
        if self.width == 0 || self.height == 0 {
            return Err(VideoError::InvalidMeta("empty frame".into()));
        }
        if !(self.ball_radius_px >= 1.0) {
            return Err(VideoError::InvalidMeta(format!(
                "ball radius {} px is below 1",
                self.ball_radius_px
            )));
        }
        if let Some((a, b)) = self.occlusion_band {
            if a >= b || b > self.width {
                return Err(VideoError::InvalidMeta(format!(
                    "occlusion band [{a}, {b}) outside 0..{}",
                    self.width
                )));
            }
        }
        Ok(())
    }

    pub fn is_occluded_column(&self, col: f64) -> bool {
        match self.occlusion_band {
            Some((a, b)) => col >= a as f64 - 0.5 && col < b as f64 - 0.5,
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClip {
    pub width: u32,
    pub height: u32,
    pub dt: f64,
    /// Index of the first frame in the source sequence.
    pub first_frame: usize,
    /// Row-major 8-bit frames.
    pub frames: Vec<Vec<u8>>,
    pub meta: RenderMeta,
}

impl VideoClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn intensity(&self, frame: usize, col: u32, row: u32) -> f64 {
        self.frames[frame][(row * self.width + col) as usize] as f64 / 255.0
    }

    /// Writes every frame as `frame_00000.pgm`, ... into `dir`.
    pub fn write_pgm_dir(&self, dir: &Path) -> Result<(), VideoError> {
        std::fs::create_dir_all(dir)?;
        for (i, frame) in self.frames.iter().enumerate() {
            let path = dir.join(format!("frame_{:05}.pgm", self.first_frame + i));
            let file = std::fs::File::create(path)?;
            write_pgm(std::io::BufWriter::new(file), self.width, self.height, frame)?;
        }
        Ok(())
    }
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm<W: Write>(mut out: W, width: u32, height: u32, data: &[u8]) -> std::io::Result<()> {
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(data)?;
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelObservation {
    pub t_index: usize,
    pub cx: f64,
    pub cy: f64,
    pub visible: bool,
}

fn stamp_disc(frame: &mut [u8], meta: &RenderMeta, cx: f64, cy: f64, level: u8) {
    let r = meta.ball_radius_px;
    let r2 = r * r;
    let c0 = (cx - r).floor().max(0.0) as i64;
    let c1 = ((cx + r).ceil() as i64).min(meta.width as i64 - 1);
    let r0 = (cy - r).floor().max(0.0) as i64;
    let r1 = ((cy + r).ceil() as i64).min(meta.height as i64 - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let (dx, dy) = (col as f64 - cx, row as f64 - cy);
            if dx * dx + dy * dy <= r2 {
                let px = &mut frame[(row as usize) * meta.width as usize + col as usize];
                *px = (*px).max(level);
            }
        }
    }
}

/// Renders one frame with the ball at `center` and, when blur is on, a
/// trail of fading sub-discs back toward `previous`.
pub fn render_frame(
    meta: &RenderMeta,
    center: (f64, f64),
    previous: Option<(f64, f64)>,
    surface_row: Option<i64>,
) -> Vec<u8> {
    let mut frame = vec![0u8; (meta.width * meta.height) as usize];
    if let Some(row) = surface_row {
        if (0..meta.height as i64).contains(&row) {
            let start = row as usize * meta.width as usize;
            frame[start..start + meta.width as usize].fill(SURFACE_LEVEL);
        }
    }
    match (meta.blur_enabled, previous) {
        (true, Some(prev)) => {
            // Oldest first so the newest disc wins overlaps through `max`.
            for k in (0..BLUR_LEVELS.len()).rev() {
                let f = k as f64 / (BLUR_LEVELS.len() - 1) as f64;
                let x = center.0 + (prev.0 - center.0) * f;
                let y = center.1 + (prev.1 - center.1) * f;
                stamp_disc(&mut frame, meta, x, y, BLUR_LEVELS[k]);
            }
        }
        _ => stamp_disc(&mut frame, meta, center.0, center.1, 255),
    }
    if let Some((a, b)) = meta.occlusion_band {
        for row in 0..meta.height as usize {
            let start = row * meta.width as usize;
            frame[start + a as usize..start + b as usize].fill(0);
        }
    }
    frame
}

/// Renders a trajectory into a clip with one frame per state.
pub fn render(traj: &Trajectory, meta: &RenderMeta) -> Result<VideoClip, VideoError> {
    meta.validate()?;
    let project = |i: usize| {
        let s = &traj.states[i];
        meta.world_to_px.project(s.x, s.y)
    };
    let surface_row = match (meta.draw_surface, traj.params) {
        (true, Some(p)) => {
            let (_, row) = meta.world_to_px.project(0.0, p.table_h);
            Some((row + meta.ball_radius_px).round() as i64)
        }
        _ => None,
    };
    let mut frames = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let (px, py) = project(i);
        let w = meta.width as f64;
        let h = meta.height as f64;
        if !(px >= -0.5 && px <= w - 0.5 && py >= -0.5 && py <= h - 0.5) {
            return Err(VideoError::OutOfFrame { frame: i, px, py, width: meta.width, height: meta.height });
        }
        let prev = if i > 0 { Some(project(i - 1)) } else { None };
        frames.push(render_frame(meta, (px, py), prev, surface_row));
    }
    Ok(VideoClip {
        width: meta.width,
        height: meta.height,
        dt: traj.dt,
        first_frame: 0,
        frames,
        meta: meta.clone(),
    })
}

/// Positive part of the difference between consecutive frames.
pub fn frame_diff(clip: &VideoClip) -> Result<VideoClip, VideoError> {
    if clip.len() < 2 {
        return Err(VideoError::TooFewFrames { need: 2, got: clip.len() });
    }
    let frames = clip
        .frames
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a.saturating_sub(*b)).collect())
        .collect();
    Ok(VideoClip { frames, first_frame: clip.first_frame + 1, ..clip.clone() })
}

/// Intensity-weighted centroid of the pixels at or above `threshold`.
pub fn track_frame(frame: &[u8], width: u32, threshold: f64) -> Option<(f64, f64)> {
    let cut = (threshold * 255.0).ceil().clamp(1.0, 255.0) as u8;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (idx, &v) in frame.iter().enumerate() {
        if v >= cut {
            let w = v as f64;
            sw += w;
            sx += w * (idx as u32 % width) as f64;
            sy += w * (idx as u32 / width) as f64;
        }
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

pub fn track(clip: &VideoClip, threshold: f64) -> Vec<PixelObservation> {
    clip.frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let t_index = clip.first_frame + i;
            match track_frame(frame, clip.width, threshold) {
                Some((cx, cy)) => PixelObservation { t_index, cx, cy, visible: true },
                None => PixelObservation { t_index, cx: f64::NAN, cy: f64::NAN, visible: false },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BallState, PhysParams};

    fn lit(frame: &[u8]) -> usize {
        frame.iter().filter(|&&v| v > 0).count()
    }

    fn disc_set(cx: f64, cy: f64, r: f64, w: i64, h: i64) -> std::collections::HashSet<(i64, i64)> {
        let mut out = std::collections::HashSet::new();
        for row in 0..h {
            for col in 0..w {
                let (dx, dy) = (col as f64 - cx, row as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    out.insert((col, row));
                }
            }
        }
        out
    }

    #[test]
    fn centered_disc_has_thirteen_pixels() {
        let meta = RenderMeta::new(28, 28, 2.0);
        let frame = render_frame(&meta, (14.0, 14.0), None, None);
        assert_eq!(lit(&frame), 13);
        assert_eq!(frame.iter().filter(|&&v| v == 255).count(), 13);
    }

    #[test]
    fn occlusion_blacks_out_the_ball() {
        let mut meta = RenderMeta::new(28, 28, 2.0);
        meta.occlusion_band = Some((10, 20));
        let frame = render_frame(&meta, (14.0, 14.0), None, None);
        assert_eq!(lit(&frame), 0);
        let obs = track_frame(&frame, 28, DEFAULT_THRESHOLD);
        assert!(obs.is_none());
    }

    #[test]
    fn blur_trail_spans_the_displacement() {
        let mut meta = RenderMeta::new(28, 28, 2.0);
        meta.blur_enabled = true;
        let frame = render_frame(&meta, (14.0, 14.0), Some((10.0, 14.0)), None);
        let cols: Vec<u32> = frame
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, _)| i as u32 % 28)
            .collect();
        let span = cols.iter().max().unwrap() - cols.iter().min().unwrap();
        assert!(span >= 4);
        assert_eq!(frame[14 * 28 + 14], 255);
        assert_eq!(*frame.iter().max().unwrap(), 255);
        // Union of the sub-discs, enumerated independently.
        let mut union = std::collections::HashSet::new();
        for k in 0..5 {
            union.extend(disc_set(14.0 - k as f64, 14.0, 2.0, 28, 28));
        }
        assert_eq!(lit(&frame), union.len());
    }

    #[test]
    fn frame_diff_cases() {
        let meta = RenderMeta::new(28, 28, 2.0);
        let mk = |frames: Vec<Vec<u8>>| VideoClip {
            width: 28,
            height: 28,
            dt: 0.05,
            first_frame: 0,
            frames,
            meta: meta.clone(),
        };
        let a = render_frame(&meta, (14.0, 14.0), None, None);
        let still = frame_diff(&mk(vec![a.clone(), a.clone()])).unwrap();
        assert_eq!(still.len(), 1);
        assert_eq!(still.first_frame, 1);
        assert_eq!(lit(&still.frames[0]), 0);

        let far = render_frame(&meta, (5.0, 5.0), None, None);
        let moved = frame_diff(&mk(vec![a.clone(), far.clone()])).unwrap();
        assert_eq!(moved.frames[0], far);

        let near = render_frame(&meta, (15.3, 14.6), None, None);
        let partial = frame_diff(&mk(vec![a, near])).unwrap();
        let cur = disc_set(15.3, 14.6, 2.0, 28, 28);
        let prev = disc_set(14.0, 14.0, 2.0, 28, 28);
        assert_eq!(lit(&partial.frames[0]), cur.difference(&prev).count());

        assert!(matches!(frame_diff(&mk(vec![])), Err(VideoError::TooFewFrames { .. })));
    }

    #[test]
    fn tracker_finds_disc_center() {
        let meta = RenderMeta::new(28, 28, 2.0);
        let frame = render_frame(&meta, (14.0, 14.0), None, None);
        let (cx, cy) = track_frame(&frame, 28, DEFAULT_THRESHOLD).unwrap();
        assert!((cx - 14.0).abs() <= 0.5 && (cy - 14.0).abs() <= 0.5);
    }

    #[test]
    fn blurred_centroid_lies_on_motion_segment() {
        let mut meta = RenderMeta::new(100, 50, 3.0);
        meta.blur_enabled = true;
        let (cur, prev) = ((40.3, 20.2), (33.1, 24.9));
        let frame = render_frame(&meta, cur, Some(prev), None);
        let (cx, cy) = track_frame(&frame, 100, DEFAULT_THRESHOLD).unwrap();
        // Distance from the centroid to the segment prev -> cur.
        let (dx, dy) = (cur.0 - prev.0, cur.1 - prev.1);
        let t = (((cx - prev.0) * dx + (cy - prev.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        let (qx, qy) = (prev.0 + t * dx, prev.1 + t * dy);
        assert!(((cx - qx).powi(2) + (cy - qy).powi(2)).sqrt() < 1.0);
    }

    #[test]
    fn surface_line_stays_below_threshold() {
        let mut meta = RenderMeta::new(28, 28, 2.0);
        meta.draw_surface = true;
        let params = PhysParams::new(0.8, -9.81, 0.0, 0.5, 0.0);
        let traj = crate::dynamics::simulate_frames(&BallState::flight(5.0, 2.5, 0.0, 0.0), &params, 3, 0.05)
            .unwrap();
        let clip = render(&traj, &meta).unwrap();
        let bottom = &clip.frames[0][27 * 28..28 * 28];
        assert!(bottom.iter().all(|&v| v == SURFACE_LEVEL));
        let obs = track(&clip, DEFAULT_THRESHOLD);
        let (px, py) = meta.world_to_px.project(5.0, 2.5);
        assert!((obs[0].cx - px).abs() <= 0.75 && (obs[0].cy - py).abs() <= 0.75);
    }

    #[test]
    fn out_of_frame_is_reported() {
        let meta = RenderMeta::new(28, 28, 2.0);
        let params = PhysParams::default();
        let traj = crate::dynamics::simulate_frames(&BallState::flight(12.0, 2.0, 0.0, 0.0), &params, 2, 0.05)
            .unwrap();
        assert!(matches!(render(&traj, &meta), Err(VideoError::OutOfFrame { frame: 0, .. })));
    }

    #[test]
    fn pgm_layout() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 3, 2, &[0, 1, 2, 3, 4, 255]).unwrap();
        assert_eq!(&buf[..11], b"P5\n3 2\n255\n");
        assert_eq!(&buf[11..], &[0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn world_box_maps_inside_frame() {
        let m = WorldToPx::for_frame(28, 28, 2.0);
        assert_eq!(m.project(0.0, 0.0), (2.0, 25.0));
        assert_eq!(m.project(WORLD_WIDTH, WORLD_HEIGHT), (25.0, 2.0));
        let (x, y) = m.unproject(7.5, 11.0);
        let (px, py) = m.project(x, y);
        assert!((px - 7.5).abs() < 1e-12 && (py - 11.0).abs() < 1e-12);
    }
}
