//! Domain-randomized clip generation and the `V2P1` dataset container.
//!
//! Every parameter range is cut into [`N_BINS`] equal bins; the training split
//! draws from even bins and the test split from odd bins, so the two never
//! share a parameter value.
//!
//! # `V2P1` layout (little-endian)
//!
//! ```text
//! b"V2P1"
//! u32 version, n_clips, width, height, n_frames, n_theta
//! u8  frames[n_clips][n_frames][height][width]      intensity * 255
//! f32 labels[n_clips][n_frames][n_theta]            x/10, y/5, e, g, c, r, table_h
//! u32 json_len
//! u8  json[json_len]                                UTF-8 metadata trailer
//! ```

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, BallState, DynamicsError, Impact, PhysParams, Trajectory};
use crate::fmt::sig9;
use crate::params::{ParamRange, ParamSpace};
use crate::video::{self, RenderMeta, VideoClip, VideoError};

pub const MAGIC: &[u8; 4] = b"V2P1";
pub const FORMAT_VERSION: u32 = 1;
pub const N_THETA: usize = 7;
pub const N_BINS: usize = 20;
/// Length of every generated clip in seconds.
pub const CLIP_SECONDS: f64 = 10.0;
const INIT_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid randomization spec: {0}")]
    InvalidSpec(String),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metadata trailer: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn parity(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train or test)")),
        }
    }
}

/// Frame size and ball size of a rendering preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
    pub ball_radius_px: f64,
}

impl Resolution {
    /// 28×28 frames, normally 200 frames per 10 s clip.
    pub const SMALL: Resolution = Resolution { width: 28, height: 28, ball_radius_px: 2.0 };
    /// 100×50 frames, normally 75 frames per 10 s clip.
    pub const WIDE: Resolution = Resolution { width: 100, height: 50, ball_radius_px: 3.0 };

    pub fn render_meta(&self) -> RenderMeta {
        RenderMeta::new(self.width, self.height, self.ball_radius_px)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationSpec {
    pub ranges: ParamSpace,
    pub init_x: ParamRange,
    pub init_y: ParamRange,
    pub init_speed: ParamRange,
    pub split: Split,
    pub seed: u64,
    pub blur: bool,
    pub occlusion: bool,
}

impl RandomizationSpec {
    /// Settings of the 28×28 preset: flat surface at height zero, no blur,
    /// no occlusion.
    pub fn small(split: Split, seed: u64) -> Self {
        Self {
            ranges: ParamSpace::flat_table(),
            init_x: ParamRange::new(0.5, 2.0),
            init_y: ParamRange::new(2.0, 4.5),
            init_speed: ParamRange::new(0.0, 4.0),
            split,
            seed,
            blur: false,
            occlusion: false,
        }
    }

    /// Settings of the 100×50 preset: randomized surface height, motion
    /// blur and occlusion bands.
    pub fn wide(split: Split, seed: u64) -> Self {
        Self { ranges: ParamSpace::default(), blur: true, occlusion: true, ..Self::small(split, seed) }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !self.ranges.is_valid() {
            return Err(DatasetError::InvalidSpec(format!("parameter ranges {:?}", self.ranges)));
        }
        for (name, r) in [("init_x", self.init_x), ("init_y", self.init_y), ("init_speed", self.init_speed)] {
            if !r.is_valid() {
                return Err(DatasetError::InvalidSpec(format!("{name} range {r:?}")));
            }
        }
        if self.init_y.lo < self.ranges.table_h.hi {
            return Err(DatasetError::InvalidSpec("initial height may start below the surface".into()));
        }
        if self.init_speed.lo < 0.0 {
            return Err(DatasetError::InvalidSpec("negative initial speed".into()));
        }
        Ok(())
    }
}

/// Bin of `v` within `range` (0-based, clamped to the last bin).
pub fn bin_index(range: &ParamRange, v: f64) -> usize {
    if range.is_degenerate() {
        return 0;
    }
    let k = ((v - range.lo) / range.width() * N_BINS as f64).floor();
    (k.max(0.0) as usize).min(N_BINS - 1)
}

fn sample_in_split<R: Rng + ?Sized>(range: &ParamRange, split: Split, rng: &mut R) -> f64 {
    if range.is_degenerate() {
        return range.lo;
    }
    let bin_w = range.width() / N_BINS as f64;
    loop {
        let bin = 2 * rng.random_range(0..N_BINS / 2) + split.parity();
        let v = range.lo + (bin as f64 + rng.random::<f64>()) * bin_w;
        // Rounding can push a draw onto the next bin's lower edge.
        if bin_index(range, v) == bin {
            return v;
        }
    }
}

/// Draws a parameter vector from the bins belonging to the spec's split.
pub fn sample_params<R: Rng + ?Sized>(spec: &RandomizationSpec, rng: &mut R) -> PhysParams {
    let r = spec.ranges.ranges();
    PhysParams::from_array(std::array::from_fn(|i| sample_in_split(&r[i], spec.split, rng)))
}

/// Whether every component of `p` lies in a bin of `split`.
pub fn in_split(space: &ParamSpace, p: &PhysParams, split: Split) -> bool {
    space
        .ranges()
        .iter()
        .zip(p.to_array())
        .all(|(r, v)| r.is_degenerate() || (r.contains(v) && bin_index(r, v) % 2 == split.parity()))
}

fn sample_init<R: Rng + ?Sized>(spec: &RandomizationSpec, table_h: f64, rng: &mut R) -> BallState {
    let x = spec.init_x.sample(rng);
    let y = spec.init_y.sample(rng).max(table_h);
    let speed = spec.init_speed.sample(rng);
    let angle = rng.random_range(0.0..2.0 * PI);
    BallState::flight(x, y, speed * angle.cos(), speed * angle.sin())
}

/// A stretch of frames simulated under one parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub start_frame: usize,
    pub params: PhysParams,
}

/// Simulates `n_frames` states, switching parameters at each regime start
/// and carrying the state across the switch.
pub fn simulate_regimes(
    init: &BallState,
    regimes: &[Regime],
    n_frames: usize,
    dt: f64,
) -> Result<(Trajectory, Vec<Impact>), DynamicsError> {
    let mut states = Vec::with_capacity(n_frames);
    let mut impacts = Vec::new();
    let mut s = *init;
    for p in regimes {
        p.params.validate()?;
    }
    for i in 0..n_frames {
        if i > 0 {
            let p = params_at(regimes, i - 1);
            s = dynamics::step_logged(&s, &p, dt, (i - 1) as f64 * dt, &mut impacts)?;
        }
        states.push(s);
    }
    let params = (regimes.len() == 1).then(|| regimes[0].params);
    Ok((Trajectory { dt, states, params }, impacts))
}

/// Parameters in force while stepping away from `frame`.
pub fn params_at(regimes: &[Regime], frame: usize) -> PhysParams {
    regimes
        .iter()
        .rev()
        .find(|r| r.start_frame <= frame)
        .unwrap_or(&regimes[0])
        .params
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLabel {
    pub init: BallState,
    pub regimes: Vec<Regime>,
    /// Impact times in seconds.
    pub impacts: Vec<f64>,
    /// Ground-truth positions divided by the world box extents.
    #[serde(skip)]
    pub positions: Vec<[f64; 2]>,
}

impl ClipLabel {
    pub fn params_at(&self, frame: usize) -> PhysParams {
        params_at(&self.regimes, frame)
    }

    pub fn resimulate(&self, n_frames: usize, dt: f64) -> Result<Trajectory, DynamicsError> {
        Ok(simulate_regimes(&self.init, &self.regimes, n_frames, dt)?.0)
    }

    /// Rows stored in the binary label block.
    pub fn rows(&self) -> Vec<[f32; N_THETA]> {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, pos)| {
                let p = self.params_at(i);
                [
                    pos[0] as f32,
                    pos[1] as f32,
                    p.e as f32,
                    p.g as f32,
                    p.c as f32,
                    p.r as f32,
                    p.table_h as f32,
                ]
            })
            .collect()
    }

    /// Frame index (rounded up) of the `k`-th impact, counting from zero.
    pub fn impact_frame(&self, k: usize, dt: f64) -> Option<usize> {
        self.impacts.get(k).map(|t| (t / dt - 1e-9).ceil() as usize)
    }
}

/// One generated clip with its full ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedClip {
    pub clip: VideoClip,
    pub label: ClipLabel,
    pub trajectory: Trajectory,
}

fn clip_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Generates clip `index` of a dataset. Parameters are resampled every
/// `change_every` frames; the surface height stays fixed within a clip.
pub fn generate_clip(
    spec: &RandomizationSpec,
    index: usize,
    resolution: Resolution,
    n_frames: usize,
    change_every: usize,
) -> Result<GeneratedClip, DatasetError> {
    if n_frames < 2 {
        return Err(DatasetError::InvalidSpec(format!("need at least 2 frames, got {n_frames}")));
    }
    if change_every == 0 || n_frames % change_every != 0 {
        return Err(DatasetError::InvalidSpec(format!(
            "change interval {change_every} does not divide {n_frames} frames"
        )));
    }
    let dt = CLIP_SECONDS / n_frames as f64;
    let mut rng = clip_rng(spec.seed, index);
    let first = sample_params(spec, &mut rng);
    let mut regimes = vec![Regime { start_frame: 0, params: first }];
    for k in 1..n_frames / change_every {
        let mut p = sample_params(spec, &mut rng);
        p.table_h = first.table_h;
        regimes.push(Regime { start_frame: k * change_every, params: p });
    }

    let mut meta = resolution.render_meta();
    meta.blur_enabled = spec.blur;
    if spec.occlusion && rng.random_bool(0.5) {
        let w = meta.width as f64;
        let band = (rng.random_range(0.1..0.25) * w).round().max(1.0) as u32;
        let start = rng.random_range(0..=meta.width - band);
        meta.occlusion_band = Some((start, start + band));
    }

    let mut chosen = None;
    for _ in 0..INIT_ATTEMPTS {
        let init = sample_init(spec, first.table_h, &mut rng);
        let (traj, impacts) = simulate_regimes(&init, &regimes, n_frames, dt)?;
        if traj.fits_world() {
            chosen = Some((init, traj, impacts));
            break;
        }
    }
    let (init, trajectory, impacts) = match chosen {
        Some(found) => found,
        None => {
            // A ball dropped from rest never leaves the box.
            let mut init = sample_init(spec, first.table_h, &mut rng);
            init.vx = 0.0;
            init.vy = 0.0;
            let (traj, impacts) = simulate_regimes(&init, &regimes, n_frames, dt)?;
            (init, traj, impacts)
        }
    };
    let clip = video::render(&trajectory, &meta)?;
    let label = ClipLabel {
        init,
        regimes,
        impacts: impacts.iter().map(|i| i.time).collect(),
        positions: trajectory.normalized_positions(),
    };
    Ok(GeneratedClip { clip, label, trajectory })
}

/// Generates `n_clips` clips as individual records.
pub fn generate_clips(
    spec: &RandomizationSpec,
    n_clips: usize,
    resolution: Resolution,
    n_frames: usize,
    change_every: usize,
) -> Result<Vec<GeneratedClip>, DatasetError> {
    spec.validate()?;
    (0..n_clips)
        .into_par_iter()
        .map(|i| generate_clip(spec, i, resolution, n_frames, change_every))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub spec: RandomizationSpec,
    pub width: u32,
    pub height: u32,
    pub n_frames: usize,
    pub dt: f64,
    pub clips: Vec<VideoClip>,
    pub labels: Vec<ClipLabel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Trailer {
    spec: RandomizationSpec,
    dt: f64,
    clips: Vec<ClipTrailer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipTrailer {
    meta: RenderMeta,
    label: ClipLabel,
}

/// Simulates, renders and labels `n_clips` clips with fixed parameters.
pub fn generate(
    spec: &RandomizationSpec,
    n_clips: usize,
    resolution: Resolution,
    n_frames: usize,
) -> Result<DataSet, DatasetError> {
    generate_varying(spec, n_clips, resolution, n_frames, n_frames)
}

/// Like [`generate`] but resamples the parameters every `change_every` frames.
pub fn generate_varying(
    spec: &RandomizationSpec,
    n_clips: usize,
    resolution: Resolution,
    n_frames: usize,
    change_every: usize,
) -> Result<DataSet, DatasetError> {
    if n_clips == 0 {
        return Err(DatasetError::InvalidSpec("need at least one clip".into()));
    }
    let generated = generate_clips(spec, n_clips, resolution, n_frames, change_every)?;
    let (clips, labels) = generated.into_iter().map(|g| (g.clip, g.label)).unzip();
    Ok(DataSet {
        spec: spec.clone(),
        width: resolution.width,
        height: resolution.height,
        n_frames,
        dt: CLIP_SECONDS / n_frames as f64,
        clips,
        labels,
    })
}

impl DataSet {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), DatasetError> {
        out.write_all(MAGIC)?;
        for v in [
            FORMAT_VERSION,
            self.clips.len() as u32,
            self.width,
            self.height,
            self.n_frames as u32,
            N_THETA as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for clip in &self.clips {
            for frame in &clip.frames {
                out.write_all(frame)?;
            }
        }
        for label in &self.labels {
            for row in label.rows() {
                for v in row {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        let trailer = Trailer {
            spec: self.spec.clone(),
            dt: self.dt,
            clips: self
                .clips
                .iter()
                .zip(&self.labels)
                .map(|(c, l)| ClipTrailer { meta: c.meta.clone(), label: l.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&trailer)?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(DatasetError::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(DatasetError::Format(format!("unsupported version {version}")));
        }
        let n_clips = cur.u32()? as usize;
        let width = cur.u32()?;
        let height = cur.u32()?;
        let n_frames = cur.u32()? as usize;
        let n_theta = cur.u32()? as usize;
        if n_theta != N_THETA {
            return Err(DatasetError::Format(format!("expected {N_THETA} label columns, found {n_theta}")));
        }
        let frame_len = width as usize * height as usize;
        let mut frames = Vec::with_capacity(n_clips);
        for _ in 0..n_clips {
            let mut clip = Vec::with_capacity(n_frames);
            for _ in 0..n_frames {
                clip.push(cur.take(frame_len)?.to_vec());
            }
            frames.push(clip);
        }
        let mut rows = Vec::with_capacity(n_clips);
        for _ in 0..n_clips {
            let mut clip_rows = Vec::with_capacity(n_frames);
            for _ in 0..n_frames {
                let mut row = [0f32; N_THETA];
                for v in row.iter_mut() {
                    *v = f32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
                }
                clip_rows.push(row);
            }
            rows.push(clip_rows);
        }
        let json_len = cur.u32()? as usize;
        let trailer: Trailer = serde_json::from_slice(cur.take(json_len)?)?;
        if cur.pos != bytes.len() {
            return Err(DatasetError::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        if trailer.clips.len() != n_clips {
            return Err(DatasetError::Format(format!(
                "header lists {n_clips} clips, metadata {}",
                trailer.clips.len()
            )));
        }
        let mut clips = Vec::with_capacity(n_clips);
        let mut labels = Vec::with_capacity(n_clips);
        for ((clip_frames, clip_rows), ct) in frames.into_iter().zip(rows).zip(trailer.clips) {
            if ct.meta.width != width || ct.meta.height != height {
                return Err(DatasetError::Format("clip render size disagrees with header".into()));
            }
            let mut label = ct.label;
            label.positions = clip_rows.iter().map(|r| [r[0] as f64, r[1] as f64]).collect();
            clips.push(VideoClip {
                width,
                height,
                dt: trailer.dt,
                first_frame: 0,
                frames: clip_frames,
                meta: ct.meta,
            });
            labels.push(label);
        }
        Ok(DataSet { spec: trailer.spec, width, height, n_frames, dt: trailer.dt, clips, labels })
    }

    /// FNV-1a over the frame block followed by the label block.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv1a::default();
        for clip in &self.clips {
            for frame in &clip.frames {
                h.update(frame);
            }
        }
        for label in &self.labels {
            for row in label.rows() {
                for v in row {
                    h.update(&v.to_le_bytes());
                }
            }
        }
        h.0
    }

    /// Writes `clip,frame,e,g,c,r,table_h,x,y` rows; positions are normalized.
    pub fn write_labels_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "clip,frame,e,g,c,r,table_h,x,y")?;
        for (ci, label) in self.labels.iter().enumerate() {
            for (fi, pos) in label.positions.iter().enumerate() {
                let p = label.params_at(fi);
                writeln!(
                    out,
                    "{ci},{fi},{},{},{},{},{},{},{}",
                    sig9(p.e),
                    sig9(p.g),
                    sig9(p.c),
                    sig9(p.r),
                    sig9(p.table_h),
                    sig9(pos[0]),
                    sig9(pos[1])
                )?;
            }
        }
        Ok(())
    }
}

struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            DatasetError::Format(format!("truncated: wanted {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_never_draws_odd_bins() {
        let spec = RandomizationSpec::small(Split::Train, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for _ in 0..5000 {
            let p = sample_params(&spec, &mut rng);
            assert!(!(0.62..0.64).contains(&p.e));
            assert!(in_split(&spec.ranges, &p, Split::Train));
            assert!(!in_split(&spec.ranges, &p, Split::Test));
            assert_eq!(p.table_h, 0.0);
        }
    }

    #[test]
    fn even_bins_are_uniform() {
        let spec = RandomizationSpec::small(Split::Train, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = 10_000;
        let mut counts = [0usize; N_BINS];
        for _ in 0..n {
            counts[bin_index(&spec.ranges.e, sample_params(&spec, &mut rng).e)] += 1;
        }
        // Binomial(n, 1/10) with a 3-sigma band.
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        for (bin, &count) in counts.iter().enumerate() {
            if bin % 2 == 0 {
                assert!((count as f64 - 1000.0).abs() <= 3.0 * sigma, "bin {bin}: {count}");
            } else {
                assert_eq!(count, 0);
            }
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let spec = RandomizationSpec::wide(Split::Test, 99);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..50).map(|_| sample_params(&spec, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn generated_labels_resimulate_exactly() {
        let spec = RandomizationSpec::small(Split::Test, 3);
        let ds = generate(&spec, 4, Resolution::SMALL, 200).unwrap();
        assert_eq!(ds.len(), 4);
        for (clip, label) in ds.clips.iter().zip(&ds.labels) {
            assert_eq!(clip.len(), 200);
            assert!(in_split(&spec.ranges, &label.params_at(0), Split::Test));
            let traj = label.resimulate(200, ds.dt).unwrap();
            assert_eq!(traj.normalized_positions(), label.positions);
        }
    }

    #[test]
    fn varying_regimes_keep_state_continuous() {
        let spec = RandomizationSpec::small(Split::Train, 8);
        let g = generate_clip(&spec, 0, Resolution::SMALL, 200, 50).unwrap();
        assert_eq!(g.label.regimes.len(), 4);
        let starts: Vec<usize> = g.label.regimes.iter().map(|r| r.start_frame).collect();
        assert_eq!(starts, vec![0, 50, 100, 150]);
        // The state at a switch frame is the end of the previous regime's step
        // and the start of the next one: one shared state, no jump.
        let traj = &g.trajectory;
        for r in &g.label.regimes[1..] {
            let before = dynamics::step(&traj.states[r.start_frame - 1], &g.label.params_at(r.start_frame - 1), traj.dt)
                .unwrap();
            assert_eq!(before, traj.states[r.start_frame]);
        }
        let fixed = generate_clip(&spec, 0, Resolution::SMALL, 200, 200).unwrap();
        let plain = generate(&spec, 1, Resolution::SMALL, 200).unwrap();
        assert_eq!(fixed.clip, plain.clips[0]);
        assert_eq!(fixed.label, plain.labels[0]);
    }

    #[test]
    fn change_interval_must_divide() {
        let spec = RandomizationSpec::small(Split::Train, 8);
        assert!(generate_clip(&spec, 0, Resolution::SMALL, 200, 30).is_err());
        assert!(generate(&spec, 0, Resolution::SMALL, 200).is_err());
    }

    #[test]
    fn round_trip_and_truncation() {
        let spec = RandomizationSpec::wide(Split::Train, 21);
        let ds = generate(&spec, 3, Resolution::WIDE, 75).unwrap();
        let mut bytes = Vec::new();
        ds.write(&mut bytes).unwrap();
        let back = DataSet::from_bytes(&bytes).unwrap();
        assert_eq!(back.clips, ds.clips);
        for (a, b) in back.labels.iter().zip(&ds.labels) {
            assert_eq!(a.rows(), b.rows());
            assert_eq!(a.init, b.init);
            assert_eq!(a.regimes, b.regimes);
        }
        assert_eq!(back.checksum(), ds.checksum());
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(again, bytes);

        assert!(matches!(DataSet::from_bytes(&bytes[..bytes.len() - 3]), Err(DatasetError::Format(_))));
        assert!(matches!(DataSet::from_bytes(&bytes[..40]), Err(DatasetError::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(DataSet::from_bytes(&bad), Err(DatasetError::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(DataSet::from_bytes(&bad), Err(DatasetError::Format(_))));
    }

    #[test]
    fn labels_csv_schema() {
        let spec = RandomizationSpec::small(Split::Test, 1);
        let ds = generate(&spec, 1, Resolution::SMALL, 20).unwrap();
        let mut buf = Vec::new();
        ds.write_labels_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("clip,frame,e,g,c,r,table_h,x,y"));
        assert_eq!(text.lines().count(), 21);
    }
}
