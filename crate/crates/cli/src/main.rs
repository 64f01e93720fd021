//! `sysid`: dataset generation, simulation, identification, prediction,
//! the interception experiment and the benchmark grids from the command
//! line.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
//! data errors.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybrid_sysid::baselines::{identify_bo, identify_dmd, identify_lsq, trajectory_objective, BaselineError, Method};
use hybrid_sysid::bench::{self, BenchError, Suite};
use hybrid_sysid::dataset::{self, DataSet, DatasetError, RandomizationSpec, Split};
use hybrid_sysid::dynamics::{self, BallState, DynamicsError, PhysParams};
use hybrid_sysid::interception::{self, InterceptError, Policy};
use hybrid_sysid::smc::{self, Camera, SmcError};
use hybrid_sysid::stats::mse;
use hybrid_sysid::video::{self, VideoError, DEFAULT_THRESHOLD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::{Preset, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SmcError> for CliError {
    fn from(e: SmcError) -> Self {
        match e {
            SmcError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Budget(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<InterceptError> for CliError {
    fn from(e: InterceptError) -> Self {
        match e {
            InterceptError::InvalidConfig(_) => CliError::Config(e.to_string()),
            InterceptError::Filter(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::InvalidConfig(_) => CliError::Config(e.to_string()),
            BenchError::Dataset(d) => d.into(),
            BenchError::Filter(f) => f.into(),
            BenchError::Baseline(b) => b.into(),
            BenchError::Intercept(i) => i.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<VideoError> for CliError {
    fn from(e: VideoError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "sysid", version, about = "Hybrid bouncing-ball simulation and online identification from video")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, env = "V2P_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON file overriding any default setting.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective settings as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a domain-randomized dataset in the V2P1 format.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Frames per clip (default: the preset's).
        #[arg(long)]
        frames: Option<usize>,
        /// Resample the physical parameters every this many frames.
        #[arg(long)]
        change_every: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-frame labels as CSV.
        #[arg(long)]
        labels_csv: Option<PathBuf>,
    },
    /// Simulate one trajectory and write `t,x,y,vx,vy,mode`.
    Simulate {
        #[arg(long, default_value_t = 0.8)]
        e: f64,
        #[arg(long, default_value_t = -9.81, allow_hyphen_values = true)]
        g: f64,
        #[arg(long, default_value_t = 0.01)]
        c: f64,
        #[arg(long, default_value_t = 0.3)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        table_h: f64,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, default_value_t = 4.0)]
        y: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        vx: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        vy: f64,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the frames of one dataset clip as PGM images.
    Render {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        clip: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write differences of consecutive frames instead.
        #[arg(long)]
        diff: bool,
    },
    /// Identify the physical parameters of one dataset clip.
    Identify {
        #[arg(long, default_value = "lsq")]
        method: Method,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        clip: usize,
        /// Observed frames (default: the whole clip).
        #[arg(long)]
        frames: Option<usize>,
        /// Posterior trace CSV (smc only).
        #[arg(long)]
        posterior: Option<PathBuf>,
    },
    /// Filter a clip and forecast the ball position.
    Predict {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        clip: usize,
        #[arg(long, default_value_t = 50)]
        frames: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        posterior: Option<PathBuf>,
    },
    /// Run the interception campaign.
    Intercept {
        #[arg(long, default_value_t = 35)]
        trials: usize,
        /// Campaign seeds (default: the run seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        policies: Vec<Policy>,
        /// Directory for per-trial logs.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce one evaluation grid as CSV.
    Bench {
        #[arg(long)]
        suite: Suite,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-frame posterior traces (varying suite only).
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn load_clip(path: &Path, clip: usize) -> Result<(DataSet, usize), CliError> {
    let ds = DataSet::load(path).map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if clip >= ds.len() {
        return Err(CliError::Data(format!("{} holds {} clips, no clip {clip}", path.display(), ds.len())));
    }
    Ok((ds, clip))
}

fn observed_frames(requested: Option<usize>, available: usize) -> Result<usize, CliError> {
    let n = requested.unwrap_or(available);
    if n < 2 || n > available {
        return Err(CliError::Config(format!("--frames must lie in 2..={available}, got {n}")));
    }
    Ok(n)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    if let Command::GenData { preset: Some(p), .. } = &cli.command {
        cfg.preset = *p;
    }
    cfg.validate()?;
    if cli.dump_config {
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }

    match cli.command {
        Command::GenData { n, split, frames, change_every, out, labels_csv, .. } => {
            let n_frames = frames.unwrap_or(cfg.preset.frames());
            let spec = match cfg.preset {
                Preset::Small => RandomizationSpec::small(split, cfg.seed),
                Preset::Wide => RandomizationSpec::wide(split, cfg.seed),
            };
            let ds = dataset::generate_varying(
                &spec,
                n,
                cfg.preset.resolution(),
                n_frames,
                change_every.unwrap_or(n_frames),
            )?;
            ds.save(&out)?;
            if let Some(path) = labels_csv {
                let mut w = create(&path)?;
                ds.write_labels_csv(&mut w)?;
                w.flush()?;
            }
            eprintln!("wrote {} clips to {} (checksum {:016x})", ds.len(), out.display(), ds.checksum());
        }
        Command::Simulate { e, g, c, r, table_h, x, y, vx, vy, duration, dt, out } => {
            let params = PhysParams::new(e, g, c, r, table_h);
            params.validate().map_err(|err| CliError::Config(err.to_string()))?;
            let init = BallState::flight(x, y.max(table_h), vx, vy);
            let traj = dynamics::simulate(&init, &params, duration, dt)
                .map_err(|err| CliError::Config(err.to_string()))?;
            let mut w = output(out.as_deref())?;
            traj.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Render { dataset, clip, out, diff } => {
            let (ds, k) = load_clip(&dataset, clip)?;
            let frames = if diff { video::frame_diff(&ds.clips[k])? } else { ds.clips[k].clone() };
            frames.write_pgm_dir(&out)?;
            eprintln!("wrote {} frames to {}", frames.len(), out.display());
        }
        Command::Identify { method, dataset, clip, frames, posterior } => {
            let (ds, k) = load_clip(&dataset, clip)?;
            let label = &ds.labels[k];
            let n = observed_frames(frames, ds.n_frames)?;
            let observed = &label.positions[..n];
            let truth = label.params_at(0);
            let space = ds.spec.ranges;
            let mut rng = rng(cfg.seed);
            let report = match method {
                Method::Lsq | Method::Bo => {
                    let r = if method == Method::Lsq {
                        identify_lsq(observed, &label.init, ds.dt, &space, cfg.lsq_samples, &mut rng)?
                    } else {
                        identify_bo(observed, &label.init, ds.dt, &space, cfg.bo_evals, &cfg.bo, &mut rng)?
                    };
                    json!({
                        "method": method.to_string(),
                        "clip": k,
                        "frames": n,
                        "theta_hat": r.theta_hat,
                        "truth": truth,
                        "objective": r.objective,
                        "truth_objective": trajectory_objective(&truth, &label.init, observed, ds.dt),
                        "normalized_error": space.normalized_error(&r.theta_hat, &truth),
                        "n_evals": r.n_evals,
                        "wall_time": r.wall_time,
                    })
                }
                Method::Dmd => {
                    let f = identify_dmd(observed, cfg.dmd_embed)?;
                    let eig: Vec<[f64; 2]> = f.eigenvalues().iter().map(|z| [z.re, z.im]).collect();
                    json!({
                        "method": "dmd",
                        "clip": k,
                        "frames": n,
                        "embed_dim": cfg.dmd_embed,
                        "eigenvalues": eig,
                        "fit_mse": mse(&f.reconstruct(), observed),
                    })
                }
                Method::Smc => {
                    let obs = video::track(&ds.clips[k], DEFAULT_THRESHOLD);
                    let camera = Camera { world_to_px: ds.clips[k].meta.world_to_px, dt: ds.dt };
                    let (_, trace) = smc::filter_sequence(&cfg.smc, &space, camera, &obs[..n], cfg.seed)?;
                    if let Some(path) = posterior {
                        let mut w = create(&path)?;
                        smc::write_posterior_csv(&trace, &mut w)?;
                        w.flush()?;
                    }
                    let last = trace.last().ok_or(SmcError::NeedVisibleFrames)?;
                    json!({
                        "method": "smc",
                        "clip": k,
                        "frames": n,
                        "theta_hat": last.mean_params(),
                        "std": last.std,
                        "truth": truth,
                        "normalized_error": space.normalized_error(&last.mean_params(), &truth),
                        "ess": last.ess,
                    })
                }
            };
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?);
        }
        Command::Predict { dataset, clip, frames, horizon, out, posterior } => {
            let (ds, k) = load_clip(&dataset, clip)?;
            let n = observed_frames(Some(frames), ds.n_frames)?;
            let obs = video::track(&ds.clips[k], DEFAULT_THRESHOLD);
            let camera = Camera { world_to_px: ds.clips[k].meta.world_to_px, dt: ds.dt };
            let (filter, trace) = smc::filter_sequence(&cfg.smc, &ds.spec.ranges, camera, &obs[..n], cfg.seed)?;
            if let Some(path) = posterior {
                let mut w = create(&path)?;
                smc::write_posterior_csv(&trace, &mut w)?;
                w.flush()?;
            }
            let mut w = output(out.as_deref())?;
            filter.predict(horizon).write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Intercept { trials, seeds, policies, log_dir, out } => {
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            let policies = if policies.is_empty() { Policy::ALL.to_vec() } else { policies };
            let results = interception::campaign_trials(&cfg.intercept, trials, &policies, &seeds)?;
            if let Some(dir) = log_dir {
                std::fs::create_dir_all(&dir)?;
                for t in &results {
                    let name = format!("seed{}_trial{:03}_{}.csv", t.seed, t.trial, t.result.policy);
                    let mut w = create(&dir.join(name))?;
                    interception::write_trial_log(&t.result.log, &mut w)?;
                    w.flush()?;
                }
            }
            let rows = interception::summarize(&results, &policies, &seeds);
            let mut w = output(out.as_deref())?;
            interception::write_campaign_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::Bench { suite, out, traces } => {
            let b = &cfg.bench;
            let mut w = output(out.as_deref())?;
            match suite {
                Suite::Sysid => bench::write_sysid_csv(&bench::run_sysid(b)?, &mut w)?,
                Suite::Forward => bench::write_forward_csv(&bench::run_forward(b)?, &mut w)?,
                Suite::Varying => {
                    let outcomes = bench::run_varying(b)?;
                    bench::write_varying_csv(&outcomes, &mut w)?;
                    if let Some(path) = traces {
                        let mut t = create(&path)?;
                        bench::write_varying_traces(&outcomes, b.varying_switch_frame, &mut t)?;
                        t.flush()?;
                    }
                }
                Suite::Intercept => interception::write_campaign_csv(&bench::run_intercept(b)?, &mut w)?,
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sysid: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
