//! `pmbm-map`: simulate, sample, estimate and evaluate landmark maps.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use pmbm_map::estimation::{
    estimate_map, intensity_mixture, sample_mixture, snapshot_landmarks, IntensityMixture, LandmarkEstimate,
    MapEstimate, MixtureComponent,
};
use pmbm_map::io::{self, MetricsRow};
use pmbm_map::metrics::{cardinality, ise};
use pmbm_map::model::MeasurementBatch;
use pmbm_map::sampler::run_blocked;
use pmbm_map::scenario::{build_scenario, generate_measurements};
use pmbm_map::undetected::{undetected_raster, visit_counts, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::Config;

#[derive(Parser)]
#[command(name = "pmbm-map", version, about = "Batch landmark mapping with a collapsed Gibbs sampler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory, measurements and ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Sample measurement partitions and write the trace.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: BatchInputs,
    },
    /// Build the map, clutter summary and undetected-intensity raster from a trace.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: BatchInputs,
        /// Trace written by `sample`.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compare an estimated map with the ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Map written by `estimate`, or a ground-truth file.
        #[arg(long)]
        estimate: PathBuf,
        /// Ground truth written by `simulate`.
        #[arg(long)]
        truth: PathBuf,
        /// Trace for the per-snapshot curve; needs `--measurements`.
        #[arg(long, requires = "measurements")]
        trace: Option<PathBuf>,
        #[arg(long)]
        measurements: Option<PathBuf>,
        /// Defaults to `trajectory.csv` beside the measurements.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    /// Gating distance in meters; `inf` disables gating.
    #[arg(long)]
    gate: Option<f64>,
    /// Existence threshold for landmark extraction.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    assoc_radius: Option<f64>,
    #[arg(long)]
    spurious_fraction: Option<f64>,
    /// Raster cell size in meters.
    #[arg(long)]
    grid_res: Option<f64>,
}

#[derive(Args)]
struct BatchInputs {
    #[arg(long)]
    measurements: PathBuf,
    /// Defaults to `trajectory.csv` beside the measurements.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<pmbm_map::Error> for Failure {
    fn from(e: pmbm_map::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Resolved configuration plus the header written into every output file.
struct Run {
    cfg: Config,
    header: Vec<String>,
    out: PathBuf,
}

impl Common {
    fn resolve(&self, command: &str) -> std::result::Result<Run, Failure> {
        let mut cfg = Config::load(&self.config).map_err(Failure::Usage)?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.iterations {
            cfg.sampler.iterations = v;
        }
        if let Some(v) = self.burn_in {
            cfg.sampler.burn_in = v;
        }
        if let Some(v) = self.thinning {
            cfg.sampler.thinning = v;
        }
        if let Some(v) = self.gate {
            cfg.sampler.gate_distance = v;
        }
        if let Some(v) = self.threshold {
            cfg.estimation.existence_threshold = v;
        }
        if let Some(v) = self.assoc_radius {
            cfg.estimation.assoc_radius = v;
        }
        if let Some(v) = self.spurious_fraction {
            cfg.estimation.spurious_fraction = v;
        }
        if let Some(v) = self.grid_res {
            cfg.estimation.grid_resolution = v;
        }
        cfg.validate().map_err(Failure::Usage)?;
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        let header = vec![
            format!("pmbm-map {command}"),
            format!("seed={}", cfg.seed),
            format!("config_sha256={}", cfg.digest()),
        ];
        Ok(Run {
            cfg,
            header,
            out: self.out.clone(),
        })
    }
}

impl Run {
    fn write(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> pmbm_map::Result<()>) -> anyhow::Result<()> {
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        f(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
        w.flush()?;
        Ok(())
    }
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn load_batch(measurements: &Path, trajectory: Option<&Path>) -> anyhow::Result<MeasurementBatch> {
    let trajectory = match trajectory {
        Some(p) => p.to_path_buf(),
        None => measurements.with_file_name("trajectory.csv"),
    };
    let poses = io::read_trajectory(open(&trajectory)?).with_context(|| format!("in {}", trajectory.display()))?;
    let batch = io::read_measurements(open(measurements)?, poses).with_context(|| format!("in {}", measurements.display()))?;
    if batch.is_empty() {
        return Err(anyhow!("{} contains no measurements", measurements.display()));
    }
    Ok(batch)
}

fn simulate(common: &Common) -> CmdResult {
    let run = common.resolve("simulate")?;
    let prior = run.cfg.prior().map_err(Failure::Usage)?;
    let mut scenario = build_scenario(&run.cfg.scenario_options(), &prior)?;
    scenario.model = run.cfg.model_config().map_err(Failure::Usage)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.cfg.seed);
    let data = generate_measurements(&scenario, &mut rng)?;

    run.write("trajectory.csv", |w| io::write_trajectory(w, &scenario.trajectory, &run.header))?;
    run.write("measurements.csv", |w| io::write_measurements(w, &data.batch, &run.header))?;
    run.write("ground_truth.csv", |w| io::write_ground_truth(w, &scenario.landmarks, &run.header))?;
    println!(
        "scans: {}, measurements: {}, landmarks: {}",
        data.batch.scan_count(),
        data.batch.len(),
        scenario.landmarks.len()
    );
    Ok(())
}

fn sample(common: &Common, inputs: &BatchInputs) -> CmdResult {
    let run = common.resolve("sample")?;
    let prior = run.cfg.prior().map_err(Failure::Usage)?;
    let model = run.cfg.model_config().map_err(Failure::Usage)?;
    let batch = load_batch(&inputs.measurements, inputs.trajectory.as_deref())?;
    let sampler = run.cfg.sampler_config();
    let trace = run_blocked(&batch, &prior, &model, &sampler)?;
    log::info!(
        "accepted moves: {} of {} updates ({:.4})",
        trace.accepted_moves,
        trace.updates,
        trace.accepted_moves as f64 / trace.updates.max(1) as f64
    );
    run.write("trace.txt", |w| io::write_trace(w, &trace, &run.header))?;
    println!("measurements: {}, snapshots: {}", batch.len(), trace.snapshots.len());
    Ok(())
}

fn estimate(common: &Common, inputs: &BatchInputs, trace_path: &Path) -> CmdResult {
    let run = common.resolve("estimate")?;
    let prior = run.cfg.prior().map_err(Failure::Usage)?;
    let model = run.cfg.model_config().map_err(Failure::Usage)?;
    let batch = load_batch(&inputs.measurements, inputs.trajectory.as_deref())?;
    let trace = io::read_trace(open(trace_path)?).with_context(|| format!("in {}", trace_path.display()))?;
    if trace.snapshots.is_empty() {
        return Err(anyhow!("{} contains no snapshots", trace_path.display()).into());
    }
    if let Some(s) = trace.snapshots.iter().find(|s| s.labels.len() != batch.len()) {
        return Err(anyhow!(
            "snapshot {} labels {} measurements but the batch has {}",
            s.iteration,
            s.labels.len(),
            batch.len()
        )
        .into());
    }
    let map = estimate_map(&trace, &batch, &prior, &model, &run.cfg.estimation_config())?;

    let grid = Grid::new(model.aoi, run.cfg.estimation.grid_resolution)?;
    let counts = visit_counts(batch.trajectory(), &model.fov, &grid);
    let raster = undetected_raster(&prior, &model, &grid, &counts)?;

    run.write("map.csv", |w| io::write_map(w, &map, &run.header))?;
    run.write("map_summary.csv", |w| io::write_map_summary(w, &map, &run.header))?;
    run.write("undetected_raster.csv", |w| io::write_raster(w, &raster, &run.header))?;
    println!(
        "landmarks: {}, clutter rate: {}, expected undetected: {}",
        map.landmarks.len(),
        map.clutter_rate_estimate,
        raster.total_rate()
    );
    Ok(())
}

/// Reads a map file or a ground-truth file, telling them apart by the
/// number of columns.
fn read_landmarks(path: &Path) -> anyhow::Result<Vec<LandmarkEstimate>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let columns = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').count())
        .ok_or_else(|| anyhow!("{} has no header row", path.display()))?;
    let landmarks = match columns {
        7 => io::read_map(text.as_bytes())?,
        6 => io::read_ground_truth(text.as_bytes())?
            .into_iter()
            .map(|l| LandmarkEstimate {
                position: l.position,
                extent: l.extent,
                weight: l.omega,
                support: 1.0,
            })
            .collect(),
        n => return Err(anyhow!("{}: unexpected column count {n}", path.display())),
    };
    Ok(landmarks)
}

fn to_mixture(landmarks: Vec<LandmarkEstimate>) -> IntensityMixture {
    intensity_mixture(&MapEstimate {
        landmarks,
        clutter_rate_estimate: 0.0,
    })
}

fn evaluate(
    common: &Common,
    estimate_path: &Path,
    truth_path: &Path,
    trace_path: Option<&Path>,
    measurements: Option<&Path>,
    trajectory: Option<&Path>,
) -> CmdResult {
    let run = common.resolve("evaluate")?;
    let truth_landmarks = io::read_ground_truth(open(truth_path)?).with_context(|| format!("in {}", truth_path.display()))?;
    let truth = IntensityMixture {
        components: truth_landmarks
            .iter()
            .map(|l| MixtureComponent {
                weight: l.omega,
                mean: l.position,
                cov: l.extent,
            })
            .collect(),
    };
    let estimated = read_landmarks(estimate_path)?;
    let est_count = estimated.len();
    let final_ise = ise(&truth, &to_mixture(estimated))?;
    let card = cardinality(truth_landmarks.len(), est_count);
    run.write("evaluation.csv", |w| {
        for line in &run.header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "ise,trueCount,estCount,cardinalityError")?;
        writeln!(w, "{},{},{},{}", final_ise, card.true_count, card.est_count, card.error)?;
        Ok(())
    })?;
    println!("ise: {final_ise}, landmarks: {est_count} of {}", truth_landmarks.len());

    if let (Some(trace_path), Some(measurements)) = (trace_path, measurements) {
        let prior = run.cfg.prior().map_err(Failure::Usage)?;
        let model = run.cfg.model_config().map_err(Failure::Usage)?;
        let batch = load_batch(measurements, trajectory)?;
        let trace = io::read_trace(open(trace_path)?).with_context(|| format!("in {}", trace_path.display()))?;
        if trace.snapshots.iter().any(|s| s.labels.len() != batch.len()) {
            return Err(anyhow!("trace and measurements disagree on the measurement count").into());
        }
        let per_snapshot = snapshot_landmarks(
            &trace.snapshots,
            &batch,
            &prior,
            &model,
            run.cfg.estimation.existence_threshold,
        )?;
        let rows = per_snapshot
            .iter()
            .map(|s| {
                Ok(MetricsRow {
                    iteration: s.iteration,
                    ise: ise(&truth, &sample_mixture(&s.landmarks))?,
                    landmark_count: s.landmarks.len(),
                })
            })
            .collect::<pmbm_map::Result<Vec<_>>>()?;
        run.write("snapshot_metrics.csv", |w| io::write_metrics(w, &rows, &run.header))?;
        println!("snapshot rows: {}", rows.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Sample { common, inputs } => sample(common, inputs),
        Command::Estimate { common, inputs, trace } => estimate(common, inputs, trace),
        Command::Evaluate {
            common,
            estimate,
            truth,
            trace,
            measurements,
            trajectory,
        } => evaluate(
            common,
            estimate,
            truth,
            trace.as_deref(),
            measurements.as_deref(),
            trajectory.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
