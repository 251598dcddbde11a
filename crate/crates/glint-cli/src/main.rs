//! Command-line front end for reflection-based relative localization.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glint_core::harness::{
    export_images, replay, report_from_files, run_experiment, HarnessError, Profile, RunConfig,
};
use glint_core::simulator::SceneConfig;
use glint_core::Calibration64;

#[derive(Parser)]
#[command(
    name = "glint",
    about = "Relative localization from surface reflections of active markers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic scene through the full pipeline and report the errors.
    Simulate(SimulateArgs),
    /// Re-run the pipeline on an exported centroid log.
    Replay(ReplayArgs),
    /// Compare an estimate CSV against a ground-truth CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Named parameter profile (indoor_1..4, outdoor_1..3, custom).
    #[arg(long, default_value = "indoor_1")]
    profile: String,
    /// Run-config TOML; required when --profile custom.
    #[arg(long)]
    run_config: Option<PathBuf>,
    /// Seed for the samplers and the tracker.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let profile: Profile = self.profile.parse()?;
        match &self.run_config {
            Some(path) => {
                let run = RunConfig::load(path, self.seed, self.out.clone())?;
                if profile != Profile::Custom && run.profile != profile {
                    return Err(HarnessError::Config(format!(
                        "profile '{profile}' on the command line but '{}' in {}",
                        run.profile,
                        path.display()
                    )));
                }
                Ok(run)
            }
            None => RunConfig::from_profile(profile, self.seed, self.out.clone()),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description TOML.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Also render the scene as portable graymaps under <out>/frames/.
    #[arg(long)]
    emit_images: bool,
    /// Dump sampled candidate and inlier point clouds per frame.
    #[arg(long)]
    dump_clouds: bool,
    /// Dump cone wireframes per frame.
    #[arg(long)]
    dump_cones: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Centroid log exported by `simulate` (frames.csv).
    #[arg(long)]
    log: PathBuf,
    /// Attitude CSV (t,roll,pitch,height).
    #[arg(long)]
    attitude: PathBuf,
    /// Camera calibration file; defaults to the built-in synthetic model.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Estimate stream CSV (t,x,y,z,...).
    #[arg(long)]
    estimates: PathBuf,
    /// Ground-truth CSV (t,x,y,z).
    #[arg(long)]
    truth: PathBuf,
    /// Directory to write report.csv into; omit to print only.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Replay(args) => replay_cmd(args),
        Command::Report(args) => report_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), HarnessError> {
    let mut run = args.run.resolve()?;
    run.dump_clouds = args.dump_clouds;
    run.dump_cones = args.dump_cones;
    let scene: SceneConfig<f64> =
        SceneConfig::load(&args.config).map_err(|e| HarnessError::Config(e.to_string()))?;
    let output = run_experiment(&run, &scene)?;
    if args.emit_images {
        let n = export_images(&run, &scene)?;
        println!("rendered {n} graymap frames");
    }
    println!(
        "profile {} seed {} -> {}",
        run.profile,
        run.seed,
        run.output_dir.display()
    );
    println!("{}", output.report);
    Ok(())
}

fn replay_cmd(args: ReplayArgs) -> Result<(), HarnessError> {
    let run = args.run.resolve()?;
    let camera = match &args.calibration {
        Some(path) => Calibration64::load(path).map_err(|e| HarnessError::Config(e.to_string()))?,
        None => Calibration64::ideal_equidistant(752, 480, 185.0),
    };
    let estimates = replay(&args.log, &args.attitude, &run, &camera)?;
    println!(
        "replayed {} estimate rows -> {}",
        estimates.len(),
        run.output_dir.join("estimates.csv").display()
    );
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<(), HarnessError> {
    let report = report_from_files::<f64>(&args.estimates, &args.truth)?;
    println!("{report}");
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", dir.display())))?;
        std::fs::write(dir.join("report.csv"), report.to_csv_string())
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(())
}
