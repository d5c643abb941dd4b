use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rayon::prelude::*;

use bearing_maneuver::io::{
    write_bundle, BundleOptions, LoadedScenario, ScenarioFile, SpectrumReport, Summary,
};
use bearing_maneuver::{
    assemble, bearing_laplacian, check_localizable, rigidity_report, BearingSpec, FormationError,
    Gains,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_INPUT: u8 = 2;

/// Bearing-based formation maneuver simulator.
#[derive(Parser)]
#[command(name = "bmv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report bearing rigidity and localizability of a scenario.
    Check { scenario: PathBuf },
    /// Simulate a scenario and write trajectory.csv and summary.json.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print the closed-loop spectrum as JSON.
    Spectrum {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several scenarios in parallel, one output directory each.
    Batch {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Keep every n-th CSV row (the last row is always kept).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    decimate: u64,
    /// Simulate even if the target is not rigid or not localizable.
    #[arg(long)]
    force: bool,
    /// Also write xi.csv with the integral states.
    #[arg(long)]
    xi: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    ki: Option<f64>,
}

enum Failure {
    Input(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Validation(_) => EXIT_VALIDATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Validation(m) => m,
        }
    }
}

impl From<FormationError> for Failure {
    fn from(e: FormationError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<LoadedScenario, Failure> {
    let mut file =
        ScenarioFile::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    if let Some(dt) = overrides.dt {
        file.dt = dt;
    }
    if let Some(seed) = overrides.seed {
        file.seed = seed;
    }
    if overrides.kp.is_some() || overrides.ki.is_some() {
        file.gains = Gains {
            kp: overrides.kp.unwrap_or(file.gains.kp),
            ki: overrides.ki.unwrap_or(file.gains.ki),
        };
    }
    if file.name.is_none() {
        file.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    file.to_scenario()
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn check(path: &Path) -> Result<(), Failure> {
    let loaded = load(path, &Overrides::default())?;
    let s = &loaded.scenario;
    let spec = BearingSpec::from_configuration(&s.graph, &s.reference_config)
        .map_err(|e| Failure::Input(e.to_string()))?;
    let rigidity = rigidity_report(&s.graph, &s.reference_config)
        .map_err(|e| Failure::Input(e.to_string()))?;
    let laplacian =
        bearing_laplacian(&s.graph, &spec).map_err(|e| Failure::Input(e.to_string()))?;
    let loc = check_localizable(&laplacian);

    println!(
        "agents: {} ({} leaders), dimension {}",
        s.graph.agent_count(),
        s.graph.n_leaders(),
        s.graph.dim()
    );
    println!("rank(R_B): {}", rigidity.rank);
    println!("required rank: {}", rigidity.required_rank);
    println!("lambda_min(L_ff): {:e}", loc.min_eigenvalue);
    let verdict = format!(
        "{}, {}",
        if rigidity.is_infinitesimally_bearing_rigid {
            "RIGID"
        } else {
            "NOT RIGID"
        },
        if loc.is_localizable {
            "LOCALIZABLE"
        } else {
            "NOT LOCALIZABLE"
        }
    );
    println!("{verdict}");
    if rigidity.is_infinitesimally_bearing_rigid && loc.is_localizable {
        Ok(())
    } else {
        Err(Failure::Validation(verdict))
    }
}

fn run_one(path: &Path, out: &Path, opts: &RunOpts) -> Result<Summary, Failure> {
    let mut loaded = load(path, &opts.overrides)?;
    loaded.scenario.force = opts.force;
    let ctx = assemble(&loaded.scenario)?;
    info!(
        "{}: {} segments, dt {}",
        loaded.name,
        ctx.segments().len(),
        loaded.scenario.dt
    );
    let traj = ctx.run()?;
    let summary = Summary::build(&loaded.name, &ctx, &traj)?;
    let bundle = BundleOptions {
        decimate: opts.decimate as usize,
        write_xi: opts.xi,
    };
    write_bundle(out, &loaded.ids, &summary, &traj, bundle)
        .map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    Ok(summary)
}

fn print_final(summary: &Summary) {
    let tracking = summary
        .final_tracking_error
        .map_or_else(|| "n/a".to_string(), |e| format!("{e:e}"));
    println!(
        "{}: final bearing_error {:e}, tracking_error {tracking}",
        summary.name, summary.final_bearing_error
    );
}

fn spectrum(path: &Path, overrides: &Overrides) -> Result<(), Failure> {
    let loaded = load(path, overrides)?;
    let ctx = assemble(&loaded.scenario)?;
    let report = SpectrumReport::from_context(&ctx)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if report.is_hurwitz {
        Ok(())
    } else {
        Err(Failure::Validation(
            "closed-loop matrix is not Hurwitz".into(),
        ))
    }
}

fn batch(paths: &[PathBuf], out: &Path, opts: &RunOpts) -> Result<(), Failure> {
    let results: Vec<(&PathBuf, Result<Summary, Failure>)> = paths
        .par_iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
            (path, run_one(path, &out.join(stem), opts))
        })
        .collect();
    let mut worst: Option<Failure> = None;
    for (path, result) in results {
        match result {
            Ok(summary) => print_final(&summary),
            Err(f) => {
                error!("{}: {}", path.display(), f.message());
                println!("{}: FAILED ({})", path.display(), f.message());
                if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                    worst = Some(f);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BMV_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { scenario } => check(scenario),
        Command::Run {
            scenario,
            out,
            opts,
        } => run_one(scenario, out, opts).map(|s| print_final(&s)),
        Command::Spectrum {
            scenario,
            overrides,
        } => spectrum(scenario, overrides),
        Command::Batch {
            scenarios,
            out,
            opts,
        } => batch(scenarios, out, opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
