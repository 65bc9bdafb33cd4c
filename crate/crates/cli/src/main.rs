use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use qdlock::analysis::{recommend_bandwidth, welch_psd};
use qdlock::drift::fit_creep;
use qdlock::harness::{run_hom, run_scenario, sweep, validate_scenario, HomRun, Scenario};
use qdlock::io::{read_xy, write_file};
use qdlock::Error;

#[derive(Parser)]
#[command(
    name = "qdlock",
    version,
    about = "Photon-counting frequency lock simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed, overriding the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its traces and summary.
    Run { scenario: PathBuf },
    /// Run a scenario once per value of a numeric field.
    Sweep {
        scenario: PathBuf,
        /// Dotted key path, e.g. arm_a.lock.bandwidth_hz.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Welch power spectral density of a two-column (t_s, value) trace.
    Psd {
        trace: PathBuf,
        #[arg(long, default_value_t = 1024)]
        segment: usize,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        /// Shot-noise floor; when given, a feedback bandwidth is recommended.
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Fit logarithmic creep to a two-column (t_s, dnu_GHz) trace.
    FitCreep {
        trace: PathBuf,
        /// Step time in seconds; fitted when omitted.
        #[arg(long, allow_hyphen_values = true)]
        t0: Option<f64>,
    },
    /// Synthesize and analyse a coincidence histogram.
    Hom { config: PathBuf },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_configuration() || matches!(e, Error::Io { .. }) {
        2
    } else {
        3
    }
}

fn emit(common: &Common, name: &str, text: &str) -> Result<(), Error> {
    match &common.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            write_file(&dir.join(name), text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn uniform_step(t: &[f64], path: &Path) -> Result<f64, Error> {
    if t.len() < 2 {
        return Err(Error::Config(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let uniform = t
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
    if dt.is_nan() || dt <= 0.0 || !uniform {
        return Err(Error::Config(format!(
            "{}: samples must be uniformly spaced in time",
            path.display()
        )));
    }
    Ok(dt)
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let common = &cli.common;
    match &cli.command {
        Command::Run { scenario } => {
            let (summary, dir) = run_scenario(scenario, common.seed, common.out_dir.as_deref())?;
            if !common.quiet {
                print!("{}", summary.to_text());
                println!("# written to {}", dir.display());
            }
        }
        Command::Sweep {
            scenario,
            axis,
            values,
        } => {
            let table = sweep(scenario, axis, values, common.seed)?;
            let text = table.to_text();
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                write_file(&dir.join("sweep.tsv"), &text)?;
            }
            if !common.quiet {
                print!("{text}");
            }
        }
        Command::Psd {
            trace,
            segment,
            overlap,
            floor,
        } => {
            let (t, x) = read_xy(trace)?;
            let dt = uniform_step(&t, trace)?;
            let psd = welch_psd(&x, dt, *segment, *overlap)?;
            emit(common, "psd.tsv", &psd.to_text())?;
            if let Some(floor) = floor {
                let bw = recommend_bandwidth(&psd, *floor)?;
                if !common.quiet {
                    eprintln!("recommended_bandwidth_hz = {bw:.6e}");
                }
            }
        }
        Command::FitCreep { trace, t0 } => {
            let (t, y) = read_xy(trace)?;
            let fit = fit_creep(&t, &y, *t0)?;
            let mut text = format!(
                "dnu0_ghz = {:.9}\nsigma_dnu0_ghz = {:.3e}\nalpha = {:.9}\nsigma_alpha = {:.3e}\nt0_s = {:.6}\n",
                fit.model.dnu0_ghz, fit.sigma_dnu0, fit.model.alpha, fit.sigma_alpha, fit.model.t0_s
            );
            if let Some(s) = fit.sigma_t0 {
                text.push_str(&format!("sigma_t0_s = {s:.3e}\n"));
            }
            text.push_str(&format!(
                "residual_rms_ghz = {:.6e}\niterations = {}\n",
                fit.residual_rms, fit.iterations
            ));
            emit(common, "creep_fit.txt", &text)?;
        }
        Command::Hom { config } => {
            let mut run = HomRun::load(config)?;
            if let Some(s) = common.seed {
                run.seed = s;
            }
            let result = run_hom(&run)?;
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                write_file(&dir.join("hom.tsv"), &result.histogram.to_text())?;
                write_file(&dir.join("hom_summary.txt"), &result.report())?;
            }
            if !common.quiet {
                print!("{}", result.report());
            }
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(scenario)?;
            let base = scenario.parent().unwrap_or(Path::new("."));
            let notes = validate_scenario(&s, base)?;
            if !common.quiet {
                for n in notes {
                    println!("{n}");
                }
                println!("ok");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.common.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if cli.common.quiet {
                eprintln!("error: {e}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
