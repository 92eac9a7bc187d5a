//! Command-line front end: `run`, `validate` and `plot`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, to_toml, Profile};
use crate::error::{Error, Result};
use crate::harness::experiment::{read_rows, run_experiment_unchecked, Row};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORTS: i32 = 3;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ICAD_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "icad",
    version,
    about = "Joint activity and interference estimation for grant-free massive access"
)]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write results.csv plus manifest.toml.
    Run(RunArgs),
    /// Check a config and print it fully resolved.
    Validate(ConfigArgs),
    /// Write a gnuplot script for a results CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set sweep.variable=M` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Default set the config is layered on.
    #[arg(long, default_value = "paper", value_parser = parse_profile)]
    pub profile: Profile,
    /// Master seed (same as `--set seed=N`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory.
    #[arg(short, long, env = OUT_DIR_ENV, default_value = "icad-out")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(short, long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// results.csv written by `run`.
    pub results: PathBuf,
    /// Script path; defaults to `plot.gp` next to the CSV.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(seed) = self.seed {
            o.push(format!("seed={seed}"));
        }
        o
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a).map(|s| {
            print!("{s}");
            EXIT_OK
        }),
        Command::Plot(a) => cmd_plot(&a.results, a.out.as_deref()).map(|p| {
            println!("{}", p.display());
            EXIT_OK
        }),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::InvalidInput(_) | Error::UnsupportedPrior(_) => {
            EXIT_CONFIG
        }
        Error::AbortRate { .. } => EXIT_ABORTS,
        _ => EXIT_FAILURE,
    }
}

/// Resolves and prints the config without computing anything.
pub fn cmd_validate(a: &ConfigArgs) -> Result<String> {
    let spec = load_config(&a.config, a.profile, &a.overrides())?;
    to_toml(&spec)
}

/// Runs the experiment; writes `results.csv` and `manifest.toml` to `a.out`.
pub fn cmd_run(a: &RunArgs) -> Result<i32> {
    let spec = load_config(&a.config.config, a.config.profile, &a.config.overrides())?;
    let manifest = to_toml(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    let out = run_experiment_unchecked(&spec, a.workers)?;
    let csv_path = a.out.join("results.csv");
    std::fs::write(&csv_path, out.to_csv()?).map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    let man_path = a.out.join("manifest.toml");
    std::fs::write(&man_path, manifest).map_err(|e| Error::Io(format!("{}: {e}", man_path.display())))?;
    log::info!("wrote {} and {}", csv_path.display(), man_path.display());
    match out.check_abort_rate(spec.max_abort_rate) {
        Ok(()) => Ok(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_ABORTS)
        }
    }
}

/// Writes a self-contained gnuplot script and returns its path.
pub fn cmd_plot(results: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let rows = read_rows(results).map_err(|e| match e {
        Error::Io(m) => Error::InvalidInput(m),
        other => other,
    })?;
    let script = plot_script(&rows)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| results.with_file_name("plot.gp"));
    std::fs::write(&path, script).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Gnuplot script drawing error probability against the sweep variable, one curve per detector.
pub fn plot_script(rows: &[Row]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("results contain no rows".into()));
    }
    let var = &rows[0].sweep_var;
    if rows.iter().any(|r| &r.sweep_var != var) {
        return Err(Error::InvalidInput("results mix several sweep variables".into()));
    }
    let mut detectors: Vec<&str> = Vec::new();
    for r in rows {
        if !detectors.contains(&r.detector.as_str()) {
            detectors.push(&r.detector);
        }
    }
    let xlabel = match var.as_str() {
        "theta" => "threshold θ",
        "L" => "pilot length L",
        "M" => "antennas M",
        "lambda" => "interferer density λ (1/m²)",
        "eta" => "pair correlation η",
        "group_size" => "group size",
        _ => "grid point",
    };
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script; render with: gnuplot plot.gp");
    let _ = writeln!(s, "set terminal pngcairo size 800,600");
    let _ = writeln!(s, "set output 'plot.png'");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel 'error probability'");
    let _ = writeln!(s, "set key top right");
    let _ = writeln!(s, "set grid");
    for (k, d) in detectors.iter().enumerate() {
        let _ = writeln!(s, "$d{k} << EOD");
        let mut pts: Vec<&Row> = rows.iter().filter(|r| r.detector == *d).collect();
        pts.sort_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value));
        for r in pts {
            let _ = writeln!(s, "{} {} {}", r.sweep_value, r.p_err, r.ci95);
        }
        let _ = writeln!(s, "EOD");
    }
    let curves: Vec<String> = detectors
        .iter()
        .enumerate()
        .map(|(k, d)| format!("$d{k} using 1:2:3 with yerrorlines title '{d}'"))
        .collect();
    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    Ok(s)
}
