//! Argument parsing and the process-level flow: parse, run, write, report.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use msps_core::experiments::{FigureId, SweepAxis};
use msps_core::optimizer::DEFAULT_TOL;

use crate::commands::{self, ErrorRecord};
use crate::config::{self, Command};
use crate::output::{self, Destination, OUTPUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "msps", version, about = "Multiplexed heralded single-photon source model")]
pub struct Cli {
    #[command(flatten)]
    pub settings: Settings,
    #[command(subcommand)]
    pub command: Sub,
}

/// Flags that map one-to-one onto config-file keys.
#[derive(Debug, Args, Default)]
pub struct Settings {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub m: Option<String>,
    #[arg(long, global = true)]
    pub mu: Option<String>,
    /// Pair rate in pairs/s, an alternative to `--mu`.
    #[arg(long, global = true)]
    pub r: Option<String>,
    #[arg(long = "delta-t0-ns", global = true)]
    pub delta_t0_ns: Option<String>,
    #[arg(long = "e-h", global = true)]
    pub e_h: Option<String>,
    #[arg(long = "e-s", global = true)]
    pub e_s: Option<String>,
    #[arg(long = "e-sw-db", global = true)]
    pub e_sw_db: Option<String>,
    #[arg(long = "r-dark", global = true)]
    pub r_dark: Option<String>,
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<String>,
    #[arg(long, global = true)]
    pub trials: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub shards: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<String>,
    /// `tabular` (csv) or `structured` (json).
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Output photon-number distribution.
    Dist {
        /// Show the distribution after each stage of the loss chain.
        #[arg(long)]
        trace: bool,
    },
    /// Pump level that maximizes the single-photon probability.
    Optimize {
        /// Also require SNR >= this value.
        #[arg(long = "snr-target")]
        snr_target: Option<f64>,
        #[arg(long = "mu-min", default_value_t = 1e-4)]
        mu_min: f64,
        #[arg(long = "mu-max", default_value_t = 2.0)]
        mu_max: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// One-dimensional sweep of a single parameter.
    Sweep {
        /// m, mu, e_h, e_s, e_sw_db or r_dark.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
    },
    /// Regenerate a standard figure table.
    Figure {
        /// fig2, fig3, fig4 or fig5.
        #[arg(long)]
        id: FigureId,
        /// Keep the configured dark-count rate instead of zero.
        #[arg(long = "with-dark-counts")]
        with_dark_counts: bool,
    },
    /// Event-level simulation compared with the analytic distribution.
    #[command(name = "montecarlo")]
    MonteCarlo,
    /// Invariant and simulation agreement checks.
    Validate,
}

impl Settings {
    fn overrides(&self) -> Result<Vec<(String, String)>, ErrorRecord> {
        let named = [
            ("m", &self.m),
            ("mu", &self.mu),
            ("r", &self.r),
            ("delta_t0_ns", &self.delta_t0_ns),
            ("e_h", &self.e_h),
            ("e_s", &self.e_s),
            ("e_sw_db", &self.e_sw_db),
            ("r_dark", &self.r_dark),
            ("n_max", &self.n_max),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("shards", &self.shards),
            ("output_path", &self.output),
            ("output_format", &self.format),
        ];
        let mut out: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| ErrorRecord::new("usage", format!("--set expects KEY=VALUE, got `{pair}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

impl Sub {
    fn into_command(self) -> Command {
        match self {
            Sub::Dist { trace } => Command::Dist { trace },
            Sub::Optimize {
                snr_target,
                mu_min,
                mu_max,
                tol,
            } => Command::Optimize {
                snr_target,
                mu_min,
                mu_max,
                tol,
            },
            Sub::Sweep {
                axis,
                from,
                to,
                points,
                log,
            } => Command::Sweep {
                axis,
                from,
                to,
                points,
                log,
            },
            Sub::Figure { id, with_dark_counts } => Command::Figure { id, with_dark_counts },
            Sub::MonteCarlo => Command::MonteCarlo,
            Sub::Validate => Command::Validate,
        }
    }
}

/// Exit status for a run that emitted no error record.
pub const EXIT_OK: i32 = 0;
/// A check failed; the output document was still written.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Bad input or a model error; nothing was written.
pub const EXIT_ERROR: i32 = 2;

/// Runs the tool with explicit arguments and streams; returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(stderr, &ErrorRecord::new("usage", first));
        }
    };
    let env_dir = std::env::var(OUTPUT_DIR_ENV).ok();
    let timestamp = std::env::var("SOURCE_DATE_EPOCH").ok();
    match execute(cli, env_dir.as_deref(), timestamp.as_deref(), stdout) {
        Ok(errors) if errors.is_empty() => EXIT_OK,
        Ok(errors) => {
            for e in &errors {
                let _ = writeln!(stderr, "{}", e.to_json_line());
            }
            EXIT_CHECK_FAILED
        }
        Err(e) => fail(stderr, &e),
    }
}

fn fail(stderr: &mut dyn Write, e: &ErrorRecord) -> i32 {
    let _ = writeln!(stderr, "{}", e.to_json_line());
    EXIT_ERROR
}

fn execute(
    cli: Cli,
    env_dir: Option<&str>,
    timestamp: Option<&str>,
    stdout: &mut dyn Write,
) -> Result<Vec<ErrorRecord>, ErrorRecord> {
    let text = match &cli.settings.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
            ErrorRecord::new("io", format!("cannot read {}: {e}", path.display())).with_key("config")
        })?),
        None => None,
    };
    let overrides = cli.settings.overrides()?;
    let cfg = config::parse_config(text.as_deref(), &overrides, cli.command.into_command())?;
    let rendered = commands::run(&cfg, timestamp)?;
    match output::destination(cfg.output_path.as_deref(), &rendered.default_name, env_dir) {
        Destination::Stdout => stdout
            .write_all(rendered.document.as_bytes())
            .map_err(|e| ErrorRecord::new("io", format!("cannot write output: {e}")))?,
        Destination::File(path) => output::write_atomic(&path, &rendered.document)
            .map_err(|e| ErrorRecord::new("io", format!("cannot write {}: {e}", path.display())).with_key("output_path"))?,
    }
    Ok(rendered.errors)
}
