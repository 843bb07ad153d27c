//! Command-line frontend: configuration, presets and CSV emission.
//!
//! Every command reads a [`RunConfig`] (built-in preset, JSON file, then
//! flag overrides), runs its computation for each rate function in the
//! sweep and writes one CSV table. Exit codes: 0 success, 2 configuration
//! error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_barrier, cmd_mc, cmd_omega, cmd_scale, cmd_value, Csv, SCHEMA_VERSION};
pub use config::{fnv1a, McSection, OmegaSpec, OutputSpec, RunConfig, SweepSpec, PRESETS};

use crate::error::OmegaError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<OmegaError> for CliError {
    fn from(e: OmegaError) -> Self {
        let code = match e {
            OmegaError::Validation(_) | OmegaError::Usage(_) => EXIT_CONFIG,
            OmegaError::Numeric(_) | OmegaError::Domain(_) => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "omegalab", version, about = "Omega scale functions and optimal dividend barriers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file; keys override the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: paper-parisian, paper-step or paper-affine.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Write `<PREFIX><command>.csv` instead of printing to stdout.
    #[arg(long, global = true, value_name = "PREFIX")]
    pub out: Option<String>,
    /// Worker threads for sweeps and simulation.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Solver grid step.
    #[arg(long, global = true, value_name = "F")]
    pub grid_step: Option<f64>,
    /// Right end of the solver grid.
    #[arg(long, global = true, value_name = "F")]
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Classical scale functions of the model.
    #[command(after_help = "Columns: x, W (= W_q), W1 (= W_q'), Z (= Z_q(x; Phi(q+phi))), Z1 (= Z').\n\
        Metadata lines report Laplace-transform residuals of W_q at three abscissae.")]
    Scale,
    /// Omega scale function tables.
    #[command(after_help = "Columns: label, x, omega (= omega(x)), H, H1, H2 (right limits at kinks).\n\
        Rows are solver nodes thinned to the output step; kinks are always kept.")]
    Omega,
    /// Optimal barrier per rate function, with the ordering check for sweeps.
    #[command(after_help = "Columns: label, param, omega, b_star, H_b, H1_b, v_0, v_b, extensions,\n\
        convexity_margin, log_convexity_margin. Markers for the b* crosses in the step/affine\n\
        figures are (b_star, v_b).")]
    Barrier,
    /// Value function curves under the optimal barrier.
    #[command(after_help = "Columns: label, x, v, v1. Plot v against x grouped by label for the\n\
        value-function figures of the step and affine families.")]
    Value,
    /// Monte Carlo validation of the barrier value.
    #[command(after_help = "Columns: config_hash, label, b, x0, estimator, mean, stderr, n_paths,\n\
        truncation_bias_bound, v_analytic.")]
    Mc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scale => "scale",
            Command::Omega => "omega",
            Command::Barrier => "barrier",
            Command::Value => "value",
            Command::Mc => "mc",
        }
    }
}

/// Resolve preset, file and flag overrides into one configuration.
pub fn resolve_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.preset {
        Some(name) => RunConfig::preset(name).ok_or_else(|| {
            CliError::config(format!("unknown preset {name:?}; expected one of {}", PRESETS.join(", ")))
        })?,
        None => RunConfig::default(),
    };
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        // parse alone first so that errors carry line and column
        RunConfig::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&cfg).expect("config serialises");
        let patch: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        merge(&mut base, patch);
        cfg = serde_json::from_value(base).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = common.seed {
        cfg.mc.seed = seed;
    }
    if let Some(h) = common.grid_step {
        cfg.solver.grid_step = h;
    }
    if let Some(x) = common.x_max {
        cfg.solver.x_max = Some(x);
    }
    if let Some(p) = &common.out {
        cfg.output.prefix = Some(p.clone());
    }
    Ok(cfg)
}

/// Recursive object merge; tagged objects (rate functions, sweeps) are
/// replaced whole.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    use serde_json::Value;
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let replace_whole = v.get("family").is_some();
                match b.get_mut(&k) {
                    Some(slot) if !replace_whole => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Csv, CliError> {
    match command {
        Command::Scale => cmd_scale(cfg),
        Command::Omega => cmd_omega(cfg),
        Command::Barrier => cmd_barrier(cfg),
        Command::Value => cmd_value(cfg),
        Command::Mc => cmd_mc(cfg),
    }
}

fn run_inner(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.common)?;
    log::info!("command {} config hash {:016x}", cli.command.name(), cfg.hash());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(CliError::config("--jobs must be >= 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    let csv = pool.install(|| execute(cli.command, &cfg))?;
    let text = csv.render();
    match &cfg.output.prefix {
        Some(prefix) => {
            let path = format!("{prefix}{}.csv", cli.command.name());
            std::fs::write(&path, text).map_err(|e| CliError::config(format!("{path}: {e}")))?;
            eprintln!("wrote {path}");
        }
        None => print!("{text}"),
    }
    if let Some(s) = csv.summary {
        eprintln!("{s}");
    }
    Ok(())
}

/// Run with the process arguments and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run_inner(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("OMEGALAB_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}
