use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_consensus::graph::check_jointly_connected;
use adaptive_consensus::sim::config::{ConfigFile, SimConfig};
use adaptive_consensus::sim::diagnostics::{fit_rate, identity_residual_max, leader_norm_drift};
use adaptive_consensus::sim::output::{write_outputs, RateRow};
use adaptive_consensus::sim::run;
use adaptive_consensus::sim::scenario::example_config;
use adaptive_consensus::Error;
use clap::{Args, Parser, Subcommand};

/// Simulate adaptive leader-following consensus over switching digraphs.
#[derive(Debug, Parser)]
#[command(name = "adcons", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a configuration and write CSV logs and SVG plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `sim.out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check that the configured switching graph is jointly connected.
    CheckGraph {
        #[arg(long)]
        config: PathBuf,
        /// Window length; every window of this length must contain a
        /// connected union.
        #[arg(long)]
        epsilon: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fit an exponential rate to one column of a CSV log.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
    },
    /// Run the built-in van der Pol example and write its outputs.
    ReplicatePaper {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon.
    #[arg(long)]
    horizon: Option<f64>,
}

impl Overrides {
    fn apply(&self, file: &mut ConfigFile) {
        if let Some(dt) = self.dt {
            file.sim.dt = dt;
        }
        if let Some(h) = self.horizon {
            file.sim.horizon = h;
        }
    }
}

enum Failure {
    Validation(String),
    BlowUp(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_runtime_blowup() {
            Failure::BlowUp(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load(path: &Path, overrides: &Overrides) -> Result<(ConfigFile, SimConfig), Failure> {
    let mut file = ConfigFile::from_path(path)?;
    overrides.apply(&mut file);
    let cfg = SimConfig::from_file(&file).map_err(Error::from)?;
    Ok((file, cfg))
}

fn print_rates(rates: &[RateRow]) {
    for row in rates {
        match &row.fit {
            Ok(f) => println!(
                "rate {}: lambda = {:.6}, R^2 = {:.4} over [{}, {}]",
                row.quantity, f.lambda, f.r_squared, f.window.0, f.window.1
            ),
            Err(msg) => println!("rate {}: not fitted ({msg})", row.quantity),
        }
    }
}

fn simulate_and_write(cfg: &SimConfig, out: &Path) -> CmdResult {
    let log = run(cfg)?;
    let (files, rates) = write_outputs(out, &log, cfg)?;
    let last = log.last().expect("log holds the initial record");
    println!("simulated t in [0, {}] with {} grid points", last.t, log.len());
    println!("final max |vhat_i - v| = {:.3e}", last.max_estimation_error());
    println!("final max |x_i - x0|   = {:.3e}", last.max_tracking_error());
    println!(
        "max filtered-error identity residual = {:.3e}",
        identity_residual_max(&log, cfg)
    );
    println!("max leader norm drift = {:.3e}", leader_norm_drift(&log));
    print_rates(&rates);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_run(config: &Path, out: Option<&Path>, overrides: &Overrides) -> CmdResult {
    let (file, cfg) = load(config, overrides)?;
    let out = match (out, &file.sim.out_dir) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => return Err(Failure::Validation("no --out given and sim.out_dir is unset".into())),
    };
    simulate_and_write(&cfg, &out)
}

fn cmd_check_graph(config: &Path, epsilon: f64, overrides: &Overrides) -> CmdResult {
    let (_, cfg) = load(config, overrides)?;
    let schedule = cfg.schedule.materialize(cfg.horizon.max(2.0 * epsilon))?;
    let joint = check_jointly_connected(&cfg.family, &schedule, epsilon)?;
    println!("jointly connected: {}", joint.connected);
    for (k, w) in joint.windows.iter().enumerate() {
        let graphs: Vec<String> = (w.first..=w.last).map(|j| schedule.interval(j).2.to_string()).collect();
        println!("window {}: [{}, {}) graphs {}", k + 1, w.start, w.end, graphs.join(","));
    }
    if let Some(w) = &joint.incomplete_tail {
        println!("unconnected stretch: [{}, {})", w.start, w.end);
    }
    if joint.connected {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "switching graph is not jointly connected within windows of length {epsilon}"
        )))
    }
}

fn cmd_fit(csv: &Path, column: &str, from: f64, to: f64) -> CmdResult {
    let (t, y) = adaptive_consensus::sim::output::read_csv_column(csv, column)?;
    let f = fit_rate(&t, &y, (from, to))?;
    println!("lambda = {}", f.lambda);
    println!("r_squared = {}", f.r_squared);
    println!("samples = {}", f.samples);
    Ok(())
}

fn cmd_replicate(out: &Path, overrides: &Overrides) -> CmdResult {
    let mut file = example_config();
    overrides.apply(&mut file);
    let cfg = SimConfig::from_file(&file).map_err(Error::from)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Validation(format!("{}: {e}", out.display())))?;
    let path = out.join("config.json");
    std::fs::write(&path, file.to_json()).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    simulate_and_write(&cfg, out)
}

fn main() -> ExitCode {
    // usage errors are validation failures; clap's own code 2 is reserved
    // for blow-ups here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run { config, out, overrides } => cmd_run(config, out.as_deref(), overrides),
        Command::CheckGraph {
            config,
            epsilon,
            overrides,
        } => cmd_check_graph(config, *epsilon, overrides),
        Command::Fit { csv, column, from, to } => cmd_fit(csv, column, *from, *to),
        Command::ReplicatePaper { out, overrides } => cmd_replicate(out, overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::BlowUp(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
