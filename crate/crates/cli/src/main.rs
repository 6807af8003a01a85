//! Command-line front end: loads a TOML experiment configuration, applies
//! overrides, runs the requested experiment and writes CSV results.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for runtime
//! (numerical or I/O) failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddlink::harness::{
    apply_overrides, parse_config, run_ber, run_channel_dump, run_mse, run_optimize, write_csv,
    write_magnitude_grid, Config,
};
use ddlink::Error;

#[derive(Parser)]
#[command(
    name = "ddlink",
    version,
    about = "Link-level simulator for metasurface-programmable delay-Doppler MIMO channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bit-error-rate sweep over SNR
    Ber(RunArgs),
    /// Radar range/velocity MSE sweep over SNR
    Mse(RunArgs),
    /// BER of a link whose surfaces were tuned for sensing
    Isac(RunArgs),
    /// Dump effective-channel magnitude grids for external plotting
    ChannelDump(RunArgs),
    /// Trace the phase-ascent objectives on one channel draw
    Optimize(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output path override
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path config override (KEY=VALUE); repeatable
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker thread count (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load_config(&self) -> Result<Config, Error> {
        let text = std::fs::read_to_string(&self.config).map_err(|source| Error::Io {
            path: self.config.display().to_string(),
            source,
        })?;
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("experiment.seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("experiment.out=\"{}\"", out.display()));
        }
        let patched = apply_overrides(&text, &overrides)?;
        parse_config(&patched)
    }

    fn install_pool(&self) -> Result<rayon::ThreadPool, Error> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ber(args) => run_curves(args, "ber"),
        Command::Isac(args) => run_curves(args, "isac"),
        Command::Mse(args) => {
            let cfg = args.load_config()?;
            let pool = args.install_pool()?;
            let rows = pool.install(|| run_mse(&cfg))?;
            let out = PathBuf::from(&cfg.experiment.out);
            write_csv(&rows, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::ChannelDump(args) => {
            let cfg = args.load_config()?;
            let pool = args.install_pool()?;
            let grids = pool.install(|| run_channel_dump(&cfg))?;
            let out = PathBuf::from(&cfg.experiment.out);
            for (label, grid) in &grids {
                let path = dump_path(&out, label);
                write_magnitude_grid(grid, &path)?;
                println!(
                    "wrote {}x{} magnitude grid to {}",
                    grid.nrows(),
                    grid.ncols(),
                    path.display()
                );
            }
            Ok(())
        }
        Command::Optimize(args) => {
            let cfg = args.load_config()?;
            let pool = args.install_pool()?;
            let rows = pool.install(|| run_optimize(&cfg))?;
            let out = PathBuf::from(&cfg.experiment.out);
            write_csv(&rows, &out)?;
            for arm in ["comm-objective", "sensing-objective"] {
                let series: Vec<&ddlink::harness::CurveRow> =
                    rows.iter().filter(|r| r.arm == arm).collect();
                if let (Some(first), Some(last)) = (series.first(), series.last()) {
                    println!("{arm}: {:.6e} -> {:.6e}", first.value, last.value);
                }
            }
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
    }
}

fn run_curves(args: RunArgs, label: &str) -> Result<(), Error> {
    let cfg = args.load_config()?;
    let pool = args.install_pool()?;
    let rows = pool.install(|| run_ber(&cfg, label))?;
    let out = PathBuf::from(&cfg.experiment.out);
    write_csv(&rows, &out)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

/// `out.csv` + label `ofdm` → `out.ofdm.csv`.
fn dump_path(out: &Path, label: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dump".into());
    let ext = out
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}.{label}.{ext}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
