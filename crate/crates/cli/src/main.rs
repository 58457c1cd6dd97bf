//! `calkit <command> --config <file>`: batch driver for the calkit experiments.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a numerical acceptance
//! check fails or a numerical stage breaks down.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::Config;
use output::{manifest_path, sha256_hex, write_files, Failure, Manifest, Run};

#[derive(Parser)]
#[command(name = "calkit", version, about = "Numerical experiments on the Calderón problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// INI config; the unnamed section applies to all commands, `[<command>]` overrides it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $CALKIT_OUT, else ./calkit_out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the random test-function corpora (overrides the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the linear algebra.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Manufactured-solution check of the forward solvers.
    Forward,
    /// Dense DN matrix as CSV with a JSON sidecar.
    Dnmap,
    /// Liouville consistency of conductivity and Schrödinger DN maps.
    Liouville,
    /// One CGO solution.
    Cgo,
    /// Decay of the CGO remainder over a list of ρ.
    Decay,
    /// Potential reconstruction from DN-map differences.
    Reconstruct,
    /// Shadowed-face term for partial data.
    Shadow,
    /// Weighted Carleman estimate with calibrated constant.
    Carleman,
    /// Directional Poincaré and conjugated inequalities.
    Poincare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Dnmap => "dnmap",
            Command::Liouville => "liouville",
            Command::Cgo => "cgo",
            Command::Decay => "decay",
            Command::Reconstruct => "reconstruct",
            Command::Shadow => "shadow",
            Command::Carleman => "carleman",
            Command::Poincare => "poincare",
        }
    }
}

fn dispatch(cmd: Command, ctx: &Ctx) -> Result<Run, Failure> {
    match cmd {
        Command::Forward => commands::forward(ctx),
        Command::Dnmap => commands::dnmap(ctx),
        Command::Liouville => commands::liouville(ctx),
        Command::Cgo => commands::cgo(ctx),
        Command::Decay => commands::decay(ctx),
        Command::Reconstruct => commands::reconstruct(ctx),
        Command::Shadow => commands::shadow(ctx),
        Command::Carleman => commands::carleman(ctx),
        Command::Poincare => commands::poincare(ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    ExitCode::from(run(cli) as u8)
}

fn run(cli: Cli) -> i32 {
    let name = cli.command.name();
    let Some(config_path) = cli.config.clone() else {
        eprintln!("error: --config <path> is required");
        return 1;
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 1;
        }
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    }
    let cfg = match Config::load(&config_path, name) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => match cfg.get_or("seed", 0u64) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
    };
    let out = cli
        .out
        .or_else(|| std::env::var_os("CALKIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("calkit_out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 1;
    }
    let config_sha256 = sha256_hex(&cfg.raw);
    let ctx = Ctx { command: name, cfg: &cfg, config_sha256: &config_sha256, seed };

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let result = dispatch(cli.command, &ctx);
    let wall = clock.elapsed().as_secs_f64();

    let (run, status, error, code) = match result {
        Ok(r) if r.passed => (r, "ok", None, 0),
        Ok(r) => (r, "acceptance_failure", None, 2),
        Err(f) => {
            let status = if f.exit_code() == 2 { "numerical_failure" } else { "usage_error" };
            (Run::new(), status, Some(f.message().to_string()), f.exit_code())
        }
    };
    let outputs = match write_files(&out, &run.files) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: writing outputs: {e}");
            return 1;
        }
    };
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config_path: config_path.display().to_string(),
        config_sha256: config_sha256.clone(),
        seed,
        threads: cli.threads,
        parameters: &cfg.values,
        started_unix: started,
        wall_time_s: wall,
        status,
        error: error.clone(),
        warnings: &run.warnings,
        metrics: &run.metrics,
        outputs,
    };
    let path = manifest_path(&out, name);
    let text = serde_json::to_string_pretty(&manifest).unwrap_or_default();
    if let Err(e) = std::fs::write(&path, text) {
        eprintln!("error: writing {}: {e}", path.display());
        return 1;
    }
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(e) = error {
        eprintln!("error: {e}");
    }
    println!("{name}: {status} ({} files, {:.2}s) -> {}", run.files.len(), wall, path.display());
    code
}
