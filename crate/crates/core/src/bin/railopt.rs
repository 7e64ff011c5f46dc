use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use railopt::app::{self, Command, RunOptions};
use railopt::config::parse_config;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Simulate,
    Optimize,
    Gradcheck,
    Sweep,
}

/// Actuator shape and control co-optimization for a beam on a nonlinear
/// foundation.
#[derive(Debug, Parser)]
#[command(name = "railopt", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the deflection on the physical grid.
    #[arg(long)]
    physical: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let command = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Optimize => Command::Optimize,
        Sub::Gradcheck => Command::Gradcheck,
        Sub::Sweep => Command::Sweep,
    };
    let opts = RunOptions {
        out_dir: cli.out,
        physical: cli.physical,
    };
    let result = parse_config(&cli.config).and_then(|cfg| app::run(command, &cfg, &opts));
    match result {
        Ok(summary) => {
            eprintln!(
                "railopt {}: {} J {} -> {} ({:.3} s)",
                summary.command,
                summary.status,
                summary.j_initial,
                summary.j_final,
                summary.wall_time.as_secs_f64()
            );
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("railopt: {e}");
            ExitCode::from(app::exit_code_for(&e) as u8)
        }
    }
}
