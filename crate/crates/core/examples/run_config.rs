//! Driving a run from a JSON config, as the `railopt` binary does.
//!
//! `cargo run --release --example run_config [out-dir]`

use std::path::{Path, PathBuf};

use railopt::app::{run, Command, RunOptions};
use railopt::RunConfig;

const CONFIG: &str = r#"{
  "model": {"n_modes": 6, "alpha": 2.0},
  "shape": {"family": "cosine-patch", "values": [0.32, 0.17]},
  "control": {"radius": 5, "init": {"constant": 0.5}},
  "initial_condition": {"modal": {"q": [0.8, 0.0, 0.1]}},
  "optimizer": {"mode": "alternating", "initial_step": 10, "max_iters": 100}
}"#;

fn main() -> railopt::Result<()> {
    let cfg = RunConfig::from_json(CONFIG, Path::new("."))?;
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("railopt-example"));
    let opts = RunOptions {
        out_dir: Some(out.clone()),
        physical: true,
    };
    for cmd in [Command::Simulate, Command::Gradcheck, Command::Optimize] {
        let s = run(cmd, &cfg, &opts)?;
        println!(
            "{:<10} {:<10} J {:.8} -> {:.8}  r {:?}  [{:.2} s]",
            s.command,
            s.status,
            s.j_initial,
            s.j_final,
            s.r_final,
            s.wall_time.as_secs_f64()
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
