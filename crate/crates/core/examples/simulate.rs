//! Unforced and forced runs of the semilinear beam from w0 = sin(pi x).
//!
//! `cargo run --release --example simulate [out.csv]` also writes the
//! modal trajectory.

use railopt::output::{trajectory_csv, write_atomic};
use railopt::{evaluate_cost, forward_solve, ControlSignal, DiscreteModel, ModelConfig, ShapeParams, StateVector, TimeGrid};

fn main() -> railopt::Result<()> {
    let m = DiscreteModel::build(ModelConfig::default())?;
    let grid = TimeGrid::for_model(&m);
    let x0 = StateVector::from_modes(m.n_modes(), &[1.0], &[])?;
    let r = ShapeParams::gaussian_bump(0.5, 0.1)?;

    for (label, u) in [
        ("unforced", ControlSignal::zeros(&grid, 10.0)?),
        ("u = -2", ControlSignal::constant(&grid, -2.0, 10.0)?),
    ] {
        let traj = forward_solve(&m, &u, &r, &x0)?;
        println!("{label}: J = {:.10}", evaluate_cost(&m, &traj));
        for k in (0..grid.len()).step_by(grid.len() / 5) {
            let x = &traj.states()[k];
            println!("  t = {:.2}  |x|^2 = {:.6}  q_1 = {:+.6}", grid.time(k), m.energy_norm_sq(x), x.q[0]);
        }
        let newton = traj.newton_stats();
        let peak = newton.iter().max().copied().unwrap_or(0);
        let mean = newton.iter().map(|&n| n as f64).sum::<f64>() / newton.len().max(1) as f64;
        println!("  newton iterations per step: mean {mean:.2}, max {peak}");

        if let Some(path) = std::env::args().nth(1) {
            if label == "unforced" {
                write_atomic(path.as_ref(), trajectory_csv(&traj).as_bytes())?;
                println!("  wrote {path}");
            }
        }
    }
    Ok(())
}
