//! Second-order convergence of the trapezoid stepper against the closed-form
//! damped oscillator (one mode, no cubic term).

use railopt::oracle::analytic_linear_solution;
use railopt::{forward_solve, ControlSignal, DiscreteModel, ModelConfig, ShapeParams, StateVector, TimeGrid};

fn main() -> railopt::Result<()> {
    let mut previous: Option<f64> = None;
    println!("{:>8} {:>12} {:>12} {:>7}", "dt", "|dq(tau)|", "|dv(tau)|", "order");
    for dt in [8e-3, 4e-3, 2e-3, 1e-3, 5e-4] {
        let cfg = ModelConfig {
            n_modes: 1,
            alpha: 0.0,
            dt,
            ..ModelConfig::default()
        };
        let m = DiscreteModel::build(cfg.clone())?;
        let grid = TimeGrid::for_model(&m);
        let x0 = StateVector::from_modes(1, &[1.0], &[])?;
        let traj = forward_solve(&m, &ControlSignal::zeros(&grid, 1.0)?, &ShapeParams::gaussian_bump(0.5, 0.1)?, &x0)?;
        let (q, v) = analytic_linear_solution(&cfg, 1.0, 0.0, grid.tau())?;
        let end = traj.final_state();
        let (eq, ev) = ((end.q[0] - q).abs(), (end.v[0] - v).abs());
        let err = eq.max(ev);
        let order = previous.map_or(String::from("-"), |p| format!("{:.3}", (p / err).log2()));
        println!("{dt:>8.0e} {eq:>12.3e} {ev:>12.3e} {order:>7}");
        previous = Some(err);
    }
    Ok(())
}
