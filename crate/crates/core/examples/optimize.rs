//! Joint actuator placement and control on the symmetric benchmark: the
//! bump starts at c = 0.3 and moves to the midspan.

use railopt::{optimize, AdmissibleSets, ControlSignal, DiscreteModel, ModelConfig, OptimConfig, OptimMode, ShapeParams, StateVector, TimeGrid};

fn main() -> railopt::Result<()> {
    let cfg = ModelConfig {
        n_modes: 8,
        ..ModelConfig::default()
    };
    let gamma = cfg.gamma;
    let m = DiscreteModel::build(cfg)?;
    let grid = TimeGrid::for_model(&m);
    let u0 = ControlSignal::zeros(&grid, 10.0)?;
    let r0 = ShapeParams::gaussian_bump(0.3, 0.1)?;
    let x0 = StateVector::from_modes(8, &[1.0], &[])?;
    let sets = AdmissibleSets::from_parts(&u0, &r0)?;
    let opt = OptimConfig {
        mode: OptimMode::Alternating,
        initial_step: 1.0 / gamma,
        ..OptimConfig::default()
    };

    let res = optimize(&m, &sets, &opt, &x0, &u0, &r0)?;
    println!("{:>4} {:>16} {:>10} {:>10} {:>8}", "iter", "J", "ctrl stat", "shape stat", "step");
    for rec in &res.log {
        println!(
            "{:>4} {:>16.10} {:>10.2e} {:>10.2e} {:>8.4}",
            rec.iter, rec.cost, rec.control_stationarity, rec.shape_stationarity, rec.step
        );
    }
    println!("status {:?}; r* = {:?}", res.status, res.r_opt.values());
    println!(
        "|u*| = {:.6} (R1 = {}), collinearity of u* with B*p: {:.12}",
        res.u_opt.l2_norm(&grid),
        sets.control_ball_radius,
        res.kkt.collinearity
    );
    Ok(())
}
