//! Brute-force cost profile J(c) with the control relaxed at every center.

use railopt::oracle::sweep_shape;
use railopt::{AdmissibleSets, ControlSignal, DiscreteModel, ModelConfig, OptimConfig, ShapeParams, StateVector, TimeGrid};

fn main() -> railopt::Result<()> {
    let cfg = ModelConfig {
        n_modes: 6,
        dt: 2e-3,
        ..ModelConfig::default()
    };
    let opt = OptimConfig {
        initial_step: 1.0 / cfg.gamma,
        ..OptimConfig::default()
    };
    let m = DiscreteModel::build(cfg)?;
    let grid = TimeGrid::for_model(&m);
    let u0 = ControlSignal::zeros(&grid, 10.0)?;
    let r0 = ShapeParams::gaussian_bump(0.5, 0.15)?;
    let x0 = StateVector::from_modes(6, &[1.0], &[])?;
    let sets = AdmissibleSets::from_parts(&u0, &r0)?;

    let sweep = sweep_shape(&m, &sets, &opt, &x0, &u0, &r0, &[0], &[17])?;
    for (p, c) in sweep.points.iter().zip(&sweep.costs) {
        match c {
            Some(j) => println!("c = {:.3}  J = {j:.10}", p[0]),
            None => println!("c = {:.3}  (failed)", p[0]),
        }
    }
    if let Some(i) = sweep.argmin {
        println!("argmin c = {:.3}", sweep.points[i][0]);
    }
    Ok(())
}
