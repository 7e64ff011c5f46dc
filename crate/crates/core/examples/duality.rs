//! The backward sweep is the transpose of the linearized forward map:
//! <c, z> = <p, g> for tangent z driven by g and adjoint p driven by c.

use railopt::oracle::{duality_probe, perturbed_duality_gap};
use railopt::{forward_solve, ControlSignal, DiscreteModel, ModelConfig, ShapeParams, StateVector, TimeGrid};

fn main() -> railopt::Result<()> {
    let m = DiscreteModel::build(ModelConfig {
        n_modes: 8,
        alpha: 4.0,
        ..ModelConfig::default()
    })?;
    let grid = TimeGrid::for_model(&m);
    let u = ControlSignal::constant(&grid, 1.5, 10.0)?;
    let r = ShapeParams::gaussian_bump(0.4, 0.08)?;
    let x0 = StateVector::from_modes(8, &[1.2, -0.3], &[])?;
    let traj = forward_solve(&m, &u, &r, &x0)?;

    println!("transpose identity, 5 random pairs: {:.2e}", duality_probe(&m, &traj, 5, 3)?);
    for eps in [1e-10, 1e-8, 1e-6] {
        println!("adjoint corrupted by {eps:.0e}: gap {:.2e}", perturbed_duality_gap(&m, &traj, eps, 3)?);
    }
    Ok(())
}
