//! Adjoint gradient against central differences at a random point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use railopt::oracle::{gradcheck, smooth_direction, FD_EPSILON};
use railopt::{ControlSignal, DiscreteModel, ModelConfig, ShapeParams, StateVector, TimeGrid};

fn main() -> railopt::Result<()> {
    let m = DiscreteModel::build(ModelConfig {
        n_modes: 8,
        ..ModelConfig::default()
    })?;
    let grid = TimeGrid::for_model(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = ControlSignal::new(smooth_direction(&grid, &mut rng).iter().map(|x| 2.0 * x).collect(), 10.0)?;
    let r = ShapeParams::cosine_patch(0.37, 0.19)?;
    let x0 = StateVector::from_modes(8, &[1.0, 0.0, 0.2], &[0.0, 0.5])?;

    let report = gradcheck(&m, &u, &r, &x0, FD_EPSILON, 6, 1)?;
    println!("{:<12} {:>22} {:>22} {:>10}", "direction", "adjoint", "central diff", "rel err");
    for d in &report.directions {
        println!(
            "{:<12} {:>22.15e} {:>22.15e} {:>10.2e}",
            d.label, d.adjoint, d.finite_difference, d.relative_error
        );
    }
    println!("worst {:.2e}: {}", report.worst, if report.pass { "pass" } else { "FAIL" });
    Ok(())
}
