//! The sine-mode discretization: stiffness, discrete orthogonality, the
//! pseudo-spectral cubic and the modal load of an actuator.

use std::f64::consts::PI;

use nalgebra::DVector;
use railopt::{DiscreteModel, ModelConfig, ShapeParams};

fn main() -> railopt::Result<()> {
    let m = DiscreteModel::build(ModelConfig {
        n_modes: 6,
        ..ModelConfig::default()
    })?;
    println!("N = {}, M = {}", m.n_modes(), m.n_quad());

    for (i, l) in m.stiffness().iter().enumerate() {
        let k = (i + 1) as f64 * PI;
        println!("lambda_{} = {l:.6}   (n pi)^4 = {:.6}", i + 1, k * k * k * k);
    }
    println!("orthogonality defect: {:.2e}", m.orthogonality_defect(m.n_modes()));

    // w = sin(pi x): w^3 = (3 sin(pi x) - sin(3 pi x)) / 4
    let mut q = DVector::zeros(m.n_modes());
    q[0] = 1.0;
    println!("-alpha P(w^3) for w = sin(pi x): {:.15?}", m.nonlinear_term(&q).as_slice());

    let r = ShapeParams::gaussian_bump(0.3, 0.1)?;
    println!("modal load of b(x; c=0.3, s=0.1): {:.6?}", m.shape_modal_load(&r).as_slice());
    let mirrored = r.mirrored()?;
    println!("mirrored (c=0.7):                 {:.6?}", m.shape_modal_load(&mirrored).as_slice());
    Ok(())
}
