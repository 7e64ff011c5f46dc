//! Co-design of actuator shape and open-loop control for a semilinear beam
//! on a nonlinear elastic foundation (a railway-track model).
//!
//! The beam
//!
//! ```text
//! ∂ₜₜw + ∂ₓₓ(∂ₓₓw + C_d ∂ₓₓₜw) + μ∂ₜw + w + αw³ = b(x, r) u(t)
//! ```
//!
//! is hinged at both ends and discretized in the sine basis
//! ([`model`]). It is integrated with an implicit trapezoid scheme
//! ([`forward`]) whose discrete adjoint ([`adjoint`]) gives exact gradients
//! of the quadratic cost `J = ½∫‖x‖² + γ|u|² dt` in the control samples and
//! the shape parameters. [`optimize`] minimizes `J` by projected gradient
//! over a control ball and a parameter box; [`oracle`] holds independent
//! checks, and [`app`] drives the `railopt` binary.
//!
//! ```no_run
//! use railopt::{forward, model, shape};
//!
//! let m = model::DiscreteModel::build(model::ModelConfig::default())?;
//! let grid = forward::TimeGrid::for_model(&m);
//! let u = forward::ControlSignal::zeros(&grid, 10.0)?;
//! let r = shape::ShapeParams::gaussian_bump(0.3, 0.1)?;
//! let x0 = model::StateVector::from_modes(m.n_modes(), &[1.0], &[])?;
//! let traj = forward::forward_solve(&m, &u, &r, &x0)?;
//! println!("J = {}", forward::evaluate_cost(&m, &traj));
//! # Ok::<(), railopt::Error>(())
//! ```

pub mod adjoint;
pub mod app;
pub mod config;
pub mod error;
pub mod forward;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod output;
pub mod shape;

pub use adjoint::{adjoint_solve, gradient, kkt_residuals, AdjointTrajectory, Gradient, KKTResidual};
pub use error::{Error, Result};
pub use forward::{evaluate_cost, forward_solve, tangent_linear_solve, ControlSignal, TimeGrid, Trajectory};
pub use model::{DiscreteModel, ModelConfig, StateVector};
pub use config::{parse_config, RunConfig};
pub use optimize::{optimize, relax_control, AdmissibleSets, OptimConfig, OptimMode, OptimResult, OptimStatus};
pub use shape::{ShapeFamily, ShapeParams};
