//! Discrete adjoint of the trapezoid scheme and the resulting exact
//! gradients of the discrete cost.
//!
//! With `A_k = I - h ∂G(x_k)`, `B_k = I + h ∂G(x_k)` and the state part of
//! the cost gradient `c_k = w_k W x_k`, the backward sweep is
//!
//! ```text
//! p_K = 0
//! μ_{k+1} = A_{k+1}^{-T} (c_{k+1} + p_{k+1})
//! p_k     = B_kᵀ μ_{k+1}
//! ```
//!
//! `p_k` is the discrete costate (it approximates the continuous final
//! value problem and vanishes at `τ`); the step multipliers `μ_{k+1}` pair
//! with the forcing of step `k` and give the gradients.

use nalgebra::DVector;

use crate::error::{check_len, Result};
use crate::forward::{TimeGrid, Trajectory};
use crate::model::DiscreteModel;
use crate::optimize::{project_control, project_shape, AdmissibleSets};

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    costates: Vec<DVector<f64>>,
    multipliers: Vec<DVector<f64>>,
    h: f64,
}

impl AdjointTrajectory {
    /// `p_k = (f_k, g_k)`, stacked and dual to `(q, v)`; `K + 1` entries.
    pub fn costates(&self) -> &[DVector<f64>] {
        &self.costates
    }

    /// `μ_{k+1}` at index `k`; `K` entries.
    pub fn multipliers(&self) -> &[DVector<f64>] {
        &self.multipliers
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.costates.last().expect("non-empty adjoint")
    }

    pub(crate) fn multipliers_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.multipliers
    }

    /// Adjoint side of the duality identity: `Σ_k μ_{k+1}ᵀ h (g_k + g_{k+1})`.
    /// Equals `Σ_k c_kᵀ z_k` where `z` is the tangent response to `g`.
    pub fn pair_forcing(&self, forcing: &[DVector<f64>]) -> Result<f64> {
        check_len("forcing samples", self.costates.len(), forcing.len())?;
        Ok(self
            .multipliers
            .iter()
            .enumerate()
            .map(|(k, mu)| mu.dot(&(&forcing[k] + &forcing[k + 1])) * self.h)
            .sum())
    }
}

/// State derivative of the discrete cost, `c_k = w_k W x_k`.
pub fn cost_state_forcing(model: &DiscreteModel, traj: &Trajectory) -> Vec<DVector<f64>> {
    let grid = traj.grid();
    let weights = model.energy_weights();
    traj.states()
        .iter()
        .enumerate()
        .map(|(k, x)| x.stacked().component_mul(weights) * grid.weight(k))
        .collect()
}

/// Backward sweep for an arbitrary cost forcing `c_k` (the entry at `k = 0`
/// is ignored since the initial state is fixed).
pub fn adjoint_sweep(
    model: &DiscreteModel,
    traj: &Trajectory,
    cost_forcing: &[DVector<f64>],
) -> Result<AdjointTrajectory> {
    let grid = traj.grid();
    let n = model.n_modes();
    check_len("cost forcing samples", grid.len(), cost_forcing.len())?;
    for c in cost_forcing {
        check_len("cost forcing width", 2 * n, c.len())?;
    }
    let k_max = grid.n_steps();
    let mut costates = vec![DVector::zeros(2 * n); k_max + 1];
    let mut multipliers = vec![DVector::zeros(2 * n); k_max];
    for k in (0..k_max).rev() {
        let s = &cost_forcing[k + 1] + &costates[k + 1];
        let mu = traj.linearization(model, k + 1).solve_transpose(&s, k + 1)?;
        costates[k] = traj.linearization(model, k).apply_explicit_transpose(&mu);
        multipliers[k] = mu;
    }
    Ok(AdjointTrajectory {
        costates,
        multipliers,
        h: 0.5 * grid.dt(),
    })
}

/// Discrete adjoint of the cost `J` along `traj`.
pub fn adjoint_solve(model: &DiscreteModel, traj: &Trajectory) -> Result<AdjointTrajectory> {
    adjoint_sweep(model, traj, &cost_state_forcing(model, traj))
}

/// Discrete `B*(r) p` on the control nodes: the control pairing of the step
/// multipliers divided by the quadrature weight, so that
/// `∂J/∂u_k = w_k (γ u_k + d_k)`.
pub fn control_dual(model: &DiscreteModel, traj: &Trajectory, adj: &AdjointTrajectory) -> Vec<f64> {
    let grid = traj.grid();
    let n = model.n_modes();
    let k_max = grid.n_steps();
    let h = 0.5 * grid.dt();
    let pairing: Vec<f64> = adj
        .multipliers
        .iter()
        .map(|mu| traj.load().dot(&mu.rows(n, n)))
        .collect();
    (0..=k_max)
        .map(|k| {
            let mut s = 0.0;
            if k < k_max {
                s += pairing[k];
            }
            if k > 0 {
                s += pairing[k - 1];
            }
            h * s / grid.weight(k)
        })
        .collect()
}

/// `∂J/∂u_k` for the nodal control samples.
pub fn gradient_control(model: &DiscreteModel, traj: &Trajectory, adj: &AdjointTrajectory) -> Vec<f64> {
    let grid = traj.grid();
    let gamma = model.config().gamma;
    control_dual(model, traj, adj)
        .into_iter()
        .zip(&traj.control().samples)
        .enumerate()
        .map(|(k, (d, &u))| grid.weight(k) * (gamma * u + d))
        .collect()
}

/// `∂J/∂r_i = Σ_k h (u_k + u_{k+1}) μ_{k+1}ᵀ (0, ∂b/∂r_i)`, the discrete
/// form of `∫₀^τ ⟨p, B'(r; e_i) u⟩ dt`.
pub fn gradient_shape(model: &DiscreteModel, traj: &Trajectory, adj: &AdjointTrajectory) -> Vec<f64> {
    let n = model.n_modes();
    let h = 0.5 * traj.grid().dt();
    let u = &traj.control().samples;
    // Σ_k h (u_k + u_{k+1}) μ_{k+1,v}
    let mut weighted = DVector::zeros(n);
    for (k, mu) in adj.multipliers.iter().enumerate() {
        let s = h * (u[k] + u[k + 1]);
        if s != 0.0 {
            weighted += mu.rows(n, n) * s;
        }
    }
    let partials = model.shape_modal_partials(traj.shape());
    partials.tr_mul(&weighted).as_slice().to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub grad_u: Vec<f64>,
    pub grad_r: Vec<f64>,
}

pub fn gradient(model: &DiscreteModel, traj: &Trajectory, adj: &AdjointTrajectory) -> Gradient {
    Gradient {
        grad_u: gradient_control(model, traj, adj),
        grad_r: gradient_shape(model, traj, adj),
    }
}

/// `L²(0, τ)` Riesz representative of `∂J/∂u`: divide by quadrature weights.
pub fn control_l2_gradient(grid: &TimeGrid, grad_u: &[f64]) -> Vec<f64> {
    grad_u
        .iter()
        .enumerate()
        .map(|(k, g)| g / grid.weight(k))
        .collect()
}

/// First-order stationarity measures of the discrete optimality system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KKTResidual {
    /// `‖P_U(u - ∇_u J) - u‖` in `L²(0, τ)`.
    pub control_stationarity: f64,
    /// `‖P_K(r - ∇_r J) - r‖₂`.
    pub shape_stationarity: f64,
    /// Cosine between `u` and the discrete `B*(r) p`; 0 if either vanishes.
    pub collinearity: f64,
}

pub fn stationarity(grid: &TimeGrid, u: &[f64], r: &[f64], grad: &Gradient, sets: &AdmissibleSets) -> (f64, f64) {
    let g_u = control_l2_gradient(grid, &grad.grad_u);
    let trial: Vec<f64> = u.iter().zip(&g_u).map(|(a, g)| a - g).collect();
    let projected = project_control(&trial, grid, sets.control_ball_radius);
    let du: Vec<f64> = projected.iter().zip(u).map(|(p, a)| p - a).collect();
    let control = grid.l2_norm(&du);

    let trial_r: Vec<f64> = r.iter().zip(&grad.grad_r).map(|(a, g)| a - g).collect();
    let projected_r = project_shape(&trial_r, &sets.shape_box);
    let shape = projected_r
        .iter()
        .zip(r)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        .sqrt();
    (control, shape)
}

pub fn kkt_residuals(
    model: &DiscreteModel,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    sets: &AdmissibleSets,
) -> KKTResidual {
    let grid = traj.grid();
    let grad = gradient(model, traj, adj);
    let u = &traj.control().samples;
    let (control_stationarity, shape_stationarity) =
        stationarity(grid, u, traj.shape().values(), &grad, sets);
    let dual = control_dual(model, traj, adj);
    let nu = grid.l2_norm(u);
    let nd = grid.l2_norm(&dual);
    let collinearity = if nu > 0.0 && nd > 0.0 {
        (grid.l2_dot(u, &dual) / (nu * nd)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    KKTResidual {
        control_stationarity,
        shape_stationarity,
        collinearity,
    }
}
