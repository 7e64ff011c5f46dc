//! Implicit trapezoidal time stepping of the modal system, the quadratic
//! cost, and the tangent-linear (sensitivity) solve.
//!
//! One step solves
//!
//! ```text
//! x_{k+1} = x_k + dt/2 [G(x_k, u_k) + G(x_{k+1}, u_{k+1})]
//! G(q, v, u) = (v, -((nπ)⁴+1) q - (C_d (nπ)⁴ + μ) v + N(q) + b u)
//! ```
//!
//! by Newton's method. The Newton matrix `I - dt/2 ∂G` has the block form
//! `[[I, -hI], [h(Λ - C), I + hD]]` with `Λ`, `D` diagonal and `C` the dense
//! cubic linearization, so every solve reduces to the symmetric `N × N`
//! Schur complement `S = I + hD + h²(Λ - C)`. The converged factor of each
//! step is kept on the [`Trajectory`]; the tangent and adjoint sweeps reuse
//! it, which makes them the exact derivative and exact transpose of the
//! discrete forward map.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{check_len, Error, Result};
use crate::model::{DiscreteModel, StateVector};
use crate::shape::ShapeParams;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: u32 = 20;

/// Uniform grid `t_k = k·dt`, `k = 0..=K`, with `K·dt = τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    /// Rounds `dt` so that it divides `tau` exactly.
    pub fn new(tau: f64, dt: f64) -> Result<Self> {
        if !(tau > 0.0 && dt > 0.0 && tau.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidConfig(
                "time grid needs positive tau and dt".into(),
            ));
        }
        let n_steps = ((tau / dt).round() as usize).max(1);
        Ok(TimeGrid {
            n_steps,
            dt: tau / n_steps as f64,
        })
    }

    pub fn for_model(model: &DiscreteModel) -> Self {
        let c = model.config();
        // config is validated at model build
        Self::new(c.tau, c.dt).expect("validated model config")
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `K + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tau(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Trapezoid quadrature weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Discrete `L²(0, τ)` norm of nodal samples.
    pub fn l2_norm(&self, samples: &[f64]) -> f64 {
        self.l2_dot(samples, samples).sqrt()
    }

    pub fn l2_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| self.weight(k) * x * y)
            .sum()
    }
}

/// Piecewise-linear control with nodal values on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub samples: Vec<f64>,
    /// Radius `R₁` of the admissible ball `U_ad`.
    pub norm_bound: f64,
}

impl ControlSignal {
    pub fn new(samples: Vec<f64>, norm_bound: f64) -> Result<Self> {
        if !(norm_bound > 0.0 && norm_bound.is_finite()) {
            return Err(Error::InvalidConfig(
                "control norm bound must be positive".into(),
            ));
        }
        if samples.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidConfig("control has non-finite samples".into()));
        }
        Ok(ControlSignal {
            samples,
            norm_bound,
        })
    }

    pub fn zeros(grid: &TimeGrid, norm_bound: f64) -> Result<Self> {
        Self::new(vec![0.0; grid.len()], norm_bound)
    }

    pub fn constant(grid: &TimeGrid, value: f64, norm_bound: f64) -> Result<Self> {
        Self::new(vec![value; grid.len()], norm_bound)
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        ControlSignal {
            samples,
            norm_bound: self.norm_bound,
        }
    }

    pub fn l2_norm(&self, grid: &TimeGrid) -> f64 {
        grid.l2_norm(&self.samples)
    }
}

/// Converged linearization data of one time node.
#[derive(Debug)]
struct NodeJacobian {
    /// `∂N/∂q` at the node state; `None` for a linear foundation.
    coupling: Option<DMatrix<f64>>,
    /// LU of the Schur complement `S` at the node state.
    schur: Arc<LU<f64, Dyn, Dyn>>,
}

/// Forward solution `x = S(u, r; x₀)` with the linearization needed by the
/// tangent and adjoint sweeps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<StateVector>,
    control: ControlSignal,
    shape: ShapeParams,
    load: DVector<f64>,
    newton_stats: Vec<u32>,
    jacobians: Vec<Arc<NodeJacobian>>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }

    pub fn shape(&self) -> &ShapeParams {
        &self.shape
    }

    /// Modal load `b_n` of the actuator used.
    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    /// Newton iterations per step, `K` entries.
    pub fn newton_stats(&self) -> &[u32] {
        &self.newton_stats
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one state")
    }

    pub(crate) fn linearization<'a>(&'a self, model: &'a DiscreteModel, k: usize) -> Linearization<'a> {
        let node = &self.jacobians[k];
        Linearization {
            model,
            h: 0.5 * self.grid.dt,
            coupling: node.coupling.as_ref(),
            schur: &node.schur,
        }
    }
}

/// Trapezoid linearization `I ∓ h ∂G(x_k)` of one node.
pub(crate) struct Linearization<'a> {
    model: &'a DiscreteModel,
    h: f64,
    coupling: Option<&'a DMatrix<f64>>,
    schur: &'a LU<f64, Dyn, Dyn>,
}

impl Linearization<'_> {
    /// `(Λ - C) y`.
    fn stiff(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = self.model.restoring().component_mul(y);
        if let Some(c) = self.coupling {
            out -= c * y;
        }
        out
    }

    /// Solves `(I - h ∂G) δ = r` for stacked `r`.
    pub(crate) fn solve(&self, r: &DVector<f64>, step: usize) -> Result<DVector<f64>> {
        let n = r.len() / 2;
        let rq = r.rows(0, n).into_owned();
        let rv = r.rows(n, n).into_owned();
        let rhs = rv - self.stiff(&rq) * self.h;
        let dv = self.schur.solve(&rhs).ok_or(Error::SingularStep { step })?;
        let dq = rq + &dv * self.h;
        Ok(stack(&dq, &dv))
    }

    /// Solves `(I - h ∂G)ᵀ y = s`.
    pub(crate) fn solve_transpose(&self, s: &DVector<f64>, step: usize) -> Result<DVector<f64>> {
        let n = s.len() / 2;
        let sq = s.rows(0, n).into_owned();
        let sv = s.rows(n, n).into_owned();
        let rhs = sv + &sq * self.h;
        let yv = self.schur.solve(&rhs).ok_or(Error::SingularStep { step })?;
        let yq = sq - self.stiff(&yv) * self.h;
        Ok(stack(&yq, &yv))
    }

    /// `(I + h ∂G) x`.
    pub(crate) fn apply_explicit(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.len() / 2;
        let xq = x.rows(0, n).into_owned();
        let xv = x.rows(n, n).into_owned();
        let oq = &xq + &xv * self.h;
        let ov = &xv - (self.stiff(&xq) + self.model.damping().component_mul(&xv)) * self.h;
        stack(&oq, &ov)
    }

    /// `(I + h ∂G)ᵀ y`.
    pub(crate) fn apply_explicit_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = y.len() / 2;
        let yq = y.rows(0, n).into_owned();
        let yv = y.rows(n, n).into_owned();
        let oq = &yq - self.stiff(&yv) * self.h;
        let ov = &yv + (&yq - self.model.damping().component_mul(&yv)) * self.h;
        stack(&oq, &ov)
    }
}

pub(crate) fn stack(q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(q);
    out.rows_mut(n, n).copy_from(v);
    out
}

/// Right-hand side `G(x, u)` on the stacked state.
fn rhs(model: &DiscreteModel, x: &DVector<f64>, u: f64, load: &DVector<f64>) -> DVector<f64> {
    let n = x.len() / 2;
    let q = x.rows(0, n).into_owned();
    let v = x.rows(n, n).into_owned();
    let force = model.nonlinear_term(&q) + load * u
        - model.restoring().component_mul(&q)
        - model.damping().component_mul(&v);
    stack(&v, &force)
}

fn schur_factor(model: &DiscreteModel, h: f64, coupling: Option<&DMatrix<f64>>) -> LU<f64, Dyn, Dyn> {
    let n = model.n_modes();
    let mut s = match coupling {
        Some(c) => c * (-h * h),
        None => DMatrix::zeros(n, n),
    };
    for i in 0..n {
        s[(i, i)] += 1.0 + h * model.damping()[i] + h * h * model.restoring()[i];
    }
    s.lu()
}

fn inf_norm(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Single-step integrator state shared across a solve.
struct Stepper<'a> {
    model: &'a DiscreteModel,
    h: f64,
    /// Shared factor for the linear (`α = 0`) case.
    linear: Option<Arc<LU<f64, Dyn, Dyn>>>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a DiscreteModel, dt: f64) -> Self {
        let h = 0.5 * dt;
        let linear = (model.config().alpha == 0.0).then(|| Arc::new(schur_factor(model, h, None)));
        Stepper { model, h, linear }
    }

    fn node_jacobian(&self, x: &DVector<f64>) -> NodeJacobian {
        match &self.linear {
            Some(lu) => NodeJacobian {
                coupling: None,
                schur: Arc::clone(lu),
            },
            None => {
                let n = x.len() / 2;
                let coupling = self.model.nonlinear_jacobian(&x.rows(0, n).into_owned());
                let schur = Arc::new(schur_factor(self.model, self.h, coupling.as_ref()));
                NodeJacobian { coupling, schur }
            }
        }
    }

    /// Newton solve of one trapezoid step; returns the new state, the Newton
    /// iteration count and the converged node linearization.
    fn advance(
        &self,
        x: &DVector<f64>,
        u0: f64,
        u1: f64,
        load: &DVector<f64>,
        step: usize,
    ) -> Result<(DVector<f64>, u32, NodeJacobian)> {
        let known = x + rhs(self.model, x, u0, load) * self.h;
        let mut y = x.clone();
        let mut iterations = 0u32;
        loop {
            let g = rhs(self.model, &y, u1, load) * self.h;
            let residual = &y - &known - &g;
            let res = inf_norm(&residual);
            if !res.is_finite() {
                return Err(Error::NewtonDivergence {
                    step,
                    residual: res,
                    iterations,
                });
            }
            let scale = 1.0 + inf_norm(&y) + inf_norm(&known) + inf_norm(&g);
            if res <= NEWTON_TOL * scale {
                let jac = self.node_jacobian(&y);
                return Ok((y, iterations, jac));
            }
            if iterations == NEWTON_MAX_ITERS {
                return Err(Error::NewtonDivergence {
                    step,
                    residual: res,
                    iterations,
                });
            }
            let jac = self.node_jacobian(&y);
            let lin = Linearization {
                model: self.model,
                h: self.h,
                coupling: jac.coupling.as_ref(),
                schur: &jac.schur,
            };
            let delta = lin.solve(&residual, step)?;
            y -= delta;
            iterations += 1;
        }
    }
}

/// One trapezoid step from `x_k` with nodal controls `u_k`, `u_{k+1}` and
/// modal load `b`. Uses the model's (grid-adjusted) time step.
pub fn step(
    model: &DiscreteModel,
    x: &StateVector,
    u0: f64,
    u1: f64,
    load: &DVector<f64>,
) -> Result<StateVector> {
    check_len("state modes", model.n_modes(), x.n_modes())?;
    check_len("modal load", model.n_modes(), load.len())?;
    let grid = TimeGrid::for_model(model);
    let stepper = Stepper::new(model, grid.dt());
    let (y, _, _) = stepper.advance(&x.stacked(), u0, u1, load, 1)?;
    Ok(StateVector::from_stacked(&y))
}

/// Integrates the semilinear system from `x0` over the model's horizon.
pub fn forward_solve(
    model: &DiscreteModel,
    u: &ControlSignal,
    r: &ShapeParams,
    x0: &StateVector,
) -> Result<Trajectory> {
    let grid = TimeGrid::for_model(model);
    check_len("control samples", grid.len(), u.samples.len())?;
    check_len("initial state modes", model.n_modes(), x0.n_modes())?;
    let load = model.shape_modal_load(r);
    let stepper = Stepper::new(model, grid.dt());

    let mut states = Vec::with_capacity(grid.len());
    let mut jacobians = Vec::with_capacity(grid.len());
    let mut newton_stats = Vec::with_capacity(grid.n_steps());
    let mut x = x0.stacked();
    jacobians.push(Arc::new(stepper.node_jacobian(&x)));
    states.push(x0.clone());
    for k in 0..grid.n_steps() {
        let (next, iterations, jac) =
            stepper.advance(&x, u.samples[k], u.samples[k + 1], &load, k + 1)?;
        states.push(StateVector::from_stacked(&next));
        jacobians.push(Arc::new(jac));
        newton_stats.push(iterations);
        x = next;
    }
    Ok(Trajectory {
        grid,
        states,
        control: u.clone(),
        shape: r.clone(),
        load,
        newton_stats,
        jacobians,
    })
}

/// Trapezoid discretization of `J = ½∫ ‖x‖² + γ|u|² dt` for given nodal
/// states and controls.
pub fn cost_of(model: &DiscreteModel, grid: &TimeGrid, states: &[StateVector], u: &[f64]) -> f64 {
    let gamma = model.config().gamma;
    let terms = states
        .iter()
        .zip(u)
        .enumerate()
        .map(|(k, (x, &uk))| grid.weight(k) * (model.energy_norm_sq(x) + gamma * uk * uk));
    0.5 * compensated_sum(terms)
}

/// Neumaier summation. A plain running sum over ~10³ nodes carries enough
/// rounding to swamp central differences of `J` along weak directions.
pub(crate) fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for t in terms {
        let next = sum + t;
        carry += if sum.abs() >= t.abs() {
            (sum - next) + t
        } else {
            (t - next) + sum
        };
        sum = next;
    }
    sum + carry
}

pub fn evaluate_cost(model: &DiscreteModel, traj: &Trajectory) -> f64 {
    cost_of(model, &traj.grid, &traj.states, &traj.control.samples)
}

/// Forward solve followed by cost evaluation.
pub fn solve_cost(
    model: &DiscreteModel,
    u: &ControlSignal,
    r: &ShapeParams,
    x0: &StateVector,
) -> Result<f64> {
    forward_solve(model, u, r, x0).map(|traj| evaluate_cost(model, &traj))
}

/// Integrates `ḣ = (A + F'_{x(t)}) h + g`, `h(0) = 0`, with the trapezoid
/// scheme linearized about `traj`. `forcing` holds stacked `2N` samples
/// `g(t_k)` for every node.
pub fn tangent_linear_solve(
    model: &DiscreteModel,
    traj: &Trajectory,
    forcing: &[DVector<f64>],
) -> Result<Vec<StateVector>> {
    let grid = traj.grid;
    let n = model.n_modes();
    check_len("tangent forcing samples", grid.len(), forcing.len())?;
    for g in forcing {
        check_len("tangent forcing width", 2 * n, g.len())?;
    }
    let h = 0.5 * grid.dt();
    let mut out = Vec::with_capacity(grid.len());
    let mut z = DVector::zeros(2 * n);
    out.push(StateVector::zeros(n));
    for k in 0..grid.n_steps() {
        let rhs = traj.linearization(model, k).apply_explicit(&z)
            + (&forcing[k] + &forcing[k + 1]) * h;
        z = traj.linearization(model, k + 1).solve(&rhs, k + 1)?;
        out.push(StateVector::from_stacked(&z));
    }
    Ok(out)
}

/// Forcing `(0, B'(r; r̃) u(t))` of the shape sensitivity equation.
pub fn shape_forcing(
    model: &DiscreteModel,
    traj: &Trajectory,
    dir: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let db = model.shape_modal_jacobian(&traj.shape, dir)?;
    let zero = DVector::zeros(model.n_modes());
    Ok(traj
        .control
        .samples
        .iter()
        .map(|&u| stack(&zero, &(&db * u)))
        .collect())
}

/// Forcing `(0, B(r) δu(t))` of the control sensitivity equation.
pub fn control_forcing(model: &DiscreteModel, traj: &Trajectory, du: &[f64]) -> Result<Vec<DVector<f64>>> {
    check_len("control direction", traj.grid.len(), du.len())?;
    let zero = DVector::zeros(model.n_modes());
    Ok(du.iter().map(|&d| stack(&zero, &(&traj.load * d))).collect())
}
