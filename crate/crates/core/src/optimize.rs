//! Projected-gradient minimization of the discrete cost over
//! `U_ad × K_ad` with Armijo backtracking.
//!
//! The control block moves along the `L²(0, τ)` gradient, for which radial
//! scaling is the exact projection onto the ball. The shape block moves
//! along the Euclidean gradient and is clamped to its box. Sufficient
//! decrease is tested against the directional derivative
//! `∇Jᵀ (x_trial - x)`, which does not depend on the metric.

use serde::{Deserialize, Serialize};

use crate::adjoint::{adjoint_solve, control_l2_gradient, gradient, kkt_residuals, stationarity, Gradient, KKTResidual};
use crate::error::{Error, Result};
use crate::forward::{evaluate_cost, forward_solve, ControlSignal, TimeGrid, Trajectory};
use crate::model::{DiscreteModel, StateVector};
use crate::shape::ShapeParams;

/// Smallest step tried before a line search gives up.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibleSets {
    /// `R₁`: radius of the discrete `L²` ball `U_ad`.
    pub control_ball_radius: f64,
    /// `K_ad` as per-parameter closed intervals.
    pub shape_box: Vec<(f64, f64)>,
}

impl AdmissibleSets {
    pub fn new(control_ball_radius: f64, shape_box: Vec<(f64, f64)>) -> Result<Self> {
        if !(control_ball_radius > 0.0 && control_ball_radius.is_finite()) {
            return Err(Error::InvalidConfig("control ball radius must be positive".into()));
        }
        for (k, &(lo, hi)) in shape_box.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "shape box interval {k} is empty or degenerate: [{lo}, {hi}]"
                )));
            }
        }
        Ok(AdmissibleSets {
            control_ball_radius,
            shape_box,
        })
    }

    /// Sets matching a control's norm bound and a shape's box.
    pub fn from_parts(u: &ControlSignal, r: &ShapeParams) -> Result<Self> {
        Self::new(u.norm_bound, r.bounds().to_vec())
    }
}

/// Radial projection onto the discrete `L²` ball of radius `radius`.
pub fn project_control(u: &[f64], grid: &TimeGrid, radius: f64) -> Vec<f64> {
    let norm = grid.l2_norm(u);
    if norm <= radius {
        u.to_vec()
    } else {
        let scale = radius / norm;
        u.iter().map(|x| x * scale).collect()
    }
}

/// Componentwise clamp onto the box.
pub fn project_shape(r: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    r.iter()
        .zip(bounds)
        .map(|(&x, &(lo, hi))| x.clamp(lo, hi))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimMode {
    /// One shared step on `(u, r)`.
    Joint,
    /// Relax `u` fully, then step `r`.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub max_iters: usize,
    /// Threshold on both stationarity measures.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub mode: OptimMode,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iters: 500,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            mode: OptimMode::Joint,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return fail("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return fail("backtrack_factor must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return fail("initial_step must be positive");
        }
        if !(self.grad_tol > 0.0) {
            return fail("grad_tol must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub cost: f64,
    pub control_stationarity: f64,
    pub shape_stationarity: f64,
    /// Accepted step length; 0 for the starting point and for full control
    /// relaxations in alternating mode.
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimStatus {
    Converged,
    MaxIters,
    SolverFailure,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub u_opt: ControlSignal,
    pub r_opt: ShapeParams,
    pub cost: f64,
    pub initial_cost: f64,
    pub kkt: KKTResidual,
    pub log: Vec<IterateRecord>,
    pub status: OptimStatus,
    /// Forward solution at the returned point.
    pub trajectory: Trajectory,
}

impl OptimResult {
    pub fn iterations(&self) -> usize {
        self.log.last().map_or(0, |r| r.iter)
    }
}

/// An evaluated iterate with its gradient.
struct Iterate {
    traj: Trajectory,
    cost: f64,
    grad: Gradient,
    stat: (f64, f64),
}

impl Iterate {
    fn u(&self) -> &[f64] {
        &self.traj.control().samples
    }

    fn r(&self) -> &ShapeParams {
        self.traj.shape()
    }
}

struct Problem<'a> {
    model: &'a DiscreteModel,
    sets: &'a AdmissibleSets,
    cfg: &'a OptimConfig,
    x0: &'a StateVector,
    grid: TimeGrid,
}

/// Outcome of one backtracking search.
enum LineSearch {
    Accepted(Box<Iterate>, f64),
    Underflow,
}

impl<'a> Problem<'a> {
    fn new(model: &'a DiscreteModel, sets: &'a AdmissibleSets, cfg: &'a OptimConfig, x0: &'a StateVector) -> Result<Self> {
        cfg.validate()?;
        Ok(Problem {
            model,
            sets,
            cfg,
            x0,
            grid: TimeGrid::for_model(model),
        })
    }

    fn cost_only(&self, u: &ControlSignal, r: &ShapeParams) -> Result<(Trajectory, f64)> {
        let traj = forward_solve(self.model, u, r, self.x0)?;
        let cost = evaluate_cost(self.model, &traj);
        Ok((traj, cost))
    }

    fn complete(&self, traj: Trajectory, cost: f64) -> Result<Iterate> {
        let adj = adjoint_solve(self.model, &traj)?;
        let grad = gradient(self.model, &traj, &adj);
        let stat = stationarity(&self.grid, &traj.control().samples, traj.shape().values(), &grad, self.sets);
        Ok(Iterate { traj, cost, grad, stat })
    }

    fn evaluate(&self, u: &ControlSignal, r: &ShapeParams) -> Result<Iterate> {
        let (traj, cost) = self.cost_only(u, r)?;
        self.complete(traj, cost)
    }

    fn record(&self, iter: usize, it: &Iterate, step: f64) -> IterateRecord {
        IterateRecord {
            iter,
            cost: it.cost,
            control_stationarity: it.stat.0,
            shape_stationarity: it.stat.1,
            step,
        }
    }

    fn trial_control(&self, it: &Iterate, t: f64) -> Vec<f64> {
        let g = control_l2_gradient(&self.grid, &it.grad.grad_u);
        let moved: Vec<f64> = it.u().iter().zip(&g).map(|(u, g)| u - t * g).collect();
        project_control(&moved, &self.grid, self.sets.control_ball_radius)
    }

    fn trial_shape(&self, it: &Iterate, t: f64) -> Vec<f64> {
        let moved: Vec<f64> = it
            .r()
            .values()
            .iter()
            .zip(&it.grad.grad_r)
            .map(|(r, g)| r - t * g)
            .collect();
        project_shape(&moved, &self.sets.shape_box)
    }

    /// Backtracking on the projected-gradient path. `move_u`/`move_r` select
    /// the blocks that move. With `relax_inner`, every shape trial first
    /// relaxes the control (alternating mode).
    fn line_search(&self, it: &Iterate, move_u: bool, move_r: bool, relax_inner: bool) -> Result<LineSearch> {
        let mut t = self.cfg.initial_step;
        while t >= MIN_STEP {
            let u_vals = if move_u {
                self.trial_control(it, t)
            } else {
                it.u().to_vec()
            };
            let r_vals = if move_r {
                self.trial_shape(it, t)
            } else {
                it.r().values().to_vec()
            };
            let decrease: f64 = it
                .grad
                .grad_u
                .iter()
                .zip(u_vals.iter().zip(it.u()))
                .map(|(g, (a, b))| g * (a - b))
                .sum::<f64>()
                + it.grad
                    .grad_r
                    .iter()
                    .zip(r_vals.iter().zip(it.r().values()))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum::<f64>();
            let u_trial = it.traj.control().with_samples(u_vals);
            let r_trial = it.r().with_values(r_vals)?;
            let sufficient = |cost: f64| cost <= it.cost + self.cfg.armijo_c * decrease;
            // (trial cost, accepted iterate)
            let outcome = if relax_inner {
                match self.descend(u_trial, r_trial, false) {
                    Ok((inner, _, _)) => Some((inner.cost, Some(inner).filter(|i| sufficient(i.cost)))),
                    Err(Error::NewtonDivergence { .. }) | Err(Error::SingularStep { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                match self.cost_only(&u_trial, &r_trial) {
                    Ok((traj, cost)) if sufficient(cost) => Some((cost, Some(self.complete(traj, cost)?))),
                    Ok((_, cost)) => Some((cost, None)),
                    Err(Error::NewtonDivergence { .. }) | Err(Error::SingularStep { .. }) => None,
                    Err(e) => return Err(e),
                }
            };
            t *= match outcome {
                Some((_, Some(next))) => return Ok(LineSearch::Accepted(Box::new(next), t)),
                Some((cost, None)) => self.interpolated_factor(it.cost, decrease, cost),
                None => self.cfg.backtrack_factor,
            };
        }
        Ok(LineSearch::Underflow)
    }

    /// Shrink factor from the quadratic through `J(0)`, the directional
    /// decrease and `J(t)`, kept within `[0.1, backtrack_factor]`.
    fn interpolated_factor(&self, base: f64, decrease: f64, trial: f64) -> f64 {
        let curvature = trial - base - decrease;
        if !(curvature > 0.0 && decrease < 0.0) {
            return self.cfg.backtrack_factor;
        }
        let s = -decrease / (2.0 * curvature);
        if s.is_finite() {
            s.clamp(0.1 * self.cfg.backtrack_factor.min(1.0), self.cfg.backtrack_factor)
        } else {
            self.cfg.backtrack_factor
        }
    }

    fn converged(&self, it: &Iterate, shape_too: bool) -> bool {
        it.stat.0 < self.cfg.grad_tol && (!shape_too || it.stat.1 < self.cfg.grad_tol)
    }

    /// Projected-gradient loop; with `move_r = false` only the control moves.
    fn descend(&self, u: ControlSignal, r: ShapeParams, move_r: bool) -> Result<(Iterate, Vec<IterateRecord>, OptimStatus)> {
        let mut it = self.evaluate(&u, &r)?;
        let mut log = vec![self.record(0, &it, 0.0)];
        for k in 1..=self.cfg.max_iters {
            if self.converged(&it, move_r) {
                return Ok((it, log, OptimStatus::Converged));
            }
            match self.line_search(&it, true, move_r, false)? {
                LineSearch::Accepted(next, t) => {
                    it = *next;
                    log.push(self.record(k, &it, t));
                }
                LineSearch::Underflow => return Ok((it, log, OptimStatus::SolverFailure)),
            }
        }
        let status = if self.converged(&it, move_r) {
            OptimStatus::Converged
        } else {
            OptimStatus::MaxIters
        };
        Ok((it, log, status))
    }

    fn alternate(&self, u: ControlSignal, r: ShapeParams) -> Result<(Iterate, Vec<IterateRecord>, OptimStatus)> {
        // record 0 is the starting point; record 1 the first full relaxation
        let start = self.evaluate(&u, &r)?;
        let mut log = vec![self.record(0, &start, 0.0)];
        let (mut it, _, status) = self.descend(u, r, false)?;
        log.push(self.record(1, &it, 0.0));
        if status == OptimStatus::SolverFailure {
            return Ok((it, log, status));
        }
        for k in 2..=self.cfg.max_iters {
            if self.converged(&it, true) {
                return Ok((it, log, OptimStatus::Converged));
            }
            if it.stat.1 < self.cfg.grad_tol {
                // shape is stationary; finish relaxing the control
                let (next, _, status) = self.descend(it.traj.control().clone(), it.r().clone(), false)?;
                it = next;
                log.push(self.record(k, &it, 0.0));
                if status != OptimStatus::Converged {
                    return Ok((it, log, status));
                }
                continue;
            }
            match self.line_search(&it, false, true, true)? {
                LineSearch::Accepted(next, t) => {
                    it = *next;
                    log.push(self.record(k, &it, t));
                }
                LineSearch::Underflow => return Ok((it, log, OptimStatus::SolverFailure)),
            }
        }
        let status = if self.converged(&it, true) {
            OptimStatus::Converged
        } else {
            OptimStatus::MaxIters
        };
        Ok((it, log, status))
    }

    fn finish(&self, it: Iterate, log: Vec<IterateRecord>, status: OptimStatus) -> Result<OptimResult> {
        let adj = adjoint_solve(self.model, &it.traj)?;
        let kkt = kkt_residuals(self.model, &it.traj, &adj, self.sets);
        Ok(OptimResult {
            u_opt: it.traj.control().clone(),
            r_opt: it.r().clone(),
            cost: it.cost,
            initial_cost: log.first().map_or(it.cost, |r| r.cost),
            kkt,
            log,
            status,
            trajectory: it.traj,
        })
    }

    fn admissible_start(&self, u_init: &ControlSignal, r_init: &ShapeParams) -> Result<(ControlSignal, ShapeParams)> {
        let u = u_init.with_samples(project_control(&u_init.samples, &self.grid, self.sets.control_ball_radius));
        let r = r_init.with_values(project_shape(r_init.values(), &self.sets.shape_box))?;
        Ok((u, r))
    }
}

/// Minimizes `J(u, r)` over `U_ad × K_ad` from the given start.
pub fn optimize(
    model: &DiscreteModel,
    sets: &AdmissibleSets,
    cfg: &OptimConfig,
    x0: &StateVector,
    u_init: &ControlSignal,
    r_init: &ShapeParams,
) -> Result<OptimResult> {
    let problem = Problem::new(model, sets, cfg, x0)?;
    let (u, r) = problem.admissible_start(u_init, r_init)?;
    let (it, log, status) = match cfg.mode {
        OptimMode::Joint => problem.descend(u, r, true)?,
        OptimMode::Alternating => problem.alternate(u, r)?,
    };
    problem.finish(it, log, status)
}

/// Minimizes over the control alone with the shape held fixed.
pub fn relax_control(
    model: &DiscreteModel,
    sets: &AdmissibleSets,
    cfg: &OptimConfig,
    x0: &StateVector,
    u_init: &ControlSignal,
    r: &ShapeParams,
) -> Result<OptimResult> {
    let problem = Problem::new(model, sets, cfg, x0)?;
    let (u, r) = problem.admissible_start(u_init, r)?;
    let (it, log, status) = problem.descend(u, r, false)?;
    problem.finish(it, log, status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 1e-2).unwrap()
    }

    #[test]
    fn radial_projection() {
        let g = grid();
        let u: Vec<f64> = (0..g.len()).map(|k| 3.0 + (k as f64).sin()).collect();
        let r1 = 0.5 * g.l2_norm(&u);
        let p = project_control(&u, &g, r1);
        assert!((g.l2_norm(&p) - r1).abs() < 1e-12 * r1);
        let ratio = p[0] / u[0];
        assert!(p.iter().zip(&u).all(|(a, b)| (a / b - ratio).abs() < 1e-14));
        assert_eq!(project_control(&vec![0.0; g.len()], &g, 1.0), vec![0.0; g.len()]);
        let inside: Vec<f64> = u.iter().map(|x| x * 1e-3).collect();
        assert_eq!(project_control(&inside, &g, r1), inside);
    }

    #[test]
    fn box_projection() {
        let b = [(0.1, 0.9), (0.02, 0.3)];
        assert_eq!(project_shape(&[1.2, 0.05], &b), vec![0.9, 0.05]);
        assert_eq!(project_shape(&[0.4, 0.2], &b), vec![0.4, 0.2]);
        assert_eq!(project_shape(&[-5.0, -5.0], &b), vec![0.1, 0.02]);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimConfig::default();
        assert!(c.validate().is_ok());
        c.armijo_c = 1.0;
        assert!(c.validate().is_err());
        c = OptimConfig {
            backtrack_factor: 0.0,
            ..OptimConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(AdmissibleSets::new(0.0, vec![]).is_err());
        assert!(AdmissibleSets::new(1.0, vec![(0.5, 0.5)]).is_err());
    }

    #[test]
    fn origin_is_optimal_immediately() {
        let m = DiscreteModel::build(ModelConfig {
            n_modes: 4,
            ..ModelConfig::default()
        })
        .unwrap();
        let g = TimeGrid::for_model(&m);
        let u = ControlSignal::zeros(&g, 10.0).unwrap();
        let r = ShapeParams::gaussian_bump(0.3, 0.1).unwrap();
        let sets = AdmissibleSets::from_parts(&u, &r).unwrap();
        let res = optimize(&m, &sets, &OptimConfig::default(), &StateVector::zeros(4), &u, &r).unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        assert_eq!(res.iterations(), 0);
        assert_eq!(res.cost, 0.0);
    }
}
