//! Independent checks of the solver and its gradients.
//!
//! The finite-difference oracle only calls [`forward_solve`] and
//! [`evaluate_cost`]; the closed-form oscillator never touches the time
//! stepper; the sweep relaxes the control at each grid point and records
//! the cost.

use nalgebra::{DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::adjoint::{adjoint_solve, adjoint_sweep, gradient, AdjointTrajectory};
use crate::error::{check_len, Error, Result};
use crate::forward::{solve_cost, tangent_linear_solve, ControlSignal, TimeGrid, Trajectory};
use crate::model::{DiscreteModel, ModelConfig, StateVector};
use crate::optimize::{relax_control, AdmissibleSets, OptimConfig, OptimStatus};
use crate::shape::ShapeParams;

/// Default central-difference step.
pub const FD_EPSILON: f64 = 1e-5;
/// Worst relative error accepted by a gradient check.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Relative discrepancy with a floor so that two vanishing values agree.
pub fn relative_error(a: f64, b: f64) -> f64 {
    relative_error_floored(a, b, 1e-12)
}

/// Like [`relative_error`], with the denominator never below `floor`.
pub fn relative_error_floored(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Denominator floor for derivative checks on a cost of size `cost`:
/// central differences cannot resolve slopes below about `1e-8 (1 + J)`.
pub fn derivative_floor(cost: f64) -> f64 {
    1e-8 * (1.0 + cost.abs())
}

/// A band-limited random control direction: a few sines with seeded
/// amplitudes and phases, normalized to unit sup norm.
pub fn smooth_direction(grid: &TimeGrid, rng: &mut impl Rng) -> Vec<f64> {
    let modes: Vec<(f64, f64, f64)> = (1..=4)
        .map(|j| (j as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let tau = grid.tau();
    let raw: Vec<f64> = (0..grid.len())
        .map(|k| {
            let t = grid.time(k) / tau;
            modes.iter().map(|&(j, a, phase)| a * (j * PI * t + phase).sin()).sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    raw.into_iter().map(|x| x / peak).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub label: String,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub directions: Vec<DirectionCheck>,
    pub worst: f64,
    pub pass: bool,
}

impl GradCheckReport {
    fn from_checks(epsilon: f64, directions: Vec<DirectionCheck>) -> Self {
        let worst = directions
            .iter()
            .map(|d| d.relative_error)
            .fold(0.0, f64::max);
        GradCheckReport {
            epsilon,
            directions,
            worst,
            pass: worst <= GRADCHECK_TOL,
        }
    }
}

/// Central-difference gradient of `J(u, r)` with one probe pair per control
/// node and per shape parameter.
///
/// A unit perturbation of a single node barely moves `J`, so the node
/// probes are scaled to the same `L²(0, τ)` size `eps` as a unit-sup smooth
/// direction: node `k` moves by `eps·√(τ/w_k)`.
pub fn fd_gradient(
    model: &DiscreteModel,
    u: &ControlSignal,
    r: &ShapeParams,
    x0: &StateVector,
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_epsilon(eps)?;
    let grid = TimeGrid::for_model(model);
    let grad_u = (0..u.samples.len())
        .into_par_iter()
        .map(|k| {
            let step = eps * (grid.tau() / grid.weight(k)).sqrt();
            let probe = |s: f64| {
                let mut v = u.samples.clone();
                v[k] += s;
                solve_cost(model, &u.with_samples(v), r, x0)
            };
            Ok((probe(step)? - probe(-step)?) / (2.0 * step))
        })
        .collect::<Result<Vec<f64>>>()?;
    let grad_r = (0..r.len())
        .map(|i| {
            let mut dir = vec![0.0; r.len()];
            dir[i] = 1.0;
            fd_shape_directional(model, u, r, x0, &dir, eps)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((grad_u, grad_r))
}

fn check_epsilon(eps: f64) -> Result<()> {
    if (1e-7..=1e-3).contains(&eps) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )))
    }
}

/// Central difference of `J` along a control direction.
pub fn fd_control_directional(
    model: &DiscreteModel,
    u: &ControlSignal,
    r: &ShapeParams,
    x0: &StateVector,
    du: &[f64],
    eps: f64,
) -> Result<f64> {
    let shifted = |s: f64| {
        let v: Vec<f64> = u.samples.iter().zip(du).map(|(a, d)| a + s * d).collect();
        solve_cost(model, &u.with_samples(v), r, x0)
    };
    Ok((shifted(eps)? - shifted(-eps)?) / (2.0 * eps))
}

/// Central difference of `J` along a shape direction. The probes may leave
/// the design box by `eps`; the family formulas are smooth there.
pub fn fd_shape_directional(
    model: &DiscreteModel,
    u: &ControlSignal,
    r: &ShapeParams,
    x0: &StateVector,
    dir: &[f64],
    eps: f64,
) -> Result<f64> {
    let shifted = |s: f64| {
        let values: Vec<f64> = r.values().iter().zip(dir).map(|(a, d)| a + s * d).collect();
        let widened: Vec<(f64, f64)> = r
            .bounds()
            .iter()
            .map(|&(lo, hi)| (lo - 2.0 * eps, hi + 2.0 * eps))
            .collect();
        let probe = ShapeParams::new(r.family(), values, widened)?;
        solve_cost(model, u, &probe, x0)
    };
    Ok((shifted(eps)? - shifted(-eps)?) / (2.0 * eps))
}

/// Compares adjoint gradients with central differences along `n_random`
/// seeded smooth control directions and along every shape coordinate.
pub fn gradcheck(
    model: &DiscreteModel,
    u: &ControlSignal,
    r: &ShapeParams,
    x0: &StateVector,
    eps: f64,
    n_random: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    check_epsilon(eps)?;
    let traj = crate::forward::forward_solve(model, u, r, x0)?;
    let adj = adjoint_solve(model, &traj)?;
    let grad = gradient(model, &traj, &adj);
    let floor = derivative_floor(crate::forward::evaluate_cost(model, &traj));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions: Vec<Vec<f64>> = (0..n_random)
        .map(|_| smooth_direction(traj.grid(), &mut rng))
        .collect();

    let mut checks: Vec<DirectionCheck> = directions
        .par_iter()
        .enumerate()
        .map(|(i, du)| {
            let adjoint: f64 = grad.grad_u.iter().zip(du).map(|(g, d)| g * d).sum();
            let fd = fd_control_directional(model, u, r, x0, du, eps)?;
            Ok(DirectionCheck {
                label: format!("u/random-{i}"),
                adjoint,
                finite_difference: fd,
                relative_error: relative_error_floored(adjoint, fd, floor),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let shape_checks = (0..r.len())
        .into_par_iter()
        .map(|i| {
            let mut dir = vec![0.0; r.len()];
            dir[i] = 1.0;
            let fd = fd_shape_directional(model, u, r, x0, &dir, eps)?;
            Ok(DirectionCheck {
                label: format!("r/{i}"),
                adjoint: grad.grad_r[i],
                finite_difference: fd,
                relative_error: relative_error_floored(grad.grad_r[i], fd, floor),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    checks.extend(shape_checks);
    Ok(GradCheckReport::from_checks(eps, checks))
}

/// Closed-form single-mode linear response `(q(t), v(t))` with `u ≡ 0`:
/// `q̈ + (C_d π⁴ + μ) q̇ + (π⁴ + 1) q = 0`.
pub fn analytic_linear_solution(config: &ModelConfig, q0: f64, v0: f64, t: f64) -> Result<(f64, f64)> {
    if config.alpha != 0.0 || config.n_modes != 1 {
        return Err(Error::InvalidConfig(
            "closed form needs alpha = 0 and a single mode".into(),
        ));
    }
    let lambda = PI.powi(4);
    let omega_sq = lambda + 1.0;
    let a = 0.5 * (config.cd * lambda + config.mu);
    let disc = a * a - omega_sq;
    let decay = (-a * t).exp();
    if disc.abs() <= 1e-12 * omega_sq {
        // critically damped
        let c = v0 + a * q0;
        let q = decay * (q0 + c * t);
        let v = decay * (c - a * (q0 + c * t));
        Ok((q, v))
    } else if disc < 0.0 {
        let wd = (-disc).sqrt();
        let c = (v0 + a * q0) / wd;
        let (s, co) = (wd * t).sin_cos();
        let q = decay * (q0 * co + c * s);
        let v = decay * ((-q0 * wd * s + c * wd * co) - a * (q0 * co + c * s));
        Ok((q, v))
    } else {
        let root = disc.sqrt();
        let (r1, r2) = (-a + root, -a - root);
        // q = A e^{r1 t} + B e^{r2 t}
        let b = (v0 - r1 * q0) / (r2 - r1);
        let a_coef = q0 - b;
        let (e1, e2) = ((r1 * t).exp(), (r2 * t).exp());
        Ok((a_coef * e1 + b * e2, a_coef * r1 * e1 + b * r2 * e2))
    }
}

/// Multipliers of the linear single-mode scheme computed by explicit 2×2
/// matrix transposition, without the solver's linearization.
///
/// With `h = dt/2`, `k = π⁴ + 1` and `d = C_d π⁴ + μ` each step reads
/// `L z_{k+1} = E z_k + h (g_k + g_{k+1})`. The returned `μ_{k+1}` solve
/// `Lᵀ μ_{k+1} = c_{k+1} + Eᵀ μ_{k+2}` backwards from `μ_{K+1} = 0`, which
/// is what [`AdjointTrajectory::multipliers`] should hold for the same
/// `cost_forcing`.
pub fn dense_linear_multipliers(
    config: &ModelConfig,
    grid: &TimeGrid,
    cost_forcing: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>> {
    if config.alpha != 0.0 || config.n_modes != 1 {
        return Err(Error::InvalidConfig(
            "dense transpose oracle needs alpha = 0 and a single mode".into(),
        ));
    }
    check_len("cost forcing samples", grid.len(), cost_forcing.len())?;
    let lambda = PI.powi(4);
    let (k, d, h) = (lambda + 1.0, config.cd * lambda + config.mu, 0.5 * grid.dt());
    let implicit = Matrix2::new(1.0, -h, h * k, 1.0 + h * d);
    let explicit = Matrix2::new(1.0, h, -h * k, 1.0 - h * d);
    let implicit_t = implicit.transpose().try_inverse().ok_or(Error::SingularStep { step: 1 })?;
    let explicit_t = explicit.transpose();

    let steps = grid.n_steps();
    let mut out = vec![[0.0; 2]; steps];
    let mut next = Vector2::zeros();
    for j in (0..steps).rev() {
        let c = Vector2::new(cost_forcing[j + 1][0], cost_forcing[j + 1][1]);
        let mu = implicit_t * (c + explicit_t * next);
        out[j] = [mu[0], mu[1]];
        next = mu;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Swept parameter indices.
    pub params: Vec<usize>,
    /// Grid values per swept parameter.
    pub axes: Vec<Vec<f64>>,
    /// Full parameter vector at each grid point (row-major over the axes).
    pub points: Vec<Vec<f64>>,
    /// Relaxed cost at each point; `None` where the solver failed.
    pub costs: Vec<Option<f64>>,
    pub argmin: Option<usize>,
}

impl SweepResult {
    pub fn min_cost(&self) -> Option<f64> {
        self.argmin.and_then(|i| self.costs[i])
    }
}

/// Brute-force shape sweep over one or two parameters; the control is
/// relaxed from `u_init` at each point. Grid points run in parallel on the
/// current rayon pool; results are assembled in grid order.
#[allow(clippy::too_many_arguments)]
pub fn sweep_shape(
    model: &DiscreteModel,
    sets: &AdmissibleSets,
    cfg: &OptimConfig,
    x0: &StateVector,
    u_init: &ControlSignal,
    r_base: &ShapeParams,
    param_indices: &[usize],
    grid_sizes: &[usize],
) -> Result<SweepResult> {
    if param_indices.is_empty() || param_indices.len() > 2 || param_indices.len() != grid_sizes.len() {
        return Err(Error::InvalidConfig(
            "sweep needs one or two parameters with matching grid sizes".into(),
        ));
    }
    let mut axes = Vec::new();
    for (&p, &n) in param_indices.iter().zip(grid_sizes) {
        let &(lo, hi) = sets.shape_box.get(p).ok_or_else(|| {
            Error::InvalidConfig(format!("sweep parameter {p} out of range"))
        })?;
        if n < 2 {
            return Err(Error::InvalidConfig("sweep grids need at least 2 points".into()));
        }
        let axis: Vec<f64> = (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        axes.push(axis);
    }
    let mut points = Vec::new();
    let outer = &axes[0];
    let inner: &[f64] = axes.get(1).map_or(&[f64::NAN][..], |a| a.as_slice());
    for &a in outer {
        for &b in inner {
            let mut values = r_base.values().to_vec();
            values[param_indices[0]] = a;
            if param_indices.len() == 2 {
                values[param_indices[1]] = b;
            }
            points.push(values);
        }
    }
    let costs: Vec<Option<f64>> = points
        .par_iter()
        .map(|values| {
            let r = r_base.with_values(values.clone()).ok()?;
            let res = relax_control(model, sets, cfg, x0, u_init, &r).ok()?;
            (res.status != OptimStatus::SolverFailure).then_some(res.cost)
        })
        .collect();
    let argmin = costs
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i, c)))
        .fold(None, |best: Option<(usize, f64)>, (i, c)| match best {
            Some((_, bc)) if bc <= c => best,
            _ => Some((i, c)),
        })
        .map(|(i, _)| i);
    Ok(SweepResult {
        params: param_indices.to_vec(),
        axes,
        points,
        costs,
        argmin,
    })
}

/// `|⟨cost forcing, tangent⟩ - ⟨adjoint, forcing⟩| / scale` for one pair.
pub fn pairing_gap(
    adj: &AdjointTrajectory,
    tangent: &[StateVector],
    forcing: &[DVector<f64>],
    cost_forcing: &[DVector<f64>],
) -> Result<f64> {
    let lhs: f64 = cost_forcing
        .iter()
        .zip(tangent)
        .skip(1)
        .map(|(c, z)| c.dot(&z.stacked()))
        .sum();
    let rhs = adj.pair_forcing(forcing)?;
    let scale = lhs.abs().max(rhs.abs());
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
}

/// Largest tangent/adjoint transpose-identity violation over `trials`
/// seeded random forcing pairs.
pub fn duality_probe(model: &DiscreteModel, traj: &Trajectory, trials: usize, seed: u64) -> Result<f64> {
    let len = traj.grid().len();
    let width = 2 * model.n_modes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut random_series = || -> Vec<DVector<f64>> {
            (0..len)
                .map(|_| DVector::from_fn(width, |_, _| rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let forcing = random_series();
        let cost_forcing = random_series();
        let tangent = tangent_linear_solve(model, traj, &forcing)?;
        let adj = adjoint_sweep(model, traj, &cost_forcing)?;
        worst = worst.max(pairing_gap(&adj, &tangent, &forcing, &cost_forcing)?);
    }
    Ok(worst)
}

/// Probe with a deliberately corrupted adjoint; used to show the probe
/// detects perturbations of the given size.
pub fn perturbed_duality_gap(
    model: &DiscreteModel,
    traj: &Trajectory,
    perturbation: f64,
    seed: u64,
) -> Result<f64> {
    let len = traj.grid().len();
    let width = 2 * model.n_modes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_series = || -> Vec<DVector<f64>> {
        (0..len)
            .map(|_| DVector::from_fn(width, |_, _| rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let forcing = random_series();
    let cost_forcing = random_series();
    let tangent = tangent_linear_solve(model, traj, &forcing)?;
    let mut adj = adjoint_sweep(model, traj, &cost_forcing)?;
    for mu in adj.multipliers_mut() {
        let scale = mu.norm();
        mu.iter_mut().for_each(|x| *x += perturbation * scale);
    }
    pairing_gap(&adj, &tangent, &forcing, &cost_forcing)
}
