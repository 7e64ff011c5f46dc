//! Modal Galerkin discretization of the hinged beam on a nonlinear
//! foundation.
//!
//! The deflection is expanded as `w(x, t) = Σ_n q_n(t) sin(nπx)`. Under
//! hinged ends the sines are eigenfunctions of `∂ₓₓₓₓ`, so stiffness,
//! Kelvin-Voigt damping and viscous damping are all diagonal per mode. Only
//! the cubic foundation term couples modes; it is evaluated pseudo-spectrally
//! on a uniform interior grid with `M ≥ 3N + 1` points, which makes the
//! projection of `w³` alias-free.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::shape::ShapeParams;

/// Physical constants and discretization sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Cubic foundation coefficient.
    pub alpha: f64,
    /// Viscous foundation damping.
    pub mu: f64,
    /// Kelvin-Voigt damping.
    pub cd: f64,
    /// Control weight in the cost.
    pub gamma: f64,
    /// Time horizon.
    pub tau: f64,
    /// Number of sine modes `N`.
    pub n_modes: usize,
    /// Quadrature resolution `M`; `4N` when unset.
    pub n_quad: Option<usize>,
    pub dt: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alpha: 1.0,
            mu: 0.1,
            cd: 0.001,
            gamma: 0.1,
            tau: 1.0,
            n_modes: 16,
            n_quad: None,
            dt: 1e-3,
        }
    }
}

impl ModelConfig {
    pub fn quad_points(&self) -> usize {
        self.n_quad.unwrap_or(4 * self.n_modes)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let finite = [
            self.alpha, self.mu, self.cd, self.gamma, self.tau, self.dt,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return fail("model constants must be finite");
        }
        if self.alpha < 0.0 {
            return fail("alpha must be non-negative");
        }
        if self.mu < 0.0 {
            return fail("mu must be non-negative");
        }
        if self.cd < 0.0 {
            return fail("cd must be non-negative");
        }
        if self.gamma <= 0.0 {
            return fail("gamma must be positive");
        }
        if self.tau <= 0.0 {
            return fail("tau must be positive");
        }
        if self.dt <= 0.0 {
            return fail("dt must be positive");
        }
        if self.dt >= self.tau {
            return fail("dt must be smaller than tau");
        }
        if self.n_modes == 0 {
            return fail("n_modes must be at least 1");
        }
        if self.quad_points() < 3 * self.n_modes + 1 {
            return Err(Error::InvalidConfig(format!(
                "n_quad must be at least 3*n_modes+1 = {}",
                3 * self.n_modes + 1
            )));
        }
        Ok(())
    }
}

/// Modal state: displacement coefficients `q` and velocity coefficients `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl StateVector {
    pub fn zeros(n_modes: usize) -> Self {
        StateVector {
            q: DVector::zeros(n_modes),
            v: DVector::zeros(n_modes),
        }
    }

    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        check_len("velocity modes", q.len(), v.len())?;
        if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("state has non-finite entries".into()));
        }
        Ok(StateVector { q, v })
    }

    /// State with the given leading modal coefficients, zero-padded to `n_modes`.
    pub fn from_modes(n_modes: usize, q: &[f64], v: &[f64]) -> Result<Self> {
        if q.len() > n_modes || v.len() > n_modes {
            return Err(Error::InvalidConfig(format!(
                "initial condition has more than {n_modes} modal coefficients"
            )));
        }
        let mut state = Self::zeros(n_modes);
        state.q.rows_mut(0, q.len()).copy_from_slice(q);
        state.v.rows_mut(0, v.len()).copy_from_slice(v);
        Self::new(state.q, state.v)
    }

    pub fn n_modes(&self) -> usize {
        self.q.len()
    }

    /// Stacked `(q, v)` as one vector of length `2N`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.n_modes();
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&self.q);
        out.rows_mut(n, n).copy_from(&self.v);
        out
    }

    pub fn from_stacked(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        StateVector {
            q: x.rows(0, n).into_owned(),
            v: x.rows(n, n).into_owned(),
        }
    }

    /// Mirror image under `x ↦ 1 - x`: mode `n` picks up `(-1)^(n+1)`.
    pub fn mirrored(&self) -> Self {
        let flip = |c: &DVector<f64>| {
            DVector::from_iterator(
                c.len(),
                c.iter()
                    .enumerate()
                    .map(|(i, &x)| if i % 2 == 0 { x } else { -x }),
            )
        };
        StateVector {
            q: flip(&self.q),
            v: flip(&self.v),
        }
    }
}

/// Assembled modal operators on an immutable quadrature grid.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    config: ModelConfig,
    stiffness: DVector<f64>,
    grid: Vec<f64>,
    sines: DMatrix<f64>,
    energy_weights: DVector<f64>,
    restoring: DVector<f64>,
    damping: DVector<f64>,
}

impl DiscreteModel {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_modes;
        let m = config.quad_points();
        let stiffness = DVector::from_fn(n, |i, _| {
            let k = (i + 1) as f64 * PI;
            (k * k) * (k * k)
        });
        let grid: Vec<f64> = (1..m).map(|j| j as f64 / m as f64).collect();
        let sines = DMatrix::from_fn(n, m - 1, |i, j| ((i + 1) as f64 * PI * grid[j]).sin());
        let mut energy_weights = DVector::from_element(2 * n, 0.5);
        for i in 0..n {
            energy_weights[i] = 0.5 * (stiffness[i] + 1.0);
        }
        let restoring = stiffness.map(|l| l + 1.0);
        let damping = stiffness.map(|l| l * config.cd + config.mu);
        Ok(DiscreteModel {
            config,
            stiffness,
            grid,
            sines,
            energy_weights,
            restoring,
            damping,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_modes(&self) -> usize {
        self.config.n_modes
    }

    /// `M`; the grid holds the `M - 1` interior points.
    pub fn n_quad(&self) -> usize {
        self.grid.len() + 1
    }

    /// Biharmonic eigenvalues `(nπ)⁴`.
    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }

    pub fn quad_grid(&self) -> &[f64] {
        &self.grid
    }

    /// `sin(nπx_j)`, modes by rows.
    pub fn sine_table(&self) -> &DMatrix<f64> {
        &self.sines
    }

    /// Diagonal of the energy-norm weight on the stacked state `(q, v)`.
    pub fn energy_weights(&self) -> &DVector<f64> {
        &self.energy_weights
    }

    /// `(nπ)⁴ + 1`: beam stiffness plus linear foundation.
    pub(crate) fn restoring(&self) -> &DVector<f64> {
        &self.restoring
    }

    /// `C_d (nπ)⁴ + μ`.
    pub(crate) fn damping(&self) -> &DVector<f64> {
        &self.damping
    }

    fn weight(&self) -> f64 {
        2.0 / self.n_quad() as f64
    }

    /// Trapezoid projection `(2/M) Σ_j f(x_j) sin(nπx_j)`.
    pub fn project(&self, samples: &[f64]) -> Result<DVector<f64>> {
        check_len("grid samples", self.grid.len(), samples.len())?;
        let f = DVector::from_column_slice(samples);
        Ok(&self.sines * f * self.weight())
    }

    /// `Σ_n c_n sin(nπx_j)` on the grid.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.sines.tr_mul(coeffs)
    }

    /// Largest `|(2/M) Σ_j sin(nπx_j) sin(mπx_j) - δ_nm|` over `n, m ≤ max_mode`.
    pub fn orthogonality_defect(&self, max_mode: usize) -> f64 {
        let table = DMatrix::from_fn(max_mode, self.grid.len(), |i, j| {
            ((i + 1) as f64 * PI * self.grid[j]).sin()
        });
        let gram = &table * table.transpose() * self.weight();
        let mut worst = 0.0f64;
        for i in 0..max_mode {
            for j in 0..max_mode {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Modal load `b_n` of an arbitrary sampled influence function.
    pub fn modal_load_from_samples(&self, samples: &[f64]) -> Result<DVector<f64>> {
        self.project(samples)
    }

    /// Modal load `b_n = 2∫ b(x, r) sin(nπx) dx` by the trapezoid rule.
    pub fn shape_modal_load(&self, r: &ShapeParams) -> DVector<f64> {
        let samples = r.sample(&self.grid);
        &self.sines * DVector::from_vec(samples) * self.weight()
    }

    /// Directional derivative of [`Self::shape_modal_load`] along `dir`.
    pub fn shape_modal_jacobian(&self, r: &ShapeParams, dir: &[f64]) -> Result<DVector<f64>> {
        check_len("shape direction", r.len(), dir.len())?;
        let samples: Vec<f64> = self.grid.iter().map(|&x| r.directional(x, dir)).collect();
        Ok(&self.sines * DVector::from_vec(samples) * self.weight())
    }

    /// Modal loads of each parameter partial, one column per parameter.
    pub fn shape_modal_partials(&self, r: &ShapeParams) -> DMatrix<f64> {
        let m = r.len();
        let samples = DMatrix::from_fn(self.grid.len(), m, |j, k| r.partial(self.grid[j], k));
        &self.sines * samples * self.weight()
    }

    /// Modal projection of `-α w³`.
    pub fn nonlinear_term(&self, q: &DVector<f64>) -> DVector<f64> {
        let alpha = self.config.alpha;
        if alpha == 0.0 {
            return DVector::zeros(self.n_modes());
        }
        let w = self.synthesize(q);
        let cubed = w.map(|x| x * x * x);
        &self.sines * cubed * (-alpha * self.weight())
    }

    /// Modal projection of `-3α w² δw`.
    pub fn nonlinear_jacobian_apply(&self, q: &DVector<f64>, dq: &DVector<f64>) -> DVector<f64> {
        let alpha = self.config.alpha;
        if alpha == 0.0 {
            return DVector::zeros(self.n_modes());
        }
        let w = self.synthesize(q);
        let dw = self.synthesize(dq);
        let prod = w.zip_map(&dw, |a, b| a * a * b);
        &self.sines * prod * (-3.0 * alpha * self.weight())
    }

    /// Dense matrix of [`Self::nonlinear_jacobian_apply`]; `None` when `α = 0`.
    /// Symmetric negative semi-definite.
    pub fn nonlinear_jacobian(&self, q: &DVector<f64>) -> Option<DMatrix<f64>> {
        let alpha = self.config.alpha;
        if alpha == 0.0 {
            return None;
        }
        let w = self.synthesize(q);
        let scale = -3.0 * alpha * self.weight();
        let mut weighted = self.sines.clone();
        for (j, mut col) in weighted.column_iter_mut().enumerate() {
            col *= w[j] * w[j] * scale;
        }
        Some(weighted * self.sines.transpose())
    }

    /// `‖(w, v)‖² = ∫ (∂ₓₓw)² + w² + v² dx` in modal form.
    pub fn energy_norm_sq(&self, x: &StateVector) -> f64 {
        let n = self.n_modes();
        (0..n)
            .map(|i| {
                self.energy_weights[i] * x.q[i] * x.q[i]
                    + self.energy_weights[n + i] * x.v[i] * x.v[i]
            })
            .sum()
    }

    pub fn state_from_physical(&self, w0: &[f64], v0: &[f64]) -> Result<StateVector> {
        let q = self.project(w0)?;
        let v = self.project(v0)?;
        StateVector::new(q, v)
    }

    /// Grid samples `(w(x_j), v(x_j))`.
    pub fn state_to_physical(&self, x: &StateVector) -> (Vec<f64>, Vec<f64>) {
        (
            self.synthesize(&x.q).as_slice().to_vec(),
            self.synthesize(&x.v).as_slice().to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: usize, alpha: f64) -> DiscreteModel {
        DiscreteModel::build(ModelConfig {
            n_modes: n,
            alpha,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn unit(n: usize, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    }

    #[test]
    fn single_mode_stiffness() {
        let m = model(1, 1.0);
        let pi4 = (PI * PI) * (PI * PI);
        assert_eq!(m.stiffness()[0], pi4);
        assert!((m.stiffness()[0] - 97.4091).abs() < 1e-4);
        assert_eq!(m.energy_weights().as_slice(), &[(pi4 + 1.0) / 2.0, 0.5]);
        let m4 = model(4, 1.0);
        for (i, &l) in m4.stiffness().iter().enumerate() {
            let k = (i + 1) as f64 * PI;
            assert_eq!(l, (k * k) * (k * k));
        }
    }

    #[test]
    fn orthogonality_small_grid() {
        let m = DiscreteModel::build(ModelConfig {
            n_modes: 2,
            n_quad: Some(8),
            ..ModelConfig::default()
        })
        .unwrap();
        assert!(m.orthogonality_defect(2) < 1e-13);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |f: fn(&mut ModelConfig)| {
            let mut c = ModelConfig::default();
            f(&mut c);
            DiscreteModel::build(c).unwrap_err()
        };
        assert_eq!(
            bad(|c| c.gamma = 0.0),
            Error::InvalidConfig("gamma must be positive".into())
        );
        assert!(matches!(bad(|c| c.tau = -1.0), Error::InvalidConfig(_)));
        assert!(matches!(bad(|c| c.dt = 0.0), Error::InvalidConfig(_)));
        assert!(matches!(bad(|c| c.dt = 2.0), Error::InvalidConfig(_)));
        assert!(matches!(bad(|c| c.n_quad = Some(48)), Error::InvalidConfig(_)));
        // 3N+1 is the minimum accepted resolution
        let mut c = ModelConfig::default();
        c.n_quad = Some(49);
        assert!(DiscreteModel::build(c).is_ok());
    }

    #[test]
    fn injected_sine_load() {
        let m = model(8, 1.0);
        let samples: Vec<f64> = m.quad_grid().iter().map(|&x| (PI * x).sin()).collect();
        let b = m.modal_load_from_samples(&samples).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-13);
        assert!(b.iter().skip(1).all(|x| x.abs() < 1e-13));
        let zero = m.modal_load_from_samples(&vec![0.0; samples.len()]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn centred_gaussian_has_no_even_modes() {
        let m = model(8, 1.0);
        let r = ShapeParams::gaussian_bump(0.5, 0.1).unwrap();
        let b = m.shape_modal_load(&r);
        for i in (1..8).step_by(2) {
            assert!(b[i].abs() < 1e-13, "b_{} = {}", i + 1, b[i]);
        }
    }

    #[test]
    fn cubic_of_first_mode() {
        let m = model(4, 1.0);
        let out = m.nonlinear_term(&unit(4, 0));
        let expected = [-0.75, 0.0, 0.25, 0.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(model(4, 0.0).nonlinear_term(&unit(4, 0)).iter().all(|&x| x == 0.0));
        assert!(m.nonlinear_term(&DVector::zeros(4)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cubic_jacobian_matches_central_difference() {
        let m = model(4, 1.0);
        let q = unit(4, 0);
        let dq = unit(4, 0);
        let eps = 1e-6;
        let fd = (m.nonlinear_term(&(&q + &dq * eps)) - m.nonlinear_term(&(&q - &dq * eps)))
            / (2.0 * eps);
        let exact = m.nonlinear_jacobian_apply(&q, &dq);
        assert!((&fd - &exact).norm() <= 1e-6 * exact.norm());
        assert!(m.nonlinear_jacobian_apply(&q, &DVector::zeros(4)).norm() == 0.0);
        assert!(model(4, 0.0).nonlinear_jacobian_apply(&q, &dq).norm() == 0.0);
    }

    #[test]
    fn dense_jacobian_agrees_with_action() {
        let m = model(5, 2.0);
        let q = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.05, -0.4]);
        let dq = DVector::from_vec(vec![1.0, 0.5, -0.25, 0.0, 2.0]);
        let dense = m.nonlinear_jacobian(&q).unwrap();
        assert!((&dense * &dq - m.nonlinear_jacobian_apply(&q, &dq)).norm() < 1e-13);
        assert!((&dense - dense.transpose()).norm() < 1e-13);
    }

    #[test]
    fn energy_examples() {
        let m = model(3, 1.0);
        let e1 = StateVector::from_modes(3, &[1.0], &[]).unwrap();
        assert!((m.energy_norm_sq(&e1) - (PI.powi(4) + 1.0) / 2.0).abs() < 1e-12);
        assert!((m.energy_norm_sq(&e1) - 49.2046).abs() < 1e-4);
        assert_eq!(m.energy_norm_sq(&StateVector::zeros(3)), 0.0);
        let v2 = StateVector::from_modes(3, &[], &[0.0, 1.0]).unwrap();
        assert_eq!(m.energy_norm_sq(&v2), 0.5);
    }

    #[test]
    fn physical_ingestion() {
        let m = model(8, 1.0);
        let w0: Vec<f64> = m.quad_grid().iter().map(|&x| (2.0 * PI * x).sin()).collect();
        let zeros = vec![0.0; w0.len()];
        let x = m.state_from_physical(&w0, &zeros).unwrap();
        assert!((&x.q - unit(8, 1)).norm() < 1e-13);
        assert!(x.v.norm() == 0.0);
        let z = m.state_from_physical(&zeros, &zeros).unwrap();
        assert_eq!(z, StateVector::zeros(8));
        assert!(matches!(
            m.state_from_physical(&w0[1..], &zeros),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mirrored_state_flips_even_modes() {
        let x = StateVector::from_modes(3, &[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        let y = x.mirrored();
        assert_eq!(y.q.as_slice(), &[1.0, -2.0, 3.0]);
        assert_eq!(y.v.as_slice(), &[4.0, -5.0, 6.0]);
    }
}
