//! Actuator shape families `r ↦ b(x, r)` and their parameter derivatives.
//!
//! Every family is differentiable in its parameters with closed-form
//! partials, so the load derivative used by the shape gradient never needs
//! finite differencing.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the cosine blend between plateau and exterior of a
/// [`ShapeFamily::CosinePatch`].
pub const PATCH_BLEND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    /// `exp(-(x-c)^2 / (2 s^2))`, parameters `(c, s)`.
    GaussianBump,
    /// Unit plateau of half-width `ℓ` centred at `c` with a cosine roll-off,
    /// parameters `(c, ℓ)`. Only C¹: where a quadrature node sits on a blend
    /// edge (`|x - c| = ℓ ± ε`) central differences of `J` lose accuracy,
    /// though the analytic derivative is exact.
    CosinePatch,
    /// `Σ r_k ψ_k(x)` over cubic B-splines on a uniform grid of centres.
    Spline,
}

impl ShapeFamily {
    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::GaussianBump => "gaussian-bump",
            ShapeFamily::CosinePatch => "cosine-patch",
            ShapeFamily::Spline => "spline",
        }
    }

    /// Fixed parameter count, `None` for the free-form spline family.
    pub fn arity(self) -> Option<usize> {
        match self {
            ShapeFamily::GaussianBump | ShapeFamily::CosinePatch => Some(2),
            ShapeFamily::Spline => None,
        }
    }

    /// Box used when a config does not give explicit bounds.
    pub fn default_bounds(self, m: usize) -> Vec<(f64, f64)> {
        match self {
            ShapeFamily::GaussianBump => vec![(0.1, 0.9), (0.02, 0.3)],
            ShapeFamily::CosinePatch => vec![(0.1, 0.9), (0.06, 0.4)],
            ShapeFamily::Spline => vec![(-5.0, 5.0); m],
        }
    }

    pub fn default_values(self) -> Option<Vec<f64>> {
        match self {
            ShapeFamily::GaussianBump => Some(vec![0.5, 0.1]),
            ShapeFamily::CosinePatch => Some(vec![0.5, 0.18]),
            ShapeFamily::Spline => None,
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-bump" => Ok(ShapeFamily::GaussianBump),
            "cosine-patch" => Ok(ShapeFamily::CosinePatch),
            "spline" => Ok(ShapeFamily::Spline),
            other => Err(Error::InvalidShape(format!("unknown family `{other}`"))),
        }
    }
}

/// A point `r` of the admissible design box `K_ad`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    family: ShapeFamily,
    values: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl ShapeParams {
    pub fn new(family: ShapeFamily, values: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        match family.arity() {
            Some(m) if values.len() != m => {
                return Err(Error::InvalidShape(format!(
                    "{family} takes {m} parameters, got {}",
                    values.len()
                )))
            }
            None if values.len() < 2 => {
                return Err(Error::InvalidShape(
                    "spline needs at least 2 coefficients".into(),
                ))
            }
            _ => {}
        }
        if bounds.len() != values.len() {
            return Err(Error::InvalidShape(format!(
                "{} bounds given for {} parameters",
                bounds.len(),
                values.len()
            )));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidShape(format!(
                    "bound {k} is not a finite interval: [{lo}, {hi}]"
                )));
            }
        }
        if family != ShapeFamily::Spline && bounds[1].0 <= 0.0 {
            return Err(Error::InvalidShape(format!(
                "{family} width must be bounded away from zero"
            )));
        }
        let shape = ShapeParams {
            family,
            values: Vec::new(),
            bounds,
        };
        shape.with_values(values)
    }

    pub fn gaussian_bump(center: f64, width: f64) -> Result<Self> {
        let family = ShapeFamily::GaussianBump;
        Self::new(family, vec![center, width], family.default_bounds(2))
    }

    pub fn cosine_patch(center: f64, half_width: f64) -> Result<Self> {
        let family = ShapeFamily::CosinePatch;
        Self::new(family, vec![center, half_width], family.default_bounds(2))
    }

    pub fn spline(coefficients: Vec<f64>) -> Result<Self> {
        let family = ShapeFamily::Spline;
        let bounds = family.default_bounds(coefficients.len());
        Self::new(family, coefficients, bounds)
    }

    /// Same family and box, new parameter values. Rejects points outside the box.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.bounds.len() {
            return Err(Error::InvalidShape(format!(
                "expected {} parameters, got {}",
                self.bounds.len(),
                values.len()
            )));
        }
        for (k, (&r, &(lo, hi))) in values.iter().zip(&self.bounds).enumerate() {
            if !(lo <= r && r <= hi) {
                return Err(Error::InvalidShape(format!(
                    "parameter {k} = {r} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(ShapeParams {
            family: self.family,
            values,
            bounds: self.bounds.clone(),
        })
    }

    pub fn family(&self) -> ShapeFamily {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `b(x, r)`.
    pub fn eval(&self, x: f64) -> f64 {
        let r = &self.values;
        match self.family {
            ShapeFamily::GaussianBump => gaussian(x, r[0], r[1]),
            ShapeFamily::CosinePatch => patch(x, r[0], r[1]).0,
            ShapeFamily::Spline => {
                let spacing = spline_spacing(r.len());
                r.iter()
                    .enumerate()
                    .map(|(k, &rk)| rk * spline_basis(x, k, spacing))
                    .sum()
            }
        }
    }

    /// `∂b/∂r_k (x, r)`.
    pub fn partial(&self, x: f64, k: usize) -> f64 {
        let r = &self.values;
        match self.family {
            ShapeFamily::GaussianBump => {
                let (c, s) = (r[0], r[1]);
                let b = gaussian(x, c, s);
                let d = x - c;
                match k {
                    0 => b * d / (s * s),
                    1 => b * d * d / (s * s * s),
                    _ => panic!("gaussian-bump has 2 parameters, asked for {k}"),
                }
            }
            ShapeFamily::CosinePatch => {
                let (c, l) = (r[0], r[1]);
                let (_, ds) = patch(x, c, l);
                // ds = ∂b/∂(distance); distance = |x - c|
                match k {
                    0 => -ds * sign(x - c),
                    1 => -ds,
                    _ => panic!("cosine-patch has 2 parameters, asked for {k}"),
                }
            }
            ShapeFamily::Spline => spline_basis(x, k, spline_spacing(r.len())),
        }
    }

    /// Directional derivative `b'(x, r; r̃)`.
    pub fn directional(&self, x: f64, dir: &[f64]) -> f64 {
        dir.iter()
            .enumerate()
            .filter(|(_, &d)| d != 0.0)
            .map(|(k, &d)| d * self.partial(x, k))
            .sum()
    }

    /// Samples `b(x_j, r)` on the given points.
    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// Reflection `x ↦ 1 - x` of the design. Only defined for families whose
    /// mirror image stays in the family and the box.
    pub fn mirrored(&self) -> Result<Self> {
        let values = match self.family {
            ShapeFamily::GaussianBump | ShapeFamily::CosinePatch => {
                vec![1.0 - self.values[0], self.values[1]]
            }
            ShapeFamily::Spline => self.values.iter().rev().copied().collect(),
        };
        self.with_values(values)
    }
}

/// Samples of `b(x_j, r)` on a quadrature grid.
pub fn eval_shape(r: &ShapeParams, grid: &[f64]) -> Vec<f64> {
    r.sample(grid)
}

fn gaussian(x: f64, c: f64, s: f64) -> f64 {
    let d = x - c;
    (-d * d / (2.0 * s * s)).exp()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Value of the cosine patch and its derivative with respect to the
/// distance from the centre.
fn patch(x: f64, c: f64, half_width: f64) -> (f64, f64) {
    let d = (x - c).abs();
    let inner = half_width - PATCH_BLEND;
    let outer = half_width + PATCH_BLEND;
    if d <= inner {
        (1.0, 0.0)
    } else if d >= outer {
        (0.0, 0.0)
    } else {
        let s = (d - inner) / (2.0 * PATCH_BLEND);
        let value = 0.5 * (1.0 + (PI * s).cos());
        let slope = -0.5 * PI * (PI * s).sin() / (2.0 * PATCH_BLEND);
        (value, slope)
    }
}

fn spline_spacing(m: usize) -> f64 {
    1.0 / (m - 1) as f64
}

/// Cardinal cubic B-spline centred at `k·h` with knot spacing `h`.
fn spline_basis(x: f64, k: usize, h: f64) -> f64 {
    let t = ((x - k as f64 * h) / h).abs();
    if t < 1.0 {
        2.0 / 3.0 - t * t + 0.5 * t * t * t
    } else if t < 2.0 {
        let w = 2.0 - t;
        w * w * w / 6.0
    } else {
        0.0
    }
}
