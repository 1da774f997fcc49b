//! Monotone warping `g` from latent GP values to standard deviations.
//!
//! The parametric family is a positive combination of softplus terms
//!
//! ```text
//! g(x) = floor + sum_j a_j * log(1 + exp(b_j (x + c_j)))
//! ```
//!
//! which is smooth, strictly increasing, tends to `floor` as `x -> -inf` and
//! grows like `(sum_j a_j b_j) x` as `x -> +inf`. The exponential warp `e^x`
//! has no trainable parameters.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const MAX_BRACKET_EXPANSIONS: usize = 200;
const MAX_SOLVER_ITERATIONS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftplusComponent {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub components: Vec<SoftplusComponent>,
    pub floor: f64,
}

impl WarpParams {
    pub fn new(components: Vec<SoftplusComponent>, floor: f64) -> Result<Self> {
        let w = WarpParams { components, floor };
        w.validate()?;
        Ok(w)
    }

    /// Single-component warp scaled to the data: `a = sd(y)`, `b = 1`, `c = 0`,
    /// and the floor from [`floor_from_observations`].
    pub fn initial_for(y: &[f64]) -> Result<Self> {
        let floor = floor_from_observations(y)?;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = if var > 0.0 { var.sqrt() } else { 10.0 * floor };
        WarpParams::new(
            vec![SoftplusComponent {
                a: sd,
                b: 1.0,
                c: 0.0,
            }],
            floor,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter(
                "warp needs at least one component".into(),
            ));
        }
        for (j, comp) in self.components.iter().enumerate() {
            let pos = |v: f64| v.is_finite() && v > 0.0;
            if !pos(comp.a) || !pos(comp.b) || !comp.c.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "warp component {j} invalid (a={}, b={}, c={})",
                    comp.a, comp.b, comp.c
                )));
            }
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "warp floor {} must be >= 0",
                self.floor
            )));
        }
        Ok(())
    }

    /// `g(x) - floor`, computed without the floor so it keeps full relative
    /// precision deep in the left tail.
    fn excess(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.a * softplus(c.b * (x + c.c)))
            .sum()
    }

    fn slope(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.a * c.b * logistic(c.b * (x + c.c)))
            .sum()
    }

    fn curvature(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let z = c.b * (x + c.c);
                c.a * c.b * c.b * logistic(z) * logistic(-z)
            })
            .sum()
    }
}

/// One tenth of the smallest nonzero `|y|`.
pub fn floor_from_observations(y: &[f64]) -> Result<f64> {
    y.iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0 && v.is_finite())
        .min_by(|a, b| a.total_cmp(b))
        .map(|m| 0.1 * m)
        .ok_or_else(|| Error::DegenerateData("all observations are zero".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpKind {
    Parametric(WarpParams),
    Exponential,
}

/// Value, first and second derivative of `g` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpJet {
    pub value: f64,
    pub deriv: f64,
    pub curvature: f64,
}

impl WarpKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            WarpKind::Parametric(p) => p.validate(),
            WarpKind::Exponential => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WarpKind::Parametric(p) => p.floor + p.excess(x),
            WarpKind::Exponential => x.exp(),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            WarpKind::Parametric(p) => p.slope(x),
            WarpKind::Exponential => x.exp(),
        }
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        match self {
            WarpKind::Parametric(p) => p.curvature(x),
            WarpKind::Exponential => x.exp(),
        }
    }

    pub fn jet(&self, x: f64) -> WarpJet {
        WarpJet {
            value: self.eval(x),
            deriv: self.deriv(x),
            curvature: self.second_deriv(x),
        }
    }

    /// Essential infimum of `g` over the real line.
    pub fn floor(&self) -> f64 {
        match self {
            WarpKind::Parametric(p) => p.floor,
            WarpKind::Exponential => 0.0,
        }
    }

    pub fn inverse(&self, sigma: f64) -> Result<f64> {
        let inf = self.floor();
        if !(sigma > inf) || !sigma.is_finite() {
            return Err(Error::OutOfRange {
                value: sigma,
                infimum: inf,
            });
        }
        match self {
            WarpKind::Exponential => Ok(sigma.ln()),
            WarpKind::Parametric(p) => invert_parametric(p, sigma),
        }
    }

    /// `F(a) = Phi(g^{-1}(a))`, taking the latent marginal as standard normal.
    pub fn marginal_cdf(&self, a: f64) -> f64 {
        if a.is_nan() {
            return f64::NAN;
        }
        if a == f64::INFINITY {
            return 1.0;
        }
        match self.inverse(a) {
            Ok(x) => std_normal_cdf(x),
            Err(_) => 0.0,
        }
    }

    /// Change-of-variables density `phi(g^{-1}(a)) / g'(g^{-1}(a))`.
    pub fn marginal_pdf(&self, a: f64) -> f64 {
        match self.inverse(a) {
            Ok(x) => {
                let d = self.deriv(x);
                if d > 0.0 {
                    std_normal_pdf(x) / d
                } else {
                    0.0
                }
            }
            Err(_) => 0.0,
        }
    }

    /// Number of trainable warp parameters.
    pub fn trainable_len(&self) -> usize {
        match self {
            WarpKind::Parametric(p) => 3 * p.components.len(),
            WarpKind::Exponential => 0,
        }
    }
}

/// Solves `g(x) = sigma` in the transformed variable `log(g(x) - floor)`,
/// which is close to linear in both tails. Newton steps are kept inside the
/// bracket and replaced by bisection whenever they leave it.
fn invert_parametric(p: &WarpParams, sigma: f64) -> Result<f64> {
    let target = (sigma - p.floor).ln();
    let residual = |x: f64| p.excess(x).ln() - target;
    let out_of_range = || Error::OutOfRange {
        value: sigma,
        infimum: p.floor,
    };

    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut expansions = 0;
    while residual(lo) > 0.0 {
        lo *= 2.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(out_of_range());
        }
    }
    while residual(hi) < 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(out_of_range());
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_SOLVER_ITERATIONS {
        let excess = p.excess(x);
        let r = excess.ln() - target;
        if r == 0.0 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dr = p.slope(x) / excess;
        let mut next = x - r / dr;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        let scale = 1.0 + x.abs();
        if step <= 1e-15 * scale || hi - lo <= 1e-15 * scale {
            return Ok(x);
        }
    }
    Ok(x)
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.max(0.0) + (-z.abs()).exp().ln_1p()
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn warp_eval(w: &WarpKind, x: f64) -> f64 {
    w.eval(x)
}

pub fn warp_deriv(w: &WarpKind, x: f64) -> f64 {
    w.deriv(x)
}

pub fn warp_inverse(w: &WarpKind, sigma: f64) -> Result<f64> {
    w.inverse(sigma)
}

pub fn marginal_cdf(w: &WarpKind, a: f64) -> f64 {
    w.marginal_cdf(a)
}

pub fn marginal_pdf(w: &WarpKind, a: f64) -> f64 {
    w.marginal_pdf(a)
}
