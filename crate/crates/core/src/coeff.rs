//! Coefficient and forcing functions of time.
//!
//! Configs draw from a closed registry (constants, polynomials, sinusoids,
//! exponentials and their sums/products). Library callers can also wrap an
//! arbitrary closure with [`Coeff::custom`]; those cannot be serialized.
//!
//! In TOML:
//!
//! ```toml
//! a1 = 1.0
//! a0 = { poly = [0.0, 0.0, 1.0] }          # t²
//! force = { sin = { amp = 1.0, freq = 1.0 } }
//! q = { product = [0.5, { exp = { rate = -1.0 } }] }
//! ```

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    #[serde(default = "one")]
    pub amp: f64,
    #[serde(default = "one")]
    pub freq: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponential {
    #[serde(default = "one")]
    pub amp: f64,
    pub rate: f64,
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coeff {
    /// `Σ c_k t^k`, coefficients in ascending order.
    Poly(Vec<f64>),
    /// `amp · sin(freq · t + phase)`
    Sin(Sinusoid),
    /// `amp · cos(freq · t + phase)`
    Cos(Sinusoid),
    /// `amp · exp(rate · t)`
    Exp(Exponential),
    Sum(Vec<Coeff>),
    Product(Vec<Coeff>),
    #[serde(skip)]
    Custom(TimeFn),
    #[serde(untagged)]
    Const(f64),
}

impl Coeff {
    pub fn constant(c: f64) -> Self {
        Coeff::Const(c)
    }

    pub fn sin() -> Self {
        Coeff::Sin(Sinusoid { amp: 1.0, freq: 1.0, phase: 0.0 })
    }

    pub fn cos() -> Self {
        Coeff::Cos(Sinusoid { amp: 1.0, freq: 1.0, phase: 0.0 })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coeff::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coeff::Const(c) => *c,
            Coeff::Poly(cs) => cs.iter().rev().fold(0.0, |acc, &c| acc * t + c),
            Coeff::Sin(s) => s.amp * (s.freq * t + s.phase).sin(),
            Coeff::Cos(s) => s.amp * (s.freq * t + s.phase).cos(),
            Coeff::Exp(e) => e.amp * (e.rate * t).exp(),
            Coeff::Sum(parts) => parts.iter().map(|p| p.eval(t)).sum(),
            Coeff::Product(parts) => parts.iter().map(|p| p.eval(t)).product(),
            Coeff::Custom(f) => f(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coeff::Const(c) => *c == 0.0,
            Coeff::Poly(cs) => cs.iter().all(|&c| c == 0.0),
            _ => false,
        }
    }

    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.eval(t)).collect()
    }
}

impl From<f64> for Coeff {
    fn from(c: f64) -> Self {
        Coeff::Const(c)
    }
}

impl fmt::Debug for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Const(c) => write!(f, "Const({c})"),
            Coeff::Poly(cs) => f.debug_tuple("Poly").field(cs).finish(),
            Coeff::Sin(s) => f.debug_tuple("Sin").field(s).finish(),
            Coeff::Cos(s) => f.debug_tuple("Cos").field(s).finish(),
            Coeff::Exp(e) => f.debug_tuple("Exp").field(e).finish(),
            Coeff::Sum(p) => f.debug_tuple("Sum").field(p).finish(),
            Coeff::Product(p) => f.debug_tuple("Product").field(p).finish(),
            Coeff::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}
