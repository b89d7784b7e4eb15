//! Closed-form solutions for the constant-coefficient problems, used as the
//! error reference when available.

use crate::bernoulli::BernoulliOde;
use crate::coeff::Coeff;
use crate::linear::LinearOde;

/// Particular solution of `ẏ + k y = c(t) / a1` for a constant, sine or
/// cosine forcing term (and sums of them).
fn particular(force: &Coeff, k: f64, a1: f64) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    match force {
        Coeff::Const(c) => {
            let c = *c / a1;
            if k == 0.0 {
                Some(Box::new(move |t| c * t))
            } else {
                Some(Box::new(move |_| c / k))
            }
        }
        Coeff::Poly(cs) if cs.len() <= 1 => particular(&Coeff::Const(cs.first().copied().unwrap_or(0.0)), k, a1),
        Coeff::Sin(s) | Coeff::Cos(s) => {
            let shift = if matches!(force, Coeff::Cos(_)) { std::f64::consts::FRAC_PI_2 } else { 0.0 };
            let (amp, w, phase) = (s.amp / a1, s.freq, s.phase + shift);
            let den = k * k + w * w;
            if den == 0.0 {
                return particular(&Coeff::Const(amp * phase.sin()), k, 1.0);
            }
            Some(Box::new(move |t| amp * (k * (w * t + phase).sin() - w * (w * t + phase).cos()) / den))
        }
        Coeff::Sum(parts) => {
            let ps: Vec<_> = parts.iter().map(|p| particular(p, k, a1)).collect::<Option<_>>()?;
            Some(Box::new(move |t| ps.iter().map(|p| p(t)).sum()))
        }
        _ => None,
    }
}

fn constant(c: &Coeff) -> Option<f64> {
    match c {
        Coeff::Const(v) => Some(*v),
        Coeff::Poly(cs) if cs.len() <= 1 => Some(cs.first().copied().unwrap_or(0.0)),
        _ => None,
    }
}

pub type Solution = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `y(ψ₀, t)` when `a1`, `a0` are constant and the forcing is a sum of
/// constants and sinusoids; `None` otherwise.
pub fn linear_exact(ode: &LinearOde) -> Option<Solution> {
    let a1 = constant(&ode.a1)?;
    let a0 = constant(&ode.a0)?;
    if a1 == 0.0 {
        return None;
    }
    let k = a0 / a1;
    let p = particular(&ode.force, k, a1)?;
    let t0 = ode.t_range.0;
    Some(Box::new(move |psi0, t| p(t) + (psi0 - p(t0)) * (-k * (t - t0)).exp()))
}

/// `y(ψ₀, t)` for `a1 ẏ + a0 y + q y² = 0` with constant coefficients.
pub fn bernoulli_exact(ode: &BernoulliOde) -> Option<Solution> {
    let a1 = constant(&ode.a1)?;
    let a0 = constant(&ode.a0)?;
    let q = constant(&ode.q)?;
    if a1 == 0.0 || !ode.force.is_zero() {
        return None;
    }
    let (k, r, t0) = (a0 / a1, q / a1, ode.t_range.0);
    Some(Box::new(move |psi0, t| {
        if psi0 == 0.0 {
            return 0.0;
        }
        let s = t - t0;
        // 1/y satisfies u̇ = k u + r
        let inv = if k == 0.0 { 1.0 / psi0 + r * s } else { (1.0 / psi0 + r / k) * (k * s).exp() - r / k };
        1.0 / inv
    }))
}
