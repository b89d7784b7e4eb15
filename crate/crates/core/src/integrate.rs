//! Classical explicit integrators used as baselines and reference solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An explicit first-order system `ẏ = F(t, y)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F> VectorField for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.1)(t, y, dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

/// States at each point of `times`; `states[n]` has one entry per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Series of component `i`.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }
}

fn step(method: Method, field: &dyn VectorField, t: f64, h: f64, y: &mut [f64], work: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = work;
    field.rhs(t, y, k1);
    match method {
        Method::Euler => {
            for (yi, k) in y.iter_mut().zip(k1.iter()) {
                *yi += h * k;
            }
        }
        Method::Rk4 => {
            for i in 0..y.len() {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            field.rhs(t + 0.5 * h, tmp, k2);
            for i in 0..y.len() {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            field.rhs(t + 0.5 * h, tmp, k3);
            for i in 0..y.len() {
                tmp[i] = y[i] + h * k3[i];
            }
            field.rhs(t + h, tmp, k4);
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
}

/// Integrate from `times[0]` and record the state at every grid point.
/// Each grid interval is split into `substeps` equal steps.
pub fn integrate_on_grid(
    method: Method,
    field: &dyn VectorField,
    y0: &[f64],
    times: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    if y0.len() != field.dim() {
        return Err(Error::DimensionMismatch(format!("{} initial values for a {}-d system", y0.len(), field.dim())));
    }
    if times.is_empty() || substeps == 0 {
        return Err(Error::InvalidGrid("empty grid or zero substeps".into()));
    }
    let d = y0.len();
    let mut work = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut y = y0.to_vec();
    let mut states = Vec::with_capacity(times.len());
    states.push(y.clone());
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for j in 0..substeps {
            step(method, field, w[0] + j as f64 * h, h, &mut y, &mut work);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: w[1] });
        }
        states.push(y.clone());
    }
    Ok(Trajectory { times: times.to_vec(), states })
}

/// Forward Euler on the uniform grid `t_start, t_start + dt, …`.
pub fn euler_integrate(field: &dyn VectorField, y0: &[f64], dt: f64, t_range: (f64, f64)) -> Result<Trajectory> {
    let times = crate::reservoir::time_grid(t_range.0, t_range.1, dt)?;
    integrate_on_grid(Method::Euler, field, y0, &times, 1)
}

/// Classical fourth-order Runge–Kutta on the uniform grid.
pub fn rk4_integrate(field: &dyn VectorField, y0: &[f64], dt: f64, t_range: (f64, f64)) -> Result<Trajectory> {
    let times = crate::reservoir::time_grid(t_range.0, t_range.1, dt)?;
    integrate_on_grid(Method::Rk4, field, y0, &times, 1)
}
