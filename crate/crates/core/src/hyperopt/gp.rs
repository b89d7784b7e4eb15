//! Gaussian-process regression with an anisotropic squared-exponential
//! kernel on inputs in `[0, 1]^d`.
//!
//! Targets are standardized before fitting. Kernel hyperparameters are fit by
//! minimizing the negative log marginal likelihood with projected Adam steps
//! in log space, restarted from several points.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

/// Added to the kernel diagonal on top of the fitted noise.
pub const JITTER: f64 = 1e-6;

const LENGTHSCALE_BOUNDS: (f64, f64) = (0.005, 2.0);
const SIGNAL_BOUNDS: (f64, f64) = (0.05, 20.0);
const NOISE_BOUNDS: (f64, f64) = (1e-6, 0.2);
const FIT_STEPS: usize = 40;
const FIT_RATE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl KernelParams {
    fn to_theta(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        t.push(self.signal_var.ln());
        t.push(self.noise_var.ln());
        t
    }

    fn from_theta(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            lengthscales: theta[..d].iter().map(|v| v.exp()).collect(),
            signal_var: theta[d].exp(),
            noise_var: theta[d + 1].exp(),
        }
    }

    fn log_bounds(d: usize) -> Vec<(f64, f64)> {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        let mut b = vec![ln(LENGTHSCALE_BOUNDS); d];
        b.push(ln(SIGNAL_BOUNDS));
        b.push(ln(NOISE_BOUNDS));
        b
    }
}

fn kernel_matrix(x: &[Vec<f64>], p: &KernelParams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = cross(&x[i], &x[j], p);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[inline]
fn cross(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(&p.lengthscales).map(|((u, v), l)| ((u - v) / l).powi(2)).sum();
    p.signal_var * (-0.5 * r2).exp()
}

/// Negative log marginal likelihood and its gradient in log parameters.
fn nll_and_grad(x: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let p = KernelParams::from_theta(theta);
    let n = x.len();
    let d = p.lengthscales.len();
    let k = kernel_matrix(x, &p);
    let mut ky = k.clone();
    for i in 0..n {
        ky[(i, i)] += p.noise_var + JITTER;
    }
    let chol = Cholesky::new(ky)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let nll = 0.5 * y.dot(&alpha) + 0.5 * log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    // W = ααᵀ − K⁻¹
    let mut w = -chol.inverse();
    w.ger(1.0, &alpha, &alpha, 1.0);
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let wk = w[(i, j)] * k[(i, j)];
            grad[d] += wk;
            for (l, g) in grad.iter_mut().take(d).enumerate() {
                let diff = x[i][l] - x[j][l];
                *g += wk * diff * diff / (p.lengthscales[l] * p.lengthscales[l]);
            }
        }
    }
    grad[d + 1] = (0..n).map(|i| w[(i, i)]).sum::<f64>() * p.noise_var;
    for g in grad.iter_mut() {
        *g *= -0.5;
    }
    nll.is_finite().then_some((nll, grad))
}

fn descend(x: &[Vec<f64>], y: &DVector<f64>, start: Vec<f64>, bounds: &[(f64, f64)]) -> Option<(f64, Vec<f64>)> {
    let mut theta = start;
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for step in 1..=FIT_STEPS {
        let Some((f, g)) = nll_and_grad(x, y, &theta) else { break };
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, theta.clone()));
        }
        let (c1, c2) = (1.0 - 0.9f64.powi(step as i32), 1.0 - 0.999f64.powi(step as i32));
        for i in 0..theta.len() {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            theta[i] = (theta[i] - FIT_RATE * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8)).clamp(bounds[i].0, bounds[i].1);
        }
    }
    if let Some((f, _)) = nll_and_grad(x, y, &theta) {
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, theta));
        }
    }
    best
}

/// Fitted surrogate.
pub struct Gp {
    x: Vec<Vec<f64>>,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
}

impl Gp {
    /// Fits hyperparameters from `restarts` starting points (the first is
    /// `warm` when given, else a fixed default) and returns `None` when no
    /// start yields a positive-definite kernel.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        restarts: usize,
        warm: Option<&KernelParams>,
        rng: &mut impl Rng,
    ) -> Option<Self> {
        if x.is_empty() || x.len() != y.len() {
            return None;
        }
        let d = x[0].len();
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));

        let bounds = KernelParams::log_bounds(d);
        let default = KernelParams { lengthscales: vec![0.5; d], signal_var: 1.0, noise_var: 1e-3 };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for r in 0..restarts.max(1) {
            let start = match (r, warm) {
                (0, Some(w)) => w.to_theta(),
                (0, None) => default.to_theta(),
                _ => bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect(),
            };
            if let Some((f, theta)) = descend(x, &ys, start, &bounds) {
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, theta));
                }
            }
        }
        let (_, theta) = best?;
        let params = KernelParams::from_theta(&theta);
        let mut ky = kernel_matrix(x, &params);
        for i in 0..x.len() {
            ky[(i, i)] += params.noise_var + JITTER;
        }
        let chol = Cholesky::new(ky)?;
        let alpha = chol.solve(&ys);
        Some(Self { x: x.to_vec(), params, chol, alpha, y_mean, y_std })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Posterior mean and covariance of the latent function at `xs`, in the
    /// units of the training targets.
    pub fn posterior(&self, xs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let m = xs.len();
        let n = self.x.len();
        let ks = DMatrix::from_fn(n, m, |i, j| cross(&self.x[i], &xs[j], &self.params));
        let mean = ks.tr_mul(&self.alpha).map(|v| v * self.y_std + self.y_mean);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("triangular factor");
        let mut cov = kernel_matrix(xs, &self.params) - v.tr_mul(&v);
        cov *= self.y_std * self.y_std;
        (mean, cov)
    }

    /// Joint posterior draws at `xs`, one vector per sample.
    pub fn sample(&self, xs: &[Vec<f64>], samples: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
        let (mean, cov) = self.posterior(xs);
        let m = xs.len();
        let scale = cov.diagonal().max().max(1e-12);
        let mut jitter = 1e-8 * scale;
        let l = loop {
            let mut c = cov.clone();
            for i in 0..m {
                c[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(c) {
                break ch.unpack();
            }
            jitter *= 10.0;
            if jitter > scale {
                // Fall back to independent marginals.
                break DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(0.0).sqrt()));
            }
        };
        (0..samples)
            .map(|_| {
                let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                &mean + &l * z
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0, ((i * 7) % 12) as f64 / 11.0]).collect();
        let y = x.iter().map(|p| (3.0 * p[0]).sin() + 0.5 * p[1]).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_differences() {
        let (x, y) = data();
        let y = DVector::from_vec(y);
        let theta = vec![(0.3f64).ln(), (0.7f64).ln(), (1.4f64).ln(), (0.01f64).ln()];
        let (_, g) = nll_and_grad(&x, &y, &theta).unwrap();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (nll_and_grad(&x, &y, &tp).unwrap().0 - nll_and_grad(&x, &y, &tm).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn interpolates_training_data() {
        let (x, y) = data();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gp = Gp::fit(&x, &y, 5, None, &mut rng).unwrap();
        let (mean, cov) = gp.posterior(&x);
        for i in 0..y.len() {
            assert!((mean[i] - y[i]).abs() < 0.05, "{} vs {}", mean[i], y[i]);
            assert!(cov[(i, i)] < 0.05);
        }
    }

    #[test]
    fn constant_targets_are_fine() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gp = Gp::fit(&x, &[3.0; 5], 3, None, &mut rng).unwrap();
        let draws = gp.sample(&[vec![0.1], vec![0.6]], 4, &mut rng);
        assert_eq!(draws.len(), 4);
        assert!(draws.iter().all(|d| d.iter().all(|v| v.is_finite())));
        assert!((gp.posterior(&[vec![0.5]]).0[0] - 3.0).abs() < 1e-6);
    }
}
