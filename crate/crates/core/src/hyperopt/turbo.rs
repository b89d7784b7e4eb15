//! Single trust-region Bayesian optimization on the unit cube.
//!
//! Each iteration fits a GP to every observation so far, draws candidates
//! from a box around the incumbent whose per-dimension widths follow the GP
//! lengthscales, and picks a batch by Thompson sampling. The box doubles after
//! `success_tol` consecutive improving batches and halves after `failure_tol`
//! consecutive non-improving ones; the run stops when it falls below
//! `min_side` or the evaluation budget is spent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{Gp, KernelParams};

/// Objective value recorded for evaluations that failed.
pub const SENTINEL: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    pub center: Vec<f64>,
    pub side_length: f64,
    pub success_count: usize,
    pub failure_count: usize,
    pub success_tol: usize,
    pub failure_tol: usize,
    pub min_side: f64,
    pub max_side: f64,
}

impl TrustRegion {
    pub fn new(dim: usize, batch_size: usize) -> Self {
        Self {
            center: vec![0.5; dim],
            side_length: 0.8,
            success_count: 0,
            failure_count: 0,
            success_tol: 3,
            failure_tol: dim.div_ceil(batch_size.max(1)).max(1),
            min_side: 0.5f64.powi(7),
            max_side: 1.6,
        }
    }

    /// Record whether the last batch improved on the incumbent.
    pub fn update(&mut self, improved: bool) {
        if improved {
            self.success_count += 1;
            self.failure_count = 0;
        } else {
            self.failure_count += 1;
            self.success_count = 0;
        }
        if self.success_count >= self.success_tol {
            self.side_length = (2.0 * self.side_length).min(self.max_side);
            self.success_count = 0;
        } else if self.failure_count >= self.failure_tol {
            self.side_length /= 2.0;
            self.failure_count = 0;
        }
    }

    pub fn converged(&self) -> bool {
        self.side_length < self.min_side
    }

    /// Box around the center with widths `side · wᵢ`, where the weights are the
    /// lengthscales normalized to unit geometric mean.
    pub fn bounds(&self, lengthscales: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let d = self.center.len();
        let weights: Vec<f64> = match lengthscales {
            Some(ls) => {
                let geo = (ls.iter().map(|l| l.ln()).sum::<f64>() / d as f64).exp();
                ls.iter().map(|l| l / geo).collect()
            }
            None => vec![1.0; d],
        };
        let lo = (0..d).map(|i| (self.center[i] - 0.5 * self.side_length * weights[i]).max(0.0)).collect();
        let hi = (0..d).map(|i| (self.center[i] + 0.5 * self.side_length * weights[i]).min(1.0)).collect();
        (lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurboConfig {
    pub n_init: usize,
    pub batch_size: usize,
    pub max_evals: usize,
    pub seed: u64,
    /// Candidates per iteration; `None` picks `min(100·d, 2000)`.
    pub n_candidates: Option<usize>,
    pub gp_restarts: usize,
}

impl Default for TurboConfig {
    fn default() -> Self {
        Self { n_init: 10, batch_size: 1, max_evals: 60, seed: 0, n_candidates: None, gp_restarts: 5 }
    }
}

/// One objective evaluation, in unit-cube coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: f64,
    /// Side length of the trust region that proposed the point; `None` for
    /// the initial design.
    pub side_length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurboResult {
    pub history: Vec<Evaluation>,
    pub best_index: usize,
    pub final_region: TrustRegion,
}

impl TurboResult {
    pub fn best(&self) -> &Evaluation {
        &self.history[self.best_index]
    }

    /// Best value seen after each evaluation.
    pub fn incumbents(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history.iter().map(|e| {
            best = best.min(e.y);
            best
        }).collect()
    }
}

/// Scrambled Sobol points in `[lo, hi]`, starting at sequence index `offset`.
pub fn sobol_points(n: usize, lo: &[f64], hi: &[f64], offset: u32, seed: u32) -> Vec<Vec<f64>> {
    (0..n as u32)
        .map(|i| {
            (0..lo.len())
                .map(|j| lo[j] + (hi[j] - lo[j]) * f64::from(sobol_burley::sample(offset + i, j as u32, seed)))
                .collect()
        })
        .collect()
}

fn clean(y: f64) -> f64 {
    if y.is_finite() { y.min(SENTINEL) } else { SENTINEL }
}

/// Minimize `objective` over `[0, 1]^dim`. Non-finite values are recorded as
/// [`SENTINEL`]; the surrogate sees them clipped to the worst finite value.
pub fn minimize(dim: usize, objective: &(dyn Fn(&[f64]) -> f64 + Sync), cfg: &TurboConfig) -> TurboResult {
    use rayon::prelude::*;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sobol_seed: u32 = rng.random();
    let mut region = TrustRegion::new(dim, cfg.batch_size);
    let mut history: Vec<Evaluation> = Vec::with_capacity(cfg.max_evals);
    let push = |history: &mut Vec<Evaluation>, xs: Vec<Vec<f64>>, side: Option<f64>| {
        let ys: Vec<f64> = xs.par_iter().map(|x| clean(objective(x))).collect();
        for (x, y) in xs.into_iter().zip(ys) {
            history.push(Evaluation { index: history.len(), x, y, side_length: side });
        }
    };

    let n_init = cfg.n_init.min(cfg.max_evals);
    push(&mut history, sobol_points(n_init, &vec![0.0; dim], &vec![1.0; dim], 0, sobol_seed), None);

    let n_cand = cfg.n_candidates.unwrap_or((100 * dim).min(2000)).max(1);
    let prob_perturb = (20.0 / dim as f64).min(1.0);
    let mut warm: Option<KernelParams> = None;
    let mut round = 0u32;
    while history.len() < cfg.max_evals && !region.converged() && !history.is_empty() {
        let best = history.iter().min_by(|a, b| a.y.total_cmp(&b.y)).expect("nonempty");
        let best_y = best.y;
        region.center = best.x.clone();

        let worst_finite = history.iter().map(|e| e.y).filter(|&y| y < SENTINEL).fold(f64::NEG_INFINITY, f64::max);
        let xs: Vec<Vec<f64>> = history.iter().map(|e| e.x.clone()).collect();
        let ys: Vec<f64> = history
            .iter()
            .map(|e| if e.y >= SENTINEL && worst_finite.is_finite() { worst_finite } else { e.y })
            .collect();
        let gp = Gp::fit(&xs, &ys, cfg.gp_restarts, warm.as_ref(), &mut rng);
        if gp.is_none() {
            log::warn!("surrogate fit failed; sampling the trust region uniformly");
        }
        let (lo, hi) = region.bounds(gp.as_ref().map(|g| g.params().lengthscales.as_slice()));

        round += 1;
        let raw = sobol_points(n_cand, &lo, &hi, round * n_cand as u32, sobol_seed);
        let candidates: Vec<Vec<f64>> = raw
            .into_iter()
            .map(|p| {
                let mut c = region.center.clone();
                let mut moved = false;
                for j in 0..dim {
                    if rng.random::<f64>() < prob_perturb {
                        c[j] = p[j];
                        moved = true;
                    }
                }
                if !moved {
                    let j = rng.random_range(0..dim);
                    c[j] = p[j];
                }
                c
            })
            .collect();

        let take = cfg.batch_size.max(1).min(cfg.max_evals - history.len());
        let mut chosen: Vec<usize> = Vec::with_capacity(take);
        match &gp {
            Some(g) => {
                for draw in g.sample(&candidates, take, &mut rng) {
                    let pick = (0..candidates.len())
                        .filter(|i| !chosen.contains(i))
                        .min_by(|&a, &b| draw[a].total_cmp(&draw[b]))
                        .expect("enough candidates");
                    chosen.push(pick);
                }
            }
            None => {
                while chosen.len() < take.min(candidates.len()) {
                    let i = rng.random_range(0..candidates.len());
                    if !chosen.contains(&i) {
                        chosen.push(i);
                    }
                }
            }
        }
        warm = gp.map(|g| g.params().clone());
        let batch: Vec<Vec<f64>> = chosen.into_iter().map(|i| candidates[i].clone()).collect();
        let start = history.len();
        push(&mut history, batch, Some(region.side_length));
        let batch_best = history[start..].iter().map(|e| e.y).fold(f64::INFINITY, f64::min);
        region.update(batch_best < best_y - 1e-3 * best_y.abs());
    }

    let best_index = history.iter().min_by(|a, b| a.y.total_cmp(&b.y)).map(|e| e.index).unwrap_or(0);
    TurboResult { history, best_index, final_region: region }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_expands_and_shrinks() {
        let mut tr = TrustRegion::new(4, 2);
        assert_eq!(tr.failure_tol, 2);
        for _ in 0..3 {
            tr.update(true);
        }
        assert_eq!(tr.side_length, 1.6);
        tr.update(false);
        tr.update(false);
        assert_eq!(tr.side_length, 0.8);
        for _ in 0..30 {
            tr.update(false);
        }
        assert!(tr.converged());
    }

    #[test]
    fn bounds_follow_lengthscales() {
        let tr = TrustRegion { center: vec![0.5, 0.5], side_length: 0.4, ..TrustRegion::new(2, 1) };
        let (lo, hi) = tr.bounds(Some(&[4.0, 1.0]));
        // weights 2 and 0.5
        assert!((hi[0] - lo[0] - 0.8).abs() < 1e-12);
        assert!((hi[1] - lo[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sobol_design_in_box() {
        let pts = sobol_points(64, &[0.2, -1.0], &[0.4, 1.0], 0, 7);
        assert!(pts.iter().all(|p| (0.2..=0.4).contains(&p[0]) && (-1.0..=1.0).contains(&p[1])));
        let left = pts.iter().filter(|p| p[0] < 0.3).count();
        assert!((28..=36).contains(&left));
    }

    #[test]
    fn flat_objective_shrinks_to_min_side() {
        let cfg = TurboConfig { n_init: 4, max_evals: 200, seed: 3, ..TurboConfig::default() };
        let res = minimize(1, &|_x: &[f64]| 1.0, &cfg);
        assert!(res.final_region.converged());
        assert!(res.history.len() < 200);
    }

    #[test]
    fn failures_become_sentinel() {
        let cfg = TurboConfig { n_init: 5, max_evals: 8, seed: 1, ..TurboConfig::default() };
        let res = minimize(1, &|x: &[f64]| if x[0] > 0.5 { f64::NAN } else { x[0] }, &cfg);
        assert!(res.history.iter().any(|e| e.y == SENTINEL));
        assert!(res.best().y < 0.5);
        assert_eq!(res.history.len(), 8);
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = TurboConfig { n_init: 5, max_evals: 15, seed: 9, ..TurboConfig::default() };
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
        assert_eq!(minimize(2, &f, &cfg), minimize(2, &f, &cfg));
    }
}
