//! Deterministic sample sets for every `∀`-quantified check.

use crate::trajectory::Side;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Tunable sizes and tolerances; every field can be overridden per problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub seed: u64,
    /// Radius of the local ball `B_δ(0)`.
    pub delta: f64,
    /// Radii of the global tiers; the largest is `R_global`.
    pub radii: Vec<f64>,
    /// Radii for the reported δ sweep.
    pub delta_sweep: Vec<f64>,
    /// Uniform points on `[t0, t1]`.
    pub t_points: usize,
    /// Geometrically clustered points on each side of corners and endpoints.
    pub cluster_points: usize,
    /// Grid points per axis in every radius shell (n = 1).
    pub ball_grid: usize,
    /// Seeded uniform draws per radius shell.
    pub ball_random: usize,
    /// Seeded draws of θ in (0, 1) on top of the fixed grid.
    pub theta_random: usize,
    pub pass_tol: f64,
    pub fail_tol: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            seed: DEFAULT_SEED,
            delta: 0.5,
            radii: vec![1.0, 3.0, 10.0],
            delta_sweep: vec![0.1, 0.25, 0.5, 1.0],
            t_points: 512,
            cluster_points: 16,
            ball_grid: 7,
            ball_random: 4,
            theta_random: 4,
            pass_tol: 1e-9,
            fail_tol: 1e-7,
        }
    }
}

impl PlanConfig {
    pub fn r_global(&self) -> f64 {
        self.radii.iter().copied().fold(self.delta, f64::max)
    }
}

/// Time node with the side used for one-sided limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TNode {
    pub t: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub config: PlanConfig,
    pub n: usize,
    pub interval: (f64, f64),
    pub corners: Vec<f64>,
    /// Sorted by `(t, side)`; corners appear once per side.
    pub t_grid: Vec<TNode>,
    /// Sorted by Euclidean norm; the zero vector comes first.
    pub xi: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    #[serde(skip)]
    digest: String,
}

fn grid_per_axis(n: usize, base: usize) -> usize {
    match n {
        0 | 1 => base,
        2 => base.min(5),
        _ => 3,
    }
}

/// Grid and random draws inside the ball of each radius.
fn ball_samples(n: usize, radii: &[f64], cfg: &PlanConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; n]];
    let g = grid_per_axis(n, cfg.ball_grid.max(2));
    for &r in radii {
        let total = g.pow(n as u32);
        for idx in 0..total {
            let mut k = idx;
            let mut v = vec![0.0; n];
            for c in v.iter_mut() {
                let j = k % g;
                k /= g;
                *c = -r + 2.0 * r * j as f64 / (g - 1) as f64;
            }
            let norm = crate::scalar::norm(&v);
            if norm > r {
                v.iter_mut().for_each(|c| *c *= r / norm);
            }
            out.push(v);
        }
        for _ in 0..cfg.ball_random {
            // uniform direction times radius with density ∝ ρ^{n-1}
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = crate::scalar::norm(&v).max(1e-300);
            let rho = r * rng.gen::<f64>().powf(1.0 / n as f64);
            v.iter_mut().for_each(|c| *c *= rho / norm);
            out.push(v);
        }
    }
    let key = |v: &Vec<f64>| crate::scalar::norm(v);
    out.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| cmp_vec(a, b)));
    out.dedup();
    out
}

fn cmp_vec(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

fn side_rank(s: Side) -> u8 {
    match s {
        Side::Left => 0,
        Side::Auto => 1,
        Side::Right => 2,
    }
}

impl SamplingPlan {
    /// Builds the plan for an `n`-dimensional problem on `[t0, t1]` whose
    /// candidate has the given corner points.
    pub fn build(config: PlanConfig, n: usize, t0: f64, t1: f64, corners: &[f64]) -> SamplingPlan {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let len = t1 - t0;
        let mut nodes: Vec<TNode> = Vec::new();
        let m = config.t_points.max(2);
        for k in 0..m {
            let t = if k == m - 1 { t1 } else { t0 + len * k as f64 / (m - 1) as f64 };
            nodes.push(TNode { t, side: Side::Auto });
        }
        let offsets: Vec<f64> = (0..config.cluster_points).map(|k| len * (-((k + 3) as f64)).exp2()).collect();
        for &d in &offsets {
            nodes.push(TNode { t: t0 + d, side: Side::Auto });
            nodes.push(TNode { t: t1 - d, side: Side::Auto });
        }
        for &tau in corners {
            for &d in &offsets {
                nodes.push(TNode { t: tau - d, side: Side::Auto });
                nodes.push(TNode { t: tau + d, side: Side::Auto });
            }
        }
        // a corner is never sampled with the auto side
        nodes.retain(|p| !corners.contains(&p.t));
        for &tau in corners {
            nodes.push(TNode { t: tau, side: Side::Left });
            nodes.push(TNode { t: tau, side: Side::Right });
        }
        nodes.retain(|p| p.t >= t0 && p.t <= t1);
        nodes.sort_by(|a, b| a.t.total_cmp(&b.t).then(side_rank(a.side).cmp(&side_rank(b.side))));
        nodes.dedup();

        let mut radii: Vec<f64> = config.radii.clone();
        radii.push(config.delta);
        radii.extend(config.delta_sweep.iter().copied());
        radii.retain(|r| *r > 0.0);
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let xi = ball_samples(n, &radii, &config, &mut rng);
        let eta = ball_samples(n, &radii, &config, &mut rng);

        let mut theta: Vec<f64> = (1..10).map(|k| k as f64 * 0.1).collect();
        for _ in 0..config.theta_random {
            let v: f64 = rng.gen();
            if v > 0.0 && v < 1.0 {
                theta.push(v);
            }
        }
        theta.sort_by(f64::total_cmp);
        theta.dedup();

        let mut plan = SamplingPlan {
            config,
            n,
            interval: (t0, t1),
            corners: corners.to_vec(),
            t_grid: nodes,
            xi,
            eta,
            theta,
            digest: String::new(),
        };
        let bytes = serde_json::to_vec(&plan).expect("plan serializes");
        plan.digest = hex::encode(Sha256::digest(&bytes));
        plan
    }

    /// SHA-256 of the canonical JSON form of the plan.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn delta(&self) -> f64 {
        self.config.delta
    }

    /// Time nodes on `[t0, t1)`, for checks whose `Q` need not exist at `t1`.
    pub fn open_t_grid(&self) -> impl Iterator<Item = &TNode> {
        let t1 = self.interval.1;
        self.t_grid.iter().filter(move |p| p.t < t1)
    }

    /// Largest sampled norm, the effective `R_global`.
    pub fn r_global(&self) -> f64 {
        self.config.r_global()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_one_sided_corner_nodes() {
        let p = SamplingPlan::build(PlanConfig::default(), 1, 0.0, 1.0, &[0.5]);
        let at: Vec<_> = p.t_grid.iter().filter(|n| n.t == 0.5).map(|n| n.side).collect();
        assert_eq!(at, vec![Side::Left, Side::Right]);
        assert!(p.t_grid.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(p.t_grid.first().unwrap().t, 0.0);
        assert_eq!(p.t_grid.last().unwrap().t, 1.0);
        assert!(p.t_grid.iter().any(|n| n.t == 1.0 - (-18f64).exp2()));
    }

    #[test]
    fn ball_samples_reach_every_radius() {
        let p = SamplingPlan::build(PlanConfig::default(), 1, 0.0, 1.0, &[]);
        for r in [0.1, 0.25, 0.5, 1.0, 3.0, 10.0] {
            assert!(p.xi.iter().any(|v| (v[0].abs() - r).abs() < 1e-15), "radius {r}");
        }
        assert_eq!(p.xi[0], vec![0.0]);
        assert!(p.xi.iter().all(|v| v[0].abs() <= 10.0));
        assert!(p.theta.iter().all(|&th| th > 0.0 && th < 1.0));
    }

    #[test]
    fn digest_is_a_function_of_config() {
        let a = SamplingPlan::build(PlanConfig::default(), 1, 0.0, 1.0, &[]);
        let b = SamplingPlan::build(PlanConfig::default(), 1, 0.0, 1.0, &[]);
        let c = SamplingPlan::build(PlanConfig { seed: 1, ..PlanConfig::default() }, 1, 0.0, 1.0, &[]);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn two_dimensional_samples_stay_in_their_shell() {
        let p = SamplingPlan::build(PlanConfig::default(), 2, 0.0, 1.0, &[]);
        assert!(p.xi.iter().all(|v| crate::scalar::norm(v) <= 10.0 + 1e-12));
        assert!(p.xi.iter().filter(|v| crate::scalar::norm(v) <= 0.5 + 1e-12).count() > 10);
    }
}
