//! Self-adjusting two-point MCMC (the t-walk).
//!
//! The sampler keeps two coupled points and at each iteration moves one of
//! them, chosen at random, using one of four scale-invariant proposal
//! kernels: walk, traverse, blow and hop. It needs only the log target
//! density and two distinct starting points; the kernel constants below are
//! the published defaults and require no per-problem tuning. Detailed
//! balance holds for the product target over the pair, so the first point's
//! marginal chain targets the desired density.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::uniform_open01;

/// Walk-kernel step-size constant.
const A_WALK: f64 = 1.5;
/// Traverse-kernel scale constant.
const A_TRAVERSE: f64 = 6.0;
/// Expected number of coordinates moved per proposal.
const N_PHI: f64 = 4.0;
/// Cumulative kernel probabilities: walk, traverse, blow, hop.
const KERNEL_CUM: [f64; 4] = [0.4918, 0.9836, 0.9918, 1.0];

#[derive(Debug, Error)]
pub enum TwalkError {
    #[error("initial points must have equal, nonzero dimension")]
    DimensionMismatch,
    #[error("initial points must differ in every coordinate")]
    CoincidentInitialPoints,
    #[error("initial point has non-finite log target")]
    BadInitialPoint,
    #[error("thinning must be at least 1 and burn-in smaller than iterations")]
    BadSchedule,
}

#[derive(Clone, Copy, Debug)]
pub struct TwalkConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

/// Retained samples of the first point, with bookkeeping.
#[derive(Clone, Debug)]
pub struct TwalkRun {
    pub samples: Vec<Vec<f64>>,
    pub log_posts: Vec<f64>,
    pub accepted: usize,
    pub iterations: usize,
}

impl TwalkRun {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.iterations as f64
    }
}

/// Run the sampler on `log_target` (natural log of an unnormalized density;
/// return negative infinity outside the support).
///
/// Samples are retained every `thinning` iterations after `burn_in`, giving
/// `(iterations - burn_in) / thinning` draws.
pub fn sample(
    log_target: impl Fn(&[f64]) -> f64,
    init_a: &[f64],
    init_b: &[f64],
    config: &TwalkConfig,
) -> Result<TwalkRun, TwalkError> {
    let n = init_a.len();
    if n == 0 || init_b.len() != n {
        return Err(TwalkError::DimensionMismatch);
    }
    if init_a.iter().zip(init_b).any(|(a, b)| a == b) {
        return Err(TwalkError::CoincidentInitialPoints);
    }
    if config.thinning == 0 || config.burn_in >= config.iterations {
        return Err(TwalkError::BadSchedule);
    }
    let mut points = [init_a.to_vec(), init_b.to_vec()];
    let mut logf = [log_target(&points[0]), log_target(&points[1])];
    if !logf.iter().all(|l| l.is_finite()) {
        return Err(TwalkError::BadInitialPoint);
    }

    let p_phi = N_PHI.min(n as f64) / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let retained = (config.iterations - config.burn_in) / config.thinning;
    let mut samples = Vec::with_capacity(retained);
    let mut log_posts = Vec::with_capacity(retained);
    let mut accepted = 0usize;
    let mut phi = vec![false; n];

    for iter in 0..config.iterations {
        let kernel = pick_kernel(&mut rng);
        // Move one point of the pair; the other is the companion.
        let moved = usize::from(rng.gen::<f64>() >= 0.5);
        let other = 1 - moved;

        let (proposal, log_ratio_extra) = match kernel {
            Kernel::Walk => {
                let y = sim_walk(&points[moved], &points[other], p_phi, &mut phi, &mut rng);
                (y, 0.0)
            }
            Kernel::Traverse => {
                let beta = sim_beta(&mut rng);
                let y =
                    sim_traverse(&points[moved], &points[other], beta, p_phi, &mut phi, &mut rng);
                let n_phi = phi.iter().filter(|&&b| b).count();
                let extra =
                    if n_phi == 0 { 0.0 } else { (n_phi as f64 - 2.0) * beta.ln() };
                (y, extra)
            }
            Kernel::Blow => {
                let y = sim_blow(&points[moved], &points[other], p_phi, &mut phi, &mut rng);
                let forward = g_blow(&y, &points[moved], &points[other], &phi);
                let reverse = g_blow(&points[moved], &y, &points[other], &phi);
                (y, forward - reverse)
            }
            Kernel::Hop => {
                let y = sim_hop(&points[moved], &points[other], p_phi, &mut phi, &mut rng);
                let forward = g_hop(&y, &points[moved], &points[other], &phi);
                let reverse = g_hop(&points[moved], &y, &points[other], &phi);
                (y, forward - reverse)
            }
        };

        // The pair must stay coordinatewise distinct.
        let distinct = proposal.iter().zip(&points[other]).all(|(a, b)| a != b);
        if distinct {
            let logf_prop = log_target(&proposal);
            if logf_prop.is_finite() {
                let log_alpha = logf_prop - logf[moved] + log_ratio_extra;
                if log_alpha >= 0.0 || uniform_open01(&mut rng).ln() < log_alpha {
                    points[moved] = proposal;
                    logf[moved] = logf_prop;
                    accepted += 1;
                }
            }
        }

        if iter >= config.burn_in && (iter - config.burn_in) % config.thinning == config.thinning - 1
        {
            samples.push(points[0].clone());
            log_posts.push(logf[0]);
        }
    }

    Ok(TwalkRun { samples, log_posts, accepted, iterations: config.iterations })
}

#[derive(Clone, Copy, Debug)]
enum Kernel {
    Walk,
    Traverse,
    Blow,
    Hop,
}

fn pick_kernel(rng: &mut impl Rng) -> Kernel {
    let u: f64 = rng.gen();
    if u < KERNEL_CUM[0] {
        Kernel::Walk
    } else if u < KERNEL_CUM[1] {
        Kernel::Traverse
    } else if u < KERNEL_CUM[2] {
        Kernel::Blow
    } else {
        Kernel::Hop
    }
}

fn draw_phi(phi: &mut [bool], p_phi: f64, rng: &mut impl Rng) {
    for b in phi.iter_mut() {
        *b = rng.gen::<f64>() < p_phi;
    }
}

/// Walk: scale each selected coordinate of `x` by a random multiple of its
/// offset from the companion. The kernel density is self-inverse, so the
/// Hastings correction vanishes.
fn sim_walk(
    x: &[f64],
    companion: &[f64],
    p_phi: f64,
    phi: &mut [bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    draw_phi(phi, p_phi, rng);
    x.iter()
        .zip(companion)
        .zip(phi.iter())
        .map(|((&xi, &ci), &selected)| {
            if selected {
                let u: f64 = rng.gen();
                let z = (A_WALK / (1.0 + A_WALK)) * (A_WALK * u * u + 2.0 * u - 1.0);
                xi + (xi - ci) * z
            } else {
                xi
            }
        })
        .collect()
}

/// Scale factor of the traverse kernel.
fn sim_beta(rng: &mut impl Rng) -> f64 {
    let at = A_TRAVERSE;
    let u: f64 = uniform_open01(rng);
    if rng.gen::<f64>() < (at - 1.0) / (2.0 * at) {
        u.powf(1.0 / (at + 1.0))
    } else {
        u.powf(1.0 / (1.0 - at))
    }
}

/// Traverse: reflect selected coordinates of `x` through the companion,
/// scaled by `beta`.
fn sim_traverse(
    x: &[f64],
    companion: &[f64],
    beta: f64,
    p_phi: f64,
    phi: &mut [bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    draw_phi(phi, p_phi, rng);
    x.iter()
        .zip(companion)
        .zip(phi.iter())
        .map(|((&xi, &ci), &selected)| if selected { ci + beta * (ci - xi) } else { xi })
        .collect()
}

fn phi_scale(x: &[f64], companion: &[f64], phi: &[bool]) -> f64 {
    x.iter()
        .zip(companion)
        .zip(phi)
        .filter(|(_, &selected)| selected)
        .map(|((&xi, &ci), _)| (ci - xi).abs())
        .fold(0.0, f64::max)
}

/// Blow: redraw selected coordinates around the companion at the pair's
/// separation scale.
fn sim_blow(
    x: &[f64],
    companion: &[f64],
    p_phi: f64,
    phi: &mut [bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    draw_phi(phi, p_phi, rng);
    let sigma = phi_scale(x, companion, phi);
    x.iter()
        .zip(companion)
        .zip(phi.iter())
        .map(|((&xi, &ci), &selected)| {
            if selected {
                let z: f64 = rng.sample(StandardNormal);
                ci + sigma * z
            } else {
                xi
            }
        })
        .collect()
}

/// Negative log density of proposing `h` by blowing `x` towards the
/// companion (shared coordinate mask).
fn g_blow(h: &[f64], x: &[f64], companion: &[f64], phi: &[bool]) -> f64 {
    let n_phi = phi.iter().filter(|&&b| b).count() as f64;
    if n_phi == 0.0 {
        return 0.0;
    }
    let sigma = phi_scale(x, companion, phi);
    let quad: f64 = h
        .iter()
        .zip(companion)
        .zip(phi)
        .filter(|(_, &selected)| selected)
        .map(|((&hi, &ci), _)| (hi - ci) * (hi - ci))
        .sum();
    (n_phi / 2.0) * (2.0 * std::f64::consts::PI).ln()
        + n_phi * sigma.ln()
        + 0.5 * quad / (sigma * sigma)
}

/// Hop: a small Gaussian jump around `x` itself, at a third of the pair's
/// separation scale.
fn sim_hop(
    x: &[f64],
    companion: &[f64],
    p_phi: f64,
    phi: &mut [bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    draw_phi(phi, p_phi, rng);
    let sigma = phi_scale(x, companion, phi) / 3.0;
    x.iter()
        .zip(phi.iter())
        .map(|(&xi, &selected)| {
            if selected {
                let z: f64 = rng.sample(StandardNormal);
                xi + sigma * z
            } else {
                xi
            }
        })
        .collect()
}

fn g_hop(h: &[f64], x: &[f64], companion: &[f64], phi: &[bool]) -> f64 {
    let n_phi = phi.iter().filter(|&&b| b).count() as f64;
    if n_phi == 0.0 {
        return 0.0;
    }
    let sigma = phi_scale(x, companion, phi) / 3.0;
    let quad: f64 = h
        .iter()
        .zip(x)
        .zip(phi)
        .filter(|(_, &selected)| selected)
        .map(|((&hi, &xi), _)| (hi - xi) * (hi - xi))
        .sum();
    (n_phi / 2.0) * (2.0 * std::f64::consts::PI).ln()
        + n_phi * sigma.ln()
        + 0.5 * quad / (sigma * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    fn gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
    }

    #[test]
    fn identical_seeds_identical_chains() {
        let target = |x: &[f64]| gamma_log_density(x[0], 2.0, 1.0);
        let cfg = TwalkConfig { iterations: 5000, burn_in: 1000, thinning: 1, seed: 4 };
        let a = sample(target, &[1.0], &[2.0], &cfg).unwrap();
        let b = sample(target, &[1.0], &[2.0], &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.accepted, b.accepted);
    }

    #[test]
    fn rejects_bad_initial_points() {
        let target = |x: &[f64]| gamma_log_density(x[0], 2.0, 1.0);
        let cfg = TwalkConfig { iterations: 100, burn_in: 10, thinning: 1, seed: 0 };
        assert!(matches!(
            sample(target, &[1.0], &[1.0], &cfg),
            Err(TwalkError::CoincidentInitialPoints)
        ));
        assert!(matches!(
            sample(target, &[-1.0], &[2.0], &cfg),
            Err(TwalkError::BadInitialPoint)
        ));
    }

    #[test]
    fn retained_length_matches_schedule() {
        let target = |x: &[f64]| gamma_log_density(x[0], 2.0, 1.0);
        let cfg = TwalkConfig { iterations: 1003, burn_in: 200, thinning: 10, seed: 1 };
        let run = sample(target, &[1.0], &[2.0], &cfg).unwrap();
        assert_eq!(run.samples.len(), (1003 - 200) / 10);
    }

    #[test]
    fn gamma_product_target_moments() {
        // Independent Gamma(3, scale 2) x Gamma(2, scale 0.5): means 6 and 1,
        // variances 12 and 0.5.
        let target = |x: &[f64]| {
            gamma_log_density(x[0], 3.0, 2.0) + gamma_log_density(x[1], 2.0, 0.5)
        };
        let cfg = TwalkConfig { iterations: 600_000, burn_in: 100_000, thinning: 5, seed: 9 };
        let run = sample(target, &[2.0, 0.5], &[8.0, 2.0], &cfg).unwrap();
        let n = run.samples.len() as f64;
        for (dim, (mean_true, var_true)) in [(0, (6.0, 12.0)), (1, (1.0, 0.5))] {
            let mean: f64 = run.samples.iter().map(|s| s[dim]).sum::<f64>() / n;
            let var: f64 =
                run.samples.iter().map(|s| (s[dim] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(
                (mean - mean_true).abs() < 0.02 * mean_true,
                "dim {dim} mean {mean} vs {mean_true}"
            );
            assert!(
                (var - var_true).abs() < 0.02 * var_true * 2.5,
                "dim {dim} variance {var} vs {var_true}"
            );
        }
    }

    #[test]
    fn acceptance_rate_in_healthy_range() {
        // Spherical Gaussian restricted to the positive quadrant.
        let target = |x: &[f64]| {
            if x.iter().any(|&v| v <= 0.0) {
                f64::NEG_INFINITY
            } else {
                -0.5 * x.iter().map(|v| v * v).sum::<f64>()
            }
        };
        let cfg = TwalkConfig { iterations: 50_000, burn_in: 5_000, thinning: 1, seed: 12 };
        let run = sample(target, &[0.5, 0.5], &[1.5, 1.0], &cfg).unwrap();
        let rate = run.acceptance_rate();
        assert!((0.1..0.6).contains(&rate), "acceptance rate {rate}");
    }
}
