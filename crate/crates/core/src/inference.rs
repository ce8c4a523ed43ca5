//! Priors, approximate likelihood, posterior sampling and summaries.
//!
//! The likelihood treats each observed infective count as a draw from the
//! generic discrete distribution matched to the moment approximation at the
//! observation time, multiplied as if observations were independent:
//!
//! ```text
//! log l(D; b0, b1, omega) = sum_i log Gd(x2(t_i) | m_{t_i}, v_{t_i})
//! ```
//!
//! Parameters carry Gamma priors (optionally declared on the reciprocal
//! scale, e.g. an inverse-Gamma on the infectious period `1/b1`), or are
//! held fixed. The posterior is explored with the t-walk sampler over the
//! non-fixed coordinates.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::gdd;
use crate::moments::{self, MomentState};
use crate::reaction::{ObservationSeries, SirParameters};
use crate::twalk::{self, TwalkConfig, TwalkError};

/// Variance floor applied before moment matching, guarding the degenerate
/// all-but-certain counts near the initial observation.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Below this mean the model is treated as a point mass at zero.
const MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("observation series is empty")]
    EmptyData,
    #[error("HPD interval needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("HPD probability must lie in (0, 1), got {0}")]
    BadProbability(f64),
    #[error("chain is empty")]
    EmptyChain,
    #[error("initial points must differ in every sampled coordinate")]
    BadInitialPoints,
    #[error("sampler: {0}")]
    Sampler(#[from] TwalkError),
}

/// A point in parameter space; `omega` is carried even when fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub b0: f64,
    pub b1: f64,
    pub omega: f64,
}

impl ParameterPoint {
    pub fn new(b0: f64, b1: f64, omega: f64) -> Self {
        Self { b0, b1, omega }
    }

    fn coord(&self, dim: usize) -> f64 {
        match dim {
            0 => self.b0,
            1 => self.b1,
            _ => self.omega,
        }
    }

    fn with_coord(mut self, dim: usize, value: f64) -> Self {
        match dim {
            0 => self.b0 = value,
            1 => self.b1 = value,
            _ => self.omega = value,
        }
        self
    }

    pub fn is_positive_finite(&self) -> bool {
        [self.b0, self.b1, self.omega].iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Prior for one parameter.
///
/// `Gamma` uses the shape-scale parametrization: the log density of `x` is
/// `(shape - 1) ln x - x / scale` up to its normalizing constant.
/// `ReciprocalInverseGamma { shape, scale }` places an inverse-Gamma with
/// that shape and scale on the reciprocal `1/x`; by change of variables this
/// is exactly a Gamma on `x` with the same shape and rate equal to `scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParamPrior {
    Fixed { value: f64 },
    Gamma { shape: f64, scale: f64 },
    ReciprocalInverseGamma { shape: f64, scale: f64 },
}

impl ParamPrior {
    pub fn is_fixed(&self) -> bool {
        matches!(self, ParamPrior::Fixed { .. })
    }

    /// Normalized log density at `x` (zero for fixed parameters).
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            ParamPrior::Fixed { .. } => 0.0,
            ParamPrior::Gamma { shape, scale } => {
                if x <= 0.0 || !x.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
                }
            }
            ParamPrior::ReciprocalInverseGamma { shape, scale } => {
                if x <= 0.0 || !x.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    // Gamma(shape, rate = scale) on x, Jacobian included.
                    shape * scale.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - scale * x
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ParamPrior::Fixed { value } => {
                if value.is_finite() && value > 0.0 {
                    Ok(())
                } else {
                    Err(format!("fixed value must be positive, got {value}"))
                }
            }
            ParamPrior::Gamma { shape, scale }
            | ParamPrior::ReciprocalInverseGamma { shape, scale } => {
                if shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(format!("hyper-parameters must be positive, got {shape}, {scale}"))
                }
            }
        }
    }
}

/// Priors for the three parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub b0: ParamPrior,
    pub b1: ParamPrior,
    pub omega: ParamPrior,
}

impl PriorSpec {
    fn by_dim(&self, dim: usize) -> &ParamPrior {
        match dim {
            0 => &self.b0,
            1 => &self.b1,
            _ => &self.omega,
        }
    }

    /// Indices of the sampled (non-fixed) parameters, in `(b0, b1, omega)` order.
    pub fn sampled_dims(&self) -> Vec<usize> {
        (0..3).filter(|&d| !self.by_dim(d).is_fixed()).collect()
    }

    /// Fill fixed parameters into a point, leaving sampled ones untouched.
    pub fn apply_fixed(&self, mut point: ParameterPoint) -> ParameterPoint {
        for dim in 0..3 {
            if let ParamPrior::Fixed { value } = *self.by_dim(dim) {
                point = point.with_coord(dim, value);
            }
        }
        point
    }

    pub fn validate(&self) -> Result<(), String> {
        self.b0.validate().map_err(|e| format!("b0 prior: {e}"))?;
        self.b1.validate().map_err(|e| format!("b1 prior: {e}"))?;
        self.omega.validate().map_err(|e| format!("omega prior: {e}"))?;
        if self.sampled_dims().is_empty() {
            return Err("at least one parameter must be sampled".into());
        }
        Ok(())
    }
}

/// Sum of prior log densities over the non-fixed parameters; negative
/// infinity for non-positive values.
pub fn log_prior(point: &ParameterPoint, prior: &PriorSpec) -> f64 {
    (0..3)
        .filter(|&d| !prior.by_dim(d).is_fixed())
        .map(|d| prior.by_dim(d).log_density(point.coord(d)))
        .sum()
}

/// How the moment integration is initialized from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// `y2 = x2(t_1) / omega` at the first observation time, susceptibles
    /// making up the rest of the population, no recovered.
    FromFirstObservation,
    /// An explicit infective count at the first observation time.
    InfectiveCount(f64),
}

/// The unnormalized posterior over `(b0, b1, omega)` for a data series.
pub struct Posterior<'a> {
    pub data: &'a ObservationSeries,
    pub prior: &'a PriorSpec,
    pub init: InitialCondition,
    pub rtol: f64,
    pub atol: f64,
}

impl<'a> Posterior<'a> {
    pub fn new(data: &'a ObservationSeries, prior: &'a PriorSpec, init: InitialCondition) -> Self {
        Self { data, prior, init, rtol: moments::DEFAULT_RTOL, atol: moments::DEFAULT_ATOL }
    }

    /// Moment-matched product log likelihood. Returns negative infinity for
    /// support violations (`omega` below the largest observed count, counts
    /// beyond a Binomial-branch support) and for failed moment integrations,
    /// which rejects the proposal without aborting the run.
    pub fn log_likelihood(&self, point: &ParameterPoint) -> f64 {
        if !point.is_positive_finite() {
            return f64::NEG_INFINITY;
        }
        if point.omega < self.data.max_count() as f64 {
            return f64::NEG_INFINITY;
        }
        let x2_first = match self.init {
            InitialCondition::FromFirstObservation => self.data.counts[0] as f64,
            InitialCondition::InfectiveCount(c) => c,
        };
        let y2 = x2_first / point.omega;
        if !(0.0..=1.0).contains(&y2) {
            return f64::NEG_INFINITY;
        }
        let t1 = self.data.times[0];
        let shifted: Vec<f64> = self.data.times.iter().map(|&t| t - t1).collect();
        let sir = SirParameters { b0: point.b0, b1: point.b1, omega: point.omega };
        let init = MomentState::deterministic([1.0 - y2, y2, 0.0], 0.0);
        let series = match moments::integrate_moments(&sir, &init, &shifted, self.rtol, self.atol)
        {
            Ok(s) => s,
            Err(err) => {
                log::warn!("moment integration failed at {point:?}: {err}; rejecting proposal");
                return f64::NEG_INFINITY;
            }
        };
        let mut total = 0.0;
        for (i, &x) in self.data.counts.iter().enumerate() {
            let m = series.observation.m[i];
            let v = series.observation.v[i].max(VARIANCE_FLOOR);
            if m <= MEAN_FLOOR {
                if x != 0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            match gdd::gd_from_moments(m, v) {
                Ok(gd) => {
                    total += gd.log_pmf(x);
                    if total == f64::NEG_INFINITY {
                        return total;
                    }
                }
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        total
    }

    /// `log_prior + log_likelihood`, up to an additive constant.
    pub fn log_posterior(&self, point: &ParameterPoint) -> f64 {
        let point = self.prior.apply_fixed(*point);
        let lp = log_prior(&point, self.prior);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lp + self.log_likelihood(&point)
    }
}

/// MCMC schedule and starting points.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iterations: usize,
    /// Defaults to 20% of the iterations when absent.
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub seed: u64,
    pub init_a: ParameterPoint,
    pub init_b: ParameterPoint,
}

impl McmcSettings {
    pub fn resolved_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 5)
    }
}

/// Retained posterior samples with their log-posterior values.
#[derive(Clone, Debug)]
pub struct Chain {
    pub samples: Vec<(ParameterPoint, f64)>,
    pub accepted: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Accepted moves per iteration; `None` for chains re-loaded from disk,
    /// where the counts were not persisted.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.iterations > 0).then(|| self.accepted as f64 / self.iterations as f64)
    }

    /// Wrap retained samples read back from a chain file.
    pub fn from_retained(samples: Vec<(ParameterPoint, f64)>, seed: u64) -> Self {
        Self { samples, accepted: 0, iterations: 0, burn_in: 0, thinning: 1, seed }
    }
}

/// Sample the posterior with the t-walk over the non-fixed parameters.
pub fn run_mcmc(posterior: &Posterior, settings: &McmcSettings) -> Result<Chain, InferenceError> {
    if posterior.data.is_empty() {
        return Err(InferenceError::EmptyData);
    }
    let dims = posterior.prior.sampled_dims();
    let embed = |coords: &[f64]| {
        let mut point = ParameterPoint::new(1.0, 1.0, 1.0);
        for (&dim, &value) in dims.iter().zip(coords) {
            point = point.with_coord(dim, value);
        }
        posterior.prior.apply_fixed(point)
    };
    let target = |coords: &[f64]| {
        if coords.iter().any(|&c| !c.is_finite() || c <= 0.0) {
            return f64::NEG_INFINITY;
        }
        posterior.log_posterior(&embed(coords))
    };

    let project = |p: &ParameterPoint| -> Vec<f64> { dims.iter().map(|&d| p.coord(d)).collect() };
    let init_a = project(&settings.init_a);
    let init_b = project(&settings.init_b);
    if init_a.iter().zip(&init_b).any(|(a, b)| a == b) {
        return Err(InferenceError::BadInitialPoints);
    }

    let config = TwalkConfig {
        iterations: settings.iterations,
        burn_in: settings.resolved_burn_in(),
        thinning: settings.thinning,
        seed: settings.seed,
    };
    let run = twalk::sample(target, &init_a, &init_b, &config)?;
    let samples = run
        .samples
        .iter()
        .zip(&run.log_posts)
        .map(|(coords, &lp)| (embed(coords), lp))
        .collect();
    Ok(Chain {
        samples,
        accepted: run.accepted,
        iterations: run.iterations,
        burn_in: config.burn_in,
        thinning: config.thinning,
        seed: config.seed,
    })
}

/// The retained sample with the highest recorded log-posterior value.
pub fn map_estimate(chain: &Chain) -> Result<ParameterPoint, InferenceError> {
    let mut best: Option<(ParameterPoint, f64)> = None;
    for &(p, lp) in &chain.samples {
        if best.map_or(true, |(_, b)| lp > b) {
            best = Some((p, lp));
        }
    }
    best.map(|(p, _)| p).ok_or(InferenceError::EmptyChain)
}

/// Shortest interval over the sorted samples containing `ceil(prob * n)` of
/// them; ties broken towards the left end.
pub fn hpd_interval(samples: &[f64], prob: f64) -> Result<(f64, f64), InferenceError> {
    if samples.len() < 100 {
        return Err(InferenceError::TooFewSamples(samples.len()));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(InferenceError::BadProbability(prob));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples are comparable"));
    let n = sorted.len();
    let window = ((prob * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[window - 1]);
    let mut best_width = best.1 - best.0;
    for start in 1..=(n - window) {
        let width = sorted[start + window - 1] - sorted[start];
        if width < best_width {
            best_width = width;
            best = (sorted[start], sorted[start + window - 1]);
        }
    }
    Ok(best)
}

/// Basic reproduction number `b0 / b1` per retained sample.
pub fn r0_samples(chain: &Chain) -> Vec<f64> {
    chain.samples.iter().map(|(p, _)| p.b0 / p.b1).collect()
}

/// Point estimates and interval summaries of a chain.
#[derive(Clone, Debug, Serialize)]
pub struct PosteriorSummary {
    pub map: ParameterPoint,
    pub map_log_posterior: f64,
    pub mean: ParameterPoint,
    pub hpd_prob: f64,
    pub hpd_b0: (f64, f64),
    pub hpd_b1: (f64, f64),
    pub hpd_omega: (f64, f64),
    pub r0_map: f64,
    pub r0_mean: f64,
    pub hpd_r0: (f64, f64),
    pub acceptance_rate: Option<f64>,
    pub seed: u64,
}

pub fn summarize_chain(chain: &Chain, prob: f64) -> Result<PosteriorSummary, InferenceError> {
    if chain.is_empty() {
        return Err(InferenceError::EmptyChain);
    }
    let map = map_estimate(chain)?;
    let map_lp = chain
        .samples
        .iter()
        .map(|&(_, lp)| lp)
        .fold(f64::NEG_INFINITY, f64::max);
    let n = chain.len() as f64;
    let mean = ParameterPoint::new(
        chain.samples.iter().map(|(p, _)| p.b0).sum::<f64>() / n,
        chain.samples.iter().map(|(p, _)| p.b1).sum::<f64>() / n,
        chain.samples.iter().map(|(p, _)| p.omega).sum::<f64>() / n,
    );
    let b0: Vec<f64> = chain.samples.iter().map(|(p, _)| p.b0).collect();
    let b1: Vec<f64> = chain.samples.iter().map(|(p, _)| p.b1).collect();
    let omega: Vec<f64> = chain.samples.iter().map(|(p, _)| p.omega).collect();
    let r0 = r0_samples(chain);
    Ok(PosteriorSummary {
        map,
        map_log_posterior: map_lp,
        mean,
        hpd_prob: prob,
        hpd_b0: hpd_interval(&b0, prob)?,
        hpd_b1: hpd_interval(&b1, prob)?,
        hpd_omega: hpd_interval(&omega, prob)?,
        r0_map: map.b0 / map.b1,
        r0_mean: r0.iter().sum::<f64>() / n,
        hpd_r0: hpd_interval(&r0, prob)?,
        acceptance_rate: chain.acceptance_rate(),
        seed: chain.seed,
    })
}
