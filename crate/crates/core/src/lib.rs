//! Bayesian inference engine for the stochastic SIR epidemic model.
//!
//! The epidemic is modelled as a continuous-time Markov jump process over
//! integer counts of susceptible, infected and recovered individuals. This
//! crate provides the full pipeline from simulation to forecasting:
//!
//! - [`reaction`] — general reaction networks and exact stochastic
//!   simulation (Gillespie direct method), including the SIR instance.
//! - [`moments`] — system-size (linear noise) approximation: macroscopic
//!   mean ODEs coupled to fluctuation first/second-moment ODEs, yielding
//!   the mean and variance of the infective count over time.
//! - [`gdd`] — the generic discrete count distribution `Gd(mu, v)` matched
//!   to an arbitrary mean/variance pair (Binomial, Poisson or
//!   Negative-Binomial depending on dispersion).
//! - [`inference`] — Gamma priors, the moment-matched product likelihood,
//!   the self-adjusting t-walk MCMC sampler, and posterior summaries
//!   (MAP, HPD intervals, the reproduction number `R0 = b0/b1`).
//! - [`predict`] — posterior-predictive simulation of future observations
//!   and quantile-band / box-plot summaries.
//! - [`config`] + [`io`] — declarative JSON run configuration and the
//!   CSV/JSON file formats used by the `sir-cme` command-line tool.

pub mod config;
pub mod gdd;
pub mod inference;
pub mod io;
pub mod moments;
pub mod ode;
pub mod predict;
pub mod reaction;
pub mod rng;
pub mod twalk;
