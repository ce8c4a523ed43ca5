//! Reaction networks and exact stochastic simulation.
//!
//! A [`ReactionNetwork`] is a continuous-time Markov jump process over
//! integer species counts: each reaction fires at a state-dependent rate
//! (its propensity) and shifts the state by its net stoichiometric change.
//! [`simulate_trajectory`] draws exact trajectories with the Gillespie
//! direct method: the waiting time to the next event is exponential with
//! rate equal to the total propensity, and reaction `k` fires with
//! probability proportional to its own propensity.
//!
//! [`build_sir`] instantiates the SIR epidemic: species `(x1, x2, x3)` =
//! (susceptible, infected, recovered), infection `x1 + x2 -> 2 x2` at rate
//! `b0 * x1 * x2 / omega` and removal `x2 -> x3` at rate `b1 * x2`.

use rand::RngCore;
use thiserror::Error;

use crate::rng;

/// Errors from network construction, simulation and sampling.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid SIR parameters: {0}")]
    InvalidParameters(String),
    #[error("reaction {index} has a zero net change vector")]
    ZeroNetChange { index: usize },
    #[error("reaction {index} stoichiometry length {got} does not match species count {expected}")]
    StoichiometryLength { index: usize, got: usize, expected: usize },
    #[error("state has {got} species, network expects {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("propensity of reaction {index} is {value} at state {state:?}")]
    InvalidPropensity { index: usize, value: f64, state: Vec<u64> },
    #[error("t_max {t_max} is not after the initial time {t0}")]
    HorizonBeforeStart { t_max: f64, t0: f64 },
    #[error("sample time {time} outside the simulated horizon [{t0}, {t_end}]")]
    SampleOutOfRange { time: f64, t0: f64, t_end: f64 },
    #[error("sample times must be strictly increasing")]
    SampleTimesNotIncreasing,
    #[error("species index {index} out of range for {species} species")]
    SpeciesOutOfRange { index: usize, species: usize },
}

/// Positive rate parameters of the SIR model: contact rate `b0`, removal
/// rate `b1` (both per unit time) and the system size `omega` (total
/// population).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SirParameters {
    pub b0: f64,
    pub b1: f64,
    pub omega: f64,
}

impl SirParameters {
    /// Non-negative `b0` is accepted (a zero contact rate is the pure-death
    /// chain); `b1` and `omega` must be strictly positive. All finite.
    pub fn new(b0: f64, b1: f64, omega: f64) -> Result<Self, SimError> {
        if !(b0.is_finite() && b0 >= 0.0) {
            return Err(SimError::InvalidParameters(format!("b0 = {b0}")));
        }
        if !(b1.is_finite() && b1 > 0.0) {
            return Err(SimError::InvalidParameters(format!("b1 = {b1}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(SimError::InvalidParameters(format!("omega = {omega}")));
        }
        Ok(Self { b0, b1, omega })
    }
}

/// One reaction: reactant/product stoichiometries plus a propensity
/// function of the current counts.
pub struct Reaction {
    reactants: Vec<u32>,
    products: Vec<u32>,
    propensity: Box<dyn Fn(&[u64]) -> f64 + Send + Sync>,
}

impl Reaction {
    pub fn new(
        reactants: Vec<u32>,
        products: Vec<u32>,
        propensity: impl Fn(&[u64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { reactants, products, propensity: Box::new(propensity) }
    }

    /// Net change of each species when this reaction fires.
    pub fn net_change(&self) -> Vec<i64> {
        self.products
            .iter()
            .zip(&self.reactants)
            .map(|(&q, &p)| i64::from(q) - i64::from(p))
            .collect()
    }

    /// Propensity at the given counts; exactly zero whenever some reactant
    /// count is below its stoichiometric requirement.
    pub fn rate(&self, counts: &[u64]) -> f64 {
        let feasible = self
            .reactants
            .iter()
            .zip(counts)
            .all(|(&need, &have)| have >= u64::from(need));
        if feasible { (self.propensity)(counts) } else { 0.0 }
    }
}

/// A set of reactions over a fixed number of species.
pub struct ReactionNetwork {
    species: usize,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn new(species: usize, reactions: Vec<Reaction>) -> Result<Self, SimError> {
        for (index, r) in reactions.iter().enumerate() {
            if r.reactants.len() != species {
                return Err(SimError::StoichiometryLength {
                    index,
                    got: r.reactants.len(),
                    expected: species,
                });
            }
            if r.products.len() != species {
                return Err(SimError::StoichiometryLength {
                    index,
                    got: r.products.len(),
                    expected: species,
                });
            }
            if r.net_change().iter().all(|&d| d == 0) {
                return Err(SimError::ZeroNetChange { index });
            }
        }
        Ok(Self { species, reactions })
    }

    pub fn species_count(&self) -> usize {
        self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    /// All propensities at a state; signals if any is negative or non-finite.
    pub fn propensities(&self, counts: &[u64]) -> Result<Vec<f64>, SimError> {
        if counts.len() != self.species {
            return Err(SimError::StateLength { got: counts.len(), expected: self.species });
        }
        self.reactions
            .iter()
            .enumerate()
            .map(|(index, r)| {
                let h = r.rate(counts);
                if h.is_finite() && h >= 0.0 {
                    Ok(h)
                } else {
                    Err(SimError::InvalidPropensity { index, value: h, state: counts.to_vec() })
                }
            })
            .collect()
    }
}

/// The three-species, two-reaction SIR network for the given parameters.
pub fn build_sir(params: &SirParameters) -> ReactionNetwork {
    let SirParameters { b0, b1, omega } = *params;
    let infection = Reaction::new(vec![1, 1, 0], vec![0, 2, 0], move |x| {
        b0 * x[0] as f64 * x[1] as f64 / omega
    });
    let removal = Reaction::new(vec![0, 1, 0], vec![0, 0, 1], move |x| b1 * x[1] as f64);
    ReactionNetwork::new(3, vec![infection, removal]).expect("SIR network is well formed")
}

/// Initial SIR state `(omega - infectives, infectives, 0)` at time zero.
///
/// `omega` must round to an integer population at least as large as the
/// initial infective count.
pub fn sir_initial_state(params: &SirParameters, infectives: u64) -> Result<SystemState, SimError> {
    let total = params.omega.round();
    if (params.omega - total).abs() > 1e-9 || total < 1.0 {
        return Err(SimError::InvalidParameters(format!(
            "omega = {} is not an integer population",
            params.omega
        )));
    }
    let total = total as u64;
    if infectives > total {
        return Err(SimError::InvalidParameters(format!(
            "initial infectives {infectives} exceed population {total}"
        )));
    }
    Ok(SystemState { counts: vec![total - infectives, infectives, 0], time: 0.0 })
}

/// Integer species counts at a point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub counts: Vec<u64>,
    pub time: f64,
}

/// An exact event history: the state after each reaction, starting with the
/// initial state. The state is a right-continuous step function of time and
/// holds from its event time until the next event (or `t_end`).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<u64>,
    species: usize,
    t_end: f64,
}

impl Trajectory {
    pub fn species_count(&self) -> usize {
        self.species
    }

    /// Event times, including the initial time.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// End of the simulated horizon (the final state extends to it).
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Counts recorded at event index `i`.
    pub fn state_at(&self, i: usize) -> &[u64] {
        &self.states[i * self.species..(i + 1) * self.species]
    }

    pub fn final_state(&self) -> &[u64] {
        self.state_at(self.len() - 1)
    }

    pub fn states_iter(&self) -> impl Iterator<Item = &[u64]> {
        self.states.chunks_exact(self.species)
    }

    /// Count of one species in force at time `t` (last event at or before `t`).
    pub fn species_at_time(&self, t: f64, species: usize) -> u64 {
        let idx = self.times.partition_point(|&et| et <= t);
        self.state_at(idx.saturating_sub(1))[species]
    }
}

/// Exact Gillespie simulation from `init` until `t_max`, or earlier if the
/// total propensity reaches zero (absorbing state). Deterministic for a
/// given generator state; exponential waiting times are drawn by inverse
/// CDF.
pub fn simulate_trajectory(
    network: &ReactionNetwork,
    init: &SystemState,
    t_max: f64,
    rng: &mut impl RngCore,
) -> Result<Trajectory, SimError> {
    if !(t_max > init.time) {
        return Err(SimError::HorizonBeforeStart { t_max, t0: init.time });
    }
    let mut state = init.counts.clone();
    if state.len() != network.species {
        return Err(SimError::StateLength { got: state.len(), expected: network.species });
    }
    let mut t = init.time;
    let mut times = vec![t];
    let mut states = state.clone();
    let net_changes: Vec<Vec<i64>> = network.reactions.iter().map(Reaction::net_change).collect();

    loop {
        let h = network.propensities(&state)?;
        let h0: f64 = h.iter().sum();
        if h0 <= 0.0 {
            break;
        }
        t += rng::exponential(rng, h0);
        if t > t_max {
            break;
        }

        let target = rng::uniform_open01(rng) * h0;
        let mut cumulative = 0.0;
        let mut fired = network.reactions.len() - 1;
        for (k, &hk) in h.iter().enumerate() {
            cumulative += hk;
            if target <= cumulative {
                fired = k;
                break;
            }
        }

        for (count, &delta) in state.iter_mut().zip(&net_changes[fired]) {
            // Gating in `Reaction::rate` guarantees no underflow.
            *count = count.wrapping_add_signed(delta);
        }
        times.push(t);
        states.extend_from_slice(&state);
    }

    Ok(Trajectory { times, states, species: network.species, t_end: t_max })
}

/// Time-stamped counts of a single observed species.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ObservationSeries {
    /// Times must be strictly increasing and non-empty, counts same length.
    pub fn new(times: Vec<f64>, counts: Vec<u64>) -> Result<Self, SimError> {
        if times.is_empty() || times.len() != counts.len() {
            return Err(SimError::SampleTimesNotIncreasing);
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::SampleTimesNotIncreasing);
        }
        Ok(Self { times, counts })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("series is non-empty")
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().expect("series is non-empty")
    }

    /// Drop the last `n` observations (the trimmed-tail scenario). Errors if
    /// nothing would remain.
    pub fn trim_tail(&self, n: usize) -> Result<Self, SimError> {
        if n >= self.len() {
            return Err(SimError::SampleTimesNotIncreasing);
        }
        Ok(Self {
            times: self.times[..self.len() - n].to_vec(),
            counts: self.counts[..self.len() - n].to_vec(),
        })
    }
}

/// Sub-sample one species of a trajectory at the given times
/// (piecewise-constant interpolation, see [`Trajectory`]).
pub fn sample_at(
    traj: &Trajectory,
    times: &[f64],
    species: usize,
) -> Result<ObservationSeries, SimError> {
    if species >= traj.species {
        return Err(SimError::SpeciesOutOfRange { index: species, species: traj.species });
    }
    let t0 = traj.times[0];
    for &t in times {
        if t < t0 || t > traj.t_end {
            return Err(SimError::SampleOutOfRange { time: t, t0, t_end: traj.t_end });
        }
    }
    let counts = times.iter().map(|&t| traj.species_at_time(t, species)).collect();
    ObservationSeries::new(times.to_vec(), counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> SirParameters {
        SirParameters::new(40.0, 7.0, 200.0).unwrap()
    }

    #[test]
    fn sir_propensities_hand_values() {
        let net = build_sir(&params());
        let h = net.propensities(&[198, 2, 0]).unwrap();
        assert!((h[0] - 79.2).abs() < 1e-12, "h1 = {}", h[0]);
        assert!((h[1] - 14.0).abs() < 1e-12, "h2 = {}", h[1]);
    }

    #[test]
    fn sir_absorbing_without_infectives() {
        let net = build_sir(&params());
        let h = net.propensities(&[150, 0, 50]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn sir_zero_contact_rate() {
        let p = SirParameters::new(0.0, 7.0, 200.0).unwrap();
        let net = build_sir(&p);
        let h = net.propensities(&[150, 50, 0]).unwrap();
        assert_eq!(h[0], 0.0);
        assert!((h[1] - 350.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(SirParameters::new(40.0, 0.0, 200.0).is_err());
        assert!(SirParameters::new(40.0, 7.0, -1.0).is_err());
        assert!(SirParameters::new(f64::NAN, 7.0, 200.0).is_err());
    }

    #[test]
    fn absorbing_start_yields_initial_state_only() {
        let net = build_sir(&params());
        let init = SystemState { counts: vec![200, 0, 0], time: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = simulate_trajectory(&net, &init, 5.0, &mut rng).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.final_state(), &[200, 0, 0]);
    }

    #[test]
    fn pure_death_chain_has_exactly_two_events() {
        let p = SirParameters::new(0.0, 7.0, 200.0).unwrap();
        let net = build_sir(&p);
        let init = SystemState { counts: vec![198, 2, 0], time: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = simulate_trajectory(&net, &init, 1e6, &mut rng).unwrap();
        assert_eq!(traj.len(), 3, "initial state plus two removals");
        assert_eq!(traj.final_state(), &[198, 0, 2]);
    }

    #[test]
    fn population_is_conserved_and_monotone() {
        let net = build_sir(&params());
        let init = sir_initial_state(&params(), 2).unwrap();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traj = simulate_trajectory(&net, &init, 2.0, &mut rng).unwrap();
            let mut prev: Option<(u64, u64)> = None;
            for s in traj.states_iter() {
                assert_eq!(s[0] + s[1] + s[2], 200);
                if let Some((x1, x3)) = prev {
                    assert!(s[0] <= x1, "susceptibles increased");
                    assert!(s[2] >= x3, "recovered decreased");
                }
                prev = Some((s[0], s[2]));
            }
        }
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let net = build_sir(&params());
        let init = sir_initial_state(&params(), 2).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        let ta = simulate_trajectory(&net, &init, 1.0, &mut a).unwrap();
        let tb = simulate_trajectory(&net, &init, 1.0, &mut b).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn first_event_time_is_exponential() {
        // With b0 = 0 and j infectives the first event is the minimum of j
        // exponential clocks, i.e. Exp(b1 * j). Kolmogorov-Smirnov at 0.01.
        let j = 5u64;
        let b1 = 7.0;
        let p = SirParameters::new(0.0, b1, 200.0).unwrap();
        let net = build_sir(&p);
        let init = SystemState { counts: vec![195, j, 0], time: 0.0 };
        let n = 2000;
        let mut first_times: Vec<f64> = (0..n)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let traj = simulate_trajectory(&net, &init, 1e6, &mut rng).unwrap();
                traj.times()[1]
            })
            .collect();
        first_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rate = b1 * j as f64;
        let mut d: f64 = 0.0;
        for (i, &t) in first_times.iter().enumerate() {
            let cdf = 1.0 - (-rate * t).exp();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        // Critical value at significance 0.01 is 1.628 / sqrt(n).
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
    }

    #[test]
    fn sampling_is_right_continuous() {
        // Single event at t = 0.5 switching x2 from 2 to 3.
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![198, 2, 0, 197, 3, 0],
            species: 3,
            t_end: 1.0,
        };
        let s = sample_at(&traj, &[0.4, 0.5, 0.6], 1).unwrap();
        assert_eq!(s.counts, vec![2, 3, 3]);
    }

    #[test]
    fn sampling_single_state_trajectory() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![198, 2, 0],
            species: 3,
            t_end: 1.0,
        };
        let s = sample_at(&traj, &[0.0], 1).unwrap();
        assert_eq!(s.counts, vec![2]);
    }

    #[test]
    fn sampling_rejects_out_of_horizon() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![198, 2, 0],
            species: 3,
            t_end: 1.0,
        };
        assert!(matches!(
            sample_at(&traj, &[1.5], 1),
            Err(SimError::SampleOutOfRange { .. })
        ));
        assert!(matches!(
            sample_at(&traj, &[0.1], 5),
            Err(SimError::SpeciesOutOfRange { .. })
        ));
    }

    #[test]
    fn trim_tail_drops_last_observations() {
        let s = ObservationSeries::new(vec![0.0, 1.0, 2.0, 3.0], vec![1, 2, 3, 4]).unwrap();
        let t = s.trim_tail(2).unwrap();
        assert_eq!(t.times, vec![0.0, 1.0]);
        assert_eq!(t.counts, vec![1, 2]);
        assert!(s.trim_tail(4).is_err());
    }
}
