//! System-size moment approximation of the SIR jump process.
//!
//! Writing counts as `x = omega * y + sqrt(omega) * z` separates the
//! macroscopic densities `y` (normalized so `y1 + y2 + y3 = 1`) from the
//! fluctuations `z`. The densities follow the deterministic SIR law; the
//! fluctuation mean and second moments follow linear ODEs driven by the
//! drift matrix `A` (the Jacobian of the macroscopic law) and the diffusion
//! matrix `B`:
//!
//! ```text
//! d/dt E[z]     = A E[z]
//! d/dt E[z z^T] = A E[z z^T] + E[z z^T] A^T + B
//! ```
//!
//! Conservation of the closed population shows up structurally: the columns
//! of `A` and the rows of `B` sum to zero, so row sums of the second-moment
//! matrix started at zero stay zero.
//!
//! The observable infective count then has mean `m_t = omega * y2(t)` and
//! variance `v_t = omega * E[z2^2](t)`, the inputs to the count likelihood.

use serde::Serialize;

use crate::ode::{self, OdeError};
use crate::reaction::SirParameters;

/// Default relative tolerance of the moment integration.
pub const DEFAULT_RTOL: f64 = 1e-8;
/// Default absolute tolerance of the moment integration.
pub const DEFAULT_ATOL: f64 = 1e-10;

/// Macroscopic densities plus fluctuation first and second moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentState {
    /// Densities `(y1, y2, y3)`, summing to 1.
    pub y: [f64; 3],
    /// Fluctuation means `E[z_k]`.
    pub zmean: [f64; 3],
    /// Fluctuation second moments `E[z_i z_j]` (symmetric).
    pub zcov: [[f64; 3]; 3],
    pub time: f64,
}

impl MomentState {
    /// State for exactly known initial counts: fluctuation moments are zero.
    pub fn deterministic(y: [f64; 3], time: f64) -> Self {
        Self { y, zmean: [0.0; 3], zcov: [[0.0; 3]; 3], time }
    }
}

/// Drift (`a`) and diffusion (`b`) matrices of the fluctuation dynamics at a
/// given macroscopic state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftDiffusion {
    pub a: [[f64; 3]; 3],
    pub b: [[f64; 3]; 3],
}

/// Time derivative of the macroscopic densities.
pub fn macroscopic_rhs(y: &[f64; 3], params: &SirParameters) -> [f64; 3] {
    let infection = params.b0 * y[0] * y[1];
    let removal = params.b1 * y[1];
    [-infection, infection - removal, removal]
}

/// Drift and diffusion matrices at densities `y`.
///
/// `a` is the Jacobian of [`macroscopic_rhs`]; `b` sums the squared net
/// change of each reaction weighted by its macroscopic rate.
pub fn drift_diffusion(y: &[f64; 3], params: &SirParameters) -> DriftDiffusion {
    let SirParameters { b0, b1, .. } = *params;
    let a = [
        [-b0 * y[1], -b0 * y[0], 0.0],
        [b0 * y[1], b0 * y[0] - b1, 0.0],
        [0.0, b1, 0.0],
    ];
    let infection = b0 * y[0] * y[1];
    let removal = b1 * y[1];
    let b = [
        [infection, -infection, 0.0],
        [-infection, infection + removal, -removal],
        [0.0, -removal, removal],
    ];
    DriftDiffusion { a, b }
}

/// Time derivative of a full [`MomentState`] (its `time` field carries `dt = 1`).
pub fn moment_rhs(state: &MomentState, params: &SirParameters) -> MomentState {
    let DriftDiffusion { a, b } = drift_diffusion(&state.y, params);
    let mut dzmean = [0.0; 3];
    for i in 0..3 {
        for k in 0..3 {
            dzmean[i] += a[i][k] * state.zmean[k];
        }
    }
    let mut dzcov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = b[i][j];
            for k in 0..3 {
                s += a[i][k] * state.zcov[k][j] + a[j][k] * state.zcov[i][k];
            }
            dzcov[i][j] = s;
        }
    }
    MomentState { y: macroscopic_rhs(&state.y, params), zmean: dzmean, zcov: dzcov, time: 1.0 }
}

/// Mean and variance of the infective count at each requested time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservationMoments {
    pub times: Vec<f64>,
    /// `m_t = omega * y2(t)`.
    pub m: Vec<f64>,
    /// `v_t = omega * E[z2^2](t)`.
    pub v: Vec<f64>,
}

/// Full moment-integration result.
#[derive(Clone, Debug)]
pub struct MomentSeries {
    pub states: Vec<MomentState>,
    pub observation: ObservationMoments,
}

// State vector layout: densities, fluctuation means, upper triangle of the
// second-moment matrix.
fn pack(s: &MomentState) -> [f64; 12] {
    [
        s.y[0], s.y[1], s.y[2], s.zmean[0], s.zmean[1], s.zmean[2], s.zcov[0][0], s.zcov[0][1],
        s.zcov[0][2], s.zcov[1][1], s.zcov[1][2], s.zcov[2][2],
    ]
}

fn unpack(v: &[f64; 12], time: f64) -> MomentState {
    MomentState {
        y: [v[0], v[1], v[2]],
        zmean: [v[3], v[4], v[5]],
        zcov: [[v[6], v[7], v[8]], [v[7], v[9], v[10]], [v[8], v[10], v[11]]],
        time,
    }
}

/// Integrate the coupled 12-dimensional moment system and report the
/// observation moments `(m_t, v_t)` at the requested times.
///
/// `times` must be non-decreasing with `times[0] >= init.time`.
pub fn integrate_moments(
    params: &SirParameters,
    init: &MomentState,
    times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<MomentSeries, OdeError> {
    let rhs = |t: f64, v: &[f64; 12]| {
        let state = unpack(v, t);
        pack(&moment_rhs(&state, params))
    };
    let raw = ode::integrate(rhs, init.time, pack(init), times, rtol, atol)?;
    let states: Vec<MomentState> =
        raw.iter().zip(times).map(|(v, &t)| unpack(v, t)).collect();
    let m = states.iter().map(|s| (params.omega * s.y[1]).max(0.0)).collect();
    let v = states.iter().map(|s| (params.omega * s.zcov[1][1]).max(0.0)).collect();
    Ok(MomentSeries { states, observation: ObservationMoments { times: times.to_vec(), m, v } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> SirParameters {
        SirParameters::new(40.0, 7.0, 200.0).unwrap()
    }

    #[test]
    fn macroscopic_rhs_hand_values() {
        let d = macroscopic_rhs(&[0.99, 0.01, 0.0], &params());
        assert!((d[0] + 0.396).abs() < 1e-12);
        assert!((d[1] - 0.326).abs() < 1e-12);
        assert!((d[2] - 0.07).abs() < 1e-12);
    }

    #[test]
    fn disease_free_equilibrium() {
        let d = macroscopic_rhs(&[1.0, 0.0, 0.0], &params());
        assert_eq!(d, [0.0, 0.0, 0.0]);
        let dd = drift_diffusion(&[1.0, 0.0, 0.0], &params());
        assert_eq!(dd.b, [[0.0; 3]; 3]);
        assert_eq!(dd.a[1], [0.0, 40.0 - 7.0, 0.0]);
    }

    #[test]
    fn rhs_components_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..(1.0 - a));
            let y = [a, b, 1.0 - a - b];
            let d = macroscopic_rhs(&y, &params());
            assert!((d[0] + d[1] + d[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn conservation_structure_of_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..(1.0 - a));
            let y = [a, b, 1.0 - a - b];
            let dd = drift_diffusion(&y, &params());
            for j in 0..3 {
                let col: f64 = (0..3).map(|i| dd.a[i][j]).sum();
                assert!(col.abs() < 1e-14, "column {j} of A sums to {col}");
            }
            for i in 0..3 {
                let row: f64 = dd.b[i].iter().sum();
                assert!(row.abs() < 1e-14, "row {i} of B sums to {row}");
                for j in 0..3 {
                    assert_eq!(dd.b[i][j], dd.b[j][i]);
                }
            }
        }
    }

    #[test]
    fn diffusion_hand_value() {
        let dd = drift_diffusion(&[0.99, 0.01, 0.0], &params());
        assert!((dd.b[1][1] - 0.466).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_has_zero_derivatives() {
        let s = MomentState::deterministic([1.0, 0.0, 0.0], 0.0);
        let d = moment_rhs(&s, &params());
        assert_eq!(d.y, [0.0; 3]);
        assert_eq!(d.zmean, [0.0; 3]);
        assert_eq!(d.zcov, [[0.0; 3]; 3]);
    }

    #[test]
    fn zcov_derivative_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut zcov = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..=i {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    zcov[i][j] = v;
                    zcov[j][i] = v;
                }
            }
            let s = MomentState { y: [0.6, 0.3, 0.1], zmean: [0.0; 3], zcov, time: 0.0 };
            let d = moment_rhs(&s, &params());
            for i in 0..3 {
                for j in 0..3 {
                    assert!((d.zcov[i][j] - d.zcov[j][i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zmean_stays_zero() {
        let init = MomentState::deterministic([0.99, 0.01, 0.0], 0.0);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
        let series =
            integrate_moments(&params(), &init, &times, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
        for s in &series.states {
            for &z in &s.zmean {
                assert!(z.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disease_free_start_stays_at_zero_moments() {
        let init = MomentState::deterministic([1.0, 0.0, 0.0], 0.0);
        let times = vec![0.0, 0.5, 1.0];
        let series =
            integrate_moments(&params(), &init, &times, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
        for (m, v) in series.observation.m.iter().zip(&series.observation.v) {
            assert_eq!(*m, 0.0);
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn pure_decay_matches_binomial_survival() {
        // With b0 = 0 the infective count is a pure death chain: X2(t) is
        // Binomial(x2(0), exp(-b1 t)), and the moment system reproduces its
        // mean and variance exactly.
        let p = SirParameters::new(0.0, 7.0, 200.0).unwrap();
        let c = 0.25;
        let x20 = p.omega * c;
        let init = MomentState::deterministic([1.0 - c, c, 0.0], 0.0);
        let times: Vec<f64> = (0..=8).map(|i| i as f64 * 0.05).collect();
        let series = integrate_moments(&p, &init, &times, 1e-10, 1e-12).unwrap();
        for ((&t, &m), &v) in
            times.iter().zip(&series.observation.m).zip(&series.observation.v)
        {
            let survive = (-p.b1 * t).exp();
            let mean = x20 * survive;
            let var = x20 * survive * (1.0 - survive);
            assert!((m - mean).abs() < 1e-7 * mean.max(1.0), "t = {t}: m {m} vs {mean}");
            assert!((v - var).abs() < 1e-7 * var.max(1.0), "t = {t}: v {v} vs {var}");
        }
    }

    #[test]
    fn densities_sum_to_one_and_row_sums_stay_zero() {
        let init = MomentState::deterministic([0.99, 0.01, 0.0], 0.0);
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025).collect();
        let series =
            integrate_moments(&params(), &init, &times, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
        for s in &series.states {
            let sum: f64 = s.y.iter().sum();
            assert!((sum - 1.0).abs() < 10.0 * DEFAULT_RTOL);
            for i in 0..3 {
                let row: f64 = s.zcov[i].iter().sum();
                assert!(row.abs() < 10.0 * DEFAULT_RTOL, "row sum {row} at t = {}", s.time);
            }
        }
    }

    #[test]
    fn refinement_changes_little() {
        let init = MomentState::deterministic([0.99, 0.01, 0.0], 0.0);
        let times = vec![0.1, 0.2, 0.3];
        let coarse = integrate_moments(&params(), &init, &times, 1e-8, 1e-10).unwrap();
        let fine = integrate_moments(&params(), &init, &times, 5e-9, 5e-11).unwrap();
        for i in 0..times.len() {
            assert!((coarse.observation.m[i] - fine.observation.m[i]).abs() < 1e-8 * 200.0);
            assert!((coarse.observation.v[i] - fine.observation.v[i]).abs() < 1e-8 * 200.0);
        }
    }
}
