//! Adaptive explicit Runge-Kutta integration with dense output.
//!
//! Dormand-Prince 5(4): a 7-stage FSAL pair with embedded 4th-order error
//! estimation and the standard quartic interpolant for continuous output
//! inside accepted steps. Suited to the smooth, non-stiff moment systems
//! integrated here.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step limit {0} exceeded")]
    TooManySteps(usize),
    #[error("output times must be non-decreasing and start at or after t0")]
    BadOutputTimes,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

// The 5th-order solution weights are row 7 of A (FSAL), applied directly.

/// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Weights of the dense-output correction term.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;
const MAX_STEPS: usize = 1_000_000;

/// Integrate `dy/dt = f(t, y)` from `(t0, y0)`, returning the state at each
/// requested output time (dense output; times need not align with steps).
///
/// `output_times` must be non-decreasing with every entry `>= t0`.
pub fn integrate<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    output_times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Vec<[f64; N]>, OdeError> {
    if output_times.windows(2).any(|w| w[0] > w[1]) || output_times.iter().any(|&t| t < t0) {
        return Err(OdeError::BadOutputTimes);
    }
    let mut outputs = Vec::with_capacity(output_times.len());
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] == t0 {
        outputs.push(y0);
        next_out += 1;
    }
    if next_out == output_times.len() {
        return Ok(outputs);
    }
    let t_final = output_times[output_times.len() - 1];
    let span = t_final - t0;

    let mut t = t0;
    let mut y = y0;
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y);
    let mut h = initial_step(&f, t, &y, &k[0], rtol, atol).min(span);
    let mut rejected = false;

    for _ in 0..MAX_STEPS {
        if t_final - t <= span * 1e-14 {
            // Remaining output times are within rounding of t.
            while next_out < output_times.len() {
                outputs.push(y);
                next_out += 1;
            }
            return Ok(outputs);
        }
        if h < span * 1e-14 {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
        if t + h > t_final {
            h = t_final - t;
        }

        for stage in 1..6 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = A[stage][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[stage] = f(t + C[stage] * h, &ys);
        }
        // 6th row of A equals B: the last stage lands on the new value.
        let mut y_new = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            let a = A[6][j];
            if a != 0.0 {
                for i in 0..N {
                    y_new[i] += h * a * kj[i];
                }
            }
        }
        k[6] = f(t + h, &y_new);

        let mut err_sq = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h;
            let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / N as f64).sqrt();

        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFiniteState { t: t + h });
        }

        if err <= 1.0 {
            // Dense output for every requested time inside (t, t + h].
            while next_out < output_times.len() && output_times[next_out] <= t + h {
                let theta = (output_times[next_out] - t) / h;
                outputs.push(interpolate(&y, &y_new, &k, h, theta));
                next_out += 1;
            }
            t += h;
            y = y_new;
            k[0] = k[6];
            if next_out == output_times.len() {
                return Ok(outputs);
            }
            let scale = if err == 0.0 { MAX_SCALE } else { SAFETY * err.powf(-0.2) };
            let mut scale = scale.clamp(MIN_SCALE, MAX_SCALE);
            if rejected {
                scale = scale.min(1.0);
            }
            rejected = false;
            h *= scale;
        } else {
            rejected = true;
            h *= (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, 1.0);
        }
    }
    Err(OdeError::TooManySteps(MAX_STEPS))
}

/// Quartic interpolant over an accepted step, evaluated at fraction `theta`.
fn interpolate<const N: usize>(
    y: &[f64; N],
    y_new: &[f64; N],
    k: &[[f64; N]; 7],
    h: f64,
    theta: f64,
) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        let c4 = ydiff - h * k[6][i] - bspl;
        let mut c5 = 0.0;
        for (j, kj) in k.iter().enumerate() {
            c5 += D[j] * kj[i];
        }
        c5 *= h;
        out[i] = y[i] + theta * (ydiff + (1.0 - theta) * (bspl + theta * (c4 + (1.0 - theta) * c5)));
    }
    out
}

/// Conservative starting step from the scaled size of the initial derivative.
fn initial_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    rtol: f64,
    atol: f64,
) -> f64 {
    let norm = |v: &[f64; N], y: &[f64; N]| {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| {
                let sc = atol + rtol * yi.abs();
                (vi / sc) * (vi / sc)
            })
            .sum();
        (s / N as f64).sqrt()
    };
    let d0 = norm(y0, y0);
    let d1 = norm(f0, y0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    // One explicit Euler probe to bound the second derivative.
    let mut y1 = *y0;
    for i in 0..N {
        y1[i] += h0 * f0[i];
    }
    let f1 = f(t0 + h0, &y1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = norm(&diff, y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
