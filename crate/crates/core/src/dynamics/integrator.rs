//! Adaptive Dormand–Prince 5(4) integrator for two complex amplitudes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus the embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Error-control tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn axpy(y: &Vec2, terms: &[(f64, &Vec2)], h: f64) -> Vec2 {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

fn finite(y: &Vec2) -> bool {
    y.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Integrate dy/dt = f(t, y) from `times[0]` and return y at every entry of
/// `times` (ascending). Steps are clipped so that each output time is hit
/// exactly.
pub fn integrate<F>(
    f: F,
    y0: Vec2,
    times: &[f64],
    tol: Tolerances,
) -> Result<(Vec<Vec2>, StepStats)>
where
    F: Fn(f64, &Vec2) -> Vec2,
{
    if times.is_empty() {
        return Ok((Vec::new(), StepStats::default()));
    }
    if !(tol.rel_tol > 0.0 && tol.abs_tol > 0.0) {
        return Err(Error::InvalidParams("tolerances must be positive".into()));
    }
    let t_end = *times.last().unwrap();
    let mut t = times[0];
    let span = (t_end - t).abs().max(f64::MIN_POSITIVE);
    let mut y = y0;
    let mut out = Vec::with_capacity(times.len());
    out.push(y);
    let mut stats = StepStats::default();

    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = {
        let ny = (y[0].norm_sqr() + y[1].norm_sqr()).sqrt();
        let nf = (k1[0].norm_sqr() + k1[1].norm_sqr()).sqrt();
        if nf > 0.0 && ny > 0.0 {
            (0.01 * ny / nf).min(span)
        } else {
            1e-3 * span
        }
    };

    let err_norm = |y: &Vec2, ynew: &Vec2, e: &Vec2| -> f64 {
        let mut s = 0.0;
        for i in 0..2 {
            let sc = tol.abs_tol + tol.rel_tol * y[i].norm().max(ynew[i].norm());
            s += (e[i].norm() / sc).powi(2);
        }
        (0.5 * s).sqrt()
    };

    for &target in &times[1..] {
        let mut last_rejected = false;
        while t < target {
            let remaining = target - t;
            let clipped = h >= remaining;
            let step = if clipped { remaining } else { h };
            if step <= 1e-14 * span.max(t.abs()) {
                return Err(Error::StepUnderflow { t, h: step });
            }

            let k2 = f(t + C2 * step, &axpy(&y, &[(A21, &k1)], step));
            let k3 = f(t + C3 * step, &axpy(&y, &[(A31, &k1), (A32, &k2)], step));
            let k4 = f(
                t + C4 * step,
                &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], step),
            );
            let k5 = f(
                t + C5 * step,
                &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], step),
            );
            let k6 = f(
                t + step,
                &axpy(
                    &y,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                    step,
                ),
            );
            let ynew = axpy(
                &y,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
                step,
            );
            let k7 = f(t + step, &ynew);
            stats.evaluations += 6;

            let mut e = [Complex64::new(0.0, 0.0); 2];
            for i in 0..2 {
                e[i] = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err = err_norm(&y, &ynew, &e);
            if !err.is_finite() || !finite(&ynew) {
                if !finite(&y) {
                    return Err(Error::NonFinite { t });
                }
                h = 0.2 * step;
                stats.rejected += 1;
                last_rejected = true;
                continue;
            }

            if err <= 1.0 {
                t = if clipped { target } else { t + step };
                y = ynew;
                k1 = k7;
                stats.accepted += 1;
                let mut factor = if err == 0.0 {
                    5.0
                } else {
                    0.9 * err.powf(-0.2)
                };
                factor = factor.clamp(0.2, 5.0);
                if last_rejected {
                    factor = factor.min(1.0);
                }
                // A clipped step says nothing about the natural step size.
                if !clipped || factor < 1.0 {
                    h = step * factor;
                }
                last_rejected = false;
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                stats.rejected += 1;
                last_rejected = true;
            }
        }
        out.push(y);
    }
    Ok((out, stats))
}
