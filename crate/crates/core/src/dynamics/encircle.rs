//! Propagation along a parameter path, adiabatic projection and the
//! loop experiments built on them.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::branches::{track_branches, BranchTrack, DEFAULT_BRANCH_SAMPLES};
use super::integrator::{integrate, StepStats, Tolerances};
use super::path::{Direction, EncirclementPath, ParameterPath};
use crate::model::{
    c_product, eigensystem, hamiltonian_unchecked, AdiabaticFrame, EffectiveParams, Handedness,
};
use crate::{Error, Result, Vec2};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub const DEFAULT_SAMPLES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncircleOptions {
    pub tolerances: Tolerances,
    /// Number of equally spaced output times, both ends included.
    pub samples: usize,
    /// Minimum number of intervals for branch tracking.
    pub branch_samples: usize,
}

impl Default for EncircleOptions {
    fn default() -> Self {
        EncircleOptions {
            tolerances: Tolerances::default(),
            samples: DEFAULT_SAMPLES,
            branch_samples: DEFAULT_BRANCH_SAMPLES,
        }
    }
}

/// Bare amplitudes c(t) at equally spaced times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec2>,
    pub stats: StepStats,
}

fn sample_times(period: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n)
        .map(|k| {
            if k == n - 1 {
                period
            } else {
                period * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn hamiltonian_on_path<P: ParameterPath>(
    base: &EffectiveParams,
    path: &P,
    t: f64,
) -> crate::model::ComplexMatrix2 {
    let t = t.clamp(0.0, path.period());
    let (d, o) = path.point_unchecked(t);
    hamiltonian_unchecked(&base.at(d, o))
}

/// Solve i dc/dt = H(t) c along `path` and sample at `samples` equally
/// spaced times on [0, T].
pub fn propagate<P: ParameterPath>(
    base: &EffectiveParams,
    path: &P,
    c0: Vec2,
    tolerances: Tolerances,
    samples: usize,
) -> Result<Trajectory> {
    base.validate()?;
    let period = path.period();
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "path period must be positive, got {period}"
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidParams("need at least 2 samples".into()));
    }
    let (d0, o0) = path.point(0.0)?;
    base.at(d0, o0).validate()?;
    if !c0.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let times = sample_times(period, samples);
    let rhs = |t: f64, c: &Vec2| {
        let hc = hamiltonian_on_path(base, path, t).mul_vec(c);
        [-I * hc[0], -I * hc[1]]
    };
    let (amplitudes, stats) = integrate(rhs, c0, &times, tolerances)?;
    Ok(Trajectory {
        times,
        amplitudes,
        stats,
    })
}

/// Remove the trace from the dynamics: a(t) = exp(i∫₀ᵗ tr H/2) c(t).
///
/// The factor is exp(Γt/2 + i∫Δ/2) with Γ = (Γ₁+Γ₂)/2, so a obeys
/// i da/dt = (H − tr H/2) a. The Δ integral uses the trapezoidal rule on a
/// 16-fold refinement of the sample grid.
pub fn gauge_transform<P: ParameterPath>(
    base: &EffectiveParams,
    path: &P,
    traj: &Trajectory,
) -> Result<Vec<Vec2>> {
    const SUB: usize = 16;
    let gamma = base.mean_decay();
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(traj.times.len());
    let mut prev_t = match traj.times.first() {
        Some(&t) => t,
        None => return Ok(out),
    };
    for (k, (&t, c)) in traj.times.iter().zip(&traj.amplitudes).enumerate() {
        if k > 0 {
            let h = (t - prev_t) / SUB as f64;
            let mut acc = 0.0;
            for j in 0..=SUB {
                let s = if j == SUB { t } else { prev_t + h * j as f64 };
                let w = if j == 0 || j == SUB { 0.5 } else { 1.0 };
                acc += w * path.point(s)?.0;
            }
            integral += acc * h;
            prev_t = t;
        }
        let factor = Complex64::new(0.5 * gamma * t, 0.5 * integral).exp();
        out.push([factor * c[0], factor * c[1]]);
    }
    Ok(out)
}

/// Adiabatic coefficients a± = (φ̃±|c) of `c` in `frame`.
pub fn project_adiabatic(c: &Vec2, frame: &AdiabaticFrame) -> Result<(Complex64, Complex64)> {
    if frame.at_ep {
        return Err(Error::AtExceptionalPoint);
    }
    Ok((
        c_product(&frame.left_plus, c),
        c_product(&frame.left_minus, c),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdiabaticState {
    Plus,
    Minus,
}

impl AdiabaticState {
    pub fn as_str(self) -> &'static str {
        match self {
            AdiabaticState::Plus => "plus",
            AdiabaticState::Minus => "minus",
        }
    }
}

impl fmt::Display for AdiabaticState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Plus,
    Minus,
    /// (φ₊ + φ₋)/√2.
    Mixed,
    Custom(Vec2),
}

impl InitialState {
    pub fn name(&self) -> &'static str {
        match self {
            InitialState::Plus => "plus",
            InitialState::Minus => "minus",
            InitialState::Mixed => "mixed",
            InitialState::Custom(_) => "custom",
        }
    }

    fn amplitudes(&self, frame: &AdiabaticFrame) -> Result<Vec2> {
        let v = match *self {
            InitialState::Plus => frame.phi_plus,
            InitialState::Minus => frame.phi_minus,
            InitialState::Mixed => [
                frame.phi_plus[0] + frame.phi_minus[0],
                frame.phi_plus[1] + frame.phi_minus[1],
            ],
            InitialState::Custom(v) => v,
        };
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParams(
                "initial state must be a finite non-zero vector".into(),
            ));
        }
        Ok([v[0] / n, v[1] / n])
    }
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plus" | "+" => Ok(InitialState::Plus),
            "minus" | "-" => Ok(InitialState::Minus),
            "mixed" => Ok(InitialState::Mixed),
            other => Err(Error::InvalidParams(format!(
                "unknown initial state '{other}'"
            ))),
        }
    }
}

/// One output time of an encirclement, in continuously tracked labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    /// t / T.
    pub tau: f64,
    pub c: Vec2,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub pop_plus_norm: f64,
    pub pop_minus_norm: f64,
    pub raw_norm: f64,
    /// +1 where the tracked "+" branch is the principal "+", −1 otherwise.
    pub branch_label: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncirclementSummary {
    /// Final populations in the principal labels of the start point.
    pub final_pop_plus_norm: f64,
    pub final_pop_minus_norm: f64,
    pub final_pop_plus_raw: f64,
    pub final_pop_minus_raw: f64,
    pub eigenvalue_swap: bool,
    pub dominant_final_state: AdiabaticState,
    /// Final population of whichever state has the smaller decay rate
    /// (larger Im γ) at the start point.
    pub final_pop_least_lossy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncirclementResult {
    pub summary: EncirclementSummary,
    pub timeseries: Vec<TimePoint>,
    /// Times where the tracked "+" population crosses 1/2.
    pub nonadiabatic_transitions: Vec<f64>,
    pub branches: BranchTrack,
    pub stats: StepStats,
}

fn flip(v: &Vec2) -> Vec2 {
    [-v[0], -v[1]]
}

/// Run one encirclement: propagate, track branches and project.
pub fn run_encirclement<P: ParameterPath>(
    base: &EffectiveParams,
    path: &P,
    initial: InitialState,
    opts: &EncircleOptions,
) -> Result<EncirclementResult> {
    base.validate()?;
    let branches = track_branches(base, path, opts.branch_samples)?;
    let frame_at = |t: f64| -> Result<AdiabaticFrame> {
        let (d, o) = path.point(t)?;
        eigensystem(&hamiltonian_unchecked(&base.at(d, o)))
    };
    let frame0 = frame_at(0.0)?;
    if frame0.at_ep {
        return Err(Error::AtExceptionalPoint);
    }
    let c0 = initial.amplitudes(&frame0)?;
    let traj = propagate(base, path, c0, opts.tolerances, opts.samples)?;
    let period = path.period();

    let mut timeseries = Vec::with_capacity(traj.times.len());
    let mut prev: Option<AdiabaticFrame> = None;
    for (&t, c) in traj.times.iter().zip(&traj.amplitudes) {
        let principal = frame_at(t)?;
        let label = branches.label_at(t);
        let mut frame = if label == 1 {
            principal
        } else {
            principal.swapped()
        };
        if let Some(p) = prev {
            if c_product(&p.phi_plus, &frame.phi_plus).re < 0.0 {
                frame.phi_plus = flip(&frame.phi_plus);
                frame.left_plus = flip(&frame.left_plus);
            }
            if c_product(&p.phi_minus, &frame.phi_minus).re < 0.0 {
                frame.phi_minus = flip(&frame.phi_minus);
                frame.left_minus = flip(&frame.left_minus);
            }
        }
        let (a_plus, a_minus) = project_adiabatic(c, &frame)?;
        let (pp, pm) = (a_plus.norm_sqr(), a_minus.norm_sqr());
        let total = pp + pm;
        let (pop_plus_norm, pop_minus_norm) = if total > 0.0 {
            (pp / total, pm / total)
        } else {
            (f64::NAN, f64::NAN)
        };
        timeseries.push(TimePoint {
            tau: t / period,
            c: *c,
            a_plus,
            a_minus,
            pop_plus_norm,
            pop_minus_norm,
            raw_norm: c[0].norm_sqr() + c[1].norm_sqr(),
            branch_label: label,
        });
        prev = Some(frame);
    }

    let mut nonadiabatic_transitions = Vec::new();
    for w in timeseries.windows(2) {
        let (p0, p1) = (w[0].pop_plus_norm - 0.5, w[1].pop_plus_norm - 0.5);
        if p0.is_finite() && p1.is_finite() && (p0 < 0.0) != (p1 < 0.0) {
            let s = p0 / (p0 - p1);
            nonadiabatic_transitions.push(period * (w[0].tau + s * (w[1].tau - w[0].tau)));
        }
    }

    let c_end = traj.amplitudes.last().copied().unwrap_or(c0);
    let (a_plus, a_minus) = project_adiabatic(&c_end, &frame0)?;
    let (raw_p, raw_m) = (a_plus.norm_sqr(), a_minus.norm_sqr());
    let total = raw_p + raw_m;
    if !(total > 0.0) {
        return Err(Error::NonFinite { t: period });
    }
    let (norm_p, norm_m) = (raw_p / total, raw_m / total);
    let least_lossy_plus = frame0.gamma_plus.im >= frame0.gamma_minus.im;
    let summary = EncirclementSummary {
        final_pop_plus_norm: norm_p,
        final_pop_minus_norm: norm_m,
        final_pop_plus_raw: raw_p,
        final_pop_minus_raw: raw_m,
        eigenvalue_swap: branches.eigenvalue_swap,
        dominant_final_state: if norm_p >= norm_m {
            AdiabaticState::Plus
        } else {
            AdiabaticState::Minus
        },
        final_pop_least_lossy: if least_lossy_plus { norm_p } else { norm_m },
    };
    Ok(EncirclementResult {
        summary,
        timeseries,
        nonadiabatic_transitions,
        branches,
        stats: traj.stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSweepRow {
    pub loop_time: f64,
    pub direction: Direction,
    pub enantiomer: Handedness,
    pub initial: String,
    pub summary: Option<EncirclementSummary>,
    /// "ok" or the error kind.
    pub status: String,
}

/// Encircle with every loop time, both directions and both enantiomers.
///
/// `template` fixes the center, radius and start phase; `base` fixes the
/// decay rates and Raman coupling. Rows come out ordered by loop time, then
/// direction, then enantiomer, regardless of scheduling. Failed runs are
/// reported in the row status rather than aborting the sweep.
pub fn loop_time_sweep(
    base: &EffectiveParams,
    template: &EncirclementPath,
    loop_times: &[f64],
    initial: InitialState,
    opts: &EncircleOptions,
) -> Result<Vec<LoopSweepRow>> {
    base.validate()?;
    if loop_times.is_empty() {
        return Err(Error::InvalidParams("loop_times is empty".into()));
    }
    if loop_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParams(
            "loop times must be positive and finite".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &t in loop_times {
        for dir in Direction::BOTH {
            for hand in Handedness::BOTH {
                jobs.push((t, dir, hand));
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(t, dir, hand)| {
            let path = template.with_loop_time(t).with_direction(dir);
            let params = base.with_handedness(hand);
            let outcome = path
                .validate()
                .and_then(|_| run_encirclement(&params, &path, initial, opts));
            let (summary, status) = match outcome {
                Ok(r) => (Some(r.summary), "ok".to_string()),
                Err(e) => (None, e.kind().to_string()),
            };
            LoopSweepRow {
                loop_time: t,
                direction: dir,
                enantiomer: hand,
                initial: initial.name().to_string(),
                summary,
                status,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::path::FixedPoint;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tight() -> Tolerances {
        Tolerances {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
        }
    }

    #[test]
    fn diagonal_decay() {
        // Δ = 0, no coupling: c₁(t) = e^{−Γ₁t/2}.
        let base = EffectiveParams::new(2.0, 0.0, 0.0, 0.0).with_raman(c(0.0, 0.0));
        let path = FixedPoint {
            delta: 0.0,
            omega12: 0.0,
            duration: 1.0,
        };
        let tr = propagate(&base, &path, [c(1.0, 0.0), c(0.0, 0.0)], tight(), 11).unwrap();
        let end = tr.amplitudes[10];
        assert!((end[0] - c((-1.0f64).exp(), 0.0)).norm() < 1e-10);
        assert!(end[1].norm() < 1e-14);
    }

    #[test]
    fn hermitian_rabi() {
        // |c₁|² = cos²(Ωt) for Γ = 0, Δ = 0.
        let base = EffectiveParams::new(0.0, 0.0, 0.0, 0.0);
        let path = FixedPoint {
            delta: 0.0,
            omega12: 1.0,
            duration: std::f64::consts::PI,
        };
        let tr = propagate(&base, &path, [c(1.0, 0.0), c(0.0, 0.0)], tight(), 101).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.amplitudes) {
            assert!((y[0].norm_sqr() - t.cos().powi(2)).abs() < 1e-9);
            assert!((y[0].norm_sqr() + y[1].norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dark_state_does_not_decay() {
        // Δ = 0, Ω₁₂ = 0, raman = √(Γ₁Γ₂): (√Γ₂, −√Γ₁) is an exact zero mode.
        let (g1, g2) = (1.5e-4, 8.8e-5);
        let base = EffectiveParams::new(g1, g2, 0.0, 0.0);
        let path = FixedPoint {
            delta: 0.0,
            omega12: 0.0,
            duration: 1e6,
        };
        let n = (g1 + g2).sqrt();
        let c0 = [c(g2.sqrt() / n, 0.0), c(-g1.sqrt() / n, 0.0)];
        let tr = propagate(&base, &path, c0, tight(), 5).unwrap();
        let end = tr.amplitudes[4];
        assert!((end[0].norm_sqr() + end[1].norm_sqr() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn norm_never_increases() {
        let base = EffectiveParams::new(1.5e-4, 8.8e-5, 0.0, 0.0);
        let path = EncirclementPath::new(-1.1489e-4, -1.55e-5, 3e-5, 5e4, Direction::AsWritten);
        let tr = propagate(&base, &path, [c(0.6, 0.1), c(-0.3, 0.7)], tight(), 400).unwrap();
        for w in tr.amplitudes.windows(2) {
            let n0 = w[0][0].norm_sqr() + w[0][1].norm_sqr();
            let n1 = w[1][0].norm_sqr() + w[1][1].norm_sqr();
            assert!(n1 <= n0 * (1.0 + 1e-9), "{n0} -> {n1}");
        }
    }

    #[test]
    fn gauge_removes_trace() {
        // Finite-difference check of i da/dt = (H − tr/2) a on a dense trajectory.
        let base = EffectiveParams::new(0.3, 0.1, 0.0, 0.0);
        let path = EncirclementPath::new(0.2, -0.1, 0.15, 10.0, Direction::AsWritten);
        let tr = propagate(&base, &path, [c(1.0, 0.0), c(0.0, 0.0)], tight(), 20001).unwrap();
        let a = gauge_transform(&base, &path, &tr).unwrap();
        let dt = tr.times[1] - tr.times[0];
        for k in (1000..19000).step_by(1500) {
            let h = hamiltonian_on_path(&base, &path, tr.times[k]);
            let half_tr = 0.5 * h.trace();
            let ha = h.mul_vec(&a[k]);
            for i in 0..2 {
                let lhs = I * (a[k + 1][i] - a[k - 1][i]) / (2.0 * dt);
                let rhs = ha[i] - half_tr * a[k][i];
                assert!((lhs - rhs).norm() < 1e-6, "k={k} i={i}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn gauge_of_constant_detuning() {
        // H = diag(0, Δ): a₁ = e^{iΔt/2}, a₂ = e^{−iΔt/2}.
        let base = EffectiveParams::new(0.0, 0.0, 0.0, 0.0);
        let path = FixedPoint {
            delta: 2.0,
            omega12: 0.0,
            duration: 1.0,
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tr = propagate(&base, &path, [c(s, 0.0), c(s, 0.0)], tight(), 3).unwrap();
        let a = gauge_transform(&base, &path, &tr).unwrap();
        assert!((a[2][0] - c(s, 0.0) * c(0.0, 1.0).exp()).norm() < 1e-9);
        assert!((a[2][1] - c(s, 0.0) * c(0.0, -1.0).exp()).norm() < 1e-9);
    }

    #[test]
    fn projection_at_ep_fails() {
        let ep = crate::ep::closed_form_eps(1.0, 0.5, Handedness::Right).unwrap()[0];
        let base = EffectiveParams::new(1.0, 0.5, ep.delta, ep.omega12);
        let frame = eigensystem(&hamiltonian_unchecked(&base)).unwrap();
        assert!(frame.at_ep);
        assert!(matches!(
            project_adiabatic(&[c(1.0, 0.0), c(0.0, 0.0)], &frame),
            Err(Error::AtExceptionalPoint)
        ));
    }

    #[test]
    fn projection_reconstructs_state() {
        let base = EffectiveParams::new(0.4, 0.1, 0.3, -0.2);
        let frame = eigensystem(&hamiltonian_unchecked(&base)).unwrap();
        let v = [c(0.3, -0.2), c(0.5, 0.9)];
        let (ap, am) = project_adiabatic(&v, &frame).unwrap();
        for i in 0..2 {
            assert!((ap * frame.phi_plus[i] + am * frame.phi_minus[i] - v[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn slow_loop_far_from_ep_is_adiabatic() {
        // No EP inside: starting in the less lossy state, the system
        // follows its branch and returns to it.
        let base = EffectiveParams::new(1e-3, 1e-3, 0.0, 0.0);
        let path = EncirclementPath::new(0.05, 0.05, 0.01, 2e4, Direction::AsWritten);
        let (d, o) = path.path_point(0.0).unwrap();
        let f0 = eigensystem(&hamiltonian_unchecked(&base.at(d, o))).unwrap();
        let initial = if f0.gamma_plus.im >= f0.gamma_minus.im {
            InitialState::Plus
        } else {
            InitialState::Minus
        };
        let opts = EncircleOptions {
            samples: 256,
            branch_samples: 512,
            ..Default::default()
        };
        let r = run_encirclement(&base, &path, initial, &opts).unwrap();
        assert!(!r.summary.eigenvalue_swap);
        assert!(r.summary.final_pop_least_lossy > 0.999, "{:?}", r.summary);
        assert!(r.nonadiabatic_transitions.is_empty());
    }

    #[test]
    fn sweep_order_is_deterministic() {
        let base = EffectiveParams::new(1.5e-4, 8.8e-5, 0.0, 0.0);
        let path = EncirclementPath::new(-1.1489e-4, -1.55e-5, 1.55e-5, 1.0, Direction::AsWritten);
        let opts = EncircleOptions {
            samples: 16,
            branch_samples: 64,
            ..Default::default()
        };
        let rows = loop_time_sweep(&base, &path, &[1e3, 2e3], InitialState::Plus, &opts).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(
            (rows[0].loop_time, rows[0].direction, rows[0].enantiomer),
            (1e3, Direction::AsWritten, Handedness::Right)
        );
        assert_eq!(
            (rows[1].direction, rows[1].enantiomer),
            (Direction::AsWritten, Handedness::Left)
        );
        assert_eq!(
            (rows[2].direction, rows[2].enantiomer),
            (Direction::Reversed, Handedness::Right)
        );
        assert_eq!(rows[4].loop_time, 2e3);
        assert!(rows.iter().all(|r| r.status == "ok"));
        let again = loop_time_sweep(&base, &path, &[1e3, 2e3], InitialState::Plus, &opts).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn sweep_rejects_bad_times() {
        let base = EffectiveParams::new(1.0, 1.0, 0.0, 0.0);
        let path = EncirclementPath::new(0.0, 0.0, 0.1, 1.0, Direction::AsWritten);
        let opts = EncircleOptions::default();
        assert!(loop_time_sweep(&base, &path, &[], InitialState::Plus, &opts).is_err());
        assert!(loop_time_sweep(&base, &path, &[-1.0], InitialState::Plus, &opts).is_err());
    }
}
