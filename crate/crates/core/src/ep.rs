//! Exceptional points: closed form, Newton refinement, parameter sweeps,
//! eigengap maps and the response-scaling probe.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{canonical_raman, hamiltonian_unchecked, EffectiveParams, Handedness};
use crate::{Error, Result};

/// One exceptional point in the (Δ, Ω₁₂) plane.
///
/// Ω₁₂ is the field parameter, i.e. the Right-enantiomer Rabi frequency
/// ([`EffectiveParams::omega12`]); the Left enantiomer's EPs therefore appear
/// reflected through Ω₁₂ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpPoint {
    pub delta: f64,
    pub omega12: f64,
    pub handedness: Handedness,
    /// |δ| at the point.
    pub residual: f64,
    /// 0: the EP with Δ = +√(Γ₁Γ₂); 1: the one with Δ = −√(Γ₁Γ₂).
    pub branch_index: u8,
}

fn params_at(
    gamma1: f64,
    gamma2: f64,
    raman: Complex64,
    handedness: Handedness,
    delta: f64,
    omega12: f64,
) -> EffectiveParams {
    EffectiveParams {
        gamma1,
        gamma2,
        delta,
        omega12,
        raman,
        handedness,
    }
}

/// δ and its analytic derivatives with respect to Δ and Ω₁₂.
fn delta_and_gradient(p: &EffectiveParams) -> (Complex64, Complex64, Complex64) {
    let h = hamiltonian_unchecked(p);
    let d = h.h11 - h.h22;
    let value = d * d + 4.0 * h.h12 * h.h21;
    // h11 − h22 = −Δ − i(Γ₁−Γ₂)/2; h12 and h21 carry s·Ω₁₂.
    let d_delta = -2.0 * d;
    let d_omega = 4.0 * p.handedness.sign() * (h.h12 + h.h21);
    (value, d_delta, d_omega)
}

fn delta_at(
    gamma1: f64,
    gamma2: f64,
    raman: Complex64,
    hand: Handedness,
    x: [f64; 2],
) -> Complex64 {
    delta_and_gradient(&params_at(gamma1, gamma2, raman, hand, x[0], x[1])).0
}

/// The two EPs of one enantiomer with canonical Raman coupling √(Γ₁Γ₂).
///
/// δ = 0 splits into Δ² + 4Ω₁₂² = (Γ₁+Γ₂)²/4 and Δ(Γ₁−Γ₂) = 4sΩ₁₂√(Γ₁Γ₂),
/// whose solutions are Δ = ±√(Γ₁Γ₂), sΩ₁₂ = ±(Γ₁−Γ₂)/4 with matched signs.
pub fn closed_form_eps(gamma1: f64, gamma2: f64, handedness: Handedness) -> Result<[EpPoint; 2]> {
    if !(gamma1.is_finite() && gamma2.is_finite()) || gamma1 < 0.0 || gamma2 < 0.0 {
        return Err(Error::InvalidParams(format!(
            "decay rates must be finite and non-negative (gamma1 = {gamma1}, gamma2 = {gamma2})"
        )));
    }
    if gamma1 == 0.0 && gamma2 == 0.0 {
        return Err(Error::HermitianLimit);
    }
    let raman = Complex64::new(canonical_raman(gamma1, gamma2), 0.0);
    let d = raman.re;
    let w = 0.25 * (gamma1 - gamma2) * handedness.sign();
    let make = |branch: u8, delta: f64, omega: f64| {
        let residual = delta_at(gamma1, gamma2, raman, handedness, [delta, omega]).norm();
        EpPoint {
            delta,
            omega12: omega,
            handedness,
            residual,
            branch_index: branch,
        }
    };
    Ok([make(0, d, w), make(1, -d, -w)])
}

/// Settings for [`refine_ep_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Target |δ|; `None` means 10⁻¹²·(Γ₁+Γ₂)².
    pub tolerance: Option<f64>,
    /// Largest allowed distance between guess and result; `None` means 0.5·(Γ₁+Γ₂).
    pub trust_radius: Option<f64>,
    pub max_newton: usize,
    pub max_simplex: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            tolerance: None,
            trust_radius: None,
            max_newton: 50,
            max_simplex: 500,
        }
    }
}

/// Newton refinement of an EP guess for canonical Raman coupling.
pub fn refine_ep(
    guess: &EpPoint,
    gamma1: f64,
    gamma2: f64,
    handedness: Handedness,
    tolerance: Option<f64>,
) -> Result<EpPoint> {
    let template = EffectiveParams::new(gamma1, gamma2, 0.0, 0.0).with_handedness(handedness);
    refine_ep_with(
        &template,
        [guess.delta, guess.omega12],
        guess.branch_index,
        RefineOptions {
            tolerance,
            ..RefineOptions::default()
        },
    )
}

/// Locate δ = 0 near `guess` = (Δ, Ω₁₂) for the Γ₁, Γ₂, Raman coupling
/// and handedness of `template`.
///
/// Newton iteration on (Re δ, Im δ) with the analytic Jacobian. If the
/// Jacobian is singular or an iterate leaves the trust region, Nelder–Mead on
/// |δ|² restricted to the trust region takes over and Newton polishes its
/// best point.
pub fn refine_ep_with(
    template: &EffectiveParams,
    guess: [f64; 2],
    branch_index: u8,
    opts: RefineOptions,
) -> Result<EpPoint> {
    template.validate()?;
    let (g1, g2, raman, hand) = (
        template.gamma1,
        template.gamma2,
        template.raman,
        template.handedness,
    );
    let sum = g1 + g2;
    if sum == 0.0 {
        return Err(Error::HermitianLimit);
    }
    if !(guess[0].is_finite() && guess[1].is_finite()) {
        return Err(Error::InvalidParams("non-finite EP guess".into()));
    }
    let tol = opts.tolerance.unwrap_or(1e-12 * sum * sum);
    let radius = opts.trust_radius.unwrap_or(0.5 * sum);
    let eval = |x: [f64; 2]| delta_at(g1, g2, raman, hand, x).norm();
    let inside =
        |x: [f64; 2]| ((x[0] - guess[0]).powi(2) + (x[1] - guess[1]).powi(2)).sqrt() <= radius;
    let point = |x: [f64; 2], residual: f64| EpPoint {
        delta: x[0],
        omega12: x[1],
        handedness: hand,
        residual,
        branch_index,
    };

    let (mut best, mut best_res, mut iterations) = (guess, eval(guess), 0usize);
    if best_res <= tol {
        return Ok(point(best, best_res));
    }

    let newton = |start: [f64; 2], max_iter: usize| -> ([f64; 2], f64, usize, bool) {
        let mut x = start;
        let mut res = eval(x);
        for k in 0..max_iter {
            if res <= tol {
                return (x, res, k, true);
            }
            let p = params_at(g1, g2, raman, hand, x[0], x[1]);
            let (f, dd, dw) = delta_and_gradient(&p);
            // [Re dd, Re dw; Im dd, Im dw] · step = −[Re f; Im f]
            let det = dd.re * dw.im - dw.re * dd.im;
            let jnorm = dd.norm() * dw.norm();
            if jnorm == 0.0 || det.abs() <= 1e-14 * jnorm {
                return (x, res, k, false);
            }
            let sx = (-f.re * dw.im + dw.re * f.im) / det;
            let sy = (-dd.re * f.im + dd.im * f.re) / det;
            let next = [x[0] + sx, x[1] + sy];
            if !inside(next) || !(next[0].is_finite() && next[1].is_finite()) {
                return (x, res, k, false);
            }
            x = next;
            res = eval(x);
        }
        (x, res, max_iter, res <= tol)
    };

    let (x, res, k, ok) = newton(guess, opts.max_newton);
    iterations += k;
    if res < best_res {
        best = x;
        best_res = res;
    }
    if ok {
        return Ok(point(best, best_res));
    }

    // Fallback: Nelder–Mead on |δ|² inside the trust region.
    let penalty = |x: [f64; 2]| {
        if inside(x) {
            let r = eval(x) / (sum * sum);
            r * r
        } else {
            f64::INFINITY
        }
    };
    let (x, k) = nelder_mead(penalty, best, 0.05 * radius, opts.max_simplex);
    iterations += k;
    let res = eval(x);
    if res < best_res {
        best = x;
        best_res = res;
    }
    let (x, res, k, ok) = newton(best, opts.max_newton);
    iterations += k;
    if res < best_res {
        best = x;
        best_res = res;
    }
    if ok {
        return Ok(point(best, best_res));
    }
    Err(Error::NotConverged {
        best: Box::new(point(best, best_res)),
        residual: best_res,
        iterations,
    })
}

/// Plain Nelder–Mead in two dimensions. Returns the best vertex and the number
/// of iterations used.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: F,
    start: [f64; 2],
    step: f64,
    max_iter: usize,
) -> ([f64; 2], usize) {
    let mut simplex = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ];
    let mut values = simplex.map(&f);
    for it in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if values[0] == 0.0 || (values[2] - values[0]).abs() <= 1e-300 {
            return (simplex[0], it);
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let xr = along(-1.0);
        let fr = f(xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            if fe < fr {
                simplex[2] = xe;
                values[2] = fe;
            } else {
                simplex[2] = xr;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = xr;
            values[2] = fr;
        } else {
            let xc = if fr < values[2] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(xc);
            if fc < values[2].min(fr) {
                simplex[2] = xc;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = [
                        0.5 * (simplex[0][0] + simplex[i][0]),
                        0.5 * (simplex[0][1] + simplex[i][1]),
                    ];
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best], max_iter)
}

/// One row of a ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub gamma2: f64,
    pub enantiomer: Handedness,
    pub branch: u8,
    pub delta_ep: f64,
    pub omega12_ep: f64,
    /// False when Newton refinement failed; the closed-form values are kept.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub gamma1: f64,
    pub rows: Vec<SweepRow>,
}

/// EP positions for Γ₂ = R·Γ₁ over a list of ratios, both enantiomers and
/// both branches, each validated by [`refine_ep`].
pub fn ratio_sweep(gamma1: f64, ratios: &[f64]) -> Result<SweepTable> {
    if !(gamma1.is_finite() && gamma1 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "gamma1 must be positive, got {gamma1}"
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidParams(format!(
            "ratio must be finite and >= 0, got {r}"
        )));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let rows: Vec<Vec<SweepRow>> = sorted
        .par_iter()
        .map(|&ratio| {
            let gamma2 = ratio * gamma1;
            let mut out = Vec::with_capacity(4);
            for hand in Handedness::BOTH {
                let eps = closed_form_eps(gamma1, gamma2, hand)?;
                for ep in eps {
                    let (point, refined) = match refine_ep(&ep, gamma1, gamma2, hand, None) {
                        Ok(p) => (p, true),
                        Err(_) => (ep, false),
                    };
                    out.push(SweepRow {
                        ratio,
                        gamma2,
                        enantiomer: hand,
                        branch: ep.branch_index,
                        delta_ep: point.delta,
                        omega12_ep: point.omega12,
                        refined,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        gamma1,
        rows: rows.into_iter().flatten().collect(),
    })
}

/// A parameter that can serve as a map axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapAxis {
    Gamma1,
    Gamma2,
    Delta,
    Omega12,
}

impl MapAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            MapAxis::Gamma1 => "gamma1",
            MapAxis::Gamma2 => "gamma2",
            MapAxis::Delta => "delta",
            MapAxis::Omega12 => "omega12",
        }
    }

    fn apply(self, p: &mut EffectiveParams, value: f64) {
        match self {
            MapAxis::Gamma1 => p.gamma1 = value,
            MapAxis::Gamma2 => p.gamma2 = value,
            MapAxis::Delta => p.delta = value,
            MapAxis::Omega12 => p.omega12 = value,
        }
    }
}

impl fmt::Display for MapAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gamma1" => Ok(MapAxis::Gamma1),
            "gamma2" => Ok(MapAxis::Gamma2),
            "delta" => Ok(MapAxis::Delta),
            "omega12" => Ok(MapAxis::Omega12),
            other => Err(format!(
                "unknown axis '{other}' (gamma1|gamma2|delta|omega12)"
            )),
        }
    }
}

/// Evenly spaced grid along one parameter, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub axis: MapAxis,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(axis: MapAxis, min: f64, max: f64, count: usize) -> Self {
        GridAxis {
            axis,
            min,
            max,
            count,
        }
    }

    /// Node j. Written as a weighted sum so that a range symmetric about zero
    /// gives nodes that are exact negatives of each other.
    pub fn node(&self, j: usize) -> f64 {
        let n = (self.count - 1) as f64;
        (self.min * (self.count - 1 - j) as f64 + self.max * j as f64) / n
    }

    fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::InvalidParams(format!(
                "{} axis needs at least 2 nodes",
                self.axis
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "{} axis range is not finite",
                self.axis
            )));
        }
        Ok(())
    }
}

/// One node of an eigengap map. Gaps are log₁₀|γ₊−γ₋|, −∞ where they vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub x: f64,
    pub y: f64,
    pub log10_gap_right: f64,
    pub log10_gap_left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMap {
    pub x_axis: GridAxis,
    pub y_axis: GridAxis,
    /// Row-major with x varying slowest.
    pub records: Vec<GapRecord>,
}

impl GapMap {
    pub fn get(&self, i: usize, j: usize) -> &GapRecord {
        &self.records[i * self.y_axis.count + j]
    }

    /// Grid indices of the smallest gap for one enantiomer.
    pub fn argmin(&self, handedness: Handedness) -> (usize, usize) {
        let key = |r: &GapRecord| match handedness {
            Handedness::Right => r.log10_gap_right,
            Handedness::Left => r.log10_gap_left,
        };
        let (k, _) = self
            .records
            .iter()
            .enumerate()
            .min_by(|a, b| key(a.1).total_cmp(&key(b.1)))
            .expect("map has at least 4 nodes");
        (k / self.y_axis.count, k % self.y_axis.count)
    }
}

/// log₁₀|γ₊−γ₋| over a (Δ, Ω₁₂) grid for both enantiomers.
pub fn eigengap_map(gamma1: f64, gamma2: f64, delta: GridAxis, omega: GridAxis) -> Result<GapMap> {
    let base = EffectiveParams::new(gamma1, gamma2, 0.0, 0.0);
    gap_map(&base, delta, omega)
}

/// Eigengap map over any two of {Γ₁, Γ₂, Δ, Ω₁₂}; the remaining knobs come
/// from `base`. When a decay rate is an axis the Raman coupling follows the
/// canonical √(Γ₁Γ₂) at every node. Ω₁₂ is the field parameter, so the Left
/// map at (Δ, Ω₁₂) equals the Right map at (Δ, −Ω₁₂).
pub fn gap_map(base: &EffectiveParams, x_axis: GridAxis, y_axis: GridAxis) -> Result<GapMap> {
    x_axis.validate()?;
    y_axis.validate()?;
    if x_axis.axis == y_axis.axis {
        return Err(Error::InvalidParams("map axes must differ".into()));
    }
    let gamma_axis = [x_axis.axis, y_axis.axis]
        .iter()
        .any(|a| matches!(a, MapAxis::Gamma1 | MapAxis::Gamma2));
    let mut probe = *base;
    x_axis.axis.apply(&mut probe, x_axis.min);
    y_axis.axis.apply(&mut probe, y_axis.min);
    if gamma_axis {
        probe.raman = Complex64::new(canonical_raman(probe.gamma1, probe.gamma2), 0.0);
    }
    probe.validate()?;

    let records = (0..x_axis.count * y_axis.count)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / y_axis.count, k % y_axis.count);
            let (x, y) = (x_axis.node(i), y_axis.node(j));
            let mut p = *base;
            x_axis.axis.apply(&mut p, x);
            y_axis.axis.apply(&mut p, y);
            if gamma_axis {
                p.raman = Complex64::new(canonical_raman(p.gamma1, p.gamma2), 0.0);
            }
            let gap = |hand: Handedness| {
                let mut q = p;
                q.handedness = hand;
                hamiltonian_unchecked(&q)
                    .discriminant()
                    .sqrt()
                    .norm()
                    .log10()
            };
            let right = gap(Handedness::Right);
            let left = gap(Handedness::Left);
            if gamma_axis && (p.gamma1 < 0.0 || p.gamma2 < 0.0) {
                return Err(Error::InvalidParams(
                    "negative decay rate on map axis".into(),
                ));
            }
            Ok(GapRecord {
                x,
                y,
                log10_gap_right: right,
                log10_gap_left: left,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapMap {
        x_axis,
        y_axis,
        records,
    })
}

/// Fitted power law of the eigenvalue splitting under a small displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub epsilons: Vec<f64>,
    pub gaps: Vec<f64>,
}

/// |γ₊−γ₋| at `ep` + ε·direction for canonical Raman coupling; returns the
/// least-squares slope of log gap versus log ε.
pub fn response_scaling_probe(
    ep: &EpPoint,
    gamma1: f64,
    gamma2: f64,
    direction: [f64; 2],
    epsilons: &[f64],
) -> Result<ScalingFit> {
    let base = params_at(
        gamma1,
        gamma2,
        Complex64::new(canonical_raman(gamma1, gamma2), 0.0),
        ep.handedness,
        ep.delta,
        ep.omega12,
    );
    response_scaling_at(&base, direction, epsilons)
}

/// Same as [`response_scaling_probe`] around an arbitrary base point, e.g. a
/// Hermitian diabolical point. `direction` is in the (Δ, Ω₁₂) plane.
pub fn response_scaling_at(
    base: &EffectiveParams,
    direction: [f64; 2],
    epsilons: &[f64],
) -> Result<ScalingFit> {
    base.validate()?;
    let norm = direction[0].hypot(direction[1]);
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidParams(
            "direction must be a non-zero finite vector".into(),
        ));
    }
    let dir = [direction[0] / norm, direction[1] / norm];
    if epsilons.len() < 3 || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidParams(
            "need at least 3 positive epsilons".into(),
        ));
    }
    let lo = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = epsilons.iter().copied().fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParams(
            "epsilon ladder must span at least two decades".into(),
        ));
    }

    let scale = base.scale().max(lo);
    let mut gaps = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        let mut p = *base;
        p.delta = base.delta + e * dir[0];
        p.omega12 = base.omega12 + e * dir[1];
        let gap = hamiltonian_unchecked(&p).discriminant().sqrt().norm();
        if !(gap > 1e-13 * scale) {
            return Err(Error::DegenerateDirection);
        }
        gaps.push(gap);
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ScalingFit {
        exponent: sxy / sxx,
        epsilons: epsilons.to_vec(),
        gaps,
    })
}

/// Geometric ladder of `count` values from `lo` to `hi`.
pub fn geometric_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (step * k as f64).exp()).collect()
}
