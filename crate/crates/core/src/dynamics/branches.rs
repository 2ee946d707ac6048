//! Continuity tracking of the two eigenvalue branches along a path.
//!
//! The principal branch of √δ jumps where δ crosses the negative real axis.
//! Tracking follows the branch that changes continuously and records every
//! time it parts from, or rejoins, the principal labels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::path::ParameterPath;
use crate::model::{hamiltonian_unchecked, EffectiveParams, COALESCENCE_THRESHOLD};
use crate::{Error, Result};

pub const DEFAULT_BRANCH_SAMPLES: usize = 4096;
pub const MAX_BISECTION_DEPTH: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTrack {
    pub period: f64,
    /// Times at which the continuous labels swap relative to the principal ones.
    pub cut_crossings: Vec<f64>,
    /// Continuous √δ at t = 0 and t = T.
    pub root_start: Complex64,
    pub root_end: Complex64,
    /// Whether following the eigenvalues once around exchanges them.
    pub eigenvalue_swap: bool,
}

impl BranchTrack {
    /// +1 where the continuous "+" branch is the principal "+", −1 where it
    /// is the principal "−".
    pub fn label_at(&self, t: f64) -> i8 {
        let n = self.cut_crossings.iter().filter(|&&c| c <= t).count();
        if n % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

struct Tracker<'a, P: ParameterPath> {
    base: &'a EffectiveParams,
    path: &'a P,
}

impl<P: ParameterPath> Tracker<'_, P> {
    fn principal_root(&self, t: f64) -> Result<(Complex64, f64)> {
        let (d, o) = self.path.point(t)?;
        let h = hamiltonian_unchecked(&self.base.at(d, o));
        let disc = h.discriminant();
        let scale = h.h11.norm() + h.h12.norm() + h.h21.norm() + h.h22.norm();
        if !disc.re.is_finite() || !disc.im.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if disc.norm() < COALESCENCE_THRESHOLD * scale * scale {
            return Err(Error::PathThroughEp {
                t,
                delta_abs: disc.norm(),
            });
        }
        Ok((disc.sqrt(), scale))
    }

    /// Continue the root `r0` known at `t0` to `t1`.
    fn advance(&self, t0: f64, r0: Complex64, t1: f64, depth: u32) -> Result<Complex64> {
        let (p1, _) = self.principal_root(t1)?;
        let c = if (p1 - r0).norm() <= (p1 + r0).norm() {
            p1
        } else {
            -p1
        };
        if (c - r0).norm() <= 0.5 * r0.norm() {
            return Ok(c);
        }
        if depth >= MAX_BISECTION_DEPTH {
            return Err(Error::AmbiguousBranch { t: t0 });
        }
        let mid = 0.5 * (t0 + t1);
        let rm = self.advance(t0, r0, mid, depth + 1)?;
        self.advance(mid, rm, t1, depth + 1)
    }

    fn relation(&self, t: f64, root: Complex64) -> Result<i8> {
        let (p, _) = self.principal_root(t)?;
        Ok(if (p - root).norm() <= (p + root).norm() {
            1
        } else {
            -1
        })
    }

    /// Bisect for the time in (t0, t1) where the relation flips.
    fn locate_flip(&self, t0: f64, r0: Complex64, rel0: i8, t1: f64) -> Result<f64> {
        let (mut lo, mut hi, mut r_lo) = (t0, t1, r0);
        let tol = 1e-12 * self.path.period();
        for _ in 0..60 {
            if hi - lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let rm = self.advance(lo, r_lo, mid, 0)?;
            if self.relation(mid, rm)? == rel0 {
                lo = mid;
                r_lo = rm;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Follow the eigenvalue branches along `path` using at least `min_samples`
/// intervals, refined where the eigenvalues move fast relative to their gap.
pub fn track_branches<P: ParameterPath>(
    base: &EffectiveParams,
    path: &P,
    min_samples: usize,
) -> Result<BranchTrack> {
    base.validate()?;
    let period = path.period();
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "path period must be positive, got {period}"
        )));
    }
    let n = min_samples.max(1);
    let tracker = Tracker { base, path };
    let (root_start, _) = tracker.principal_root(0.0)?;
    let mut t0 = 0.0;
    let mut r0 = root_start;
    let mut rel0: i8 = 1;
    let mut crossings = Vec::new();
    for k in 1..=n {
        let t1 = if k == n {
            period
        } else {
            period * k as f64 / n as f64
        };
        let r1 = tracker.advance(t0, r0, t1, 0)?;
        let rel1 = tracker.relation(t1, r1)?;
        if rel1 != rel0 {
            crossings.push(tracker.locate_flip(t0, r0, rel0, t1)?);
        }
        t0 = t1;
        r0 = r1;
        rel0 = rel1;
    }
    Ok(BranchTrack {
        period,
        eigenvalue_swap: crossings.len() % 2 == 1,
        cut_crossings: crossings,
        root_start,
        root_end: r0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::path::{Direction, EncirclementPath, FixedPoint};
    use crate::ep::closed_form_eps;
    use crate::model::Handedness;

    fn fig_params(hand: Handedness) -> EffectiveParams {
        EffectiveParams::new(1.5e-4, 8.8e-5, 0.0, 0.0).with_handedness(hand)
    }

    #[test]
    fn loop_around_ep_swaps() {
        for hand in Handedness::BOTH {
            let base = fig_params(hand);
            for ep in closed_form_eps(1.5e-4, 8.8e-5, hand).unwrap() {
                for dir in Direction::BOTH {
                    let path = EncirclementPath::around(&ep, 1.55e-5, 1.0, dir);
                    let tr = track_branches(&base, &path, 512).unwrap();
                    assert!(tr.eigenvalue_swap, "{hand} {dir}");
                    assert!((tr.root_end + tr.root_start).norm() < 1e-6 * tr.root_start.norm());
                }
            }
        }
    }

    #[test]
    fn loop_away_from_ep_does_not_swap() {
        let base = fig_params(Handedness::Right);
        let path = EncirclementPath::new(5e-4, 3e-4, 1e-5, 1.0, Direction::AsWritten);
        let tr = track_branches(&base, &path, 256).unwrap();
        assert!(!tr.eigenvalue_swap);
        assert!((tr.root_end - tr.root_start).norm() < 1e-9 * tr.root_start.norm());
    }

    #[test]
    fn both_eps_enclosed_no_swap() {
        // A loop enclosing both EPs of one enantiomer winds around δ = 0 twice.
        let base = fig_params(Handedness::Right);
        let path = EncirclementPath::new(0.0, 0.0, 5e-4, 1.0, Direction::AsWritten);
        let tr = track_branches(&base, &path, 1024).unwrap();
        assert!(!tr.eigenvalue_swap);
    }

    #[test]
    fn path_through_ep_is_error() {
        let ep = closed_form_eps(1.5e-4, 8.8e-5, Handedness::Right).unwrap()[0];
        let base = fig_params(Handedness::Right);
        let path = FixedPoint {
            delta: ep.delta,
            omega12: ep.omega12,
            duration: 1.0,
        };
        assert!(matches!(
            track_branches(&base, &path, 8),
            Err(Error::PathThroughEp { .. })
        ));
    }

    #[test]
    fn labels_follow_crossings() {
        let tr = BranchTrack {
            period: 1.0,
            cut_crossings: vec![0.25, 0.5],
            root_start: Complex64::new(1.0, 0.0),
            root_end: Complex64::new(1.0, 0.0),
            eigenvalue_swap: false,
        };
        assert_eq!(tr.label_at(0.1), 1);
        assert_eq!(tr.label_at(0.3), -1);
        assert_eq!(tr.label_at(0.9), 1);
    }
}
