use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ep::EpPoint;
use crate::{Error, Result};

/// A closed or open curve t ↦ (Δ(t), Ω₁₂(t)) on [0, T].
pub trait ParameterPath: Sync {
    fn period(&self) -> f64;

    /// Point at time `t`; callers guarantee 0 ≤ t ≤ T.
    fn point_unchecked(&self, t: f64) -> (f64, f64);

    fn point(&self, t: f64) -> Result<(f64, f64)> {
        let period = self.period();
        if !(t >= 0.0 && t <= period) {
            return Err(Error::TimeOutOfRange { t, period });
        }
        Ok(self.point_unchecked(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Δ = c + ρ sin(2πt/T), Ω₁₂ = c + ρ cos(2πt/T).
    AsWritten,
    /// The same curve traversed backwards.
    Reversed,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::AsWritten, Direction::Reversed];

    pub fn flipped(self) -> Self {
        match self {
            Direction::AsWritten => Direction::Reversed,
            Direction::Reversed => Direction::AsWritten,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::AsWritten => "as_written",
            Direction::Reversed => "reversed",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "as_written" | "aswritten" | "forward" => Ok(Direction::AsWritten),
            "reversed" | "reverse" | "backward" => Ok(Direction::Reversed),
            other => Err(Error::InvalidParams(format!("unknown direction '{other}'"))),
        }
    }
}

/// Circular loop around a center in the (Δ, Ω₁₂) plane.
///
/// `start_phase` rotates the starting point: the angle is
/// `start_phase + 2πt/T`, measured from the +Ω₁₂ axis toward +Δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncirclementPath {
    pub center_delta: f64,
    pub center_omega: f64,
    pub radius: f64,
    pub loop_time: f64,
    pub direction: Direction,
    #[serde(default)]
    pub start_phase: f64,
}

impl EncirclementPath {
    pub fn new(
        center_delta: f64,
        center_omega: f64,
        radius: f64,
        loop_time: f64,
        direction: Direction,
    ) -> Self {
        EncirclementPath {
            center_delta,
            center_omega,
            radius,
            loop_time,
            direction,
            start_phase: 0.0,
        }
    }

    pub fn around(ep: &EpPoint, radius: f64, loop_time: f64, direction: Direction) -> Self {
        Self::new(ep.delta, ep.omega12, radius, loop_time, direction)
    }

    pub fn with_start_phase(mut self, phase: f64) -> Self {
        self.start_phase = phase;
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_loop_time(mut self, loop_time: f64) -> Self {
        self.loop_time = loop_time;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.center_delta.is_finite()
            && self.center_omega.is_finite()
            && self.radius.is_finite()
            && self.radius > 0.0
            && self.loop_time.is_finite()
            && self.loop_time > 0.0
            && self.start_phase.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "loop needs finite center, radius > 0 and loop_time > 0 (radius = {}, loop_time = {})",
                self.radius, self.loop_time
            )))
        }
    }

    /// The same loop reflected through Ω₁₂ = 0, traversed so that it is
    /// the mirror image at every instant.
    pub fn mirrored(&self) -> Self {
        EncirclementPath {
            center_omega: -self.center_omega,
            direction: self.direction.flipped(),
            start_phase: PI - self.start_phase,
            ..*self
        }
    }

    /// Winding number of the loop around `(delta, omega)`: +1 for
    /// counter-clockwise in the (Δ, Ω₁₂) plane, −1 for clockwise, 0 outside.
    pub fn winding_about(&self, delta: f64, omega: f64) -> i32 {
        let d = (self.center_delta - delta).hypot(self.center_omega - omega);
        if d >= self.radius {
            return 0;
        }
        // Angle from +Ω toward +Δ grows in time for AsWritten: clockwise in (Δ, Ω).
        match self.direction {
            Direction::AsWritten => -1,
            Direction::Reversed => 1,
        }
    }

    pub fn path_point(&self, t: f64) -> Result<(f64, f64)> {
        self.point(t)
    }
}

impl ParameterPath for EncirclementPath {
    fn period(&self) -> f64 {
        self.loop_time
    }

    fn point_unchecked(&self, t: f64) -> (f64, f64) {
        let s = match self.direction {
            Direction::AsWritten => t,
            Direction::Reversed => self.loop_time - t,
        };
        // fract maps s = T onto 0 so that the loop closes exactly.
        let u = (s / self.loop_time).fract();
        let angle = self.start_phase + 2.0 * PI * u;
        (
            self.center_delta + self.radius * angle.sin(),
            self.center_omega + self.radius * angle.cos(),
        )
    }
}

/// A fixed parameter point held for a time T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub delta: f64,
    pub omega12: f64,
    pub duration: f64,
}

impl ParameterPath for FixedPoint {
    fn period(&self) -> f64 {
        self.duration
    }

    fn point_unchecked(&self, _t: f64) -> (f64, f64) {
        (self.delta, self.omega12)
    }
}

/// Reflection of a path through Ω₁₂ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mirrored<P>(pub P);

impl<P: ParameterPath> ParameterPath for Mirrored<P> {
    fn period(&self) -> f64 {
        self.0.period()
    }

    fn point_unchecked(&self, t: f64) -> (f64, f64) {
        let (d, o) = self.0.point_unchecked(t);
        (d, -o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> EncirclementPath {
        EncirclementPath::new(0.0, -0.75, 0.75, 100.0, Direction::AsWritten)
    }

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
    }

    #[test]
    fn quarter_points() {
        let p = unit();
        assert!(close(p.path_point(0.0).unwrap(), (0.0, 0.0)));
        assert!(close(p.path_point(25.0).unwrap(), (0.75, -0.75)));
        assert!(close(p.path_point(50.0).unwrap(), (0.0, -1.5)));
        let r = p.with_direction(Direction::Reversed);
        assert!(close(r.path_point(25.0).unwrap(), (-0.75, -0.75)));
    }

    #[test]
    fn closes_exactly() {
        for dir in Direction::BOTH {
            let p = EncirclementPath::new(-1.1489e-4, -1.55e-5, 1.55e-5, 4.78e5, dir)
                .with_start_phase(0.3);
            assert_eq!(p.path_point(0.0).unwrap(), p.path_point(4.78e5).unwrap());
        }
    }

    #[test]
    fn out_of_range_time() {
        let p = unit();
        assert!(matches!(
            p.path_point(-1e-9),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            p.path_point(100.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(p.path_point(f64::NAN).is_err());
    }

    #[test]
    fn reversed_is_time_reversal() {
        let p = unit().with_start_phase(1.1);
        let r = p.with_direction(Direction::Reversed);
        for k in 0..=20 {
            let t = 5.0 * k as f64;
            assert!(close(
                r.path_point(t).unwrap(),
                p.path_point(100.0 - t).unwrap()
            ));
        }
    }

    #[test]
    fn mirrored_loop_matches_reflection() {
        for dir in Direction::BOTH {
            for phase in [0.0, 1.0, 4.2] {
                let p = unit().with_direction(dir).with_start_phase(phase);
                let m = p.mirrored();
                let r = Mirrored(p);
                for k in 0..=40 {
                    let t = 2.5 * k as f64;
                    assert!(close(m.path_point(t).unwrap(), r.point(t).unwrap()));
                }
            }
        }
    }

    #[test]
    fn winding() {
        let p = unit();
        assert_eq!(p.winding_about(0.0, -0.75), -1);
        assert_eq!(
            p.with_direction(Direction::Reversed)
                .winding_about(0.1, -0.7),
            1
        );
        assert_eq!(p.winding_about(5.0, 0.0), 0);
    }

    #[test]
    fn direction_parse() {
        assert_eq!(
            "Reversed".parse::<Direction>().unwrap(),
            Direction::Reversed
        );
        assert_eq!(
            "as_written".parse::<Direction>().unwrap(),
            Direction::AsWritten
        );
        assert!("sideways".parse::<Direction>().is_err());
    }
}
