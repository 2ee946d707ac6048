//! Time evolution along loops in the (Δ, Ω₁₂) plane.

pub mod branches;
pub mod encircle;
pub mod integrator;
pub mod path;

pub use branches::{track_branches, BranchTrack};
pub use encircle::{
    gauge_transform, loop_time_sweep, project_adiabatic, propagate, run_encirclement,
    AdiabaticState, EncircleOptions, EncirclementResult, EncirclementSummary, InitialState,
    LoopSweepRow, TimePoint, Trajectory,
};
pub use integrator::{integrate, StepStats, Tolerances};
pub use path::{Direction, EncirclementPath, FixedPoint, Mirrored, ParameterPath};
