//! Design and verification of multiply-modulated (MODE) heteronuclear
//! decoupling fields.
//!
//! * [`cascade`] derives the rotating-frame ladder from design amplitudes.
//! * [`waveform`] samples the modulated field and writes shape files.
//! * [`resonance`] certifies that no sideband combination becomes static.
//! * [`spinsim`] propagates a coupled I–S pair to measure decoupling.
//! * [`cli`] wires these together behind the `modedec` binary.

pub mod cascade;
pub mod cli;
pub mod error;
pub mod resonance;
pub mod spinsim;
pub mod units;
pub mod waveform;

pub use cascade::{
    alpha_fixed_point, alpha_step, build_cascade, offset_trajectory, FrameCascade, ModeDesign,
    OffsetTrajectory,
};
pub use error::{Error, Result};
pub use resonance::{gap_report, min_gap, min_gap_with_threshold, GapAssignment, GapResult};
pub use spinsim::{
    efficiency, inhomogeneity_sweep, offset_sweep, propagate, EfficiencyResult, Engine,
    SimConfig, SimTrace, SpinSystem,
};
pub use waveform::{
    export_shape, make_cw, make_tppm, max_amplitude, rms_amplitude, synthesize_mode, RfSample,
    ShapeFormat, Waveform,
};
