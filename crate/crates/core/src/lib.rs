//! Simulation and post-processing for a switched-beam mm-wave MIMO channel
//! sounder: multitone waveforms, phased-array codebooks, dynamic scenes,
//! sweep capture, calibration, channel analysis and recording formats.

pub mod beamforming;
pub mod calibration;
pub mod analysis;
pub mod dsp;
pub mod error;
pub mod scene;
pub mod sounder;
pub mod storage;
pub mod waveform;

pub use error::{Error, ErrorKind, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
