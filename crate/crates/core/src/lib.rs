//! Joint time-frequency scattering of audio: Morlet filterbanks, the path
//! grammar, the forward transform and its gradient, texture resynthesis and
//! ppm energy tables.

pub mod container;
pub mod energytable;
pub mod error;
pub mod filterbank;
pub mod fourier;
pub mod pathgrammar;
pub mod scattering;
pub mod synthesis;

pub use error::{Error, Result};
pub use filterbank::{BankConfig, Banks, FilterBank, FrameReport, Spin};
pub use pathgrammar::{ComputationGraph, Path, PathSpace};
