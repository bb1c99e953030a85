//! Room-acoustics auralization toolkit: image-source early reflections,
//! statistical late reverberation, hybrid impulse-response assembly,
//! ISO-3382-style metrics, horizontal-ambisonics array rendering, binaural
//! reconstruction, and adaptive speech-reception-threshold simulation.

pub mod dsp;
pub mod error;
pub mod geom;
pub mod ir;
pub mod ism;
pub mod metrics;
pub mod spatial;
pub mod srt;
pub mod wav;
pub mod scene;

pub use error::{Error, Result};
