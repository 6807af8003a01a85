//! Link-level simulation of doubly-dispersive (delay-Doppler) MIMO channels
//! whose propagation is programmable by metasurfaces: stacked transmissive
//! layers (SIM) hugging the transmit and receive arrays, and optional
//! reflective surfaces (RIS) in the environment.
//!
//! The library covers the full chain:
//!
//! * [`arrays`] — ULA/UPA steering vectors and per-path response matrices.
//! * [`metasurfaces`] — Rayleigh-Sommerfeld diffraction matrices, phase
//!   layers, cascade transfer matrices and spatial correlation.
//! * [`channel`] — random multipath generation and assembly of the sampled
//!   time-domain transfer matrix from per-path delay/Doppler blocks.
//! * [`waveforms`] — OFDM, OTFS and AFDM modulation and the unitary
//!   transform sandwich producing each waveform's effective channel.
//! * [`simopt`] — gradient-ascent tuning of the metasurface phases for
//!   communication (total path power) and sensing (weakest path power).
//! * [`gabp`] — Gaussian belief propagation symbol detection.
//! * [`pda`] — sparse delay-Doppler recovery with a Bernoulli-Gaussian
//!   prior and EM hyperparameter tuning, mapped to radar range/velocity.
//! * [`harness`] — configuration, Monte-Carlo experiment drivers, AWGN,
//!   metric accumulation and CSV emission.
//!
//! The guide under `book/` walks through the same pipeline chapter by
//! chapter; its code snippets compile and run as part of `cargo test --doc`.

pub mod arrays;
pub mod channel;
pub mod gabp;
pub mod harness;
pub mod metasurfaces;
pub mod pda;
pub mod rng;
pub mod simopt;
pub mod waveforms;

mod error;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;

// The guide chapters double as doc-tests so the book cannot drift from the
// library. Each chapter gets its own module to make failures easy to locate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/metasurfaces.md")]
    mod metasurfaces {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    mod optimization {}
    #[doc = include_str!("../../../book/src/sensing.md")]
    mod sensing {}
    #[doc = include_str!("../../../book/src/waveforms.md")]
    mod waveforms {}
}
