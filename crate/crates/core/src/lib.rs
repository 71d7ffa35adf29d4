//! Seedable simulator of a drone-to-ground free-space CV-QKD link.
//!
//! Layers, bottom up:
//!
//! * [`stokes`]: Jones/Stokes algebra, the Sagnac encoder, Gaussian modulation.
//! * [`channel`]: loss, excess noise, polarization drift, Doppler residual,
//!   pointing fade and the heterodyne receiver.
//! * [`sync`]: sync-frame construction, the PM3 voltage scan and the frame
//!   correlator.
//! * [`protocol`]: Alice/Bob sessions, parameter estimation, key rate and
//!   privacy amplification.
//! * [`pat`]: pointing, acquisition and tracking loops with a synthetic camera.
//! * [`scenario`]: scenario files, seeded runs and reports.

pub mod channel;
pub mod error;
pub mod noise;
pub mod pat;
pub mod protocol;
pub mod scenario;
pub mod stokes;
pub mod sync;

pub use error::ParamError;
