//! Outage analysis for HARQ-aided downlink NOMA.
//!
//! Main modules:
//!
//! * [`montecarlo`] simulates K-round HARQ transmissions over independent
//!   Rayleigh fading and counts outages (Type I, chase combining and
//!   incremental redundancy, M users, simple or power-efficient strategy,
//!   perfect or imperfect CSI).
//! * [`analytic`] gives the Type I closed form and recursive lower/upper
//!   bounds on the chase-combining and incremental-redundancy outage, plus a
//!   brute-force integration oracle for the underlying kernels.
//! * [`diversity`] gives the closed-form diversity orders and the two-point
//!   empirical slope estimate.
//!
//! [`experiment`] ties everything together into SNR/rate sweeps that emit
//! CSV or JSON tables.
//!
//! Users are numbered `1..=M` in every public API, in decoding order of
//! their messages: user 1 has the strongest mean channel, user M the
//! weakest, and message M is decoded first.

pub mod analytic;
pub mod channel;
pub mod diversity;
mod error;
pub mod experiment;
pub mod model;
pub mod montecarlo;
pub mod mutual_info;
pub mod rng;

pub use error::{Error, Result};
pub use model::{HarqScheme, PowerRatios, Ratio, RawConfig, Strategy, SystemConfig};
