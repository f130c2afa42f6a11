//! Channel models for molecular communication in cylindrical ducts with
//! laminar (Poiseuille) flow.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the duct geometry, the flow profile, the Péclet number
//!   and the transport-regime classification.
//! * [`cir`] evaluates the closed-form channel impulse responses of the
//!   dispersion and flow-dominated regimes, together with quadrature oracles
//!   that check them.
//! * [`sim`] is a particle-based Monte Carlo engine for the full
//!   advection-diffusion problem with a reflecting duct wall.
//! * [`link`] evaluates on-off keying with threshold detection: analytic
//!   symbol error rates by sequence enumeration, and Monte Carlo estimates.
//!
//! All randomness is drawn from counter-based streams ([`rng`]), so every
//! stochastic result is a pure function of its seed and does not depend on
//! how work is split across threads ([`exec`]).

pub mod cir;
pub mod error;
pub mod exec;
pub mod link;
pub mod math;
pub mod model;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Exec;
