//! Gaussian quasi-likelihood inference for ergodic Levy-driven SDEs
//!
//! ```text
//! dX_t = a(X_t, alpha) dt + b(X_t, beta) dW_t + c(X_{t-}, beta) dJ_t
//! ```
//!
//! observed at high frequency (`h_n -> 0`, `T_n = n h_n -> infinity`).
//!
//! * [`model`]: coefficients, parameter box, `V = b b^T + c c^T`.
//! * [`levy_driver`]: centered unit-covariance drivers (Wiener, compound
//!   Poisson, normal inverse Gaussian) and their mixed moments.
//! * [`simulate`]: Euler paths and observation grids.
//! * [`gql`]: quasi-likelihood, quasi-score, contrast, random field.
//! * [`estimator`]: the estimator as a maximizer of the contrast.
//! * [`avar`]: plug-in asymptotic covariance and Studentization.
//! * [`asymptotics`]: limit objects by ergodic averaging and diagnostics.
//! * [`harness`]: Monte Carlo studies.

pub mod asymptotics;
pub mod avar;
pub mod error;
pub mod estimator;
pub mod gql;
pub mod harness;
pub mod levy_driver;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simulate;

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use levy_driver::{DriverKind, JumpLaw, LevyDriver, NuMoments};
pub use model::{builtin, ModelSpec, ParamBox, ThetaPoint};
pub use rng::RandomStream;
pub use simulate::{Observations, PathStreams, SamplingDesign};
