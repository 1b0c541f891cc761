//! Targeted-observability analysis and estimation for discrete-time
//! dynamical systems.
//!
//! The crate quantifies how well a single ("targeted") state variable can be
//! inferred from a window of outputs, and estimates it two ways:
//!
//! - [`observability`]: empirical observability Gramians via central
//!   differences and the unobservability index of a targeted variable,
//!   including randomized surveys over sampled initial states.
//! - [`ukf`]: an Unscented Kalman Filter baseline over the full state.
//! - [`filter`]: a "deep filter", a feedforward network mapping a flattened
//!   output window directly to the targeted variable, trained with L-BFGS.
//!
//! [`burgers`] provides the discretized viscous Burgers testbed the
//! experiments run on, [`dynamics`] the generic system abstraction, and
//! [`io`] reproducible persistence (seeded manifests, checksummed binary
//! artifacts, CSV exports).

pub mod burgers;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod io;
pub mod observability;
pub mod rng;
pub mod ukf;

pub use error::{Error, Result};
