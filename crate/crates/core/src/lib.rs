//! Training-free conditional diffusion for parameter-dependent stochastic
//! flow maps.
//!
//! The pipeline learns the one-step transition law of an SDE whose drift and
//! diffusion depend on a physical parameter, across the whole parameter
//! range, from plain trajectory data:
//!
//! 1. [`simulate`] — build the observed transition dataset on a parameter
//!    grid.
//! 2. [`neighbors`] — index it for exact joint `(x, mu)` nearest-neighbor
//!    queries.
//! 3. [`score`] + [`labels`] — estimate the conditional score in closed form
//!    from kernel-weighted neighbor displacements and integrate the reverse
//!    probability-flow ODE, pairing each Gaussian latent with the state it
//!    maps to.
//! 4. [`flowmap`] — fit a feedforward network to those pairs by plain
//!    supervised regression; sample and roll out the learned map.
//! 5. [`eval`] — compare learned conditional and terminal statistics against
//!    the closed-form laws of the benchmark models in [`sde`].

pub mod codec;
pub mod error;
pub mod eval;
pub mod flowmap;
pub mod labels;
pub mod neighbors;
pub mod rng;
pub mod score;
pub mod sde;
pub mod simulate;

pub use error::{Error, Result};
pub use rng::RngSeed;
