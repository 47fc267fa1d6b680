//! Simulation and verification laboratory for the vertex-reinforced jump
//! process (VRJP) and the hyperbolic sigma models `H^n` and `H^{2|2}`.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: weighted graphs, translation-invariant tori and lattice
//!   Fourier helpers.
//! * [`vrjp`]: exact event-driven VRJP simulation and discounted-functional
//!   estimators.
//! * [`sigma_hn`] and [`sigma_h22`]: horospherical-coordinate samplers,
//!   quadrature oracles and identity checks for the two sigma models. Both
//!   share the t-field Markov chain in [`tchain`]; `H^{2|2}` also has an
//!   exact independent sampler.
//! * [`grassmann`]: an exact finite Grassmann-algebra engine with
//!   superintegration and the full `H^{2|2}` super-expectation on tiny graphs.
//! * [`dynkin`] and [`merminwagner`]: the experiments that compare
//!   independently computed sides of the isomorphism and the two-point bounds.
//! * [`susy`]: the deterministic normalisation, localisation and coordinate
//!   identity battery.
//!
//! Supporting modules: [`rng`] (counter-based seed lanes), [`stats`]
//! (accumulators, batch means, autocorrelation), [`linalg`] (sparse Cholesky),
//! [`quad`] (deterministic quadrature rules) and [`report`] (serializable
//! experiment records).

pub mod dynkin;
pub mod error;
pub mod graph;
pub mod grassmann;
pub mod linalg;
pub mod oracle;
pub mod merminwagner;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sigma_h22;
pub mod sigma_hn;
pub mod stats;
pub mod susy;
pub mod tchain;
pub mod vrjp;

pub use error::{Error, Result};
