//! Numerical laboratory for impedance-passive linear systems in negative
//! feedback with monotone nonlinearities.
//!
//! The crate builds finite-dimensional state-space nodes that satisfy the
//! impedance passivity inequality, closes the loop with a monotone map drawn
//! from a small catalog, integrates the closed loop with an implicit scheme
//! built on resolvents, and verifies passivity, contraction and stability
//! estimates along the computed trajectories. Discretized distributed models
//! (a boundary-controlled beam, a transport equation, a heat equation on a
//! rectangle) provide nontrivial instances.
//!
//! Entry points:
//! - [`nonlinearity::MonotoneMap`] for the feedback catalog and sector checks,
//! - [`node`] for passive nodes and their margins,
//! - [`trajectory`] for closed-loop integration,
//! - [`verify`] for the trajectory-level certificates,
//! - [`models`] for the discretized distributed examples,
//! - [`scenario`] for the JSON-driven experiment runner behind the CLI.

pub mod error;
pub mod linalg;
pub mod matio;
pub mod models;
pub mod node;
pub mod nonlinearity;
pub mod report;
pub mod resolvent;
pub mod scenario;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use node::{BoundaryNode, SystemNode};
pub use nonlinearity::{Kappa, MonotoneMap};
pub use report::{CheckStatus, VerificationReport};
