//! Discretized distributed-parameter models that instantiate passive nodes.
//!
//! - [`phs`]: first-order port-Hamiltonian systems on an interval with
//!   boundary inputs (a clamped beam with tip actuation, a transport
//!   equation), discretized by a summation-by-parts scheme whose passivity
//!   certificate is exact.
//! - [`heat2d`]: heat equation on a rectangle with distributed boundary flux
//!   actuation and the collocated averaged observation, discretized by
//!   finite volumes.

pub mod heat2d;
pub mod phs;
