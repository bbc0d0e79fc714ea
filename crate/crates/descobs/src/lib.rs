//! Functional observer design for linear time-invariant descriptor systems
//!
//! ```text
//!     E x'(t) = A x(t) + B u(t)
//!       y(t)  = C x(t)
//!       z(t)  = K x(t)
//! ```
//!
//! with possibly rectangular E, A (no regularity assumption on the pencil).
//! The crate reduces the descriptor system to an explicit ODE core by
//! orthogonal staircase transformations, checks two sufficient solvability
//! conditions, and synthesizes an observer
//!
//! ```text
//!     w'(t) = N w(t) + H [u; y](t)
//!     zhat  = R w(t) + M [u; y](t)
//! ```
//!
//! of order q no larger than the number of target functionals, such that
//! zhat - z -> 0 for every admissible trajectory and exact matching of the
//! initial value keeps the estimate exact for all time.
//!
//! Layering: [`numkit`] (tolerant rank/pseudoinverse substrate), [`model`]
//! (system, signals, tolerance policy), [`reduction`] (staircase form),
//! [`existence`] (solvability conditions), [`synthesis`] (observer
//! parameters), [`simulation`] (index-1 integration), [`io`] (file formats).

pub mod error;
pub mod existence;
pub mod io;
pub mod model;
pub mod numkit;
pub mod reduction;
pub mod simulation;
pub mod synthesis;

pub use error::{Error, Result};
