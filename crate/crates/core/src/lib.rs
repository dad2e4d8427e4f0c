//! Infinite-horizon model predictive control for step-response plant models.
//!
//! The crate provides the pieces of a certified MPC pipeline:
//!
//! - [`model`]: incremental-form plant models with realified pole dynamics;
//! - [`qp`]: a deterministic dense solver for strictly convex QPs, with an
//!   independent brute-force oracle;
//! - [`certificates`]: the constants and weight matrices whose inequalities
//!   guarantee closed-loop cost convergence (terminal weight, slack metric,
//!   contraction constants, input-target weight floor);
//! - [`setpoint`] / [`zone`]: the two controllers, their QP assembly, and the
//!   candidate-solution strategies used to verify the convergence argument
//!   numerically;
//! - [`sim`]: closed-loop simulation and trace analyzers.

pub mod certificates;
pub mod error;
pub mod model;
pub mod qp;
pub mod rect;
pub mod sampling;
pub mod setpoint;
pub mod sim;
pub mod zone;

pub use error::{Error, Result};
pub use model::{spectral_radius, Mode, OpomModel, PlantState, Prediction};
pub use rect::Rectangle;
