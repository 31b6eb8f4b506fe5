//! Differentiable cloth draping and cage-based sewing-pattern refitting.
//!
//! A garment is described by flat 2D panels stitched together along seams.
//! [`sim`] drapes the stitched mesh on a static body with damped XPBD,
//! [`adjoint`] runs the reverse sweep that turns a loss on the equilibrium
//! drape into gradients on the 2D rest shape, [`cage`] parameterizes each
//! panel by a Green-coordinate control polygon, and [`refit`] ties these
//! together into a gradient-based pattern refitting loop.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod cage;
pub mod cli;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod gradcheck;
pub mod losses;
pub mod mesh;
pub mod obj;
pub mod pattern;
pub mod refit;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
pub use geom::{Vec2, Vec3};
