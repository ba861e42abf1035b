//! Diagnostics for the vanishing-viscosity limit near solid walls.
//!
//! Boundaries are split into curved triangles, and the spacetime layer over
//! them is partitioned into suitable cells on which the wall vorticity is
//! averaged. Lorentz-norm estimators act on those averages, while the bound
//! evaluators assemble the layer-separation inequality term by term. Exact
//! shear flows supply reference solutions.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod fields;
pub mod flows;
pub mod geometry;
pub mod partition;
