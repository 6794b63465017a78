//! Kähler angles and submanifold invariants of parametric immersions
//! `F: R^2n -> N^2n` into flat space and complex space forms, together with
//! residual checks of the pointwise identities that relate them.

pub mod ambient;
pub mod dsl;
pub mod geometry;
pub mod harness;
pub mod identities;
pub mod jets;
