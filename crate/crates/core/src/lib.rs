//! Socially-conditioned talking-head avatar pipeline: a differentiable 3D
//! Gaussian splatting renderer, mesh-facet rigging, a speaker–listener
//! motion generator with social conditioning, and the staged training that
//! ties them together.

pub mod cli;
pub mod gsplat;
pub mod motiongen;
pub mod numcore;
pub mod rigging;
pub mod social;
pub mod training;
