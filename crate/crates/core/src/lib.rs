//! Desk-scale multi-level evolution of robots from materials.
//!
//! Three stacked quality-diversity archives (materials, components, robots)
//! are evolved by an illumination loop and linked by pointer genomes:
//! component genomes point into material archives, robot genomes point into
//! component archives. Robots are evaluated as 2D mass-spring machines at two
//! simulation fidelities, with a learned transferability predictor deciding
//! which virtual candidates earn a fine-grained evaluation.

pub mod archive;
pub mod components;
pub mod cppn;
pub mod error;
pub mod hybrid;
pub mod materials;
pub mod orchestrator;
pub mod physics;
pub mod robots;

pub use error::{Error, Result};
