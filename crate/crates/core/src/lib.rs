//! Numerical laboratory for the Dirichlet problem of the minimal surface
//! system in higher codimension.
//!
//! The crate is organised around the objects the non-existence argument for
//! large boundary data needs:
//!
//! * [`mesh`]: simplicial meshes of spheres, balls, annuli and solid tori;
//! * [`geometry`]: induced metric, graph mass, the boundary mass formula,
//!   the weak residual of the minimal surface system and density ratios;
//! * [`boundary_data`]: Hopf maps, rescalings, deformations and the graph
//!   volume and reach of their images;
//! * [`topology`]: Brouwer degree, Hopf invariant by fibre linking and the
//!   zero / far-point witness probes;
//! * [`bounds`]: upper and lower mass bounds and their crossing threshold;
//! * [`solver`]: discrete area minimisation, continuation in the scaling and
//!   cone scans.

pub mod boundary_data;
pub mod bounds;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod mesh;
pub mod numeric;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};
