//! Structured triangle meshes, Lagrange P1/P2 spaces, discrete fields, point
//! location, and nodal-averaged gradient recovery.
//!
//! Conventions fixed here and relied on elsewhere:
//! - `Mesh::rectangle` splits every grid cell into two triangles along the
//!   lower-left to upper-right diagonal (no cell-center vertex), so a mesh with
//!   `n` divisions per side has `(n+1)²` vertices and `2n²` triangles.
//! - Triangles are counter-clockwise; triangle indices and vertex indices are
//!   deterministic functions of the grid, so identical inputs rebuild identical
//!   meshes.
//! - Degrees of freedom of a space are numbered by lexicographic coordinate
//!   order (y first, then x), which keeps the stiffness bandwidth at
//!   O(points per row) for structured meshes and their submeshes.
//! - Point location resolves ties on shared edges to the lowest triangle index.

mod field;
mod locate;
mod mesh;
pub mod quadrature;
mod space;

pub use field::{
    h1_norm_sq, l2_distance, l2_norm, recover_gradient, recover_gradient_transpose,
    RecoveredJet, ScalarField, VectorField,
};
pub use locate::Locator;
pub use mesh::{extract_submesh, Mesh, Rect, SubMesh, TriangleGeometry};
pub use space::{Degree, FeSpace};

use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid mesh bounds: {0}")]
    InvalidBounds(String),
    #[error("mesh needs at least one division per side, got {0}")]
    InvalidDivisions(usize),
    #[error("point ({}, {}) lies outside the mesh", .0.x, .0.y)]
    PointOutsideMesh(Vec2),
    #[error("fields live on different spaces")]
    SpaceMismatch,
    #[error("empty triangle mask")]
    EmptyMask,
}
