//! Shape and topology optimization of 2-D Neumann boundary-value problems on a
//! fixed computational box.
//!
//! The geometry is a level set `g` whose zero curve is traced as a periodic
//! orbit of the Hamiltonian field `(-∂g/∂x2, ∂g/∂x1)`; the state equation is
//! solved on the whole box with a `max(g,0)²`-weighted control term replacing
//! the flux boundary condition; descent directions for the geometry/control
//! pair come from a single adjoint solve, stepped by a projected backtracking
//! line search.
//!
//! Module map:
//! - [`geometry`]: structured triangle meshes, P1/P2 Lagrange spaces, fields,
//!   point location, nodal-averaged gradient recovery.
//! - [`levelset`]: analytic-expression and FE-backed level sets, observation
//!   regions, boundary seed detection, domain classification, the nodal
//!   projection that keeps the observation region inside the domain, and
//!   admissibility reporting.
//! - [`hamiltonian`]: the orbit tracer with Poincaré-return period detection,
//!   the linearized (variation) system along an orbit, and the period
//!   derivative.
//! - [`pde`]: assembly and direct solution of the fixed-box problems (state,
//!   linearized state, simplified adjoint, control smoothing) plus the
//!   conforming Neumann solve on a classified submesh used for validation.
//! - [`cost`]: cost evaluation (volume, boundary, flux-penalty terms) and the
//!   full directional derivative of the penalized cost along a geometry/control
//!   perturbation.
//! - [`optimizer`]: descent directions, the projected line search, the outer
//!   loop, and its iteration history.
//! - [`config`]: run configuration (TOML), embedded example presets.
//! - [`verify`]: seeded random problem families and the finite-difference
//!   check harnesses used by tests and the CLI.

pub mod config;
pub mod cost;
pub mod export;
pub mod geometry;
pub mod hamiltonian;
pub mod levelset;
pub mod optimizer;
pub mod pde;
pub mod vec2;
pub mod verify;

pub use vec2::Vec2;
