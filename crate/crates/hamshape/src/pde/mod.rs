//! Finite-element solves on the fixed box and on classified submeshes.
//!
//! Every problem here shares one bilinear form, `∫∇a·∇b + ∫a·b`, whose
//! matrix depends only on the mesh and the polynomial degree — never on the
//! design `g` or the control `u`. A [`Solver`] therefore assembles and
//! factors the matrix once (banded Cholesky; the lexicographic dof numbering
//! keeps the band narrow) and answers every later load with two cheap
//! triangular sweeps. The solves built on top:
//!
//! - [`solve_state`]: the penalized state on the box, Dirichlet walls, with
//!   the control term `(g₊)²·u` standing in for the flux data of the moving
//!   boundary;
//! - [`solve_linearized`]: its exact derivative along a design/control
//!   direction;
//! - [`solve_adjoint`]: the adjoint state whose load is the exact gradient of
//!   the discretized cost with respect to the state coefficients;
//! - [`solve_control_smoothing`]: the unconstrained solve that turns the
//!   pointwise product `2·g₊·u·p` into an H¹ design direction;
//! - [`solve_neumann_validation`]: a conforming Neumann solve on the
//!   staircase submesh of the classified domain, for validating the
//!   penalized solutions against a boundary-fitted discretization.

mod banded;

use std::sync::Arc;

use crate::geometry::quadrature::{gauss_legendre_on, TRI_7};
use crate::geometry::{
    extract_submesh, recover_gradient_transpose, Degree, FeSpace, GeometryError, Mesh,
    RecoveredJet, ScalarField, SubMesh,
};
use crate::hamiltonian::TracedComponent;
use crate::levelset::region::ObservationRegion;
use crate::levelset::LevelSet;
use crate::Vec2;

pub use banded::{BandedCholesky, BandedMatrix};

/// Errors from assembly, constraint handling, or factorization.
#[derive(Debug, thiserror::Error)]
pub enum PdeError {
    #[error("operator is not positive definite: pivot {pivot:.3e} in row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Volume data given as a plain function of position (sources, targets).
#[derive(Clone)]
pub struct SourceData(Arc<dyn Fn(Vec2) -> f64 + Send + Sync>);

impl SourceData {
    pub fn new(f: impl Fn(Vec2) -> f64 + Send + Sync + 'static) -> SourceData {
        SourceData(Arc::new(f))
    }

    pub fn constant(c: f64) -> SourceData {
        SourceData::new(move |_| c)
    }

    pub fn zero() -> SourceData {
        SourceData::constant(0.0)
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        (self.0)(p)
    }
}

/// The prescribed normal-flux data, stored with exact first derivatives
/// because the design derivative of the flux penalty needs its gradient
/// along the moving boundary.
#[derive(Clone)]
pub struct NeumannData {
    field: LevelSet,
}

impl NeumannData {
    /// Wraps a level-set-backed scalar (analytic expression or FE field).
    pub fn new(field: LevelSet) -> NeumannData {
        NeumannData { field }
    }

    pub fn constant(c: f64) -> NeumannData {
        NeumannData { field: LevelSet::from_expr_ast(crate::levelset::expr::Expr::Const(c)) }
    }

    pub fn value(&self, p: Vec2) -> f64 {
        self.field.value(p)
    }

    pub fn gradient(&self, p: Vec2) -> Vec2 {
        self.field.gradient(p)
    }
}

/// Assembles the stiffness-plus-mass matrix of a space into banded storage.
fn assemble_operator(space: &FeSpace) -> BandedMatrix {
    let dpe = space.dofs_per_element();
    let n_tri = space.mesh.triangles.len();
    let mut bw = 0usize;
    for tri in 0..n_tri {
        let dofs = space.element_dofs(tri);
        let lo = *dofs.iter().min().unwrap();
        let hi = *dofs.iter().max().unwrap();
        bw = bw.max((hi - lo) as usize);
    }
    let mut matrix = BandedMatrix::zeros(space.n_dofs(), bw);
    for tri in 0..n_tri {
        let area = space.mesh.tri_geom[tri].area;
        let dofs = space.element_dofs(tri);
        let mut k = [[0.0f64; 6]; 6];
        for &(w, bary) in TRI_7.iter() {
            let scale = w * area;
            let nv = space.basis_values(bary);
            let ng = space.basis_gradients(tri, bary);
            for a in 0..dpe {
                for b in 0..=a {
                    k[a][b] += scale * (ng[a].dot(ng[b]) + nv[a] * nv[b]);
                }
            }
        }
        for a in 0..dpe {
            for b in 0..=a {
                let (ga, gb) = (dofs[a] as usize, dofs[b] as usize);
                matrix.add(ga.max(gb), ga.min(gb), k[a][b]);
            }
        }
    }
    matrix
}

/// A factored `−Δ + I` operator for one space, with or without the
/// homogeneous Dirichlet constraint. Factor once, solve many times: the
/// matrix is independent of the design and the control.
pub struct Solver {
    space: Arc<FeSpace>,
    chol: BandedCholesky,
    constrained: bool,
}

impl Solver {
    /// Constrained version: boundary dofs of the box are pinned to zero.
    pub fn dirichlet(space: &Arc<FeSpace>) -> Result<Solver, PdeError> {
        Solver::build(space, true)
    }

    /// Unconstrained version (natural boundary conditions), for the
    /// smoothing and conforming-Neumann problems.
    pub fn natural(space: &Arc<FeSpace>) -> Result<Solver, PdeError> {
        Solver::build(space, false)
    }

    fn build(space: &Arc<FeSpace>, constrained: bool) -> Result<Solver, PdeError> {
        let mut matrix = assemble_operator(space);
        if constrained {
            for (dof, &on_boundary) in space.is_boundary_dof.iter().enumerate() {
                if on_boundary {
                    matrix.eliminate_dof(dof);
                }
            }
        }
        Ok(Solver { space: space.clone(), chol: matrix.cholesky()?, constrained })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    /// Solves for one assembled load. Constrained solvers zero the load on
    /// boundary dofs first, so the result satisfies the homogeneous boundary
    /// condition exactly; the returned field is flagged accordingly.
    pub fn solve(&self, load: &[f64]) -> ScalarField {
        assert_eq!(load.len(), self.space.n_dofs());
        let coeffs = if self.constrained {
            let masked: Vec<f64> = load
                .iter()
                .enumerate()
                .map(|(d, &v)| if self.space.is_boundary_dof[d] { 0.0 } else { v })
                .collect();
            self.chol.solve(&masked)
        } else {
            self.chol.solve(load)
        };
        let mut field = ScalarField::from_coeffs(self.space.clone(), coeffs);
        field.dirichlet = self.constrained;
        field
    }
}

/// Assembles `∫ density·φ` over the box by the degree-5 triangle rule, one
/// entry per test function. The density sees the element, the barycentric
/// point, and the physical point.
pub fn assemble_load(
    space: &Arc<FeSpace>,
    density: impl Fn(usize, [f64; 3], Vec2) -> f64,
) -> Vec<f64> {
    let mut load = vec![0.0; space.n_dofs()];
    for tri in 0..space.mesh.triangles.len() {
        let area = space.mesh.tri_geom[tri].area;
        for &(w, bary) in TRI_7.iter() {
            let p = space.mesh.point_at(tri, bary);
            let d = density(tri, bary, p);
            if d != 0.0 {
                scatter_point(space, tri, bary, w * area * d, &mut load);
            }
        }
    }
    load
}

/// Adds `scale·φ(site)` to the load entries of the element's test functions.
fn scatter_point(space: &FeSpace, tri: usize, bary: [f64; 3], scale: f64, load: &mut [f64]) {
    let nv = space.basis_values(bary);
    for (local, &dof) in space.element_dofs(tri).iter().enumerate() {
        load[dof as usize] += scale * nv[local];
    }
}

/// Positive part of the design function at a located quadrature point.
fn g_plus(g: &LevelSet, tri: usize, bary: [f64; 3], p: Vec2) -> f64 {
    g.value_local(tri, bary, p).max(0.0)
}

/// Penalized state solve: `−Δy + y = f + (g₊)²·u` on the box, `y = 0` on its
/// walls. Inside the domain (`g ≤ 0`) the control term vanishes and the
/// strong equation is untouched; outside, the control acts as a distributed
/// source whose trace effect replaces the flux condition on the zero curve.
pub fn solve_state(
    solver: &Solver,
    f: &SourceData,
    g: &LevelSet,
    u: &ScalarField,
) -> ScalarField {
    assert!(solver.is_constrained(), "the state problem needs the Dirichlet solver");
    assert!(Arc::ptr_eq(&u.space, solver.space()), "control lives on another space");
    let load = assemble_load(solver.space(), |tri, bary, p| {
        let gp = g_plus(g, tri, bary, p);
        f.eval(p) + gp * gp * u.eval_local(tri, bary)
    });
    solver.solve(&load)
}

/// Derivative of the state along the design/control direction `(r, v)`: the
/// same constrained solve with load `(g₊)²·v + 2·g₊·r·u`, which is the exact
/// derivative of the control term of [`solve_state`] (the source `f` does
/// not depend on the design, so it drops out).
pub fn solve_linearized(
    solver: &Solver,
    g: &LevelSet,
    u: &ScalarField,
    r: &LevelSet,
    v: &ScalarField,
) -> ScalarField {
    assert!(solver.is_constrained(), "the linearized state needs the Dirichlet solver");
    assert!(Arc::ptr_eq(&u.space, solver.space()) && Arc::ptr_eq(&v.space, solver.space()));
    let load = assemble_load(solver.space(), |tri, bary, p| {
        let gp = g_plus(g, tri, bary, p);
        if gp == 0.0 {
            return 0.0;
        }
        gp * gp * v.eval_local(tri, bary)
            + 2.0 * gp * r.value_local(tri, bary, p) * u.eval_local(tri, bary)
    });
    solver.solve(&load)
}

/// Unconstrained smoothing solve: `d` with `∫∇d·∇φ + ∫d·φ = ∫2·g₊·u·p·φ` for
/// every `φ`, no boundary rows. Its negative is the design direction of the
/// representer-based descent variant, and its squared H¹ norm is that
/// variant's decrease certificate.
pub fn solve_control_smoothing(
    solver: &Solver,
    g: &LevelSet,
    u: &ScalarField,
    p: &ScalarField,
) -> ScalarField {
    assert!(!solver.is_constrained(), "the smoothing solve is unconstrained");
    assert!(Arc::ptr_eq(&u.space, solver.space()) && Arc::ptr_eq(&p.space, solver.space()));
    let load = assemble_load(solver.space(), |tri, bary, phys| {
        let gp = g_plus(g, tri, bary, phys);
        if gp == 0.0 {
            return 0.0;
        }
        2.0 * gp * u.eval_local(tri, bary) * p.eval_local(tri, bary)
    });
    solver.solve(&load)
}

/// The exact gradient of the discretized cost with respect to the state
/// coefficients, as a load vector:
///
/// - region tracking scatters `∂J/∂y` through the observation quadrature;
/// - boundary tracking scatters `∂j/∂y` through the trace samples;
/// - the flux penalty differentiates the *recovered* state gradient, so the
///   trace covectors are pushed through the transpose of the recovery
///   operator.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_load(
    space: &Arc<FeSpace>,
    y: &RecoveredJet,
    traces: &[TracedComponent],
    e: &ObservationRegion,
    d2_region: impl Fn(Vec2, f64) -> f64,
    d2_boundary: impl Fn(Vec2, f64) -> f64,
    delta: &NeumannData,
    epsilon: f64,
) -> Vec<f64> {
    assert!(Arc::ptr_eq(y.space(), space), "state lives on another space");
    assert!(epsilon > 0.0);
    let mesh = &space.mesh;
    let mut load = vec![0.0; space.n_dofs()];
    for &(x, w) in e.quadrature() {
        let (tri, bary) = mesh.locate(x).expect("observation point outside the box");
        let d2 = d2_region(x, y.value_local(tri, bary));
        if d2 != 0.0 {
            scatter_point(space, tri, bary, w * d2, &mut load);
        }
    }
    let mut ax = vec![0.0; space.n_dofs()];
    let mut ay = vec![0.0; space.n_dofs()];
    for comp in traces {
        let weights = comp.quadrature_weights();
        for (s, &z) in comp.points.iter().enumerate() {
            let vel = comp.velocities[s];
            let speed = vel.norm();
            assert!(speed > 0.0, "stored trace velocity vanished");
            let (tri, bary) = mesh.locate(z).expect("trace sample outside the box");
            let w = weights[s] * speed;
            let d2 = d2_boundary(z, y.value_local(tri, bary));
            if d2 != 0.0 {
                scatter_point(space, tri, bary, w * d2, &mut load);
            }
            let normal = Vec2::new(vel.y, -vel.x) / speed;
            let flux = y.gradient_local(tri, bary).dot(normal) - delta.value(z);
            let a = normal * (w * 2.0 / epsilon * flux);
            let nv = space.basis_values(bary);
            for (local, &dof) in space.element_dofs(tri).iter().enumerate() {
                ax[dof as usize] += a.x * nv[local];
                ay[dof as usize] += a.y * nv[local];
            }
        }
    }
    let flux_load = recover_gradient_transpose(space, &ax, &ay);
    for (l, fl) in load.iter_mut().zip(&flux_load) {
        *l += fl;
    }
    load
}

/// Adjoint solve: the constrained problem driven by [`adjoint_load`].
/// Pairing the result with the load of any linearized state reproduces the
/// state-dependent part of the cost derivative to roundoff.
#[allow(clippy::too_many_arguments)]
pub fn solve_adjoint(
    solver: &Solver,
    y: &RecoveredJet,
    traces: &[TracedComponent],
    e: &ObservationRegion,
    d2_region: impl Fn(Vec2, f64) -> f64,
    d2_boundary: impl Fn(Vec2, f64) -> f64,
    delta: &NeumannData,
    epsilon: f64,
) -> ScalarField {
    assert!(solver.is_constrained(), "the adjoint needs the Dirichlet solver");
    let load =
        adjoint_load(solver.space(), y, traces, e, d2_region, d2_boundary, delta, epsilon);
    solver.solve(&load)
}

/// A conforming Neumann solution on a classified submesh, with the maps back
/// to the parent box mesh.
pub struct NeumannSolution {
    pub space: Arc<FeSpace>,
    pub y: ScalarField,
    /// Parent triangle index of each submesh triangle.
    pub parent_triangles: Vec<u32>,
    /// Parent vertex index of each submesh vertex.
    pub parent_vertices: Vec<u32>,
}

/// Solves `−Δy + y = f` with the natural flux condition `∂y/∂n = δ` on the
/// staircase boundary of the masked triangles. The flux data enters as a
/// line integral over the submesh boundary edges (2-point Gauss per edge).
pub fn solve_neumann_validation(
    parent: &Mesh,
    mask: &[bool],
    degree: Degree,
    f: &SourceData,
    delta: &NeumannData,
) -> Result<NeumannSolution, PdeError> {
    let SubMesh { mesh, parent_triangles, parent_vertices } = extract_submesh(parent, mask)?;
    let mesh = Arc::new(mesh);
    let space = FeSpace::new(mesh.clone(), degree);
    let solver = Solver::natural(&space)?;
    let mut load = assemble_load(&space, |_, _, p| f.eval(p));
    for &(a, b, owner) in &mesh.boundary_edges {
        let (pa, pb) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
        let len = pa.dist(pb);
        for (t, w) in gauss_legendre_on(2, 0.0, 1.0) {
            let p = pa + (pb - pa) * t;
            let scale = w * len * delta.value(p);
            if scale != 0.0 {
                let bary = mesh.barycentric(owner as usize, p);
                scatter_point(&space, owner as usize, bary, scale, &mut load);
            }
        }
    }
    let y = solver.solve(&load);
    Ok(NeumannSolution { space, y, parent_triangles, parent_vertices })
}

/// H¹ distance over the submesh between a field on the parent box and a
/// submesh solution of the same degree. Submesh triangles are the same
/// physical triangles as their parents (same vertex order), so one
/// barycentric point serves both sides.
pub fn h1_gap_on_submesh(parent_field: &ScalarField, sub: &NeumannSolution) -> f64 {
    assert_eq!(parent_field.space.degree, sub.space.degree, "degree mismatch across the gap");
    let sub_mesh = &sub.space.mesh;
    let mut acc = 0.0;
    for (k, &pk) in sub.parent_triangles.iter().enumerate() {
        let area = sub_mesh.tri_geom[k].area;
        for &(w, bary) in TRI_7.iter() {
            let dv = parent_field.eval_local(pk as usize, bary) - sub.y.eval_local(k, bary);
            let dg = parent_field.grad_local(pk as usize, bary) - sub.y.grad_local(k, bary);
            acc += w * area * (dg.norm_sq() + dv * dv);
        }
    }
    acc.sqrt()
}
