//! Design functions g and the domains they induce.
//!
//! A level set carries a scalar function on the box whose negative region is
//! the working domain and whose zero set is the moving boundary. Two backends
//! exist: closed-form expressions (exact derivatives via second-order dual
//! numbers) and finite-element fields (derivatives via nodal gradient
//! recovery, applied twice for the Hessian). Both expose the same jet API so
//! the tracer and the cost terms never branch on the representation.
//!
//! The module also owns domain classification (flood fill over negative
//! triangles from an anchor), the nodal projection that pins g to a reference
//! shape on the observation region, and the observation region itself.

pub mod admissibility;
pub mod dual;
pub mod expr;
pub mod region;
pub mod seeds;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{
    recover_gradient, FeSpace, GeometryError, Mesh, ScalarField, VectorField,
};
use crate::Vec2;
use dual::Dual2;
use expr::{Expr, ExprError};
use region::ObservationRegion;

#[derive(Debug, Error)]
pub enum LevelSetError {
    #[error("level-set expression: {0}")]
    Expr(#[from] ExprError),
    #[error("no zero crossing of g found on the mesh")]
    NoZeroSet,
    #[error("|grad g| = {found:.3e} at ({x:.6}, {y:.6}) is below the floor {floor:.3e}")]
    DegenerateGradient { x: f64, y: f64, found: f64, floor: f64 },
    #[error("anchor does not reach any triangle with g < 0 at all vertices")]
    EmptyDomain,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Trace(#[from] crate::hamiltonian::TraceError),
}

/// Symmetric 2x2 second-derivative matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Hess {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Hess {
    /// First row, i.e. the gradient of the x-derivative.
    pub fn row_x(&self) -> Vec2 {
        Vec2::new(self.xx, self.xy)
    }

    /// Second row, i.e. the gradient of the y-derivative.
    pub fn row_y(&self) -> Vec2 {
        Vec2::new(self.xy, self.yy)
    }

    /// Matrix-vector product H v.
    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }
}

/// Value, gradient, and Hessian of g at one point.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Hess,
}

#[derive(Clone)]
enum Backend {
    /// Weighted sum of parsed expressions; perturbations append terms.
    Analytic(Vec<(f64, Arc<Expr>)>),
    Fe(FeBackend),
}

#[derive(Clone)]
struct FeBackend {
    field: ScalarField,
    grad: VectorField,
    /// Recovered gradients of the two recovered gradient components; rows of
    /// the (then symmetrized) Hessian.
    hess_x: VectorField,
    hess_y: VectorField,
}

/// A design function with value/gradient/Hessian everywhere on the box.
#[derive(Clone)]
pub struct LevelSet {
    backend: Backend,
}

impl LevelSet {
    /// Parse a closed-form design function from the expression grammar.
    pub fn from_expr(src: &str) -> Result<LevelSet, LevelSetError> {
        let e = Expr::parse(src)?;
        Ok(LevelSet { backend: Backend::Analytic(vec![(1.0, Arc::new(e))]) })
    }

    pub fn from_expr_ast(e: Expr) -> LevelSet {
        LevelSet { backend: Backend::Analytic(vec![(1.0, Arc::new(e))]) }
    }

    /// Wrap a nodal field, building its recovered gradient and Hessian.
    pub fn from_field(field: ScalarField) -> LevelSet {
        let grad = recover_gradient(&field);
        let hess_x = recover_gradient(&grad.x);
        let hess_y = recover_gradient(&grad.y);
        LevelSet { backend: Backend::Fe(FeBackend { field, grad, hess_x, hess_y }) }
    }

    /// Nodal interpolation onto a finite-element space.
    pub fn interpolate_to(&self, space: &Arc<FeSpace>) -> LevelSet {
        let f = ScalarField::interpolate(space.clone(), |p| self.value(p));
        LevelSet::from_field(f)
    }

    pub fn is_fe(&self) -> bool {
        matches!(self.backend, Backend::Fe(_))
    }

    /// The nodal field behind an FE-backed level set.
    pub fn fe_field(&self) -> Option<&ScalarField> {
        match &self.backend {
            Backend::Fe(b) => Some(&b.field),
            Backend::Analytic(_) => None,
        }
    }

    /// g + lambda * r. Both operands must share a backend kind (and space).
    pub fn perturbed(&self, dir: &LevelSet, lambda: f64) -> LevelSet {
        match (&self.backend, &dir.backend) {
            (Backend::Analytic(a), Backend::Analytic(b)) => {
                let mut terms = a.clone();
                terms.extend(b.iter().map(|(c, e)| (lambda * c, e.clone())));
                LevelSet { backend: Backend::Analytic(terms) }
            }
            (Backend::Fe(a), Backend::Fe(b)) => {
                let sum = a
                    .field
                    .add_scaled(&b.field, lambda)
                    .expect("perturbation direction lives on a different space");
                LevelSet::from_field(sum)
            }
            _ => panic!("cannot combine analytic and FE-backed level sets"),
        }
    }

    pub fn value(&self, p: Vec2) -> f64 {
        match &self.backend {
            Backend::Analytic(terms) => terms.iter().map(|(c, e)| c * e.eval(p)).sum(),
            Backend::Fe(b) => b.field.eval(p).expect("level-set query outside the mesh"),
        }
    }

    pub fn gradient(&self, p: Vec2) -> Vec2 {
        match &self.backend {
            Backend::Analytic(_) => self.jet(p).grad,
            Backend::Fe(b) => b.grad.eval(p).expect("level-set query outside the mesh"),
        }
    }

    pub fn value_and_gradient(&self, p: Vec2) -> (f64, Vec2) {
        match &self.backend {
            Backend::Analytic(_) => {
                let j = self.jet(p);
                (j.value, j.grad)
            }
            Backend::Fe(b) => {
                let (tri, bary) =
                    b.field.space.mesh.locate(p).expect("level-set query outside the mesh");
                (b.field.eval_local(tri, bary), b.grad.eval_local(tri, bary))
            }
        }
    }

    pub fn hessian(&self, p: Vec2) -> Hess {
        self.jet(p).hess
    }

    /// Full second-order jet at a point.
    pub fn jet(&self, p: Vec2) -> Jet {
        match &self.backend {
            Backend::Analytic(terms) => {
                let mut acc = Dual2::constant(0.0);
                for (c, e) in terms {
                    acc = Dual2::add(acc, Dual2::mul(Dual2::constant(*c), e.eval2(p)));
                }
                Jet {
                    value: acc.v,
                    grad: Vec2::new(acc.dx, acc.dy),
                    hess: Hess { xx: acc.dxx, xy: acc.dxy, yy: acc.dyy },
                }
            }
            Backend::Fe(b) => {
                let (tri, bary) =
                    b.field.space.mesh.locate(p).expect("level-set query outside the mesh");
                let hx = b.hess_x.eval_local(tri, bary);
                let hy = b.hess_y.eval_local(tri, bary);
                Jet {
                    value: b.field.eval_local(tri, bary),
                    grad: b.grad.eval_local(tri, bary),
                    hess: Hess { xx: hx.x, xy: 0.5 * (hx.y + hy.x), yy: hy.y },
                }
            }
        }
    }

    /// Value at a quadrature point already located in an element.
    ///
    /// FE backends use the local coordinates directly; analytic backends use
    /// the physical point. Both agree with `value` up to representation.
    pub fn value_local(&self, tri: usize, bary: [f64; 3], p: Vec2) -> f64 {
        match &self.backend {
            Backend::Analytic(terms) => terms.iter().map(|(c, e)| c * e.eval(p)).sum(),
            Backend::Fe(b) => b.field.eval_local(tri, bary),
        }
    }
}

/// Where to start the flood fill that selects one component of the domain.
#[derive(Clone, Copy, Debug)]
pub enum Anchor<'a> {
    Point(Vec2),
    Region(&'a ObservationRegion),
}

/// Select the connected set of fully-negative triangles reachable from the
/// anchor. Returns one flag per triangle.
pub fn classify_domain(
    ls: &LevelSet,
    mesh: &Mesh,
    anchor: Anchor<'_>,
) -> Result<Vec<bool>, LevelSetError> {
    let negative: Vec<bool> = mesh.vertices.iter().map(|&v| ls.value(v) < 0.0).collect();
    let candidate: Vec<bool> = mesh
        .triangles
        .iter()
        .map(|t| t.iter().all(|&v| negative[v as usize]))
        .collect();

    let h = mesh.h();
    let mut seeds: Vec<usize> = Vec::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if !candidate[ti] {
            continue;
        }
        let hit = match anchor {
            Anchor::Point(p) => {
                let b = mesh.barycentric(ti, p);
                b.iter().all(|&l| l >= -1e-12)
                    || t.iter().any(|&v| mesh.vertices[v as usize].dist(p) <= h)
            }
            Anchor::Region(e) => {
                let c = mesh.point_at(ti, [1.0 / 3.0; 3]);
                e.contains(c) || t.iter().any(|&v| e.contains(mesh.vertices[v as usize]))
            }
        };
        if hit {
            seeds.push(ti);
        }
    }
    if seeds.is_empty() {
        return Err(LevelSetError::EmptyDomain);
    }

    // Edge-adjacency among candidate triangles.
    let mut edge_owner: HashMap<(u32, u32), u32> = HashMap::new();
    let mut neighbors: Vec<[Option<u32>; 3]> = vec![[None; 3]; mesh.triangles.len()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            match edge_owner.remove(&key) {
                Some(other) => {
                    neighbors[ti][k] = Some(other);
                    let ot = &mesh.triangles[other as usize];
                    let slot = (0..3)
                        .find(|&j| {
                            let (oa, ob) = (ot[j], ot[(j + 1) % 3]);
                            (oa.min(ob), oa.max(ob)) == key
                        })
                        .expect("shared edge not found in owning triangle");
                    neighbors[other as usize][slot] = Some(ti as u32);
                }
                None => {
                    edge_owner.insert(key, ti as u32);
                }
            }
        }
    }

    let mut mask = vec![false; mesh.triangles.len()];
    let mut stack = seeds;
    for &s in &stack {
        mask[s] = true;
    }
    while let Some(ti) = stack.pop() {
        for n in neighbors[ti].iter().flatten() {
            let n = *n as usize;
            if candidate[n] && !mask[n] {
                mask[n] = true;
                stack.push(n);
            }
        }
    }
    Ok(mask)
}

/// Nodal projection: replace g by the reference function on every dof inside
/// the observation region, keep g elsewhere. Idempotent by construction.
pub fn project_constraint(
    g: &LevelSet,
    e: &ObservationRegion,
    g_e: &LevelSet,
    space: &Arc<FeSpace>,
) -> LevelSet {
    let mut coeffs = Vec::with_capacity(space.n_dofs());
    let same_space = g.fe_field().map(|f| Arc::ptr_eq(&f.space, space)).unwrap_or(false);
    for (i, &p) in space.dof_coords.iter().enumerate() {
        let v = if e.contains(p) {
            g_e.value(p)
        } else if same_space {
            g.fe_field().unwrap().coeffs[i]
        } else {
            g.value(p)
        };
        coeffs.push(v);
    }
    LevelSet::from_field(ScalarField::from_coeffs(space.clone(), coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Degree, Rect};

    fn ring() -> LevelSet {
        LevelSet::from_expr(
            "max((x1+0.8)^2 + (x2+0.8)^2 - 1.8^2, -(x1+0.8)^2 - (x2+0.8)^2 + 0.6^2)",
        )
        .unwrap()
    }

    fn mesh_on_box(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::rectangle(Rect::centered_square(3.0), n).unwrap())
    }

    #[test]
    fn analytic_jet_matches_finite_differences() {
        let g = LevelSet::from_expr("x1^2*x2 - x2^3/3 + min(x1, 2*x2) + 0.7").unwrap();
        let h = 1e-5;
        for &p in &[Vec2::new(0.4, 0.9), Vec2::new(-1.2, 0.3), Vec2::new(0.8, -0.6)] {
            let jet = g.jet(p);
            let (ex, ey) = (Vec2::new(h, 0.0), Vec2::new(0.0, h));
            let fd_x = (g.value(p + ex) - g.value(p - ex)) / (2.0 * h);
            let fd_y = (g.value(p + ey) - g.value(p - ey)) / (2.0 * h);
            assert!((jet.grad.x - fd_x).abs() <= 1e-6 * (1.0 + fd_x.abs()));
            assert!((jet.grad.y - fd_y).abs() <= 1e-6 * (1.0 + fd_y.abs()));
            let fd_xx = (g.value(p + ex) - 2.0 * g.value(p) + g.value(p - ex)) / (h * h);
            let fd_yy = (g.value(p + ey) - 2.0 * g.value(p) + g.value(p - ey)) / (h * h);
            let fd_xy = (g.value(p + ex + ey) - g.value(p + ex - ey) - g.value(p - ex + ey)
                + g.value(p - ex - ey))
                / (4.0 * h * h);
            assert!((jet.hess.xx - fd_xx).abs() < 1e-4);
            assert!((jet.hess.yy - fd_yy).abs() < 1e-4);
            assert!((jet.hess.xy - fd_xy).abs() < 1e-4);
        }
    }

    #[test]
    fn fe_backend_is_exact_for_quadratics_on_p2() {
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let space = FeSpace::new(mesh_on_box(12), Degree::P2);
        let gh = g.interpolate_to(&space);
        for &p in &[Vec2::new(0.3, 0.7), Vec2::new(-1.9, 2.2), Vec2::new(0.0, -0.5)] {
            let jet = gh.jet(p);
            assert!((jet.value - g.value(p)).abs() < 1e-12);
            assert!((jet.grad - g.gradient(p)).norm() < 1e-11);
            assert!((jet.hess.xx - 2.0).abs() < 1e-10);
            assert!((jet.hess.yy - 2.0).abs() < 1e-10);
            assert!(jet.hess.xy.abs() < 1e-10);
        }
    }

    #[test]
    fn perturbed_combines_both_backends() {
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let r = LevelSet::from_expr("x1 - 2*x2").unwrap();
        let p = Vec2::new(0.6, -0.3);
        let combo = g.perturbed(&r, 0.25);
        assert!((combo.value(p) - (g.value(p) + 0.25 * r.value(p))).abs() < 1e-14);
        assert!((combo.gradient(p) - (g.gradient(p) + 0.25 * r.gradient(p))).norm() < 1e-13);

        let space = FeSpace::new(mesh_on_box(8), Degree::P1);
        let (gh, rh) = (g.interpolate_to(&space), r.interpolate_to(&space));
        let ch = gh.perturbed(&rh, 0.25);
        assert!((ch.value(p) - (gh.value(p) + 0.25 * rh.value(p))).abs() < 1e-13);
    }

    #[test]
    fn classify_unit_disk_recovers_its_area() {
        // Only fully-negative triangles are counted, so the mask omits a
        // boundary ring roughly 0.64*h*perimeter in area: about 0.25 at
        // n = 96 and half that at n = 192.
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let mut deficits = Vec::new();
        for n in [96, 192] {
            let mesh = mesh_on_box(n);
            let mask = classify_domain(&g, &mesh, Anchor::Point(Vec2::ZERO)).unwrap();
            let area: f64 = (0..mesh.triangles.len())
                .filter(|&t| mask[t])
                .map(|t| mesh.tri_geom[t].area)
                .sum();
            assert!(area < std::f64::consts::PI, "mask must stay inside the disk");
            deficits.push(std::f64::consts::PI - area);
        }
        assert!(deficits[0] < 5.0 * mesh_on_box(96).h(), "{deficits:?}");
        assert!(deficits[1] < 0.6 * deficits[0], "{deficits:?}");
    }

    #[test]
    fn classify_everywhere_negative_marks_all_triangles() {
        let g = LevelSet::from_expr("-1").unwrap();
        let mesh = mesh_on_box(8);
        let mask = classify_domain(&g, &mesh, Anchor::Point(Vec2::ZERO)).unwrap();
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn classify_ring_from_observation_disk() {
        // The observation disk at the origin lies inside the annulus (its
        // distance to the ring center spans [0.63, 1.63] within (0.6, 1.8)),
        // so classification succeeds and finds the full ring.
        let g = ring();
        let mesh = mesh_on_box(96);
        let e = ObservationRegion::disk(Vec2::ZERO, 0.5);
        let mask = classify_domain(&g, &mesh, Anchor::Region(&e)).unwrap();
        let area: f64 = (0..mesh.triangles.len())
            .filter(|&t| mask[t])
            .map(|t| mesh.tri_geom[t].area)
            .sum();
        // Two boundary circles, each shaved by a ring of partially-covered
        // triangles (~0.64*h per unit perimeter ~ 0.6 total at n = 96).
        let annulus = std::f64::consts::PI * (1.8 * 1.8 - 0.6 * 0.6);
        assert!(area < annulus && annulus - area < 1.0, "area = {area}, annulus = {annulus}");
        // The hole center is outside the domain: anchoring there must fail.
        let err = classify_domain(&g, &mesh, Anchor::Point(Vec2::new(-0.8, -0.8)));
        assert!(matches!(err, Err(LevelSetError::EmptyDomain)));
    }

    #[test]
    fn classify_mask_grows_when_g_decreases() {
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let g_lower = LevelSet::from_expr("x1^2 + x2^2 - 1.3").unwrap();
        let mesh = mesh_on_box(24);
        let a = classify_domain(&g, &mesh, Anchor::Point(Vec2::ZERO)).unwrap();
        let b = classify_domain(&g_lower, &mesh, Anchor::Point(Vec2::ZERO)).unwrap();
        assert!(a.iter().zip(&b).all(|(&ma, &mb)| !ma || mb));
        assert!(b.iter().filter(|&&m| m).count() > a.iter().filter(|&&m| m).count());
    }

    #[test]
    fn projection_pins_g_on_the_observation_disk() {
        let g = LevelSet::from_expr("1").unwrap();
        let g_e = LevelSet::from_expr("x1^2 + x2^2 - 0.25").unwrap();
        let e = ObservationRegion::disk(Vec2::ZERO, 0.5);
        let space = FeSpace::new(mesh_on_box(24), Degree::P1);
        let pg = project_constraint(&g, &e, &g_e, &space);
        let field = pg.fe_field().unwrap();
        for (i, &p) in space.dof_coords.iter().enumerate() {
            if e.contains(p) {
                assert!(field.coeffs[i] <= 0.0);
                assert!((field.coeffs[i] - g_e.value(p)).abs() < 1e-15);
            } else {
                assert_eq!(field.coeffs[i], 1.0);
            }
        }
        // Idempotent: a second application changes nothing.
        let pg2 = project_constraint(&pg, &e, &g_e, &space);
        assert_eq!(pg.fe_field().unwrap().coeffs, pg2.fe_field().unwrap().coeffs);
    }
}
