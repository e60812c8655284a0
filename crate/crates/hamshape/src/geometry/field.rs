use std::sync::Arc;

use super::space::FeSpace;
use super::GeometryError;
use crate::Vec2;

/// Barycentric coordinates of the local dof sites, in local element order.
pub(crate) const DOF_BARY: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
];

/// A finite-element function: one coefficient per dof of its space.
#[derive(Clone)]
pub struct ScalarField {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
    /// Set on fields produced by solves with a homogeneous Dirichlet
    /// constraint; their boundary coefficients are exactly zero.
    pub dirichlet: bool,
}

impl ScalarField {
    pub fn zeros(space: Arc<FeSpace>) -> ScalarField {
        let n = space.n_dofs();
        ScalarField { space, coeffs: vec![0.0; n], dirichlet: false }
    }

    pub fn from_coeffs(space: Arc<FeSpace>, coeffs: Vec<f64>) -> ScalarField {
        assert_eq!(coeffs.len(), space.n_dofs());
        ScalarField { space, coeffs, dirichlet: false }
    }

    /// Nodal interpolation: coefficient i is `f` at dof site i.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn(Vec2) -> f64) -> ScalarField {
        let coeffs = space.dof_coords.iter().map(|&p| f(p)).collect();
        ScalarField { space, coeffs, dirichlet: false }
    }

    pub fn same_space(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    /// Value inside a known triangle, by barycentric coordinates.
    pub fn eval_local(&self, tri: usize, bary: [f64; 3]) -> f64 {
        let n = self.space.basis_values(bary);
        self.space
            .element_dofs(tri)
            .iter()
            .zip(n)
            .map(|(&d, nv)| self.coeffs[d as usize] * nv)
            .sum()
    }

    /// Elementwise (raw) gradient inside a known triangle.
    pub fn grad_local(&self, tri: usize, bary: [f64; 3]) -> Vec2 {
        let g = self.space.basis_gradients(tri, bary);
        self.space
            .element_dofs(tri)
            .iter()
            .zip(g)
            .fold(Vec2::ZERO, |acc, (&d, gv)| acc + gv * self.coeffs[d as usize])
    }

    pub fn eval(&self, p: Vec2) -> Result<f64, GeometryError> {
        let (tri, bary) = self
            .space
            .mesh
            .locate(p)
            .ok_or(GeometryError::PointOutsideMesh(p))?;
        Ok(self.eval_local(tri, bary))
    }

    /// `self + s * other`, requiring both fields to share a space.
    pub fn add_scaled(&self, other: &ScalarField, s: f64) -> Result<ScalarField, GeometryError> {
        if !self.same_space(other) {
            return Err(GeometryError::SpaceMismatch);
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a + s * b)
            .collect();
        Ok(ScalarField { space: self.space.clone(), coeffs, dirichlet: false })
    }
}

/// A vector-valued finite-element function (two scalar components).
#[derive(Clone)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn eval_local(&self, tri: usize, bary: [f64; 3]) -> Vec2 {
        Vec2::new(self.x.eval_local(tri, bary), self.y.eval_local(tri, bary))
    }

    pub fn eval(&self, p: Vec2) -> Result<Vec2, GeometryError> {
        let (tri, bary) = self
            .x
            .space
            .mesh
            .locate(p)
            .ok_or(GeometryError::PointOutsideMesh(p))?;
        Ok(self.eval_local(tri, bary))
    }

    /// Elementwise Jacobian; row r is the gradient of component r.
    pub fn jacobian_local(&self, tri: usize, bary: [f64; 3]) -> [Vec2; 2] {
        [self.x.grad_local(tri, bary), self.y.grad_local(tri, bary)]
    }
}

/// Total area of the triangles incident to each dof (the recovery weights).
fn dof_incident_area(space: &FeSpace) -> Vec<f64> {
    let mut den = vec![0.0f64; space.n_dofs()];
    for tri in 0..space.mesh.triangles.len() {
        let area = space.mesh.tri_geom[tri].area;
        for &dof in space.element_dofs(tri) {
            den[dof as usize] += area;
        }
    }
    den
}

/// Nodal-averaged gradient recovery: at each dof, the area-weighted average of
/// the elementwise gradients of the incident triangles, evaluated at the dof
/// site. Exact for globally linear fields; the result lives on the same space.
pub fn recover_gradient(f: &ScalarField) -> VectorField {
    let space = &f.space;
    let n = space.n_dofs();
    let mut num = vec![Vec2::ZERO; n];
    let den = dof_incident_area(space);
    let dpe = space.dofs_per_element();
    for tri in 0..space.mesh.triangles.len() {
        let area = space.mesh.tri_geom[tri].area;
        let dofs = space.element_dofs(tri);
        for (local, &dof) in dofs.iter().enumerate().take(dpe) {
            let grad = f.grad_local(tri, DOF_BARY[local]);
            num[dof as usize] += grad * area;
        }
    }
    let gx = num.iter().zip(&den).map(|(v, &d)| v.x / d).collect();
    let gy = num.iter().zip(&den).map(|(v, &d)| v.y / d).collect();
    VectorField {
        x: ScalarField { space: space.clone(), coeffs: gx, dirichlet: false },
        y: ScalarField { space: space.clone(), coeffs: gy, dirichlet: false },
    }
}

/// Transpose of the recovery operator: maps a pair of nodal covectors (one per
/// recovered-gradient component) to a covector on the field coefficients, so
/// that for every field f and all (ax, ay),
/// `dot(ax, Rx f) + dot(ay, Ry f) = dot(recover_gradient_transpose(ax, ay), f)`
/// where `(Rx f, Ry f) = recover_gradient(f)`. Used to assemble load vectors
/// for functionals expressed through recovered gradients.
pub fn recover_gradient_transpose(space: &Arc<FeSpace>, ax: &[f64], ay: &[f64]) -> Vec<f64> {
    let n = space.n_dofs();
    assert!(ax.len() == n && ay.len() == n);
    let den = dof_incident_area(space);
    let mut out = vec![0.0f64; n];
    let dpe = space.dofs_per_element();
    for tri in 0..space.mesh.triangles.len() {
        let area = space.mesh.tri_geom[tri].area;
        let dofs = space.element_dofs(tri);
        for (site_local, &site_dof) in dofs.iter().enumerate().take(dpe) {
            let site = site_dof as usize;
            let a = Vec2::new(ax[site], ay[site]);
            if a == Vec2::ZERO {
                continue;
            }
            let scale = area / den[site];
            let grads = space.basis_gradients(tri, DOF_BARY[site_local]);
            for (local, &dof) in dofs.iter().enumerate().take(dpe) {
                out[dof as usize] += scale * a.dot(grads[local]);
            }
        }
    }
    out
}

/// A field bundled with its recovered gradient and the recovered Jacobian of
/// that gradient. Boundary-curve quadratures evaluate solved states through
/// this: raw elementwise gradients of low-degree elements jump across edges,
/// while the recovered fields are continuous and superconvergent.
pub struct RecoveredJet {
    pub field: ScalarField,
    /// Nodal-recovered gradient.
    pub grad: VectorField,
}

impl RecoveredJet {
    pub fn new(field: ScalarField) -> RecoveredJet {
        let grad = recover_gradient(&field);
        RecoveredJet { field, grad }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.field.space
    }

    pub fn value_local(&self, tri: usize, bary: [f64; 3]) -> f64 {
        self.field.eval_local(tri, bary)
    }

    /// Recovered (smoothed) gradient.
    pub fn gradient_local(&self, tri: usize, bary: [f64; 3]) -> Vec2 {
        self.grad.eval_local(tri, bary)
    }

    /// Raw elementwise gradient of the underlying field.
    pub fn raw_gradient_local(&self, tri: usize, bary: [f64; 3]) -> Vec2 {
        self.field.grad_local(tri, bary)
    }

    /// Jacobian of the recovered gradient: row r is the elementwise (raw)
    /// gradient of component r — the exact spatial derivative of
    /// `gradient_local`, which derivative-vs-difference tests depend on. Not
    /// symmetric in general.
    pub fn jacobian_local(&self, tri: usize, bary: [f64; 3]) -> [Vec2; 2] {
        self.grad.jacobian_local(tri, bary)
    }
}

/// L² distance between a field and a reference function, by the degree-5
/// triangle rule.
pub fn l2_distance(f: &ScalarField, exact: impl Fn(Vec2) -> f64) -> f64 {
    use super::quadrature::TRI_7;
    let space = &f.space;
    let mut acc = 0.0;
    for tri in 0..space.mesh.triangles.len() {
        let area = space.mesh.tri_geom[tri].area;
        for &(w, bary) in TRI_7.iter() {
            let p = space.mesh.point_at(tri, bary);
            let d = f.eval_local(tri, bary) - exact(p);
            acc += w * area * d * d;
        }
    }
    acc.sqrt()
}

/// L² norm of a field.
pub fn l2_norm(f: &ScalarField) -> f64 {
    l2_distance(f, |_| 0.0)
}

/// Squared H¹ norm ∫ |∇f|² + f², by the degree-5 triangle rule (exact for
/// P1 and P2 fields).
pub fn h1_norm_sq(f: &ScalarField) -> f64 {
    use super::quadrature::TRI_7;
    let space = &f.space;
    let mut acc = 0.0;
    for tri in 0..space.mesh.triangles.len() {
        let area = space.mesh.tri_geom[tri].area;
        for &(w, bary) in TRI_7.iter() {
            let v = f.eval_local(tri, bary);
            let g = f.grad_local(tri, bary);
            acc += w * area * (g.norm_sq() + v * v);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{Degree, Mesh, Rect};

    fn random_points(n: usize, half: f64, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec2::new(rng.gen_range(-half..half), rng.gen_range(-half..half)))
            .collect()
    }

    #[test]
    fn p1_reproduces_linear_fields() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), 11).unwrap());
        let space = FeSpace::new(mesh, Degree::P1);
        let f = |p: Vec2| 0.3 * (2.0 * p.x - p.y + 1.0);
        let field = ScalarField::interpolate(space, f);
        for p in random_points(100, 3.0, 7) {
            assert!((field.eval(p).unwrap() - f(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn p2_reproduces_quadratic_fields() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), 9).unwrap());
        let space = FeSpace::new(mesh, Degree::P2);
        let f = |p: Vec2| 0.25 * (p.x * p.x + p.x * p.y - 2.0 * p.y * p.y + p.x - 3.0 * p.y + 2.0);
        let field = ScalarField::interpolate(space, f);
        for p in random_points(100, 3.0, 8) {
            assert!((field.eval(p).unwrap() - f(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn recovery_is_exact_for_linear_fields() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), 6).unwrap());
        for degree in [Degree::P1, Degree::P2] {
            let space = FeSpace::new(mesh.clone(), degree);
            let field = ScalarField::interpolate(space.clone(), |p| 2.0 * p.x + p.y - 0.5);
            let grad = recover_gradient(&field);
            for (&gx, &gy) in grad.x.coeffs.iter().zip(&grad.y.coeffs) {
                assert!((gx - 2.0).abs() < 1e-12 && (gy - 1.0).abs() < 1e-12);
            }
            let zero = recover_gradient(&ScalarField::interpolate(space, |_| 4.2));
            for (&gx, &gy) in zero.x.coeffs.iter().zip(&zero.y.coeffs) {
                assert!(gx.abs() < 1e-12 && gy.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recovery_converges_at_interior_vertices_on_p1() {
        // The symmetric six-triangle stencil recovers d/dx of x² exactly at
        // interior vertices; x³ has a genuine O(h²) error (measured 6.25e-2,
        // 1.56e-2, 3.91e-3 over this sweep), so it carries the convergence
        // assertion.
        let mut sup_errors = Vec::new();
        for n in [24usize, 48, 96] {
            let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), n).unwrap());
            let space = FeSpace::new(mesh, Degree::P1);
            let sup_err = |f: &dyn Fn(Vec2) -> f64, dfdx: &dyn Fn(Vec2) -> f64| {
                let grad = recover_gradient(&ScalarField::interpolate(space.clone(), f));
                space
                    .dof_coords
                    .iter()
                    .enumerate()
                    .filter(|&(d, _)| !space.is_boundary_dof[d])
                    .map(|(d, &p)| (grad.x.coeffs[d] - dfdx(p)).abs())
                    .fold(0.0f64, f64::max)
            };
            assert!(sup_err(&|p| p.x * p.x, &|p| 2.0 * p.x) < 1e-12);
            sup_errors.push(sup_err(&|p| p.x * p.x * p.x, &|p| 3.0 * p.x * p.x));
        }
        assert!(sup_errors[2] < 0.2, "sup error at n=96: {}", sup_errors[2]);
        assert!(sup_errors[0] > 2.0 * sup_errors[1] && sup_errors[1] > 2.0 * sup_errors[2]);
    }

    #[test]
    fn transpose_recovery_satisfies_the_adjoint_identity() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), 7).unwrap());
        for degree in [Degree::P1, Degree::P2] {
            let space = FeSpace::new(mesh.clone(), degree);
            let n = space.n_dofs();
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let f = ScalarField::from_coeffs(space.clone(), draw(&mut rng));
            let (ax, ay) = (draw(&mut rng), draw(&mut rng));
            let grad = recover_gradient(&f);
            let forward: f64 = (0..n)
                .map(|i| ax[i] * grad.x.coeffs[i] + ay[i] * grad.y.coeffs[i])
                .sum();
            let back = recover_gradient_transpose(&space, &ax, &ay);
            let transposed: f64 = (0..n).map(|i| back[i] * f.coeffs[i]).sum();
            assert!(
                (forward - transposed).abs() <= 1e-12 * forward.abs().max(1.0),
                "{degree:?}: {forward} vs {transposed}"
            );
        }
    }

    #[test]
    fn recovered_jet_is_exact_on_quadratics() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), 8).unwrap());
        let space = FeSpace::new(mesh, Degree::P2);
        let f = |p: Vec2| p.x * p.x - 0.5 * p.x * p.y + 2.0 * p.y * p.y - p.x + 3.0;
        let jet = RecoveredJet::new(ScalarField::interpolate(space.clone(), f));
        for p in random_points(50, 2.9, 31) {
            let (tri, bary) = space.mesh.locate(p).unwrap();
            assert!((jet.value_local(tri, bary) - f(p)).abs() < 1e-12);
            let grad = Vec2::new(2.0 * p.x - 0.5 * p.y - 1.0, -0.5 * p.x + 4.0 * p.y);
            assert!(jet.gradient_local(tri, bary).dist(grad) < 1e-11);
            assert!(jet.raw_gradient_local(tri, bary).dist(grad) < 1e-11);
            let [jx, jy] = jet.jacobian_local(tri, bary);
            assert!(jx.dist(Vec2::new(2.0, -0.5)) < 1e-10);
            assert!(jy.dist(Vec2::new(-0.5, 4.0)) < 1e-10);
        }
    }

    #[test]
    fn norms_match_closed_forms() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(1.0), 16).unwrap());
        let space = FeSpace::new(mesh, Degree::P2);
        // f = x1 x2 on ]-1,1[²: ∫f² = 4/9, ∫|∇f|² = 8/3; P2 represents it
        // exactly, so the degree-5 rule integrates both without error.
        let f = ScalarField::interpolate(space.clone(), |p| p.x * p.y);
        assert!((l2_norm(&f) - 2.0 / 3.0).abs() < 1e-12);
        assert!((h1_norm_sq(&f) - (4.0 / 9.0 + 8.0 / 3.0)).abs() < 1e-12);
        let shifted = l2_distance(&f, |p| p.x * p.y - 0.25);
        assert!((shifted - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recovery_is_linear_in_the_field() {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(2.0), 8).unwrap());
        let space = FeSpace::new(mesh, Degree::P2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = ScalarField::from_coeffs(
            space.clone(),
            (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let b = ScalarField::from_coeffs(
            space.clone(),
            (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let combo = a.add_scaled(&b, -1.7).unwrap();
        let (ga, gb, gc) = (recover_gradient(&a), recover_gradient(&b), recover_gradient(&combo));
        for i in 0..space.n_dofs() {
            let want = ga.x.coeffs[i] - 1.7 * gb.x.coeffs[i];
            assert!((gc.x.coeffs[i] - want).abs() < 1e-12);
            let want = ga.y.coeffs[i] - 1.7 * gb.y.coeffs[i];
            assert!((gc.y.coeffs[i] - want).abs() < 1e-12);
        }
    }
}
