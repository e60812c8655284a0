//! Cost evaluation on traced boundaries and its exact directional derivative.
//!
//! The cost of a design/control pair has three parts: a tracking term over
//! the fixed observation region, a tracking term along the traced boundary,
//! and a flux penalty that charges the squared mismatch between the normal
//! derivative of the state and the prescribed flux data. The boundary terms
//! are curve integrals over the periodic orbit samples (trapezoid in the
//! time parameter, arc-length factor `|z′|` from the stored velocities); the
//! state and its normal derivative are read through the recovered-gradient
//! jet, which is also exactly what the adjoint load differentiates.
//!
//! [`directional_derivative`] is the exact derivative of this discretized
//! cost along a design/control direction, holding the orbit seeds fixed: the
//! state moves by the linearized solve, the orbit by the variation system,
//! the period by its derivative, and the integrand by the chain rule through
//! the moving sample points. Central finite differences of the same pipeline
//! reproduce it to truncation order, which is the main oracle in the tests.

use crate::geometry::RecoveredJet;
use crate::hamiltonian::{TracedComponent, VariationTrajectory};
use crate::levelset::region::ObservationRegion;
use crate::levelset::LevelSet;
use crate::pde::NeumannData;
use crate::Vec2;

/// One tracking integrand `j(x, y)`: nothing, or the squared distance to a
/// smooth target.
#[derive(Clone)]
pub enum Tracking {
    /// Term absent; all evaluations are exactly zero.
    Zero,
    /// `½·(y − target(x))²`.
    Quadratic { target: LevelSet },
}

impl Tracking {
    pub fn quadratic(target: LevelSet) -> Tracking {
        Tracking::Quadratic { target }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Tracking::Zero)
    }

    /// `j(x, y)`.
    pub fn value(&self, x: Vec2, y: f64) -> f64 {
        match self {
            Tracking::Zero => 0.0,
            Tracking::Quadratic { target } => {
                let d = y - target.value(x);
                0.5 * d * d
            }
        }
    }

    /// `∂j/∂y`.
    pub fn d_value(&self, x: Vec2, y: f64) -> f64 {
        match self {
            Tracking::Zero => 0.0,
            Tracking::Quadratic { target } => y - target.value(x),
        }
    }

    /// Gradient of the explicit position dependence, `∇ₓ j` at fixed `y`.
    pub fn x_gradient(&self, x: Vec2, y: f64) -> Vec2 {
        match self {
            Tracking::Zero => Vec2::ZERO,
            Tracking::Quadratic { target } => {
                let (t, grad_t) = target.value_and_gradient(x);
                grad_t * (t - y)
            }
        }
    }
}

/// The two tracking integrands of a run: over the observation region and
/// along the traced boundary.
#[derive(Clone)]
pub struct CostFunctions {
    pub region: Tracking,
    pub boundary: Tracking,
}

/// One cost evaluation, split into its terms. `t3` is stored unscaled; the
/// composed value charges it with `1/epsilon`.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CostBreakdown {
    /// Tracking over the observation region.
    pub t1: f64,
    /// Tracking along the boundary.
    pub t2: f64,
    /// Squared flux mismatch along the boundary, unscaled.
    pub t3: f64,
    /// `t1 + t2 + t3/epsilon`.
    pub total: f64,
    pub epsilon: f64,
}

/// Curve integral `∮ f ds` over one traced component: trapezoid in the time
/// parameter, with the arc-length factor `|z′|` supplied internally. The
/// integrand sees the sample point and its velocity.
pub fn boundary_integral(comp: &TracedComponent, f: impl Fn(Vec2, Vec2) -> f64) -> f64 {
    let values: Vec<f64> = comp
        .points
        .iter()
        .zip(&comp.velocities)
        .map(|(&z, &v)| f(z, v) * v.norm())
        .collect();
    comp.integrate_samples(&values)
}

/// Outward unit normal from a stored orbit velocity: the velocity is the
/// rotated design gradient, so rotating back recovers the gradient
/// direction, which points out of the negative region.
fn outward_normal(vel: Vec2, speed: f64) -> Vec2 {
    Vec2::new(vel.y, -vel.x) / speed
}

/// Evaluates the three cost terms for a state jet on a traced geometry.
pub fn evaluate_cost(
    y: &RecoveredJet,
    traces: &[TracedComponent],
    e: &ObservationRegion,
    cf: &CostFunctions,
    delta: &NeumannData,
    epsilon: f64,
) -> CostBreakdown {
    assert!(epsilon > 0.0);
    let mesh = &y.space().mesh;
    let mut t1 = 0.0;
    for &(x, w) in e.quadrature() {
        let (tri, bary) = mesh.locate(x).expect("observation point outside the box");
        t1 += w * cf.region.value(x, y.value_local(tri, bary));
    }
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    for comp in traces {
        let weights = comp.quadrature_weights();
        for (s, &z) in comp.points.iter().enumerate() {
            let vel = comp.velocities[s];
            let speed = vel.norm();
            let (tri, bary) = mesh.locate(z).expect("trace sample outside the box");
            let w = weights[s] * speed;
            t2 += w * cf.boundary.value(z, y.value_local(tri, bary));
            let flux = y.gradient_local(tri, bary).dot(outward_normal(vel, speed))
                - delta.value(z);
            t3 += w * flux * flux;
        }
    }
    CostBreakdown { t1, t2, t3, total: t1 + t2 + t3 / epsilon, epsilon }
}

/// The part of the cost derivative that multiplies the linearized state `q`:
/// region tracking, boundary tracking, and the flux penalty paired with the
/// recovered gradient of `q`. This is exactly what the assembled adjoint
/// load computes by duality, so descent certificates can be cross-checked
/// against it.
pub fn state_derivative_pairing(
    y: &RecoveredJet,
    q: &RecoveredJet,
    traces: &[TracedComponent],
    e: &ObservationRegion,
    cf: &CostFunctions,
    delta: &NeumannData,
    epsilon: f64,
) -> f64 {
    assert!(epsilon > 0.0);
    let mesh = &y.space().mesh;
    let mut acc = 0.0;
    for &(x, w) in e.quadrature() {
        let (tri, bary) = mesh.locate(x).expect("observation point outside the box");
        acc += w * cf.region.d_value(x, y.value_local(tri, bary)) * q.value_local(tri, bary);
    }
    for comp in traces {
        let weights = comp.quadrature_weights();
        for (s, &z) in comp.points.iter().enumerate() {
            let vel = comp.velocities[s];
            let speed = vel.norm();
            let (tri, bary) = mesh.locate(z).expect("trace sample outside the box");
            let w = weights[s] * speed;
            let normal = outward_normal(vel, speed);
            let flux = y.gradient_local(tri, bary).dot(normal) - delta.value(z);
            acc += w
                * (cf.boundary.d_value(z, y.value_local(tri, bary)) * q.value_local(tri, bary)
                    + 2.0 / epsilon * flux * q.gradient_local(tri, bary).dot(normal));
        }
    }
    acc
}

/// Exact derivative of the discretized cost along a design/control
/// direction, with the per-component machinery already computed on the base
/// configuration:
///
/// - `q`: the linearized state for the direction (carries the control part);
/// - `variations[c]`, `thetas[c]`: orbit variation `w`, `ẇ` and period
///   derivative of component `c` for the design direction `r`;
/// - `g`, `r`: the design and its direction, queried for exact gradients and
///   Hessians along the orbit (normal rotation and data movement).
///
/// Holding the orbit seeds fixed, a central difference quotient of the full
/// evaluation pipeline converges to this value.
#[allow(clippy::too_many_arguments)]
pub fn directional_derivative(
    g: &LevelSet,
    r: &LevelSet,
    y: &RecoveredJet,
    q: &RecoveredJet,
    traces: &[TracedComponent],
    variations: &[VariationTrajectory],
    thetas: &[f64],
    e: &ObservationRegion,
    cf: &CostFunctions,
    delta: &NeumannData,
    epsilon: f64,
) -> f64 {
    assert!(epsilon > 0.0);
    assert!(traces.len() == variations.len() && traces.len() == thetas.len());
    let mesh = &y.space().mesh;
    let mut total = 0.0;
    for &(x, w) in e.quadrature() {
        let (tri, bary) = mesh.locate(x).expect("observation point outside the box");
        total += w * cf.region.d_value(x, y.value_local(tri, bary)) * q.value_local(tri, bary);
    }
    for ((comp, var), &theta) in traces.iter().zip(variations).zip(thetas) {
        let weights = comp.quadrature_weights();
        assert_eq!(var.w.len(), comp.len());
        let mut endpoint_density = 0.0;
        for (s, &z) in comp.points.iter().enumerate() {
            let vel = comp.velocities[s];
            let speed = vel.norm();
            let (tri, bary) = mesh.locate(z).expect("trace sample outside the box");
            let w_vec = var.w[s];
            let yv = y.value_local(tri, bary);
            let qv = q.value_local(tri, bary);
            let normal = outward_normal(vel, speed);
            let grad_y = y.gradient_local(tri, bary);
            let flux = grad_y.dot(normal) - delta.value(z);
            // Value-tracking movement: explicit position, state transport,
            // and the state's own change.
            let mut density = cf.boundary.x_gradient(z, yv).dot(w_vec)
                + cf.boundary.d_value(z, yv)
                    * (y.raw_gradient_local(tri, bary).dot(w_vec) + qv);
            // Flux movement: gradient transport and linearized state along
            // the fixed normal, plus the normal's own rotation (tangential
            // part of the moved design gradient) and the data movement.
            let moved_grad_g = g.hessian(z).apply(w_vec) + r.gradient(z);
            let normal_rotation =
                (moved_grad_g - normal * normal.dot(moved_grad_g)) / speed;
            let [jx, jy] = y.jacobian_local(tri, bary);
            let transported = Vec2::new(jx.dot(w_vec), jy.dot(w_vec));
            let d_flux = (transported + q.gradient_local(tri, bary)).dot(normal)
                + grad_y.dot(normal_rotation)
                - delta.gradient(z).dot(w_vec);
            density += 2.0 / epsilon * flux * d_flux;
            // Arc-length stretch of the parameterization.
            let stay = cf.boundary.value(z, yv) + flux * flux / epsilon;
            total += weights[s] * (density * speed + stay * vel.dot(var.w_dot[s]) / speed);
            if s == 0 {
                endpoint_density = stay * speed;
            }
        }
        // The period moves while the seed stays put: the integrand at the
        // (periodic) endpoint times the period derivative.
        total += theta * endpoint_density;
    }
    total
}
