//! Periodic orbit tracing for the boundary system z' = (-d g/dx2, d g/dx1).
//!
//! Each connected component of the zero set is the periodic orbit through a
//! seed point. The tracer integrates the rotated-gradient field with
//! fixed-step classical Runge–Kutta and detects the period as the first
//! positive-orientation crossing of the Poincaré section through the seed,
//! refined by bisection on a fractional step. Fixed stepping (rather than an
//! adaptive scheme) keeps the time grid shared with the linearized system in
//! variations, whose endpoint yields the period derivative used by the cost
//! gradient.

use thiserror::Error;

use crate::geometry::Rect;
use crate::levelset::LevelSet;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("no return to the seed after {steps} steps (open or escaping trajectory)")]
    NoReturn { steps: usize },
    #[error("|grad g| = {found:.3e} at ({x:.6}, {y:.6}) is below the floor {floor:.3e}")]
    DegenerateGradient { x: f64, y: f64, found: f64, floor: f64 },
    #[error("trajectory left the box at ({x:.6}, {y:.6})")]
    LeftDomain { x: f64, y: f64 },
    #[error("orbit recrossed the section {miss:.3e} away from the seed (tolerance {tol:.3e})")]
    InaccurateReturn { miss: f64, tol: f64 },
    #[error("seed is not on the zero set: |g| = {value:.3e}")]
    SeedOffZeroSet { value: f64 },
    #[error("|z'(T)| = {found:.3e} is below the floor {floor:.3e}")]
    DegenerateVelocity { found: f64, floor: f64 },
    #[error("component {index}: {source}")]
    SeedFailure { index: usize, source: Box<TraceError> },
    #[error("components {a} and {b} overlap (sample distance {dist:.3e})")]
    Overlap { a: usize, b: usize, dist: f64 },
}

/// Step-size and event-detection controls for the orbit tracer.
#[derive(Clone, Copy, Debug)]
pub struct TracerOptions {
    /// Spatial resolution the step size is tied to (typically the mesh h).
    pub h: f64,
    /// Step factor: dt = c_step * h / max |grad g| along the orbit.
    pub c_step: f64,
    pub max_steps: usize,
    /// Accepted distance between the refined return point and the seed.
    pub return_tol: f64,
    /// Return-ball radius as a fraction of the arc length per step.
    pub r_cap_factor: f64,
    /// Minimum admissible |grad g| along the orbit.
    pub grad_floor: f64,
    /// Known max |grad g| on the zero set; a pilot orbit measures it when
    /// absent.
    pub grad_scale: Option<f64>,
    /// Containment guard; integration fails when the orbit leaves it.
    pub bounds: Option<Rect>,
    /// Require |g(seed)| <= 1e-8. Disabled when tracing a perturbed field
    /// from the unperturbed seed, whose orbit lies on a nearby level curve.
    pub check_root: bool,
}

impl TracerOptions {
    pub fn new(h: f64) -> TracerOptions {
        assert!(h > 0.0 && h.is_finite());
        TracerOptions {
            h,
            c_step: 0.0625,
            max_steps: 1_000_000,
            return_tol: 1e-9,
            r_cap_factor: 0.1,
            grad_floor: 1e-3,
            grad_scale: None,
            bounds: None,
            check_root: true,
        }
    }
}

/// One closed boundary component as a time-sampled orbit.
///
/// Samples sit on the uniform step grid, with one extra closing sample at
/// exactly t = period, so trapezoid sums over the samples are closed-curve
/// quadratures.
#[derive(Clone, Debug)]
pub struct TracedComponent {
    pub x0: Vec2,
    pub dt: f64,
    pub times: Vec<f64>,
    pub points: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub period: f64,
    pub arc_length: f64,
    /// max |g(z(t)) - g(x0)| over samples (conservation of the Hamiltonian).
    pub max_g_drift: f64,
    /// max |grad g| over samples.
    pub max_grad: f64,
    /// Distance between the refined return point and the seed.
    pub return_miss: f64,
}

impl TracedComponent {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Trapezoid rule over the stored samples for a per-sample integrand.
    pub fn integrate_samples(&self, values: &[f64]) -> f64 {
        assert!(values.len() == self.times.len());
        let mut acc = 0.0;
        for i in 1..values.len() {
            acc += 0.5 * (self.times[i] - self.times[i - 1]) * (values[i] + values[i - 1]);
        }
        acc
    }

    /// Per-sample trapezoid weights: `integrate_samples(v)` equals
    /// `sum(w_i * v_i)`. Lets quadratures scatter weighted point terms (for
    /// example into finite-element load vectors) instead of integrating a
    /// closed-form integrand.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.times.len();
        assert!(n >= 2);
        let mut w = vec![0.0; n];
        for i in 1..n {
            let half = 0.5 * (self.times[i] - self.times[i - 1]);
            w[i - 1] += half;
            w[i] += half;
        }
        w
    }

    /// Signed enclosed area from the stored samples; positive means
    /// counterclockwise traversal.
    pub fn signed_area(&self) -> f64 {
        let vals: Vec<f64> = self
            .points
            .iter()
            .zip(&self.velocities)
            .map(|(z, v)| 0.5 * z.cross(*v))
            .collect();
        self.integrate_samples(&vals)
    }
}

fn rhs(ls: &LevelSet, p: Vec2) -> Vec2 {
    ls.gradient(p).rot90()
}

fn rk4_step(ls: &LevelSet, z: Vec2, dt: f64) -> Vec2 {
    let k1 = rhs(ls, z);
    let k2 = rhs(ls, z + 0.5 * dt * k1);
    let k3 = rhs(ls, z + 0.5 * dt * k2);
    let k4 = rhs(ls, z + dt * k3);
    z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

struct Section {
    x0: Vec2,
    normal: Vec2,
}

impl Section {
    fn offset(&self, p: Vec2) -> f64 {
        (p - self.x0).dot(self.normal)
    }
}

/// Raw integration loop. Returns (times, points, crossing step count) with
/// the refined return appended as the last sample.
struct RawOrbit {
    times: Vec<f64>,
    points: Vec<Vec2>,
    period: f64,
    return_point: Vec2,
    return_miss: f64,
}

fn integrate(
    ls: &LevelSet,
    x0: Vec2,
    dt: f64,
    r_cap: f64,
    opts: &TracerOptions,
) -> Result<RawOrbit, TraceError> {
    let g0 = ls.gradient(x0);
    if g0.norm() < opts.grad_floor {
        return Err(TraceError::DegenerateGradient {
            x: x0.x,
            y: x0.y,
            found: g0.norm(),
            floor: opts.grad_floor,
        });
    }
    let section = Section { x0, normal: g0.rot90() / g0.norm() };
    let t_min = 10.0 * dt;

    let mut times = vec![0.0];
    let mut points = vec![x0];
    let mut z = x0;
    let mut s_prev = 0.0;
    for step in 0..opts.max_steps {
        let t = step as f64 * dt;
        let z_next = rk4_step(ls, z, dt);
        if let Some(b) = opts.bounds {
            if !b.contains(z_next) {
                return Err(TraceError::LeftDomain { x: z_next.x, y: z_next.y });
            }
        }
        let grad = ls.gradient(z_next);
        if grad.norm() < opts.grad_floor {
            return Err(TraceError::DegenerateGradient {
                x: z_next.x,
                y: z_next.y,
                found: grad.norm(),
                floor: opts.grad_floor,
            });
        }
        let s_next = section.offset(z_next);
        if s_prev < 0.0 && s_next >= 0.0 && t + dt > t_min {
            // Bisect the fractional step on which the section is crossed.
            let (mut lo, mut hi) = (0.0f64, dt);
            let mut z_hit = z_next;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let z_mid = rk4_step(ls, z, mid);
                if section.offset(z_mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                    z_hit = z_mid;
                }
                if hi - lo <= f64::EPSILON * dt {
                    break;
                }
            }
            let t_hit = t + hi;
            let miss = (z_hit - x0).norm();
            if t_hit > t_min && miss <= r_cap {
                if miss > opts.return_tol {
                    return Err(TraceError::InaccurateReturn { miss, tol: opts.return_tol });
                }
                return Ok(RawOrbit {
                    times,
                    points,
                    period: t_hit,
                    return_point: z_hit,
                    return_miss: miss,
                });
            }
        }
        times.push(t + dt);
        points.push(z_next);
        z = z_next;
        s_prev = s_next;
    }
    Err(TraceError::NoReturn { steps: opts.max_steps })
}

/// Measure max |grad g| along one pilot lap (loose return ball, then as far
/// again) so the production step size can be tied to the stiffest part of
/// the orbit.
fn pilot_grad_scale(ls: &LevelSet, x0: Vec2, opts: &TracerOptions) -> Result<f64, TraceError> {
    let s0 = ls.gradient(x0).norm();
    if s0 < opts.grad_floor {
        return Err(TraceError::DegenerateGradient {
            x: x0.x,
            y: x0.y,
            found: s0,
            floor: opts.grad_floor,
        });
    }
    let dt = opts.c_step * opts.h / s0;
    let mut pilot = *opts;
    pilot.return_tol = f64::INFINITY;
    let orbit = integrate(ls, x0, dt, f64::INFINITY, &pilot)?;
    let mut scale = s0;
    let extra = orbit.times.len();
    let mut z = *orbit.points.last().unwrap();
    for p in &orbit.points {
        scale = scale.max(ls.gradient(*p).norm());
    }
    // Continue past the first crossing in case it was a false return that
    // sampled only part of the orbit.
    for _ in 0..extra {
        z = rk4_step(ls, z, dt);
        if let Some(b) = opts.bounds {
            if !b.contains(z) {
                break;
            }
        }
        scale = scale.max(ls.gradient(z).norm());
    }
    Ok(scale)
}

/// Trace the closed orbit through `x0`.
pub fn trace_component(
    ls: &LevelSet,
    x0: Vec2,
    opts: &TracerOptions,
) -> Result<TracedComponent, TraceError> {
    if opts.check_root {
        let value = ls.value(x0);
        if value.abs() > 1e-8 {
            return Err(TraceError::SeedOffZeroSet { value });
        }
    }
    let scale = match opts.grad_scale {
        Some(s) => {
            assert!(s > 0.0 && s.is_finite());
            s
        }
        None => pilot_grad_scale(ls, x0, opts)?,
    };
    let dt = opts.c_step * opts.h / scale;
    // |z'| = |grad g|, so the arc length per step is bounded by dt * scale.
    let r_cap = opts.r_cap_factor * dt * scale;
    let orbit = integrate(ls, x0, dt, r_cap, opts)?;

    let mut times = orbit.times;
    let mut points = orbit.points;
    times.push(orbit.period);
    points.push(orbit.return_point);

    let g_at_seed = ls.value(x0);
    let mut velocities = Vec::with_capacity(points.len());
    let mut max_g_drift: f64 = 0.0;
    let mut max_grad: f64 = 0.0;
    for &p in &points {
        let (value, grad) = ls.value_and_gradient(p);
        velocities.push(grad.rot90());
        max_g_drift = max_g_drift.max((value - g_at_seed).abs());
        max_grad = max_grad.max(grad.norm());
    }
    let speeds: Vec<f64> = velocities.iter().map(|v| v.norm()).collect();
    let mut comp = TracedComponent {
        x0,
        dt,
        times,
        points,
        velocities,
        period: orbit.period,
        arc_length: 0.0,
        max_g_drift,
        max_grad,
        return_miss: orbit.return_miss,
    };
    comp.arc_length = comp.integrate_samples(&speeds);
    Ok(comp)
}

/// Trace one component per seed and verify the components stay apart.
pub fn trace_all(
    ls: &LevelSet,
    seeds: &[Vec2],
    opts: &TracerOptions,
) -> Result<Vec<TracedComponent>, TraceError> {
    let comps: Vec<TracedComponent> = seeds
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            trace_component(ls, p, opts)
                .map_err(|e| TraceError::SeedFailure { index, source: Box::new(e) })
        })
        .collect::<Result<_, _>>()?;
    // Coarse pairwise separation check on subsampled points.
    for a in 0..comps.len() {
        for b in a + 1..comps.len() {
            let mut min_d = f64::INFINITY;
            for pa in comps[a].points.iter().step_by(4) {
                for pb in comps[b].points.iter().step_by(4) {
                    min_d = min_d.min(pa.dist(*pb));
                }
            }
            if min_d <= opts.h {
                return Err(TraceError::Overlap { a, b, dist: min_d });
            }
        }
    }
    Ok(comps)
}

/// Sensitivity of the orbit to a design perturbation r, on the orbit's grid.
#[derive(Clone, Debug)]
pub struct VariationTrajectory {
    pub w: Vec<Vec2>,
    pub w_dot: Vec<Vec2>,
}

/// Right side of the linear system in variations at a fixed orbit point.
fn variation_rhs(ls: &LevelSet, r: &LevelSet, z: Vec2, w: Vec2) -> Vec2 {
    let hess = ls.hessian(z);
    let grad_r = r.gradient(z);
    Vec2::new(-hess.row_y().dot(w) - grad_r.y, hess.row_x().dot(w) + grad_r.x)
}

/// Integrate the system in variations along a stored orbit: the derivative
/// of the orbit with respect to the design, direction r, starting from
/// w(0) = 0. Shares the orbit's time grid; midpoint states are re-integrated
/// from the stored samples.
pub fn solve_variation(
    ls: &LevelSet,
    r: &LevelSet,
    comp: &TracedComponent,
) -> VariationTrajectory {
    let n = comp.len();
    assert!(n >= 2);
    let mut w = Vec::with_capacity(n);
    let mut w_dot = Vec::with_capacity(n);
    w.push(Vec2::ZERO);
    w_dot.push(variation_rhs(ls, r, comp.points[0], Vec2::ZERO));
    let mut cur = Vec2::ZERO;
    for i in 0..n - 1 {
        let dt = comp.times[i + 1] - comp.times[i];
        let z0 = comp.points[i];
        let z_mid = rk4_step(ls, z0, 0.5 * dt);
        let z1 = comp.points[i + 1];
        let k1 = variation_rhs(ls, r, z0, cur);
        let k2 = variation_rhs(ls, r, z_mid, cur + 0.5 * dt * k1);
        let k3 = variation_rhs(ls, r, z_mid, cur + 0.5 * dt * k2);
        let k4 = variation_rhs(ls, r, z1, cur + dt * k3);
        cur = cur + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        w.push(cur);
        w_dot.push(variation_rhs(ls, r, z1, cur));
    }
    VariationTrajectory { w, w_dot }
}

/// Derivative of the period with respect to the design perturbation behind
/// `w`: the endpoint ratio -w_i(T)/z'_i(T) on the larger velocity component
/// (ties go to the second).
pub fn period_derivative(
    comp: &TracedComponent,
    var: &VariationTrajectory,
    grad_floor: f64,
) -> Result<f64, TraceError> {
    let v = *comp.velocities.last().expect("empty component");
    let w = *var.w.last().expect("empty variation");
    if v.norm() < grad_floor {
        return Err(TraceError::DegenerateVelocity { found: v.norm(), floor: grad_floor });
    }
    Ok(if v.x.abs() > v.y.abs() { -w.x / v.x } else { -w.y / v.y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(r: f64) -> LevelSet {
        LevelSet::from_expr(&format!("x1^2 + x2^2 - {r}^2")).unwrap()
    }

    fn ellipse() -> LevelSet {
        // Semi-axes 1.5 and 0.5; angular frequency 2/(ab), period pi*a*b.
        LevelSet::from_expr("x1^2/1.5^2 + x2^2/0.5^2 - 1").unwrap()
    }

    #[test]
    fn circle_period_is_pi_for_all_radii() {
        let opts = TracerOptions::new(0.0625);
        for r in [0.5, 1.0, 2.5] {
            let comp = trace_component(&circle(r), Vec2::new(r, 0.0), &opts).unwrap();
            assert!((comp.period - PI).abs() < 1e-8, "r={r}: T={}", comp.period);
            assert!((comp.arc_length - 2.0 * PI * r).abs() < 1e-6);
            assert!(comp.signed_area() > 0.0);
        }
    }

    #[test]
    fn quadrature_weights_agree_with_the_trapezoid_sum() {
        let opts = TracerOptions::new(0.125);
        let comp = trace_component(&circle(1.0), Vec2::new(1.0, 0.0), &opts).unwrap();
        let weights = comp.quadrature_weights();
        assert!((weights.iter().sum::<f64>() - comp.period).abs() < 1e-13);
        let values: Vec<f64> = comp.points.iter().map(|z| z.x * z.x + 0.3 * z.y).collect();
        let direct = comp.integrate_samples(&values);
        let weighted: f64 = weights.iter().zip(&values).map(|(w, v)| w * v).sum();
        assert!((direct - weighted).abs() < 1e-13 * direct.abs().max(1.0));
    }

    #[test]
    fn ellipse_period_and_conservation() {
        let opts = TracerOptions::new(0.0625);
        let comp = trace_component(&ellipse(), Vec2::new(1.5, 0.0), &opts).unwrap();
        assert!((comp.period - 0.75 * PI).abs() < 1e-6, "T={}", comp.period);
        assert!(comp.max_g_drift <= 1e-8, "drift={}", comp.max_g_drift);
        let area = comp.signed_area();
        assert!((area - PI * 1.5 * 0.5).abs() < 1e-6, "area={area}");
    }

    #[test]
    fn period_error_decays_at_fourth_order() {
        let exact = 0.75 * PI;
        let mut errors = Vec::new();
        for h in [3.2, 1.6, 0.8] {
            let mut opts = TracerOptions::new(h);
            opts.return_tol = 1e-3;
            let comp = trace_component(&ellipse(), Vec2::new(1.5, 0.0), &opts).unwrap();
            errors.push((comp.period - exact).abs());
        }
        assert!(errors[0] > 1e-9, "coarse error too small to measure order: {errors:?}");
        assert!(errors[0] / errors[1] > 10.0, "{errors:?}");
        assert!(errors[1] / errors[2] > 10.0, "{errors:?}");
        assert!(errors[2] < 1e-7, "{errors:?}");
    }

    #[test]
    fn seed_must_sit_on_the_zero_set() {
        let opts = TracerOptions::new(0.0625);
        let err = trace_component(&circle(1.0), Vec2::new(1.1, 0.0), &opts);
        assert!(matches!(err, Err(TraceError::SeedOffZeroSet { .. })));
    }

    #[test]
    fn open_trajectory_reports_no_return() {
        // g = x2 has orbits z' = (-1, 0): straight lines, never periodic.
        let g = LevelSet::from_expr("x2").unwrap();
        let mut opts = TracerOptions::new(0.1);
        opts.max_steps = 2_000;
        opts.grad_scale = Some(1.0);
        let err = trace_component(&g, Vec2::ZERO, &opts);
        assert!(matches!(err, Err(TraceError::NoReturn { .. })));
    }

    #[test]
    fn bounds_guard_stops_escaping_orbits() {
        let g = LevelSet::from_expr("x2").unwrap();
        let mut opts = TracerOptions::new(0.1);
        opts.grad_scale = Some(1.0);
        opts.bounds = Some(Rect::centered_square(1.0));
        let err = trace_component(&g, Vec2::ZERO, &opts);
        assert!(matches!(err, Err(TraceError::LeftDomain { .. })));
    }

    #[test]
    fn trace_all_handles_disjoint_circles() {
        let g = LevelSet::from_expr(
            "min((x1-1.5)^2 + x2^2 - 0.25, (x1+1.5)^2 + x2^2 - 0.25)",
        )
        .unwrap();
        let opts = TracerOptions::new(0.0625);
        let comps =
            trace_all(&g, &[Vec2::new(2.0, 0.0), Vec2::new(-1.0, 0.0)], &opts).unwrap();
        assert_eq!(comps.len(), 2);
        for c in &comps {
            assert!((c.period - PI).abs() < 1e-8);
        }
    }

    #[test]
    fn variation_vanishes_for_zero_direction() {
        let g = circle(1.0);
        let r = LevelSet::from_expr("0").unwrap();
        let opts = TracerOptions::new(0.0625);
        let comp = trace_component(&g, Vec2::new(1.0, 0.0), &opts).unwrap();
        let var = solve_variation(&g, &r, &comp);
        assert!(var.w.iter().all(|w| *w == Vec2::ZERO));
        let theta = period_derivative(&comp, &var, 1e-3).unwrap();
        assert_eq!(theta, 0.0);
    }

    /// Finite-difference reference for w: re-trace the field perturbed by
    /// +/-lambda from the same seed on the same time grid and take the
    /// central difference of the positions.
    fn fd_variation(
        g: &LevelSet,
        r: &LevelSet,
        comp: &TracedComponent,
        lambda: f64,
    ) -> Vec<Vec2> {
        let walk = |ls: &LevelSet| {
            let mut pts = vec![comp.x0];
            let mut z = comp.x0;
            for i in 1..comp.len() {
                let dt = comp.times[i] - comp.times[i - 1];
                z = rk4_step(ls, z, dt);
                pts.push(z);
            }
            pts
        };
        let plus = walk(&g.perturbed(r, lambda));
        let minus = walk(&g.perturbed(r, -lambda));
        plus.iter().zip(&minus).map(|(a, b)| (*a - *b) / (2.0 * lambda)).collect()
    }

    #[test]
    fn variation_matches_finite_differences() {
        let g = circle(1.0);
        let opts = {
            let mut o = TracerOptions::new(0.0625);
            o.grad_scale = Some(2.0);
            o
        };
        let comp = trace_component(&g, Vec2::new(1.0, 0.0), &opts).unwrap();
        for src in ["x1^2 + x2^2 - 1", "x1 - 0.5*x2 + 0.3"] {
            let r = LevelSet::from_expr(src).unwrap();
            let var = solve_variation(&g, &r, &comp);
            let fd = fd_variation(&g, &r, &comp, 1e-5);
            // Compare away from the endpoint where the grids agree exactly.
            for i in (0..comp.len() * 3 / 4).step_by(50) {
                assert!(
                    (var.w[i] - fd[i]).norm() < 1e-4,
                    "r={src}, i={i}: {:?} vs {:?}",
                    var.w[i],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn period_derivative_matches_analytic_values() {
        let g = circle(1.0);
        let opts = TracerOptions::new(0.0625);
        let comp = trace_component(&g, Vec2::new(1.0, 0.0), &opts).unwrap();
        // Scaling the design scales the speed: T(lambda) = pi/(1+lambda).
        let var = solve_variation(&g, &g, &comp);
        let theta = period_derivative(&comp, &var, 1e-3).unwrap();
        assert!((theta + PI).abs() < 1e-4, "theta={theta}");
        // A constant shift changes the radius, not the period.
        let one = LevelSet::from_expr("1").unwrap();
        let var = solve_variation(&g, &one, &comp);
        let theta = period_derivative(&comp, &var, 1e-3).unwrap();
        assert!(theta.abs() < 1e-4, "theta={theta}");
    }

    #[test]
    fn period_derivative_matches_period_differences_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let lambda = 1e-5;
        for case in 0..20 {
            let radius: f64 = rng.gen_range(0.8..1.6);
            let (a, b): (f64, f64) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let (cx, cy): (f64, f64) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
            let d: f64 = rng.gen_range(-0.5..0.5);
            let g = circle(radius);
            let r = LevelSet::from_expr(&format!(
                "{a}*(x1-{cx})^2 + {b}*(x2-{cy})^2 + {d}"
            ))
            .unwrap();
            let mut opts = TracerOptions::new(0.05);
            opts.grad_scale = Some(2.0 * radius);
            let comp = trace_component(&g, Vec2::new(radius, 0.0), &opts).unwrap();
            let var = solve_variation(&g, &r, &comp);
            let theta = period_derivative(&comp, &var, 1e-3).unwrap();

            let mut fd_opts = opts;
            fd_opts.check_root = false;
            fd_opts.return_tol = 1e-6;
            let perturbed = g.perturbed(&r, lambda);
            let comp_l =
                trace_component(&perturbed, Vec2::new(radius, 0.0), &fd_opts).unwrap();
            let fd = (comp_l.period - comp.period) / lambda;
            assert!(
                (theta - fd).abs() <= 1e-3 * theta.abs().max(1.0),
                "case {case}: theta={theta} fd={fd}"
            );
        }
    }
}
