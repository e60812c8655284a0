//! Verification harnesses: difference-quotient cross-checks of the assembled
//! derivatives, seeded random problem families, the flux-penalty scaling
//! sweep, and the self-test battery behind the command-line interface.
//!
//! Every harness returns data instead of asserting, so the CLI can print
//! tables and the test suites can pin their own tolerances. Randomness comes
//! exclusively from a counter-based generator seeded by the caller, so any
//! reported configuration can be regenerated from its seed.
//!
//! Difference quotients demand analytic design backends: the checks
//! differentiate through the curve tracer, and a finite-element design's
//! recovered second derivatives are too rough to validate against. The
//! harnesses reject finite-element-backed inputs up front.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{directional_derivative, evaluate_cost, CostBreakdown, CostFunctions, Tracking};
use crate::geometry::quadrature::TRI_7;
use crate::geometry::{Degree, FeSpace, Mesh, RecoveredJet, Rect, ScalarField};
use crate::hamiltonian::{
    period_derivative, solve_variation, trace_component, TracerOptions, VariationTrajectory,
};
use crate::levelset::region::ObservationRegion;
use crate::levelset::seeds::find_boundary_seeds;
use crate::levelset::{classify_domain, Anchor, LevelSet};
use crate::optimizer::{
    certificate_cross_check, descent_direction, DirectionVariant, OptimizerState, Problem,
};
use crate::pde::{
    h1_gap_on_submesh, solve_linearized, solve_neumann_validation, solve_state, BandedMatrix,
    NeumannData, Solver, SourceData,
};
use crate::vec2::Vec2;

/// One analytic-versus-difference-quotient comparison.
#[derive(Clone, Debug, serde::Serialize)]
pub struct FdCheck {
    pub label: String,
    /// The assembled formula's value.
    pub analytic: f64,
    /// The central difference quotient.
    pub difference: f64,
    /// `|analytic − difference| / max(1, |analytic|)`.
    pub rel_err: f64,
}

impl FdCheck {
    fn new(label: String, analytic: f64, difference: f64) -> FdCheck {
        let rel_err = (analytic - difference).abs() / analytic.abs().max(1.0);
        FdCheck { label, analytic, difference, rel_err }
    }

    /// True when the relative error is within `tol`.
    pub fn ok(&self, tol: f64) -> bool {
        self.rel_err.is_finite() && self.rel_err <= tol
    }
}

/// Tracer family for difference quotients: perturbed designs reuse the base
/// orbit's step size and skip the seed root check, so the cost seen by the
/// quotient is the same map the derivative formula differentiates.
pub fn pinned_tracer(h: f64, grad_at_seed: f64) -> TracerOptions {
    assert!(grad_at_seed > 0.0, "seed sits on a critical point");
    let mut opts = TracerOptions::new(h);
    opts.grad_scale = Some(grad_at_seed);
    opts.check_root = false;
    opts
}

/// Formats a literal for the expression grammar; negatives are spelled as a
/// parenthesized subtraction so they can follow any operator.
fn lit(v: f64) -> String {
    if v < 0.0 {
        format!("(0 - {})", -v)
    } else {
        format!("{v}")
    }
}

/// A smooth closed curve with a point on it and room inside.
pub struct RandomGeometry {
    pub g: LevelSet,
    /// A point on the zero curve.
    pub seed: Vec2,
    pub center: Vec2,
    /// Shortest semi-axis; disks of this reach fit inside the curve.
    pub inner_radius: f64,
}

/// Seeded generator of admissible random configurations: ellipses well inside
/// the standard box, low-order polynomial data, and full derivative or
/// certificate cases built from them.
pub struct RandomFamily {
    rng: ChaCha8Rng,
}

impl RandomFamily {
    pub fn new(seed: u64) -> RandomFamily {
        RandomFamily { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// A random ellipse `a(x1−c1)² + b(x2−c2)² − 1` with semi-axes in
    /// roughly [0.85, 1.3] and center within 0.4 of the origin — always
    /// inside the standard box with a healthy gradient along the curve.
    pub fn geometry(&mut self) -> RandomGeometry {
        let a = self.range(0.6, 1.4);
        let b = self.range(0.6, 1.4);
        let cx = self.range(-0.4, 0.4);
        let cy = self.range(-0.4, 0.4);
        let g = LevelSet::from_expr(&format!(
            "{}*(x1 - {})^2 + {}*(x2 - {})^2 - 1",
            lit(a),
            lit(cx),
            lit(b),
            lit(cy)
        ))
        .expect("generated expression always parses");
        RandomGeometry {
            g,
            seed: Vec2::new(cx + 1.0 / a.sqrt(), cy),
            center: Vec2::new(cx, cy),
            inner_radius: 1.0 / a.max(b).sqrt(),
        }
    }

    /// A low-order polynomial `c0 + c1·x1 + c2·x2 + c3·x1·x2` with `c0` in
    /// `±constant` and the others in `±slope`.
    pub fn polynomial(&mut self, constant: f64, slope: f64) -> LevelSet {
        let c0 = self.range(-constant, constant);
        let c1 = self.range(-slope, slope);
        let c2 = self.range(-slope, slope);
        let c3 = self.range(-0.5 * slope, 0.5 * slope);
        LevelSet::from_expr(&format!(
            "{} + {}*x1 + {}*x2 + {}*x1*x2",
            lit(c0),
            lit(c1),
            lit(c2),
            lit(c3)
        ))
        .expect("generated expression always parses")
    }

    /// A full configuration for the directional-derivative check; every
    /// other case carries an observation region.
    pub fn derivative_case(&mut self, space: &Arc<FeSpace>, index: usize) -> DerivativeCase {
        let geo = self.geometry();
        let with_region = index % 2 == 1;
        let r = self.polynomial(0.35, 0.15);
        let u_ls = self.polynomial(0.5, 0.25);
        let v_ls = self.polynomial(0.3, 0.15);
        let y_d = LevelSet::from_expr(&format!(
            "x1^2 + x2^2 - {}",
            lit(self.range(0.6, 1.4))
        ))
        .unwrap();
        let f_ls = LevelSet::from_expr(&format!(
            "x1^2 + x2^2 - {}",
            lit(self.range(3.0, 6.0))
        ))
        .unwrap();
        let delta = NeumannData::new(self.polynomial_shifted(0.8, 2.2, 0.25));
        let epsilon = self.range(0.3, 1.1);
        let (region, region_tracking) = if with_region {
            let target = Tracking::quadratic(
                LevelSet::from_expr(&format!("x1^2 + x2^2 - {}", lit(self.range(0.6, 1.4))))
                    .unwrap(),
            );
            (ObservationRegion::disk(geo.center, 0.35 * geo.inner_radius), target)
        } else {
            (ObservationRegion::empty(), Tracking::Zero)
        };
        let tracer = pinned_tracer(space.mesh.h(), geo.g.gradient(geo.seed).norm());
        DerivativeCase {
            label: format!(
                "random pair {index} (ellipse at ({:.2}, {:.2}), eps {epsilon:.2}, region {})",
                geo.center.x,
                geo.center.y,
                if with_region { "on" } else { "off" }
            ),
            space: space.clone(),
            problem: Problem {
                f: {
                    let ls = f_ls;
                    SourceData::new(move |p| ls.value(p))
                },
                delta,
                cost: CostFunctions {
                    region: region_tracking,
                    boundary: Tracking::quadratic(y_d),
                },
                region,
                epsilon,
                projection: None,
            },
            g: geo.g,
            u: ScalarField::interpolate(space.clone(), |p| u_ls.value(p)),
            r,
            v: ScalarField::interpolate(space.clone(), |p| v_ls.value(p)),
            seeds: vec![geo.seed],
            tracer,
        }
    }

    /// A polynomial with a positive constant term in `[lo, hi]`.
    fn polynomial_shifted(&mut self, lo: f64, hi: f64, slope: f64) -> LevelSet {
        let c0 = self.range(lo, hi);
        let c1 = self.range(-slope, slope);
        let c2 = self.range(-slope, slope);
        LevelSet::from_expr(&format!("{} + {}*x1 + {}*x2", lit(c0), lit(c1), lit(c2)))
            .expect("generated expression always parses")
    }

    /// A geometry/perturbation pair for the period-derivative check.
    pub fn period_case(&mut self) -> (RandomGeometry, LevelSet) {
        let geo = self.geometry();
        let w = self.polynomial(0.4, 0.2);
        (geo, w)
    }

    /// A problem/design/control triple for the certificate sweep; cost data
    /// are nonzero so the adjoint does not vanish.
    pub fn certificate_case(
        &mut self,
        space: &Arc<FeSpace>,
        index: usize,
    ) -> (Problem, LevelSet, ScalarField) {
        let geo = self.geometry();
        let with_region = index % 2 == 1;
        let u_ls = self.polynomial(0.8, 0.4);
        let y_d = LevelSet::from_expr(&format!(
            "x1^2 + x2^2 - {}",
            lit(self.range(0.6, 1.4))
        ))
        .unwrap();
        let (region, region_tracking) = if with_region {
            let target = Tracking::quadratic(self.polynomial(0.5, 0.3));
            (ObservationRegion::disk(geo.center, 0.35 * geo.inner_radius), target)
        } else {
            (ObservationRegion::empty(), Tracking::Zero)
        };
        let problem = Problem {
            f: {
                let c = self.range(-6.0, -3.0);
                SourceData::new(move |p| p.norm_sq() + c)
            },
            delta: NeumannData::new(self.polynomial_shifted(0.5, 2.5, 0.3)),
            cost: CostFunctions { region: region_tracking, boundary: Tracking::quadratic(y_d) },
            region,
            epsilon: self.range(0.3, 1.2),
            projection: None,
        };
        let u = ScalarField::interpolate(space.clone(), |p| u_ls.value(p));
        (problem, geo.g, u)
    }
}

/// Everything needed to compare the assembled cost derivative against a
/// difference quotient for one configuration.
pub struct DerivativeCase {
    pub label: String,
    pub space: Arc<FeSpace>,
    pub problem: Problem,
    pub g: LevelSet,
    pub u: ScalarField,
    pub r: LevelSet,
    pub v: ScalarField,
    /// One point on each boundary component of `g`.
    pub seeds: Vec<Vec2>,
    /// Pinned family; see [`pinned_tracer`].
    pub tracer: TracerOptions,
}

impl DerivativeCase {
    /// Cost of the pair perturbed by `lambda`, traced from the fixed seeds.
    pub fn cost_at(&self, solver: &Solver, lambda: f64) -> Result<f64, String> {
        let g = self.g.perturbed(&self.r, lambda);
        let u = self.u.add_scaled(&self.v, lambda).expect("direction lives on the space");
        let traces = self
            .seeds
            .iter()
            .map(|&s| trace_component(&g, s, &self.tracer))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let y = RecoveredJet::new(solve_state(solver, &self.problem.f, &g, &u));
        Ok(evaluate_cost(
            &y,
            &traces,
            &self.problem.region,
            &self.problem.cost,
            &self.problem.delta,
            self.problem.epsilon,
        )
        .total)
    }

    /// The assembled derivative along `(r, v)` at the base pair.
    pub fn derivative(&self, solver: &Solver) -> Result<f64, String> {
        if self.g.is_fe() || self.r.is_fe() {
            return Err(
                "design or direction is finite-element-backed; derivative checks need \
                 analytic second derivatives"
                    .into(),
            );
        }
        let traces = self
            .seeds
            .iter()
            .map(|&s| trace_component(&self.g, s, &self.tracer))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let y = RecoveredJet::new(solve_state(solver, &self.problem.f, &self.g, &self.u));
        let q = RecoveredJet::new(solve_linearized(solver, &self.g, &self.u, &self.r, &self.v));
        let variations: Vec<VariationTrajectory> =
            traces.iter().map(|c| solve_variation(&self.g, &self.r, c)).collect();
        let thetas = traces
            .iter()
            .zip(&variations)
            .map(|(c, var)| period_derivative(c, var, self.tracer.grad_floor))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(directional_derivative(
            &self.g,
            &self.r,
            &y,
            &q,
            &traces,
            &variations,
            &thetas,
            &self.problem.region,
            &self.problem.cost,
            &self.problem.delta,
            self.problem.epsilon,
        ))
    }

    /// Formula versus central difference quotient with the given step.
    pub fn check(&self, solver: &Solver, step: f64) -> Result<FdCheck, String> {
        let analytic = self.derivative(solver)?;
        let fd = (self.cost_at(solver, step)? - self.cost_at(solver, -step)?) / (2.0 * step);
        Ok(FdCheck::new(self.label.clone(), analytic, fd))
    }
}

/// Period derivative along `w` versus a difference quotient of the measured
/// period of the perturbed design.
pub fn period_check(
    label: String,
    g: &LevelSet,
    w: &LevelSet,
    seed: Vec2,
    h: f64,
    step: f64,
) -> Result<FdCheck, String> {
    if g.is_fe() || w.is_fe() {
        return Err(
            "design or direction is finite-element-backed; period checks need analytic \
             second derivatives"
                .into(),
        );
    }
    let tracer = pinned_tracer(h, g.gradient(seed).norm());
    let base = trace_component(g, seed, &tracer).map_err(|e| e.to_string())?;
    let var = solve_variation(g, w, &base);
    let theta = period_derivative(&base, &var, tracer.grad_floor).map_err(|e| e.to_string())?;
    let period_at = |s: f64| {
        trace_component(&g.perturbed(w, s), seed, &tracer)
            .map(|c| c.period)
            .map_err(|e| e.to_string())
    };
    let fd = (period_at(step)? - period_at(-step)?) / (2.0 * step);
    Ok(FdCheck::new(label, theta, fd))
}

/// Traces a design, solves its state, and assembles the iterate the descent
/// machinery consumes. The design is interpolated onto the solver's space
/// first — the production representation.
pub fn traced_state(
    solver: &Solver,
    problem: &Problem,
    tracer: &TracerOptions,
    g: &LevelSet,
    u: ScalarField,
) -> Result<OptimizerState, String> {
    let space = solver.space();
    let gh = g.interpolate_to(space);
    let found = find_boundary_seeds(&gh, &space.mesh, tracer).map_err(|e| e.to_string())?;
    let jet = RecoveredJet::new(solve_state(solver, &problem.f, &gh, &u));
    let cost = evaluate_cost(
        &jet,
        &found.components,
        &problem.region,
        &problem.cost,
        &problem.delta,
        problem.epsilon,
    );
    if !cost.total.is_finite() {
        return Err(format!("cost is not finite: {}", cost.total));
    }
    Ok(OptimizerState {
        g: gh,
        u,
        y: jet.field,
        seeds: found.seeds,
        traces: found.components,
        cost,
        k: 0,
    })
}

/// Both variants' certificates with their cost-side pairings for one
/// configuration.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CertificateSample {
    pub label: String,
    pub certificate_pointwise: f64,
    pub pairing_pointwise: f64,
    pub certificate_smoothed: f64,
    pub pairing_smoothed: f64,
    /// L² norm of the cut-off adjoint `max(g,0)·p`; the certificates are
    /// strictly negative whenever this is nonzero.
    pub adjoint_weight: f64,
}

/// L² norm of `max(g,0)`·field over the box.
fn cutoff_weighted_norm(g: &LevelSet, field: &ScalarField) -> f64 {
    let mesh = &field.space.mesh;
    let mut acc = 0.0;
    for tri in 0..mesh.triangles.len() {
        let [i, j, k] = mesh.triangles[tri];
        let (a, b, c) =
            (mesh.vertices[i as usize], mesh.vertices[j as usize], mesh.vertices[k as usize]);
        let area = mesh.tri_geom[tri].area;
        for &(w, bary) in TRI_7.iter() {
            let p = bary[0] * a + bary[1] * b + bary[2] * c;
            let gp = g.value_local(tri, bary, p).max(0.0);
            let pv = field.eval_local(tri, bary);
            acc += w * area * (gp * pv) * (gp * pv);
        }
    }
    acc.sqrt()
}

/// Builds the iterate for `(problem, g, u)`, forms both descent variants,
/// and pairs each certificate with the solved linearized state.
pub fn certificate_sample(
    state_solver: &Solver,
    natural: &Solver,
    problem: &Problem,
    tracer: &TracerOptions,
    g: &LevelSet,
    u: ScalarField,
    label: String,
) -> Result<CertificateSample, String> {
    let state = traced_state(state_solver, problem, tracer, g, u)?;
    let mut sample = CertificateSample {
        label,
        certificate_pointwise: 0.0,
        pairing_pointwise: 0.0,
        certificate_smoothed: 0.0,
        pairing_smoothed: 0.0,
        adjoint_weight: 0.0,
    };
    for variant in [DirectionVariant::Pointwise, DirectionVariant::Smoothed] {
        let dir = descent_direction(state_solver, Some(natural), problem, &state, variant);
        let smoothed = match variant {
            DirectionVariant::Pointwise => None,
            // The smoothed variant stores r = −d̃, so the smoothing field is
            // recovered exactly by negation.
            DirectionVariant::Smoothed => Some(ScalarField::from_coeffs(
                state_solver.space().clone(),
                dir.r.coeffs.iter().map(|c| -c).collect(),
            )),
        };
        let pairing =
            certificate_cross_check(state_solver, problem, &state, &dir, smoothed.as_ref());
        match variant {
            DirectionVariant::Pointwise => {
                sample.certificate_pointwise = dir.certificate;
                sample.pairing_pointwise = pairing;
                sample.adjoint_weight = cutoff_weighted_norm(&state.g, &dir.v);
            }
            DirectionVariant::Smoothed => {
                sample.certificate_smoothed = dir.certificate;
                sample.pairing_smoothed = pairing;
            }
        }
    }
    Ok(sample)
}

/// One step of the flux-penalty sweep.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EpsilonScalingRow {
    pub epsilon: f64,
    /// Penalized cost of the exact subspace minimizer.
    pub cost: f64,
    /// Unscaled squared flux mismatch of that minimizer.
    pub flux_mismatch: f64,
    /// H¹ distance between the minimizing penalized state and the conforming
    /// flux-condition solve on the classified domain.
    pub h1_gap: f64,
}

/// Conforming-gap sweep over a falling sequence of flux-penalty weights.
///
/// The design is a fixed unit circle. Inside it every reachable state solves
/// the same equation, so once the boundary flux is pinned the restriction is
/// pinned too: as the penalty weight falls, the optimal state's flux error
/// falls and its restriction approaches the conforming flux-condition solve
/// on the classified disk. Two choices keep the conforming reference itself
/// out of the comparison. The prescribed flux is zero, because a staircase
/// boundary integrates nonzero flux data along an inflated perimeter and
/// converges to the wrong function; and the source is built from
/// `(1 − x1² − x2²)⁴`, which vanishes quadratically at the circle, so the
/// boundary strip the classification sheds carries almost no load. The
/// boundary tracking target is 1 while the conforming solve's boundary value
/// is 0: that tension makes the optimal flux mismatch genuinely move with
/// the weight instead of sitting at its floor. For each weight the penalized
/// cost — an exact quadratic in the control — is minimized exactly over a
/// fixed subspace of smooth controls: the quadratic's coefficients are
/// recovered from sampled cost values and the small dense normal system is
/// solved by Cholesky. Exact minimizers of a penalized family are classical:
/// as the weight falls, the penalized term of the minimizer cannot rise, so
/// the reported flux mismatch is non-increasing by construction and the gap
/// to the conforming solve tracks it down.
pub fn epsilon_scaling(
    space: &Arc<FeSpace>,
    epsilons: &[f64],
) -> Result<Vec<EpsilonScalingRow>, String> {
    assert!(!epsilons.is_empty());
    assert!(epsilons.windows(2).all(|w| w[1] < w[0]), "weights must fall strictly");
    let solver = Solver::dirichlet(space).map_err(|e| e.to_string())?;
    let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
    let y_d = LevelSet::from_expr("1").unwrap();
    let f = SourceData::new(|p: Vec2| {
        let q = 1.0 - p.norm_sq();
        16.0 * q * q * q - 48.0 * p.norm_sq() * q * q + q * q * q * q
    });
    let delta = NeumannData::constant(0.0);
    let cf = CostFunctions { region: Tracking::Zero, boundary: Tracking::quadratic(y_d) };
    let e = ObservationRegion::empty();
    let trace =
        trace_component(&g, Vec2::new(1.0, 0.0), &TracerOptions::new(space.mesh.h()))
            .map_err(|e| e.to_string())?;
    let traces = vec![trace];

    let mask = classify_domain(&g, &space.mesh, Anchor::Point(Vec2::ZERO))
        .map_err(|e| e.to_string())?;
    let reference = solve_neumann_validation(&space.mesh, &mask, space.degree, &f, &delta)
        .map_err(|e| e.to_string())?;

    // Smooth controls normalized to order one on the box. The cost sees a
    // control only through the near-circle response of the state, a strongly
    // smoothing map, so richer subspaces make the reduced quadratic
    // numerically singular; these five directions keep it comfortably
    // definite under the ridge below.
    let basis: Vec<ScalarField> = [
        |_: Vec2| 1.0,
        |p: Vec2| p.norm_sq() / 9.0,
        |p: Vec2| (p.norm_sq() / 9.0).powi(2),
        |p: Vec2| p.x / 3.0,
        |p: Vec2| p.y / 3.0,
    ]
    .into_iter()
    .map(|phi| ScalarField::interpolate(space.clone(), phi))
    .collect();
    let m = basis.len();

    let field_of = |c: &[f64]| {
        let mut u = ScalarField::zeros(space.clone());
        for (ci, phi) in c.iter().zip(&basis) {
            u = u.add_scaled(phi, *ci).expect("basis lives on the space");
        }
        u
    };
    // Sampled with unit weight; each cost component is itself quadratic in
    // the control, so one sample set serves every penalty weight.
    let sample = |c: &[f64]| {
        let jet = RecoveredJet::new(solve_state(&solver, &f, &g, &field_of(c)));
        (evaluate_cost(&jet, &traces, &e, &cf, &delta, 1.0), jet.field)
    };
    let mut step = vec![0.0; m];
    let (base, _) = sample(&step);
    let mut plus = Vec::with_capacity(m);
    let mut minus = Vec::with_capacity(m);
    for i in 0..m {
        step[i] = 1.0;
        plus.push(sample(&step).0);
        step[i] = -1.0;
        minus.push(sample(&step).0);
        step[i] = 0.0;
    }
    let mut pair = vec![vec![base.clone(); m]; m];
    for i in 0..m {
        for j in 0..i {
            step[i] = 1.0;
            step[j] = 1.0;
            pair[i][j] = sample(&step).0;
            step[i] = 0.0;
            step[j] = 0.0;
        }
    }

    // The ridge absorbs sampling roundoff in near-null directions. It is the
    // same for every weight, so adding the two minimizer inequalities for a
    // pair of weights still cancels everything but the penalized terms, and
    // the mismatch stays monotone.
    let ridge = 1e-9
        * (0..m)
            .map(|i| plus[i].total + minus[i].total - 2.0 * base.total)
            .fold(0.0f64, f64::max);

    let mut rows: Vec<EpsilonScalingRow> = Vec::new();
    for &eps in epsilons {
        let at = |b: &CostBreakdown| b.t1 + b.t2 + b.t3 / eps;
        let j0 = at(&base);
        let mut grad = vec![0.0; m];
        let mut hess = BandedMatrix::zeros(m, m - 1);
        for i in 0..m {
            grad[i] = (at(&plus[i]) - at(&minus[i])) / 2.0;
            hess.add(i, i, at(&plus[i]) + at(&minus[i]) - 2.0 * j0 + ridge);
            for j in 0..i {
                hess.add(i, j, at(&pair[i][j]) - at(&plus[i]) - at(&plus[j]) + j0);
            }
        }
        let chol = hess.cholesky().map_err(|e| e.to_string())?;
        let c = chol.solve(&grad.iter().map(|gi| -gi).collect::<Vec<f64>>());
        let (breakdown, y) = sample(&c);
        rows.push(EpsilonScalingRow {
            epsilon: eps,
            cost: at(&breakdown),
            flux_mismatch: breakdown.t3,
            h1_gap: h1_gap_on_submesh(&y, &reference),
        });
    }
    Ok(rows)
}

/// Everything the gradient-check command reports.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GradCheckReport {
    pub mesh_n: usize,
    pub step: f64,
    pub tolerance: f64,
    pub directional: Vec<FdCheck>,
    pub period: Vec<FdCheck>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Runs `cases` random directional checks and `cases` random period checks
/// on a fresh quadratic space over the standard box, plus the two closed-form
/// period anchors on the unit circle.
pub fn gradient_check(
    seed: u64,
    cases: usize,
    n: usize,
    step: f64,
) -> Result<GradCheckReport, String> {
    assert!(cases > 0 && n >= 8);
    let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), n).map_err(|e| e.to_string())?);
    let space = FeSpace::new(mesh, Degree::P2);
    let solver = Solver::dirichlet(&space).map_err(|e| e.to_string())?;
    let h = space.mesh.h();
    let mut family = RandomFamily::new(seed);

    let mut directional = Vec::with_capacity(cases);
    for index in 0..cases {
        let case = family.derivative_case(&space, index);
        directional.push(case.check(&solver, step)?);
    }

    let circle = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
    let mut period = vec![
        // Scaling the design leaves the curve fixed but speeds the orbit, so
        // the period derivative is exactly −T; growing the level shrinks the
        // circle, whose period is radius-independent.
        period_check(
            "unit circle, direction g".into(),
            &circle,
            &circle,
            Vec2::new(1.0, 0.0),
            h,
            step,
        )?,
        period_check(
            "unit circle, direction 1".into(),
            &circle,
            &LevelSet::from_expr("1").unwrap(),
            Vec2::new(1.0, 0.0),
            h,
            step,
        )?,
    ];
    for index in 0..cases {
        let (geo, w) = family.period_case();
        period.push(period_check(
            format!("random pair {index}"),
            &geo.g,
            &w,
            geo.seed,
            h,
            step,
        )?);
    }

    let tolerance = 1e-3;
    let max_rel_err = directional
        .iter()
        .chain(&period)
        .map(|c| c.rel_err)
        .fold(0.0, f64::max);
    let passed = directional.iter().chain(&period).all(|c| c.ok(tolerance));
    Ok(GradCheckReport { mesh_n: n, step, tolerance, directional, period, max_rel_err, passed })
}

/// One entry of the self-test battery.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SelfTestResult {
    pub name: &'static str,
    pub detail: String,
    pub passed: bool,
}

fn self_test(
    name: &'static str,
    run: impl FnOnce() -> Result<(String, bool), String>,
) -> SelfTestResult {
    match run() {
        Ok((detail, passed)) => SelfTestResult { name, detail, passed },
        Err(detail) => SelfTestResult { name, detail, passed: false },
    }
}

/// A fast battery spanning every module: tracing accuracy, the period
/// anchors, a full derivative check, the certificate identity, and the
/// conforming validation solve. Returns a report per check; a failed check
/// carries its measurement in `detail`.
pub fn selftest() -> Vec<SelfTestResult> {
    use std::f64::consts::PI;
    let mut results = Vec::new();

    let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), 24).unwrap());
    let space = FeSpace::new(mesh, Degree::P2);
    let h = space.mesh.h();

    results.push(self_test("unit-circle period", || {
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let comp = trace_component(&g, Vec2::new(1.0, 0.0), &TracerOptions::new(h))
            .map_err(|e| e.to_string())?;
        let err = (comp.period - PI).abs();
        Ok((format!("T = {}, |T − π| = {err:.3e}", comp.period), err <= 1e-8))
    }));

    results.push(self_test("period anchors", || {
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let along_g = period_check("θ(g,g)".into(), &g, &g, Vec2::new(1.0, 0.0), h, 1e-4)?;
        let along_1 = period_check(
            "θ(g,1)".into(),
            &g,
            &LevelSet::from_expr("1").unwrap(),
            Vec2::new(1.0, 0.0),
            h,
            1e-4,
        )?;
        let err_g = (along_g.analytic + PI).abs();
        let err_1 = along_1.analytic.abs();
        Ok((
            format!("θ(g,g) = {} (want −π), θ(g,1) = {}", along_g.analytic, along_1.analytic),
            err_g <= 1e-4 && err_1 <= 1e-4,
        ))
    }));

    results.push(self_test("derivative difference quotient", || {
        let solver = Solver::dirichlet(&space).map_err(|e| e.to_string())?;
        let case = RandomFamily::new(7).derivative_case(&space, 0);
        let check = case.check(&solver, 1e-4)?;
        Ok((
            format!("{} vs {} (rel {:.3e})", check.analytic, check.difference, check.rel_err),
            check.ok(1e-3),
        ))
    }));

    results.push(self_test("certificate identity", || {
        let solver = Solver::dirichlet(&space).map_err(|e| e.to_string())?;
        let natural = Solver::natural(&space).map_err(|e| e.to_string())?;
        let tracer = TracerOptions::new(h);
        let mut family = RandomFamily::new(11);
        let mut worst: f64 = 0.0;
        for index in 0..2 {
            let (problem, g, u) = family.certificate_case(&space, index);
            let s = certificate_sample(
                &solver,
                &natural,
                &problem,
                &tracer,
                &g,
                u,
                format!("selftest {index}"),
            )?;
            for (c, p) in [
                (s.certificate_pointwise, s.pairing_pointwise),
                (s.certificate_smoothed, s.pairing_smoothed),
            ] {
                if c > 1e-12 {
                    return Err(format!("certificate lost its sign: {c}"));
                }
                worst = worst.max((c - p).abs() / c.abs().max(1.0));
            }
        }
        Ok((format!("max certificate/pairing mismatch {worst:.3e}"), worst <= 1e-12))
    }));

    results.push(self_test("conforming validation solve", || {
        // With f equal to the target constant and zero flux, the constant is
        // the exact solution on any classified domain.
        let g = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let mask = classify_domain(&g, &space.mesh, Anchor::Point(Vec2::ZERO))
            .map_err(|e| e.to_string())?;
        let f = SourceData::constant(2.5);
        let sub = solve_neumann_validation(
            &space.mesh,
            &mask,
            space.degree,
            &f,
            &NeumannData::constant(0.0),
        )
        .map_err(|e| e.to_string())?;
        let constant = ScalarField::interpolate(space.clone(), |_| 2.5);
        let gap = h1_gap_on_submesh(&constant, &sub);
        Ok((format!("constant-solution gap {gap:.3e}"), gap <= 1e-10))
    }));

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_space(n: usize) -> Arc<FeSpace> {
        let mesh = Arc::new(Mesh::rectangle(Rect::centered_square(3.0), n).unwrap());
        FeSpace::new(mesh, Degree::P2)
    }

    #[test]
    fn random_derivative_cases_pass_their_own_difference_checks() {
        let space = quadratic_space(32);
        let solver = Solver::dirichlet(&space).unwrap();
        let mut family = RandomFamily::new(3);
        for index in 0..3 {
            let case = family.derivative_case(&space, index);
            let check = case.check(&solver, 1e-4).unwrap();
            assert!(check.ok(1e-3), "{}: {:?}", case.label, check);
        }
    }

    #[test]
    fn period_checks_hit_the_closed_form_anchors() {
        use std::f64::consts::PI;
        let circle = LevelSet::from_expr("x1^2 + x2^2 - 1").unwrap();
        let h = 6.0 / 32.0;
        let along_g =
            period_check("g".into(), &circle, &circle, Vec2::new(1.0, 0.0), h, 1e-4).unwrap();
        assert!((along_g.analytic + PI).abs() <= 1e-4, "{:?}", along_g);
        assert!(along_g.ok(1e-3));
        let along_1 = period_check(
            "1".into(),
            &circle,
            &LevelSet::from_expr("1").unwrap(),
            Vec2::new(1.0, 0.0),
            h,
            1e-4,
        )
        .unwrap();
        assert!(along_1.analytic.abs() <= 1e-4, "{:?}", along_1);
        assert!(along_1.ok(1e-3));
    }

    #[test]
    fn finite_element_backends_are_rejected_by_the_checkers() {
        let space = quadratic_space(16);
        let solver = Solver::dirichlet(&space).unwrap();
        let mut family = RandomFamily::new(5);
        let mut case = family.derivative_case(&space, 0);
        case.g = case.g.interpolate_to(&space);
        case.r = case.r.interpolate_to(&space);
        let err = case.derivative(&solver).unwrap_err();
        assert!(err.contains("analytic"), "{err}");
        let fe = LevelSet::from_expr("x1").unwrap().interpolate_to(&space);
        let err = period_check(
            "fe".into(),
            &fe,
            &fe,
            Vec2::new(1.0, 0.0),
            space.mesh.h(),
            1e-4,
        )
        .unwrap_err();
        assert!(err.contains("analytic"), "{err}");
    }

    #[test]
    fn certificate_samples_match_and_stay_strict() {
        let space = quadratic_space(24);
        let solver = Solver::dirichlet(&space).unwrap();
        let natural = Solver::natural(&space).unwrap();
        let tracer = crate::optimizer::OptimizeParams::new(space.mesh.h()).tracer;
        let mut family = RandomFamily::new(17);
        for index in 0..4 {
            let (problem, g, u) = family.certificate_case(&space, index);
            let s = certificate_sample(
                &solver,
                &natural,
                &problem,
                &tracer,
                &g,
                u,
                format!("case {index}"),
            )
            .unwrap();
            for (c, p) in [
                (s.certificate_pointwise, s.pairing_pointwise),
                (s.certificate_smoothed, s.pairing_smoothed),
            ] {
                assert!((c - p).abs() <= 1e-12 * c.abs().max(1.0), "{}: {c} vs {p}", s.label);
                assert!(c <= 1e-12, "{}: {c}", s.label);
                if s.adjoint_weight > 1e-8 {
                    assert!(c < -1e-10, "{}: certificate {c} not strict", s.label);
                }
            }
        }
    }

    #[test]
    fn shrinking_the_penalty_weight_closes_the_conforming_gap() {
        // At n = 24 the conforming reference carries its own O(1) staircase
        // bias, larger than the whole flux effect; n = 48 is the coarsest
        // grid where the reference is clean enough for the trend to show.
        let space = quadratic_space(48);
        let rows = epsilon_scaling(&space, &[1.0, 0.5, 0.1]).unwrap();
        assert_eq!(rows.len(), 3);
        for w in rows.windows(2) {
            assert!(
                w[1].h1_gap <= w[0].h1_gap,
                "gap grew at eps {}: {} -> {}",
                w[1].epsilon,
                w[0].h1_gap,
                w[1].h1_gap
            );
            assert!(
                w[1].flux_mismatch <= w[0].flux_mismatch,
                "flux mismatch grew at eps {}: {} -> {}",
                w[1].epsilon,
                w[0].flux_mismatch,
                w[1].flux_mismatch
            );
        }
        assert!(rows[0].h1_gap > rows[2].h1_gap, "sweep never moved: {rows:?}");
    }

    #[test]
    fn selftest_battery_is_green() {
        for result in selftest() {
            assert!(result.passed, "{}: {}", result.name, result.detail);
        }
    }

    #[test]
    fn gradient_check_reports_pass_within_tolerance() {
        let report = gradient_check(42, 2, 24, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.directional.len(), 2);
        assert_eq!(report.period.len(), 4);
        assert!(report.max_rel_err <= report.tolerance);
    }
}
