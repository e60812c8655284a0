//! Descent loop on design/control pairs: adjoint-based directions with a
//! nonpositive certificate, a projected backtracking line search over a
//! geometric step grid, and stopping tests on the accepted cost decrease.
//!
//! Each outer iteration traces the current design's boundary, solves the
//! state, assembles the adjoint, and builds a direction whose predicted
//! derivative through the state — the certificate — is nonpositive by
//! construction and strictly negative away from stationarity. Candidate
//! steps re-project the design onto the region constraint, re-trace from
//! scratch (so topology changes need no special handling), and re-solve;
//! the search keeps the best strict improvement, preferring larger steps on
//! ties. The accepted-cost sequence is therefore strictly decreasing, while
//! individual cost terms are free to rise.
//!
//! Candidate evaluations run in parallel but are collected in grid order
//! and reduced sequentially, so identical inputs produce bit-identical
//! histories regardless of thread count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cost::{evaluate_cost, state_derivative_pairing, CostBreakdown, CostFunctions};
use crate::geometry::{FeSpace, RecoveredJet, ScalarField};
use crate::hamiltonian::{TracedComponent, TracerOptions};
use crate::levelset::admissibility::{check_admissibility, AdmissibilityReport};
use crate::levelset::region::ObservationRegion;
use crate::levelset::seeds::find_boundary_seeds;
use crate::levelset::{project_constraint, LevelSet, LevelSetError};
use crate::pde::{
    assemble_load, solve_adjoint, solve_control_smoothing, solve_state, NeumannData, PdeError,
    Solver, SourceData,
};
use crate::Vec2;

/// How the design part of the descent direction is built from the adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum DirectionVariant {
    /// `r = -u·p` as a nodal product; certificate strictly negative whenever
    /// the cut-off adjoint is nonzero.
    Pointwise,
    /// `r = -d̃` where `d̃` smooths the product load through an unconstrained
    /// solve; the cross term becomes a full squared norm.
    Smoothed,
}

impl std::fmt::Display for DirectionVariant {
    /// Prints the variant's command-line name (`i` or `ii`).
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DirectionVariant::Pointwise => "i",
            DirectionVariant::Smoothed => "ii",
        })
    }
}

impl std::str::FromStr for DirectionVariant {
    type Err = String;

    /// Parses the command-line name accepted by [`std::fmt::Display`].
    fn from_str(s: &str) -> Result<DirectionVariant, String> {
        match s {
            "i" => Ok(DirectionVariant::Pointwise),
            "ii" => Ok(DirectionVariant::Smoothed),
            other => Err(format!("unknown direction variant {other:?}; use \"i\" or \"ii\"")),
        }
    }
}

/// Everything that defines the objective and the governing problem on the
/// fixed box: right-hand side, flux data, tracking integrands, observation
/// region, penalty weight, and the optional design values pinned on the
/// region.
pub struct Problem {
    pub f: SourceData,
    pub delta: NeumannData,
    pub cost: CostFunctions,
    pub region: ObservationRegion,
    /// Flux-penalty weight: the objective charges the squared mismatch with
    /// `1/epsilon`.
    pub epsilon: f64,
    /// Replacement design values enforced on every dof inside the region
    /// after each update, keeping the region inside the domain. `None`
    /// leaves updates unprojected.
    pub projection: Option<LevelSet>,
}

/// Algorithm knobs for [`optimize`].
#[derive(Clone, Debug)]
pub struct OptimizeParams {
    pub variant: DirectionVariant,
    /// Stop when an accepted step decreases the cost by less than this.
    pub tol: f64,
    /// Geometric ratio of the step grid.
    pub rho: f64,
    /// Number of step candidates per search.
    pub max_pow: usize,
    /// Cap on accepted updates.
    pub max_iter: usize,
    pub tracer: TracerOptions,
}

impl OptimizeParams {
    /// Defaults: smoothed variant, tolerance 1e-6, grid 0.8^i for i < 30,
    /// at most 50 updates, tracer steps tied to `h`. The return gate is
    /// widened to a quarter of the return-ball radius: finite-element-backed
    /// designs carry kink-induced field noise, so orbit closure is only
    /// accurate to O(dt²), while a wrong-branch return misses by the full
    /// ball radius — a gate proportional to the step separates the two at
    /// every resolution.
    pub fn new(h: f64) -> OptimizeParams {
        let mut tracer = TracerOptions::new(h);
        tracer.return_tol = 0.25 * tracer.r_cap_factor * tracer.c_step * tracer.h;
        OptimizeParams {
            variant: DirectionVariant::Smoothed,
            tol: 1e-6,
            rho: 0.8,
            max_pow: 30,
            max_iter: 50,
            tracer,
        }
    }
}

/// One accepted iterate: the design/control pair with its consistent trace,
/// state, and cost.
#[derive(Clone)]
pub struct OptimizerState {
    /// Finite-element-backed design function.
    pub g: LevelSet,
    pub u: ScalarField,
    /// State solved for (g, u).
    pub y: ScalarField,
    pub seeds: Vec<Vec2>,
    pub traces: Vec<TracedComponent>,
    pub cost: CostBreakdown,
    pub k: usize,
}

/// A descent direction with its nonpositive certificate.
pub struct DescentDirection {
    pub r: ScalarField,
    pub v: ScalarField,
    pub variant: DirectionVariant,
    /// Predicted cost derivative through the state for a unit step,
    /// evaluated by the same quadratures as the solver loads. Nonpositive
    /// by construction; zero exactly at stationarity.
    pub certificate: f64,
}

impl DescentDirection {
    /// True when both components vanish identically (stationary adjoint).
    pub fn is_zero(&self) -> bool {
        self.r.coeffs.iter().all(|&c| c == 0.0) && self.v.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// One evaluated step candidate, kept for the iteration log.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CandidateRecord {
    pub lambda: f64,
    /// `None` when the evaluation failed (trace or solve); see `note`.
    pub cost: Option<CostBreakdown>,
    pub note: Option<String>,
}

/// Log of one outer iteration: the direction's certificate and every step
/// candidate, with the index of the accepted one.
#[derive(Clone, Debug, serde::Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub variant: DirectionVariant,
    pub certificate: f64,
    pub candidates: Vec<CandidateRecord>,
    pub accepted: Option<usize>,
}

/// Why the loop ended.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum StopReason {
    /// The accepted step improved the cost by less than the tolerance.
    DecreaseBelowTolerance { delta: f64 },
    /// No step candidate was strictly below the current cost.
    NoImprovingStep,
    /// The accepted-update cap was reached.
    IterationCap,
    /// The iterate with this index failed the admissibility check.
    Inadmissible { k: usize },
}

/// Complete record of a run: every accepted iterate, every line-search
/// candidate, and the stopping verdict.
pub struct RunHistory {
    /// Accepted iterates; `states[k].k == k`.
    pub states: Vec<OptimizerState>,
    pub iterations: Vec<IterationRecord>,
    pub stop: StopReason,
    /// The failed report when `stop` is [`StopReason::Inadmissible`].
    pub failure: Option<AdmissibilityReport>,
}

impl RunHistory {
    pub fn final_cost(&self) -> CostBreakdown {
        self.states.last().expect("history always holds the initial state").cost
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error("initial design rejected: {0}")]
    InadmissibleStart(Box<AdmissibilityReport>),
    #[error("initial pair could not be evaluated: {0}")]
    InitialEvaluation(String),
}

/// Builds the descent direction for the current iterate.
///
/// Both variants take `v = -p` with `p` the adjoint. The certificate is the
/// pairing of the linearized-problem load for (r, v) with `p`, assembled by
/// the solver's own quadrature — exactly the quantity the adjoint identity
/// equates with the cost derivative through the state.
pub fn descent_direction(
    state_solver: &Solver,
    smoothing_solver: Option<&Solver>,
    problem: &Problem,
    state: &OptimizerState,
    variant: DirectionVariant,
) -> DescentDirection {
    assert!(state_solver.is_constrained(), "the adjoint needs the wall-constrained solver");
    let space = state_solver.space();
    assert!(Arc::ptr_eq(&state.u.space, space), "control must live on the solver space");
    let y = RecoveredJet::new(state.y.clone());
    let p = solve_adjoint(
        state_solver,
        &y,
        &state.traces,
        &problem.region,
        |x, v| problem.cost.region.d_value(x, v),
        |x, v| problem.cost.boundary.d_value(x, v),
        &problem.delta,
        problem.epsilon,
    );
    let smoothed = match variant {
        DirectionVariant::Pointwise => None,
        DirectionVariant::Smoothed => {
            let smoother = smoothing_solver.expect("smoothed variant needs the natural solver");
            assert!(!smoother.is_constrained(), "smoothing must be unconstrained");
            Some(solve_control_smoothing(smoother, &state.g, &state.u, &p))
        }
    };
    // The load of the linearized problem for (r, v) = (direction), with the
    // design part evaluated pointwise; paired with p this is the certificate.
    let g = &state.g;
    let u = &state.u;
    let lin_load = assemble_load(space, |tri, bary, x| {
        let gp = g.value_local(tri, bary, x).max(0.0);
        if gp == 0.0 {
            return 0.0;
        }
        let pv = p.eval_local(tri, bary);
        let r = match &smoothed {
            None => -u.eval_local(tri, bary) * pv,
            Some(d) => -d.eval_local(tri, bary),
        };
        gp * gp * (-pv) + 2.0 * gp * r * u.eval_local(tri, bary)
    });
    let certificate: f64 = lin_load.iter().zip(&p.coeffs).map(|(l, c)| l * c).sum();
    assert!(certificate <= 1e-12, "certificate lost its sign: {certificate}");
    let r = match smoothed {
        None => {
            let coeffs = u.coeffs.iter().zip(&p.coeffs).map(|(a, b)| -a * b).collect();
            ScalarField::from_coeffs(space.clone(), coeffs)
        }
        Some(d) => {
            let coeffs = d.coeffs.iter().map(|c| -c).collect();
            ScalarField::from_coeffs(space.clone(), coeffs)
        }
    };
    let v = ScalarField::from_coeffs(space.clone(), p.coeffs.iter().map(|c| -c).collect());
    DescentDirection { r, v, variant, certificate }
}

/// Outcome of one search: every candidate in grid order plus the accepted
/// index and its payload.
pub struct LineSearchOutcome<T> {
    pub candidates: Vec<CandidateRecord>,
    pub accepted: Option<(usize, T)>,
}

/// Evaluates the step grid `rho^i` for `i < max_pow` and keeps the candidate
/// with the smallest cost strictly below `current_total`; earlier grid
/// points (larger steps) win ties. Evaluation failures are skipped with a
/// logged warning and recorded. Runs candidates in parallel, reduces them
/// in grid order.
pub fn line_search<T: Send>(
    current_total: f64,
    rho: f64,
    max_pow: usize,
    evaluate: impl Fn(f64) -> Result<(CostBreakdown, T), String> + Sync,
) -> LineSearchOutcome<T> {
    assert!(rho > 0.0 && rho < 1.0, "step ratio must lie in (0, 1)");
    assert!(max_pow >= 1);
    let lambdas: Vec<f64> = (0..max_pow).map(|i| rho.powi(i as i32)).collect();
    let results: Vec<Result<(CostBreakdown, T), String>> =
        lambdas.par_iter().map(|&l| evaluate(l)).collect();
    let mut candidates = Vec::with_capacity(max_pow);
    let mut accepted: Option<(usize, T)> = None;
    let mut best = current_total;
    for (i, (lambda, result)) in lambdas.into_iter().zip(results).enumerate() {
        match result {
            Ok((cost, payload)) => {
                if cost.total < best {
                    best = cost.total;
                    accepted = Some((i, payload));
                }
                candidates.push(CandidateRecord { lambda, cost: Some(cost), note: None });
            }
            Err(note) => {
                log::warn!("step {lambda:.6} skipped: {note}");
                candidates.push(CandidateRecord { lambda, cost: None, note: Some(note) });
            }
        }
    }
    LineSearchOutcome { candidates, accepted }
}

/// A fully evaluated trial pair, promoted to the next iterate on acceptance.
struct Evaluated {
    g: LevelSet,
    u: ScalarField,
    y: ScalarField,
    seeds: Vec<Vec2>,
    traces: Vec<TracedComponent>,
    cost: CostBreakdown,
}

/// Trace, solve, and price one design/control pair.
fn evaluate_design(
    solver: &Solver,
    problem: &Problem,
    tracer: &TracerOptions,
    g: LevelSet,
    u: ScalarField,
) -> Result<(CostBreakdown, Evaluated), String> {
    let found =
        find_boundary_seeds(&g, &solver.space().mesh, tracer).map_err(|e| e.to_string())?;
    let y = RecoveredJet::new(solve_state(solver, &problem.f, &g, &u));
    let cost = evaluate_cost(
        &y,
        &found.components,
        &problem.region,
        &problem.cost,
        &problem.delta,
        problem.epsilon,
    );
    if !cost.total.is_finite() {
        return Err(format!("cost evaluated to {}", cost.total));
    }
    Ok((
        cost,
        Evaluated {
            g,
            u,
            y: y.field,
            seeds: found.seeds,
            traces: found.components,
            cost,
        },
    ))
}

/// Runs the descent loop from `(g0, u0)` until a stopping test fires.
///
/// The initial design is interpolated onto the solver space, projected, and
/// admissibility-checked (a failure here is an error, not a history). Each
/// accepted update is re-checked; an inadmissible iterate ends the run with
/// its diagnostic report preserved.
pub fn optimize(
    space: &Arc<FeSpace>,
    problem: &Problem,
    params: &OptimizeParams,
    g0: &LevelSet,
    u0: &ScalarField,
) -> Result<RunHistory, OptimizerError> {
    assert!(problem.epsilon > 0.0);
    assert!(params.tol > 0.0);
    assert!(Arc::ptr_eq(&u0.space, space), "control must live on the solver space");
    let mesh = &space.mesh;
    let state_solver = Solver::dirichlet(space)?;
    let smoothing_solver = match params.variant {
        DirectionVariant::Pointwise => None,
        DirectionVariant::Smoothed => Some(Solver::natural(space)?),
    };
    let project = |g: &LevelSet| -> LevelSet {
        match &problem.projection {
            Some(pinned) => project_constraint(g, &problem.region, pinned, space),
            None => g.clone(),
        }
    };

    let g_init = project(&g0.interpolate_to(space));
    let report = check_admissibility(&g_init, mesh, &problem.region, &params.tracer)?;
    if !report.pass() {
        return Err(OptimizerError::InadmissibleStart(Box::new(report)));
    }
    let (_, first) = evaluate_design(&state_solver, problem, &params.tracer, g_init, u0.clone())
        .map_err(OptimizerError::InitialEvaluation)?;

    let mut states = vec![OptimizerState {
        g: first.g,
        u: first.u,
        y: first.y,
        seeds: first.seeds,
        traces: first.traces,
        cost: first.cost,
        k: 0,
    }];
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let (stop, failure) = loop {
        let state = states.last().expect("at least the initial state");
        if state.k == params.max_iter {
            break (StopReason::IterationCap, None);
        }
        let direction = descent_direction(
            &state_solver,
            smoothing_solver.as_ref(),
            problem,
            state,
            params.variant,
        );
        if direction.is_zero() {
            iterations.push(IterationRecord {
                k: state.k,
                variant: direction.variant,
                certificate: direction.certificate,
                candidates: Vec::new(),
                accepted: None,
            });
            break (StopReason::NoImprovingStep, None);
        }
        let r_ls = LevelSet::from_field(direction.r.clone());
        let outcome = line_search(state.cost.total, params.rho, params.max_pow, |lambda| {
            let g_t = project(&state.g.perturbed(&r_ls, lambda));
            let u_t = state.u.add_scaled(&direction.v, lambda).map_err(|e| e.to_string())?;
            evaluate_design(&state_solver, problem, &params.tracer, g_t, u_t)
        });
        iterations.push(IterationRecord {
            k: state.k,
            variant: direction.variant,
            certificate: direction.certificate,
            candidates: outcome.candidates,
            accepted: outcome.accepted.as_ref().map(|(i, _)| *i),
        });
        match outcome.accepted {
            None => break (StopReason::NoImprovingStep, None),
            Some((_, cand)) => {
                let delta = state.cost.total - cand.cost.total;
                debug_assert!(delta > 0.0, "acceptance requires strict improvement");
                let next_k = state.k + 1;
                let report =
                    check_admissibility(&cand.g, mesh, &problem.region, &params.tracer)?;
                states.push(OptimizerState {
                    g: cand.g,
                    u: cand.u,
                    y: cand.y,
                    seeds: cand.seeds,
                    traces: cand.traces,
                    cost: cand.cost,
                    k: next_k,
                });
                if !report.pass() {
                    break (StopReason::Inadmissible { k: next_k }, Some(report));
                }
                if delta < params.tol {
                    break (StopReason::DecreaseBelowTolerance { delta }, None);
                }
            }
        }
    };
    Ok(RunHistory { states, iterations, stop, failure })
}

/// The certificate's cost-side twin: the derivative pairing evaluated on the
/// solved linearized state for the direction. Used by tests and diagnostics
/// to confirm the adjoint identity on the assembled system.
pub fn certificate_cross_check(
    state_solver: &Solver,
    problem: &Problem,
    state: &OptimizerState,
    direction: &DescentDirection,
    smoothed: Option<&ScalarField>,
) -> f64 {
    let space = state_solver.space();
    let g = &state.g;
    let u = &state.u;
    let v = &direction.v;
    let lin_load = assemble_load(space, |tri, bary, x| {
        let gp = g.value_local(tri, bary, x).max(0.0);
        if gp == 0.0 {
            return 0.0;
        }
        let uv = u.eval_local(tri, bary);
        let r = match smoothed {
            None => -uv * -v.eval_local(tri, bary),
            Some(d) => -d.eval_local(tri, bary),
        };
        gp * gp * v.eval_local(tri, bary) + 2.0 * gp * r * uv
    });
    let q = RecoveredJet::new(state_solver.solve(&lin_load));
    let y = RecoveredJet::new(state.y.clone());
    state_derivative_pairing(
        &y,
        &q,
        &state.traces,
        &problem.region,
        &problem.cost,
        &problem.delta,
        problem.epsilon,
    )
}
