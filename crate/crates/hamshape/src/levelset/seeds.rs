//! Seed points for boundary tracing: one representative per connected
//! component of the zero set.
//!
//! Mesh edges whose endpoint values change sign are bisected to roots, then
//! components are claimed greedily: trace the orbit through the first
//! unclaimed root and discard every root within a tube around the traced
//! curve. The traces are returned along with the seeds since every caller
//! needs them anyway.

use std::collections::BTreeSet;

use crate::geometry::Mesh;
use crate::hamiltonian::{trace_component, TracedComponent, TracerOptions};
use crate::levelset::{LevelSet, LevelSetError};
use crate::Vec2;

const ROOT_TOL: f64 = 1e-10;

/// Seeds and their traced components, one per zero-set component.
pub struct SeedSearch {
    pub seeds: Vec<Vec2>,
    pub components: Vec<TracedComponent>,
    /// max |grad g| over all detected roots; the step size that was used.
    pub grad_scale: f64,
}

/// Bisect a sign change to |g| <= 1e-10.
fn bisect_edge(ls: &LevelSet, mut a: Vec2, mut fa: f64, mut b: Vec2, fb: f64) -> Vec2 {
    debug_assert!(fa * fb < 0.0);
    let _ = fb;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = ls.value(mid);
        if fm.abs() <= ROOT_TOL {
            return mid;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if (a - b).norm() == 0.0 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Locate one seed on each connected component of {g = 0}.
pub fn find_boundary_seeds(
    ls: &LevelSet,
    mesh: &Mesh,
    opts: &TracerOptions,
) -> Result<SeedSearch, LevelSetError> {
    let values: Vec<f64> = mesh.vertices.iter().map(|&v| ls.value(v)).collect();

    let mut roots: Vec<Vec2> = Vec::new();
    // Vertices sitting exactly on the zero set count as roots; sign-change
    // bisection would miss a zero set aligned with grid lines.
    for (i, &v) in values.iter().enumerate() {
        if v == 0.0 {
            roots.push(mesh.vertices[i]);
        }
    }
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for &(a, b) in &edges {
        let (fa, fb) = (values[a as usize], values[b as usize]);
        if fa * fb < 0.0 {
            roots.push(bisect_edge(
                ls,
                mesh.vertices[a as usize],
                fa,
                mesh.vertices[b as usize],
                fb,
            ));
        }
    }
    if roots.is_empty() {
        return Err(LevelSetError::NoZeroSet);
    }

    let mut grad_scale: f64 = 0.0;
    for &p in &roots {
        let gn = ls.gradient(p).norm();
        if gn < opts.grad_floor {
            return Err(LevelSetError::DegenerateGradient {
                x: p.x,
                y: p.y,
                found: gn,
                floor: opts.grad_floor,
            });
        }
        grad_scale = grad_scale.max(gn);
    }

    let mut trace_opts = *opts;
    trace_opts.grad_scale = Some(grad_scale);
    if trace_opts.bounds.is_none() {
        trace_opts.bounds = Some(mesh.bounds);
    }

    let tube = 2.0 * mesh.h();
    let mut claimed = vec![false; roots.len()];
    let mut seeds = Vec::new();
    let mut components = Vec::new();
    for i in 0..roots.len() {
        if claimed[i] {
            continue;
        }
        let comp = trace_component(ls, roots[i], &trace_opts)?;
        for (j, &root) in roots.iter().enumerate() {
            if !claimed[j] && comp.points.iter().any(|p| p.dist(root) <= tube) {
                claimed[j] = true;
            }
        }
        debug_assert!(claimed[i]);
        seeds.push(roots[i]);
        components.push(comp);
    }
    Ok(SeedSearch { seeds, components, grad_scale })
}
