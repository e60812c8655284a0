//! Run artifacts: iteration tables, traced boundaries, field dumps, a JSON
//! summary, and per-iterate SVG plots of the evolving domain.
//!
//! Everything is written with deterministic formatting — struct-ordered TOML,
//! fixed-precision tables, shortest-round-trip floats for field dumps — so a
//! rerun of the same configuration reproduces every artifact byte for byte.
//! Field dumps carry full precision and [`parse_field_csv`] reloads them
//! exactly, which is how the validation pass reconstructs stored iterates.
//!
//! Layout of a run directory:
//! - `config.toml` — the effective configuration;
//! - `iterations.csv` — one row per accepted iterate (`sub_step = -1`)
//!   followed by one row per line-search candidate (`sub_step = i`);
//! - `summary.json` — counts, final cost, stop reason, per-iterate log;
//! - `g_k.csv`, `u_k.csv`, `y_k.csv` — design, control, and state dofs;
//! - `boundary_k_c.csv` — samples of component `c` of iterate `k`;
//! - `domain_k.svg` — the box, the traced boundary, and the observation
//!   region.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::cost::Tracking;
use crate::geometry::quadrature::gauss_legendre_on;
use crate::geometry::{FeSpace, Mesh, Rect, ScalarField};
use crate::hamiltonian::TracedComponent;
use crate::levelset::region::ObservationRegion;
use crate::levelset::{classify_domain, Anchor, LevelSet, LevelSetError};
use crate::optimizer::{OptimizerState, RunHistory};
use crate::pde::{solve_neumann_validation, NeumannSolution, PdeError};
use crate::vec2::Vec2;

/// Why artifacts could not be written, a dump could not be reloaded, or a
/// stored run could not be re-solved.
#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config encoding: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("field file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error(transparent)]
    Pde(#[from] PdeError),
}

/// Formats a table value to six significant digits.
fn sig6(v: f64) -> String {
    format!("{v:.5e}")
}

/// The iteration table: accepted iterates interleaved with the line-search
/// candidates tried from them. Cost columns are empty for candidates whose
/// evaluation failed; `lambda` is empty on accepted-iterate rows.
pub fn iterations_csv(history: &RunHistory) -> String {
    let mut out = String::from("k,sub_step,t1,t2,t3,J,lambda,accepted\n");
    for state in &history.states {
        let c = &state.cost;
        let _ = writeln!(
            out,
            "{},-1,{},{},{},{},,1",
            state.k,
            sig6(c.t1),
            sig6(c.t2),
            sig6(c.t3),
            sig6(c.total)
        );
        let Some(record) = history.iterations.get(state.k) else { continue };
        assert!(record.k == state.k, "iteration log out of step with the states");
        for (i, cand) in record.candidates.iter().enumerate() {
            let cost = match &cand.cost {
                Some(c) => format!("{},{},{},{}", sig6(c.t1), sig6(c.t2), sig6(c.t3), sig6(c.total)),
                None => ",,,".to_string(),
            };
            let accepted = (record.accepted == Some(i)) as u8;
            let _ =
                writeln!(out, "{},{},{},{},{}", state.k, i, cost, sig6(cand.lambda), accepted);
        }
    }
    out
}

/// One traced component as `t,z1,z2,dz1,dz2` rows at full precision.
pub fn boundary_csv(comp: &TracedComponent) -> String {
    let mut out = String::from("t,z1,z2,dz1,dz2\n");
    for ((t, z), v) in comp.times.iter().zip(&comp.points).zip(&comp.velocities) {
        let _ = writeln!(out, "{:e},{:e},{:e},{:e},{:e}", t, z.x, z.y, v.x, v.y);
    }
    out
}

/// A field's dof values as `dof_id,x,y,value` rows at full precision.
pub fn field_csv(field: &ScalarField) -> String {
    let mut out = String::from("dof_id,x,y,value\n");
    for (i, (p, v)) in field.space.dof_coords.iter().zip(&field.coeffs).enumerate() {
        let _ = writeln!(out, "{},{:e},{:e},{:e}", i, p.x, p.y, v);
    }
    out
}

/// Reloads a [`field_csv`] dump onto its space, bit for bit. The dof
/// coordinates must match the space exactly — a mismatch means the dump came
/// from a different discretization. The Dirichlet marker is not stored, so
/// the result carries none.
pub fn parse_field_csv(space: &Arc<FeSpace>, text: &str) -> Result<ScalarField, ExportError> {
    let bad = |line: usize, what: &str| ExportError::Malformed(format!("line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "dof_id,x,y,value")) => {}
        _ => return Err(bad(1, "missing `dof_id,x,y,value` header")),
    }
    let mut coeffs = vec![0.0; space.dof_coords.len()];
    let mut seen = 0usize;
    for (idx, line) in lines {
        let n = idx + 1;
        let mut cells = line.split(',');
        let mut cell = || cells.next().ok_or_else(|| bad(n, "expected 4 columns"));
        let id: usize = cell()?.parse().map_err(|_| bad(n, "bad dof id"))?;
        let x: f64 = cell()?.parse().map_err(|_| bad(n, "bad x"))?;
        let y: f64 = cell()?.parse().map_err(|_| bad(n, "bad y"))?;
        let value: f64 = cell()?.parse().map_err(|_| bad(n, "bad value"))?;
        if id != seen {
            return Err(bad(n, "dof ids must be dense and ascending"));
        }
        if id >= coeffs.len() {
            return Err(bad(n, "more rows than the space has dofs"));
        }
        let p = space.dof_coords[id];
        if p.x != x || p.y != y {
            return Err(bad(n, "dof coordinates do not match the space"));
        }
        coeffs[id] = value;
        seen += 1;
    }
    if seen != coeffs.len() {
        return Err(ExportError::Malformed(format!(
            "{} rows for a space with {} dofs",
            seen,
            coeffs.len()
        )));
    }
    Ok(ScalarField { space: space.clone(), coeffs, dirichlet: false })
}

/// Per-iterate entry of the run summary.
#[derive(serde::Serialize)]
struct IterationSummary {
    k: usize,
    t1: f64,
    t2: f64,
    t3: f64,
    total: f64,
    /// Connected boundary components of this iterate.
    components: usize,
    /// Descent certificate of the direction built here; absent on the final
    /// iterate when the loop stopped before building one.
    certificate: Option<f64>,
    /// Accepted step size out of this iterate.
    lambda: Option<f64>,
    candidates: usize,
}

#[derive(serde::Serialize)]
struct Summary<'a> {
    /// Accepted updates (states minus the initial one).
    iterations: usize,
    final_cost: &'a crate::cost::CostBreakdown,
    stop_reason: &'a crate::optimizer::StopReason,
    /// The admissibility report when the run stopped on a failed iterate.
    failure: Option<String>,
    per_iteration: Vec<IterationSummary>,
}

/// The run summary as pretty-printed JSON.
pub fn summary_json(history: &RunHistory) -> String {
    let per_iteration = history
        .states
        .iter()
        .map(|state| {
            let record = history.iterations.get(state.k);
            IterationSummary {
                k: state.k,
                t1: state.cost.t1,
                t2: state.cost.t2,
                t3: state.cost.t3,
                total: state.cost.total,
                components: state.traces.len(),
                certificate: record.map(|r| r.certificate),
                lambda: record
                    .and_then(|r| r.accepted.map(|i| r.candidates[i].lambda)),
                candidates: record.map_or(0, |r| r.candidates.len()),
            }
        })
        .collect();
    let summary = Summary {
        iterations: history.states.len() - 1,
        final_cost: &history.states.last().expect("history holds the initial state").cost,
        stop_reason: &history.stop,
        failure: history.failure.as_ref().map(|report| report.to_string()),
        per_iteration,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary always serializes");
    text.push('\n');
    text
}

/// An SVG plot of one iterate: the computational box, every traced boundary
/// component, and the observation disk when one is configured. World
/// coordinates are used directly with a flipped y axis, so the plot is to
/// scale.
pub fn domain_svg(bounds: Rect, state: &OptimizerState, disk: Option<(Vec2, f64)>) -> String {
    let w = bounds.x_max - bounds.x_min;
    let h = bounds.y_max - bounds.y_min;
    let margin = 0.04 * w.max(h);
    let stroke = 0.006 * w.max(h);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" \
         viewBox=\"{:.4} {:.4} {:.4} {:.4}\">",
        bounds.x_min - margin,
        -bounds.y_max - margin,
        w + 2.0 * margin,
        h + 2.0 * margin
    );
    let _ = writeln!(out, "<g transform=\"scale(1,-1)\" fill=\"none\" stroke-width=\"{stroke:.4}\">");
    let _ = writeln!(
        out,
        "<rect x=\"{:.4}\" y=\"{:.4}\" width=\"{w:.4}\" height=\"{h:.4}\" \
         fill=\"#ffffff\" stroke=\"#666666\"/>",
        bounds.x_min, bounds.y_min
    );
    if let Some((c, r)) = disk {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.4}\" cy=\"{:.4}\" r=\"{r:.4}\" stroke=\"#d29922\" \
             stroke-dasharray=\"{:.4} {:.4}\"/>",
            c.x,
            c.y,
            3.0 * stroke,
            3.0 * stroke
        );
    }
    for comp in &state.traces {
        // A few hundred points render a smooth curve; the full sample set
        // lives in the boundary tables.
        let stride = (comp.points.len() / 600).max(1);
        let mut points = String::new();
        for z in comp.points.iter().step_by(stride) {
            let _ = write!(points, "{:.4},{:.4} ", z.x, z.y);
        }
        let _ = write!(points, "{:.4},{:.4}", comp.points[0].x, comp.points[0].y);
        let _ = writeln!(out, "<polyline points=\"{points}\" stroke=\"#1f6feb\"/>");
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Writes every artifact of a finished run into `dir` (created if needed)
/// and returns the paths in a fixed order. Reruns overwrite byte for byte.
pub fn write_run_artifacts(
    dir: &Path,
    config: &RunConfig,
    history: &RunHistory,
) -> Result<Vec<PathBuf>, ExportError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<(), ExportError> {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    put("config.toml".into(), toml::to_string_pretty(config)?)?;
    put("iterations.csv".into(), iterations_csv(history))?;
    put("summary.json".into(), summary_json(history))?;
    let bounds = Rect::new(
        config.mesh.x_min,
        config.mesh.x_max,
        config.mesh.y_min,
        config.mesh.y_max,
    );
    let disk = config
        .problem
        .region
        .as_ref()
        .map(|d| (Vec2::new(d.center[0], d.center[1]), d.radius));
    for state in &history.states {
        let k = state.k;
        let g = state.g.fe_field().expect("optimizer iterates carry finite-element designs");
        put(format!("g_{k}.csv"), field_csv(g))?;
        put(format!("u_{k}.csv"), field_csv(&state.u))?;
        put(format!("y_{k}.csv"), field_csv(&state.y))?;
        for (c, comp) in state.traces.iter().enumerate() {
            put(format!("boundary_{k}_{c}.csv"), boundary_csv(comp))?;
        }
        put(format!("domain_{k}.svg"), domain_svg(bounds, state, disk))?;
    }
    Ok(written)
}

/// One conforming re-solve of a stored iterate.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ValidationRow {
    pub k: usize,
    /// Triangles in the classified domain of this iterate.
    pub triangles: usize,
    /// Tracking cost of the conforming solution: the boundary term for
    /// contour-tracking runs, the region term for disk-tracking runs.
    pub cost: f64,
}

/// The conforming re-solve table for a completed run directory.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RunValidation {
    /// `"boundary"` or `"region"`, after the tracking term the run used.
    pub style: &'static str,
    pub rows: Vec<ValidationRow>,
    /// Index into `rows` of the smallest cost.
    pub argmin: usize,
}

/// Walks a completed run directory, re-solves every stored iterate with the
/// conforming flux-condition solver on its classified domain, and reports the
/// tracking cost of each conforming solution.
///
/// The domain is the negative component anchored at the observation region
/// when one is configured, and at the most negative design dof otherwise.
/// Boundary-style costs integrate over the classified domain's own staircase
/// boundary; region-style costs use the observation region's interior rule.
pub fn validate_run_directory(dir: &Path) -> Result<RunValidation, ExportError> {
    let config = RunConfig::load(&dir.join("config.toml"))?;
    let built = config.build()?;
    let space = &built.space;
    let problem = &built.problem;
    let boundary_style = !problem.cost.boundary.is_zero();
    let mut rows = Vec::new();
    for k in 0.. {
        let path = dir.join(format!("g_{k}.csv"));
        if !path.exists() {
            break;
        }
        let field = parse_field_csv(space, &std::fs::read_to_string(&path)?)?;
        let deepest = field
            .coeffs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| space.dof_coords[i])
            .expect("a parsed field always has dofs");
        let anchor = if problem.region.is_empty() {
            Anchor::Point(deepest)
        } else {
            Anchor::Region(&problem.region)
        };
        let mask = classify_domain(&LevelSet::from_field(field), &space.mesh, anchor)?;
        let sol = solve_neumann_validation(
            &space.mesh,
            &mask,
            space.degree,
            &problem.f,
            &problem.delta,
        )?;
        let cost = if boundary_style {
            staircase_boundary_cost(&sol, &problem.cost.boundary)
        } else {
            region_cost_on_submesh(&sol, &space.mesh, &problem.region, &problem.cost.region)
                .map_err(|what| ExportError::Malformed(format!("iterate {k}: {what}")))?
        };
        rows.push(ValidationRow { k, triangles: sol.parent_triangles.len(), cost });
    }
    if rows.is_empty() {
        return Err(ExportError::Malformed(format!(
            "no stored iterates under {}: expected g_0.csv",
            dir.display()
        )));
    }
    let argmin = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .map(|(i, _)| i)
        .expect("rows is non-empty");
    Ok(RunValidation { style: if boundary_style { "boundary" } else { "region" }, rows, argmin })
}

/// Tracking cost along the staircase boundary of a conforming solve.
fn staircase_boundary_cost(sol: &NeumannSolution, tracking: &Tracking) -> f64 {
    let mesh = &sol.space.mesh;
    let mut acc = 0.0;
    for &(a, b, owner) in &mesh.boundary_edges {
        let (pa, pb) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
        let len = pa.dist(pb);
        for (t, w) in gauss_legendre_on(2, 0.0, 1.0) {
            let p = pa + (pb - pa) * t;
            let bary = mesh.barycentric(owner as usize, p);
            acc += w * len * tracking.value(p, sol.y.eval_local(owner as usize, bary));
        }
    }
    acc
}

/// Tracking cost over the observation region, evaluated on the submesh.
fn region_cost_on_submesh(
    sol: &NeumannSolution,
    parent: &Mesh,
    region: &ObservationRegion,
    tracking: &Tracking,
) -> Result<f64, String> {
    let mut sub_of = vec![u32::MAX; parent.triangles.len()];
    for (sk, &pk) in sol.parent_triangles.iter().enumerate() {
        sub_of[pk as usize] = sk as u32;
    }
    let mut acc = 0.0;
    for &(p, w) in region.quadrature() {
        let (tri, bary) =
            parent.locate(p).ok_or_else(|| format!("observation point {p:?} leaves the box"))?;
        let sk = sub_of[tri];
        if sk == u32::MAX {
            return Err(format!("observation point {p:?} leaves the classified domain"));
        }
        acc += w * tracking.value(p, sol.y.eval_local(sk as usize, bary));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::optimizer::optimize;

    /// A desk-sized run driven entirely through the config layer.
    fn tiny_run() -> (RunConfig, RunHistory) {
        let text = "preset = \"example1\"\n\
                    [mesh]\nn_per_side = 16\ndegree = 1\n\
                    [problem]\ng0 = \"x1^2 + x2^2 - 1.44\"\n\
                    [algorithm]\nmax_pow = 6\nmax_iter = 1\n";
        let config = RunConfig::from_toml(text).unwrap();
        let built = config.build().unwrap();
        let history =
            optimize(&built.space, &built.problem, &built.params, &built.g0, &built.u0).unwrap();
        (config, history)
    }

    #[test]
    fn validation_re_solves_every_stored_iterate() {
        let dir = std::env::temp_dir().join(format!("hamshape-validate-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);

        // Contour-tracking run: the report carries one boundary-style row
        // per stored iterate.
        let (config, history) = tiny_run();
        write_run_artifacts(&dir, &config, &history).unwrap();
        let report = validate_run_directory(&dir).unwrap();
        assert_eq!(report.style, "boundary");
        assert_eq!(report.rows.len(), history.states.len());
        for (i, row) in report.rows.iter().enumerate() {
            assert_eq!(row.k, i);
            assert!(row.cost.is_finite() && row.cost >= 0.0, "row {i}: {row:?}");
            assert!(row.triangles > 0);
        }
        assert!(report.argmin < report.rows.len());

        // Disk-tracking run: region-style rows.
        let text = "preset = \"example2\"\n\
                    [mesh]\nn_per_side = 24\ndegree = 1\n\
                    [algorithm]\nmax_pow = 6\nmax_iter = 1\n";
        let config = RunConfig::from_toml(text).unwrap();
        let built = config.build().unwrap();
        let history =
            optimize(&built.space, &built.problem, &built.params, &built.g0, &built.u0).unwrap();
        let dir2 = dir.join("region-style");
        write_run_artifacts(&dir2, &config, &history).unwrap();
        let report = validate_run_directory(&dir2).unwrap();
        assert_eq!(report.style, "region");
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].cost.is_finite() && report.rows[0].cost >= 0.0);

        // A directory with a config but no dumps is rejected, as is one
        // with nothing at all.
        let bare = dir.join("bare");
        std::fs::create_dir_all(&bare).unwrap();
        std::fs::write(bare.join("config.toml"), toml::to_string_pretty(&config).unwrap())
            .unwrap();
        assert!(matches!(
            validate_run_directory(&bare),
            Err(ExportError::Malformed(m)) if m.contains("no stored iterates")
        ));
        let empty = dir.join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        assert!(matches!(validate_run_directory(&empty), Err(ExportError::Config(_))));

        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn artifacts_are_complete_and_reruns_are_byte_identical() {
        let dir = std::env::temp_dir().join(format!("hamshape-export-{}", std::process::id()));
        let (config, history) = tiny_run();
        let files = write_run_artifacts(&dir, &config, &history).unwrap();
        assert!(files.iter().all(|p| p.exists()));
        // Per state: three fields, one plot, one table per traced component.
        let per_state: usize =
            history.states.iter().map(|s| 4 + s.traces.len()).sum();
        assert_eq!(files.len(), 3 + per_state);

        let first: Vec<Vec<u8>> =
            files.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let (config2, history2) = tiny_run();
        let files2 = write_run_artifacts(&dir, &config2, &history2).unwrap();
        assert_eq!(files, files2);
        for (path, bytes) in files2.iter().zip(&first) {
            assert_eq!(&std::fs::read(path).unwrap(), bytes, "{path:?} changed across reruns");
        }
        std::fs::remove_dir_all(&dir).unwrap();

        // The table interleaves one row per iterate with its candidates.
        let table = iterations_csv(&history);
        let rows: Vec<&str> = table.lines().collect();
        let candidates: usize =
            history.iterations.iter().map(|it| it.candidates.len()).sum();
        assert_eq!(rows[0], "k,sub_step,t1,t2,t3,J,lambda,accepted");
        assert_eq!(rows.len(), 1 + history.states.len() + candidates);
        assert!(rows[1].starts_with("0,-1,") && rows[1].ends_with(",1"));
        for row in &rows[1..] {
            assert_eq!(row.matches(',').count(), 7);
        }
        let accepted_rows = rows.iter().filter(|r| r.ends_with(",1")).count();
        assert_eq!(accepted_rows, history.states.len() + history.states.len() - 1);
    }

    #[test]
    fn field_dumps_reload_bit_for_bit() {
        let (_, history) = tiny_run();
        let state = history.states.last().unwrap();
        let g = state.g.fe_field().unwrap();
        for field in [g, &state.u, &state.y] {
            let parsed = parse_field_csv(&field.space, &field_csv(field)).unwrap();
            assert_eq!(parsed.coeffs, field.coeffs);
        }
        // A truncated dump and a wrong-space dump are both rejected.
        let dump = field_csv(g);
        let truncated: String =
            dump.lines().take(g.coeffs.len() / 2).collect::<Vec<_>>().join("\n");
        assert!(parse_field_csv(&g.space, &truncated).is_err());
        let coarse = crate::geometry::FeSpace::new(
            g.space.mesh.clone(),
            crate::geometry::Degree::P2,
        );
        assert!(parse_field_csv(&coarse, &dump).is_err());
    }

    #[test]
    fn summaries_and_plots_describe_every_iterate() {
        let (_, history) = tiny_run();
        let summary: serde_json::Value =
            serde_json::from_str(&summary_json(&history)).unwrap();
        assert_eq!(
            summary["iterations"].as_u64().unwrap() as usize,
            history.states.len() - 1
        );
        assert_eq!(
            summary["per_iteration"].as_array().unwrap().len(),
            history.states.len()
        );
        assert_eq!(
            summary["final_cost"]["total"].as_f64().unwrap(),
            history.final_cost().total
        );
        assert!(summary["stop_reason"].is_object() || summary["stop_reason"].is_string());

        let bounds = Rect::centered_square(3.0);
        let state = &history.states[0];
        let svg = domain_svg(bounds, state, Some((Vec2::ZERO, 0.5)));
        assert_eq!(svg.matches("<polyline").count(), state.traces.len());
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(domain_svg(bounds, state, None).matches("<circle").count() == 0);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
