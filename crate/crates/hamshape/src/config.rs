//! Run configuration: a TOML description of a complete optimization run and
//! the machinery that turns it into solver-ready objects.
//!
//! A [`RunConfig`] captures the fixed box and its discretization, the problem
//! data (right-hand side, flux data, tracking targets, observation region,
//! penalty weight), the algorithm knobs, and the output settings. All scalar
//! data are analytic expressions in `x1`/`x2` using the level-set expression
//! grammar, so a config file is self-contained and runs are reproducible from
//! the file alone.
//!
//! Two presets, `example1` (boundary tracking on a ring-with-hole start) and
//! `example2` (region tracking with a pinned observation disk), are embedded.
//! A config file may name one via a top-level `preset` key and override any
//! subset of keys; the file's keys are deep-merged over the preset's values.
//!
//! [`RunConfig::validate`] rejects bad data — non-positive penalty weight,
//! a step ratio outside `(0, 1)`, malformed expressions, a region outside
//! the box — before anything is assembled, and [`RunConfig::build`] produces
//! the space, problem, parameters, and initial design/control pair for
//! [`crate::optimizer::optimize`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostFunctions, Tracking};
use crate::geometry::{Degree, FeSpace, Mesh, Rect, ScalarField};
use crate::levelset::region::ObservationRegion;
use crate::levelset::{LevelSet, LevelSetError};
use crate::optimizer::{DirectionVariant, OptimizeParams, Problem};
use crate::pde::{NeumannData, SourceData};
use crate::vec2::Vec2;

/// Why a config could not be loaded, validated, or built.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("config encoding: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("unknown preset `{0}`; available presets: example1, example2")]
    UnknownPreset(String),
    #[error("{field}: {source}")]
    Expression { field: &'static str, source: LevelSetError },
    #[error("{0}")]
    Invalid(String),
}

/// Complete description of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// The fixed box and its structured triangulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Vertex intervals per side of the box.
    pub n_per_side: usize,
    /// Lagrange degree: 1 or 2.
    pub degree: u8,
}

/// Problem data; every scalar field is an expression in `x1` and `x2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Flux-penalty weight; the cost charges the squared flux mismatch by
    /// `1/epsilon`. Must be positive.
    pub epsilon: f64,
    /// Right-hand side of the governing equation.
    pub f: String,
    /// Prescribed flux data on the free boundary.
    pub delta: String,
    /// Initial design; its zero curve is the starting boundary.
    pub g0: String,
    /// Initial boundary control.
    pub u0: String,
    /// Target for quadratic tracking along the free boundary; absent means
    /// no boundary tracking term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_tracking: Option<String>,
    /// Target for quadratic tracking over the observation region; absent
    /// means no region tracking term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_tracking: Option<String>,
    /// Observation disk; required by `region_tracking` and `g_e`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<DiskSection>,
    /// Design values pinned on the region's dofs after every update, keeping
    /// the region inside the domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_e: Option<String>,
}

/// A disk given by center and radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskSection {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Descent-loop knobs; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    /// Direction variant: `"i"` (pointwise product) or `"ii"` (smoothed).
    pub variant: String,
    /// Stop when an accepted step decreases the cost by less than this.
    pub tol: f64,
    /// Geometric ratio of the line-search grid.
    pub rho: f64,
    /// Number of step candidates per search.
    pub max_pow: usize,
    /// Cap on accepted updates.
    pub max_iter: usize,
}

impl Default for AlgorithmSection {
    /// Matches [`OptimizeParams::new`]: smoothed variant, `tol = 1e-6`,
    /// grid `0.8^i` for `i < 30`, at most 50 updates.
    fn default() -> AlgorithmSection {
        AlgorithmSection { variant: "ii".into(), tol: 1e-6, rho: 0.8, max_pow: 30, max_iter: 50 }
    }
}

/// Where artifacts go and the seed recorded with them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Seed for any randomized diagnostics run alongside the optimization;
    /// the descent loop itself is deterministic.
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> OutputSection {
        OutputSection { directory: PathBuf::from("out"), seed: 0 }
    }
}

/// Solver-ready objects materialized from a validated config.
pub struct BuiltRun {
    pub space: Arc<FeSpace>,
    pub problem: Problem,
    pub params: OptimizeParams,
    pub g0: LevelSet,
    pub u0: ScalarField,
}

/// Deep-merges `over` into `base`: tables merge key by key, everything else
/// is replaced.
fn merge_toml(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge_toml(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// Parses an expression, tagging errors with the config field they came from.
fn expr(field: &'static str, src: &str) -> Result<LevelSet, ConfigError> {
    LevelSet::from_expr(src).map_err(|source| ConfigError::Expression { field, source })
}

impl RunConfig {
    /// Returns the named embedded preset.
    pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
        match name {
            "example1" => Ok(Self::example1()),
            "example2" => Ok(Self::example2()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    /// Boundary tracking of the target `x1^2 + x2^2 - 1` with flux data 2 on
    /// a ring-with-hole start and zero initial control; no observation
    /// region.
    pub fn example1() -> RunConfig {
        RunConfig {
            mesh: MeshSection {
                x_min: -3.0,
                x_max: 3.0,
                y_min: -3.0,
                y_max: 3.0,
                n_per_side: 96,
                degree: 2,
            },
            problem: ProblemSection {
                epsilon: 0.5,
                f: "x1^2 + x2^2 - 5".into(),
                delta: "2".into(),
                g0: "max(x1^2 + x2^2 - 2.5^2, -(x1+1)^2 - (x2+1)^2 + 0.5^2)".into(),
                u0: "0".into(),
                boundary_tracking: Some("x1^2 + x2^2 - 1".into()),
                region_tracking: None,
                region: None,
                g_e: None,
            },
            algorithm: AlgorithmSection::default(),
            output: OutputSection { directory: PathBuf::from("out/example1"), seed: 0 },
        }
    }

    /// Region tracking of the same target over a pinned disk of radius 0.5
    /// at the origin, from an off-center ring start with unit initial
    /// control.
    pub fn example2() -> RunConfig {
        RunConfig {
            mesh: MeshSection {
                x_min: -3.0,
                x_max: 3.0,
                y_min: -3.0,
                y_max: 3.0,
                n_per_side: 96,
                degree: 2,
            },
            problem: ProblemSection {
                epsilon: 0.9,
                f: "x1^2 + x2^2 - 5".into(),
                delta: "2".into(),
                g0: "max((x1+0.8)^2 + (x2+0.8)^2 - 1.8^2, -(x1+0.8)^2 - (x2+0.8)^2 + 0.6^2)"
                    .into(),
                u0: "1".into(),
                boundary_tracking: None,
                region_tracking: Some("x1^2 + x2^2 - 1".into()),
                region: Some(DiskSection { center: [0.0, 0.0], radius: 0.5 }),
                g_e: Some("x1^2 + x2^2 - 0.5^2".into()),
            },
            algorithm: AlgorithmSection::default(),
            output: OutputSection { directory: PathBuf::from("out/example2"), seed: 0 },
        }
    }

    /// Parses a config document. A top-level `preset = "name"` key starts
    /// from that preset and deep-merges the document's remaining keys over
    /// it; otherwise the document must be complete. The result is validated.
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let parsed: toml::Value = toml::from_str(text)?;
        let merged = match parsed.get("preset") {
            Some(name) => {
                let name = name
                    .as_str()
                    .ok_or_else(|| ConfigError::Invalid("preset must be a string".into()))?;
                let mut base = toml::Value::try_from(Self::preset(name)?)?;
                let mut over = parsed.clone();
                if let Some(table) = over.as_table_mut() {
                    table.remove("preset");
                }
                merge_toml(&mut base, over);
                base
            }
            None => parsed,
        };
        let config: RunConfig = merged.try_into()?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and parses a config file; see [`RunConfig::from_toml`].
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Checks every field before anything is assembled or solved.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));

        let m = &self.mesh;
        if !(m.x_min.is_finite() && m.x_max.is_finite() && m.x_min < m.x_max) {
            return bad(format!("mesh: need x_min < x_max, got [{}, {}]", m.x_min, m.x_max));
        }
        if !(m.y_min.is_finite() && m.y_max.is_finite() && m.y_min < m.y_max) {
            return bad(format!("mesh: need y_min < y_max, got [{}, {}]", m.y_min, m.y_max));
        }
        if m.n_per_side < 2 {
            return bad(format!("mesh.n_per_side: need at least 2, got {}", m.n_per_side));
        }
        if !matches!(m.degree, 1 | 2) {
            return bad(format!("mesh.degree: must be 1 or 2, got {}", m.degree));
        }

        let p = &self.problem;
        if !(p.epsilon.is_finite() && p.epsilon > 0.0) {
            return bad(format!("problem.epsilon: must be positive, got {}", p.epsilon));
        }
        expr("problem.f", &p.f)?;
        expr("problem.delta", &p.delta)?;
        expr("problem.g0", &p.g0)?;
        expr("problem.u0", &p.u0)?;
        if let Some(src) = &p.boundary_tracking {
            expr("problem.boundary_tracking", src)?;
        }
        if let Some(src) = &p.region_tracking {
            expr("problem.region_tracking", src)?;
        }
        if let Some(src) = &p.g_e {
            expr("problem.g_e", src)?;
        }
        if let Some(disk) = &p.region {
            if !(disk.radius.is_finite() && disk.radius > 0.0) {
                return bad(format!("problem.region.radius: must be positive, got {}", disk.radius));
            }
            let [cx, cy] = disk.center;
            let inside = cx - disk.radius >= m.x_min
                && cx + disk.radius <= m.x_max
                && cy - disk.radius >= m.y_min
                && cy + disk.radius <= m.y_max;
            if !(cx.is_finite() && cy.is_finite() && inside) {
                return bad(format!(
                    "problem.region: disk at ({cx}, {cy}) with radius {} leaves the box",
                    disk.radius
                ));
            }
        } else {
            if p.region_tracking.is_some() {
                return bad("problem.region_tracking needs problem.region".into());
            }
            if p.g_e.is_some() {
                return bad("problem.g_e needs problem.region".into());
            }
        }

        let a = &self.algorithm;
        if !matches!(a.variant.as_str(), "i" | "ii") {
            return bad(format!("algorithm.variant: must be \"i\" or \"ii\", got {:?}", a.variant));
        }
        if !(a.tol.is_finite() && a.tol > 0.0) {
            return bad(format!("algorithm.tol: must be positive, got {}", a.tol));
        }
        if !(a.rho.is_finite() && 0.0 < a.rho && a.rho < 1.0) {
            return bad(format!("algorithm.rho: must lie in (0, 1), got {}", a.rho));
        }
        if a.max_pow == 0 {
            return bad("algorithm.max_pow: must be at least 1".into());
        }
        if a.max_iter == 0 {
            return bad("algorithm.max_iter: must be at least 1".into());
        }
        Ok(())
    }

    /// Materializes the space, problem, parameters, and initial pair.
    pub fn build(&self) -> Result<BuiltRun, ConfigError> {
        self.validate()?;
        let m = &self.mesh;
        let bounds = Rect::new(m.x_min, m.x_max, m.y_min, m.y_max);
        let mesh = Mesh::rectangle(bounds, m.n_per_side)
            .map_err(|e| ConfigError::Invalid(format!("mesh: {e}")))?;
        let degree = if m.degree == 1 { Degree::P1 } else { Degree::P2 };
        let space = FeSpace::new(Arc::new(mesh), degree);

        let p = &self.problem;
        let f_ls = expr("problem.f", &p.f)?;
        let f = SourceData::new(move |x| f_ls.value(x));
        let delta = NeumannData::new(expr("problem.delta", &p.delta)?);
        let boundary = match &p.boundary_tracking {
            Some(src) => Tracking::quadratic(expr("problem.boundary_tracking", src)?),
            None => Tracking::Zero,
        };
        let region_tracking = match &p.region_tracking {
            Some(src) => Tracking::quadratic(expr("problem.region_tracking", src)?),
            None => Tracking::Zero,
        };
        let region = match &p.region {
            Some(disk) => {
                ObservationRegion::disk(Vec2::new(disk.center[0], disk.center[1]), disk.radius)
            }
            None => ObservationRegion::empty(),
        };
        let projection = match &p.g_e {
            Some(src) => Some(expr("problem.g_e", src)?),
            None => None,
        };
        let problem = Problem {
            f,
            delta,
            cost: CostFunctions { region: region_tracking, boundary },
            region,
            epsilon: p.epsilon,
            projection,
        };

        let a = &self.algorithm;
        let mut params = OptimizeParams::new(space.mesh.h());
        params.variant =
            a.variant.parse().map_err(|e: String| ConfigError::Invalid(format!("variant: {e}")))?;
        params.tol = a.tol;
        params.rho = a.rho;
        params.max_pow = a.max_pow;
        params.max_iter = a.max_iter;

        let g0 = expr("problem.g0", &p.g0)?;
        let u0_ls = expr("problem.u0", &p.u0)?;
        let u0 = ScalarField::interpolate(space.clone(), |x| u0_ls.value(x));
        Ok(BuiltRun { space, problem, params, g0, u0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_build() {
        let one = RunConfig::example1();
        one.validate().unwrap();
        let built = one.build().unwrap();
        assert_eq!(built.space.dof_coords.len(), 193 * 193);
        assert!(built.problem.cost.region.is_zero());
        assert!(!built.problem.cost.boundary.is_zero());
        assert!(built.problem.projection.is_none());
        assert_eq!(built.params.variant, DirectionVariant::Smoothed);
        assert_eq!(built.problem.epsilon, 0.5);
        assert!(built.u0.coeffs.iter().all(|&c| c == 0.0));

        let two = RunConfig::example2();
        two.validate().unwrap();
        let built = two.build().unwrap();
        assert!(!built.problem.cost.region.is_zero());
        assert!(built.problem.cost.boundary.is_zero());
        assert!(built.problem.projection.is_some());
        assert_eq!(built.problem.epsilon, 0.9);
        assert!(built.u0.coeffs.iter().all(|&c| c == 1.0));
        // The pinned values keep the observation disk strictly inside the
        // domain: negative at its center.
        let g_e = built.problem.projection.unwrap();
        assert!(g_e.value(Vec2::ZERO) < 0.0);
    }

    #[test]
    fn preset_merge_overrides_only_the_named_keys() {
        let text = "preset = \"example1\"\n\n[problem]\nepsilon = 0.25\n\n[algorithm]\nmax_iter = 3\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.problem.epsilon, 0.25);
        assert_eq!(cfg.algorithm.max_iter, 3);
        // Everything not named stays at the preset's values.
        assert_eq!(cfg.algorithm.rho, 0.8);
        assert_eq!(cfg.mesh.n_per_side, 96);
        assert_eq!(cfg.problem.g0, RunConfig::example1().problem.g0);
        assert_eq!(cfg.output.directory, PathBuf::from("out/example1"));
    }

    #[test]
    fn full_configs_round_trip_through_toml() {
        for cfg in [RunConfig::example1(), RunConfig::example2()] {
            let text = toml::to_string(&cfg).unwrap();
            assert!(!text.contains("preset"));
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn validation_rejects_bad_values_before_any_build() {
        let mut zero_eps = RunConfig::example1();
        zero_eps.problem.epsilon = 0.0;
        let err = zero_eps.validate().unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");

        let mut flat_rho = RunConfig::example1();
        flat_rho.algorithm.rho = 1.0;
        assert!(flat_rho.validate().unwrap_err().to_string().contains("rho"));

        let mut cubic = RunConfig::example1();
        cubic.mesh.degree = 3;
        assert!(cubic.validate().unwrap_err().to_string().contains("degree"));

        let mut bad_variant = RunConfig::example1();
        bad_variant.algorithm.variant = "iii".into();
        assert!(bad_variant.validate().unwrap_err().to_string().contains("variant"));

        let mut bad_expr = RunConfig::example1();
        bad_expr.problem.g0 = "x3 + 1".into();
        let err = bad_expr.validate().unwrap_err().to_string();
        assert!(err.contains("problem.g0"), "{err}");

        let mut stray_pin = RunConfig::example1();
        stray_pin.problem.g_e = Some("x1".into());
        assert!(stray_pin.validate().unwrap_err().to_string().contains("g_e"));

        let mut leaky = RunConfig::example2();
        leaky.problem.region = Some(DiskSection { center: [2.9, 0.0], radius: 0.5 });
        assert!(leaky.validate().unwrap_err().to_string().contains("leaves the box"));
    }

    #[test]
    fn unknown_keys_and_presets_are_rejected() {
        let err = RunConfig::from_toml("preset = \"example3\"\n").unwrap_err().to_string();
        assert!(err.contains("example3") && err.contains("available"), "{err}");

        let mut text = toml::to_string(&RunConfig::example1()).unwrap();
        text.push_str("\n[algorithm]\nstep_ratio = 0.5\n");
        // Duplicate-table or unknown-key both surface as syntax errors.
        assert!(RunConfig::from_toml(&text).is_err());

        let err = RunConfig::from_toml("preset = \"example1\"\n[problem]\ntypo = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("typo"), "{err}");
    }
}
