//! Run configuration: a sectioned key-value file (TOML) with defaults for
//! every knob, validated at load with errors naming the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elliptic::SolverParams;
use crate::grid::GridSpec;
use crate::problems::{NamedProblem, ProblemTuning};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// Built-in problem name.
    pub name: String,
    pub n: usize,
    pub a: f64,
    pub half_width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub grading: f64,
    pub periodic_x: bool,
    /// Prototype amplitude c.
    pub amplitude: f64,
    /// Direction angle for tilted-prototype, degrees from the first axis.
    pub tilt_degrees: f64,
    /// Obstacle height for the constant problem.
    pub obstacle_level: f64,
    /// Forcing magnitude for constant and driven-F.
    pub forcing: f64,
    /// Time horizon for parabolic problems.
    pub horizon: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            name: "prototype".into(),
            n: 1,
            a: 0.0,
            half_width: 1.0,
            height: 1.0,
            nx: 129,
            ny: 65,
            grading: 2.0,
            periodic_x: false,
            amplitude: 1.0,
            tilt_degrees: 20.0,
            obstacle_level: -0.25,
            forcing: 2.0,
            horizon: 0.4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub epsilon_schedule: Vec<f64>,
    /// Time steps for parabolic marches.
    pub nt: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverParams::default();
        SolverSection {
            tol: d.tol,
            max_iter: d.max_iter,
            omega: d.omega,
            epsilon_schedule: d.epsilon_schedule,
            nt: 32,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Truncation exponent for the compensated frequency.
    pub delta: f64,
    /// Parabolic truncation exponent.
    pub sigma: f64,
    /// Parabolic frequency cap parameter.
    pub ell: f64,
    /// Compensation constant for monotonicity.
    pub c_mono: f64,
    /// Rung count for radius ladders.
    pub radii_count: usize,
    /// Acceptance half-width around the regular frequency.
    pub class_tol: f64,
    /// Analysis center on the thin set.
    pub center: [f64; 2],
    /// Sample count for the epiperimetric check.
    pub epi_count: usize,
    /// Perturbation amplitude for the epiperimetric check.
    pub epi_theta: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            delta: 0.75,
            sigma: 0.5,
            ell: 4.0,
            c_mono: 0.05,
            radii_count: 12,
            class_tol: 0.25,
            center: [0.0, 0.0],
            epi_count: 20,
            epi_theta: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    /// Subset of {"csv", "json", "snapshot"}.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: "out".into(),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

fn bad(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| bad("config", e.message().lines().next().unwrap_or("parse error")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        self.named_problem()?;
        if !(p.n == 1 || p.n == 2) {
            return Err(bad("problem.n", format!("thin dimension must be 1 or 2, got {}", p.n)));
        }
        if !(p.a > -1.0 && p.a < 1.0) {
            return Err(bad("problem.a", format!("weight exponent must lie in (-1, 1), got {}", p.a)));
        }
        if !(p.half_width > 0.0 && p.half_width.is_finite()) {
            return Err(bad("problem.half_width", "must be positive"));
        }
        if !(p.height > 0.0 && p.height.is_finite()) {
            return Err(bad("problem.height", "must be positive"));
        }
        if p.nx < 3 {
            return Err(bad("problem.nx", format!("need at least 3 nodes per axis, got {}", p.nx)));
        }
        if p.ny < 3 {
            return Err(bad("problem.ny", format!("need at least 3 vertical nodes, got {}", p.ny)));
        }
        if !(p.grading >= 1.0 && p.grading.is_finite()) {
            return Err(bad("problem.grading", format!("grading exponent must be >= 1, got {}", p.grading)));
        }
        if !(p.horizon > 0.0 && p.horizon.is_finite()) {
            return Err(bad("problem.horizon", "must be positive"));
        }
        self.tuning().validate()?;

        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(bad("solver.tol", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be at least 1"));
        }
        if !(s.omega > 0.0 && s.omega < 2.0) {
            return Err(bad("solver.omega", format!("relaxation factor must lie in (0, 2), got {}", s.omega)));
        }
        if s.epsilon_schedule.is_empty() {
            return Err(bad("solver.epsilon_schedule", "needs at least one epsilon"));
        }
        for w in s.epsilon_schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(bad("solver.epsilon_schedule", "must be strictly decreasing"));
            }
        }
        if !(*s.epsilon_schedule.last().unwrap() > 0.0) {
            return Err(bad("solver.epsilon_schedule", "all entries must be positive"));
        }
        if s.nt < 2 {
            return Err(bad("solver.nt", format!("need at least 2 time steps, got {}", s.nt)));
        }

        let an = &self.analysis;
        let dmin = (1.0 - p.a) / 2.0;
        if !(an.delta > dmin && an.delta < 1.0) {
            return Err(bad(
                "analysis.delta",
                format!("truncation exponent must lie in ((1-a)/2, 1) = ({dmin}, 1), got {}", an.delta),
            ));
        }
        if !(an.sigma > 0.0 && an.sigma < 1.0) {
            return Err(bad("analysis.sigma", format!("must lie in (0, 1), got {}", an.sigma)));
        }
        if !(an.ell >= 4.0) {
            return Err(bad("analysis.ell", format!("cap parameter must be at least 4, got {}", an.ell)));
        }
        if !(an.c_mono >= 0.0 && an.c_mono.is_finite()) {
            return Err(bad("analysis.c_mono", "must be finite and nonnegative"));
        }
        if an.radii_count < 2 {
            return Err(bad("analysis.radii_count", format!("need at least 2 rungs, got {}", an.radii_count)));
        }
        if !(an.class_tol > 0.0) {
            return Err(bad("analysis.class_tol", "must be positive"));
        }
        if !an.center.iter().all(|c| c.is_finite() && c.abs() < p.half_width) {
            return Err(bad("analysis.center", "must lie strictly inside the thin box"));
        }
        if an.epi_count == 0 {
            return Err(bad("analysis.epi_count", "need at least one sample"));
        }
        if !(an.epi_theta >= 0.0 && an.epi_theta.is_finite()) {
            return Err(bad("analysis.epi_theta", "must be finite and nonnegative"));
        }

        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "json" | "snapshot") {
                return Err(bad("output.formats", format!("unknown format {f:?} (expected csv, json, or snapshot)")));
            }
        }
        Ok(())
    }

    pub fn named_problem(&self) -> Result<NamedProblem> {
        self.problem
            .name
            .parse::<NamedProblem>()
            .map_err(|_| bad("problem.name", format!("unknown problem {:?}", self.problem.name)))
    }

    pub fn grid_spec(&self) -> GridSpec {
        let p = &self.problem;
        GridSpec {
            n: p.n,
            a: p.a,
            half_width: p.half_width,
            height: p.height,
            nx: p.nx,
            ny: p.ny,
            grading: p.grading,
            periodic_x: p.periodic_x,
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        let s = &self.solver;
        SolverParams {
            tol: s.tol,
            max_iter: s.max_iter,
            omega: s.omega,
            epsilon_schedule: s.epsilon_schedule.clone(),
            record_energy: false,
        }
    }

    pub fn tuning(&self) -> ProblemTuning {
        let p = &self.problem;
        ProblemTuning {
            amplitude: p.amplitude,
            tilt_degrees: p.tilt_degrees,
            obstacle_level: p.obstacle_level,
            forcing: p.forcing,
            horizon: p.horizon,
        }
    }

    /// Canonical serialized form used for hashing into the manifest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.to_toml().into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = Config::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg = Config::parse("[problem]\nname = \"constant\"\na = -0.4\n").unwrap();
        assert_eq!(cfg.problem.name, "constant");
        assert_eq!(cfg.problem.a, -0.4);
        assert_eq!(cfg.problem.nx, 129);
        assert_eq!(cfg.solver.nt, 32);
    }

    #[test]
    fn violations_name_the_offending_field() {
        let cases = [
            ("[problem]\na = 1.5\n", "problem.a"),
            ("[problem]\nname = \"vortex\"\n", "problem.name"),
            ("[problem]\nn = 3\n", "problem.n"),
            ("[problem]\na = -0.5\n[analysis]\ndelta = 0.6\n", "analysis.delta"),
            ("[solver]\nomega = 2.5\n", "solver.omega"),
            ("[solver]\nepsilon_schedule = [1e-2, 1e-2]\n", "solver.epsilon_schedule"),
            ("[analysis]\nell = 2\n", "analysis.ell"),
            ("[analysis]\ncenter = [5.0, 0.0]\n", "analysis.center"),
            ("[output]\nformats = [\"xml\"]\n", "output.formats"),
        ];
        for (text, field) in cases {
            match Config::parse(text) {
                Err(Error::Config { field: f, .. }) => {
                    assert_eq!(f, field, "wrong field for {text:?}");
                }
                other => panic!("{text:?} should fail on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("[problem]\nnx_typo = 65\n");
        assert!(matches!(err, Err(Error::Config { .. })), "{err:?}");
    }

    #[test]
    fn delta_default_is_admissible_across_the_weight_range() {
        for a in [-0.45, 0.0, 0.5, 0.9] {
            let mut cfg = Config::default();
            cfg.problem.a = a;
            assert!(cfg.validate().is_ok(), "default delta rejected for a = {a}");
        }
    }
}
