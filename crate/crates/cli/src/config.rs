//! Run configuration: a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use steklov_core::spectral::MagneticOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub params: Params,
    pub task: Task,
    #[serde(default)]
    pub data: Option<DataSpec>,
    /// Number of Steklov / auxiliary eigenpairs; `"all"` by default.
    #[serde(default)]
    pub count: Count,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub converge: Option<ConvergeSpec>,
    #[serde(default)]
    pub debug: DebugSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Domain {
    Cube { n: usize, side: f64 },
    Ball { refinement: u32 },
    Gmsh { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub alpha: f64,
    pub theta: f64,
    #[serde(default)]
    pub eta: Eta,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eta {
    Value(f64),
    #[default]
    #[serde(with = "auto")]
    Auto,
}

mod auto {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("eta must be a number or \"auto\", got \"{s}\"")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Steklov,
    AuxSpectra,
    SolveNeumann,
    SolveDirichlet,
    Calderon,
    DualSolve,
    Deflate,
    Converge,
    SigmaCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Steklov => "steklov",
            Task::AuxSpectra => "aux-spectra",
            Task::SolveNeumann => "solve-neumann",
            Task::SolveDirichlet => "solve-dirichlet",
            Task::Calderon => "calderon",
            Task::DualSolve => "dual-solve",
            Task::Deflate => "deflate",
            Task::Converge => "converge",
            Task::SigmaCheck => "sigma-check",
        }
    }
}

/// Boundary data. Trace data for the solve and Calderón tasks; dual data
/// (coefficients) for `dual-solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// `u_n^Γ`, one-based.
    BasisIndex(usize),
    RotatedGradient { psi: String },
    /// CSV file: `vertex,fx,fy,fz` for trace data, `n,c` for dual data.
    Csv(PathBuf),
    /// Explicit coefficients `c_1, c_2, …` (dual data).
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    First(usize),
    #[default]
    #[serde(with = "all")]
    All,
}

mod all {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("all")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "all" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("count must be an integer or \"all\", got \"{s}\"")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Vtk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Number of leading modes exported as VTK fields.
    #[serde(default = "default_vtk_modes")]
    pub vtk_modes: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("steklov-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_vtk_modes() -> usize {
    4
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats(), vtk_modes: default_vtk_modes() }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Distance below which `sigma-check` reports a risk.
    pub sigma: f64,
    /// Relative width of multiplicity groups in reports.
    pub multiplicity: f64,
    pub magnetic: MagneticOptions,
    /// Dirichlet modes examined when building a deflation space.
    pub deflation_modes: usize,
    /// Seed of the random test fields used by the dual-solve pairing check.
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sigma: 1e-6,
            multiplicity: steklov_core::spectral::MULTIPLICITY_TOL,
            magnetic: MagneticOptions::default(),
            deflation_modes: 30,
            seed: 20_240_607,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    /// First Dirichlet eigenvalue.
    A1,
    /// Second Neumann-Laplacian eigenvalue.
    #[serde(rename = "lambdaN2")]
    LambdaN2,
    /// Largest Steklov eigenvalue.
    #[serde(rename = "lambda1")]
    Lambda1,
    /// `√(uᵀDu)/‖u‖` of the direct solution for rotated-gradient data.
    #[serde(rename = "div")]
    DivNorm,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::A1 => "A1",
            Quantity::LambdaN2 => "lambdaN2",
            Quantity::Lambda1 => "lambda1",
            Quantity::DivNorm => "div",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSpec {
    /// Cube subdivisions or ball refinement levels, coarse to fine.
    pub levels: Vec<u32>,
    pub quantities: Vec<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebugSpec {
    /// Writes K, D, M, B and the constraint basis as Matrix Market files.
    pub dump_matrices: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.params.theta > 0.0) || !self.params.theta.is_finite() {
            return bad(format!("theta must be positive, got {}", self.params.theta));
        }
        if !self.params.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if let Eta::Value(e) = self.params.eta {
            if !(e >= 0.0) || !e.is_finite() {
                return bad(format!("eta must be nonnegative, got {e}"));
            }
        }
        match &self.domain {
            Domain::Cube { n, side } if *n == 0 || !(*side > 0.0) => {
                return bad("cube needs n >= 1 and side > 0".into());
            }
            _ => {}
        }
        if let Count::First(0) = self.count {
            return bad("count must be positive".into());
        }
        let needs_data = matches!(
            self.task,
            Task::SolveNeumann | Task::SolveDirichlet | Task::Calderon | Task::DualSolve
        );
        if needs_data && self.data.is_none() {
            return bad(format!("task {} needs a data spec", self.task.name()));
        }
        if self.task == Task::DualSolve && matches!(self.data, Some(DataSpec::RotatedGradient { .. })) {
            return bad("dual-solve takes coefficient data (coefficients, basis_index or an n,c CSV)".into());
        }
        if let Some(DataSpec::BasisIndex(0)) = self.data {
            return bad("basis_index is one-based".into());
        }
        if let Some(DataSpec::RotatedGradient { psi }) = &self.data {
            crate::expr::parse_polynomial(psi).map_err(|e| ConfigError::Invalid(format!("psi: {e}")))?;
        }
        if self.task == Task::Converge {
            let Some(c) = &self.converge else {
                return bad("converge task needs a converge section".into());
            };
            if c.quantities.is_empty() {
                return bad("converge needs at least one quantity".into());
            }
            if let Domain::Gmsh { .. } = self.domain {
                return bad("converge needs a generated domain (cube or ball)".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::from_json(
            r#"{"domain": {"cube": {"n": 2, "side": 1.0}}, "params": {"alpha": -1, "theta": 1}, "task": "steklov"}"#,
        )
        .unwrap();
        assert_eq!(c.params.eta, Eta::Auto);
        assert_eq!(c.count, Count::All);
        assert_eq!(c.output.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn parses_full_config() {
        let c = RunConfig::from_json(
            r#"{"domain": {"ball": {"refinement": 1}}, "params": {"alpha": 0.5, "theta": 2, "eta": 4},
                "task": "solve-neumann", "data": {"rotated_gradient": {"psi": "x^2 - y"}}, "count": 12,
                "output": {"dir": "o", "formats": ["json", "vtk"]},
                "tolerances": {"sigma": 1e-3, "magnetic": {"theta_pen": 200}}}"#,
        )
        .unwrap();
        assert_eq!(c.params.eta, Eta::Value(4.0));
        assert_eq!(c.count, Count::First(12));
        assert_eq!(c.tolerances.magnetic.theta_pen, 200.0);
        assert_eq!(c.tolerances.magnetic.div_tol, 1e-3);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = |extra: &str| {
            format!(r#"{{"domain": {{"cube": {{"n": 2, "side": 1.0}}}}, "params": {{"alpha": -1, "theta": 1}}, {extra}}}"#)
        };
        for bad in [
            base(r#""task": "bogus""#),
            base(r#""task": "steklov", "eta": 1"#),
            base(r#""task": "solve-neumann""#),
            base(r#""task": "calderon", "data": {"rotated_gradient": {"psi": "x^5"}}"#),
            base(r#""task": "converge""#),
            r#"{"domain": {"cube": {"n": 2, "side": 1.0}, "ball": {"refinement": 1}}, "params": {"alpha": -1, "theta": 1}, "task": "steklov"}"#.to_string(),
            r#"{"domain": {"cube": {"n": 2, "side": 1.0}}, "params": {"alpha": -1, "theta": 0}, "task": "steklov"}"#.to_string(),
            r#"{"domain": {"cube": {"n": 2, "side": 1.0}}, "params": {"alpha": -1, "theta": 1, "eta": "later"}, "task": "steklov"}"#.to_string(),
        ] {
            assert!(RunConfig::from_json(&bad).is_err(), "accepted {bad}");
        }
    }
}
