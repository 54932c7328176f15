//! Run configuration documents (TOML, `schema_version = 1`).
//!
//! ```toml
//! schema_version = 1
//! kind = "linear"
//! alpha = 1.5
//!
//! [operator]
//! type = "dirichlet-laplacian"
//! length = 3.141592653589793
//! modes = 8
//!
//! [data]
//! u0 = { profile = "first-mode" }
//! u1 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
//!
//! [time]
//! t_end = 1.0
//! nodes = 128
//! grading = 1.0
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracwave_core::caputo_oracle::CaputoVariant;
use fracwave_core::linear_solver::{EstimateIndices, LinearProblem, Monomial, Source, DEFAULT_TOL};
use fracwave_core::rate_verifier::{Estimate, KernelInequality, RateMode};
use fracwave_core::semilinear_solver::{NonlinearitySpec, SemilinearConfig};
use fracwave_core::{Error, GridFunction, Result, SpectralGrid, TimeGrid};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Linear,
    Semilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    DirichletLaplacian {
        length: f64,
        modes: usize,
    },
    HarmonicOscillator {
        modes: usize,
    },
    SingleMode {
        eigenvalue: f64,
    },
    LogUniform {
        m_min: f64,
        m_max: f64,
        per_decade: usize,
    },
    /// Spectral-measure document, relative to the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NamedProfile {
    Zero,
    Ones,
    FirstMode {
        #[serde(default = "one")]
        amplitude: f64,
    },
    Mode {
        index: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude * m^exponent` on every mode.
    Power {
        exponent: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Per-mode coefficient list or a named profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataProfile {
    Values(Vec<f64>),
    Named(NamedProfile),
}

impl Default for DataProfile {
    fn default() -> Self {
        DataProfile::Named(NamedProfile::Zero)
    }
}

impl DataProfile {
    pub fn resolve(&self, grid: &Arc<SpectralGrid>, field: &str) -> Result<GridFunction> {
        let n = grid.len();
        let values = match self {
            DataProfile::Values(v) => {
                if v.len() != n {
                    return Err(Error::Configuration(format!(
                        "data.{field} has {} values but the operator has {n} modes",
                        v.len()
                    )));
                }
                v.clone()
            }
            DataProfile::Named(p) => match p {
                NamedProfile::Zero => vec![0.0; n],
                NamedProfile::Ones => vec![1.0; n],
                NamedProfile::FirstMode { amplitude } => {
                    let mut v = vec![0.0; n];
                    v[0] = *amplitude;
                    v
                }
                NamedProfile::Mode { index, amplitude } => {
                    if *index >= n {
                        return Err(Error::Configuration(format!(
                            "data.{field}: mode index {index} out of range (operator has {n} modes)"
                        )));
                    }
                    let mut v = vec![0.0; n];
                    v[*index] = *amplitude;
                    v
                }
                NamedProfile::Power { exponent, amplitude } => grid
                    .eigenvalues()
                    .iter()
                    .map(|m| amplitude * m.powf(*exponent))
                    .collect(),
            },
        };
        GridFunction::new(grid, values).map_err(|e| Error::Configuration(format!("data.{field}: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub u0: DataProfile,
    #[serde(default)]
    pub u1: DataProfile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    #[default]
    Zero,
    /// `sum c t^p`, the same on every mode; `terms = [[c, p], ...]`.
    Monomials { terms: Vec<(f64, f64)> },
    /// Source making `u = 1 + t^2` on every mode (with `u0 = 1`, `u1 = 0`).
    ManufacturedQuadratic,
}

impl SourceSpec {
    pub fn resolve(&self, grid: &SpectralGrid, alpha: f64) -> Result<Source> {
        Ok(match self {
            SourceSpec::Zero => Source::Zero,
            SourceSpec::Monomials { terms } => {
                let terms = terms
                    .iter()
                    .map(|(c, p)| Monomial::new(*c, *p))
                    .collect::<Result<Vec<_>>>()?;
                Source::uniform_closed_form(grid.len(), &terms)
            }
            SourceSpec::ManufacturedQuadratic => Source::manufactured_quadratic(grid, alpha),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    pub nodes: usize,
    /// Grading exponent `r` of `t_j = T (j/N)^r`; defaults to `max(1, 2/(alpha/2))`.
    pub grading: Option<f64>,
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            t_end: 1.0,
            nodes: 128,
            grading: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSpec {
    pub ml_tol: f64,
    pub second_derivative: bool,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            ml_tol: DEFAULT_TOL,
            second_derivative: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateInstances {
    /// Built-in equality instances, one per estimate and alpha.
    #[default]
    Equality,
    /// The configured problem.
    Problem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    #[serde(default)]
    pub instances: RateInstances,
    #[serde(default = "all_estimates")]
    pub estimates: Vec<Estimate>,
    /// Equality instances only; defaults to the top-level alpha.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: Option<RateMode>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    /// Overrides each estimate's default indices.
    #[serde(default)]
    pub indices: Option<EstimateIndices>,
}

fn all_estimates() -> Vec<Estimate> {
    Estimate::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualSpec {
    pub h: f64,
    pub t_end: Option<f64>,
    pub variant: CaputoVariant,
    pub threshold: f64,
    pub window: Option<(f64, f64)>,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        ResidualSpec {
            h: 5e-4,
            t_end: None,
            variant: CaputoVariant::default(),
            threshold: 2e-3,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSpec {
    pub sigma: f64,
    pub beta_ic: f64,
    pub gamma_tilde: f64,
    #[serde(default = "default_ic_tol")]
    pub ic_tol: f64,
    /// Expected approach rate of `||u(t) - u0||_{V_sigma}`.
    #[serde(default)]
    pub expected_rate: Option<f64>,
    #[serde(default = "default_rate_tol")]
    pub rate_tol: f64,
}

fn default_ic_tol() -> f64 {
    0.1
}

fn default_rate_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelIneqSpec {
    pub alpha: Option<f64>,
    pub alpha_prime: f64,
    pub inequality: KernelInequality,
    #[serde(default = "default_lam_range")]
    pub lam_range: (f64, f64),
    #[serde(default = "default_t_range")]
    pub t_range: (f64, f64),
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_refine")]
    pub refine: usize,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_lam_range() -> (f64, f64) {
    (1e-2, 1e4)
}

fn default_t_range() -> (f64, f64) {
    (1e-3, 10.0)
}

fn default_samples() -> usize {
    40
}

fn default_refine() -> usize {
    10
}

fn default_cap() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<ProblemKind>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub nonlinearity: Option<NonlinearitySpec>,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub semilinear: SemilinearConfig,
    #[serde(default)]
    pub rates: Option<RatesSpec>,
    #[serde(default)]
    pub residual: Option<ResidualSpec>,
    #[serde(default)]
    pub ic: Option<IcSpec>,
    #[serde(default)]
    pub kernel_ineq: Option<KernelIneqSpec>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Problem data resolved against the operator.
#[derive(Debug)]
pub struct ResolvedProblem {
    pub grid: Arc<SpectralGrid>,
    pub alpha: f64,
    pub u0: GridFunction,
    pub u1: GridFunction,
    pub time: TimeGrid,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Configuration(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Resolved configuration echoed into artifacts.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    pub fn alpha(&self) -> Result<f64> {
        let a = self
            .alpha
            .ok_or_else(|| Error::Configuration("field 'alpha' is required".into()))?;
        if !(a > 1.0 && a < 2.0) {
            return Err(Error::Configuration(format!(
                "field 'alpha' must lie in (1, 2), got {a}"
            )));
        }
        Ok(a)
    }

    pub fn grid(&self) -> Result<Arc<SpectralGrid>> {
        let op = self
            .operator
            .as_ref()
            .ok_or_else(|| Error::Configuration("section [operator] is required".into()))?;
        let g = match op {
            OperatorSpec::DirichletLaplacian { length, modes } => SpectralGrid::dirichlet_laplacian(*length, *modes),
            OperatorSpec::HarmonicOscillator { modes } => SpectralGrid::harmonic_oscillator(*modes),
            OperatorSpec::SingleMode { eigenvalue } => SpectralGrid::single_mode(*eigenvalue),
            OperatorSpec::LogUniform {
                m_min,
                m_max,
                per_decade,
            } => SpectralGrid::log_uniform(*m_min, *m_max, *per_decade),
            OperatorSpec::File { path } => {
                let full = self.base_dir.join(path);
                if !full.exists() {
                    return Err(Error::Configuration(format!(
                        "operator file {} does not exist",
                        full.display()
                    )));
                }
                SpectralGrid::load(&full)
            }
        }
        .map_err(|e| Error::Configuration(format!("[operator]: {e}")))?;
        Ok(Arc::new(g))
    }

    pub fn resolve(&self) -> Result<ResolvedProblem> {
        let alpha = self.alpha()?;
        let grid = self.grid()?;
        let u0 = self.data.u0.resolve(&grid, "u0")?;
        let u1 = self.data.u1.resolve(&grid, "u1")?;
        let r = self
            .time
            .grading
            .unwrap_or_else(|| TimeGrid::default_grading(alpha, 0.5));
        let time = TimeGrid::graded(self.time.t_end, self.time.nodes, r)
            .map_err(|e| Error::Configuration(format!("[time]: {e}")))?;
        Ok(ResolvedProblem {
            grid,
            alpha,
            u0,
            u1,
            time,
        })
    }

    pub fn linear_problem(&self, r: &ResolvedProblem) -> Result<LinearProblem> {
        let source = self.source.resolve(&r.grid, r.alpha)?;
        LinearProblem::new(Arc::clone(&r.grid), r.alpha, r.u0.clone(), r.u1.clone(), source)
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.as_ref().map(|p| self.base_dir.join(p)))
            .unwrap_or_else(|| PathBuf::from("fracwave-out"))
    }
}
