//! Positive self-adjoint operators in multiplication form: a weighted sample
//! `(m_j, w_j)` of the spectral measure space, fractional-power norms, and a
//! sine-series adapter for displaying Dirichlet-Laplacian data in physical
//! space.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample of the spectral measure: eigenvalue `m` and weight `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub id: usize,
    pub eigenvalue: f64,
    pub weight: f64,
}

/// Discrete multiplication operator `A v = m v` on a weighted sample space.
///
/// Invariants: at least one mode, every `m_j >= m0 > 0`, every `w_j > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    label: String,
    m0: f64,
    modes: Vec<Mode>,
}

impl SpectralGrid {
    /// Builds a grid from `(m_j, w_j)` pairs, validating every invariant.
    pub fn new(label: impl Into<String>, m0: f64, pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Validation {
                index: 0,
                reason: "mode list is empty".into(),
            });
        }
        if !(m0 > 0.0) || !m0.is_finite() {
            return Err(Error::Validation {
                index: 0,
                reason: format!("lower bound m0 must be finite and > 0, got {m0}"),
            });
        }
        let mut modes = Vec::with_capacity(pairs.len());
        for (i, &(m, w)) in pairs.iter().enumerate() {
            if !m.is_finite() || m < m0 {
                return Err(Error::Validation {
                    index: i,
                    reason: format!("eigenvalue {m} is below the declared lower bound {m0}"),
                });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation {
                    index: i,
                    reason: format!("weight {w} is not positive and finite"),
                });
            }
            modes.push(Mode {
                id: i,
                eigenvalue: m,
                weight: w,
            });
        }
        Ok(SpectralGrid {
            label: label.into(),
            m0,
            modes,
        })
    }

    /// Single mode with unit weight.
    pub fn single_mode(eigenvalue: f64) -> Result<Self> {
        Self::new(format!("single mode m={eigenvalue}"), eigenvalue, &[(eigenvalue, 1.0)])
    }

    /// Dirichlet Laplacian on `(0, L)`: `m_k = (k pi / L)^2`, `k = 1..=N`.
    pub fn dirichlet_laplacian(length: f64, n_modes: usize) -> Result<Self> {
        if !(length > 0.0) || n_modes == 0 {
            return Err(Error::domain(format!(
                "Dirichlet Laplacian needs L > 0 and N >= 1, got L={length}, N={n_modes}"
            )));
        }
        let pairs: Vec<(f64, f64)> = (1..=n_modes).map(|k| ((k as f64 * PI / length).powi(2), 1.0)).collect();
        Self::new(
            format!("dirichlet-laplacian L={length} N={n_modes}"),
            (PI / length).powi(2),
            &pairs,
        )
    }

    /// One-dimensional harmonic oscillator `-u'' + x^2 u`: `m_k = 2k + 1`.
    pub fn harmonic_oscillator(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::domain("harmonic oscillator needs N >= 1"));
        }
        let pairs: Vec<(f64, f64)> = (0..n_modes).map(|k| (2.0 * k as f64 + 1.0, 1.0)).collect();
        Self::new(format!("harmonic-oscillator N={n_modes}"), 1.0, &pairs)
    }

    /// Log-uniform sample of `[m_min, m_max]` with `per_decade` points per
    /// decade and weights `Delta ln m`: a discretization of the scale-free
    /// measure `dm / m`, on which data `m^{-k}` produce exact power laws in
    /// time.
    pub fn log_uniform(m_min: f64, m_max: f64, per_decade: usize) -> Result<Self> {
        if !(m_min > 0.0 && m_max > m_min) || per_decade == 0 {
            return Err(Error::domain(format!(
                "log-uniform grid needs 0 < m_min < m_max and per_decade >= 1, got [{m_min}, {m_max}], {per_decade}"
            )));
        }
        let decades = (m_max / m_min).log10();
        let n = (decades * per_decade as f64).ceil() as usize + 1;
        let h = (m_max / m_min).ln() / (n - 1) as f64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                (m_min * (h * i as f64).exp(), w)
            })
            .collect();
        Self::new(
            format!("log-uniform [{m_min:e}, {m_max:e}] x{per_decade}/decade"),
            m_min,
            &pairs,
        )
    }

    /// Spectral power `A^s`: eigenvalues `m_j^s`, same weights.
    pub fn fractional_power(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::domain(format!("fractional power must lie in (0, 1], got {s}")));
        }
        if s == 1.0 {
            return Ok(self.clone());
        }
        let mut g = self.clone();
        for m in &mut g.modes {
            m.eigenvalue = m.eigenvalue.powf(s);
        }
        g.m0 = self.m0.powf(s);
        g.label = format!("({})^{s}", self.label);
        Ok(g)
    }

    /// `A + c`: eigenvalues `m_j + c`, lower bound `m0 + c`.
    pub fn shift(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("shift must be finite and >= 0, got {c}")));
        }
        if c == 0.0 {
            return Ok(self.clone());
        }
        let mut g = self.clone();
        for m in &mut g.modes {
            m.eigenvalue += c;
        }
        g.m0 += c;
        g.label = format!("{} + {c}", self.label);
        Ok(g)
    }

    /// Parses a spectral-measure document (TOML).
    pub fn from_document(text: &str) -> Result<Self> {
        let doc: SpectralDocument = toml::from_str(text).map_err(|e| Error::Parse(format!("spectral measure: {e}")))?;
        doc.into_grid()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_document(&text)
    }

    /// Serializes the grid in the spectral-measure document format.
    pub fn to_document(&self) -> String {
        let doc = SpectralDocument {
            label: self.label.clone(),
            m0: self.m0,
            total_weight: self.total_weight(),
            modes: self.modes.iter().map(|m| [m.eigenvalue, m.weight]).collect(),
        };
        toml::to_string(&doc).expect("plain data serializes")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.modes.iter().map(|m| m.weight).sum()
    }

    /// `(sum_j w_j m_j^{2 gamma} v_j^2)^{1/2}`.
    pub fn norm(&self, values: &[f64], gamma: FractionalIndex) -> f64 {
        debug_assert_eq!(values.len(), self.modes.len());
        let g = gamma.value();
        let mut acc = 0.0;
        for (m, v) in self.modes.iter().zip(values) {
            if *v == 0.0 {
                continue;
            }
            let scaled = if g == 0.0 { *v } else { v * m.eigenvalue.powf(g) };
            acc += m.weight * scaled * scaled;
        }
        acc.sqrt()
    }
}

/// On-disk form of a spectral measure.
///
/// ```toml
/// label = "m(x) = 1 + x, trapezoid"
/// m0 = 1.0
/// total_weight = 1.0
/// modes = [[1.0, 0.25], [1.5, 0.5], [2.0, 0.25]]
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralDocument {
    #[serde(default)]
    pub label: String,
    pub m0: f64,
    pub total_weight: f64,
    pub modes: Vec<[f64; 2]>,
}

impl SpectralDocument {
    pub fn into_grid(self) -> Result<SpectralGrid> {
        let pairs: Vec<(f64, f64)> = self.modes.iter().map(|p| (p[0], p[1])).collect();
        let grid = SpectralGrid::new(self.label, self.m0, &pairs)?;
        let total = grid.total_weight();
        if !self.total_weight.is_finite() || (total - self.total_weight).abs() > 1e-9 * self.total_weight.abs().max(1.0)
        {
            return Err(Error::Validation {
                index: pairs.len(),
                reason: format!(
                    "declared total weight {} differs from the sum of weights {total}",
                    self.total_weight
                ),
            });
        }
        Ok(grid)
    }
}

/// Exponent `gamma` of the space `V_gamma = D(A^gamma)`; negative values
/// select the dual spaces.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FractionalIndex(f64);

impl FractionalIndex {
    pub const ZERO: FractionalIndex = FractionalIndex(0.0);
    pub const HALF: FractionalIndex = FractionalIndex(0.5);
    pub const ONE: FractionalIndex = FractionalIndex(1.0);

    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.abs() <= 2.0) {
            return Err(Error::domain(format!(
                "fractional index must satisfy |gamma| <= 2, got {gamma}"
            )));
        }
        Ok(FractionalIndex(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn dual(self) -> Self {
        FractionalIndex(-self.0)
    }
}

/// Coefficient vector on a shared [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<SpectralGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Arc<SpectralGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Configuration(format!(
                "grid function has {} values but the grid has {} modes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                index: i,
                reason: "coefficient is not finite".into(),
            });
        }
        Ok(GridFunction {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.len()],
        }
    }

    /// `values[j] = f(m_j)`.
    pub fn from_eigenvalues(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.modes().iter().map(|m| f(m.eigenvalue)).collect();
        Self::new(grid, values)
    }

    /// Unit coefficient on mode `index`, zero elsewhere.
    pub fn unit(grid: &Arc<SpectralGrid>, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::Configuration(format!(
                "mode index {index} out of range for {} modes",
                grid.len()
            )));
        }
        let mut values = vec![0.0; grid.len()];
        values[index] = 1.0;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_v(&self, gamma: FractionalIndex) -> f64 {
        self.grid.norm(&self.values, gamma)
    }
}

/// `||v||_{V_gamma}` for `v` on `g`.
pub fn norm_v(g: &SpectralGrid, v: &GridFunction, gamma: FractionalIndex) -> Result<f64> {
    if v.values.len() != g.len() || *v.grid != *g {
        return Err(Error::Configuration(
            "grid function does not live on the given grid".into(),
        ));
    }
    Ok(g.norm(&v.values, gamma))
}

/// Orthonormal sine basis `sqrt(2/L) sin(k pi x / L)` of the Dirichlet
/// Laplacian, sampled at the interior points `x_i = i L / (n + 1)`.
///
/// Synthesis followed by analysis is the identity whenever the number of
/// sample points is at least the number of modes.
#[derive(Debug, Clone)]
pub struct SineBasis {
    length: f64,
    n_modes: usize,
    n_points: usize,
    table: Vec<f64>,
}

impl SineBasis {
    pub fn new(length: f64, n_modes: usize, n_points: usize) -> Result<Self> {
        if !(length > 0.0) || n_modes == 0 || n_points < n_modes {
            return Err(Error::domain(format!(
                "sine basis needs L > 0 and n_points >= n_modes >= 1, got L={length}, modes={n_modes}, points={n_points}"
            )));
        }
        let norm = (2.0 / length).sqrt();
        let mut table = vec![0.0; n_modes * n_points];
        for k in 0..n_modes {
            for i in 0..n_points {
                let x = (i + 1) as f64 / (n_points + 1) as f64;
                table[k * n_points + i] = norm * (PI * (k + 1) as f64 * x).sin();
            }
        }
        Ok(SineBasis {
            length,
            n_modes,
            n_points,
            table,
        })
    }

    pub fn points(&self) -> Vec<f64> {
        (1..=self.n_points)
            .map(|i| self.length * i as f64 / (self.n_points + 1) as f64)
            .collect()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Physical samples `u(x_i) = sum_k c_k phi_k(x_i)`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_points];
        for (k, c) in coeffs.iter().enumerate().take(self.n_modes) {
            if *c == 0.0 {
                continue;
            }
            let row = &self.table[k * self.n_points..(k + 1) * self.n_points];
            for (o, p) in out.iter_mut().zip(row) {
                *o += c * p;
            }
        }
        out
    }

    /// Coefficients `c_k = sum_i u(x_i) phi_k(x_i) dx`.
    pub fn analyze(&self, samples: &[f64]) -> Vec<f64> {
        let dx = self.length / (self.n_points + 1) as f64;
        (0..self.n_modes)
            .map(|k| {
                let row = &self.table[k * self.n_points..(k + 1) * self.n_points];
                row.iter().zip(samples).map(|(p, u)| p * u).sum::<f64>() * dx
            })
            .collect()
    }
}
