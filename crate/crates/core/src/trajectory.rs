//! Time grids and solution trajectories with CSV/JSON export.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_operator::SpectralGrid;

/// Strictly increasing nodes `0 = t_0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    grading: Option<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Configuration("a time grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Configuration(format!(
                "time grid must start at 0, got {}",
                nodes[0]
            )));
        }
        for (i, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Configuration(format!(
                    "time grid not strictly increasing at node {}",
                    i + 1
                )));
            }
        }
        Ok(TimeGrid { nodes, grading: None })
    }

    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        Self::graded(t_end, n, 1.0)
    }

    /// `t_j = T (j/N)^r`.
    pub fn graded(t_end: f64, n: usize, r: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() || n == 0 {
            return Err(Error::Configuration(format!(
                "graded grid needs T > 0 and N >= 1, got T={t_end}, N={n}"
            )));
        }
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::Configuration(format!("grading exponent must be >= 1, got {r}")));
        }
        let nodes = (0..=n)
            .map(|j| {
                if j == n {
                    t_end
                } else {
                    t_end * (j as f64 / n as f64).powf(r)
                }
            })
            .collect();
        let mut g = Self::new(nodes)?;
        g.grading = Some(r);
        Ok(g)
    }

    /// `max(1, 2 / (alpha * gamma_tilde))`: resolves the `t^{alpha gamma_tilde - 1}`
    /// start-up behaviour of the time derivative.
    pub fn default_grading(alpha: f64, gamma_tilde_min: f64) -> f64 {
        if gamma_tilde_min <= 0.0 {
            return 1.0;
        }
        (2.0 / (alpha * gamma_tilde_min)).max(1.0)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().expect("non-empty grid")
    }

    pub fn grading(&self) -> Option<f64> {
        self.grading
    }

    /// Step size when the nodes are equispaced to within `1e-12` relative.
    pub fn uniform_step(&self) -> Option<f64> {
        uniform_step(&self.nodes)
    }
}

pub(crate) fn uniform_step(nodes: &[f64]) -> Option<f64> {
    let n = nodes.len() - 1;
    let h = nodes[n] / n as f64;
    let ok = nodes
        .iter()
        .enumerate()
        .all(|(j, t)| (t - h * j as f64).abs() <= 1e-12 * nodes[n]);
    ok.then_some(h)
}

/// Per-node, per-mode field of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    U,
    Du,
    Dalpha,
    Au,
    D2u,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::Du => "du",
            Field::Dalpha => "dalpha",
            Field::Au => "au",
            Field::D2u => "d2u",
        }
    }
}

/// Whether the instance satisfies one hypothesis of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub condition: String,
    pub value: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub alpha: f64,
    pub label: String,
    pub grid_label: String,
    pub grading: Option<f64>,
    pub tol: f64,
    /// `d2u` was obtained from finite differences of sampled source data.
    pub d2u_approximate: bool,
    pub hypotheses: Vec<HypothesisCheck>,
}

/// Solution fields on a time grid, stored `[node][mode]`.
///
/// At `t = 0` the second derivative is generally unbounded; it is stored as
/// NaN there.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub grid: Arc<SpectralGrid>,
    pub u: Vec<Vec<f64>>,
    pub du: Option<Vec<Vec<f64>>>,
    pub dalpha: Option<Vec<Vec<f64>>>,
    pub au: Option<Vec<Vec<f64>>>,
    pub d2u: Option<Vec<Vec<f64>>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Trajectory holding only `u` (e.g. data imported from elsewhere).
    pub fn from_u(grid: Arc<SpectralGrid>, times: Vec<f64>, u: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        if times.len() != u.len() || u.iter().any(|row| row.len() != grid.len()) {
            return Err(Error::Configuration(
                "trajectory shape does not match grid and times".into(),
            ));
        }
        let grid_label = grid.label().to_string();
        Ok(Trajectory {
            times,
            grid,
            u,
            du: None,
            dalpha: None,
            au: None,
            d2u: None,
            meta: TrajectoryMeta {
                alpha,
                label: String::new(),
                grid_label,
                grading: None,
                tol: 0.0,
                d2u_approximate: false,
                hypotheses: Vec::new(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn field(&self, f: Field) -> Option<&Vec<Vec<f64>>> {
        match f {
            Field::U => Some(&self.u),
            Field::Du => self.du.as_ref(),
            Field::Dalpha => self.dalpha.as_ref(),
            Field::Au => self.au.as_ref(),
            Field::D2u => self.d2u.as_ref(),
        }
    }

    pub fn require(&self, f: Field) -> Result<&Vec<Vec<f64>>> {
        self.field(f)
            .ok_or_else(|| Error::Capability(format!("trajectory has no '{}' field", f.name())))
    }

    /// Time series of one mode of one field.
    pub fn mode_series(&self, f: Field, mode: usize) -> Result<Vec<f64>> {
        let data = self.require(f)?;
        if mode >= self.grid.len() {
            return Err(Error::Configuration(format!("mode {mode} out of range")));
        }
        Ok(data.iter().map(|row| row[mode]).collect())
    }

    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 || self.times[0] != 0.0 {
            return None;
        }
        uniform_step(&self.times)
    }

    /// CSV with one row per (node, mode): `time,mode_id,u,du,dalpha,au[,d2u]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fields: Vec<Field> = [Field::U, Field::Du, Field::Dalpha, Field::Au, Field::D2u]
            .into_iter()
            .filter(|f| self.field(*f).is_some())
            .collect();
        let mut header = vec!["time".to_string(), "mode_id".to_string()];
        header.extend(fields.iter().map(|f| f.name().to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (k, t) in self.times.iter().enumerate() {
            for mode in self.grid.modes() {
                let mut rec = vec![fmt_num(*t), mode.id.to_string()];
                for f in &fields {
                    let data = self.field(*f).expect("filtered");
                    rec.push(fmt_num(data[k][mode.id]));
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "alpha": self.meta.alpha,
            "label": self.meta.label,
            "grid_label": self.meta.grid_label,
            "n_modes": self.grid.len(),
            "n_nodes": self.times.len(),
            "t_end": self.times.last(),
            "grading": self.meta.grading,
            "tolerance": self.meta.tol,
            "d2u_approximate": self.meta.d2u_approximate,
            "hypotheses": self.meta.hypotheses,
        })
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// 17 significant digits, locale independent.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::graded(1.0, 4, 0.5).is_err());
        let g = TimeGrid::graded(2.0, 4, 2.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.125, 0.5, 1.125, 2.0]);
        assert_eq!(g.grading(), Some(2.0));
        assert!(g.uniform_step().is_none());
        assert_eq!(TimeGrid::uniform(1.0, 4).unwrap().uniform_step(), Some(0.25));
    }

    #[test]
    fn default_grading_formula() {
        assert_eq!(TimeGrid::default_grading(1.5, 0.5), 2.0 / 0.75);
        assert_eq!(TimeGrid::default_grading(1.5, 2.0), 1.0);
    }

    #[test]
    fn number_format_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_layout() {
        let grid = Arc::new(SpectralGrid::harmonic_oscillator(2).unwrap());
        let tr = Trajectory::from_u(grid, vec![0.0, 1.0], vec![vec![1.0, 2.0], vec![3.0, 4.0]], 1.5).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,mode_id,u");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("1.0000000000000000e0,1,4.0000000000000000e0"));
        assert!(matches!(tr.require(Field::Du), Err(Error::Capability(_))));
    }
}
