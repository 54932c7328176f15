//! Semilinear problem `D_t^alpha u + A u = f(u)` by Picard iteration of the
//! mild-solution map on successive time windows.
//!
//! On a window `[T_k, T_k + tau]` the history part of the source
//! convolution (nodes up to `T_k`) is frozen from the accepted trajectory
//! and only the window part is iterated. Windows that do not contract are
//! halved; windows that contract strongly let the next one double. When the
//! window length falls below `tau_min` while the energy grows past a
//! ceiling, the run stops with a suspected blow-up.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caputo_oracle::gconv_nodes;
use crate::error::{Error, Result};
use crate::linear_solver::{pl_weights, KernelRow, KernelSet, DEFAULT_TOL};
use crate::spectral_operator::{FractionalIndex, GridFunction, SineBasis, SpectralGrid};
use crate::trajectory::{csv_err, fmt_num, Field, Trajectory, TrajectoryMeta};

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared growth class of `f`.
#[derive(Clone)]
pub enum Growth {
    /// `|f'(s)| <= c_f |s|^{r-1}`
    Power { r: f64, c_f: f64 },
    /// `|f'(s)| <= q1(|s|)`, `|f(s)| <= q2(|s|)`
    Majorant { q1: ScalarMap, q2: ScalarMap },
}

impl Growth {
    /// Bound on `|f'|` over `[-x, x]`.
    pub fn q1(&self, x: f64) -> f64 {
        match self {
            Growth::Power { r, c_f } => c_f * x.powf(*r - 1.0),
            Growth::Majorant { q1, .. } => q1(x),
        }
    }

    /// Bound on `|f|` over `[-x, x]`.
    pub fn q2(&self, x: f64) -> f64 {
        match self {
            Growth::Power { r, c_f } => c_f * x.powf(*r) / r,
            Growth::Majorant { q2, .. } => q2(x),
        }
    }
}

impl fmt::Debug for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Growth::Power { r, c_f } => write!(f, "Power {{ r: {r}, c_f: {c_f} }}"),
            Growth::Majorant { .. } => write!(f, "Majorant"),
        }
    }
}

/// Scalar nonlinearity with `f(0) = 0`.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    eval: ScalarMap,
    deriv: ScalarMap,
    growth: Growth,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .finish()
    }
}

impl Nonlinearity {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        growth: Growth,
    ) -> Result<Self> {
        let name = name.into();
        if eval(0.0) != 0.0 {
            return Err(Error::Configuration(format!(
                "nonlinearity '{name}' must satisfy f(0) = 0"
            )));
        }
        if let Growth::Power { r, c_f } = growth {
            if !(r > 1.0) || !(c_f > 0.0) {
                return Err(Error::Configuration(format!(
                    "power growth needs r > 1 and C_f > 0, got r={r}, C_f={c_f}"
                )));
            }
        }
        Ok(Nonlinearity {
            name,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            growth,
        })
    }

    pub fn zero() -> Self {
        Nonlinearity {
            name: "0".into(),
            eval: Arc::new(|_| 0.0),
            deriv: Arc::new(|_| 0.0),
            growth: Growth::Majorant {
                q1: Arc::new(|_| 0.0),
                q2: Arc::new(|_| 0.0),
            },
        }
    }

    /// `c u`.
    pub fn linear(c: f64) -> Self {
        Nonlinearity {
            name: format!("{c}*u"),
            eval: Arc::new(move |s| c * s),
            deriv: Arc::new(move |_| c),
            growth: Growth::Majorant {
                q1: Arc::new(move |_| c.abs()),
                q2: Arc::new(move |x| c.abs() * x),
            },
        }
    }

    /// `coef u^n`, `n >= 2`, with growth `r = n`, `C_f = n |coef|`.
    pub fn monomial(coef: f64, n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::Configuration("monomial nonlinearity needs power >= 2".into()));
        }
        let k = n as i32;
        Self::new(
            format!("{coef}*u^{n}"),
            move |s| coef * s.powi(k),
            move |s| coef * k as f64 * s.powi(k - 1),
            Growth::Power {
                r: n as f64,
                c_f: n as f64 * coef.abs(),
            },
        )
    }

    /// `a sin(u)` with majorants `q1 = |a|`, `q2(x) = |a| x`.
    pub fn sine(a: f64) -> Self {
        Nonlinearity {
            name: format!("{a}*sin(u)"),
            eval: Arc::new(move |s| a * s.sin()),
            deriv: Arc::new(move |s| a * s.cos()),
            growth: Growth::Majorant {
                q1: Arc::new(move |_| a.abs()),
                q2: Arc::new(move |x| a.abs() * x),
            },
        }
    }

    /// Same map with a different declared growth.
    pub fn with_growth(mut self, growth: Growth) -> Result<Self> {
        if let Growth::Power { r, c_f } = growth {
            if !(r > 1.0) || !(c_f > 0.0) {
                return Err(Error::Configuration(format!(
                    "power growth needs r > 1 and C_f > 0, got r={r}, C_f={c_f}"
                )));
            }
        }
        self.growth = growth;
        Ok(self)
    }

    /// `f + c id`, the companion of shifting the operator by `c`.
    pub fn plus_linear(&self, c: f64) -> Self {
        if c == 0.0 {
            return self.clone();
        }
        let (e, d) = (Arc::clone(&self.eval), Arc::clone(&self.deriv));
        let (g1, g2) = (self.growth.clone(), self.growth.clone());
        Nonlinearity {
            name: format!("{} + {c}*u", self.name),
            eval: Arc::new(move |s| e(s) + c * s),
            deriv: Arc::new(move |s| d(s) + c),
            growth: Growth::Majorant {
                q1: Arc::new(move |x| g1.q1(x) + c.abs()),
                q2: Arc::new(move |x| g2.q2(x) + c.abs() * x),
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    pub fn deriv(&self, s: f64) -> f64 {
        (self.deriv)(s)
    }

    pub fn growth(&self) -> &Growth {
        &self.growth
    }

    pub fn is_zero(&self) -> bool {
        self.name == "0"
    }
}

/// Serializable description of the built-in nonlinearities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Zero,
    Linear {
        c: f64,
    },
    Monomial {
        coef: f64,
        power: u32,
        #[serde(default)]
        declared_r: Option<f64>,
        #[serde(default)]
        declared_c_f: Option<f64>,
    },
    Sine {
        amplitude: f64,
    },
}

impl NonlinearitySpec {
    pub fn build(&self) -> Result<Nonlinearity> {
        match self {
            NonlinearitySpec::Zero => Ok(Nonlinearity::zero()),
            NonlinearitySpec::Linear { c } => Ok(Nonlinearity::linear(*c)),
            NonlinearitySpec::Monomial {
                coef,
                power,
                declared_r,
                declared_c_f,
            } => {
                let nl = Nonlinearity::monomial(*coef, *power)?;
                match (declared_r, declared_c_f) {
                    (None, None) => Ok(nl),
                    (r, c) => {
                        let r = r.unwrap_or(*power as f64);
                        let c_f = c.unwrap_or(*power as f64 * coef.abs());
                        nl.with_growth(Growth::Power { r, c_f })
                    }
                }
            }
            NonlinearitySpec::Sine { amplitude } => Ok(Nonlinearity::sine(*amplitude)),
        }
    }
}

/// Result of sampling the declared growth inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub holds: bool,
    /// Smallest `bound - |value|` over the samples (negative on violation).
    pub worst_margin: f64,
    pub worst_at: f64,
    pub violations: usize,
    pub samples: usize,
}

/// Samples `s` uniformly in `[lo, hi]` and checks the declared inequalities.
pub fn check_growth(nl: &Nonlinearity, lo: f64, hi: f64, n_samples: usize) -> Result<GrowthReport> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) || n_samples < 2 {
        return Err(Error::Configuration(format!(
            "growth check needs a finite range and >= 2 samples, got [{lo}, {hi}] x {n_samples}"
        )));
    }
    let mut worst = f64::INFINITY;
    let mut worst_at = lo;
    let mut violations = 0;
    for i in 0..n_samples {
        let s = lo + (hi - lo) * i as f64 / (n_samples - 1) as f64;
        let margin = match &nl.growth {
            Growth::Power { r, c_f } => c_f * s.abs().powf(r - 1.0) - nl.deriv(s).abs(),
            Growth::Majorant { q1, q2 } => (q1(s.abs()) - nl.deriv(s).abs()).min(q2(s.abs()) - nl.eval(s).abs()),
        };
        // Round-off in the two sides should not count as a violation.
        let slack = 1e-12 * nl.deriv(s).abs().max(nl.eval(s).abs()).max(1.0);
        if margin < -slack {
            violations += 1;
        }
        if margin < worst {
            worst = margin;
            worst_at = s;
        }
    }
    Ok(GrowthReport {
        holds: violations == 0,
        worst_margin: worst,
        worst_at,
        violations,
        samples: n_samples,
    })
}

/// Window policy and tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemilinearConfig {
    pub tol_fix: f64,
    pub max_iter: usize,
    /// Uniform sub-steps per window.
    pub n_sub: usize,
    /// Constant in the initial window size.
    pub c_hat: f64,
    pub tau0: Option<f64>,
    pub tau_min: f64,
    pub energy_ceiling: f64,
    pub max_windows: usize,
    pub ml_tol: f64,
    /// Operator shift `c`; the solver uses `A + c` and `f + c u`.
    pub shift: Option<f64>,
    /// Apply `f` in physical space through the sine basis (Dirichlet
    /// Laplacian grids only). This is not the spectral-picture map.
    pub physical_points: Option<usize>,
    pub physical_length: Option<f64>,
    pub s_exp: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub gamma: f64,
}

impl Default for SemilinearConfig {
    fn default() -> Self {
        SemilinearConfig {
            tol_fix: 1e-11,
            max_iter: 60,
            n_sub: 64,
            c_hat: 1.0,
            tau0: None,
            tau_min: 1e-7,
            energy_ceiling: 1e8,
            max_windows: 20_000,
            ml_tol: DEFAULT_TOL,
            shift: None,
            physical_points: None,
            physical_length: None,
            s_exp: None,
            delta1: None,
            delta2: None,
            gamma: 0.5,
        }
    }
}

/// Exponents of the weak and strong energy norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyExponents {
    pub s_exp: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma: f64,
}

impl EnergyExponents {
    /// `s = 1 - a/2 + 0.05`, `d1 = max(0, 1 - a g) + 0.01`,
    /// `d2 = max(a (1 - g), a - 1) + 0.01`.
    pub fn defaults(alpha: f64, gamma: f64) -> Self {
        EnergyExponents {
            s_exp: 1.0 - alpha / 2.0 + 0.05,
            delta1: (1.0 - alpha * gamma).max(0.0) + 0.01,
            delta2: (alpha * (1.0 - gamma)).max(alpha - 1.0) + 0.01,
            gamma,
        }
    }

    fn from_config(cfg: &SemilinearConfig, alpha: f64) -> Self {
        let d = Self::defaults(alpha, cfg.gamma);
        EnergyExponents {
            s_exp: cfg.s_exp.unwrap_or(d.s_exp),
            delta1: cfg.delta1.unwrap_or(d.delta1),
            delta2: cfg.delta2.unwrap_or(d.delta2),
            gamma: cfg.gamma,
        }
    }
}

/// Weak and strong energies at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyState {
    pub t: f64,
    /// `||u||^2_{V_{1/2}}`
    pub potential: f64,
    /// `t^{2s} ||u'||^2`
    pub kinetic: f64,
    /// `(g_{2-a} * ||u'||^2)(t)`
    pub memory: f64,
    pub e_weak: f64,
    /// `||u||_{V_g} + t^{d1} ||u'|| + t^{d2} ||D^a u|| + t^{d2} ||A u||`
    pub e_strong: Option<f64>,
}

/// Energies along a trajectory.
pub fn energy(traj: &Trajectory, exps: &EnergyExponents) -> Result<Vec<EnergyState>> {
    let alpha = traj.meta.alpha;
    let du = traj.require(Field::Du)?;
    let grid = &traj.grid;
    let du2: Vec<f64> = du.iter().map(|r| grid.norm(r, FractionalIndex::ZERO).powi(2)).collect();
    let memory = if traj.len() >= 2 {
        gconv_nodes(2.0 - alpha, &traj.times, &du2)?
    } else {
        vec![0.0; traj.len()]
    };
    let gi = FractionalIndex::new(exps.gamma)?;
    let strong = match (traj.dalpha.as_ref(), traj.au.as_ref()) {
        (Some(d), Some(a)) => Some((d, a)),
        _ => None,
    };
    Ok((0..traj.len())
        .map(|k| {
            let t = traj.times[k];
            let potential = grid.norm(&traj.u[k], FractionalIndex::HALF).powi(2);
            let tk = |p: f64| if p == 0.0 { 1.0 } else { t.powf(p) };
            let kinetic = if du2[k] == 0.0 {
                0.0
            } else {
                tk(2.0 * exps.s_exp) * du2[k]
            };
            let e_strong = strong.map(|(d, a)| {
                let un = grid.norm(&traj.u[k], gi);
                let dn = du2[k].sqrt();
                let dan = grid.norm(&d[k], FractionalIndex::ZERO);
                let aun = grid.norm(&a[k], FractionalIndex::ZERO);
                let mut e = un;
                for (p, v) in [(exps.delta1, dn), (exps.delta2, dan), (exps.delta2, aun)] {
                    if v != 0.0 {
                        e += tk(p) * v;
                    }
                }
                e
            });
            EnergyState {
                t,
                potential,
                kinetic,
                memory: memory[k],
                e_weak: potential + kinetic + memory[k],
                e_strong,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Global,
    WindowStalled { t_reached: f64, reason: String },
    BlowupSuspected { t_last: f64, t_max_estimate: f64 },
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Global => "Global",
            SolveStatus::WindowStalled { .. } => "WindowStalled",
            SolveStatus::BlowupSuspected { .. } => "BlowupSuspected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub t_start: f64,
    pub tau: f64,
    pub accepted: bool,
    pub iterations: usize,
    pub contraction: f64,
    /// `max_k ||u - Phi(u)|| / max(1, ||u||)` after acceptance.
    pub fixed_point_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub trajectory: Trajectory,
    pub status: SolveStatus,
    pub windows: Vec<WindowStats>,
    pub energy: Vec<EnergyState>,
    pub exponents: EnergyExponents,
    /// `f(u)` at the accepted nodes, `[node][mode]`.
    pub source: Vec<Vec<f64>>,
    pub growth: Option<GrowthReport>,
    pub diagnostics: Vec<String>,
}

impl SolveOutcome {
    pub fn accepted_windows(&self) -> impl Iterator<Item = &WindowStats> {
        self.windows.iter().filter(|w| w.accepted)
    }

    pub fn write_energy_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "e_weak", "potential", "kinetic", "memory", "e_strong"])
            .map_err(csv_err)?;
        for e in &self.energy {
            w.write_record([
                fmt_num(e.t),
                fmt_num(e.e_weak),
                fmt_num(e.potential),
                fmt_num(e.kinetic),
                fmt_num(e.memory),
                e.e_strong.map(fmt_num).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report_json(&self) -> serde_json::Value {
        let t_max = match &self.status {
            SolveStatus::BlowupSuspected { t_max_estimate, .. } => Some(*t_max_estimate),
            _ => None,
        };
        serde_json::json!({
            "status": self.status,
            "t_max_estimate": t_max,
            "t_reached": self.trajectory.times.last(),
            "n_nodes": self.trajectory.len(),
            "windows": self.windows,
            "contraction_history": self.accepted_windows().map(|w| w.contraction).collect::<Vec<_>>(),
            "energy_exponents": self.exponents,
            "growth_check": self.growth,
            "diagnostics": self.diagnostics,
        })
    }
}

/// Accepted history: nodes, solution and `f(u)` values `[node][mode]`.
#[derive(Debug, Clone)]
pub struct History {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

/// Fixed data of a semilinear solve.
pub struct PicardSetup<'a> {
    pub grid: &'a SpectralGrid,
    pub u0: &'a [f64],
    pub u1: &'a [f64],
    pub nl: &'a Nonlinearity,
    pub kernels: &'a KernelSet,
    pub physical: Option<&'a SineBasis>,
}

impl PicardSetup<'_> {
    fn apply_f(&self, v: &[f64]) -> Vec<f64> {
        match self.physical {
            None => v.iter().map(|x| self.nl.eval(*x)).collect(),
            Some(basis) => {
                let phys = basis.synthesize(v);
                let fx: Vec<f64> = phys.iter().map(|x| self.nl.eval(*x)).collect();
                basis.analyze(&fx)
            }
        }
    }

    fn norm(&self, v: &[f64]) -> f64 {
        self.grid.norm(v, FractionalIndex::HALF)
    }
}

/// Converged window.
#[derive(Debug, Clone)]
pub struct WindowResult {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub iterations: usize,
    pub contraction: f64,
    pub fixed_point_residual: f64,
}

/// Per-mode window data: free parts, frozen history and window weights.
struct ModeWindow {
    base_u: Vec<f64>,
    base_du: Vec<f64>,
    /// `w_u[q][p]`: weight of window node `p <= q` at window node `q`.
    w_u: Vec<Vec<f64>>,
    w_du: Vec<Vec<f64>>,
}

fn prepare_mode(setup: &PicardSetup<'_>, hist: &History, nodes: &[f64], j: usize) -> Result<ModeWindow> {
    let a = hist.times.len() - 1;
    let lam = setup.grid.modes()[j].eigenvalue;
    let n_new = nodes.len() - hist.times.len();
    let mut out = ModeWindow {
        base_u: Vec::with_capacity(n_new),
        base_du: Vec::with_capacity(n_new),
        w_u: Vec::with_capacity(n_new),
        w_du: Vec::with_capacity(n_new),
    };
    let mut row = KernelRow::default();
    let mut wu = Vec::new();
    let mut wdu = Vec::new();
    let any_hist = hist.f.iter().any(|r| r[j] != 0.0);
    for k in a + 1..nodes.len() {
        let (fu, fdu, _) = setup
            .kernels
            .free(lam, nodes[k], setup.u0[j], setup.u1[j])
            .map_err(|e| match e {
                Error::Regime(reason) => Error::Accuracy {
                    mode: j,
                    node: k,
                    reason,
                },
                other => other,
            })?;
        setup.kernels.row(lam, nodes, k, None, &mut row)?;
        pl_weights(&nodes[..=k], &row.a1, &row.a2, &mut wu);
        pl_weights(&nodes[..=k], &row.a, &row.a1, &mut wdu);
        let (mut hu, mut hdu) = (0.0, 0.0);
        if any_hist {
            for i in 0..=a {
                hu += wu[i] * hist.f[i][j];
                hdu += wdu[i] * hist.f[i][j];
            }
        }
        out.base_u.push(fu + hu);
        out.base_du.push(fdu + hdu);
        out.w_u.push(wu[a + 1..=k].to_vec());
        out.w_du.push(wdu[a + 1..=k].to_vec());
    }
    Ok(out)
}

/// `Phi(v)` on the window given `f(v)` rows.
fn apply_map(modes: &[ModeWindow], fv: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_new = fv.len();
    let n_modes = modes.len();
    let mut out = vec![vec![0.0; n_modes]; n_new];
    for (j, mw) in modes.iter().enumerate() {
        for (q, row) in out.iter_mut().enumerate() {
            let s: f64 = mw.w_u[q].iter().enumerate().map(|(p, w)| w * fv[p][j]).sum();
            row[j] = mw.base_u[q] + s;
        }
    }
    out
}

fn sup_diff(setup: &PicardSetup<'_>, a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, f64) {
    let mut d = 0.0_f64;
    let mut n = 0.0_f64;
    let mut diff = vec![0.0; setup.grid.len()];
    for (ra, rb) in a.iter().zip(b) {
        for (x, (p, q)) in diff.iter_mut().zip(ra.iter().zip(rb)) {
            *x = p - q;
        }
        d = d.max(setup.norm(&diff));
        n = n.max(setup.norm(ra));
    }
    (d, n)
}

/// Picard iteration on the window `new_nodes` (strictly after the last
/// history node), starting from `v_0 = Phi(0)`.
pub fn picard_window(
    setup: &PicardSetup<'_>,
    hist: &History,
    new_nodes: &[f64],
    tol_fix: f64,
    max_iter: usize,
) -> Result<WindowResult> {
    if new_nodes.is_empty() || new_nodes[0] <= *hist.times.last().expect("history has t = 0") {
        return Err(Error::Configuration(
            "window must start after the accepted history".into(),
        ));
    }
    let mut nodes = hist.times.clone();
    nodes.extend_from_slice(new_nodes);
    let modes: Vec<ModeWindow> = (0..setup.grid.len())
        .into_par_iter()
        .map(|j| prepare_mode(setup, hist, &nodes, j))
        .collect::<Result<_>>()?;
    let n_new = new_nodes.len();
    let zero = vec![vec![0.0; setup.grid.len()]; n_new];
    let mut v = apply_map(&modes, &zero);
    let mut prev_d: Option<f64> = None;
    let mut rate = 0.0;
    let mut growing = 0;
    for it in 1..=max_iter {
        let fv: Vec<Vec<f64>> = v.iter().map(|r| setup.apply_f(r)).collect();
        let next = apply_map(&modes, &fv);
        let (d, n) = sup_diff(setup, &next, &v);
        if !d.is_finite() || !n.is_finite() {
            return Err(Error::NonContraction {
                rate: f64::INFINITY,
                iterations: it,
            });
        }
        if let Some(p) = prev_d {
            rate = if p > 0.0 { d / p } else { 0.0 };
            growing = if rate >= 1.0 { growing + 1 } else { 0 };
        }
        prev_d = Some(d);
        v = next;
        if d <= tol_fix * n.max(1.0) {
            let f: Vec<Vec<f64>> = v.iter().map(|r| setup.apply_f(r)).collect();
            let check = apply_map(&modes, &f);
            let (res, vn) = sup_diff(setup, &check, &v);
            let du = (0..n_new)
                .map(|q| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(j, mw)| {
                            mw.base_du[q] + mw.w_du[q].iter().enumerate().map(|(p, w)| w * f[p][j]).sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            return Ok(WindowResult {
                times: new_nodes.to_vec(),
                u: v,
                du,
                f,
                iterations: it,
                contraction: rate,
                fixed_point_residual: res / vn.max(1.0),
            });
        }
        if growing >= 3 {
            return Err(Error::NonContraction { rate, iterations: it });
        }
    }
    Err(Error::NonContraction {
        rate,
        iterations: max_iter,
    })
}

/// Solves on `[0, t_target]` window by window.
pub fn solve_semilinear(
    grid: &Arc<SpectralGrid>,
    alpha: f64,
    u0: &GridFunction,
    u1: &GridFunction,
    nl: &Nonlinearity,
    t_target: f64,
    cfg: &SemilinearConfig,
) -> Result<SolveOutcome> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::domain(format!("alpha must lie in (1, 2), got {alpha}")));
    }
    if !(t_target > 0.0) || !t_target.is_finite() {
        return Err(Error::Configuration(format!("target time must be > 0, got {t_target}")));
    }
    if **u0.grid() != **grid || **u1.grid() != **grid {
        return Err(Error::Configuration("initial data must live on the solver grid".into()));
    }
    if cfg.n_sub == 0 || cfg.max_iter == 0 || !(cfg.tol_fix > 0.0) || !(cfg.tau_min > 0.0) {
        return Err(Error::Configuration("invalid window policy".into()));
    }
    if let Growth::Power { r, c_f } = nl.growth() {
        if !(*r > 1.0) || !(*c_f > 0.0) {
            return Err(Error::Configuration("invalid growth metadata".into()));
        }
    }
    let (work_grid, work_nl) = match cfg.shift {
        Some(c) if c != 0.0 => (Arc::new(grid.shift(c)?), nl.plus_linear(c)),
        _ => (Arc::clone(grid), nl.clone()),
    };
    let basis = match cfg.physical_points {
        Some(points) => {
            let length = cfg
                .physical_length
                .ok_or_else(|| Error::Configuration("physical-space nonlinearity needs the domain length".into()))?;
            Some(SineBasis::new(length, grid.len(), points)?)
        }
        None => None,
    };
    let kernels = KernelSet::new(alpha, cfg.ml_tol)?;
    let setup = PicardSetup {
        grid: &work_grid,
        u0: u0.values(),
        u1: u1.values(),
        nl: &work_nl,
        kernels: &kernels,
        physical: basis.as_ref(),
    };
    let exps = EnergyExponents::from_config(cfg, alpha);

    let r_hat = 3.0 * (u0.norm_v(FractionalIndex::HALF) + u1.norm_v(FractionalIndex::ZERO));
    let q = work_nl.growth().q1(2.0 * r_hat);
    let mut tau = cfg.tau0.unwrap_or_else(|| {
        if q > 0.0 {
            (1.0 / (2.0 * cfg.c_hat * q)).powf(2.0 / alpha)
        } else {
            t_target
        }
    });
    tau = tau.min(t_target);

    let f0 = setup.apply_f(u0.values());
    let mut hist = History {
        times: vec![0.0],
        u: vec![u0.values().to_vec()],
        du: vec![u1.values().to_vec()],
        f: vec![f0],
    };
    let mut windows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut window_energy: Vec<f64> = Vec::new();
    let mut shrinking_run = 0usize;
    let mut status = SolveStatus::Global;
    let t_eps = 1e-12 * t_target;

    loop {
        let t_a = *hist.times.last().expect("non-empty");
        if t_a >= t_target - t_eps {
            break;
        }
        if windows.len() >= cfg.max_windows {
            status = SolveStatus::WindowStalled {
                t_reached: t_a,
                reason: format!("window budget of {} exhausted", cfg.max_windows),
            };
            break;
        }
        let tau_w = tau.min(t_target - t_a);
        let new_nodes: Vec<f64> = (1..=cfg.n_sub)
            .map(|q| {
                if q == cfg.n_sub {
                    if t_a + tau_w >= t_target - t_eps {
                        t_target
                    } else {
                        t_a + tau_w
                    }
                } else {
                    t_a + tau_w * q as f64 / cfg.n_sub as f64
                }
            })
            .collect();
        match picard_window(&setup, &hist, &new_nodes, cfg.tol_fix, cfg.max_iter) {
            Ok(w) => {
                windows.push(WindowStats {
                    t_start: t_a,
                    tau: tau_w,
                    accepted: true,
                    iterations: w.iterations,
                    contraction: w.contraction,
                    fixed_point_residual: Some(w.fixed_point_residual),
                });
                let e_end =
                    w.u.last()
                        .map(|r| work_grid.norm(r, FractionalIndex::HALF).powi(2))
                        .unwrap_or(0.0)
                        + w.du
                            .last()
                            .map(|r| work_grid.norm(r, FractionalIndex::ZERO).powi(2))
                            .unwrap_or(0.0);
                window_energy.push(e_end);
                hist.times.extend(w.times);
                hist.u.extend(w.u);
                hist.du.extend(w.du);
                hist.f.extend(w.f);
                if w.contraction <= 0.25 && w.iterations <= cfg.max_iter / 2 {
                    tau *= 2.0;
                } else if w.contraction > 0.5 {
                    tau *= 0.5;
                    shrinking_run += 1;
                } else {
                    shrinking_run = 0;
                }
                if w.contraction <= 0.25 {
                    shrinking_run = 0;
                }
            }
            Err(Error::NonContraction { rate, iterations }) => {
                windows.push(WindowStats {
                    t_start: t_a,
                    tau: tau_w,
                    accepted: false,
                    iterations,
                    contraction: rate,
                    fixed_point_residual: None,
                });
                tau = 0.5 * tau_w;
                shrinking_run += 1;
                if tau < cfg.tau_min {
                    let n = window_energy.len();
                    let increasing = n >= 3
                        && window_energy[n - 3] < window_energy[n - 2]
                        && window_energy[n - 2] < window_energy[n - 1];
                    let above = window_energy.last().is_some_and(|e| *e > cfg.energy_ceiling);
                    let shrinking = windows
                        .iter()
                        .filter(|w| w.accepted)
                        .rev()
                        .take(3)
                        .map(|w| w.tau)
                        .collect::<Vec<_>>();
                    let shrank = shrinking.len() == 3
                        && shrinking[0] <= shrinking[1]
                        && shrinking[1] <= shrinking[2]
                        && shrinking[0] < shrinking[2];
                    if increasing && above && shrank {
                        status = SolveStatus::BlowupSuspected {
                            t_last: t_a,
                            t_max_estimate: t_a + tau_w,
                        };
                    } else {
                        status = SolveStatus::WindowStalled {
                            t_reached: t_a,
                            reason: format!(
                                "window below tau_min = {:e} without energy blow-up (last rate {rate:.3})",
                                cfg.tau_min
                            ),
                        };
                    }
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    if shrinking_run > 0 {
        diagnostics.push(format!("{shrinking_run} consecutive shrinking windows at the end"));
    }

    let n_modes = grid.len();
    let lam: Vec<f64> = work_grid.eigenvalues();
    let au: Vec<Vec<f64>> = hist
        .u
        .iter()
        .map(|r| r.iter().zip(&lam).map(|(u, m)| u * m).collect())
        .collect();
    let dalpha: Vec<Vec<f64>> = hist
        .f
        .iter()
        .zip(&au)
        .map(|(f, a)| (0..n_modes).map(|j| f[j] - a[j]).collect())
        .collect();
    let trajectory = Trajectory {
        times: hist.times,
        grid: Arc::clone(&work_grid),
        u: hist.u,
        du: Some(hist.du),
        dalpha: Some(dalpha),
        au: Some(au),
        d2u: None,
        meta: TrajectoryMeta {
            alpha,
            label: format!("semilinear f = {}", work_nl.name()),
            grid_label: work_grid.label().to_string(),
            grading: None,
            tol: cfg.ml_tol,
            d2u_approximate: false,
            hypotheses: Vec::new(),
        },
    };
    let energy_trace = energy(&trajectory, &exps)?;
    let sup = trajectory.u.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let growth = if sup.is_finite() && sup > 0.0 {
        Some(check_growth(nl, -sup, sup, 201)?)
    } else {
        None
    };
    if let Some(g) = growth.as_ref().filter(|g| !g.holds) {
        diagnostics.push(format!(
            "declared growth violated at s = {:.6e} (margin {:.3e})",
            g.worst_at, g.worst_margin
        ));
    }
    Ok(SolveOutcome {
        trajectory,
        status,
        windows,
        energy: energy_trace,
        exponents: exps,
        source: hist.f,
        growth,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_solver::{solve_linear, LinearProblem, SolveOptions, Source};
    use crate::special::gamma;
    use crate::trajectory::TimeGrid;

    fn single(m: f64) -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::single_mode(m).unwrap())
    }

    #[test]
    fn growth_examples() {
        let sq = Nonlinearity::monomial(1.0, 2).unwrap();
        let r = check_growth(&sq, -3.0, 3.0, 61).unwrap();
        assert!(r.holds);
        assert!(r.worst_margin.abs() < 1e-12);
        let s = Nonlinearity::sine(1.0);
        assert!(check_growth(&s, -10.0, 10.0, 101).unwrap().holds);
        let bad = sq.with_growth(Growth::Power { r: 1.5, c_f: 2.0 }).unwrap();
        let r = check_growth(&bad, -3.0, 3.0, 61).unwrap();
        assert!(!r.holds);
        assert!(r.worst_at.abs() > 1.0);
        assert!(Nonlinearity::new("shifted", |s| s + 1.0, |_| 1.0, Growth::Power { r: 2.0, c_f: 1.0 }).is_err());
    }

    #[test]
    fn zero_nonlinearity_reproduces_linear() {
        let grid = Arc::new(SpectralGrid::harmonic_oscillator(3).unwrap());
        let u0 = GridFunction::new(&grid, vec![1.0, 0.5, -0.25]).unwrap();
        let u1 = GridFunction::new(&grid, vec![0.0, 1.0, 0.0]).unwrap();
        let out = solve_semilinear(
            &grid,
            1.5,
            &u0,
            &u1,
            &Nonlinearity::zero(),
            1.0,
            &SemilinearConfig::default(),
        )
        .unwrap();
        assert_eq!(out.status, SolveStatus::Global);
        assert_eq!(out.windows.len(), 1);
        assert_eq!(out.windows[0].iterations, 1);
        let tg = TimeGrid::new(out.trajectory.times.clone()).unwrap();
        let p = LinearProblem::new(Arc::clone(&grid), 1.5, u0, u1, Source::Zero).unwrap();
        let lin = solve_linear(&p, &tg, &SolveOptions::default()).unwrap();
        for k in 0..tg.len() {
            for j in 0..3 {
                assert!((lin.u[k][j] - out.trajectory.u[k][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn energy_of_free_motion() {
        let grid = single(1.0);
        let tr = Trajectory {
            times: (0..=100).map(|k| k as f64 / 100.0).collect(),
            grid: Arc::clone(&grid),
            u: (0..=100).map(|k| vec![k as f64 / 100.0]).collect(),
            du: Some(vec![vec![1.0]; 101]),
            dalpha: None,
            au: None,
            d2u: None,
            meta: TrajectoryMeta {
                alpha: 1.5,
                label: String::new(),
                grid_label: String::new(),
                grading: None,
                tol: 0.0,
                d2u_approximate: false,
                hypotheses: Vec::new(),
            },
        };
        let e = energy(&tr, &EnergyExponents::defaults(1.5, 0.5)).unwrap();
        let want = 1.0 / gamma(1.5);
        assert!((e[100].memory - want).abs() < 1e-12);
        assert!(e[100].e_strong.is_none());
    }

    #[test]
    fn linear_nonlinearity_matches_shifted_operator() {
        let grid = single(4.0);
        let u0 = GridFunction::new(&grid, vec![1.0]).unwrap();
        let u1 = GridFunction::zeros(&grid);
        let cfg = SemilinearConfig {
            n_sub: 128,
            ..SemilinearConfig::default()
        };
        let out = solve_semilinear(&grid, 1.5, &u0, &u1, &Nonlinearity::linear(1.0), 0.5, &cfg).unwrap();
        assert_eq!(out.status, SolveStatus::Global);
        let shifted = single(3.0);
        let p = LinearProblem::new(
            Arc::clone(&shifted),
            1.5,
            GridFunction::new(&shifted, vec![1.0]).unwrap(),
            GridFunction::zeros(&shifted),
            Source::Zero,
        )
        .unwrap();
        let tg = TimeGrid::new(out.trajectory.times.clone()).unwrap();
        let lin = solve_linear(&p, &tg, &SolveOptions::default()).unwrap();
        let err = (0..tg.len())
            .map(|k| (lin.u[k][0] - out.trajectory.u[k][0]).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn spec_round_trip() {
        let spec: NonlinearitySpec = toml::from_str("kind = \"monomial\"\ncoef = -1.0\npower = 3\n").unwrap();
        let nl = spec.build().unwrap();
        assert_eq!(nl.eval(2.0), -8.0);
        assert!(toml::from_str::<NonlinearitySpec>("kind = \"cubic\"").is_err());
    }
}
