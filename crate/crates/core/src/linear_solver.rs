//! Mild solution of the linear problem `D_t^alpha u + A u = f`,
//! `u(0) = u0`, `u'(0) = u1`, mode by mode:
//!
//! ```text
//! u(t)  = E_{a,1}(-m t^a) u0 + t E_{a,2}(-m t^a) u1 + (k_a * f)(t)
//! u'(t) = -m t^{a-1} E_{a,a}(-m t^a) u0 + E_{a,1}(-m t^a) u1 + (k_{a-1} * f)(t)
//! ```
//!
//! with `k_b(s) = s^{b-1} E_{a,b}(-m s^a)`. The family satisfies
//! `k_b' = k_{b-1}`, so kernel moments against piecewise-linear data reduce
//! to differences of `k_{b+1}` and `k_{b+2}`: the convolution is product
//! integration with exact moments, and monomial sources are integrated in
//! closed form.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mittag_leffler::MittagLeffler;
use crate::special::gamma;
use crate::spectral_operator::{FractionalIndex, GridFunction, SpectralGrid};
use crate::trajectory::{Field, HypothesisCheck, TimeGrid, Trajectory, TrajectoryMeta};

/// Default Mittag-Leffler tolerance for solution kernels.
pub const DEFAULT_TOL: f64 = 1e-13;

/// `coef * t^power`, `power > -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub power: f64,
}

impl Monomial {
    pub fn new(coef: f64, power: f64) -> Result<Self> {
        if !(power > -1.0) || !power.is_finite() || !coef.is_finite() {
            return Err(Error::domain(format!(
                "monomial source needs finite coefficient and power > -1, got {coef} t^{power}"
            )));
        }
        Ok(Monomial { coef, power })
    }

    pub fn constant(c: f64) -> Self {
        Monomial { coef: c, power: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.power == 0.0 {
            self.coef
        } else {
            self.coef * t.powf(self.power)
        }
    }
}

/// Right-hand side `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    /// Sum of monomials per mode (`terms[mode]`).
    ClosedForm(Vec<Vec<Monomial>>),
    /// Samples `values[node][mode]` on the solve grid, linearly interpolated
    /// in time. `differentiable` permits a finite-difference second
    /// derivative.
    Sampled {
        values: Vec<Vec<f64>>,
        differentiable: bool,
    },
}

impl Source {
    /// Same monomial sum on every mode.
    pub fn uniform_closed_form(n_modes: usize, terms: &[Monomial]) -> Self {
        Source::ClosedForm(vec![terms.to_vec(); n_modes])
    }

    /// Source for which `u(t) = 1 + t^2` solves the problem on every mode
    /// (with `u0 = 1`, `u1 = 0`): `2 t^{2-a} / Gamma(3-a) + m (1 + t^2)`.
    pub fn manufactured_quadratic(grid: &SpectralGrid, alpha: f64) -> Self {
        let c = 2.0 / gamma(3.0 - alpha);
        Source::ClosedForm(
            grid.modes()
                .iter()
                .map(|m| {
                    vec![
                        Monomial {
                            coef: c,
                            power: 2.0 - alpha,
                        },
                        Monomial {
                            coef: m.eigenvalue,
                            power: 0.0,
                        },
                        Monomial {
                            coef: m.eigenvalue,
                            power: 2.0,
                        },
                    ]
                })
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Source::Zero => true,
            Source::ClosedForm(t) => t.iter().all(|m| m.iter().all(|x| x.coef == 0.0)),
            Source::Sampled { values, .. } => values.iter().all(|r| r.iter().all(|v| *v == 0.0)),
        }
    }

    /// `f(t)` on `mode`; sampled sources are looked up by node index.
    pub fn value(&self, mode: usize, node: usize, t: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::ClosedForm(terms) => terms[mode].iter().map(|m| m.eval(t)).sum(),
            Source::Sampled { values, .. } => values[node][mode],
        }
    }

    /// Samples `[node][mode]` at the given times; only closed-form and zero
    /// sources can be resampled.
    pub fn sample(&self, times: &[f64], n_modes: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Source::Zero => Ok(vec![vec![0.0; n_modes]; times.len()]),
            Source::ClosedForm(_) => Ok(times
                .iter()
                .enumerate()
                .map(|(k, t)| (0..n_modes).map(|j| self.value(j, k, *t)).collect())
                .collect()),
            Source::Sampled { values, .. } => {
                if values.len() == times.len() {
                    Ok(values.clone())
                } else {
                    Err(Error::Configuration(
                        "sampled source cannot be evaluated off its own grid".into(),
                    ))
                }
            }
        }
    }

    /// Scales and adds: `self + c * other`, for sources of matching kind.
    pub fn combine(&self, c: f64, other: &Source) -> Result<Source> {
        match (self, other) {
            (_, Source::Zero) => Ok(self.clone()),
            (Source::Zero, _) => Ok(scaled(c, other)),
            (Source::ClosedForm(a), Source::ClosedForm(b)) if a.len() == b.len() => Ok(Source::ClosedForm(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let mut v = x.clone();
                        v.extend(y.iter().map(|m| Monomial {
                            coef: c * m.coef,
                            power: m.power,
                        }));
                        v
                    })
                    .collect(),
            )),
            (
                Source::Sampled {
                    values: a,
                    differentiable: da,
                },
                Source::Sampled {
                    values: b,
                    differentiable: db,
                },
            ) if a.len() == b.len() => Ok(Source::Sampled {
                values: a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + c * q).collect())
                    .collect(),
                differentiable: *da && *db,
            }),
            _ => Err(Error::Configuration(
                "sources of different kinds cannot be combined".into(),
            )),
        }
    }

    fn check_shape(&self, n_nodes: usize, n_modes: usize) -> Result<()> {
        match self {
            Source::Zero => Ok(()),
            Source::ClosedForm(terms) => {
                if terms.len() != n_modes {
                    return Err(Error::Configuration(format!(
                        "closed-form source has {} modes, grid has {n_modes}",
                        terms.len()
                    )));
                }
                for m in terms.iter().flatten() {
                    Monomial::new(m.coef, m.power)?;
                }
                Ok(())
            }
            Source::Sampled { values, .. } => {
                if values.len() != n_nodes || values.iter().any(|r| r.len() != n_modes) {
                    return Err(Error::Configuration(format!(
                        "sampled source must be {n_nodes} nodes x {n_modes} modes"
                    )));
                }
                if values.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Configuration("sampled source has non-finite values".into()));
                }
                Ok(())
            }
        }
    }
}

fn scaled(c: f64, src: &Source) -> Source {
    match src {
        Source::Zero => Source::Zero,
        Source::ClosedForm(b) => Source::ClosedForm(
            b.iter()
                .map(|y| {
                    y.iter()
                        .map(|m| Monomial {
                            coef: c * m.coef,
                            power: m.power,
                        })
                        .collect()
                })
                .collect(),
        ),
        Source::Sampled { values, differentiable } => Source::Sampled {
            values: values.iter().map(|r| r.iter().map(|v| c * v).collect()).collect(),
            differentiable: *differentiable,
        },
    }
}

/// Linear Cauchy problem on a spectral grid.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub grid: Arc<SpectralGrid>,
    pub alpha: f64,
    pub u0: GridFunction,
    pub u1: GridFunction,
    pub source: Source,
    pub label: String,
}

impl LinearProblem {
    pub fn new(
        grid: Arc<SpectralGrid>,
        alpha: f64,
        u0: GridFunction,
        u1: GridFunction,
        source: Source,
    ) -> Result<Self> {
        let p = LinearProblem {
            grid,
            alpha,
            u0,
            u1,
            source,
            label: String::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Single mode `m = lam`, scalar data.
    pub fn single_mode(lam: f64, alpha: f64, u0: f64, u1: f64, source: Source) -> Result<Self> {
        let grid = Arc::new(SpectralGrid::single_mode(lam)?);
        let u0 = GridFunction::new(&grid, vec![u0])?;
        let u1 = GridFunction::new(&grid, vec![u1])?;
        Self::new(grid, alpha, u0, u1, source)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (1, 2) for the Cauchy problem, got {}",
                self.alpha
            )));
        }
        if **self.u0.grid() != *self.grid || **self.u1.grid() != *self.grid {
            return Err(Error::Configuration(
                "initial data must live on the problem's spectral grid".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub second_derivative: bool,
    /// Declared `L^p` integrability of the source in time.
    pub source_integrability: Option<f64>,
    /// Declared regularity index of `u0`.
    pub gamma_tilde: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            second_derivative: false,
            source_integrability: None,
            gamma_tilde: None,
        }
    }
}

/// Evaluators for the kernel family `k_b`, `b in {1, 2, a-1, a, a+1, a+2}`,
/// shared by every mode of a solve.
#[derive(Debug)]
pub struct KernelSet {
    alpha: f64,
    e1: MittagLeffler,
    e2: MittagLeffler,
    e_am1: MittagLeffler,
    e_a: MittagLeffler,
    e_a1: MittagLeffler,
    e_a2: MittagLeffler,
}

/// Kernel values at `sigma = t_k - t_i`, `i = 0..=k`.
#[derive(Debug, Clone, Default)]
pub(crate) struct KernelRow {
    /// `k_a`
    pub a: Vec<f64>,
    /// `k_{a+1}`
    pub a1: Vec<f64>,
    /// `k_{a+2}`
    pub a2: Vec<f64>,
}

impl KernelSet {
    pub fn new(alpha: f64, tol: f64) -> Result<Self> {
        Ok(KernelSet {
            alpha,
            e1: MittagLeffler::new(alpha, 1.0, tol)?,
            e2: MittagLeffler::new(alpha, 2.0, tol)?,
            e_am1: MittagLeffler::new(alpha, alpha - 1.0, tol)?,
            e_a: MittagLeffler::new(alpha, alpha, tol)?,
            e_a1: MittagLeffler::new(alpha, alpha + 1.0, tol)?,
            e_a2: MittagLeffler::new(alpha, alpha + 2.0, tol)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn kernel(ml: &MittagLeffler, lam: f64, s: f64) -> Result<f64> {
        let b = ml.beta();
        if s == 0.0 {
            return if b > 1.0 {
                Ok(0.0)
            } else if b == 1.0 {
                ml.eval(0.0)
            } else {
                Err(Error::SingularKernel(format!("k_{b} is unbounded at 0")))
            };
        }
        let e = ml.eval(-lam * s.powf(ml.alpha()))?;
        Ok(if e == 0.0 { 0.0 } else { s.powf(b - 1.0) * e })
    }

    /// `(u, u', u'')` of the free evolution at `t > 0`.
    pub fn free(&self, lam: f64, t: f64, u0: f64, u1: f64) -> Result<(f64, f64, f64)> {
        let z = -lam * t.powf(self.alpha);
        let e1 = self.e1.eval(z)?;
        let e2 = self.e2.eval(z)?;
        let ea = Self::kernel(&self.e_a, lam, t)?;
        let eam1 = Self::kernel(&self.e_am1, lam, t)?;
        let u = e1 * u0 + t * e2 * u1;
        let du = -lam * ea * u0 + e1 * u1;
        let d2u = -lam * eam1 * u0 - lam * ea * u1;
        Ok((u, du, d2u))
    }

    /// `k_a`, `k_{a+1}`, `k_{a+2}`.
    pub(crate) fn triple(&self, lam: f64, s: f64) -> Result<[f64; 3]> {
        Ok([
            Self::kernel(&self.e_a, lam, s)?,
            Self::kernel(&self.e_a1, lam, s)?,
            Self::kernel(&self.e_a2, lam, s)?,
        ])
    }

    /// `k_{a-1}(s)`, `s > 0`.
    pub(crate) fn k_am1(&self, lam: f64, s: f64) -> Result<f64> {
        Self::kernel(&self.e_am1, lam, s)
    }

    /// Kernel values at every lag `j h`, `j = 0..=n`.
    pub(crate) fn lag_table(&self, lam: f64, nodes: &[f64]) -> Result<KernelRow> {
        let mut row = KernelRow::default();
        for t in nodes {
            let [a, a1, a2] = self.triple(lam, *t)?;
            row.a.push(a);
            row.a1.push(a1);
            row.a2.push(a2);
        }
        Ok(row)
    }

    /// Kernel values at `t_k - t_i`, `i = 0..=k`; taken from `lags` on
    /// uniform grids.
    pub(crate) fn row(
        &self,
        lam: f64,
        nodes: &[f64],
        k: usize,
        lags: Option<&KernelRow>,
        out: &mut KernelRow,
    ) -> Result<()> {
        out.a.clear();
        out.a1.clear();
        out.a2.clear();
        for i in 0..=k {
            let [a, a1, a2] = match lags {
                Some(l) => [l.a[k - i], l.a1[k - i], l.a2[k - i]],
                None => self.triple(lam, nodes[k] - nodes[i])?,
            };
            out.a.push(a);
            out.a1.push(a1);
            out.a2.push(a2);
        }
        Ok(())
    }
}

/// Weights of piecewise-linear product integration at node `k`:
/// `sum_i w_i f_i` approximates `int_0^{t_k} k(t_k - tau) f(tau) dtau` where
/// `k1`, `k2` are the first and second antiderivatives of `k` (vanishing at
/// 0) sampled at `t_k - t_i`.
pub(crate) fn pl_weights(nodes: &[f64], k1: &[f64], k2: &[f64], w: &mut Vec<f64>) {
    let k = k1.len() - 1;
    w.clear();
    w.resize(k + 1, 0.0);
    for i in 0..k {
        // sigma runs from a = t_k - t_{i+1} to b = t_k - t_i.
        let h = nodes[i + 1] - nodes[i];
        let m0 = k1[i] - k1[i + 1];
        let p = (k2[i] - k2[i + 1]) / h - k1[i + 1];
        w[i] += m0 - p;
        w[i + 1] += p;
    }
}

/// Weights for `u''` convolution terms at node `k`:
/// `f_0 k_{a-1}(t_k) + sum_i s_i (k_a(b_i) - k_a(a_i))` with slopes `s_i`.
pub(crate) fn slope_weights(nodes: &[f64], ka: &[f64], k_am1_t: f64, w: &mut Vec<f64>) {
    let k = ka.len() - 1;
    w.clear();
    w.resize(k + 1, 0.0);
    w[0] += k_am1_t;
    for i in 0..k {
        let d = (ka[i] - ka[i + 1]) / (nodes[i + 1] - nodes[i]);
        w[i] -= d;
        w[i + 1] += d;
    }
}

fn dot(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel of [`convolve_singular`]: `k(s) = s^{beta-1} E_{alpha,beta}(-lam s^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionKernel {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// `int_0^{t_k} k(t_k - tau) f(tau) dtau` for samples of `f` on `nodes`,
/// by piecewise-linear product integration with exact kernel moments.
pub fn convolve_singular(kernel: ConvolutionKernel, nodes: &[f64], samples: &[f64], k: usize, tol: f64) -> Result<f64> {
    let ConvolutionKernel { alpha, beta, lambda } = kernel;
    if !(beta > 0.0) {
        return Err(Error::SingularKernel(format!(
            "kernel s^{} is not integrable at 0",
            beta - 1.0
        )));
    }
    if !(alpha > 0.0 && alpha <= 2.0) || !(lambda >= 0.0) {
        return Err(Error::domain(format!(
            "convolution kernel needs alpha in (0, 2] and lambda >= 0, got alpha={alpha}, lambda={lambda}"
        )));
    }
    if nodes.len() != samples.len() || k >= nodes.len() {
        return Err(Error::Configuration("samples, nodes and node index disagree".into()));
    }
    TimeGrid::new(nodes.to_vec())?;
    if k == 0 {
        return Ok(0.0);
    }
    let e1 = MittagLeffler::new(alpha, beta + 1.0, tol)?;
    let e2 = MittagLeffler::new(alpha, beta + 2.0, tol)?;
    let mut k1 = Vec::with_capacity(k + 1);
    let mut k2 = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let s = nodes[k] - nodes[i];
        k1.push(KernelSet::kernel(&e1, lambda, s)?);
        k2.push(KernelSet::kernel(&e2, lambda, s)?);
    }
    let mut w = Vec::new();
    pl_weights(&nodes[..=k], &k1, &k2, &mut w);
    Ok(dot(&w, samples[..=k].iter().copied()))
}

struct ModeColumns {
    u: Vec<f64>,
    du: Vec<f64>,
    d2u: Option<Vec<f64>>,
}

fn accuracy(mode: usize, node: usize, e: Error) -> Error {
    match e {
        Error::Regime(reason) => Error::Accuracy { mode, node, reason },
        other => other,
    }
}

fn solve_mode(
    ks: &KernelSet,
    p: &LinearProblem,
    nodes: &[f64],
    uniform: bool,
    j: usize,
    want_d2: bool,
) -> Result<ModeColumns> {
    let lam = p.grid.modes()[j].eigenvalue;
    let u0 = p.u0.values()[j];
    let u1 = p.u1.values()[j];
    let n = nodes.len();
    let mut u = Vec::with_capacity(n);
    let mut du = Vec::with_capacity(n);
    let mut d2u = want_d2.then(|| Vec::with_capacity(n));
    u.push(u0);
    du.push(u1);
    if let Some(d) = d2u.as_mut() {
        d.push(f64::NAN);
    }
    for (k, t) in nodes.iter().enumerate().skip(1) {
        let (a, b, c) = ks.free(lam, *t, u0, u1).map_err(|e| accuracy(j, k, e))?;
        u.push(a);
        du.push(b);
        if let Some(d) = d2u.as_mut() {
            d.push(c);
        }
    }
    match &p.source {
        Source::Zero => {}
        Source::ClosedForm(terms) => {
            for m in terms[j].iter().filter(|m| m.coef != 0.0) {
                add_monomial(ks.alpha, lam, m, nodes, &mut u, &mut du, d2u.as_mut(), ks.e_a.tol())
                    .map_err(|e| accuracy(j, 0, e))?;
            }
        }
        Source::Sampled { values, .. } => {
            let f: Vec<f64> = values.iter().map(|r| r[j]).collect();
            if f.iter().any(|v| *v != 0.0) {
                let lags = if uniform {
                    Some(ks.lag_table(lam, nodes).map_err(|e| accuracy(j, 0, e))?)
                } else {
                    None
                };
                let mut row = KernelRow::default();
                let mut w = Vec::new();
                for k in 1..n {
                    ks.row(lam, nodes, k, lags.as_ref(), &mut row)
                        .map_err(|e| accuracy(j, k, e))?;
                    let fk = f[..=k].iter().copied();
                    pl_weights(&nodes[..=k], &row.a1, &row.a2, &mut w);
                    u[k] += dot(&w, fk.clone());
                    pl_weights(&nodes[..=k], &row.a, &row.a1, &mut w);
                    du[k] += dot(&w, fk.clone());
                    if let Some(d) = d2u.as_mut() {
                        let kt = ks.k_am1(lam, nodes[k]).map_err(|e| accuracy(j, k, e))?;
                        slope_weights(&nodes[..=k], &row.a, kt, &mut w);
                        d[k] += dot(&w, fk);
                    }
                }
            }
        }
    }
    Ok(ModeColumns { u, du, d2u })
}

/// Adds the exact response to `c t^p`:
/// `c Gamma(p+1) k_{a+p+1-i}(t)` for the `i`-th derivative.
#[allow(clippy::too_many_arguments)]
fn add_monomial(
    alpha: f64,
    lam: f64,
    m: &Monomial,
    nodes: &[f64],
    u: &mut [f64],
    du: &mut [f64],
    d2u: Option<&mut Vec<f64>>,
    tol: f64,
) -> Result<()> {
    let p = m.power;
    let c = m.coef * gamma(p + 1.0);
    let e0 = MittagLeffler::new(alpha, alpha + p + 1.0, tol)?;
    let e1 = MittagLeffler::new(alpha, alpha + p, tol)?;
    for (k, t) in nodes.iter().enumerate().skip(1) {
        u[k] += c * KernelSet::kernel(&e0, lam, *t)?;
        du[k] += c * KernelSet::kernel(&e1, lam, *t)?;
    }
    if let Some(d) = d2u {
        if alpha + p - 1.0 <= 0.0 {
            return Err(Error::SingularKernel(format!(
                "second derivative of the response to t^{p} is not defined for alpha = {alpha}"
            )));
        }
        let e2 = MittagLeffler::new(alpha, alpha + p - 1.0, tol)?;
        for (k, t) in nodes.iter().enumerate().skip(1) {
            d[k] += c * KernelSet::kernel(&e2, lam, *t)?;
        }
    }
    Ok(())
}

fn hypotheses(p: &LinearProblem, opts: &SolveOptions) -> Vec<HypothesisCheck> {
    let mut out = Vec::new();
    if let Some(q) = opts.source_integrability {
        let v = p.alpha - 2.0 + 1.0 / q;
        out.push(HypothesisCheck {
            condition: "alpha - 2 + 1/p > 0".into(),
            value: v,
            satisfied: v > 0.0,
        });
        if let Some(g) = opts.gamma_tilde {
            let v = p.alpha - 1.0 - p.alpha * g + 1.0 / q;
            out.push(HypothesisCheck {
                condition: "alpha - 1 - alpha*gamma_tilde + 1/p > 0".into(),
                value: v,
                satisfied: v > 0.0,
            });
        }
    }
    if let Some(g) = opts.gamma_tilde {
        out.push(HypothesisCheck {
            condition: "0 <= gamma_tilde <= 1".into(),
            value: g,
            satisfied: (0.0..=1.0).contains(&g),
        });
    }
    out
}

/// Evaluates the mild solution and its derivatives at every node of `tg`.
pub fn solve_linear(p: &LinearProblem, tg: &TimeGrid, opts: &SolveOptions) -> Result<Trajectory> {
    p.validate()?;
    let n_modes = p.grid.len();
    let nodes = tg.nodes();
    p.source.check_shape(nodes.len(), n_modes)?;
    let d2_approx = matches!(p.source, Source::Sampled { .. }) && !p.source.is_zero();
    if opts.second_derivative {
        if let Source::Sampled {
            differentiable: false, ..
        } = p.source
        {
            if !p.source.is_zero() {
                return Err(Error::Capability(
                    "second derivative requested for a sampled source not declared differentiable".into(),
                ));
            }
        }
    }
    let ks = KernelSet::new(p.alpha, opts.tol)?;
    let uniform = tg.uniform_step().is_some();
    let cols: Vec<ModeColumns> = (0..n_modes)
        .into_par_iter()
        .map(|j| solve_mode(&ks, p, nodes, uniform, j, opts.second_derivative))
        .collect::<Result<_>>()?;

    let n = nodes.len();
    let mut u = vec![vec![0.0; n_modes]; n];
    let mut du = vec![vec![0.0; n_modes]; n];
    let mut au = vec![vec![0.0; n_modes]; n];
    let mut dalpha = vec![vec![0.0; n_modes]; n];
    let mut d2u = opts.second_derivative.then(|| vec![vec![0.0; n_modes]; n]);
    for (j, c) in cols.iter().enumerate() {
        let lam = p.grid.modes()[j].eigenvalue;
        for k in 0..n {
            u[k][j] = c.u[k];
            du[k][j] = c.du[k];
            au[k][j] = lam * c.u[k];
            dalpha[k][j] = p.source.value(j, k, nodes[k]) - au[k][j];
            if let (Some(d), Some(src)) = (d2u.as_mut(), c.d2u.as_ref()) {
                d[k][j] = src[k];
            }
        }
    }
    Ok(Trajectory {
        times: nodes.to_vec(),
        grid: Arc::clone(&p.grid),
        u,
        du: Some(du),
        dalpha: Some(dalpha),
        au: Some(au),
        d2u,
        meta: TrajectoryMeta {
            alpha: p.alpha,
            label: p.label.clone(),
            grid_label: p.grid.label().to_string(),
            grading: tg.grading(),
            tol: opts.tol,
            d2u_approximate: opts.second_derivative && d2_approx,
            hypotheses: hypotheses(p, opts),
        },
    })
}

/// Norms that appear on the left of the a-priori estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `||u||_{V_gt}`
    UGammaTilde,
    /// `||u'||_{L2}`
    DuL2,
    /// `||D^a u||_{V_{-g}}`
    DalphaDual,
    /// `||D^a u||_{L2}`
    DalphaL2,
    /// `||A u||_{L2}`
    AuL2,
    /// `||u'||_{V_gt}`
    DuGammaTilde,
    /// `||u||_{V_g}`
    UGamma,
    /// `||u''||_{V_theta}`
    D2uTheta,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::UGammaTilde,
        Quantity::DuL2,
        Quantity::DalphaDual,
        Quantity::DalphaL2,
        Quantity::AuL2,
        Quantity::DuGammaTilde,
        Quantity::UGamma,
        Quantity::D2uTheta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::UGammaTilde => "u_gamma_tilde",
            Quantity::DuL2 => "du_l2",
            Quantity::DalphaDual => "dalpha_dual",
            Quantity::DalphaL2 => "dalpha_l2",
            Quantity::AuL2 => "au_l2",
            Quantity::DuGammaTilde => "du_gamma_tilde",
            Quantity::UGamma => "u_gamma",
            Quantity::D2uTheta => "d2u_theta",
        }
    }

    fn field_and_index(self, idx: &EstimateIndices) -> (Field, f64) {
        match self {
            Quantity::UGammaTilde => (Field::U, idx.gamma_tilde),
            Quantity::DuL2 => (Field::Du, 0.0),
            Quantity::DalphaDual => (Field::Dalpha, -idx.gamma),
            Quantity::DalphaL2 => (Field::Dalpha, 0.0),
            Quantity::AuL2 => (Field::Au, 0.0),
            Quantity::DuGammaTilde => (Field::Du, idx.gamma_tilde),
            Quantity::UGamma => (Field::U, idx.gamma),
            Quantity::D2uTheta => (Field::D2u, idx.theta),
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown quantity '{s}'")))
    }
}

/// Regularity indices `(gamma_tilde, gamma, theta)` used by the norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateIndices {
    pub gamma_tilde: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl Default for EstimateIndices {
    fn default() -> Self {
        EstimateIndices {
            gamma_tilde: 0.5,
            gamma: 0.5,
            theta: 0.0,
        }
    }
}

/// Per-node norm series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub times: Vec<f64>,
    pub series: Vec<(Quantity, Vec<f64>)>,
}

impl EstimateSeries {
    pub fn get(&self, q: Quantity) -> Option<&[f64]> {
        self.series.iter().find(|(k, _)| *k == q).map(|(_, v)| v.as_slice())
    }
}

/// Raw left-hand sides of the estimates at every node.
pub fn estimate_lhs(traj: &Trajectory, idx: &EstimateIndices, quantities: &[Quantity]) -> Result<EstimateSeries> {
    let mut series = Vec::with_capacity(quantities.len());
    for q in quantities {
        let (field, g) = q.field_and_index(idx);
        let data = traj.require(field)?;
        let gi = FractionalIndex::new(g)?;
        series.push((*q, data.iter().map(|row| traj.grid.norm(row, gi)).collect()));
    }
    Ok(EstimateSeries {
        times: traj.times.clone(),
        series,
    })
}
