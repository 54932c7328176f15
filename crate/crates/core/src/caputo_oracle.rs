//! Discrete Caputo derivatives and Riemann-Liouville convolutions on uniform
//! grids, used only to check solver output against the defining formula
//! `D_t^a u = g_{2-a} * u''`.
//!
//! Three variants are provided:
//!
//! * [`caputo`]: second differences of `u` give `u''` at the nodes, averaged
//!   to interval midpoints (extrapolated on the first and last interval), and
//!   `g_{2-a}` is integrated exactly over each interval. Order `3 - a` for
//!   smooth `u`; exact on quadratics.
//! * [`caputo_startup`]: the same scheme plus start-up weights on
//!   `u_1 - u_0, ..., u_5 - u_0` making it exact on `t, t^2, t^a, t^{a+1},
//!   t^{2a}`, the leading terms of mild solutions near `t = 0`.
//! * [`caputo_rl`]: the Riemann-Liouville form
//!   `d^2/dt^2 [g_{2-a} * (u - u(0) - t u'(0))]` with the convolution done by
//!   product integration and the outer derivative by second differences.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_solver::{pl_weights, solve_linear, LinearProblem, SolveOptions};
use crate::special::gamma;
use crate::spectral_operator::{FractionalIndex, SpectralGrid};
use crate::trajectory::{TimeGrid, Trajectory};

/// Samples `y_0..y_M` at `t_k = k h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    h: f64,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Configuration(format!("step must be positive, got {h}")));
        }
        if values.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "need at least 3 samples for second differences, got {}",
                values.len()
            )));
        }
        Ok(SampledSignal { h, values })
    }

    pub fn from_fn(h: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(h, (0..=m).map(|k| f(k as f64 * h)).collect())
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the last node, `M`.
    pub fn last(&self) -> usize {
        self.values.len() - 1
    }
}

/// Values at nodes `start..=M` of a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSeries {
    pub h: f64,
    pub start: usize,
    pub values: Vec<f64>,
}

impl NodeSeries {
    pub fn at(&self, node: usize) -> Option<f64> {
        node.checked_sub(self.start).and_then(|i| self.values.get(i).copied())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| (self.start + i) as f64 * self.h)
            .collect()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::domain(format!("alpha must lie in (1, 2), got {alpha}")));
    }
    Ok(())
}

/// `int_{t_{k-1}}^{t_k} g_{2-a}(t_n - s) ds` as a function of `n - k`.
fn interval_weights(alpha: f64, h: f64, m: usize) -> Vec<f64> {
    let g = 2.0 - alpha;
    let c = h.powf(g) / gamma(g + 1.0);
    (0..m)
        .map(|j| c * ((j + 1) as f64).powf(g) - c * (j as f64).powf(g))
        .collect()
}

/// `u''` on interval `[t_{j-1}, t_j]` for `j = 1..=M` (index 0 unused).
fn midpoint_second_derivative(u: &[f64], h: f64) -> Vec<f64> {
    let m = u.len() - 1;
    let h2 = h * h;
    let d2: Vec<f64> = (0..=m)
        .map(|j| {
            if j == 0 || j == m {
                f64::NAN
            } else {
                (u[j + 1] - 2.0 * u[j] + u[j - 1]) / h2
            }
        })
        .collect();
    let mut mid = vec![0.0; m + 1];
    if m == 2 {
        mid[1] = d2[1];
        mid[2] = d2[1];
        return mid;
    }
    mid[1] = 1.5 * d2[1] - 0.5 * d2[2];
    for j in 2..m {
        mid[j] = 0.5 * (d2[j - 1] + d2[j]);
    }
    mid[m] = 1.5 * d2[m - 1] - 0.5 * d2[m - 2];
    mid
}

fn plain(u: &[f64], h: f64, b: &[f64]) -> Vec<f64> {
    let m = u.len() - 1;
    let mid = midpoint_second_derivative(u, h);
    (2..=m).map(|n| (1..=n).map(|k| b[n - k] * mid[k]).sum()).collect()
}

/// Plain midpoint scheme; values at nodes `2..=M`.
pub fn caputo(signal: &SampledSignal, alpha: f64) -> Result<NodeSeries> {
    check_alpha(alpha)?;
    let b = interval_weights(alpha, signal.h, signal.last());
    Ok(NodeSeries {
        h: signal.h,
        start: 2,
        values: plain(&signal.values, signal.h, &b),
    })
}

/// Start-up weights for [`caputo_startup`]; they depend only on
/// `(alpha, h, M)` and can be shared across signals.
#[derive(Debug, Clone)]
pub struct StartupCorrection {
    alpha: f64,
    h: f64,
    m: usize,
    b: Vec<f64>,
    /// `weights[n - 2][i]` multiplies `u_{i+1} - u_0`.
    weights: Vec<Vec<f64>>,
}

impl StartupCorrection {
    pub const N_WEIGHTS: usize = 5;

    pub fn new(alpha: f64, h: f64, m: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if m < 2 {
            return Err(Error::InsufficientData("need M >= 2".into()));
        }
        let b = interval_weights(alpha, h, m);
        let s = Self::N_WEIGHTS;
        if m < s + 1 {
            return Ok(StartupCorrection {
                alpha,
                h,
                m,
                b,
                weights: Vec::new(),
            });
        }
        let exps = [1.0, 2.0, alpha, alpha + 1.0, 2.0 * alpha];
        let times: Vec<f64> = (0..=m).map(|k| k as f64 * h).collect();
        let base: Vec<Vec<f64>> = exps
            .iter()
            .map(|e| {
                let u: Vec<f64> = times.iter().map(|t| t.powf(*e)).collect();
                plain(&u, h, &b)
            })
            .collect();
        // Rows scaled by h^-e: matrix entries k^e.
        let mat: Vec<Vec<f64>> = exps
            .iter()
            .map(|e| (1..=s).map(|k| (k as f64).powf(*e)).collect())
            .collect();
        let mut weights = Vec::with_capacity(m - 1);
        for n in 2..=m {
            let rhs: Vec<f64> = exps
                .iter()
                .enumerate()
                .map(|(l, e)| {
                    let exact = if *e == 1.0 {
                        0.0
                    } else {
                        gamma(e + 1.0) / gamma(e + 1.0 - alpha) * times[n].powf(e - alpha)
                    };
                    (exact - base[l][n - 2]) / h.powf(*e)
                })
                .collect();
            weights.push(solve_dense(mat.clone(), rhs)?);
        }
        Ok(StartupCorrection {
            alpha,
            h,
            m,
            b,
            weights,
        })
    }

    pub fn apply(&self, signal: &SampledSignal) -> Result<NodeSeries> {
        if signal.last() != self.m || (signal.h - self.h).abs() > 1e-14 * self.h {
            return Err(Error::Configuration(
                "signal does not match the grid of the start-up correction".into(),
            ));
        }
        let u = &signal.values;
        let mut values = plain(u, self.h, &self.b);
        for (n, w) in self.weights.iter().enumerate() {
            values[n] += w.iter().enumerate().map(|(i, wi)| wi * (u[i + 1] - u[0])).sum::<f64>();
        }
        Ok(NodeSeries {
            h: self.h,
            start: 2,
            values,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Gaussian elimination with partial pivoting for the small start-up systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[piv][col] == 0.0 {
            return Err(Error::Regime("singular start-up system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for r in col + 1..n {
            let f = a[r][col] / pivot[col];
            for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Midpoint scheme with start-up correction; values at nodes `2..=M`.
pub fn caputo_startup(signal: &SampledSignal, alpha: f64) -> Result<NodeSeries> {
    StartupCorrection::new(alpha, signal.h, signal.last())?.apply(signal)
}

/// Riemann-Liouville form with known `u'(0)`; values at nodes `1..=M`
/// (`M >= 3`).
pub fn caputo_rl(signal: &SampledSignal, alpha: f64, initial_velocity: f64) -> Result<NodeSeries> {
    check_alpha(alpha)?;
    let m = signal.last();
    if m < 3 {
        return Err(Error::InsufficientData("Riemann-Liouville form needs M >= 3".into()));
    }
    let h = signal.h;
    let u0 = signal.values[0];
    let w: Vec<f64> = signal
        .values
        .iter()
        .enumerate()
        .map(|(k, u)| u - u0 - k as f64 * h * initial_velocity)
        .collect();
    let g = gconv(2.0 - alpha, &SampledSignal::new(h, w)?)?.values;
    let h2 = h * h;
    let mut values: Vec<f64> = (1..m).map(|n| (g[n + 1] - 2.0 * g[n] + g[n - 1]) / h2).collect();
    values.push((2.0 * g[m] - 5.0 * g[m - 1] + 4.0 * g[m - 2] - g[m - 3]) / h2);
    Ok(NodeSeries { h, start: 1, values })
}

fn check_gconv_order(gamma_: f64) -> Result<()> {
    if !(gamma_ > 0.0 && gamma_ < 1.0) {
        return Err(Error::domain(format!(
            "convolution order must lie in (0, 1), got {gamma_}"
        )));
    }
    Ok(())
}

/// `(g_gamma * y)(t_k)` at every node (`0` at `k = 0`).
pub fn gconv(gamma_: f64, signal: &SampledSignal) -> Result<NodeSeries> {
    check_gconv_order(gamma_)?;
    let m = signal.last();
    let h = signal.h;
    let c1 = 1.0 / gamma(gamma_ + 1.0);
    let c2 = 1.0 / gamma(gamma_ + 2.0);
    // Antiderivatives at the lags j h.
    let k1: Vec<f64> = (0..=m).map(|j| c1 * (j as f64 * h).powf(gamma_)).collect();
    let k2: Vec<f64> = (0..=m).map(|j| c2 * (j as f64 * h).powf(gamma_ + 1.0)).collect();
    let y = &signal.values;
    let values = (0..=m)
        .into_par_iter()
        .map(|n| {
            let mut acc = 0.0;
            for i in 0..n {
                let (b, a) = (n - i, n - i - 1);
                let m0 = k1[b] - k1[a];
                let p = (k2[b] - k2[a]) / h - k1[a];
                acc += y[i] * (m0 - p) + y[i + 1] * p;
            }
            acc
        })
        .collect();
    Ok(NodeSeries { h, start: 0, values })
}

/// `(g_gamma * y)(t_k)` on arbitrary increasing nodes starting at 0.
pub fn gconv_nodes(gamma_: f64, nodes: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    check_gconv_order(gamma_)?;
    if nodes.len() != values.len() {
        return Err(Error::Configuration("nodes and values differ in length".into()));
    }
    TimeGrid::new(nodes.to_vec())?;
    let c1 = 1.0 / gamma(gamma_ + 1.0);
    let c2 = 1.0 / gamma(gamma_ + 2.0);
    Ok((0..nodes.len())
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let k1: Vec<f64> = nodes[..=k].iter().map(|t| c1 * (nodes[k] - t).powf(gamma_)).collect();
            let k2: Vec<f64> = nodes[..=k]
                .iter()
                .map(|t| c2 * (nodes[k] - t).powf(gamma_ + 1.0))
                .collect();
            let mut w = Vec::new();
            pl_weights(&nodes[..=k], &k1, &k2, &mut w);
            w.iter().zip(values).map(|(a, b)| a * b).sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaputoVariant {
    Plain,
    #[default]
    StartupCorrected,
    RiemannLiouville,
}

impl std::str::FromStr for CaputoVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(CaputoVariant::Plain),
            "startup-corrected" | "startup" => Ok(CaputoVariant::StartupCorrected),
            "riemann-liouville" | "rl" => Ok(CaputoVariant::RiemannLiouville),
            _ => Err(Error::Configuration(format!("unknown Caputo variant '{s}'"))),
        }
    }
}

/// `r(t_k) = ||D^a u + A u - f||_{L2}` at the nodes where the oracle is
/// defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub variant: CaputoVariant,
    pub times: Vec<f64>,
    pub absolute: Vec<f64>,
    /// `absolute / max(1, ||f||)`.
    pub relative: Vec<f64>,
    /// `||u||_{L2}` at the same nodes.
    pub solution_norm: Vec<f64>,
}

impl ResidualSeries {
    /// Largest relative residual with `t_lo <= t <= t_hi`.
    pub fn max_relative(&self, t_lo: f64, t_hi: f64) -> f64 {
        self.window_max(&self.relative, t_lo, t_hi)
    }

    pub fn max_absolute(&self, t_lo: f64, t_hi: f64) -> f64 {
        self.window_max(&self.absolute, t_lo, t_hi)
    }

    fn window_max(&self, v: &[f64], t_lo: f64, t_hi: f64) -> f64 {
        let eps = 1e-12 * t_hi.abs().max(1.0);
        self.times
            .iter()
            .zip(v)
            .filter(|(t, _)| **t >= t_lo - eps && **t <= t_hi + eps)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max)
    }
}

/// Oracle residual of a trajectory on a uniform grid. `source[node][mode]`
/// holds `f` at the trajectory nodes.
pub fn residual(
    grid: &SpectralGrid,
    traj: &Trajectory,
    source: &[Vec<f64>],
    variant: CaputoVariant,
) -> Result<ResidualSeries> {
    let h = traj
        .uniform_step()
        .ok_or_else(|| Error::Configuration("residual needs a trajectory on a uniform grid starting at 0".into()))?;
    if *traj.grid != *grid {
        return Err(Error::Configuration(
            "trajectory lives on a different spectral grid".into(),
        ));
    }
    let n = traj.len();
    if source.len() != n || source.iter().any(|r| r.len() != grid.len()) {
        return Err(Error::Configuration(format!(
            "source samples must be {n} nodes x {} modes",
            grid.len()
        )));
    }
    let alpha = traj.meta.alpha;
    check_alpha(alpha)?;
    let m = n - 1;
    let au = traj.require(crate::trajectory::Field::Au)?;
    let correction = match variant {
        CaputoVariant::StartupCorrected => Some(StartupCorrection::new(alpha, h, m)?),
        _ => None,
    };
    let du0 = traj.du.as_ref().map(|d| d[0].clone());
    if variant == CaputoVariant::RiemannLiouville && du0.is_none() {
        return Err(Error::Capability("Riemann-Liouville residual needs u'(0)".into()));
    }
    let per_mode: Vec<NodeSeries> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let sig = SampledSignal::new(h, traj.u.iter().map(|r| r[j]).collect())?;
            match variant {
                CaputoVariant::Plain => caputo(&sig, alpha),
                CaputoVariant::StartupCorrected => correction.as_ref().expect("built").apply(&sig),
                CaputoVariant::RiemannLiouville => caputo_rl(&sig, alpha, du0.as_ref().expect("checked")[j]),
            }
        })
        .collect::<Result<_>>()?;
    let start = per_mode[0].start;
    let mut out = ResidualSeries {
        variant,
        times: Vec::new(),
        absolute: Vec::new(),
        relative: Vec::new(),
        solution_norm: Vec::new(),
    };
    let mut row = vec![0.0; grid.len()];
    for k in start..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = per_mode[j].values[k - start] + au[k][j] - source[k][j];
        }
        let abs = grid.norm(&row, FractionalIndex::ZERO);
        let fnorm = grid.norm(&source[k], FractionalIndex::ZERO);
        out.times.push(traj.times[k]);
        out.absolute.push(abs);
        out.relative.push(abs / fnorm.max(1.0));
        out.solution_norm.push(grid.norm(&traj.u[k], FractionalIndex::ZERO));
    }
    Ok(out)
}

/// Re-evaluates the solution formula on the uniform grid `k h`, `k <= T/h`,
/// and returns its oracle residual.
pub fn residual_linear(
    p: &LinearProblem,
    t_end: f64,
    h: f64,
    variant: CaputoVariant,
    opts: &SolveOptions,
) -> Result<ResidualSeries> {
    let m = (t_end / h).round();
    if !(m >= 3.0) || ((m * h - t_end).abs() > 1e-9 * t_end) {
        return Err(Error::Configuration(format!(
            "step {h} does not divide T = {t_end} into at least 3 intervals"
        )));
    }
    let tg = TimeGrid::uniform(t_end, m as usize)?;
    let traj = solve_linear(p, &tg, opts)?;
    let source = p.source.sample(tg.nodes(), p.grid.len())?;
    residual(&Arc::clone(&p.grid), &traj, &source, variant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mittag_leffler::MittagLeffler;

    fn exact_power(e: f64, alpha: f64, t: f64) -> f64 {
        gamma(e + 1.0) / gamma(e + 1.0 - alpha) * t.powf(e - alpha)
    }

    #[test]
    fn quadratic_is_exact() {
        let h = 1e-2;
        let sig = SampledSignal::from_fn(h, 100, |t| t * t).unwrap();
        let d = caputo(&sig, 1.5).unwrap();
        for (t, v) in d.times().iter().zip(&d.values) {
            assert!((v - exact_power(2.0, 1.5, *t)).abs() < 1e-11);
        }
        let t1 = 1.0;
        let rel = (d.at(100).unwrap() - exact_power(2.0, 1.5, t1)).abs() / exact_power(2.0, 1.5, t1);
        assert!(rel <= 1e-3);
    }

    #[test]
    fn affine_gives_zero() {
        let sig = SampledSignal::from_fn(0.01, 50, |t| 3.0 - 2.0 * t).unwrap();
        for f in [caputo(&sig, 1.3).unwrap(), caputo_startup(&sig, 1.3).unwrap()] {
            assert!(f.values.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            SampledSignal::new(0.1, vec![0.0, 1.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn gconv_examples() {
        let h = 1e-3;
        let ones = SampledSignal::from_fn(h, 1000, |_| 1.0).unwrap();
        let g = gconv(0.3, &ones).unwrap();
        assert!((g.at(1000).unwrap() - 1.0 / gamma(1.3)).abs() < 1e-13);
        let lin = SampledSignal::from_fn(h, 1000, |t| t).unwrap();
        let g = gconv(0.5, &lin).unwrap();
        let want = 1.0 / gamma(2.5);
        assert!(((g.at(1000).unwrap() - want) / want).abs() <= 1e-6);
        let zero = SampledSignal::from_fn(h, 10, |_| 0.0).unwrap();
        assert!(gconv(0.5, &zero).unwrap().values.iter().all(|v| *v == 0.0));
        assert!(gconv(1.5, &zero).is_err());
    }

    #[test]
    fn gconv_nonuniform_matches_uniform() {
        let nodes: Vec<f64> = (0..=40).map(|k| (k as f64 / 40.0).powi(2)).collect();
        let vals: Vec<f64> = nodes.iter().map(|t| t * t).collect();
        let g = gconv_nodes(0.4, &nodes, &vals).unwrap();
        let want = 2.0 / gamma(3.4);
        assert!((g[40] - want).abs() < 2e-3 * want);
    }

    #[test]
    fn eigenfunction_identity_with_startup() {
        let (alpha, lam, h) = (1.5, 1.0, 5e-4);
        let m = 2000;
        let e = MittagLeffler::new(alpha, 1.0, 1e-14).unwrap();
        let sig = SampledSignal::from_fn(h, m, |t| e.eval(-lam * t.powf(alpha)).unwrap()).unwrap();
        let d = caputo_startup(&sig, alpha).unwrap();
        let mut worst = 0.0_f64;
        for k in 200..=m {
            let u = sig.values()[k];
            worst = worst.max((d.at(k).unwrap() + lam * u).abs() / (lam * u.abs()));
        }
        assert!(worst <= 5e-3, "{worst}");
    }

    #[test]
    fn variants_agree_on_smooth_signals() {
        let h = 1e-3;
        let sig = SampledSignal::from_fn(h, 1000, |t| (2.0 * t).sin() + t * t * t).unwrap();
        let a = caputo(&sig, 1.4).unwrap();
        let b = caputo_rl(&sig, 1.4, 2.0).unwrap();
        for k in 100..=1000 {
            let (x, y) = (a.at(k).unwrap(), b.at(k).unwrap());
            assert!((x - y).abs() < 1e-3 * x.abs().max(1.0), "k={k} {x} {y}");
        }
    }

    #[test]
    fn startup_weights_are_exact_on_basis() {
        let alpha = 1.7;
        let h = 0.01;
        let corr = StartupCorrection::new(alpha, h, 100).unwrap();
        for e in [alpha, alpha + 1.0, 2.0 * alpha] {
            let sig = SampledSignal::from_fn(h, 100, |t| t.powf(e)).unwrap();
            let d = corr.apply(&sig).unwrap();
            for k in [2usize, 10, 100] {
                let want = exact_power(e, alpha, k as f64 * h);
                assert!(
                    (d.at(k).unwrap() - want).abs() < 1e-8 * want.abs().max(1.0),
                    "e={e} k={k}"
                );
            }
        }
    }
}
