//! Power-law exponents of solution norms as `t -> 0+`, checked against the
//! a-priori estimate ladder, plus kernel inequality and bound checks.
//!
//! Upper-bound estimates are only attained with equality on instances whose
//! data sit exactly at the regularity threshold. On a single mode every
//! norm behaves like a Taylor polynomial near 0, so the equality instances
//! here live on a log-uniform spectral grid (the scale-free measure
//! `dm / m`) with data `m^{-k}`: the norm then factors as `t^e` times a
//! convergent integral over `mu = m t^alpha`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_solver::{
    estimate_lhs, solve_linear, EstimateIndices, LinearProblem, Quantity, SolveOptions, Source,
};
use crate::mittag_leffler::{kernel_eval, kernel_time_derivative, KernelDerivative, KernelSpec, MittagLeffler};
use crate::special::recip_gamma;
use crate::spectral_operator::{FractionalIndex, GridFunction, SpectralGrid};
use crate::trajectory::{csv_err, fmt_num, Field, HypothesisCheck, TimeGrid, Trajectory};

/// Least-squares fit of `log v = e log t + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub stderr: f64,
    pub r2: f64,
    pub n_points: usize,
    /// Points in the window whose value was exactly 0.
    pub excluded_zeros: usize,
}

/// Fits a power law to the points with `t` in `[lo, hi]`.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<PowerFit> {
    if times.len() != values.len() {
        return Err(Error::Configuration("times and values differ in length".into()));
    }
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zeros = 0;
    for (k, (&t, &v)) in times.iter().zip(values).enumerate() {
        if !(t >= lo && t <= hi) || t <= 0.0 {
            continue;
        }
        if v == 0.0 {
            zeros += 1;
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Validation {
                index: k,
                reason: format!("value {v} at t = {t} is not a positive finite number"),
            });
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 6 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs >= 6 positive points in [{lo:e}, {hi:e}], found {n} ({zeros} zeros excluded)"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all fit points share one time".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy <= 1e-28 * nf { 1.0 } else { 1.0 - sse / syy };
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(PowerFit {
        exponent: slope,
        stderr,
        r2,
        n_points: n,
        excluded_zeros: zeros,
    })
}

/// The estimates of the linear theory, named by what they bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// `||u||_{V_gt} <~ t^{1 - a gt} ||u1||`
    StateFromVelocity,
    /// `||u'|| <~ t^{a gt - 1} ||u0||_{V_gt}`
    VelocityFromState,
    /// `||D^a u||_{V_{-g}} <~ t^{a (g + gt - 1)} ||u0||_{V_gt}`
    CaputoDualFromState,
    /// `||D^a u|| + ||A u|| <~ t^{a (g - 1)} ||u0||_{V_g}`
    CaputoFromSmoothState,
    /// `||u'||_{V_gt} <~ t^{a (g - gt) - 1} ||u0||_{V_g}`
    SmoothVelocityFromState,
    /// `||u''||_{V_th} <~ t^{a (g - th) - 2} ||u0||_{V_g}`
    AccelerationFromState,
}

impl Estimate {
    pub const ALL: [Estimate; 6] = [
        Estimate::StateFromVelocity,
        Estimate::VelocityFromState,
        Estimate::CaputoDualFromState,
        Estimate::CaputoFromSmoothState,
        Estimate::SmoothVelocityFromState,
        Estimate::AccelerationFromState,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimate::StateFromVelocity => "state_from_velocity",
            Estimate::VelocityFromState => "velocity_from_state",
            Estimate::CaputoDualFromState => "caputo_dual_from_state",
            Estimate::CaputoFromSmoothState => "caputo_from_smooth_state",
            Estimate::SmoothVelocityFromState => "smooth_velocity_from_state",
            Estimate::AccelerationFromState => "acceleration_from_state",
        }
    }

    pub fn quantity(self) -> Quantity {
        match self {
            Estimate::StateFromVelocity => Quantity::UGammaTilde,
            Estimate::VelocityFromState => Quantity::DuL2,
            Estimate::CaputoDualFromState => Quantity::DalphaDual,
            Estimate::CaputoFromSmoothState => Quantity::DalphaL2,
            Estimate::SmoothVelocityFromState => Quantity::DuGammaTilde,
            Estimate::AccelerationFromState => Quantity::D2uTheta,
        }
    }

    /// Whether the estimate belongs to the strong (second-derivative) theory.
    pub fn is_strong(self) -> bool {
        matches!(
            self,
            Estimate::CaputoFromSmoothState | Estimate::SmoothVelocityFromState | Estimate::AccelerationFromState
        )
    }

    /// Weak estimates: `gt = 1/2`, `g = 1/4`. Strong estimates: `g = 3/4`,
    /// `gt = 1/2`, `theta = 1/4`. Every exponent is then non-zero and all
    /// index conditions hold strictly.
    pub fn default_indices(self) -> EstimateIndices {
        if self.is_strong() {
            EstimateIndices {
                gamma_tilde: 0.5,
                gamma: 0.75,
                theta: 0.25,
            }
        } else {
            EstimateIndices {
                gamma_tilde: 0.5,
                gamma: 0.25,
                theta: 0.0,
            }
        }
    }

    pub fn exponent(self, alpha: f64, idx: &EstimateIndices) -> f64 {
        let (gt, g, th) = (idx.gamma_tilde, idx.gamma, idx.theta);
        match self {
            Estimate::StateFromVelocity => 1.0 - alpha * gt,
            Estimate::VelocityFromState => alpha * gt - 1.0,
            Estimate::CaputoDualFromState => alpha * (g + gt - 1.0),
            Estimate::CaputoFromSmoothState => alpha * (g - 1.0),
            Estimate::SmoothVelocityFromState => alpha * (g - gt) - 1.0,
            Estimate::AccelerationFromState => alpha * (g - th) - 2.0,
        }
    }

    /// Index conditions under which the estimate holds, for
    /// homogeneous problems (no source, so the integrability exponent is free).
    pub fn hypotheses(self, alpha: f64, idx: &EstimateIndices) -> Vec<HypothesisCheck> {
        let (gt, g, th) = (idx.gamma_tilde, idx.gamma, idx.theta);
        let check = |condition: &str, value: f64, satisfied: bool| HypothesisCheck {
            condition: condition.into(),
            value,
            satisfied,
        };
        if !self.is_strong() {
            return vec![
                check("1/2 <= gamma_tilde <= 1/alpha", gt, (0.5..=1.0 / alpha).contains(&gt)),
                check("0 <= gamma <= 1/2", g, (0.0..=0.5).contains(&g)),
                check("gamma + gamma_tilde <= 1", g + gt, g + gt <= 1.0),
            ];
        }
        let mut out = vec![
            check("1/2 <= gamma <= 1", g, (0.5..=1.0).contains(&g)),
            check("0 <= gamma_tilde <= 1", gt, (0.0..=1.0).contains(&gt)),
        ];
        match self {
            Estimate::SmoothVelocityFromState => {
                out.push(check(
                    "gamma - gamma_tilde in (0, 1]",
                    g - gt,
                    g - gt > 0.0 && g - gt <= 1.0,
                ));
            }
            Estimate::AccelerationFromState => {
                out.push(check("0 <= theta < 1", th, (0.0..1.0).contains(&th)));
                out.push(check(
                    "gamma - theta in [0, 1]",
                    g - th,
                    (0.0..=1.0).contains(&(g - th)),
                ));
                out.push(check(
                    "gamma_tilde - theta in [0, 1]",
                    gt - th,
                    (0.0..=1.0).contains(&(gt - th)),
                ));
            }
            _ => {}
        }
        out
    }

    /// Decay `k` of the data `m^{-k}` that attains the estimate with equality.
    /// `None` when the exponent is 0 at the threshold and a single mode
    /// already attains it.
    fn threshold_decay(self, idx: &EstimateIndices) -> Option<(bool, f64)> {
        // (data is velocity?, k)
        match self {
            Estimate::StateFromVelocity => Some((true, 0.0)),
            Estimate::VelocityFromState => Some((false, idx.gamma_tilde)),
            Estimate::CaputoDualFromState => {
                (idx.gamma + idx.gamma_tilde < 1.0 - 1e-12).then_some((false, idx.gamma_tilde))
            }
            Estimate::CaputoFromSmoothState => (idx.gamma < 1.0 - 1e-12).then_some((false, idx.gamma)),
            Estimate::SmoothVelocityFromState | Estimate::AccelerationFromState => Some((false, idx.gamma)),
        }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimate::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown estimate '{s}'")))
    }
}

/// How a fitted exponent is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// `|fitted - theoretical| <= tol` and `R^2 >= 0.99`.
    Saturation,
    /// `fitted >= theoretical - tol`.
    UpperBound,
}

/// Integrability parameters carried as report metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegrabilityParams {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub l: Option<f64>,
    pub zeta: Option<f64>,
    pub zeta_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub estimate: Estimate,
    pub quantity: Quantity,
    pub alpha: f64,
    pub indices: EstimateIndices,
    pub theoretical_exponent: f64,
    pub mode: RateMode,
    pub tolerance: f64,
    pub hypotheses: Vec<HypothesisCheck>,
    pub integrability: IntegrabilityParams,
}

pub const SINGLE_KERNEL_TOL: f64 = 0.05;
pub const COMPOSITE_TOL: f64 = 0.1;

impl RateSpec {
    pub fn new(estimate: Estimate, alpha: f64, indices: EstimateIndices, mode: RateMode) -> Self {
        let tolerance = match mode {
            RateMode::Saturation => SINGLE_KERNEL_TOL,
            RateMode::UpperBound => COMPOSITE_TOL,
        };
        RateSpec {
            estimate,
            quantity: estimate.quantity(),
            alpha,
            indices,
            theoretical_exponent: estimate.exponent(alpha, &indices),
            mode,
            tolerance,
            hypotheses: estimate.hypotheses(alpha, &indices),
            integrability: IntegrabilityParams::default(),
        }
    }

    /// Equality test with the estimate's default indices.
    pub fn saturation(estimate: Estimate, alpha: f64) -> Self {
        Self::new(estimate, alpha, estimate.default_indices(), RateMode::Saturation)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { reason: String },
    Skipped { reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn failed(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail { .. } => "fail",
            Verdict::Skipped { .. } => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub spec: RateSpec,
    pub fit: Option<PowerFit>,
    pub window: (f64, f64),
    pub verdict: Verdict,
    /// All `(t, value)` pairs of the quantity, window or not.
    pub points: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

/// `[1e-4 T, 1e-2 T]`.
pub fn default_window(t_end: f64) -> (f64, f64) {
    (1e-4 * t_end, 1e-2 * t_end)
}

/// One report per spec on the given trajectory.
pub fn verify_rates(traj: &Trajectory, specs: &[RateSpec], window: Option<(f64, f64)>) -> Vec<RateReport> {
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let window = window.unwrap_or_else(|| default_window(t_end));
    specs
        .iter()
        .map(|spec| {
            let mut report = RateReport {
                spec: spec.clone(),
                fit: None,
                window,
                verdict: Verdict::Pass,
                points: Vec::new(),
                notes: Vec::new(),
            };
            if let Some(h) = spec.hypotheses.iter().find(|h| !h.satisfied) {
                report.verdict = Verdict::Skipped {
                    reason: format!("hypothesis '{}' fails (value {})", h.condition, h.value),
                };
                return report;
            }
            let series = match estimate_lhs(traj, &spec.indices, &[spec.quantity]) {
                Ok(s) => s,
                Err(e) => {
                    report.verdict = Verdict::Skipped { reason: e.to_string() };
                    return report;
                }
            };
            let values = series.get(spec.quantity).expect("requested quantity");
            report.points = traj.times.iter().copied().zip(values.iter().copied()).collect();
            let in_window: Vec<f64> = report
                .points
                .iter()
                .filter(|(t, _)| *t >= window.0 && *t <= window.1)
                .map(|p| p.1)
                .collect();
            if !in_window.is_empty() && in_window.iter().all(|v| *v == 0.0) {
                report
                    .notes
                    .push(format!("all {} values in the window are 0", in_window.len()));
                return report;
            }
            match fit_power_law(&traj.times, values, window) {
                Ok(fit) => {
                    if fit.excluded_zeros > 0 {
                        report
                            .notes
                            .push(format!("{} zero values excluded", fit.excluded_zeros));
                    }
                    let diff = fit.exponent - spec.theoretical_exponent;
                    report.verdict = match spec.mode {
                        RateMode::Saturation if diff.abs() > spec.tolerance => Verdict::Fail {
                            reason: format!(
                                "fitted {:.4} differs from {:.4} by more than {}",
                                fit.exponent, spec.theoretical_exponent, spec.tolerance
                            ),
                        },
                        RateMode::Saturation if fit.r2 < 0.99 => Verdict::Fail {
                            reason: format!("fit R^2 = {:.4} below 0.99", fit.r2),
                        },
                        RateMode::UpperBound if diff < -spec.tolerance => Verdict::Fail {
                            reason: format!(
                                "fitted {:.4} below {:.4} - {}",
                                fit.exponent, spec.theoretical_exponent, spec.tolerance
                            ),
                        },
                        _ => Verdict::Pass,
                    };
                    report.fit = Some(fit);
                }
                Err(e) => report.verdict = Verdict::Fail { reason: e.to_string() },
            }
            report
        })
        .collect()
}

/// Parameters of the equality instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationSetup {
    pub m_min: f64,
    pub m_max: f64,
    pub per_decade: usize,
    pub t_end: f64,
    pub nodes: usize,
}

impl Default for SaturationSetup {
    fn default() -> Self {
        SaturationSetup {
            m_min: 1e-3,
            m_max: 1e12,
            per_decade: 12,
            t_end: 1.0,
            nodes: 128,
        }
    }
}

/// Homogeneous problem attaining `spec` with equality, with its time grid.
pub fn saturation_instance(spec: &RateSpec, setup: &SaturationSetup) -> Result<(LinearProblem, TimeGrid)> {
    let tg = TimeGrid::graded(
        setup.t_end,
        setup.nodes,
        TimeGrid::default_grading(spec.alpha, spec.indices.gamma_tilde.max(0.25)),
    )?;
    let p = match spec.estimate.threshold_decay(&spec.indices) {
        Some((velocity, k)) => {
            let grid = Arc::new(SpectralGrid::log_uniform(setup.m_min, setup.m_max, setup.per_decade)?);
            let data = GridFunction::from_eigenvalues(&grid, |m| m.powf(-k))?;
            let zero = GridFunction::zeros(&grid);
            let (u0, u1) = if velocity { (zero, data) } else { (data, zero) };
            LinearProblem::new(grid, spec.alpha, u0, u1, Source::Zero)?
        }
        None => LinearProblem::single_mode(1.0, spec.alpha, 1.0, 0.0, Source::Zero)?,
    };
    Ok((p.with_label(format!("equality instance for {}", spec.estimate)), tg))
}

/// Builds, solves and fits the equality instance of `spec`.
pub fn run_saturation(spec: &RateSpec, setup: &SaturationSetup) -> Result<RateReport> {
    let (p, tg) = saturation_instance(spec, setup)?;
    let opts = SolveOptions {
        second_derivative: spec.quantity == Quantity::D2uTheta,
        ..SolveOptions::default()
    };
    let traj = solve_linear(&p, &tg, &opts)?;
    Ok(verify_rates(&traj, std::slice::from_ref(spec), None).remove(0))
}

pub fn reports_json(reports: &[RateReport]) -> serde_json::Value {
    serde_json::json!({
        "all_pass": reports.iter().all(|r| !r.verdict.failed()),
        "reports": reports,
    })
}

/// Flat CSV: one row per (report, point).
pub fn write_points_csv<W: Write>(reports: &[RateReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimate", "quantity", "alpha", "time", "value", "in_window"])
        .map_err(csv_err)?;
    for r in reports {
        for (t, v) in &r.points {
            let inside = *t >= r.window.0 && *t <= r.window.1;
            w.write_record([
                r.spec.estimate.name().to_string(),
                r.spec.quantity.name().to_string(),
                fmt_num(r.spec.alpha),
                fmt_num(*t),
                fmt_num(*v),
                inside.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Log-spaced samples of `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// The two scaled kernel inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum KernelInequality {
    /// `|lam^b t^g E(-lam t^a)| <= C t^{g - a b}`, `0 <= b <= 1`, `0 < g < a`.
    Scaled { beta: f64, gamma: f64 },
    /// `|lam^{1-g} t^{a-2} E(-lam t^a)| <= C t^{a g - 2}`, `0 <= g <= 1`.
    Complementary { gamma: f64 },
}

impl KernelInequality {
    fn validate(&self, alpha: f64) -> Result<()> {
        match *self {
            KernelInequality::Scaled { beta, gamma } => {
                if !(0.0..=1.0).contains(&beta) || !(gamma > 0.0 && gamma < alpha) {
                    return Err(Error::Hypothesis(format!(
                        "scaled inequality needs 0 <= beta <= 1 and 0 < gamma < alpha, got beta={beta}, gamma={gamma}"
                    )));
                }
            }
            KernelInequality::Complementary { gamma } => {
                if !(0.0..=1.0).contains(&gamma) {
                    return Err(Error::Hypothesis(format!(
                        "complementary inequality needs 0 <= gamma <= 1, got {gamma}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Left side divided by the right-hand power of `t`.
    fn ratio(&self, ml: &MittagLeffler, alpha: f64, lam: f64, t: f64) -> Result<f64> {
        let (lam_pow, t_pow, rhs_pow) = match *self {
            KernelInequality::Scaled { beta, gamma } => (beta, gamma, gamma - alpha * beta),
            KernelInequality::Complementary { gamma } => (1.0 - gamma, alpha - 2.0, alpha * gamma - 2.0),
        };
        if lam == 0.0 {
            return Ok(if lam_pow > 0.0 {
                0.0
            } else {
                ml.eval(0.0)?.abs() * t.powf(t_pow - rhs_pow)
            });
        }
        let e = ml.eval(-lam * t.powf(alpha))?;
        let lp = if lam_pow == 0.0 { 1.0 } else { lam.powf(lam_pow) };
        Ok((lp * t.powf(t_pow - rhs_pow) * e).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupReport {
    pub sup: f64,
    /// Arguments where the sup was attained.
    pub at: Vec<f64>,
    pub refined_sup: f64,
    pub relative_change: f64,
    pub cap: f64,
    pub envelope: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelInequalityReport {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub inequality: KernelInequality,
    pub lam_range: (f64, f64),
    pub t_range: (f64, f64),
    pub samples: usize,
    pub result: SupReport,
}

fn sup_over<F>(lams: &[f64], ts: &[f64], f: F) -> Result<(f64, f64, f64)>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let rows: Vec<(f64, f64, f64)> = lams
        .par_iter()
        .map(|&l| {
            let mut best = (0.0_f64, l, ts[0]);
            for &t in ts {
                let v = f(l, t)?;
                if !v.is_finite() {
                    return Err(Error::InsufficientData(format!("non-finite ratio at lam={l}, t={t}")));
                }
                if v > best.0 {
                    best = (v, l, t);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(rows
        .into_iter()
        .fold((0.0, lams[0], ts[0]), |a, b| if b.0 > a.0 { b } else { a }))
}

/// Empirical sup of the inequality ratio over a log-spaced `n x n` grid,
/// rerun on a grid `refine` times denser in each direction.
#[allow(clippy::too_many_arguments)]
pub fn verify_kernel_inequality(
    alpha: f64,
    alpha_prime: f64,
    inequality: KernelInequality,
    lam_range: (f64, f64),
    t_range: (f64, f64),
    n: usize,
    refine: usize,
    cap: f64,
    tol: f64,
) -> Result<KernelInequalityReport> {
    inequality.validate(alpha)?;
    if !(lam_range.0 >= 0.0 && lam_range.1 > lam_range.0) || !(t_range.0 > 0.0 && t_range.1 > t_range.0) {
        return Err(Error::Configuration(
            "kernel inequality ranges must be increasing, t > 0".into(),
        ));
    }
    if n < 2 || refine == 0 {
        return Err(Error::Configuration("kernel inequality grid needs n >= 2".into()));
    }
    let ml = MittagLeffler::new(alpha, alpha_prime, tol)?;
    let grid = |m: usize| {
        // A zero lower end samples lam = 0 plus six decades below the top.
        let lo = if lam_range.0 == 0.0 {
            lam_range.1 * 1e-6
        } else {
            lam_range.0
        };
        let mut lams = log_space(lo, lam_range.1, m);
        if lam_range.0 == 0.0 {
            lams.insert(0, 0.0);
        }
        (lams, log_space(t_range.0, t_range.1, m))
    };
    let f = |l: f64, t: f64| inequality.ratio(&ml, alpha, l, t);
    let (l1, t1) = grid(n);
    let (sup, sl, st) = sup_over(&l1, &t1, f)?;
    let (l2, t2) = grid(n * refine);
    let (refined, _, _) = sup_over(&l2, &t2, f)?;
    let envelope = match inequality {
        KernelInequality::Scaled { beta: 0.0, .. } => Some(recip_gamma(alpha_prime).abs()),
        _ => None,
    };
    let change = if refined > 0.0 {
        (refined - sup).abs() / refined
    } else {
        0.0
    };
    let within_env = envelope.is_none_or(|e| refined <= e + 1e-9);
    Ok(KernelInequalityReport {
        alpha,
        alpha_prime,
        inequality,
        lam_range,
        t_range,
        samples: n,
        result: SupReport {
            sup,
            at: vec![sl, st],
            refined_sup: refined,
            relative_change: change,
            cap,
            envelope,
            pass: refined.is_finite() && refined <= cap && change <= 0.05 && within_env,
        },
    })
}

/// Sup of `|E_{a,b}(z)| (1 + |z|)` over `z in [z_min, 0]`, sampled at 0 and
/// `n` log-spaced points of `[1e-8, |z_min|]`, then `refine` times denser.
pub fn verify_ml_bound(
    alpha: f64,
    beta: f64,
    z_min: f64,
    n: usize,
    refine: usize,
    cap: f64,
    tol: f64,
) -> Result<SupReport> {
    if !(z_min < 0.0) || n < 2 || refine == 0 {
        return Err(Error::Configuration("bound check needs z_min < 0 and n >= 2".into()));
    }
    let ml = MittagLeffler::new(alpha, beta, tol)?;
    let run = |m: usize| -> Result<(f64, f64)> {
        let mut zs = log_space(1e-8, -z_min, m);
        zs.insert(0, 0.0);
        let vals: Vec<(f64, f64)> = zs
            .par_iter()
            .map(|&x| Ok(((ml.eval(-x)?.abs()) * (1.0 + x), -x)))
            .collect::<Result<_>>()?;
        Ok(vals.into_iter().fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a }))
    };
    let (sup, at) = run(n)?;
    let (refined, _) = run(n * refine)?;
    let change = (refined - sup).abs() / refined;
    Ok(SupReport {
        sup,
        at: vec![at],
        refined_sup: refined,
        relative_change: change,
        cap,
        envelope: None,
        pass: refined.is_finite() && refined <= cap && change <= 0.05,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub kind: KernelDerivative,
    pub alpha: f64,
    pub max_rel_err: f64,
    /// `(lam, t)` of the worst point.
    pub worst: (f64, f64),
    pub points: usize,
    pub rel_tol: f64,
    pub pass: bool,
}

/// Compares the analytic kernel derivatives with Richardson-extrapolated
/// central differences of the kernel values over a log-spaced `(lam, t)` grid.
///
/// The error is measured relative to the larger of the derivative and the
/// scale `|k(t)| / t` of the kernel, so isolated zeros of the derivative do
/// not dominate.
pub fn verify_derivative_identity(
    kind: KernelDerivative,
    alpha: f64,
    lam_range: (f64, f64),
    t_range: (f64, f64),
    n: usize,
    rel_tol: f64,
    tol: f64,
) -> Result<DerivativeReport> {
    let (beta, t_power) = match kind {
        KernelDerivative::K11ToK3 => (1.0, 0.0),
        KernelDerivative::K12ToK11 => (2.0, 1.0),
        KernelDerivative::K3ToK3Prime => (alpha, alpha - 1.0),
    };
    let lams = log_space(lam_range.0, lam_range.1, n);
    let ts = log_space(t_range.0, t_range.1, n);
    let value = |lam: f64, t: f64| {
        kernel_eval(
            &KernelSpec {
                alpha,
                beta,
                t_power,
                lam_power: 0.0,
                lam,
                t,
            },
            tol,
        )
    };
    let rows: Vec<(f64, (f64, f64))> = lams
        .par_iter()
        .map(|&lam| {
            let mut worst = (0.0_f64, (lam, ts[0]));
            for &t in &ts {
                let exact = kernel_time_derivative(kind, alpha, lam, t, tol)?;
                let cd = |h: f64| -> Result<f64> { Ok((value(lam, t + h)? - value(lam, t - h)?) / (2.0 * h)) };
                let h = 1e-3 * t;
                let fd = (4.0 * cd(0.5 * h)? - cd(h)?) / 3.0;
                let scale = exact.abs().max(value(lam, t)?.abs() / t);
                let err = if scale == 0.0 {
                    fd.abs()
                } else {
                    (fd - exact).abs() / scale
                };
                if err > worst.0 {
                    worst = (err, (lam, t));
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let (max_err, worst) = rows
        .into_iter()
        .fold((0.0, (lams[0], ts[0])), |a, b| if b.0 > a.0 { b } else { a });
    Ok(DerivativeReport {
        kind,
        alpha,
        max_rel_err: max_err,
        worst,
        points: n * n,
        rel_tol,
        pass: max_err <= rel_tol,
    })
}

/// Approach of one initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Non-increasing towards `t = 0` over the first nodes after 0.
    pub monotone: bool,
    pub smallest: f64,
    pub fit: Option<PowerFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionReport {
    pub sigma: f64,
    pub beta_ic: f64,
    pub hypotheses: Vec<HypothesisCheck>,
    pub displacement: ApproachSeries,
    pub velocity: ApproachSeries,
    pub ic_tol: f64,
    pub verdict: Verdict,
}

/// Checks `||u(t) - u0||_{V_sigma} -> 0` and `||u'(t) - u1||_{V_{-b}} -> 0`
/// on the first six nodes after 0, and fits their rates in `window`.
#[allow(clippy::too_many_arguments)]
pub fn verify_initial_conditions(
    traj: &Trajectory,
    u0: &[f64],
    u1: &[f64],
    sigma: f64,
    beta_ic: f64,
    gamma_tilde: f64,
    ic_tol: f64,
    window: Option<(f64, f64)>,
) -> Result<InitialConditionReport> {
    let du = traj.require(Field::Du)?;
    let n_modes = traj.grid.len();
    if u0.len() != n_modes || u1.len() != n_modes {
        return Err(Error::Configuration("initial data length differs from the grid".into()));
    }
    let t_end = *traj.times.last().expect("non-empty");
    if traj.times.iter().filter(|t| **t > 0.0 && **t < 1e-2 * t_end).count() < 6 {
        return Err(Error::InsufficientData(
            "initial-condition check needs >= 6 nodes below 1e-2 T".into(),
        ));
    }
    let alpha = traj.meta.alpha;
    let hyp = vec![
        HypothesisCheck {
            condition: "min(gamma_tilde, 1/alpha) > sigma >= 0".into(),
            value: sigma,
            satisfied: sigma >= 0.0 && sigma < gamma_tilde.min(1.0 / alpha),
        },
        HypothesisCheck {
            condition: "beta > max(0, 1/alpha - gamma_tilde)".into(),
            value: beta_ic,
            satisfied: beta_ic > (1.0 / alpha - gamma_tilde).max(0.0),
        },
    ];
    let window = window.unwrap_or_else(|| default_window(t_end));
    let series = |name: &str, rows: &Vec<Vec<f64>>, base: &[f64], g: f64| -> Result<ApproachSeries> {
        let gi = FractionalIndex::new(g)?;
        let mut diff = vec![0.0; n_modes];
        let values: Vec<f64> = rows
            .iter()
            .map(|r| {
                for (d, (a, b)) in diff.iter_mut().zip(r.iter().zip(base)) {
                    *d = a - b;
                }
                traj.grid.norm(&diff, gi)
            })
            .collect();
        let first: Vec<f64> = values.iter().skip(1).take(6).copied().collect();
        let monotone = first.windows(2).all(|w| w[0] <= w[1]);
        let smallest = first.iter().copied().fold(f64::INFINITY, f64::min);
        let fit = if values.iter().skip(1).all(|v| *v == 0.0) {
            None
        } else {
            fit_power_law(&traj.times, &values, window).ok()
        };
        Ok(ApproachSeries {
            name: name.into(),
            times: traj.times.clone(),
            values,
            monotone,
            smallest,
            fit,
        })
    };
    let displacement = series("displacement", &traj.u, u0, sigma)?;
    let velocity = series("velocity", du, u1, -beta_ic)?;
    let verdict = if let Some(h) = hyp.iter().find(|h| !h.satisfied) {
        Verdict::Skipped {
            reason: format!("hypothesis '{}' fails (value {})", h.condition, h.value),
        }
    } else {
        let bad: Vec<String> = [&displacement, &velocity]
            .iter()
            .filter(|s| !(s.monotone && s.smallest <= ic_tol))
            .map(|s| {
                format!(
                    "{} does not decrease to <= {ic_tol:e} (smallest {:e})",
                    s.name, s.smallest
                )
            })
            .collect();
        if bad.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail { reason: bad.join("; ") }
        }
    };
    Ok(InitialConditionReport {
        sigma,
        beta_ic,
        hypotheses: hyp,
        displacement,
        velocity,
        ic_tol,
        verdict,
    })
}

/// Designated approach-rate instances: `(problem, grid, sigma, expected rate)`.
///
/// Single mode `u0 = 1`, `sigma = 0`: `|E_{a,1}(-t^a) - 1| ~ t^a`.
/// Log-uniform `u1 = 1`, `sigma = 1/4`: `||t E_{a,2}(-m t^a)||_{V_sigma} ~ t^{1 - a sigma}`.
pub fn initial_condition_instances(alpha: f64) -> Result<Vec<(LinearProblem, TimeGrid, f64, f64)>> {
    let setup = SaturationSetup::default();
    let tg = TimeGrid::graded(setup.t_end, setup.nodes, 3.0)?;
    let single = LinearProblem::single_mode(1.0, alpha, 1.0, 0.0, Source::Zero)?;
    let grid = Arc::new(SpectralGrid::log_uniform(setup.m_min, setup.m_max, setup.per_decade)?);
    let ones = GridFunction::from_eigenvalues(&grid, |_| 1.0)?;
    let spread = LinearProblem::new(Arc::clone(&grid), alpha, GridFunction::zeros(&grid), ones, Source::Zero)?;
    Ok(vec![
        (single, tg.clone(), 0.0, alpha),
        (spread, tg, 0.25, 1.0 - 0.25 * alpha),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_fit() {
        let ts = log_space(1e-3, 1.0, 10);
        let vs: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(0.7)).collect();
        let fit = fit_power_law(&ts, &vs, (0.0, 1.0)).unwrap();
        assert!((fit.exponent - 0.7).abs() < 1e-12);
        assert!(fit.r2 > 1.0 - 1e-12);
        let c = vec![2.5; 10];
        assert!(fit_power_law(&ts, &c, (0.0, 1.0)).unwrap().exponent.abs() < 1e-12);
    }

    #[test]
    fn too_few_points_and_zeros() {
        let ts = log_space(1e-3, 1.0, 10);
        let mut vs: Vec<f64> = ts.iter().map(|t| t * t).collect();
        for v in vs.iter_mut().take(5) {
            *v = 0.0;
        }
        assert!(matches!(
            fit_power_law(&ts, &vs, (0.0, 1.0)),
            Err(Error::InsufficientData(_))
        ));
        vs[0] = 1e-6;
        let fit = fit_power_law(&ts, &vs, (0.0, 1.0)).unwrap();
        assert_eq!(fit.excluded_zeros, 4);
    }

    #[test]
    fn kernel_startup_exponent() {
        let ml = MittagLeffler::new(1.5, 1.5, 1e-14).unwrap();
        let ts = log_space(1e-4, 1e-2, 20);
        let vs: Vec<f64> = ts
            .iter()
            .map(|t| t.powf(0.5) * ml.eval(-t.powf(1.5)).unwrap())
            .collect();
        let fit = fit_power_law(&ts, &vs, (1e-4, 1e-2)).unwrap();
        assert!((fit.exponent - 0.5).abs() <= 0.01);
    }

    #[test]
    fn exponents_and_hypotheses() {
        let i = Estimate::VelocityFromState.default_indices();
        assert_eq!(Estimate::VelocityFromState.exponent(1.5, &i), -0.25);
        assert_eq!(Estimate::StateFromVelocity.exponent(1.5, &i), 0.25);
        assert!(Estimate::ALL
            .iter()
            .all(|e| e.hypotheses(1.75, &e.default_indices()).iter().all(|h| h.satisfied)));
        let bad = EstimateIndices { gamma_tilde: 0.9, ..i };
        assert!(Estimate::StateFromVelocity
            .hypotheses(1.5, &bad)
            .iter()
            .any(|h| !h.satisfied));
        assert_eq!(
            "velocity_from_state".parse::<Estimate>().unwrap(),
            Estimate::VelocityFromState
        );
    }

    #[test]
    fn zero_data_passes_with_note() {
        let p = LinearProblem::single_mode(1.0, 1.5, 0.0, 0.0, Source::Zero).unwrap();
        let tr = solve_linear(&p, &TimeGrid::graded(1.0, 64, 3.0).unwrap(), &SolveOptions::default()).unwrap();
        let reps = verify_rates(&tr, &[RateSpec::saturation(Estimate::VelocityFromState, 1.5)], None);
        assert!(reps[0].verdict.passed());
        assert!(!reps[0].notes.is_empty());
    }

    #[test]
    fn inequality_domain_errors() {
        let r = verify_kernel_inequality(
            1.5,
            1.5,
            KernelInequality::Scaled { beta: 1.5, gamma: 1.0 },
            (1e-2, 1e2),
            (1e-2, 1.0),
            8,
            2,
            1e3,
            1e-12,
        );
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn zero_lambda_row_is_zero_for_positive_beta() {
        let r = verify_kernel_inequality(
            1.5,
            1.5,
            KernelInequality::Scaled { beta: 0.5, gamma: 1.0 },
            (0.0, 1.0),
            (1e-2, 1.0),
            6,
            1,
            1e3,
            1e-12,
        )
        .unwrap();
        assert!(r.result.sup > 0.0 && r.result.pass);
    }
}
