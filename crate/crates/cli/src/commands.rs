//! Subcommand implementations. Each returns the process exit status.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fracwave_core::caputo_oracle::residual_linear;
use fracwave_core::linear_solver::{solve_linear, SolveOptions};
use fracwave_core::mittag_leffler::{scaled_kernel, MittagLeffler};
use fracwave_core::rate_verifier::{
    default_window, reports_json, run_saturation, verify_initial_conditions, verify_kernel_inequality, verify_rates,
    write_points_csv, RateMode, RateReport, RateSpec, SaturationSetup,
};
use fracwave_core::semilinear_solver::{solve_semilinear, SolveStatus};
use fracwave_core::trajectory::fmt_num;
use fracwave_core::{Error, Result};
use serde_json::json;

use crate::config::{ProblemKind, RateInstances, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_VERIFICATION: u8 = 4;

/// Exit status for an error escaping a command.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() || matches!(e, Error::Io(_)) {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

/// What `ml-eval` evaluates.
pub enum MlRequest {
    Points(Vec<f64>),
    /// `t^p E(-lam t^alpha)` at each `t`.
    Kernel {
        lam: f64,
        times: Vec<f64>,
        t_power: f64,
    },
}

pub fn ml_eval(alpha: f64, beta: f64, req: &MlRequest, tol: f64, csv: Option<&Path>) -> Result<u8> {
    let ml = MittagLeffler::new(alpha, beta, tol)?;
    let mut rows: Vec<(f64, f64, &'static str)> = Vec::new();
    match req {
        MlRequest::Points(zs) => {
            for &z in zs {
                let (v, regime) = ml.eval_with_regime(z)?;
                rows.push((z, v, regime.as_str()));
            }
        }
        MlRequest::Kernel { lam, times, t_power } => {
            for &t in times {
                let v = scaled_kernel(&ml, *lam, t, *t_power)?;
                let z = -lam * t.powf(alpha);
                let regime = ml.eval_with_regime(z)?.1.as_str();
                rows.push((t, v, regime));
            }
        }
    }
    let head = match req {
        MlRequest::Points(_) => "z",
        MlRequest::Kernel { .. } => "t",
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{head}\tvalue\tregime")?;
    for (x, v, r) in &rows {
        writeln!(out, "{x}\t{v}\t{r}")?;
    }
    if let Some(path) = csv {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record([head, "value", "regime"]).map_err(csv_io)?;
        for (x, v, r) in &rows {
            w.write_record([fmt_num(*x), fmt_num(*v), r.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
    }
    Ok(EXIT_OK)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn prepare_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> Result<PathBuf> {
    let dir = cfg.out_dir(flag);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn solve(cfg: &RunConfig, out_flag: Option<&Path>) -> Result<u8> {
    let kind = cfg
        .kind
        .ok_or_else(|| Error::Configuration("field 'kind' (linear | semilinear) is required for solve".into()))?;
    let r = cfg.resolve()?;
    match kind {
        ProblemKind::Linear => {
            let p = cfg.linear_problem(&r)?;
            let opts = SolveOptions {
                tol: cfg.tolerances.ml_tol,
                second_derivative: cfg.tolerances.second_derivative,
                ..SolveOptions::default()
            };
            let dir = prepare_out_dir(cfg, out_flag)?;
            let traj = solve_linear(&p, &r.time, &opts)?;
            let mut w = create(&dir, "trajectory.csv")?;
            traj.write_csv(&mut w)?;
            w.flush()?;
            let mut meta = traj.metadata_json();
            meta["config"] = cfg.to_json();
            write_json(&dir, "metadata.json", &meta)?;
            Ok(EXIT_OK)
        }
        ProblemKind::Semilinear => {
            let spec = cfg
                .nonlinearity
                .as_ref()
                .ok_or_else(|| Error::Configuration("section [nonlinearity] is required for semilinear runs".into()))?;
            let nl = spec.build()?;
            if !matches!(cfg.source, crate::config::SourceSpec::Zero) {
                return Err(Error::Configuration("semilinear runs take no [source]".into()));
            }
            let mut scfg = cfg.semilinear.clone();
            scfg.ml_tol = cfg.tolerances.ml_tol;
            let dir = prepare_out_dir(cfg, out_flag)?;
            let out = match solve_semilinear(&r.grid, r.alpha, &r.u0, &r.u1, &nl, cfg.time.t_end, &scfg) {
                Ok(o) => o,
                Err(e) => {
                    write_json(
                        &dir,
                        "report.json",
                        &json!({ "status": "Error", "error": e.to_string(), "config": cfg.to_json() }),
                    )?;
                    return Err(e);
                }
            };
            let mut w = create(&dir, "trajectory.csv")?;
            out.trajectory.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&dir, "energy.csv")?;
            out.write_energy_csv(&mut w)?;
            w.flush()?;
            let mut report = out.report_json();
            report["config"] = cfg.to_json();
            write_json(&dir, "report.json", &report)?;
            let mut meta = out.trajectory.metadata_json();
            meta["config"] = cfg.to_json();
            write_json(&dir, "metadata.json", &meta)?;
            eprintln!("status: {}", out.status.name());
            Ok(match out.status {
                SolveStatus::WindowStalled { .. } => EXIT_NUMERICAL,
                _ => EXIT_OK,
            })
        }
    }
}

/// Verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Rates,
    KernelIneq,
    Residual,
    Ic,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Rates => "rates",
            Suite::KernelIneq => "kernel-ineq",
            Suite::Residual => "residual",
            Suite::Ic => "ic",
        }
    }
}

pub fn verify(cfg: &RunConfig, suite: Suite, out_flag: Option<&Path>) -> Result<u8> {
    // Resolve and validate before any output.
    let mut points_csv = None;
    let (report, pass) = match suite {
        Suite::Rates => {
            let (v, pass, csv) = verify_rates_suite(cfg)?;
            points_csv = Some(csv);
            (v, pass)
        }
        Suite::KernelIneq => verify_kernel_suite(cfg)?,
        Suite::Residual => verify_residual_suite(cfg)?,
        Suite::Ic => verify_ic_suite(cfg)?,
    };
    let dir = prepare_out_dir(cfg, out_flag)?;
    if let Some(bytes) = points_csv {
        fs::write(dir.join("rate_points.csv"), bytes)?;
    }
    let mut full = report;
    full["suite"] = json!(suite.name());
    full["pass"] = json!(pass);
    full["config"] = cfg.to_json();
    write_json(&dir, "report.json", &full)?;
    eprintln!("{}: {}", suite.name(), if pass { "pass" } else { "FAIL" });
    Ok(if pass { EXIT_OK } else { EXIT_VERIFICATION })
}

fn verify_rates_suite(cfg: &RunConfig) -> Result<(serde_json::Value, bool, Vec<u8>)> {
    let spec = cfg
        .rates
        .as_ref()
        .ok_or_else(|| Error::Configuration("section [rates] is required for the rates suite".into()))?;
    let mode = spec.mode.unwrap_or(match spec.instances {
        RateInstances::Equality => RateMode::Saturation,
        RateInstances::Problem => RateMode::UpperBound,
    });
    let make = |e, alpha| {
        let idx = spec
            .indices
            .unwrap_or_else(|| fracwave_core::rate_verifier::Estimate::default_indices(e));
        let s = RateSpec::new(e, alpha, idx, mode);
        match spec.tolerance {
            Some(t) => s.with_tolerance(t),
            None => s,
        }
    };
    let reports: Vec<RateReport> = match spec.instances {
        RateInstances::Equality => {
            let alphas = match &spec.alphas {
                Some(a) => a.clone(),
                None => vec![cfg.alpha()?],
            };
            if let Some(a) = alphas.iter().find(|a| !(**a > 1.0 && **a < 2.0)) {
                return Err(Error::Configuration(format!("rates.alphas: {a} is outside (1, 2)")));
            }
            let setup = SaturationSetup::default();
            let mut out = Vec::new();
            for &alpha in &alphas {
                for &e in &spec.estimates {
                    let mut r = run_saturation(&make(e, alpha), &setup)?;
                    if let Some(w) = spec.window {
                        r.notes
                            .push(format!("window override {w:?} ignored for equality instances"));
                    }
                    out.push(r);
                }
            }
            out
        }
        RateInstances::Problem => {
            let r = cfg.resolve()?;
            let p = cfg.linear_problem(&r)?;
            let alpha = r.alpha;
            let specs: Vec<RateSpec> = spec.estimates.iter().map(|e| make(*e, alpha)).collect();
            let opts = SolveOptions {
                tol: cfg.tolerances.ml_tol,
                second_derivative: specs.iter().any(|s| s.estimate.is_strong()),
                ..SolveOptions::default()
            };
            let traj = solve_linear(&p, &r.time, &opts)?;
            verify_rates(
                &traj,
                &specs,
                Some(spec.window.unwrap_or_else(|| default_window(r.time.t_end()))),
            )
        }
    };
    for r in &reports {
        let fitted = r
            .fit
            .as_ref()
            .map(|f| format!("{:+.4}", f.exponent))
            .unwrap_or_else(|| "-".into());
        eprintln!(
            "  alpha={} {:28} expected {:+.4} fitted {fitted} {}",
            r.spec.alpha,
            r.spec.estimate.name(),
            r.spec.theoretical_exponent,
            r.verdict.label()
        );
    }
    let pass = reports.iter().all(|r| !r.verdict.failed());
    let mut csv_buf = Vec::new();
    write_points_csv(&reports, &mut csv_buf)?;
    Ok((reports_json(&reports), pass, csv_buf))
}

fn verify_kernel_suite(cfg: &RunConfig) -> Result<(serde_json::Value, bool)> {
    let k = cfg
        .kernel_ineq
        .as_ref()
        .ok_or_else(|| Error::Configuration("section [kernel_ineq] is required for the kernel-ineq suite".into()))?;
    let alpha = match k.alpha {
        Some(a) => a,
        None => cfg.alpha()?,
    };
    let r = verify_kernel_inequality(
        alpha,
        k.alpha_prime,
        k.inequality,
        k.lam_range,
        k.t_range,
        k.samples,
        k.refine,
        k.cap,
        cfg.tolerances.ml_tol,
    )?;
    eprintln!(
        "  sup {:.6e} (refined {:.6e}, change {:.2e})",
        r.result.sup, r.result.refined_sup, r.result.relative_change
    );
    let pass = r.result.pass;
    Ok((json!({ "kernel_inequality": r }), pass))
}

fn verify_residual_suite(cfg: &RunConfig) -> Result<(serde_json::Value, bool)> {
    let spec = cfg.residual.clone().unwrap_or_default();
    let r = cfg.resolve()?;
    let p = cfg.linear_problem(&r)?;
    let t_end = spec.t_end.unwrap_or(r.time.t_end());
    let opts = SolveOptions {
        tol: cfg.tolerances.ml_tol,
        ..SolveOptions::default()
    };
    let series = residual_linear(&p, t_end, spec.h, spec.variant, &opts)?;
    let (lo, hi) = spec.window.unwrap_or((0.0, t_end));
    let max_rel = series.max_relative(lo, hi);
    let pass = max_rel <= spec.threshold;
    eprintln!(
        "  max relative residual {max_rel:.3e} (threshold {:.1e})",
        spec.threshold
    );
    Ok((
        json!({
            "max_relative_residual": max_rel,
            "max_absolute_residual": series.max_absolute(lo, hi),
            "threshold": spec.threshold,
            "window": [lo, hi],
            "residual": series,
        }),
        pass,
    ))
}

fn verify_ic_suite(cfg: &RunConfig) -> Result<(serde_json::Value, bool)> {
    let spec = cfg
        .ic
        .as_ref()
        .ok_or_else(|| Error::Configuration("section [ic] is required for the ic suite".into()))?;
    let r = cfg.resolve()?;
    let p = cfg.linear_problem(&r)?;
    let opts = SolveOptions {
        tol: cfg.tolerances.ml_tol,
        ..SolveOptions::default()
    };
    let traj = solve_linear(&p, &r.time, &opts)?;
    let rep = verify_initial_conditions(
        &traj,
        r.u0.values(),
        r.u1.values(),
        spec.sigma,
        spec.beta_ic,
        spec.gamma_tilde,
        spec.ic_tol,
        None,
    )?;
    let mut pass = !rep.verdict.failed();
    let mut rate_check = serde_json::Value::Null;
    if let Some(expected) = spec.expected_rate {
        let fitted = rep.displacement.fit.as_ref().map(|f| f.exponent);
        let ok = fitted.is_some_and(|f| (f - expected).abs() <= spec.rate_tol);
        pass &= ok;
        rate_check = json!({ "expected": expected, "fitted": fitted, "tolerance": spec.rate_tol, "pass": ok });
        eprintln!("  displacement rate {fitted:?} (expected {expected})");
    }
    Ok((json!({ "initial_conditions": rep, "rate_check": rate_check }), pass))
}
