use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use super::creep::{CreepModel, CREEP_FLOOR_S};
use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 10;
const MAX_ITERATIONS: usize = 200;
const MINUTE: f64 = 60.0;

/// Least-squares creep parameters with one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreepFit {
    pub model: CreepModel,
    pub sigma_dnu0: f64,
    pub sigma_alpha: f64,
    /// Present when the step time was a free parameter.
    pub sigma_t0: Option<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Fits the logarithmic creep law to `(t, dnu)` samples.
///
/// With a known step time the law is linear in `dnu0` and `dnu0 * alpha`
/// and is solved directly. Otherwise the step time is written as
/// `t0 = t_min - 1 s - exp(s)` so that every sample stays inside the valid
/// domain, a coarse scan over `s` picks the starting point, and
/// Levenberg-Marquardt refines all three parameters.
pub fn fit_creep(t: &[f64], dnu: &[f64], t0_known: Option<f64>) -> Result<CreepFit> {
    if t.len() != dnu.len() {
        return Err(Error::Domain(format!(
            "{} times but {} detunings",
            t.len(),
            dnu.len()
        )));
    }
    if t.len() < MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "creep fit needs at least {MIN_SAMPLES} samples, got {}",
            t.len()
        )));
    }
    if t.iter().chain(dnu).any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "creep trace contains non-finite values".into(),
        ));
    }
    match t0_known {
        Some(t0) => fit_known_t0(t, dnu, t0),
        None => fit_free_t0(t, dnu),
    }
}

fn log_minutes(t: f64, t0: f64) -> f64 {
    ((t - t0) / MINUTE).log10()
}

fn fit_known_t0(t: &[f64], dnu: &[f64], t0: f64) -> Result<CreepFit> {
    let (lo, hi) = bounds(t);
    if lo - t0 < CREEP_FLOOR_S {
        return Err(Error::Domain(format!(
            "samples start {} s after the step; the law holds from {CREEP_FLOOR_S} s",
            lo - t0
        )));
    }
    if (hi - t0) / (lo - t0) < 10.0 {
        return Err(Error::Domain(
            "samples must span at least one decade after the step".into(),
        ));
    }
    let x: Vec<f64> = t.iter().map(|&ti| log_minutes(ti, t0)).collect();
    let (a, b, ssr) = linear_fit(&x, dnu);
    let n = t.len();
    let s2 = ssr / (n - 2) as f64;

    let mut jtj = Matrix2::zeros();
    for &xi in &x {
        let row = Vector2::new(1.0, xi);
        jtj += row * row.transpose();
    }
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| fit_error(0, ssr, "samples do not constrain both parameters"))?
        * s2;
    let (alpha, sigma_alpha) = ratio_with_sigma(a, b, cov[(0, 0)], cov[(1, 1)], cov[(0, 1)])
        .ok_or_else(|| fit_error(0, ssr, "detuning one minute after the step is zero"))?;
    Ok(CreepFit {
        model: CreepModel::new(a, alpha, t0)?,
        sigma_dnu0: cov[(0, 0)].sqrt(),
        sigma_alpha,
        sigma_t0: None,
        residual_rms: (ssr / n as f64).sqrt(),
        iterations: 1,
    })
}

/// Ordinary least squares for `y = a + b x`; returns `(a, b, ssr)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ssr = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - a - b * xi).powi(2))
        .sum();
    (a, b, ssr)
}

/// `alpha = b / a` and its first-order uncertainty.
fn ratio_with_sigma(a: f64, b: f64, var_a: f64, var_b: f64, cov_ab: f64) -> Option<(f64, f64)> {
    if a == 0.0 {
        return if b == 0.0 { Some((0.0, 0.0)) } else { None };
    }
    let alpha = b / a;
    let ga = -b / (a * a);
    let gb = 1.0 / a;
    let var = ga * ga * var_a + gb * gb * var_b + 2.0 * ga * gb * cov_ab;
    Some((alpha, var.max(0.0).sqrt()))
}

fn bounds(t: &[f64]) -> (f64, f64) {
    t.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

fn fit_error(iterations: usize, cost: f64, reason: &str) -> Error {
    Error::Fit {
        iterations,
        cost,
        reason: reason.into(),
    }
}

fn fit_free_t0(t: &[f64], dnu: &[f64]) -> Result<CreepFit> {
    let (lo, hi) = bounds(t);
    if !(hi > lo) {
        return Err(Error::Domain("creep trace has no time extent".into()));
    }
    let anchor = lo - CREEP_FLOOR_S;
    let t0_of = |s: f64| anchor - s.exp();

    // Profile scan: for fixed t0 the law is linear, so the best (a, b) and
    // the residual follow in closed form.
    let scale = (hi - lo).max(MINUTE);
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    let s_lo = (1e-3f64).ln();
    let s_hi = (100.0 * scale).ln();
    let steps = 200;
    for k in 0..=steps {
        let s = s_lo + (s_hi - s_lo) * k as f64 / steps as f64;
        let t0 = t0_of(s);
        let x: Vec<f64> = t.iter().map(|&ti| log_minutes(ti, t0)).collect();
        let (a, b, ssr) = linear_fit(&x, dnu);
        if ssr < best.0 {
            best = (ssr, a, b, s);
        }
    }

    let residuals = |p: &Vector3<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let t0 = t0_of(p[2]);
        let e = p[2].exp();
        let mut r = DVector::zeros(t.len());
        let mut j = DMatrix::zeros(t.len(), 3);
        for (k, (&ti, &yi)) in t.iter().zip(dnu).enumerate() {
            let age = ti - t0;
            let x = (age / MINUTE).log10();
            r[k] = p[0] + p[1] * x - yi;
            j[(k, 0)] = 1.0;
            j[(k, 1)] = x;
            // d x / d s = (1 / (age ln 10)) * d age / d s, with d age / d s = e.
            j[(k, 2)] = p[1] * e / (age * std::f64::consts::LN_10);
        }
        (r, j)
    };

    let mut p = Vector3::new(best.1, best.2, best.3);
    let (mut r, mut j) = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj: Matrix3<f64> = (j.transpose() * &j).fixed_view::<3, 3>(0, 0).into();
        let g: Vector3<f64> = (j.transpose() * &r).fixed_view::<3, 1>(0, 0).into();
        let mut damped = jtj;
        for d in 0..3 {
            damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&(-g)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        let (tr, tj) = residuals(&trial);
        let trial_cost = tr.norm_squared();
        if trial_cost.is_finite() && trial_cost <= cost {
            let improvement = cost - trial_cost;
            p = trial;
            r = tr;
            j = tj;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if improvement <= 1e-14 * cost.max(1e-300) || step.norm() < 1e-12 * (1.0 + p.norm()) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(fit_error(iterations, cost, "iteration cap reached"));
    }

    let n = t.len();
    let s2 = cost / (n - 3) as f64;
    let jtj: Matrix3<f64> = (j.transpose() * &j).fixed_view::<3, 3>(0, 0).into();
    let cov = jtj.try_inverse().map(|c| c * s2);
    let t0 = t0_of(p[2]);
    let (a, b) = (p[0], p[1]);
    let (alpha, sigma_alpha, sigma_a, sigma_t0) = match cov {
        Some(c) => {
            let (alpha, sa) =
                ratio_with_sigma(a, b, c[(0, 0)], c[(1, 1)], c[(0, 1)]).ok_or_else(|| {
                    fit_error(
                        iterations,
                        cost,
                        "detuning one minute after the step is zero",
                    )
                })?;
            (
                alpha,
                sa,
                c[(0, 0)].sqrt(),
                (c[(2, 2)].max(0.0)).sqrt() * p[2].exp(),
            )
        }
        None => {
            // A flat trace leaves the step time undetermined.
            let alpha = if a != 0.0 { b / a } else { 0.0 };
            (alpha, f64::NAN, f64::NAN, f64::INFINITY)
        }
    };
    Ok(CreepFit {
        model: CreepModel::new(a, alpha, t0)?,
        sigma_dnu0: sigma_a,
        sigma_alpha,
        sigma_t0: Some(sigma_t0),
        residual_rms: (cost / n as f64).sqrt(),
        iterations,
    })
}
