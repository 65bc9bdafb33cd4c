//! Noise spectra, shot-noise-excluded deviation and feedback-bandwidth
//! selection.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const DEFAULT_SAFETY_FACTOR: f64 = 3.0;

/// Shortest count bin for which the deviation estimate is trusted.
pub const MIN_BIN_S: f64 = 0.5;

const MIN_BINS: usize = 30;

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// Hz, starting at 0.
    pub frequencies: Vec<f64>,
    /// Units of the trace squared per Hz.
    pub density: Vec<f64>,
    pub segments: usize,
    pub window: &'static str,
}

impl PsdEstimate {
    pub fn resolution(&self) -> f64 {
        self.frequencies[1] - self.frequencies[0]
    }

    /// Integral of the density over all bins.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.resolution()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# f_Hz\tdensity\n");
        for (f, s) in self.frequencies.iter().zip(&self.density) {
            let _ = writeln!(out, "{f:.9e}\t{s:.9e}");
        }
        out
    }
}

/// Welch estimate with a Hann window. Each segment has its mean removed.
pub fn welch_psd(
    trace: &[f64],
    dt: f64,
    segment_length: usize,
    overlap: f64,
) -> Result<PsdEstimate> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "sample step {dt} s must be positive"
        )));
    }
    if segment_length < 4 {
        return Err(Error::Domain("segments need at least four samples".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Domain(format!("overlap {overlap} outside [0, 1)")));
    }
    if trace.len() < segment_length {
        return Err(Error::Domain(format!(
            "trace of {} samples is shorter than one segment of {segment_length}",
            trace.len()
        )));
    }
    let hop = ((segment_length as f64 * (1.0 - overlap)).round() as usize).max(1);
    let n = segment_length;
    let window: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect();
    let w_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let half = n / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut segments = 0;
    let mut start = 0;
    while start + n <= trace.len() {
        let seg = &trace[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let fs = 1.0 / dt;
    let scale = 1.0 / (fs * w_power * segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || (n % 2 == 0 && k == half) {
                1.0
            } else {
                2.0
            };
            one_sided * p * scale
        })
        .collect();
    let frequencies = (0..=half).map(|k| k as f64 * fs / n as f64).collect();
    Ok(PsdEstimate {
        frequencies,
        density,
        segments,
        window: "hann",
    })
}

/// Frequency fluctuation implied by count variance in excess of Poisson
/// statistics, `sqrt(max(var N - mean N, 0)) / (bin |slope|)`, in MHz.
pub fn excess_deviation(counts: &[f64], bin: f64, slope: f64) -> Result<f64> {
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::Config("discriminator slope must be non-zero".into()));
    }
    if counts.len() < MIN_BINS {
        return Err(Error::Domain(format!(
            "need at least {MIN_BINS} count bins, got {}",
            counts.len()
        )));
    }
    if !(bin > 0.0) {
        return Err(Error::Domain(format!("bin width {bin} s must be positive")));
    }
    if bin < MIN_BIN_S {
        warn!("count bins of {bin} s are shorter than {MIN_BIN_S} s");
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let excess = (var - mean).max(0.0);
    Ok(1e3 * excess.sqrt() / (bin * slope.abs()))
}

/// Sums consecutive groups of `factor` counts; a trailing partial group is
/// dropped.
pub fn rebin(counts: &[f64], factor: usize) -> Vec<f64> {
    counts
        .chunks_exact(factor.max(1))
        .map(|c| c.iter().sum())
        .collect()
}

/// Fit of `S(f) = h / f + floor` to a PSD with the floor held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverFit {
    pub h: f64,
    pub sigma_h: f64,
    pub crossover: f64,
}

/// Weighted least-squares amplitude of the `1/f` part above `floor`. Bins
/// are weighted by the inverse square of the model density, which is the
/// variance law of averaged periodograms; the fit is iterated to
/// self-consistency.
pub fn fit_crossover(psd: &PsdEstimate, floor: f64) -> Result<CrossoverFit> {
    if !(floor > 0.0) {
        return Err(Error::Domain(format!(
            "shot floor {floor} must be positive"
        )));
    }
    let bins: Vec<(f64, f64)> = psd
        .frequencies
        .iter()
        .zip(&psd.density)
        .skip(1)
        .map(|(&f, &s)| (f, s))
        .collect();
    if bins.len() < 3 {
        return Err(Error::Inconclusive("spectrum has too few bins".into()));
    }
    // Start from the low-frequency excess.
    let (f1, s1) = bins[0];
    let mut h = ((s1 - floor) * f1).max(floor * f1 * 1e-3);
    let mut sigma_h = f64::INFINITY;
    for _ in 0..50 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(f, s) in &bins {
            let model = h / f + floor;
            let w = 1.0 / (model * model);
            num += w * (s - floor) / f;
            den += w / (f * f);
        }
        let next = num / den;
        // Each bin has relative variance 1 / segments.
        sigma_h = (1.0 / (den * psd.segments.max(1) as f64)).sqrt();
        let converged = (next - h).abs() <= 1e-10 * h.abs().max(1e-300);
        h = next.max(floor * bins[0].0 * 1e-6);
        if converged {
            h = next;
            break;
        }
    }
    Ok(CrossoverFit {
        h,
        sigma_h,
        crossover: h / floor,
    })
}

/// Bandwidth a safety factor below the frequency where the `1/f` signal
/// meets the shot-noise floor.
pub fn recommend_bandwidth(psd: &PsdEstimate, shot_floor: f64) -> Result<f64> {
    recommend_bandwidth_with(psd, shot_floor, DEFAULT_SAFETY_FACTOR)
}

pub fn recommend_bandwidth_with(psd: &PsdEstimate, shot_floor: f64, safety: f64) -> Result<f64> {
    if !(safety >= 1.0) {
        return Err(Error::Config(format!(
            "safety factor {safety} must be at least 1"
        )));
    }
    let fit = fit_crossover(psd, shot_floor)?;
    if !(fit.h > 3.0 * fit.sigma_h) {
        return Err(Error::Inconclusive(format!(
            "no significant 1/f component (h = {:.3e} +- {:.3e})",
            fit.h, fit.sigma_h
        )));
    }
    let f_min = psd.frequencies[1];
    let f_max = *psd.frequencies.last().expect("non-empty");
    if !(fit.crossover >= f_min && fit.crossover <= f_max) {
        return Err(Error::Inconclusive(format!(
            "crossover {:.3e} Hz lies outside the band [{f_min:.3e}, {f_max:.3e}] Hz",
            fit.crossover
        )));
    }
    Ok(fit.crossover / safety)
}
