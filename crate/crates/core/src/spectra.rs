//! Emitter line shapes, Faraday-filter transmission curves and set points.
//!
//! Frequencies are detunings in GHz from the weighted Rb D1 line centre.
//! Transmissions are dimensionless fractions in `[0, 1]`.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Lorentzian emission line of a single emitter, normalised to unit area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralProfile {
    center: f64,
    fwhm: f64,
}

impl SpectralProfile {
    pub fn lorentzian(center: f64, fwhm: f64) -> Result<Self> {
        if !(fwhm > 0.0 && fwhm.is_finite()) || !center.is_finite() {
            return Err(Error::Domain(format!(
                "line width must be positive and finite, got {fwhm} GHz"
            )));
        }
        Ok(Self { center, fwhm })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    /// Coherence time in ps, the inverse of [`lorentzian_from_coherence`].
    pub fn coherence_time_ps(&self) -> f64 {
        1e3 / (PI * self.fwhm)
    }

    /// Probability density per GHz.
    pub fn density(&self, nu: f64) -> f64 {
        let hw = 0.5 * self.fwhm;
        let x = nu - self.center;
        hw / (PI * (x * x + hw * hw))
    }

    pub fn cdf(&self, nu: f64) -> f64 {
        0.5 + ((nu - self.center) / (0.5 * self.fwhm)).atan() / PI
    }
}

/// Lorentzian line with `fwhm = 1/(pi T2)`, centred at zero detuning.
///
/// `t2_ps` is the coherence time in picoseconds; the result is in GHz.
pub fn lorentzian_from_coherence(t2_ps: f64) -> Result<SpectralProfile> {
    if !(t2_ps > 0.0) {
        return Err(Error::Domain(format!(
            "coherence time must be positive, got {t2_ps} ps"
        )));
    }
    SpectralProfile::lorentzian(0.0, 1e3 / (PI * t2_ps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveLabel {
    /// Measured with a narrow-band laser.
    Laser,
    /// Laser curve convolved with an emitter line shape.
    EmitterConvolved,
}

/// One pseudo-Voigt transmission peak, normalised so its maximum equals
/// `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    /// Lorentzian weight of the mix; `0` is a pure Gaussian.
    pub lorentz_fraction: f64,
}

impl Peak {
    pub fn value(&self, nu: f64) -> f64 {
        let x = 2.0 * (nu - self.center) / self.fwhm;
        let x2 = x * x;
        let eta = self.lorentz_fraction;
        self.amplitude * (eta / (1.0 + x2) + (1.0 - eta) * (-LN_2 * x2).exp())
    }

    /// Integral over the whole real line.
    pub fn area(&self) -> f64 {
        let eta = self.lorentz_fraction;
        let lorentz = PI / 2.0;
        let gauss = 0.5 * (PI / LN_2).sqrt();
        self.amplitude * self.fwhm * (eta * lorentz + (1.0 - eta) * gauss)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.center.is_finite()
            && self.fwhm > 0.0
            && self.fwhm.is_finite()
            && (0.0..=1.0).contains(&self.amplitude)
            && (0.0..=1.0).contains(&self.lorentz_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid filter peak {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// Sum of peaks, clipped at unit transmission.
    Parametric(Vec<Peak>),
    /// Samples, linearly interpolated between strictly increasing detunings.
    Tabulated { nu: Vec<f64>, t: Vec<f64> },
}

/// Transmission versus detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCurve {
    repr: Representation,
    label: CurveLabel,
}

impl FilterCurve {
    pub fn parametric(peaks: Vec<Peak>, label: CurveLabel) -> Result<Self> {
        if peaks.is_empty() {
            return Err(Error::Domain(
                "a parametric curve needs at least one peak".into(),
            ));
        }
        for p in &peaks {
            p.validate()?;
        }
        Ok(Self {
            repr: Representation::Parametric(peaks),
            label,
        })
    }

    pub fn tabulated(nu: Vec<f64>, t: Vec<f64>, label: CurveLabel) -> Result<Self> {
        if nu.len() != t.len() || nu.len() < 3 {
            return Err(Error::Domain(format!(
                "tabulated curve needs >= 3 matching samples, got {} detunings and {} values",
                nu.len(),
                t.len()
            )));
        }
        if let Some(w) = nu.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "detunings must be strictly increasing (sample {})",
                w + 1
            )));
        }
        if let Some(v) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("transmission {v} outside [0, 1]")));
        }
        Ok(Self {
            repr: Representation::Tabulated { nu, t },
            label,
        })
    }

    pub fn label(&self) -> CurveLabel {
        self.label
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Detuning range of a tabulated curve; `None` for parametric curves,
    /// which are defined everywhere.
    pub fn range(&self) -> Option<(f64, f64)> {
        match &self.repr {
            Representation::Parametric(_) => None,
            Representation::Tabulated { nu, .. } => Some((nu[0], nu[nu.len() - 1])),
        }
    }

    pub fn transmission(&self, nu: f64) -> Result<f64> {
        match &self.repr {
            Representation::Parametric(peaks) => {
                Ok(peaks.iter().map(|p| p.value(nu)).sum::<f64>().min(1.0))
            }
            Representation::Tabulated { nu: xs, t } => {
                let (lo, hi) = (xs[0], xs[xs.len() - 1]);
                if !(nu >= lo && nu <= hi) {
                    return Err(Error::Extrapolation { nu, lo, hi });
                }
                Ok(interpolate(xs, t, nu))
            }
        }
    }

    /// Transmission with zero outside a tabulated range.
    fn transmission_or_zero(&self, nu: f64) -> f64 {
        self.transmission(nu).unwrap_or(0.0)
    }

    /// Width used to size grids: the narrowest parametric peak, or the
    /// measured full width at half maximum of the highest tabulated peak.
    pub fn characteristic_fwhm(&self) -> f64 {
        match &self.repr {
            Representation::Parametric(peaks) => {
                peaks.iter().map(|p| p.fwhm).fold(f64::INFINITY, f64::min)
            }
            Representation::Tabulated { nu, t } => measured_fwhm(nu, t),
        }
    }

    pub fn peak_transmission(&self) -> f64 {
        match &self.repr {
            Representation::Parametric(_) => {
                let tab = self.tabulate_default();
                tab.peak_transmission()
            }
            Representation::Tabulated { t, .. } => t.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Trapezoid area for tabulated curves, analytic peak areas for
    /// parametric ones (clipping at unit transmission ignored).
    pub fn area(&self) -> f64 {
        match &self.repr {
            Representation::Parametric(peaks) => peaks.iter().map(Peak::area).sum(),
            Representation::Tabulated { nu, t } => trapezoid(nu, t),
        }
    }

    /// Samples the curve on a uniform grid `[lo, hi]` with spacing close to
    /// `step`.
    pub fn tabulate(&self, lo: f64, hi: f64, step: f64) -> Result<FilterCurve> {
        if !(hi > lo) || !(step > 0.0) {
            return Err(Error::Domain(format!(
                "bad tabulation grid [{lo}, {hi}] step {step}"
            )));
        }
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let h = (hi - lo) / (n - 1) as f64;
        let nu: Vec<f64> = (0..n).map(|k| lo + k as f64 * h).collect();
        let t = nu
            .iter()
            .map(|&x| self.transmission(x))
            .collect::<Result<_>>()?;
        FilterCurve::tabulated(nu, t, self.label)
    }

    /// Tabulates a parametric curve over its peaks at fwhm/50 resolution;
    /// tabulated curves are returned unchanged.
    pub fn tabulate_default(&self) -> FilterCurve {
        match &self.repr {
            Representation::Tabulated { .. } => self.clone(),
            Representation::Parametric(peaks) => {
                let wmax = peaks.iter().map(|p| p.fwhm).fold(0.0, f64::max);
                let lo = peaks.iter().map(|p| p.center).fold(f64::INFINITY, f64::min);
                let hi = peaks
                    .iter()
                    .map(|p| p.center)
                    .fold(f64::NEG_INFINITY, f64::max);
                self.tabulate(
                    lo - 10.0 * wmax,
                    hi + 10.0 * wmax,
                    self.characteristic_fwhm() / 50.0,
                )
                .expect("parametric curves tabulate on any finite grid")
            }
        }
    }

    /// Parses the two-column `(detuning_GHz, transmission)` text format.
    pub fn from_text(text: &str, label: CurveLabel, origin: &Path) -> Result<Self> {
        let rows = io::parse_columns(text, 2, origin)?;
        let (nu, t) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        FilterCurve::tabulated(nu, t, label)
    }

    pub fn load(path: &Path, label: CurveLabel) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, label, path)
    }

    /// Two-column text rendering; parametric curves are tabulated first.
    pub fn to_text(&self) -> String {
        let tab = self.tabulate_default();
        let Representation::Tabulated { nu, t } = &tab.repr else {
            unreachable!()
        };
        let mut out = String::from("# detuning_GHz\ttransmission\n");
        for (x, y) in nu.iter().zip(t) {
            let _ = writeln!(out, "{x:.9e}\t{y:.9e}");
        }
        out
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x);
    if k == 0 {
        return ys[0];
    }
    if k >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let f = (x - x0) / (x1 - x0);
    ys[k - 1] + f * (ys[k] - ys[k - 1])
}

pub(crate) fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn measured_fwhm(nu: &[f64], t: &[f64]) -> f64 {
    let (imax, &tmax) = t
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty table");
    if tmax <= 0.0 {
        return nu[nu.len() - 1] - nu[0];
    }
    let half = 0.5 * tmax;
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> f64 {
        for k in range {
            let j = (k as isize + step) as usize;
            if t[j] < half {
                let f = (t[k] - half) / (t[k] - t[j]);
                return nu[k] + f * (nu[j] - nu[k]);
            }
        }
        if step < 0 {
            nu[0]
        } else {
            nu[nu.len() - 1]
        }
    };
    let left = crossing(&mut (1..=imax).rev(), -1);
    let right = crossing(&mut (imax..nu.len() - 1), 1);
    right - left
}

/// Operating parameters of a Faraday filter, with linear field tuning of the
/// transmission peak position and width around a reference field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    /// Cell temperature. Carried as a label: curves are per temperature.
    pub temperature_c: f64,
    pub field_mt: f64,
    pub center_coeff_mhz_per_mt: f64,
    pub width_coeff_mhz_per_mt: f64,
    pub reference_center_ghz: f64,
    pub reference_width_ghz: f64,
    pub reference_field_mt: f64,
    pub amplitude: f64,
    pub lorentz_fraction: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            temperature_c: 85.0,
            field_mt: 45.0,
            center_coeff_mhz_per_mt: 24.6,
            width_coeff_mhz_per_mt: 40.8,
            reference_center_ghz: 0.0,
            reference_width_ghz: 1.2,
            reference_field_mt: 45.0,
            amplitude: 0.8,
            lorentz_fraction: 0.5,
        }
    }
}

impl FilterSettings {
    pub fn center_ghz(&self) -> f64 {
        self.reference_center_ghz
            + 1e-3 * self.center_coeff_mhz_per_mt * (self.field_mt - self.reference_field_mt)
    }

    pub fn width_ghz(&self) -> f64 {
        self.reference_width_ghz
            + 1e-3 * self.width_coeff_mhz_per_mt * (self.field_mt - self.reference_field_mt)
    }

    pub fn peak(&self) -> Result<Peak> {
        let width = self.width_ghz();
        if !(width > 0.0) {
            return Err(Error::Domain(format!(
                "field {} mT gives non-positive filter width {width} GHz",
                self.field_mt
            )));
        }
        let peak = Peak {
            center: self.center_ghz(),
            fwhm: width,
            amplitude: self.amplitude,
            lorentz_fraction: self.lorentz_fraction,
        };
        peak.validate()?;
        Ok(peak)
    }

    /// Laser transmission curve at these settings.
    pub fn to_curve(&self) -> Result<FilterCurve> {
        FilterCurve::parametric(vec![self.peak()?], CurveLabel::Laser)
    }
}

pub fn filter_transmission(settings: &FilterSettings, nu: f64) -> Result<f64> {
    Ok(settings.peak()?.value(nu).min(1.0))
}

/// Grid for [`convolve`]. Unset fields take the defaults: step
/// `min(fwhm)/50`, kernel half-span `10 (filter fwhm + line fwhm)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConvolutionGrid {
    pub step: Option<f64>,
    pub half_span: Option<f64>,
}

/// Transmission seen by an emitter centred at each detuning: the filter
/// curve convolved with the normalised line shape.
///
/// The result is tabulated on a uniform grid that extends the filter's
/// support by the kernel half-span on both sides. Kernel weights are exact
/// cell integrals of the Lorentzian; the wing mass beyond the half-span is
/// assigned to the two outermost cells, so the discrete convolution conserves
/// transmitted area exactly.
pub fn convolve(
    filter: &FilterCurve,
    profile: &SpectralProfile,
    grid: &ConvolutionGrid,
) -> Result<FilterCurve> {
    let a = filter.characteristic_fwhm();
    let b = profile.fwhm();
    let finest = a.min(b);
    let step = grid.step.unwrap_or(finest / 50.0);
    let limit = finest / 10.0;
    if !(step > 0.0) || step > limit {
        return Err(Error::Resolution { step, limit });
    }
    let span = grid.half_span.unwrap_or(10.0 * (a + b));
    if !(span >= step) {
        return Err(Error::Domain(format!(
            "kernel half-span {span} GHz below step"
        )));
    }

    let (lo, hi) = match filter.representation() {
        Representation::Parametric(peaks) => {
            let c0 = peaks.iter().map(|p| p.center).fold(f64::INFINITY, f64::min);
            let c1 = peaks
                .iter()
                .map(|p| p.center)
                .fold(f64::NEG_INFINITY, f64::max);
            (c0 - span, c1 + span)
        }
        Representation::Tabulated { nu, .. } => (nu[0], nu[nu.len() - 1]),
    };
    let n_src = ((hi - lo) / step).floor() as usize + 1;
    let src: Vec<f64> = (0..n_src)
        .map(|j| filter.transmission_or_zero(lo + j as f64 * step))
        .collect();

    let m = (span / step).ceil() as usize;
    let hw = 0.5 * b;
    let cdf = |x: f64| (x / hw).atan() / PI;
    let mut kernel: Vec<f64> = (0..=2 * m)
        .map(|idx| {
            let off = idx as f64 - m as f64;
            cdf((off + 0.5) * step) - cdf((off - 0.5) * step)
        })
        .collect();
    let edge = (m as f64 + 0.5) * step;
    let tail = 0.5 - cdf(edge);
    kernel[0] += tail;
    kernel[2 * m] += tail;

    let values = linear_convolution(&src, &kernel);
    let origin = lo - m as f64 * step + profile.center();
    let nu: Vec<f64> = (0..values.len())
        .map(|k| origin + k as f64 * step)
        .collect();
    let t: Vec<f64> = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    FilterCurve::tabulated(nu, t, CurveLabel::EmitterConvolved)
}

fn linear_convolution(x: &[f64], k: &[f64]) -> Vec<f64> {
    let len = x.len() + k.len() - 1;
    let n = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for (b, &s) in buf.iter_mut().zip(v) {
            b.re = s;
        }
        buf
    };
    let mut fx = pad(x);
    let mut fk = pad(k);
    fwd.process(&mut fx);
    fwd.process(&mut fk);
    for (a, b) in fx.iter_mut().zip(&fk) {
        *a *= *b;
    }
    inv.process(&mut fx);
    let scale = 1.0 / n as f64;
    fx[..len].iter().map(|c| c.re * scale).collect()
}

/// dT/dnu in 1/GHz.
///
/// Tabulated curves use central differences at the nodes, linearly
/// interpolated in between; the first and last nodes have no central
/// difference and are rejected. Parametric curves use a central difference
/// with a step of 1e-4 of the narrowest peak width.
pub fn slope_at(curve: &FilterCurve, nu: f64) -> Result<f64> {
    match curve.representation() {
        Representation::Parametric(_) => {
            let h = 1e-4 * curve.characteristic_fwhm();
            Ok((curve.transmission(nu + h)? - curve.transmission(nu - h)?) / (2.0 * h))
        }
        Representation::Tabulated { nu: xs, t } => {
            let n = xs.len();
            let (lo, hi) = (xs[1], xs[n - 2]);
            if !(nu >= lo && nu <= hi) {
                return Err(Error::Extrapolation { nu, lo, hi });
            }
            let node = |k: usize| (t[k + 1] - t[k - 1]) / (xs[k + 1] - xs[k - 1]);
            let last = n - 2;
            let k = (xs.partition_point(|&v| v <= nu) - 1).clamp(1, last);
            let s0 = node(k);
            if k == last {
                return Ok(s0);
            }
            let s1 = node(k + 1);
            let f = ((nu - xs[k]) / (xs[k + 1] - xs[k])).clamp(0.0, 1.0);
            Ok(s0 + f * (s1 - s0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetPointCriterion {
    /// Node of maximum |slope|.
    SteepestSlope,
    /// First crossing of the given transmission, scanning upwards in detuning.
    TargetTransmission(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetPoint {
    pub nu: f64,
    pub transmission: f64,
    /// dT/dnu at `nu`, in 1/GHz.
    pub slope: f64,
}

/// Slopes within this relative margin of the maximum count as tied; ties go
/// to the lowest detuning.
const SLOPE_TIE: f64 = 1e-3;

pub fn find_set_point(curve: &FilterCurve, criterion: SetPointCriterion) -> Result<SetPoint> {
    let tab = curve.tabulate_default();
    let Representation::Tabulated { nu, t } = tab.representation() else {
        unreachable!()
    };
    let n = nu.len();
    match criterion {
        SetPointCriterion::SteepestSlope => {
            let slopes: Vec<f64> = (1..n - 1)
                .map(|k| (t[k + 1] - t[k - 1]) / (nu[k + 1] - nu[k - 1]))
                .collect();
            let max = slopes.iter().map(|s| s.abs()).fold(0.0, f64::max);
            if !(max > 0.0) {
                return Err(Error::NoSetPoint("transmission curve is flat".into()));
            }
            let k = slopes
                .iter()
                .position(|s| s.abs() >= max * (1.0 - SLOPE_TIE))
                .expect("maximum is attained")
                + 1;
            Ok(SetPoint {
                nu: nu[k],
                transmission: t[k],
                slope: slopes[k - 1],
            })
        }
        SetPointCriterion::TargetTransmission(target) => {
            if !(target > 0.0 && target < 1.0) {
                return Err(Error::NoSetPoint(format!(
                    "target transmission {target} outside (0, 1)"
                )));
            }
            let k = (0..n - 1)
                .find(|&k| (t[k] - target) * (t[k + 1] - target) <= 0.0 && t[k] != t[k + 1])
                .ok_or_else(|| {
                    Error::NoSetPoint(format!("curve never crosses transmission {target}"))
                })?;
            let x = match curve.representation() {
                Representation::Parametric(_) => {
                    bisect(|x| curve.transmission_or_zero(x) - target, nu[k], nu[k + 1])
                }
                Representation::Tabulated { .. } => {
                    nu[k] + (target - t[k]) / (t[k + 1] - t[k]) * (nu[k + 1] - nu[k])
                }
            };
            let slope = match slope_at(curve, x) {
                Ok(s) => s,
                Err(_) => (t[k + 1] - t[k]) / (nu[k + 1] - nu[k]),
            };
            if slope == 0.0 {
                return Err(Error::NoSetPoint("zero slope at crossing".into()));
            }
            Ok(SetPoint {
                nu: x,
                transmission: curve.transmission(x)?,
                slope,
            })
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-14 * (1.0 + m.abs()) {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
