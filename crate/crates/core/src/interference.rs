//! Two-photon interference: indistinguishability, visibility versus mutual
//! detuning, peak-area visibility and synthetic coincidence histograms.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lifetime and coherence time of one emitter, in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    pub t1_ps: f64,
    pub t2_ps: f64,
}

impl EmitterParams {
    pub fn new(t1_ps: f64, t2_ps: f64) -> Result<Self> {
        let e = Self { t1_ps, t2_ps };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1_ps > 0.0 && self.t2_ps > 0.0 && self.t1_ps.is_finite()) {
            return Err(Error::Domain(format!(
                "T1 = {} ps and T2 = {} ps must be positive",
                self.t1_ps, self.t2_ps
            )));
        }
        if self.t2_ps > 2.0 * self.t1_ps * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "T2 = {} ps exceeds the radiative limit 2 T1 = {} ps",
                self.t2_ps,
                2.0 * self.t1_ps
            )));
        }
        Ok(())
    }

    /// Radiative decay rate, 1/ns.
    pub fn gamma(&self) -> f64 {
        1e3 / self.t1_ps
    }

    /// Pure dephasing rate, 1/ns.
    pub fn gamma_star(&self) -> f64 {
        (2e3 / self.t2_ps - self.gamma()).max(0.0)
    }
}

pub fn indistinguishability(e: &EmitterParams) -> f64 {
    e.t2_ps / (2.0 * e.t1_ps)
}

fn visibility_terms(e1: &EmitterParams, e2: &EmitterParams) -> (f64, f64) {
    let (g1, g2) = (e1.gamma(), e2.gamma());
    let prefactor = g1 * g2 / (g1 + g2);
    let total = g1 + g2 + e1.gamma_star() + e2.gamma_star();
    (prefactor, total)
}

/// Two-photon interference visibility of photons from two emitters whose
/// centre frequencies differ by `delta_nu` GHz.
pub fn tpi_visibility(e1: &EmitterParams, e2: &EmitterParams, delta_nu: f64) -> f64 {
    let (k, s) = visibility_terms(e1, e2);
    let w = 2.0 * PI * delta_nu;
    k * s / (w * w + 0.25 * s * s)
}

/// The non-negative detuning at which the visibility equals `v`.
pub fn invert_visibility(v: f64, e1: &EmitterParams, e2: &EmitterParams) -> Result<f64> {
    let v0 = tpi_visibility(e1, e2, 0.0);
    if !(v > 0.0) || v > v0 * (1.0 + 1e-12) {
        return Err(Error::NoSolution(format!(
            "visibility {v} is outside (0, {v0}]"
        )));
    }
    let (k, s) = visibility_terms(e1, e2);
    let w2 = (k * s / v - 0.25 * s * s).max(0.0);
    Ok(w2.sqrt() / (2.0 * PI))
}

/// Visibility and its first-order Poisson uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaVisibility {
    pub v: f64,
    pub sigma: f64,
}

impl AreaVisibility {
    /// Negative values arise from counting statistics only.
    pub fn is_unphysical(&self) -> bool {
        self.v < 0.0
    }
}

pub fn visibility_from_areas(a_perp: f64, a_par: f64) -> Result<f64> {
    if !(a_perp > 0.0) {
        return Err(Error::UndefinedVisibility);
    }
    if !(a_par >= 0.0) {
        return Err(Error::Domain(format!("parallel area {a_par} is negative")));
    }
    Ok((a_perp - a_par) / a_perp)
}

/// As [`visibility_from_areas`], propagating the given area variances.
pub fn visibility_with_sigma(
    a_perp: f64,
    a_par: f64,
    var_perp: f64,
    var_par: f64,
) -> Result<AreaVisibility> {
    let v = visibility_from_areas(a_perp, a_par)?;
    let d_par = 1.0 / a_perp;
    let d_perp = a_par / (a_perp * a_perp);
    let sigma = (d_par * d_par * var_par + d_perp * d_perp * var_perp).sqrt();
    if v < 0.0 {
        warn!("negative visibility {v:.3} from peak areas: statistical fluctuation");
    }
    Ok(AreaVisibility { v, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityPoint {
    /// End of the integration window, minutes.
    pub t_min: f64,
    pub window_min: f64,
    pub v: f64,
    pub sigma_v: f64,
}

/// Time-averaged visibility over trailing windows of `window_min` minutes,
/// evaluated every `step_min` minutes from `t = window_min`.
///
/// The detuning trace `(t_s, dnu)` is interpolated linearly and the
/// visibility is averaged with the trapezoid rule over the samples inside
/// each window.
pub fn windowed_visibility(
    t_s: &[f64],
    dnu: &[f64],
    e1: &EmitterParams,
    e2: &EmitterParams,
    window_min: f64,
    step_min: f64,
) -> Result<Vec<VisibilityPoint>> {
    if t_s.len() != dnu.len() || t_s.len() < 2 {
        return Err(Error::Domain(
            "detuning trace needs at least two samples".into(),
        ));
    }
    if t_s.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("trace times must increase strictly".into()));
    }
    if !(window_min >= 0.0 && step_min > 0.0) {
        return Err(Error::Domain(
            "window must be non-negative and step positive".into(),
        ));
    }
    let (start, end) = (t_s[0], t_s[t_s.len() - 1]);
    let window = 60.0 * window_min;
    if end - start < window {
        return Err(Error::Domain(format!(
            "trace spans {:.1} min, shorter than the {window_min} min window",
            (end - start) / 60.0
        )));
    }
    let v: Vec<f64> = dnu.iter().map(|&x| tpi_visibility(e1, e2, x)).collect();
    let v_at = |t: f64| -> f64 {
        let k = t_s.partition_point(|&x| x <= t).clamp(1, t_s.len() - 1);
        let (x0, x1) = (t_s[k - 1], t_s[k]);
        let f = ((t - x0) / (x1 - x0)).clamp(0.0, 1.0);
        tpi_visibility(e1, e2, dnu[k - 1] + f * (dnu[k] - dnu[k - 1]))
    };

    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t_end = start + window + 60.0 * step_min * k as f64;
        if t_end > end * (1.0 + 1e-12) + 1e-9 {
            break;
        }
        let t_end = t_end.min(end);
        let value = if window == 0.0 {
            v_at(t_end)
        } else {
            let t_begin = t_end - window;
            let lo = t_s.partition_point(|&x| x <= t_begin);
            let hi = t_s.partition_point(|&x| x < t_end);
            let mut prev = (t_begin, v_at(t_begin));
            let mut acc = 0.0;
            for j in lo..hi {
                acc += 0.5 * (prev.1 + v[j]) * (t_s[j] - prev.0);
                prev = (t_s[j], v[j]);
            }
            acc += 0.5 * (prev.1 + v_at(t_end)) * (t_end - prev.0);
            acc / window
        };
        out.push(VisibilityPoint {
            t_min: (t_end - start) / 60.0,
            window_min,
            v: value,
            sigma_v: 0.0,
        });
        k += 1;
    }
    Ok(out)
}

pub fn visibility_trace_to_text(points: &[VisibilityPoint]) -> String {
    let mut out = String::from("# t_min\tV\tsigma_V\n");
    for p in points {
        let _ = writeln!(out, "{:.6}\t{:.9}\t{:.9}", p.t_min, p.v, p.sigma_v);
    }
    out
}

/// Coincidence budget and timing for a synthetic HOM measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomConfig {
    /// Signal singles rates at the two detectors, cps.
    pub singles_cps: [f64; 2],
    pub dark_cps: [f64; 2],
    pub acquisition_s: f64,
    pub rep_period_ns: f64,
    pub n_side_peaks: usize,
    pub bins_per_period: usize,
    pub blink_factor: f64,
    /// Lifetimes that shape the correlation peaks, ps.
    pub t1_ps: [f64; 2],
}

impl Default for HomConfig {
    fn default() -> Self {
        Self {
            singles_cps: [5000.0, 5000.0],
            dark_cps: [104.0, 134.0],
            acquisition_s: 2400.0,
            rep_period_ns: 13.16,
            n_side_peaks: 6,
            bins_per_period: 128,
            blink_factor: 1.0,
            t1_ps: [155.0, 187.0],
        }
    }
}

impl HomConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !self.singles_cps.iter().all(|&r| r >= 0.0 && r.is_finite())
            || !self.dark_cps.iter().all(|&r| r >= 0.0 && r.is_finite())
        {
            return Err(Error::Config("HOM rates must be non-negative".into()));
        }
        if !(positive(self.acquisition_s) && positive(self.rep_period_ns)) {
            return Err(Error::Config(
                "acquisition time and rep period must be positive".into(),
            ));
        }
        if self.n_side_peaks == 0 || self.bins_per_period < 2 {
            return Err(Error::Config(
                "need at least one side peak and two bins per period".into(),
            ));
        }
        if !(self.blink_factor > 0.0 && self.blink_factor <= 1.0) {
            return Err(Error::Config(format!(
                "blink factor {} must lie in (0, 1]",
                self.blink_factor
            )));
        }
        if !self.t1_ps.iter().all(|&t| positive(t)) {
            return Err(Error::Config("peak lifetimes must be positive".into()));
        }
        Ok(())
    }

    /// Expected coincidences in one side peak.
    pub fn side_area(&self) -> f64 {
        self.singles_cps[0] * self.singles_cps[1] * self.rep_period_ns * 1e-9 * self.acquisition_s
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.rep_period_ns / self.bins_per_period as f64
    }

    /// Expected flat accidental coincidences per bin from dark counts.
    pub fn dark_floor_per_bin(&self) -> f64 {
        let [r1, r2] = self.singles_cps;
        let [d1, d2] = self.dark_cps;
        (r1 * d2 + r2 * d1 + d1 * d2) * self.bin_width_ns() * 1e-9 * self.acquisition_s
    }
}

/// Coincidence histograms for parallel and perpendicular polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct HomHistogram {
    /// Bin edges, ns; one more than the number of bins.
    pub edges_ns: Vec<f64>,
    pub parallel: Vec<u64>,
    pub perpendicular: Vec<u64>,
    pub rep_period_ns: f64,
    pub bins_per_period: usize,
    pub n_side_peaks: usize,
}

/// Summed counts of the peak at delay `k * rep_period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakAreas {
    pub central_parallel: f64,
    pub central_perpendicular: f64,
    pub side_mean_parallel: f64,
    pub side_mean_perpendicular: f64,
}

impl HomHistogram {
    pub fn bin_centers_ns(&self) -> Vec<f64> {
        self.edges_ns
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    /// Counts in the slot `[k T - T/2, k T + T/2)` for each `k`, ordered from
    /// `-n_side_peaks` to `+n_side_peaks`.
    pub fn slot_sums(&self, counts: &[u64]) -> Vec<f64> {
        counts
            .chunks(self.bins_per_period)
            .map(|c| c.iter().sum::<u64>() as f64)
            .collect()
    }

    pub fn areas(&self) -> PeakAreas {
        let par = self.slot_sums(&self.parallel);
        let perp = self.slot_sums(&self.perpendicular);
        let c = self.n_side_peaks;
        let side_mean = |s: &[f64]| (s.iter().sum::<f64>() - s[c]) / (2 * self.n_side_peaks) as f64;
        PeakAreas {
            central_parallel: par[c],
            central_perpendicular: perp[c],
            side_mean_parallel: side_mean(&par),
            side_mean_perpendicular: side_mean(&perp),
        }
    }

    /// Columns: bin centre (ns), parallel counts, perpendicular counts.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# delay_ns\tcounts_parallel\tcounts_perpendicular\n");
        for ((x, a), b) in self
            .bin_centers_ns()
            .iter()
            .zip(&self.parallel)
            .zip(&self.perpendicular)
        {
            let _ = writeln!(out, "{x:.6}\t{a}\t{b}");
        }
        out
    }
}

/// Fraction of a back-to-back exponential peak (decay `t_pos` for positive
/// delay, `t_neg` for negative), truncated at `+-half`, that lies in
/// `[a, b)` relative to the peak centre.
fn peak_fraction(a: f64, b: f64, t_pos: f64, t_neg: f64, half: f64) -> f64 {
    let mass = |x: f64| -> f64 {
        // Unnormalised cumulative mass from -half to x.
        let x = x.clamp(-half, half);
        let neg_total = t_neg * (1.0 - (-half / t_neg).exp());
        if x <= 0.0 {
            t_neg * ((x / t_neg).exp() - (-half / t_neg).exp())
        } else {
            neg_total + t_pos * (1.0 - (-x / t_pos).exp())
        }
    };
    let total = mass(half);
    (mass(b) - mass(a)) / total
}

/// Synthetic coincidence histograms for true visibility `v_true`.
///
/// Every side peak has the expected area of [`HomConfig::side_area`]. The
/// central peak holds `0.5 * beta` of that for perpendicular polarization
/// and `0.5 * beta * (1 - v_true)` for parallel. A flat dark-count floor is
/// added and every bin is Poisson distributed.
pub fn synthesize_histogram<R: Rng + ?Sized>(
    v_true: f64,
    config: &HomConfig,
    rng: &mut R,
) -> Result<HomHistogram> {
    config.validate()?;
    if !(0.0..=1.0).contains(&v_true) {
        return Err(Error::Domain(format!("visibility {v_true} outside [0, 1]")));
    }
    let side = config.side_area();
    let beta = config.blink_factor;
    let central_par = 0.5 * beta * (1.0 - v_true) * side;
    if 0.5 * beta * side < 1.0 {
        warn!(
            "coincidence budget gives {:.2} expected central counts",
            0.5 * beta * side
        );
    }
    let period = config.rep_period_ns;
    let nb = config.bins_per_period;
    let width = config.bin_width_ns();
    let n_slots = 2 * config.n_side_peaks + 1;
    let first = -(config.n_side_peaks as f64 + 0.5) * period;
    let edges: Vec<f64> = (0..=n_slots * nb)
        .map(|k| first + k as f64 * width)
        .collect();
    let t_pos = config.t1_ps[0] * 1e-3;
    let t_neg = config.t1_ps[1] * 1e-3;
    let shape: Vec<f64> = (0..nb)
        .map(|j| {
            let a = -0.5 * period + j as f64 * width;
            peak_fraction(a, a + width, t_pos, t_neg, 0.5 * period)
        })
        .collect();
    let floor = config.dark_floor_per_bin();

    let mut sample = |mean: f64| -> u64 {
        if mean <= 0.0 {
            0
        } else {
            Poisson::new(mean).expect("finite mean").sample(rng) as u64
        }
    };
    let mut parallel = Vec::with_capacity(n_slots * nb);
    let mut perpendicular = Vec::with_capacity(n_slots * nb);
    for slot in 0..n_slots {
        let central = slot == config.n_side_peaks;
        let (a_par, a_perp) = if central {
            (central_par, 0.5 * beta * side)
        } else {
            (side, side)
        };
        for &s in &shape {
            parallel.push(sample(a_par * s + floor));
            perpendicular.push(sample(a_perp * s + floor));
        }
    }
    Ok(HomHistogram {
        edges_ns: edges,
        parallel,
        perpendicular,
        rep_period_ns: period,
        bins_per_period: nb,
        n_side_peaks: config.n_side_peaks,
    })
}

/// Peak areas after removing the flat accidental floor, with Poisson
/// variances of the raw counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedAreas {
    pub areas: PeakAreas,
    pub var_central_parallel: f64,
    pub var_central_perpendicular: f64,
    /// Some area would have gone negative and was set to zero.
    pub clamped: bool,
}

impl CorrectedAreas {
    pub fn visibility(&self) -> Result<AreaVisibility> {
        visibility_with_sigma(
            self.areas.central_perpendicular,
            self.areas.central_parallel,
            self.var_central_perpendicular,
            self.var_central_parallel,
        )
    }
}

/// Subtracts the accidental floor `(R1 d2 + R2 d1 + d1 d2) * bin * T_acq`
/// from every bin of every peak.
pub fn dark_correct(
    hist: &HomHistogram,
    dark_rates: [f64; 2],
    signal_rates: [f64; 2],
    acquisition_s: f64,
) -> Result<CorrectedAreas> {
    if dark_rates.iter().chain(&signal_rates).any(|&r| !(r >= 0.0)) || !(acquisition_s > 0.0) {
        return Err(Error::Domain(
            "rates must be non-negative and acquisition positive".into(),
        ));
    }
    let [r1, r2] = signal_rates;
    let [d1, d2] = dark_rates;
    let width_s = hist.rep_period_ns / hist.bins_per_period as f64 * 1e-9;
    let floor_slot =
        (r1 * d2 + r2 * d1 + d1 * d2) * width_s * acquisition_s * hist.bins_per_period as f64;
    let raw = hist.areas();
    let mut clamped = false;
    let mut sub = |x: f64| {
        let y = x - floor_slot;
        if y < 0.0 {
            clamped = true;
            0.0
        } else {
            y
        }
    };
    let areas = PeakAreas {
        central_parallel: sub(raw.central_parallel),
        central_perpendicular: sub(raw.central_perpendicular),
        side_mean_parallel: sub(raw.side_mean_parallel),
        side_mean_perpendicular: sub(raw.side_mean_perpendicular),
    };
    if clamped {
        warn!("dark-count correction exceeded a peak area; clamped to zero");
    }
    Ok(CorrectedAreas {
        areas,
        var_central_parallel: raw.central_parallel,
        var_central_perpendicular: raw.central_perpendicular,
        clamped,
    })
}
