//! Photon detection through the filter and Poisson event generation.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::spectra::FilterCurve;

/// One detector behind a filter branch.
#[derive(Debug, Clone)]
pub struct DetectionChannel {
    /// Emitter photon rate arriving at the detector, after detector
    /// efficiency, cps.
    pub r_qd: f64,
    pub dark_rate: f64,
    pub curve: FilterCurve,
}

impl DetectionChannel {
    pub fn new(r_qd: f64, dark_rate: f64, curve: FilterCurve) -> Result<Self> {
        if !(r_qd >= 0.0 && r_qd.is_finite()) {
            return Err(Error::Config(format!(
                "emitter rate {r_qd} cps must be non-negative"
            )));
        }
        if !(dark_rate >= 0.0 && dark_rate.is_finite()) {
            return Err(Error::Config(format!(
                "dark rate {dark_rate} cps must be non-negative"
            )));
        }
        Ok(Self {
            r_qd,
            dark_rate,
            curve,
        })
    }

    /// Signal rate for emission at detuning `nu`, excluding dark counts.
    pub fn rate(&self, nu: f64) -> Result<f64> {
        Ok(self.curve.transmission(nu)? * self.r_qd)
    }
}

pub fn instantaneous_rate(channel: &DetectionChannel, nu: f64) -> Result<f64> {
    channel.rate(nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Signal,
    Dark,
}

impl Origin {
    fn as_str(self) -> &'static str {
        match self {
            Origin::Signal => "signal",
            Origin::Dark => "dark",
        }
    }
}

/// Time-ordered detection events within a window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrain {
    window: (f64, f64),
    times: Vec<f64>,
    tags: Vec<Origin>,
}

impl EventTrain {
    pub fn empty(window: (f64, f64)) -> Self {
        Self {
            window,
            times: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tags(&self) -> &[Origin] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.tags.iter().filter(|&&t| t == origin).count()
    }

    /// Counts per bin of width `bin` starting at the window start. A final
    /// partial bin is dropped.
    pub fn binned(&self, bin: f64) -> Vec<u64> {
        let (a, b) = self.window;
        let n = ((b - a) / bin).floor() as usize;
        let mut counts = vec![0; n];
        for &t in &self.times {
            let k = ((t - a) / bin) as usize;
            if k < n {
                counts[k] += 1;
            }
        }
        counts
    }

    /// One line per event: time in seconds to 12 significant digits, then
    /// the origin tag.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(24 * self.times.len() + 16);
        out.push_str("# t_s\torigin\n");
        for (t, tag) in self.times.iter().zip(&self.tags) {
            let _ = writeln!(out, "{t:.11e}\t{}", tag.as_str());
        }
        out
    }
}

fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0.is_finite() && window.1.is_finite() && window.0 <= window.1) {
        return Err(Error::Domain(format!(
            "invalid window [{}, {}] s",
            window.0, window.1
        )));
    }
    Ok(())
}

/// Appends the arrival times of a homogeneous Poisson process of rate
/// `rate` on `[a, b)` to `out`.
pub fn push_poisson_times<R: Rng + ?Sized>(
    rate: f64,
    a: f64,
    b: f64,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    if !(rate > 0.0) {
        return;
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut t = a;
    loop {
        t += gap.sample(rng);
        if t >= b {
            break;
        }
        out.push(t);
    }
}

/// Inhomogeneous Poisson events by thinning a homogeneous process of rate
/// `rate_bound`. Every event is tagged as signal.
pub fn generate_events<R: Rng + ?Sized>(
    mut rate_fn: impl FnMut(f64) -> f64,
    window: (f64, f64),
    rate_bound: f64,
    rng: &mut R,
) -> Result<EventTrain> {
    check_window(window)?;
    if !(rate_bound >= 0.0 && rate_bound.is_finite()) {
        return Err(Error::Domain(format!(
            "rate bound {rate_bound} cps is invalid"
        )));
    }
    let mut candidates = Vec::new();
    push_poisson_times(rate_bound, window.0, window.1, rng, &mut candidates);
    let mut times = Vec::with_capacity(candidates.len());
    for t in candidates {
        let rate = rate_fn(t);
        if !(rate >= 0.0) {
            return Err(Error::Domain(format!(
                "rate {rate} cps at t = {t} s is negative"
            )));
        }
        if rate > rate_bound * (1.0 + 1e-12) {
            return Err(Error::BoundViolation {
                rate,
                bound: rate_bound,
                t,
            });
        }
        if rng.random::<f64>() * rate_bound < rate {
            times.push(t);
        }
    }
    let tags = vec![Origin::Signal; times.len()];
    Ok(EventTrain {
        window,
        times,
        tags,
    })
}

/// Adds homogeneous dark events to `train` and re-sorts.
pub fn merge_dark<R: Rng + ?Sized>(
    train: &EventTrain,
    dark_rate: f64,
    window: (f64, f64),
    rng: &mut R,
) -> Result<EventTrain> {
    check_window(window)?;
    if !(dark_rate >= 0.0) {
        return Err(Error::Domain(format!(
            "dark rate {dark_rate} cps is negative"
        )));
    }
    let mut dark = Vec::new();
    push_poisson_times(dark_rate, window.0, window.1, rng, &mut dark);
    let n = train.times.len() + dark.len();
    let mut times = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    while i < train.times.len() || j < dark.len() {
        let take_signal = j == dark.len() || (i < train.times.len() && train.times[i] <= dark[j]);
        if take_signal {
            times.push(train.times[i]);
            tags.push(train.tags[i]);
            i += 1;
        } else {
            times.push(dark[j]);
            tags.push(Origin::Dark);
            j += 1;
        }
    }
    Ok(EventTrain {
        window: (train.window.0.min(window.0), train.window.1.max(window.1)),
        times,
        tags,
    })
}
