use std::f64::consts::PI;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Corner frequencies of the relaxation processes per decade.
const CORNERS_PER_DECADE: f64 = 3.0;

/// Stochastic emitter frequency noise with one-sided PSD
/// `h_flicker / f + h_white` (GHz^2/Hz) over `[f_low, f_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// 1/f coefficient, GHz^2 (the PSD value at 1 Hz).
    #[serde(rename = "h_flicker_ghz2")]
    pub h_flicker: f64,
    /// White floor, GHz^2/Hz.
    #[serde(rename = "h_white_ghz2_per_hz")]
    pub h_white: f64,
    #[serde(rename = "f_low_hz")]
    pub f_low: f64,
    #[serde(rename = "f_high_hz")]
    pub f_high: f64,
    /// Seed for standalone traces. Simulations draw from their own streams.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            h_flicker: 1e-4,
            h_white: 0.0,
            f_low: 1e-4,
            f_high: 1.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn silent() -> Self {
        Self {
            h_flicker: 0.0,
            h_white: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.h_flicker >= 0.0 && self.h_white >= 0.0) {
            return Err(Error::Config(
                "noise coefficients must be non-negative".into(),
            ));
        }
        if !(self.f_low > 0.0 && self.f_low < self.f_high) {
            return Err(Error::Config(format!(
                "noise band [{}, {}] Hz is empty",
                self.f_low, self.f_high
            )));
        }
        if !(dt > 0.0 && dt < 0.5 / self.f_high) {
            return Err(Error::Config(format!(
                "sample step {dt} s cannot resolve the band up to {} Hz",
                self.f_high
            )));
        }
        Ok(())
    }
}

/// Streaming noise source.
///
/// The 1/f part is a sum of first-order relaxation (Ornstein-Uhlenbeck)
/// processes with corner frequencies spaced by a factor `r = 10^(1/3)` from a
/// decade below `f_low` to a decade above `f_high` (capped at the Nyquist
/// frequency). Giving every process the variance `h ln r` makes the summed
/// Lorentzians approximate `h / f` between the outermost corners. Each
/// process is updated with its exact discrete-time recursion.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    poles: Vec<f64>,
    drive: Vec<f64>,
    state: Vec<f64>,
    white_sigma: f64,
    rng: SimRng,
}

impl NoiseGenerator {
    pub fn new(model: &NoiseModel, dt: f64) -> Result<Self> {
        Self::with_rng(model, dt, SimRng::seed_from_u64(model.seed))
    }

    pub fn with_rng(model: &NoiseModel, dt: f64, mut rng: SimRng) -> Result<Self> {
        model.validate(dt)?;
        let ratio = 10f64.powf(1.0 / CORNERS_PER_DECADE);
        let nyquist = 0.5 / dt;
        let mut poles = Vec::new();
        let mut drive = Vec::new();
        let mut state = Vec::new();
        if model.h_flicker > 0.0 {
            let sigma = (model.h_flicker * ratio.ln()).sqrt();
            let top = (10.0 * model.f_high).min(nyquist);
            let mut corner = 0.1 * model.f_low;
            while corner <= top * (1.0 + 1e-9) {
                let a = (-2.0 * PI * corner * dt).exp();
                poles.push(a);
                drive.push(sigma * (1.0 - a * a).sqrt());
                let z: f64 = StandardNormal.sample(&mut rng);
                state.push(sigma * z);
                corner *= ratio;
            }
        }
        Ok(Self {
            poles,
            drive,
            state,
            white_sigma: (model.h_white / (2.0 * dt)).sqrt(),
            rng,
        })
    }

    /// Current value, GHz.
    pub fn value(&self) -> f64 {
        self.state.iter().sum::<f64>()
    }

    /// Advances one step and returns the new sample (1/f state plus an
    /// independent white draw).
    pub fn next_sample(&mut self) -> f64 {
        let mut sum = 0.0;
        for ((x, &a), &b) in self.state.iter_mut().zip(&self.poles).zip(&self.drive) {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *x = a * *x + b * z;
            sum += *x;
        }
        if self.white_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            sum += self.white_sigma * z;
        }
        sum
    }

    pub fn components(&self) -> usize {
        self.poles.len()
    }
}

/// Frequency-offset trace of `floor(duration / dt)` samples, GHz.
pub fn sample_noise(model: &NoiseModel, duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::Config(
            "noise trace duration must be positive".into(),
        ));
    }
    let mut gen = NoiseGenerator::new(model, dt)?;
    let n = (duration / dt).floor() as usize;
    Ok((0..n).map(|_| gen.next_sample()).collect())
}
