//! Exponential-smoothing photon-rate estimator driven once per digital cycle.

use log::warn;

use crate::error::{Error, Result};

/// Mean photons per cycle above which the Boolean input starts to saturate
/// noticeably.
pub const OCCUPANCY_WARNING: f64 = 0.1;

/// First-order IIR rate estimator `R <- R d + B i` with
/// `d = exp(-tau_cycle / tau_filter)` and `i = (1 - d) / tau_cycle`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimator {
    tau_cycle: f64,
    tau_filter: f64,
    d: f64,
    i: f64,
    estimate: f64,
}

impl RateEstimator {
    pub fn new(tau_cycle: f64, tau_filter: f64, initial: f64) -> Result<Self> {
        if !(tau_cycle > 0.0 && tau_cycle.is_finite()) {
            return Err(Error::Config(format!(
                "cycle time {tau_cycle} s must be positive"
            )));
        }
        if !(tau_filter > tau_cycle) {
            return Err(Error::Config(format!(
                "filter time {tau_filter} s must exceed the cycle time {tau_cycle} s"
            )));
        }
        if !(initial >= 0.0 && initial.is_finite()) {
            return Err(Error::Config(format!(
                "initial estimate {initial} cps must be non-negative"
            )));
        }
        let d = (-tau_cycle / tau_filter).exp();
        let i = if tau_filter.is_infinite() {
            0.0
        } else {
            -(-tau_cycle / tau_filter).exp_m1() / tau_cycle
        };
        Ok(Self {
            tau_cycle,
            tau_filter,
            d,
            i,
            estimate: initial,
        })
    }

    pub fn tau_cycle(&self) -> f64 {
        self.tau_cycle
    }

    pub fn tau_filter(&self) -> f64 {
        self.tau_filter
    }

    pub fn decrement(&self) -> f64 {
        self.d
    }

    pub fn increment(&self) -> f64 {
        self.i
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    /// One cycle; `photon` is true if at least one detection fell inside it.
    pub fn tick(&mut self, photon: bool) -> f64 {
        self.estimate *= self.d;
        if photon {
            self.estimate += self.i;
        }
        self.estimate
    }

    /// `n` cycles without a detection.
    pub fn advance(&mut self, n: u64) -> f64 {
        if n > 0 {
            self.estimate *= powu(self.d, n);
        }
        self.estimate
    }

    /// Standard deviation of the estimate in steady state under Poisson
    /// input of rate `lambda`.
    pub fn steady_state_std(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        (lambda * self.tau_cycle * self.i * self.i / (1.0 - self.d * self.d)).sqrt()
    }

    /// Mean steady-state output for Poisson input of rate `lambda`,
    /// including the saturation of the Boolean input.
    pub fn expected_output(&self, lambda: f64) -> f64 {
        let p = -(-lambda * self.tau_cycle).exp_m1();
        p * self.i / (1.0 - self.d)
    }

    /// Logs a warning when `rate` puts more than 0.1 photons in a cycle.
    /// Returns the mean occupancy.
    pub fn check_occupancy(&self, rate: f64) -> f64 {
        let occupancy = rate * self.tau_cycle;
        if occupancy > OCCUPANCY_WARNING {
            warn!(
                "{occupancy:.3} photons per cycle at {rate:.0} cps: multiple arrivals collapse to one"
            );
        }
        occupancy
    }
}

pub fn steady_state_std(estimator: &RateEstimator, lambda: f64) -> f64 {
    estimator.steady_state_std(lambda)
}

/// `x^n` by repeated squaring over a 64-bit exponent.
fn powu(mut x: f64, mut n: u64) -> f64 {
    if n <= i32::MAX as u64 {
        return x.powi(n as i32);
    }
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= x;
        }
        x *= x;
        n >>= 1;
    }
    acc
}
