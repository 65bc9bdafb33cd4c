//! Rate-to-frequency discrimination, the PI law and the closed-loop
//! simulation that ties detection, estimation and actuation together.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::{debug, warn};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::{excess_deviation, rebin};
use crate::detection::{push_poisson_times, DetectionChannel};
use crate::drift::{ActuatorModel, ActuatorState, CreepModel, NoiseGenerator, NoiseModel};
use crate::error::{Error, Result};
use crate::estimator::RateEstimator;
use crate::rng::{stream_rng, Stream};
use crate::spectra::{find_set_point, slope_at, SetPointCriterion};

/// Width of the time buckets in which controller steps are grouped for
/// actuator creep.
const CREEP_BUCKET_S: f64 = 10.0;

/// Frequency deviation implied by a rate deviation on a flank of slope
/// `slope` (cps/GHz).
pub fn rate_to_frequency_error(delta_r: f64, slope: f64) -> Result<f64> {
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::Config(
            "discriminator slope must be finite and non-zero".into(),
        ));
    }
    Ok(delta_r / slope)
}

/// Positional PI controller with integrator clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    /// V per GHz.
    pub kp: f64,
    /// V per GHz per second.
    pub ki: f64,
    integrator: f64,
    v_min: f64,
    v_max: f64,
    saturated: bool,
}

impl PiController {
    pub fn new(kp: f64, ki: f64, limits: (f64, f64)) -> Result<Self> {
        if !(kp.is_finite() && ki.is_finite()) {
            return Err(Error::Config("controller gains must be finite".into()));
        }
        if !(limits.0 < limits.1) {
            return Err(Error::Config(format!(
                "output limits [{}, {}] are empty",
                limits.0, limits.1
            )));
        }
        Ok(Self {
            kp,
            ki,
            integrator: 0.0_f64.clamp(limits.0, limits.1),
            v_min: limits.0,
            v_max: limits.1,
            saturated: false,
        })
    }

    /// Gains for a closed-loop bandwidth `bandwidth_hz` through an actuator
    /// of `gain` GHz/V: the integral path alone crosses unity loop gain at
    /// the bandwidth, and the proportional path adds a quarter of unity gain,
    /// placing the controller zero at four times the bandwidth.
    pub fn from_bandwidth(bandwidth_hz: f64, gain: f64, limits: (f64, f64)) -> Result<Self> {
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!(
                "bandwidth {bandwidth_hz} Hz must be positive"
            )));
        }
        if gain == 0.0 || !gain.is_finite() {
            return Err(Error::Config("actuator gain must be non-zero".into()));
        }
        Self::new(0.25 / gain, 2.0 * PI * bandwidth_hz / gain, limits)
    }

    pub fn integrator(&self) -> f64 {
        self.integrator
    }

    pub fn limits(&self) -> (f64, f64) {
        (self.v_min, self.v_max)
    }

    /// True if the last update hit an output limit.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    /// Sets the integrator, clamped to the output limits.
    pub fn preset(&mut self, v: f64) {
        self.integrator = v.clamp(self.v_min, self.v_max);
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let raw = self.integrator + self.ki * error * dt;
        self.integrator = raw.clamp(self.v_min, self.v_max);
        let out = self.kp * error + self.integrator;
        let clamped = out.clamp(self.v_min, self.v_max);
        self.saturated = raw != self.integrator || out != clamped;
        clamped
    }
}

pub fn pi_update(controller: &mut PiController, error: f64, dt: f64) -> f64 {
    controller.update(error, dt)
}

/// Operating point of one lock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockConfig {
    /// Mean detection rate at the set point including dark counts, cps.
    pub r_set: f64,
    pub nu_set: f64,
    /// dR/dnu at the set point, cps/GHz.
    pub slope: f64,
    pub update_period: f64,
    pub target_bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockMode {
    Locked,
    FreeRunning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Normal,
    /// Error sign flipped, for exercising the watchdog.
    Inverted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetPointRule {
    #[default]
    SteepestSlope,
    TargetTransmission,
}

/// Lock parameters as given in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockSettings {
    pub tau_cycle_s: f64,
    pub tau_filter_s: f64,
    pub update_period_s: f64,
    pub bandwidth_hz: f64,
    pub set_point: SetPointRule,
    pub target_transmission: f64,
    /// When present, the emitter rate is rescaled so that the signal rate
    /// at the set point equals this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_set_cps: Option<f64>,
    /// Explicit gains override the bandwidth rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kp_v_per_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ki_v_per_ghz_s: Option<f64>,
    pub polarity: Polarity,
    /// Residual beyond which the lock is declared lost.
    pub watchdog_ghz: f64,
    /// Set-point step of `step_ghz` at `step_time_s`; no step if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_time_s: Option<f64>,
    pub step_ghz: f64,
    /// Relative sinusoidal modulation of the emitter intensity.
    pub intensity_depth: f64,
    pub intensity_period_s: f64,
}

impl Default for LockSettings {
    fn default() -> Self {
        Self {
            tau_cycle_s: 1e-6,
            tau_filter_s: 1.0,
            update_period_s: 0.1,
            bandwidth_hz: 0.03,
            set_point: SetPointRule::SteepestSlope,
            target_transmission: 0.25,
            r_set_cps: None,
            kp_v_per_ghz: None,
            ki_v_per_ghz_s: None,
            polarity: Polarity::Normal,
            watchdog_ghz: 0.5,
            step_time_s: None,
            step_ghz: 0.0,
            intensity_depth: 0.0,
            intensity_period_s: 60.0,
        }
    }
}

/// Everything the closed-loop simulation needs.
#[derive(Debug, Clone)]
pub struct LockSetup {
    pub channel: DetectionChannel,
    /// Out-of-loop monitor detector; its curve is not affected by feedback.
    pub monitor: Option<DetectionChannel>,
    pub config: LockConfig,
    pub tau_cycle: f64,
    pub tau_filter: f64,
    pub controller: PiController,
    pub actuator: ActuatorModel,
    /// Deterministic drift of the emitter; `None` disables creep.
    pub creep: Option<CreepModel>,
    pub noise: NoiseModel,
    pub mode: LockMode,
    pub polarity: Polarity,
    pub watchdog_ghz: f64,
    pub step: Option<(f64, f64)>,
    pub intensity: Option<(f64, f64)>,
    /// Detuning from the set point at t = 0, GHz.
    pub initial_offset_ghz: f64,
}

impl LockSetup {
    /// Derives the operating point from the lock channel's curve and the
    /// settings. The monitor, if any, keeps its own emitter rate.
    pub fn from_settings(
        settings: &LockSettings,
        mut channel: DetectionChannel,
        monitor: Option<DetectionChannel>,
        actuator: ActuatorModel,
        creep: Option<CreepModel>,
        noise: NoiseModel,
        mode: LockMode,
    ) -> Result<Self> {
        actuator.validate()?;
        let criterion = match settings.set_point {
            SetPointRule::SteepestSlope => SetPointCriterion::SteepestSlope,
            SetPointRule::TargetTransmission => {
                SetPointCriterion::TargetTransmission(settings.target_transmission)
            }
        };
        let sp = find_set_point(&channel.curve, criterion)?;
        if let Some(r_set) = settings.r_set_cps {
            if !(r_set > 0.0) {
                return Err(Error::Config(format!(
                    "set-point rate {r_set} cps must be positive"
                )));
            }
            channel.r_qd = r_set / sp.transmission;
        }
        let config = LockConfig {
            r_set: channel.r_qd * sp.transmission + channel.dark_rate,
            nu_set: sp.nu,
            slope: channel.r_qd * sp.slope,
            update_period: settings.update_period_s,
            target_bandwidth: settings.bandwidth_hz,
        };
        let limits = (actuator.v_min, actuator.v_max);
        let controller = match (settings.kp_v_per_ghz, settings.ki_v_per_ghz_s) {
            (None, None) => PiController::from_bandwidth(
                settings.bandwidth_hz,
                actuator.gain_ghz_per_v,
                limits,
            )?,
            (kp, ki) => PiController::new(kp.unwrap_or(0.0), ki.unwrap_or(0.0), limits)?,
        };
        let intensity = (settings.intensity_depth != 0.0)
            .then_some((settings.intensity_depth, settings.intensity_period_s));
        let setup = Self {
            channel,
            monitor,
            config,
            tau_cycle: settings.tau_cycle_s,
            tau_filter: settings.tau_filter_s,
            controller,
            actuator,
            creep,
            noise,
            mode,
            polarity: settings.polarity,
            watchdog_ghz: settings.watchdog_ghz,
            step: settings.step_time_s.map(|t| (t, settings.step_ghz)),
            intensity,
            initial_offset_ghz: 0.0,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.slope == 0.0 || !c.slope.is_finite() {
            return Err(Error::Config(
                "set point has zero discriminator slope".into(),
            ));
        }
        if !(self.tau_cycle > 0.0 && c.update_period >= self.tau_cycle) {
            return Err(Error::Config(format!(
                "update period {} s must be at least the cycle time {} s",
                c.update_period, self.tau_cycle
            )));
        }
        if !(self.tau_filter > self.tau_cycle) {
            return Err(Error::Config(format!(
                "filter time {} s must exceed the cycle time {} s",
                self.tau_filter, self.tau_cycle
            )));
        }
        let corner = 1.0 / (2.0 * PI * self.tau_filter);
        if self.mode == LockMode::Locked && !(c.target_bandwidth < corner) {
            return Err(Error::Config(format!(
                "bandwidth {} Hz is not below the estimator corner {corner:.4} Hz",
                c.target_bandwidth
            )));
        }
        if !(self.watchdog_ghz > 0.0) {
            return Err(Error::Config("watchdog threshold must be positive".into()));
        }
        if let Some((depth, period)) = self.intensity {
            if !(depth.abs() < 1.0 && period > 0.0) {
                return Err(Error::Config(
                    "intensity modulation needs |depth| < 1 and a positive period".into(),
                ));
            }
        }
        self.noise.validate(c.update_period)?;
        let range = self.channel.curve.range();
        if let Some((lo, hi)) = range {
            if !(c.nu_set > lo && c.nu_set < hi) {
                return Err(Error::Config(
                    "set point lies outside the lock curve".into(),
                ));
            }
        }
        Ok(())
    }

    fn estimator_template(&self) -> Result<RateEstimator> {
        RateEstimator::new(self.tau_cycle, self.tau_filter, 0.0)
    }

    /// Mean estimator output at the set point, accounting for several
    /// photons per cycle counting once.
    pub fn reference_rate(&self) -> Result<f64> {
        Ok(self
            .estimator_template()?
            .expected_output(self.config.r_set))
    }

    /// Slope of the mean estimator output with respect to detuning.
    pub fn effective_slope(&self) -> f64 {
        self.config.slope * (-self.config.r_set * self.tau_cycle).exp()
    }

    /// Monitor slope dR/dnu at the set point, cps/GHz.
    pub fn monitor_slope(&self) -> Result<Option<f64>> {
        match &self.monitor {
            None => Ok(None),
            Some(m) => Ok(Some(m.r_qd * slope_at(&m.curve, self.config.nu_set)?)),
        }
    }
}

/// Time series of one lock run, sampled every update period.
#[derive(Debug, Clone, PartialEq)]
pub struct LockTrace {
    pub t: Vec<f64>,
    /// Frequency disturbance of the emitter (creep plus noise), GHz.
    pub dnu_true: Vec<f64>,
    pub rate_est: Vec<f64>,
    pub v_ctrl: Vec<f64>,
    /// Emission frequency minus the set point, GHz.
    pub residual: Vec<f64>,
    /// Monitor counts per update interval.
    pub monitor_counts: Vec<u64>,
    pub monitor_slope: Option<f64>,
    pub update_period: f64,
    pub lock_lost_at: Option<f64>,
    pub saturated: bool,
    pub events: u64,
}

impl LockTrace {
    /// Columns `t_s, dnu_true_GHz, rate_est_cps, v_ctrl_V, dnu_residual_GHz`
    /// for every `decimation`-th sample.
    pub fn to_text(&self, decimation: usize) -> String {
        let step = decimation.max(1);
        let mut out =
            String::from("# t_s\tdnu_true_GHz\trate_est_cps\tv_ctrl_V\tdnu_residual_GHz\n");
        for k in (0..self.t.len()).step_by(step) {
            let _ = writeln!(
                out,
                "{:.4}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}",
                self.t[k], self.dnu_true[k], self.rate_est[k], self.v_ctrl[k], self.residual[k]
            );
        }
        out
    }

    /// Columns `t_s, dnu_GHz` of the disturbance.
    pub fn drift_text(&self, decimation: usize) -> String {
        let step = decimation.max(1);
        let mut out = String::from("# t_s\tdnu_GHz\n");
        for k in (0..self.t.len()).step_by(step) {
            let _ = writeln!(out, "{:.4}\t{:.9e}", self.t[k], self.dnu_true[k]);
        }
        out
    }

    pub fn residual_rms(&self) -> f64 {
        let n = self.residual.len().max(1) as f64;
        (self.residual.iter().map(|r| r * r).sum::<f64>() / n).sqrt()
    }

    pub fn residual_mean(&self) -> f64 {
        self.residual.iter().sum::<f64>() / self.residual.len().max(1) as f64
    }

    /// Shot-noise-excluded frequency deviation seen by the monitor in bins
    /// of `bin_s`, in MHz.
    pub fn monitor_deviation_mhz(&self, bin_s: f64) -> Result<f64> {
        let slope = self
            .monitor_slope
            .ok_or_else(|| Error::Config("run has no monitor channel".into()))?;
        let factor = (bin_s / self.update_period).round().max(1.0) as usize;
        let counts: Vec<f64> = self.monitor_counts.iter().map(|&c| c as f64).collect();
        let binned = rebin(&counts, factor);
        excess_deviation(&binned, factor as f64 * self.update_period, slope)
    }
}

/// Simulates `duration` seconds of the loop with photon events generated at
/// full time resolution.
///
/// The emitter frequency is held constant over each update period. The
/// estimator consumes one Boolean per cycle; at each update the estimate is
/// converted to a frequency error and fed to the PI controller, whose output
/// drives the actuator. In free-running mode the controller is not applied.
/// The integrator starts at the voltage that cancels the disturbance at
/// `t = 0`.
pub fn run_lock(setup: &LockSetup, duration: f64, seed: u64, arm: u8) -> Result<LockTrace> {
    setup.validate()?;
    let dt = setup.config.update_period;
    if !(duration >= dt) {
        return Err(Error::Config(format!(
            "duration {duration} s is shorter than one update period"
        )));
    }
    let n = (duration / dt).round() as usize;
    let gain = setup.actuator.gain_ghz_per_v;
    let r_ref = setup.reference_rate()?;
    let slope_eff = setup.effective_slope();
    let monitor_slope = setup.monitor_slope()?;
    let sign = match setup.polarity {
        Polarity::Normal => 1.0,
        Polarity::Inverted => -1.0,
    };

    let mut events_rng = stream_rng(seed, arm, Stream::LockDetector);
    let mut monitor_rng = stream_rng(seed, arm, Stream::Monitor);
    let noise_rng = stream_rng(seed, arm, Stream::FrequencyNoise);
    let mut noise = NoiseGenerator::with_rng(&setup.noise, dt, noise_rng)?;

    let creep_at = |t: f64| -> Result<f64> {
        match &setup.creep {
            Some(c) => c.detuning(t),
            None => Ok(0.0),
        }
    };
    let d0 = creep_at(0.0)? + noise.value();
    let v0 = -d0 / gain;
    if !(v0 >= setup.actuator.v_min && v0 <= setup.actuator.v_max) {
        return Err(Error::Config(format!(
            "initial disturbance {d0} GHz needs {v0} V, beyond the actuator limits"
        )));
    }
    let mut controller = setup.controller.clone();
    controller.preset(v0);
    let mut actuator = ActuatorState::new(setup.actuator, v0, CREEP_BUCKET_S);
    let mut estimator = RateEstimator::new(setup.tau_cycle, setup.tau_filter, r_ref)?;
    estimator.check_occupancy(setup.config.r_set);

    let mut trace = LockTrace {
        t: Vec::with_capacity(n + 1),
        dnu_true: Vec::with_capacity(n + 1),
        rate_est: Vec::with_capacity(n + 1),
        v_ctrl: Vec::with_capacity(n + 1),
        residual: Vec::with_capacity(n + 1),
        monitor_counts: Vec::with_capacity(n),
        monitor_slope,
        update_period: dt,
        lock_lost_at: None,
        saturated: false,
        events: 0,
    };

    let mut disturbance = d0;
    let mut ticks: u64 = 0;
    let mut times = Vec::new();
    let mut occupancy_warned = false;
    for k in 0..=n {
        let t = k as f64 * dt;
        if k > 0 {
            disturbance = creep_at(t)? + noise.next_sample();
        }
        let residual = disturbance - d0 + setup.initial_offset_ghz + actuator.offset(t);
        let target = match setup.step {
            Some((ts, dnu)) if t >= ts => dnu,
            _ => 0.0,
        };
        trace.t.push(t);
        trace.dnu_true.push(disturbance);
        trace.rate_est.push(estimator.estimate());
        trace.v_ctrl.push(actuator.voltage());
        trace.residual.push(residual);
        if setup.mode == LockMode::Locked && (residual - target).abs() > setup.watchdog_ghz {
            warn!("lock lost at t = {t:.1} s: residual {residual:.3} GHz");
            trace.lock_lost_at = Some(t);
            break;
        }
        if k == n {
            break;
        }

        let nu = setup.config.nu_set + residual;
        let scale = match setup.intensity {
            Some((depth, period)) => 1.0 + depth * (2.0 * PI * t / period).sin(),
            None => 1.0,
        };
        let rate = setup.channel.rate(nu)? * scale + setup.channel.dark_rate;
        if !occupancy_warned && rate * setup.tau_cycle > crate::estimator::OCCUPANCY_WARNING {
            estimator.check_occupancy(rate);
            occupancy_warned = true;
        }
        times.clear();
        push_poisson_times(rate, t, t + dt, &mut events_rng, &mut times);
        trace.events += times.len() as u64;
        for &te in &times {
            let cycle = (te / setup.tau_cycle) as u64;
            if cycle >= ticks {
                estimator.advance(cycle - ticks);
                estimator.tick(true);
                ticks = cycle + 1;
            }
        }
        let end_cycle = ((t + dt) / setup.tau_cycle).round() as u64;
        if end_cycle > ticks {
            estimator.advance(end_cycle - ticks);
            ticks = end_cycle;
        }

        if let Some(m) = &setup.monitor {
            let mean = (m.rate(nu)? * scale + m.dark_rate) * dt;
            let count = if mean > 0.0 {
                Poisson::new(mean)
                    .expect("finite mean")
                    .sample(&mut monitor_rng) as u64
            } else {
                0
            };
            trace.monitor_counts.push(count);
        }

        if setup.mode == LockMode::Locked {
            let dnu_est = rate_to_frequency_error(estimator.estimate() - r_ref, slope_eff)?;
            let error = target - sign * dnu_est;
            let v = controller.update(error, dt);
            trace.saturated |= controller.saturated();
            actuator.command(t + dt, v);
        }
    }
    debug!(
        "arm {arm}: {} events, residual rms {:.2} MHz",
        trace.events,
        1e3 * trace.residual_rms()
    );
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_discriminator() {
        assert_eq!(rate_to_frequency_error(0.0, -1200.0).unwrap(), 0.0);
        assert!((rate_to_frequency_error(60.0, -1200.0).unwrap() + 0.05).abs() < 1e-15);
        assert!(matches!(
            rate_to_frequency_error(1.0, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pi_limits() {
        let mut c = PiController::new(2.0, 0.0, (-1.0, 1.0)).unwrap();
        assert_eq!(c.update(0.0, 0.1), 0.0);
        assert_eq!(c.update(0.25, 0.1), 0.5);
        assert_eq!(c.update(0.25, 0.1), 0.5);
        let mut c = PiController::new(0.0, 1.0, (-1.0, 1.0)).unwrap();
        let mut last = 0.0;
        for k in 1..=30 {
            last = c.update(0.5, 0.1);
            let expect = (0.05 * k as f64).min(1.0);
            assert!((last - expect).abs() < 1e-12);
        }
        assert_eq!(last, 1.0);
        assert!(c.saturated());
        assert_eq!(c.integrator(), 1.0);
    }

    #[test]
    fn bandwidth_gains() {
        let c = PiController::from_bandwidth(0.03, 10.0, (-50.0, 50.0)).unwrap();
        assert!((c.ki * 10.0 - 2.0 * PI * 0.03).abs() < 1e-15);
        assert!((c.kp * 10.0 - 0.25).abs() < 1e-15);
        let neg = PiController::from_bandwidth(0.03, -10.0, (-50.0, 50.0)).unwrap();
        assert!(neg.ki < 0.0 && neg.kp < 0.0);
    }
}
