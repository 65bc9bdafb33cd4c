use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earliest time after a voltage step at which the logarithmic law is
/// evaluated, in seconds. The law diverges at the step itself.
pub const CREEP_FLOOR_S: f64 = 1.0;

const MINUTE: f64 = 60.0;

/// Logarithmic piezo creep after a voltage step at `t0_s`:
/// `dnu(t) = dnu0 * (1 + alpha * log10((t - t0) / 1 min))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreepModel {
    /// Detuning one minute after the step, GHz.
    pub dnu0_ghz: f64,
    pub alpha: f64,
    pub t0_s: f64,
}

impl Default for CreepModel {
    fn default() -> Self {
        // Step applied one minute before t = 0. The drift accumulated by
        // t = 100 min is 1.80044 GHz, where the visibility of the reference
        // emitter pair has fallen to 25 %.
        Self {
            dnu0_ghz: 0.9,
            alpha: 0.998_087_83,
            t0_s: -60.0,
        }
    }
}

impl CreepModel {
    pub fn new(dnu0_ghz: f64, alpha: f64, t0_s: f64) -> Result<Self> {
        if !(dnu0_ghz.is_finite() && alpha.is_finite() && t0_s.is_finite()) {
            return Err(Error::Domain("creep parameters must be finite".into()));
        }
        Ok(Self {
            dnu0_ghz,
            alpha,
            t0_s,
        })
    }

    /// A model that never moves.
    pub fn disabled() -> Self {
        Self {
            dnu0_ghz: 0.0,
            alpha: 0.0,
            t0_s: -MINUTE,
        }
    }

    pub fn detuning(&self, t: f64) -> Result<f64> {
        let age = t - self.t0_s;
        if !(age >= CREEP_FLOOR_S) {
            return Err(Error::Domain(format!(
                "creep evaluated {age} s after the step; the law holds from {CREEP_FLOOR_S} s"
            )));
        }
        Ok(self.dnu0_ghz * (1.0 + self.alpha * (age / MINUTE).log10()))
    }

    /// Creep rate `alpha` for which the drift accumulated between `t_ref` and
    /// `t_target` equals `offset_ghz`, given `dnu0` and `t0`.
    pub fn calibrate_alpha(
        dnu0_ghz: f64,
        t0_s: f64,
        t_ref: f64,
        t_target: f64,
        offset_ghz: f64,
    ) -> Result<f64> {
        if !(t_ref - t0_s >= CREEP_FLOOR_S && t_target > t_ref) || dnu0_ghz == 0.0 {
            return Err(Error::Domain(
                "cannot calibrate creep on this interval".into(),
            ));
        }
        let decades = ((t_target - t0_s) / (t_ref - t0_s)).log10();
        Ok(offset_ghz / (dnu0_ghz * decades))
    }
}

pub fn creep_detuning(model: &CreepModel, t: f64) -> Result<f64> {
    model.detuning(t)
}

/// Strain actuator: static tuning plus logarithmic creep per voltage step.
///
/// A step `dv` at `t_k` contributes `gain * dv` immediately and, once a
/// minute has passed, follows the creep law anchored at that value:
/// `gain * dv * (1 + creep_alpha * log10((t - t_k) / 1 min))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorModel {
    pub gain_ghz_per_v: f64,
    #[serde(rename = "v_min_v")]
    pub v_min: f64,
    #[serde(rename = "v_max_v")]
    pub v_max: f64,
    /// Zero disables creep.
    pub creep_alpha: f64,
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self {
            gain_ghz_per_v: 10.0,
            v_min: -50.0,
            v_max: 50.0,
            creep_alpha: CreepModel::default().alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageStep {
    pub t_s: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorResponse {
    pub dnu_ghz: f64,
    /// Some step was clipped to keep the cumulative voltage within limits.
    pub saturated: bool,
}

impl ActuatorModel {
    pub fn validate(&self) -> Result<()> {
        if self.gain_ghz_per_v == 0.0 || !self.gain_ghz_per_v.is_finite() {
            return Err(Error::Config(
                "actuator gain must be finite and non-zero".into(),
            ));
        }
        if !(self.v_min < self.v_max) || !(self.v_min <= 0.0 && self.v_max >= 0.0) {
            return Err(Error::Config(format!(
                "voltage limits [{}, {}] must bracket 0 V",
                self.v_min, self.v_max
            )));
        }
        if !self.creep_alpha.is_finite() {
            return Err(Error::Config("actuator creep rate must be finite".into()));
        }
        Ok(())
    }

    /// Frequency response to one step of `dv` volts, `age` seconds later.
    pub fn step_response(&self, dv: f64, age: f64) -> f64 {
        if age < 0.0 {
            return 0.0;
        }
        let static_part = self.gain_ghz_per_v * dv;
        if self.creep_alpha == 0.0 || age <= MINUTE {
            static_part
        } else {
            static_part * (1.0 + self.creep_alpha * (age / MINUTE).log10())
        }
    }
}

/// Summed response at `t` to a time-ordered voltage history starting from
/// 0 V. Steps that would leave the voltage limits are clipped.
pub fn actuator_offset(
    model: &ActuatorModel,
    history: &[VoltageStep],
    t: f64,
) -> Result<ActuatorResponse> {
    model.validate()?;
    if history.windows(2).any(|w| w[1].t_s < w[0].t_s) {
        return Err(Error::Domain("voltage steps must be time-ordered".into()));
    }
    let mut v = 0.0;
    let mut dnu = 0.0;
    let mut saturated = false;
    for step in history {
        let target = v + step.dv;
        let clipped = target.clamp(model.v_min, model.v_max);
        saturated |= clipped != target;
        let dv = clipped - v;
        v = clipped;
        if step.t_s <= t {
            dnu += model.step_response(dv, t - step.t_s);
        }
    }
    Ok(ActuatorResponse {
        dnu_ghz: dnu,
        saturated,
    })
}

/// Running actuator for closed-loop simulation.
///
/// Voltage changes are accumulated into fixed-width time buckets, each of
/// which creeps as a single step from its midpoint. The voltage present at
/// construction is taken as settled and does not creep.
#[derive(Debug, Clone)]
pub struct ActuatorState {
    model: ActuatorModel,
    baseline_v: f64,
    voltage: f64,
    bucket_s: f64,
    buckets: Vec<(f64, f64)>,
}

impl ActuatorState {
    pub fn new(model: ActuatorModel, baseline_v: f64, bucket_s: f64) -> Self {
        Self {
            model,
            baseline_v,
            voltage: baseline_v,
            bucket_s,
            buckets: Vec::new(),
        }
    }

    pub fn voltage(&self) -> f64 {
        self.voltage
    }

    /// Moves the actuator to `v` at time `t`; times must not decrease.
    pub fn command(&mut self, t: f64, v: f64) {
        let dv = v - self.voltage;
        self.voltage = v;
        if dv == 0.0 || self.model.creep_alpha == 0.0 {
            return;
        }
        let start = (t / self.bucket_s).floor() * self.bucket_s;
        let mid = start + 0.5 * self.bucket_s;
        match self.buckets.last_mut() {
            Some((m, acc)) if *m == mid => *acc += dv,
            _ => self.buckets.push((mid, dv)),
        }
    }

    /// Frequency offset relative to the baseline voltage.
    pub fn offset(&self, t: f64) -> f64 {
        let gain = self.model.gain_ghz_per_v;
        let alpha = self.model.creep_alpha;
        let mut dnu = gain * (self.voltage - self.baseline_v);
        for &(mid, dv) in &self.buckets {
            let age = t - mid;
            if age > MINUTE {
                dnu += gain * dv * alpha * (age / MINUTE).log10();
            }
        }
        dnu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn creep_anchor_points() {
        let m = CreepModel::new(0.9, 0.556, 0.0).unwrap();
        assert!((m.detuning(60.0).unwrap() - 0.9).abs() < 1e-15);
        assert!((m.detuning(600.0).unwrap() - 0.9 * 1.556).abs() < 1e-12);
        assert!((m.detuning(6000.0).unwrap() - 1.9008).abs() < 1e-12);
        assert!(m.detuning(0.0).is_err());
        assert!(m.detuning(-5.0).is_err());
        assert!(m.detuning(0.5).is_err());
        assert!(m.detuning(1.0).is_ok());
    }

    #[test]
    fn default_creep_is_calibrated() {
        let d = CreepModel::default();
        let alpha =
            CreepModel::calibrate_alpha(d.dnu0_ghz, d.t0_s, 0.0, 6000.0, 1.800_439_9).unwrap();
        assert!((alpha - d.alpha).abs() < 1e-6, "{alpha}");
    }

    #[test]
    fn actuator_static_and_superposition() {
        let model = ActuatorModel::default();
        assert_eq!(actuator_offset(&model, &[], 100.0).unwrap().dnu_ghz, 0.0);

        let one = [VoltageStep { t_s: 10.0, dv: 0.3 }];
        let r = actuator_offset(&model, &one, 70.0).unwrap();
        assert!((r.dnu_ghz - 3.0).abs() < 1e-12);

        let opposite = [
            VoltageStep { t_s: 10.0, dv: 0.3 },
            VoltageStep {
                t_s: 10.0,
                dv: -0.3,
            },
        ];
        for t in [10.0, 11.0, 100.0, 1e4] {
            assert!(actuator_offset(&model, &opposite, t).unwrap().dnu_ghz.abs() < 1e-12);
        }
    }

    #[test]
    fn actuator_saturates() {
        let model = ActuatorModel {
            creep_alpha: 0.0,
            ..Default::default()
        };
        let steps = [
            VoltageStep { t_s: 0.0, dv: 40.0 },
            VoltageStep { t_s: 1.0, dv: 40.0 },
        ];
        let r = actuator_offset(&model, &steps, 2.0).unwrap();
        assert!(r.saturated);
        assert!((r.dnu_ghz - 500.0).abs() < 1e-9);
        let unordered = [steps[1], steps[0]];
        assert!(actuator_offset(&model, &unordered, 2.0).is_err());
    }

    #[test]
    fn running_state_matches_history() {
        let model = ActuatorModel::default();
        let mut state = ActuatorState::new(model, 0.0, 1.0);
        let mut history = Vec::new();
        let mut v = 0.0;
        for k in 0..50 {
            let t = 5.0 * k as f64 + 0.5;
            let dv = 0.01 * ((k % 7) as f64 - 3.0);
            v += dv;
            state.command(t, v);
            // Bucket midpoints coincide with these step times.
            history.push(VoltageStep { t_s: t, dv });
        }
        for t in [300.0, 1000.0, 5000.0] {
            let direct = actuator_offset(&model, &history, t).unwrap().dnu_ghz;
            assert!((state.offset(t) - direct).abs() < 1e-12, "{t}");
        }
    }
}
