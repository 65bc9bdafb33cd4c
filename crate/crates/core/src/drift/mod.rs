//! Emitter frequency perturbations: piezo creep, actuator response and
//! stochastic frequency noise.

mod creep;
mod fit;
mod noise;

pub use creep::{
    actuator_offset, creep_detuning, ActuatorModel, ActuatorResponse, ActuatorState, CreepModel,
    VoltageStep, CREEP_FLOOR_S,
};
pub use fit::{fit_creep, CreepFit};
pub use noise::{sample_noise, NoiseGenerator, NoiseModel};
