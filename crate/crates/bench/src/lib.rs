//! Fixtures shared by the benchmarks.

use qdlock::control::{LockMode, LockSettings, LockSetup};
use qdlock::detection::DetectionChannel;
use qdlock::drift::{ActuatorModel, CreepModel, NoiseModel};
use qdlock::spectra::{
    convolve, lorentzian_from_coherence, ConvolutionGrid, FilterCurve, FilterSettings,
};

/// Default filter convolved with the first reference emitter's line.
pub fn reference_curve() -> FilterCurve {
    let laser = FilterSettings::default()
        .to_curve()
        .expect("default filter");
    let line = lorentzian_from_coherence(153.0).expect("positive T2");
    convolve(&laser, &line, &ConvolutionGrid::default()).expect("default grid")
}

/// Locked arm at 3600 cps with default creep and noise.
pub fn reference_setup() -> LockSetup {
    let channel = DetectionChannel::new(6000.0, 104.0, reference_curve()).expect("valid rates");
    let settings = LockSettings {
        r_set_cps: Some(3600.0),
        ..LockSettings::default()
    };
    LockSetup::from_settings(
        &settings,
        channel,
        None,
        ActuatorModel::default(),
        Some(CreepModel::default()),
        NoiseModel::default(),
        LockMode::Locked,
    )
    .expect("consistent defaults")
}
