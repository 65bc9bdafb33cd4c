mod common;

use std::f64::consts::PI;

use common::{ks_critical_01, ks_critical_01_two, ks_statistic, ks_two_sample, mean, variance};
use qdlock::detection::{
    generate_events, instantaneous_rate, merge_dark, DetectionChannel, EventTrain, Origin,
};
use qdlock::rng::SimRng;
use qdlock::spectra::{CurveLabel, FilterCurve};
use qdlock::Error;
use rand::SeedableRng;

fn flat(t: f64) -> FilterCurve {
    FilterCurve::tabulated(
        vec![-10.0, 0.0, 10.0],
        vec![t, t, t],
        CurveLabel::EmitterConvolved,
    )
    .unwrap()
}

fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn gaps(train: &EventTrain) -> Vec<f64> {
    train.times().windows(2).map(|w| w[1] - w[0]).collect()
}

#[test]
fn rate_through_the_filter() {
    let ch = DetectionChannel::new(6000.0, 0.0, flat(0.25)).unwrap();
    assert!((instantaneous_rate(&ch, 0.3).unwrap() - 1500.0).abs() < 1e-9);
    let opaque = DetectionChannel::new(6000.0, 0.0, flat(0.0)).unwrap();
    assert_eq!(instantaneous_rate(&opaque, 0.0).unwrap(), 0.0);
    let clear = DetectionChannel::new(6000.0, 0.0, flat(1.0)).unwrap();
    assert_eq!(instantaneous_rate(&clear, 0.0).unwrap(), 6000.0);
    assert!(matches!(
        instantaneous_rate(&ch, 11.0),
        Err(Error::Extrapolation { .. })
    ));
    assert!(matches!(
        DetectionChannel::new(-1.0, 0.0, flat(0.5)),
        Err(Error::Config(_))
    ));
}

#[test]
fn zero_rate_gives_no_events() {
    let train = generate_events(|_| 0.0, (0.0, 100.0), 0.0, &mut rng(1)).unwrap();
    assert!(train.is_empty());
}

#[test]
fn constant_rate_counts_are_poisson() {
    let train = generate_events(|_| 3600.0, (0.0, 100.0), 3600.0, &mut rng(2)).unwrap();
    let n = train.len() as f64;
    assert!((n - 360_000.0).abs() < 3.0 * 360_000f64.sqrt(), "{n}");
    assert!(train.times().windows(2).all(|w| w[1] > w[0]));
    assert!(train.times().iter().all(|&t| (0.0..100.0).contains(&t)));

    let counts: Vec<f64> = train.binned(0.1).iter().map(|&c| c as f64).collect();
    let ratio = variance(&counts) / mean(&counts);
    // Fano factor of 1000 Poisson bins has standard error sqrt(2/999).
    assert!(
        (ratio - 1.0).abs() < 4.0 * (2.0 / 999.0f64).sqrt(),
        "{ratio}"
    );
}

#[test]
fn inter_arrivals_are_exponential() {
    let lambda = 3600.0;
    let train = generate_events(|_| lambda, (0.0, 5.0), 5000.0, &mut rng(3)).unwrap();
    let g = gaps(&train);
    let d = ks_statistic(&g, |x| 1.0 - (-lambda * x).exp());
    assert!(d < ks_critical_01(g.len()), "D = {d}");
}

#[test]
fn thinning_follows_a_modulated_rate() {
    let (r0, m, f) = (2000.0, 0.8, 0.05);
    let rate = move |t: f64| r0 * (1.0 + m * (2.0 * PI * f * t).sin());
    let bin = 1.0;
    let train = generate_events(rate, (0.0, 400.0), r0 * (1.0 + m), &mut rng(4)).unwrap();
    let counts = train.binned(bin);
    let inside = counts
        .iter()
        .enumerate()
        .filter(|&(k, &c)| {
            let (a, b) = (k as f64 * bin, (k + 1) as f64 * bin);
            let w = 2.0 * PI * f;
            let expect = r0 * (b - a) - r0 * m / w * ((w * b).cos() - (w * a).cos());
            (c as f64 - expect).abs() <= 3.0 * expect.sqrt()
        })
        .count();
    assert!(
        inside as f64 >= 0.95 * counts.len() as f64,
        "{inside}/{}",
        counts.len()
    );
}

#[test]
fn bound_violation_is_detected() {
    let r = generate_events(|t| 100.0 * t, (0.0, 10.0), 500.0, &mut rng(5));
    assert!(matches!(r, Err(Error::BoundViolation { .. })));
}

#[test]
fn generation_is_deterministic() {
    let a = generate_events(|t| 1000.0 + t, (0.0, 50.0), 1100.0, &mut rng(6)).unwrap();
    let b = generate_events(|t| 1000.0 + t, (0.0, 50.0), 1100.0, &mut rng(6)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn dark_counts_merge() {
    let window = (0.0, 1000.0);
    let empty = EventTrain::empty(window);
    let dark = merge_dark(&empty, 104.0, window, &mut rng(7)).unwrap();
    let n = dark.count(Origin::Dark) as f64;
    assert!((n - 104_000.0).abs() < 3.0 * 104_000f64.sqrt(), "{n}");
    assert_eq!(dark.count(Origin::Signal), 0);

    let signal = generate_events(|_| 500.0, window, 500.0, &mut rng(8)).unwrap();
    let unchanged = merge_dark(&signal, 0.0, window, &mut rng(9)).unwrap();
    assert_eq!(unchanged.times(), signal.times());
    let merged = merge_dark(&signal, 134.0, window, &mut rng(10)).unwrap();
    assert_eq!(merged.count(Origin::Signal), signal.len());
    assert!(merged.times().windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn superposed_trains_look_like_one() {
    let window = (0.0, 200.0);
    let a = generate_events(|_| 300.0, window, 300.0, &mut rng(11)).unwrap();
    let both = merge_dark(&a, 200.0, window, &mut rng(12)).unwrap();
    let single = generate_events(|_| 500.0, window, 500.0, &mut rng(13)).unwrap();
    let (ga, gb) = (gaps(&both), gaps(&single));
    let d = ks_two_sample(&ga, &gb);
    assert!(d < ks_critical_01_two(ga.len(), gb.len()), "D = {d}");
}

#[test]
fn event_export_has_twelve_digits() {
    let train = generate_events(|_| 10.0, (0.0, 2.0), 10.0, &mut rng(14)).unwrap();
    let text = train.to_text();
    let first = text.lines().nth(1).unwrap();
    let (t, tag) = first.split_once('\t').unwrap();
    assert_eq!(tag, "signal");
    let mantissa = t.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 12);
}
