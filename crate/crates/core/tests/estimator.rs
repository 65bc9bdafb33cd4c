mod common;

use std::f64::consts::PI;

use common::{ar1_standard_error, lock_in, mean, variance};
use qdlock::detection::{generate_events, push_poisson_times};
use qdlock::estimator::RateEstimator;
use qdlock::rng::SimRng;
use qdlock::Error;
use rand::{Rng, SeedableRng};

/// Feeds Poisson arrivals at `rate(t)` into `est` for `duration` seconds and
/// returns the estimate sampled every `sample_s`.
fn drive_poisson(
    est: &mut RateEstimator,
    lambda: f64,
    duration: f64,
    sample_s: f64,
    rng: &mut SimRng,
) -> Vec<f64> {
    let tc = est.tau_cycle();
    let mut ticks: u64 = 0;
    let mut times = Vec::new();
    let n = (duration / sample_s).round() as usize;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = (k as f64 * sample_s, (k + 1) as f64 * sample_s);
        times.clear();
        push_poisson_times(lambda, a, b, rng, &mut times);
        for &t in &times {
            let cycle = (t / tc) as u64;
            if cycle >= ticks {
                est.advance(cycle - ticks);
                est.tick(true);
                ticks = cycle + 1;
            }
        }
        let end = (b / tc).round() as u64;
        est.advance(end - ticks);
        ticks = end;
        out.push(est.estimate());
    }
    out
}

#[test]
fn construction() {
    let e = RateEstimator::new(1e-3, 1.0, 0.0).unwrap();
    assert!((e.decrement() - 0.999_000_5).abs() < 1e-9);
    assert!((e.increment() - 0.9995).abs() < 1e-4);
    assert!((e.increment() - (1.0 - e.decrement()) / 1e-3).abs() < 1e-9);

    let frozen = RateEstimator::new(1e-3, f64::INFINITY, 10.0).unwrap();
    assert_eq!(frozen.decrement(), 1.0);
    assert_eq!(frozen.increment(), 0.0);

    let mut e = RateEstimator::new(1e-3, 10.0, 3600.0).unwrap();
    let d = e.decrement();
    assert_eq!(e.tick(false), d * 3600.0);

    assert!(matches!(
        RateEstimator::new(1.0, 1.0, 0.0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        RateEstimator::new(2.0, 1.0, 0.0),
        Err(Error::Config(_))
    ));
}

#[test]
fn geometric_decay_and_impulse() {
    let mut e = RateEstimator::new(1e-3, 0.5, 250.0).unwrap();
    let d = e.decrement();
    let mut oracle = 250.0;
    for _ in 0..1000 {
        oracle *= d;
        assert_eq!(e.tick(false), oracle);
    }

    let mut e = RateEstimator::new(1e-3, 0.5, 0.0).unwrap();
    let i = e.increment();
    assert_eq!(e.tick(true), i);
    let mut oracle = i;
    for _ in 0..5000 {
        oracle *= d;
        assert_eq!(e.tick(false), oracle);
    }

    let mut a = RateEstimator::new(1e-3, 0.5, 80.0).unwrap();
    let mut b = a.clone();
    for _ in 0..777 {
        a.tick(false);
    }
    b.advance(777);
    assert!((a.estimate() / b.estimate() - 1.0).abs() < 1e-12);
}

#[test]
fn impulse_falls_below_a_millionth() {
    let (tc, tf) = (1e-3, 0.2);
    let mut e = RateEstimator::new(tc, tf, 0.0).unwrap();
    let i = e.tick(true);
    let n = (6.0 * 10f64.ln() * tf / tc).ceil() as u64;
    e.advance(n - 1);
    assert!(e.estimate() >= i * 1e-6 * (1.0 - 1e-9));
    e.advance(1);
    assert!(e.estimate() < i * 1e-6);
    assert!(e.estimate() > 0.0);
}

#[test]
fn superposition_is_exact_for_disjoint_cycles() {
    let mut rng = SimRng::seed_from_u64(1);
    let n = 20_000;
    let mut xa = vec![false; n];
    let mut xb = vec![false; n];
    for k in 0..n {
        let u: f64 = rng.random();
        if u < 0.05 {
            xa[k] = true;
        } else if u < 0.08 {
            xb[k] = true;
        }
    }
    let mut ea = RateEstimator::new(1e-4, 0.1, 0.0).unwrap();
    let mut eb = ea.clone();
    let mut es = ea.clone();
    for k in 0..n {
        let (a, b) = (ea.tick(xa[k]), eb.tick(xb[k]));
        let s = es.tick(xa[k] || xb[k]);
        assert!((s - a - b).abs() <= 1e-9 * s.max(1.0));
    }
}

#[test]
fn fixed_point_is_the_input_rate() {
    // Bernoulli input with p = lambda tau_c: the fixed point E = E d + lambda
    // tau_c i gives E = lambda.
    let (lambda, tc, tf) = (3600.0, 1e-4, 10.0);
    let mut e = RateEstimator::new(tc, tf, 0.0).unwrap();
    let p = lambda * tc;
    let mut rng = SimRng::seed_from_u64(2);
    let warm = (10.0 * tf / tc) as usize;
    for _ in 0..warm {
        e.tick(rng.random::<f64>() < p);
    }
    let samples: Vec<f64> = (0..1_000_000)
        .map(|_| e.tick(rng.random::<f64>() < p))
        .collect();
    let m = mean(&samples);
    let se = ar1_standard_error(&samples);
    assert!((m - lambda).abs() < 2.0 * se, "mean {m}, se {se}");
    assert!(samples.iter().all(|&x| x >= 0.0));
}

#[test]
fn boolean_saturation_under_poisson_input() {
    let (lambda, tc, tf) = (3600.0, 1e-4, 1.0);
    let mut e = RateEstimator::new(tc, tf, 0.0).unwrap();
    let expect = e.expected_output(lambda);
    assert!((expect - (1.0 - (-lambda * tc).exp()) / tc).abs() < 1e-6);
    let mut rng = SimRng::seed_from_u64(3);
    let _ = drive_poisson(&mut e, lambda, 10.0 * tf, 0.5, &mut rng);
    let samples = drive_poisson(&mut e, lambda, 2000.0 * tf, 0.5, &mut rng);
    let se = ar1_standard_error(&samples);
    assert!((mean(&samples) - expect).abs() < 3.0 * se);
    assert!(e.check_occupancy(lambda) > 0.1);
}

#[test]
fn steady_state_spread() {
    let lambda = 3600.0;
    let est = RateEstimator::new(1e-6, 10.0, 0.0).unwrap();
    let analytic = est.steady_state_std(lambda);
    assert!((analytic - (lambda / 20.0).sqrt()).abs() < 0.01 * analytic);
    assert!((analytic - 13.4).abs() < 0.05);
    assert_eq!(est.steady_state_std(0.0), 0.0);

    let mc_std = |tf: f64, seed: u64| {
        let mut e = RateEstimator::new(1e-6, tf, lambda).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        let _ = drive_poisson(&mut e, lambda, 5.0 * tf, tf, &mut rng);
        variance(&drive_poisson(&mut e, lambda, 2000.0 * tf, tf, &mut rng)).sqrt()
    };
    let s10 = mc_std(10.0, 4);
    assert!((s10 / analytic - 1.0).abs() < 0.1, "{s10} vs {analytic}");
    let s5 = mc_std(5.0, 5);
    assert!((s5 / s10 / 2f64.sqrt() - 1.0).abs() < 0.1, "{s5} / {s10}");
}

#[test]
fn first_order_frequency_response() {
    let (tc, tf) = (1e-5, 1.0);
    let fc = 1.0 / (2.0 * PI * tf);
    let (r0, m) = (20_000.0, 0.4);
    let duration = 200.0 / fc;
    let rate = move |t: f64| r0 * (1.0 + m * (2.0 * PI * fc * t).sin());
    let mut rng = SimRng::seed_from_u64(6);
    let train = generate_events(rate, (0.0, duration), r0 * (1.0 + m), &mut rng).unwrap();

    let mut e = RateEstimator::new(tc, tf, r0).unwrap();
    let dt = 1e-2;
    let mut out = Vec::new();
    let mut ticks: u64 = 0;
    let mut next = 0usize;
    let times = train.times();
    let n = (duration / dt) as usize;
    for k in 0..n {
        let end_t = (k + 1) as f64 * dt;
        while next < times.len() && times[next] < end_t {
            let cycle = (times[next] / tc) as u64;
            if cycle >= ticks {
                e.advance(cycle - ticks);
                e.tick(true);
                ticks = cycle + 1;
            }
            next += 1;
        }
        let end = (end_t / tc).round() as u64;
        e.advance(end - ticks);
        ticks = end;
        out.push(e.estimate());
    }
    // Discard ten filter times of start-up transient, keeping whole periods.
    let period = (1.0 / fc / dt).round() as usize;
    let skip = ((10.0 * tf / dt) as usize).div_ceil(period) * period;
    let kept = &out[skip..skip + (out.len() - skip) / period * period];
    let (i, q) = lock_in(kept, dt, fc);
    let amp = (i * i + q * q).sqrt();
    // The Boolean input compresses the modulation slightly; compare against
    // the mean-output derivative at r0.
    let gain_input = r0 * m * (-r0 * tc).exp();
    let ratio = amp / gain_input;
    assert!(
        (ratio / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.05,
        "{ratio}"
    );
}
