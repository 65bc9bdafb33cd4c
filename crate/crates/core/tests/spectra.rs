mod common;

use common::{bisect, lorentzian, simpson};
use qdlock::spectra::{
    convolve, filter_transmission, find_set_point, lorentzian_from_coherence, slope_at,
    ConvolutionGrid, CurveLabel, FilterCurve, FilterSettings, Peak, SetPointCriterion,
    SpectralProfile,
};
use qdlock::Error;

fn lorentz_peak(center: f64, fwhm: f64) -> Peak {
    Peak {
        center,
        fwhm,
        amplitude: 1.0,
        lorentz_fraction: 1.0,
    }
}

fn half_max_width(curve: &FilterCurve, center: f64) -> f64 {
    let peak = curve.transmission(center).unwrap();
    let f = |x: f64| curve.transmission(x).unwrap() - 0.5 * peak;
    let (lo, hi) = curve.range().unwrap();
    let right = bisect(f, center, hi - 1e-9, 1e-10);
    let left = bisect(f, lo + 1e-9, center, 1e-10);
    right - left
}

#[test]
fn profile_normalization() {
    for fwhm in [0.5, 2.08, 2.59] {
        let p = SpectralProfile::lorentzian(0.3, fwhm).unwrap();
        // Substitution x = c + hw tan(u) maps the real line onto (-pi/2, pi/2).
        let hw = 0.5 * fwhm;
        let lim = std::f64::consts::FRAC_PI_2 - 1e-9;
        let total = simpson(
            |u| p.density(0.3 + hw * u.tan()) * hw / u.cos().powi(2),
            -lim,
            lim,
            20_000,
        );
        assert!((total - 1.0).abs() < 1e-6, "{fwhm}: {total}");
    }
}

#[test]
fn coherence_linewidths() {
    let l1 = lorentzian_from_coherence(153.0).unwrap();
    let l2 = lorentzian_from_coherence(123.0).unwrap();
    assert!((l1.fwhm() - 2.08).abs() < 0.01);
    assert!((l2.fwhm() - 2.59).abs() < 0.01);
    assert!((l1.coherence_time_ps() - 153.0).abs() < 1e-9);
}

#[test]
fn field_tuning_is_linear() {
    let base = FilterSettings::default();
    let shifted = FilterSettings {
        field_mt: base.field_mt + 10.0,
        ..base
    };
    assert!((shifted.center_ghz() - base.center_ghz() - 0.246).abs() < 1e-12);
    for (b1, b2) in [(20.0, 45.0), (45.0, 70.0), (33.3, 61.7)] {
        let c1 = FilterSettings {
            field_mt: b1,
            ..base
        }
        .center_ghz();
        let c2 = FilterSettings {
            field_mt: b2,
            ..base
        }
        .center_ghz();
        assert!((c1 - c2 - 0.0246 * (b1 - b2)).abs() < 1e-12);
    }
    // Located maximum of the evaluated transmission follows the same law.
    let argmax = |s: &FilterSettings| {
        let g = |x: f64| {
            let h = 1e-6;
            filter_transmission(s, x + h).unwrap() - filter_transmission(s, x - h).unwrap()
        };
        bisect(g, s.center_ghz() - 1.0, s.center_ghz() + 1.0, 1e-10)
    };
    assert!((argmax(&shifted) - argmax(&base) - 0.246).abs() < 1e-6);
}

#[test]
fn filter_extremes() {
    let s = FilterSettings {
        amplitude: 1.0,
        ..FilterSettings::default()
    };
    assert!((filter_transmission(&s, s.center_ghz()).unwrap() - 1.0).abs() < 1e-15);
    let far = s.center_ghz() + 50.0 * s.width_ghz();
    assert!(filter_transmission(&s, far).unwrap() < 1e-3);
    let collapse = FilterSettings {
        field_mt: -1000.0,
        ..s
    };
    assert!(matches!(collapse.to_curve(), Err(Error::Domain(_))));
}

#[test]
fn convolution_preserves_area() {
    let settings = FilterSettings::default();
    let laser = settings.to_curve().unwrap();
    let c = settings.center_ghz();
    for t2 in [153.0, 123.0] {
        let line = lorentzian_from_coherence(t2).unwrap();
        let out = convolve(&laser, &line, &ConvolutionGrid::default()).unwrap();
        // The filter is sampled over the default kernel half-span around its
        // centre; its area there is what the convolution must carry over.
        let span = 10.0 * (settings.width_ghz() + line.fwhm());
        let input = simpson(
            |x| laser.transmission(x).unwrap(),
            c - span,
            c + span,
            200_000,
        );
        let rel = (out.area() / input - 1.0).abs();
        assert!(rel < 1e-4, "{t2}: {rel}");
        assert!(out.peak_transmission() <= laser.peak_transmission());
        assert_eq!(out.label(), CurveLabel::EmitterConvolved);
    }
}

#[test]
fn lorentzian_widths_add() {
    let (a, b) = (1.2, 2.59);
    let (ca, cb) = (0.4, -0.1);
    let filter = FilterCurve::parametric(vec![lorentz_peak(ca, a)], CurveLabel::Laser).unwrap();
    let line = SpectralProfile::lorentzian(cb, b).unwrap();
    let out = convolve(&filter, &line, &ConvolutionGrid::default()).unwrap();
    let width = half_max_width(&out, ca + cb);
    assert!((width - (a + b)).abs() < 0.01 * (a + b), "{width}");
    assert!((width - (a * a + b * b).sqrt()).abs() > 0.5);

    // Pointwise against direct quadrature of the convolution integral.
    let span = 400.0;
    for nu in [-3.0, -1.0, 0.0, 0.3, 1.5, 4.0] {
        let direct = simpson(
            |x| lorentz_peak(ca, a).value(x) * lorentzian(nu - x, cb, b),
            nu - span,
            nu + span,
            400_000,
        );
        let got = out.transmission(nu).unwrap();
        assert!((got - direct).abs() < 2e-4, "{nu}: {got} vs {direct}");
    }
}

#[test]
fn narrow_line_is_identity() {
    let laser = FilterSettings::default().to_curve().unwrap();
    let line = SpectralProfile::lorentzian(0.0, 1e-3).unwrap();
    let grid = ConvolutionGrid {
        step: Some(1e-4),
        half_span: Some(10.0),
    };
    let out = convolve(&laser, &line, &grid).unwrap();
    for nu in [-2.0, -0.9, 0.0, 0.6, 1.7] {
        let d = (out.transmission(nu).unwrap() - laser.transmission(nu).unwrap()).abs();
        assert!(d < 2e-3, "{nu}: {d}");
    }
}

#[test]
fn coarse_grid_is_rejected() {
    let laser = FilterSettings::default().to_curve().unwrap();
    let line = lorentzian_from_coherence(153.0).unwrap();
    let grid = ConvolutionGrid {
        step: Some(0.5),
        half_span: None,
    };
    assert!(matches!(
        convolve(&laser, &line, &grid),
        Err(Error::Resolution { .. })
    ));
}

#[test]
fn slope_landmarks() {
    let curve = FilterCurve::parametric(vec![lorentz_peak(0.0, 1.0)], CurveLabel::Laser).unwrap();
    assert!(slope_at(&curve, 0.0).unwrap().abs() < 1e-9);
    assert!(slope_at(&curve, -0.5).unwrap() > 0.0);
    // Analytic derivative of 1/(1 + 4x^2) peaks in magnitude at x = 1/(2 sqrt 3).
    let x_star = 1.0 / (2.0 * 3f64.sqrt());
    let s_star = slope_at(&curve, -x_star).unwrap();
    for dx in [-0.05, 0.05] {
        assert!(slope_at(&curve, -x_star + dx).unwrap() < s_star);
    }
    let analytic = 8.0 * x_star / (1.0 + 4.0 * x_star * x_star).powi(2);
    assert!((s_star - analytic).abs() < 1e-6);

    let tab = curve.tabulate(-3.0, 3.0, 0.01).unwrap();
    assert!(matches!(
        slope_at(&tab, -3.0),
        Err(Error::Extrapolation { .. })
    ));
}

#[test]
fn set_point_criteria() {
    let curve = FilterCurve::parametric(vec![lorentz_peak(0.0, 1.0)], CurveLabel::Laser).unwrap();
    let sp = find_set_point(&curve, SetPointCriterion::SteepestSlope).unwrap();
    let x_star = 1.0 / (2.0 * 3f64.sqrt());
    let tab = curve.tabulate_default();
    let (lo, hi) = tab.range().unwrap();
    let node = (hi - lo) / 2000.0;
    assert!((sp.nu + x_star).abs() < 0.02, "{sp:?} node {node}");

    let half = find_set_point(&curve, SetPointCriterion::TargetTransmission(0.5)).unwrap();
    assert!((half.nu + 0.5).abs() < 1e-9);
    assert!((half.transmission - 0.5).abs() < 1e-12);
    assert!(half.slope > 0.0);

    let twin = FilterCurve::parametric(
        vec![lorentz_peak(-5.0, 1.0), lorentz_peak(5.0, 1.0)],
        CurveLabel::Laser,
    )
    .unwrap();
    let sp = find_set_point(&twin, SetPointCriterion::SteepestSlope).unwrap();
    assert!(sp.nu < -5.0);

    let weak = FilterCurve::parametric(
        vec![Peak {
            amplitude: 0.2,
            ..lorentz_peak(0.0, 1.0)
        }],
        CurveLabel::Laser,
    )
    .unwrap();
    assert!(matches!(
        find_set_point(&weak, SetPointCriterion::TargetTransmission(0.25)),
        Err(Error::NoSetPoint(_))
    ));
}

#[test]
fn tabulated_roundtrip_through_text() {
    let laser = FilterSettings::default().to_curve().unwrap();
    let tab = laser.tabulate(-6.0, 6.0, 0.01).unwrap();
    let back = FilterCurve::from_text(&tab.to_text(), CurveLabel::Laser, "mem".as_ref()).unwrap();
    for nu in [-5.0, -0.93, 0.0, 2.2] {
        let d = (back.transmission(nu).unwrap() - laser.transmission(nu).unwrap()).abs();
        assert!(d < 1e-6);
    }
    assert!(matches!(
        back.transmission(7.0),
        Err(Error::Extrapolation { .. })
    ));
}
