//! Independent numerical oracles for the integration tests. Nothing here
//! calls into the crate under test.

#![allow(dead_code)]

/// Composite Simpson rule on `[a, b]` with `n` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Root of `f` on a bracketing interval, to `tol` in the argument.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    assert!(f_lo * f(hi) <= 0.0, "interval does not bracket a root");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let c = cdf(x);
            (c - k as f64 / n).abs().max(((k + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < xa.len() && j < xb.len() {
        if xa[i] <= xb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / xa.len() as f64 - j as f64 / xb.len() as f64).abs());
    }
    d
}

/// Critical KS distance at significance 0.01 (asymptotic).
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn ks_critical_01_two(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean of a series with lag-one autocorrelation,
/// under an AR(1) model.
pub fn ar1_standard_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = variance(xs);
    let lag: f64 =
        xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / ((xs.len() - 1) as f64 * var);
    let rho = lag.clamp(-0.999_999, 0.999_999);
    (var / xs.len() as f64 * (1.0 + rho) / (1.0 - rho)).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Ordinary least-squares slope and intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Direct periodogram average with a rectangular window, via an explicit
/// DFT at the requested frequencies.
pub fn dft_power(trace: &[f64], dt: f64, f: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (k, x) in trace.iter().enumerate() {
        let ph = 2.0 * std::f64::consts::PI * f * k as f64 * dt;
        re += x * ph.cos();
        im -= x * ph.sin();
    }
    re * re + im * im
}

/// In-phase and quadrature amplitude of `trace` at frequency `f`.
pub fn lock_in(trace: &[f64], dt: f64, f: f64) -> (f64, f64) {
    let n = trace.len() as f64;
    let m = mean(trace);
    let (mut i, mut q) = (0.0, 0.0);
    for (k, x) in trace.iter().enumerate() {
        let ph = 2.0 * std::f64::consts::PI * f * k as f64 * dt;
        i += (x - m) * ph.sin();
        q += (x - m) * ph.cos();
    }
    (2.0 * i / n, 2.0 * q / n)
}

/// Lorentzian line of unit area.
pub fn lorentzian(x: f64, center: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw / std::f64::consts::PI / ((x - center).powi(2) + hw * hw)
}

/// Two-emitter visibility written out term by term from rates in 1/ns.
pub fn visibility_oracle(t1: [f64; 2], t2: [f64; 2], dnu_ghz: f64) -> f64 {
    let g = [1000.0 / t1[0], 1000.0 / t1[1]];
    let gs = [2000.0 / t2[0] - g[0], 2000.0 / t2[1] - g[1]];
    let s = g[0] + g[1] + gs[0] + gs[1];
    let w = 2.0 * std::f64::consts::PI * dnu_ghz;
    g[0] * g[1] / (g[0] + g[1]) * s / (w * w + s * s / 4.0)
}
