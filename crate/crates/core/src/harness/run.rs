use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::scenario::{ArmConfig, Scenario};
use crate::analysis::{recommend_bandwidth, welch_psd};
use crate::control::{run_lock, LockMode, LockSetup, LockTrace};
use crate::detection::DetectionChannel;
use crate::drift::fit_creep;
use crate::error::{Error, Result};
use crate::estimator::RateEstimator;
use crate::interference::{
    dark_correct, synthesize_histogram, tpi_visibility, visibility_trace_to_text,
    windowed_visibility, EmitterParams, HomConfig, VisibilityPoint,
};
use crate::rng::{stream_rng, Stream};
use crate::spectra::{
    convolve, lorentzian_from_coherence, ConvolutionGrid, CurveLabel, FilterCurve,
};

/// Ordered key-value results of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn num(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, format!("{value:.6}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// An arm with its curves resolved.
#[derive(Debug, Clone)]
pub struct PreparedArm {
    pub emitter: EmitterParams,
    pub laser: FilterCurve,
    pub convolved: FilterCurve,
    pub setup: LockSetup,
    pub monitor_bin_s: f64,
}

fn mode_key(mode: LockMode) -> &'static str {
    match mode {
        LockMode::Locked => "locked",
        LockMode::FreeRunning => "free",
    }
}

pub fn prepare_arm(arm: &ArmConfig, base_dir: &Path, mode: LockMode) -> Result<PreparedArm> {
    let emitter = arm.emitter.params()?;
    let laser = match &arm.curve_file {
        Some(file) => FilterCurve::load(&base_dir.join(file), CurveLabel::Laser)?,
        None => arm
            .filter
            .to_curve()
            .map_err(|e| Error::Config(e.to_string()))?,
    };
    let profile = lorentzian_from_coherence(emitter.t2_ps)?;
    let grid = ConvolutionGrid {
        step: arm.convolution_step_ghz,
        half_span: None,
    };
    let convolved = convolve(&laser, &profile, &grid)?;
    let channel = DetectionChannel::new(
        arm.emitter.r_qd_cps,
        arm.emitter.dark_cps,
        convolved.clone(),
    )?;
    let creep = arm.creep.model()?;
    let mut setup = LockSetup::from_settings(
        &arm.lock,
        channel,
        None,
        arm.actuator,
        creep,
        arm.noise,
        mode,
    )?;
    if arm.monitor.enabled {
        let r_qd = arm.monitor.r_qd_cps.unwrap_or(setup.channel.r_qd);
        setup.monitor = Some(DetectionChannel::new(
            r_qd,
            arm.monitor.dark_cps,
            convolved.clone(),
        )?);
    }
    setup.validate()?;
    Ok(PreparedArm {
        emitter,
        laser,
        convolved,
        setup,
        monitor_bin_s: arm.monitor.bin_s,
    })
}

/// Result of an in-memory run: summary plus named export files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub files: Vec<(String, String)>,
}

/// Everything the run checks before simulating: curves, set points and
/// lock consistency for both arms in every mode.
pub fn validate_scenario(scenario: &Scenario, base_dir: &Path) -> Result<Vec<String>> {
    scenario.check()?;
    let mut notes = Vec::new();
    for mode in &scenario.modes {
        for (name, arm) in [("arm_a", &scenario.arm_a), ("arm_b", &scenario.arm_b)] {
            let p = prepare_arm(arm, base_dir, *mode)?;
            let c = p.setup.config;
            notes.push(format!(
                "{} {name}: nu_set {:.4} GHz, R_set {:.1} cps, slope {:.1} cps/GHz, R_QD {:.1} cps",
                mode_key(*mode),
                c.nu_set,
                c.r_set,
                c.slope,
                p.setup.channel.r_qd
            ));
        }
    }
    Ok(notes)
}

/// Runs every configured mode and collects the exports.
pub fn execute(scenario: &Scenario, base_dir: &Path) -> Result<RunOutcome> {
    scenario.check()?;
    let mut summary = Summary::default();
    let mut files = Vec::new();
    summary.push("scenario", &scenario.name);
    summary.push("seed", scenario.seed);
    summary.num("duration_s", scenario.duration_s);
    let dec = scenario.export.decimation;

    let psd_mode = if scenario.modes.contains(&LockMode::FreeRunning) {
        LockMode::FreeRunning
    } else {
        scenario.modes[0]
    };
    let mut header_done = false;
    for &mode in &scenario.modes {
        let key = mode_key(mode);
        let a = prepare_arm(&scenario.arm_a, base_dir, mode)?;
        let b = prepare_arm(&scenario.arm_b, base_dir, mode)?;
        if !header_done {
            for (name, p) in [("arm_a", &a), ("arm_b", &b)] {
                summary.num(format!("{name}.nu_set_ghz"), p.setup.config.nu_set);
                summary.num(format!("{name}.r_set_cps"), p.setup.config.r_set);
                summary.num(format!("{name}.slope_cps_per_ghz"), p.setup.config.slope);
                summary.num(format!("{name}.r_qd_cps"), p.setup.channel.r_qd);
                files.push((format!("curve_{name}.tsv"), p.convolved.to_text()));
            }
            summary.num(
                "visibility.zero_detuning",
                tpi_visibility(&a.emitter, &b.emitter, 0.0),
            );
            header_done = true;
        }
        info!("running {key} arms for {} s", scenario.duration_s);
        let ta = run_lock(&a.setup, scenario.duration_s, scenario.seed, 0)?;
        let tb = run_lock(&b.setup, scenario.duration_s, scenario.seed, 1)?;
        for (name, p, tr) in [("arm_a", &a, &ta), ("arm_b", &b, &tb)] {
            let prefix = format!("{key}.{name}");
            summary.num(
                format!("{prefix}.residual_rms_mhz"),
                1e3 * tr.residual_rms(),
            );
            summary.num(
                format!("{prefix}.residual_mean_mhz"),
                1e3 * tr.residual_mean(),
            );
            summary.push(format!("{prefix}.events"), tr.events);
            if tr.monitor_slope.is_some() {
                match tr.monitor_deviation_mhz(p.monitor_bin_s) {
                    Ok(d) => summary.num(format!("{prefix}.monitor_deviation_mhz"), d),
                    Err(e) => summary.push(
                        format!("{prefix}.monitor_deviation_mhz"),
                        format!("n/a ({e})"),
                    ),
                }
            }
            summary.push(
                format!("{prefix}.lock_lost_s"),
                tr.lock_lost_at
                    .map_or("none".to_string(), |t| format!("{t:.1}")),
            );
            summary.push(format!("{prefix}.saturated"), tr.saturated);
            files.push((format!("lock_{key}_{name}.tsv"), tr.to_text(dec)));
            files.push((format!("drift_{key}_{name}.tsv"), tr.drift_text(dec)));
        }

        visibility_section(
            scenario,
            key,
            &a.emitter,
            &b.emitter,
            &ta,
            &tb,
            &mut summary,
            &mut files,
        )?;

        if mode == LockMode::FreeRunning {
            if let Some(creep) = a.setup.creep {
                match fit_creep(&ta.t, &ta.dnu_true, Some(creep.t0_s)) {
                    Ok(fit) => {
                        summary.num("free.arm_a.creep_fit.dnu0_ghz", fit.model.dnu0_ghz);
                        summary.num("free.arm_a.creep_fit.alpha", fit.model.alpha);
                        summary.num(
                            "free.arm_a.creep_fit.residual_rms_mhz",
                            1e3 * fit.residual_rms,
                        );
                    }
                    Err(e) => summary.push("free.arm_a.creep_fit", format!("failed ({e})")),
                }
            }
        }
        if mode == psd_mode {
            psd_section(scenario, &a, &ta, key, &mut summary, &mut files)?;
        }
    }
    Ok(RunOutcome { summary, files })
}

#[allow(clippy::too_many_arguments)]
fn visibility_section(
    scenario: &Scenario,
    key: &str,
    e1: &EmitterParams,
    e2: &EmitterParams,
    ta: &LockTrace,
    tb: &LockTrace,
    summary: &mut Summary,
    files: &mut Vec<(String, String)>,
) -> Result<()> {
    let vis = &scenario.visibility;
    let n = ta.t.len().min(tb.t.len());
    let t = &ta.t[..n];
    let rel: Vec<f64> = (0..n)
        .map(|k| ta.residual[k] - tb.residual[k] + vis.initial_detuning_ghz)
        .collect();
    let inst: Vec<VisibilityPoint> = (0..n)
        .step_by(scenario.export.decimation)
        .map(|k| VisibilityPoint {
            t_min: t[k] / 60.0,
            window_min: 0.0,
            v: tpi_visibility(e1, e2, rel[k]),
            sigma_v: 0.0,
        })
        .collect();
    files.push((
        format!("visibility_instantaneous_{key}.tsv"),
        visibility_trace_to_text(&inst),
    ));
    let v_inst: Vec<f64> = rel.iter().map(|&d| tpi_visibility(e1, e2, d)).collect();
    summary.num(format!("{key}.visibility_instantaneous_start"), v_inst[0]);
    summary.num(format!("{key}.visibility_instantaneous_end"), v_inst[n - 1]);

    let span_min = (t[n - 1] - t[0]) / 60.0;
    if span_min < vis.window_min || n < 2 {
        summary.push(
            format!("{key}.visibility_windowed"),
            "n/a (trace shorter than window)",
        );
        return Ok(());
    }
    let points = windowed_visibility(t, &rel, e1, e2, vis.window_min, vis.step_min)?;
    let first = points.first().expect("at least one window");
    let last = points.last().expect("at least one window");
    summary.num(format!("{key}.visibility_windowed_first"), first.v);
    summary.num(format!("{key}.visibility_windowed_last"), last.v);
    files.push((
        format!("visibility_{key}.tsv"),
        visibility_trace_to_text(&points),
    ));

    let hom = HomConfig {
        acquisition_s: if vis.window_min > 0.0 {
            60.0 * vis.window_min
        } else {
            scenario.hom.acquisition_s
        },
        ..scenario.hom
    };
    let arm_index = if key == "locked" { 0 } else { 1 };
    let mut rng = stream_rng(scenario.seed, arm_index, Stream::Histogram);
    let hist = synthesize_histogram(last.v.clamp(0.0, 1.0), &hom, &mut rng)?;
    let corrected = dark_correct(&hist, hom.dark_cps, hom.singles_cps, hom.acquisition_s)?;
    let measured = corrected.visibility()?;
    summary.num(format!("{key}.hom_visibility"), measured.v);
    summary.num(format!("{key}.hom_sigma"), measured.sigma);
    let areas = hist.areas();
    if areas.side_mean_perpendicular > 0.0 {
        summary.num(
            format!("{key}.hom_normalized_perpendicular"),
            areas.central_perpendicular / areas.side_mean_perpendicular,
        );
    }
    files.push((format!("hom_{key}.tsv"), hist.to_text()));

    if vis.sampled {
        let mut rng = stream_rng(scenario.seed, arm_index, Stream::VisibilitySampling);
        let mut sampled = Vec::with_capacity(points.len());
        for p in &points {
            let h = synthesize_histogram(p.v.clamp(0.0, 1.0), &hom, &mut rng)?;
            let c = dark_correct(&h, hom.dark_cps, hom.singles_cps, hom.acquisition_s)?;
            match c.visibility() {
                Ok(m) => sampled.push(VisibilityPoint {
                    v: m.v,
                    sigma_v: m.sigma,
                    ..*p
                }),
                Err(e) => warn!("window ending {:.1} min: {e}", p.t_min),
            }
        }
        files.push((
            format!("visibility_sampled_{key}.tsv"),
            visibility_trace_to_text(&sampled),
        ));
    }
    Ok(())
}

fn psd_section(
    scenario: &Scenario,
    arm: &PreparedArm,
    trace: &LockTrace,
    key: &str,
    summary: &mut Summary,
    files: &mut Vec<(String, String)>,
) -> Result<()> {
    let dt = trace.update_period;
    let seg = scenario.export.psd_segment;
    if trace.t.len() < seg {
        summary.push("psd", "n/a (trace shorter than one segment)");
        return Ok(());
    }
    let psd = welch_psd(&trace.dnu_true, dt, seg, scenario.export.psd_overlap)?;
    files.push(("psd_frequency_arm_a.tsv".to_string(), psd.to_text()));

    // Rate seen at the lock detector: the frequency noise mapped through the
    // flank, against the Poisson floor of the detection.
    if trace.monitor_counts.len() >= seg {
        let rate: Vec<f64> = trace
            .monitor_counts
            .iter()
            .map(|&c| c as f64 / dt)
            .collect();
        let rate_psd = welch_psd(&rate, dt, seg, scenario.export.psd_overlap)?;
        files.push(("psd_rate_arm_a.tsv".to_string(), rate_psd.to_text()));
        let mean = rate.iter().sum::<f64>() / rate.len() as f64;
        let est = RateEstimator::new(arm.setup.tau_cycle, arm.setup.tau_filter, 0.0)?;
        let floor = 4.0 * arm.setup.tau_filter * est.steady_state_std(mean).powi(2);
        match recommend_bandwidth(&rate_psd, floor) {
            Ok(bw) => summary.num("psd.recommended_bandwidth_hz", bw),
            Err(e) => summary.push("psd.recommended_bandwidth_hz", format!("n/a ({e})")),
        }
        summary.push("psd.source", key);
    }
    Ok(())
}

/// Writes the outcome into `out_dir` atomically: files go to a sibling
/// staging directory which replaces `out_dir` only when complete.
pub fn write_outcome(outcome: &RunOutcome, scenario: &Scenario, out_dir: &Path) -> Result<()> {
    let parent = out_dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let leaf = out_dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no name", out_dir.display())))?;
    let staging = parent.join(format!(
        ".{}.partial-{}",
        leaf.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| -> Result<()> {
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        for (name, contents) in &outcome.files {
            crate::io::write_file(&staging.join(name), contents)?;
        }
        crate::io::write_file(&staging.join("scenario.toml"), &scenario.to_toml())?;
        crate::io::write_file(&staging.join("summary.txt"), &outcome.summary.to_text())?;
        if out_dir.exists() {
            std::fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        }
        std::fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result
}

/// Loads, runs and writes a scenario. Returns the summary and the directory
/// written.
pub fn run_scenario(
    path: &Path,
    seed: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<(Summary, PathBuf)> {
    let mut scenario = Scenario::load(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let out = match out_dir {
        Some(d) => d.to_path_buf(),
        None => scenario.output_dir.clone().unwrap_or_else(|| {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            PathBuf::from("out").join(stem.unwrap_or_else(|| "run".into()))
        }),
    };
    let outcome = execute(&scenario, base)?;
    write_outcome(&outcome, &scenario, &out)?;
    Ok((outcome.summary, out))
}
