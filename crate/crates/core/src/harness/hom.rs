use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::{
    dark_correct, synthesize_histogram, AreaVisibility, CorrectedAreas, HomConfig, HomHistogram,
};
use crate::rng::{stream_rng, Stream};

/// Standalone coincidence-histogram experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomRun {
    pub v_true: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub histogram: HomConfig,
}

#[derive(Debug, Clone)]
pub struct HomRunResult {
    pub histogram: HomHistogram,
    pub corrected: CorrectedAreas,
    pub visibility: AreaVisibility,
}

impl HomRun {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0),
            msg: e.message().to_string(),
        })
    }
}

impl HomRunResult {
    pub fn report(&self) -> String {
        let a = &self.corrected.areas;
        let mut out = String::new();
        let _ = writeln!(out, "central_parallel = {:.3}", a.central_parallel);
        let _ = writeln!(
            out,
            "central_perpendicular = {:.3}",
            a.central_perpendicular
        );
        let _ = writeln!(out, "side_mean_parallel = {:.3}", a.side_mean_parallel);
        let _ = writeln!(
            out,
            "side_mean_perpendicular = {:.3}",
            a.side_mean_perpendicular
        );
        let _ = writeln!(out, "visibility = {:.6}", self.visibility.v);
        let _ = writeln!(out, "sigma = {:.6}", self.visibility.sigma);
        let _ = writeln!(out, "clamped = {}", self.corrected.clamped);
        out
    }
}

pub fn run_hom(run: &HomRun) -> Result<HomRunResult> {
    let cfg = &run.histogram;
    let mut rng = stream_rng(run.seed, 0, Stream::Histogram);
    let histogram = synthesize_histogram(run.v_true, cfg, &mut rng)?;
    let corrected = dark_correct(&histogram, cfg.dark_cps, cfg.singles_cps, cfg.acquisition_s)?;
    let visibility = corrected.visibility()?;
    Ok(HomRunResult {
        histogram,
        corrected,
        visibility,
    })
}
