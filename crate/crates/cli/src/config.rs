//! Run configuration file.
//!
//! TOML with one section per concern; every key is optional and unknown
//! keys are rejected. Command-line flags take precedence over the file.
//!
//! ```toml
//! [run]
//! seed = 7
//! j = 2
//! eps_target = 0.2
//!
//! [data]
//! labels = true
//! max_pairs_per_class = 4096
//!
//! [spectra]
//! source = "pilot"
//! pilot_rows = 256
//!
//! [step4]
//! delta = 0.05
//! ```

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use sketch_sfa::sfa_qi::{PipelineParams, SketchSizing};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub spectra: SpectraSection,
    #[serde(default)]
    pub sizing: SizingSection,
    #[serde(default)]
    pub step1: StepSection,
    #[serde(default)]
    pub step2: StepSection,
    #[serde(default)]
    pub step3: StepSection,
    #[serde(default)]
    pub step4: StepSection,
    #[serde(default)]
    pub step5: StepSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub j: Option<usize>,
    pub eps_target: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub labels: Option<bool>,
    pub normalize: Option<bool>,
    pub expand: Option<bool>,
    pub max_pairs_per_class: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SpectraSource {
    /// Small row sketches of the inputs.
    Pilot,
    /// The exact solver (reads all of the data).
    Oracle,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSection {
    pub source: Option<SpectraSource>,
    pub pilot_rows: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizingSection {
    pub row_constant: Option<f64>,
    pub column_factor: Option<f64>,
    pub max_draws: Option<u64>,
    pub centering_samples: Option<usize>,
}

/// Overrides for one pipeline step; keys a step does not use are rejected
/// by [`Config::validate`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub threshold: Option<f64>,
}

pub struct Loaded {
    pub config: Config,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<Loaded, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let config: Config = toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    config.validate()?;
    Ok(Loaded { config, sha256: hex::encode(Sha256::digest(text.as_bytes())) })
}

impl Config {
    pub fn validate(&self) -> Result<(), String> {
        let unused = |name: &str, s: &StepSection, eta: bool, delta: bool, threshold: bool| -> Result<(), String> {
            let bad = [(s.eta.is_some() && !eta, "eta"), (s.delta.is_some() && !delta, "delta"), (s.threshold.is_some() && !threshold, "threshold")];
            match bad.iter().find(|(b, _)| *b) {
                Some((_, key)) => Err(format!("[{name}] has no `{key}` parameter")),
                None => Ok(()),
            }
        };
        unused("step1", &self.step1, true, false, true)?;
        unused("step2", &self.step2, false, true, false)?;
        unused("step3", &self.step3, false, false, false)?;
        unused("step4", &self.step4, false, true, false)?;
        unused("step5", &self.step5, true, false, true)?;
        Ok(())
    }

    pub fn sizing(&self) -> SketchSizing {
        let mut s = SketchSizing::default();
        let z = &self.sizing;
        if let Some(v) = z.row_constant {
            s.row_constant = v;
        }
        if let Some(v) = z.column_factor {
            s.column_factor = v;
        }
        if let Some(v) = z.max_draws {
            s.max_draws = v;
        }
        if let Some(v) = z.centering_samples {
            s.centering_samples = v;
        }
        s
    }

    /// Applies the per-step overrides to selected parameters.
    pub fn apply(&self, p: &mut PipelineParams) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.eps1, self.step1.eps);
        set(&mut p.eta1, self.step1.eta);
        set(&mut p.sigma_threshold, self.step1.threshold);
        set(&mut p.eps2, self.step2.eps);
        set(&mut p.delta2, self.step2.delta);
        set(&mut p.eps3, self.step3.eps);
        set(&mut p.eps4, self.step4.eps);
        set(&mut p.delta4, self.step4.delta);
        set(&mut p.eps5, self.step5.eps);
        set(&mut p.eta5, self.step5.eta);
        set(&mut p.gamma_threshold, self.step5.threshold);
    }
}
