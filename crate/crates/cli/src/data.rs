use serde::Serialize;
use sketch_sfa::io::{read_dataset, write_dataset, write_json};
use sketch_sfa::rng::{stream, streams};
use sketch_sfa::sfa_exact::{normalize, pairwise_differentiate, quadratic_expand, Dataset, DiffMatrix, DEFAULT_EXPANSION_CAP};
use sketch_sfa::synth::{blobs, low_rank, wiskott_signal, wiskott_source, BlobSpec};
use sketch_sfa::SfaError;

use crate::cli::{DataArgs, DataKind, GenArgs};
use crate::config::{self, Config};
use crate::error::CliError;
use crate::manifest::Recorder;

pub const DEFAULT_J: usize = 2;
pub const DEFAULT_MAX_PAIRS: usize = 4096;

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Meta {
    Blobs { spec: BlobSpec, seed: u64, class_means: Vec<Vec<f64>> },
    WiskottSignal { samples: usize, slow_source: Vec<f64> },
    LowRank { n: usize, d: usize, rank: usize, noise: f64, scale: f64, seed: u64, singular_values: Vec<f64> },
}

/// Bad generator parameters are usage errors.
fn usage(e: SfaError) -> CliError {
    match e {
        SfaError::InvalidInput(msg) => CliError::Usage(msg),
        e => e.into(),
    }
}

pub fn gen_data(a: &GenArgs, command: Vec<String>) -> Result<(), CliError> {
    let (ds, meta) = match a.kind {
        DataKind::Blobs => {
            let spec = BlobSpec { n: a.n, d: a.d, classes: a.classes, separation: a.separation };
            (blobs(&spec, a.seed).map_err(usage)?, Meta::Blobs { spec, seed: a.seed, class_means: spec.means() })
        }
        DataKind::WiskottSignal => (
            wiskott_signal(a.samples).map_err(usage)?,
            Meta::WiskottSignal { samples: a.samples, slow_source: wiskott_source(a.samples) },
        ),
        DataKind::LowRank => {
            if a.rank > a.d {
                return Err(CliError::Usage(format!("rank {} exceeds d = {}", a.rank, a.d)));
            }
            let lr = low_rank(a.n, a.d, a.rank, a.noise, a.scale, a.seed).map_err(usage)?;
            let meta = Meta::LowRank {
                n: a.n,
                d: a.d,
                rank: a.rank,
                noise: a.noise,
                scale: a.scale,
                seed: a.seed,
                singular_values: lr.sigma.clone(),
            };
            (Dataset::time_series(lr.a), meta)
        }
    };
    let mut rec = Recorder::new(&a.out, command, a.seed)?;
    write_dataset(&rec.output("data.csv", true), &ds)?;
    write_json(&rec.output("meta.json", true), &meta)?;
    rec.finish()?;
    Ok(())
}

/// Command-line values merged over the config file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub j: usize,
    pub labels: bool,
    pub normalize: bool,
    pub expand: bool,
    pub max_pairs: usize,
}

pub fn load_config(path: Option<&std::path::Path>) -> Result<(Config, Option<String>), CliError> {
    match path {
        Some(p) => {
            let loaded = config::load(p).map_err(CliError::Usage)?;
            Ok((loaded.config, Some(loaded.sha256)))
        }
        None => Ok((Config::default(), None)),
    }
}

pub fn resolve(a: &DataArgs) -> Result<Resolved, CliError> {
    let (config, config_sha256) = load_config(a.config.as_deref())?;
    let data = &config.data;
    let j = a.j.or(config.run.j).unwrap_or(DEFAULT_J);
    if j == 0 {
        return Err(CliError::Usage("--J must be at least 1".into()));
    }
    Ok(Resolved {
        seed: a.seed.or(config.run.seed).unwrap_or(0),
        j,
        labels: a.labels || data.labels.unwrap_or(false),
        normalize: !a.no_normalize && data.normalize.unwrap_or(true),
        expand: a.expand || data.expand.unwrap_or(false),
        max_pairs: a.max_pairs.or(data.max_pairs_per_class).unwrap_or(DEFAULT_MAX_PAIRS),
        config_sha256,
        config,
    })
}

/// Reads, standardizes, optionally expands, and differentiates.
pub fn prepare(a: &DataArgs, r: &Resolved) -> Result<(Dataset, DiffMatrix), CliError> {
    let mut ds = read_dataset(&a.input, r.labels)?;
    if r.normalize {
        ds = normalize(&ds)?;
    }
    if r.expand {
        ds = quadratic_expand(&ds, DEFAULT_EXPANSION_CAP)?;
        if r.normalize {
            ds = normalize(&ds)?;
        }
    }
    let diff = pairwise_differentiate(&ds, r.max_pairs, &mut stream(r.seed, streams::PAIRS))?;
    Ok((ds, diff))
}
