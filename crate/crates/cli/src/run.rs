use std::path::Path;

use serde::Serialize;
use sketch_sfa::io::{write_json, write_matrix};
use sketch_sfa::rng::{stream, streams};
use sketch_sfa::sfa_exact::{exact_sfa, SfaResult};
use sketch_sfa::sfa_qi::{fit_with, FitOptions, QiSfaModel, QueryMode, SpectralSummary};
use sketch_sfa::sq_core::SampleQuery;
use sketch_sfa::verify::structures;

use crate::cli::{ExactArgs, QiArgs};
use crate::config::SpectraSource;
use crate::data::{prepare, resolve};
use crate::error::CliError;
use crate::manifest::{LedgerTotals, Recorder};

pub const DEFAULT_EPS_TARGET: f64 = 0.2;

#[derive(Serialize)]
struct ExactOutput<'a> {
    n: usize,
    d: usize,
    dropped_columns: &'a [usize],
    result: &'a SfaResult,
}

pub fn exact(a: &ExactArgs, command: Vec<String>) -> Result<(), CliError> {
    let r = resolve(&a.data)?;
    let (ds, diff) = prepare(&a.data, &r)?;
    let res = exact_sfa(&ds.x, &diff, r.j)?;

    let mut rec = Recorder::new(&a.data.out, command, r.seed)?;
    rec.input(&a.data.input)?;
    if let Some(c) = &a.data.config {
        rec.input(c)?;
    }
    rec.config_sha256 = r.config_sha256.clone();
    rec.ledger = LedgerTotals {
        x_entry_reads: Some((ds.n() * ds.d()) as u64),
        xdot_entry_reads: Some((diff.len() * ds.d()) as u64),
    };
    let out = ExactOutput { n: ds.n(), d: ds.d(), dropped_columns: &ds.dropped_columns, result: &res };
    write_json(&rec.output("result.json", true), &out)?;
    write_matrix(&rec.output("features.csv", true), &res.y, "y", ds.labels.as_deref())?;
    rec.finish()?;
    for (k, delta) in res.delta.iter().enumerate() {
        println!("feature {k}: slowness {delta:.6e}");
    }
    Ok(())
}

pub fn qi(a: &QiArgs, command: Vec<String>) -> Result<(), CliError> {
    let r = resolve(&a.data)?;
    let eps = a.eps_target.or(r.config.run.eps_target).unwrap_or(DEFAULT_EPS_TARGET);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CliError::Usage(format!("--eps-target must lie in (0, 1), got {eps}")));
    }
    let source = a.spectra.or(r.config.spectra.source).unwrap_or(SpectraSource::Pilot);
    let (ds, diff) = prepare(&a.data, &r)?;

    let mut opts = FitOptions::new(eps, r.j);
    opts.sizing = r.config.sizing();
    if let Some(rows) = r.config.spectra.pilot_rows {
        opts.pilot_rows = rows;
    }
    if source == SpectraSource::Oracle {
        opts.spectra = Some(SpectralSummary::from_oracle(&exact_sfa(&ds.x, &diff, r.j)?));
    }
    let queries: Vec<(usize, usize)> = a.query.chunks(2).map(|c| (c[0], c[1])).collect();
    for &(i, j) in &queries {
        if i >= ds.n() || j >= r.j {
            return Err(CliError::Usage(format!("--query {i} {j} outside {} rows and J = {}", ds.n(), r.j)));
        }
    }
    if let Some(i) = a.sample_row.filter(|&i| i >= ds.n()) {
        return Err(CliError::Usage(format!("--sample-row {i} outside {} rows", ds.n())));
    }

    let (x_t, xdot_t) = structures(&ds.x, &diff.xdot)?;
    let config = r.config.clone();
    let model = fit_with(x_t, xdot_t, &opts, r.seed, |p| config.apply(p))?;

    let mut rec = Recorder::new(&a.data.out, command, r.seed)?;
    rec.input(&a.data.input)?;
    if let Some(c) = &a.data.config {
        rec.input(c)?;
    }
    rec.config_sha256 = r.config_sha256.clone();
    rec.ledger = LedgerTotals { x_entry_reads: Some(model.x_entry_reads()), xdot_entry_reads: Some(model.xdot_entry_reads()) };
    write_json(&rec.output("model.json", true), &model)?;
    if !queries.is_empty() {
        let path = rec.output("queries.csv", true);
        write_queries(&path, &model, &queries, a.query_eps, a.query_delta, r.seed)?;
    }
    if let Some(i) = a.sample_row {
        let path = rec.output("samples.csv", true);
        write_samples(&path, &model, i, a.draws, r.seed)?;
    }
    rec.finish()?;
    println!(
        "rank {} | X entry reads {} | difference entry reads {}",
        model.svd_x.rank,
        model.x_entry_reads(),
        model.xdot_entry_reads()
    );
    Ok(())
}

fn write_queries(path: &Path, model: &QiSfaModel, queries: &[(usize, usize)], eps: f64, delta: f64, seed: u64) -> Result<(), CliError> {
    let mut rng = stream(seed, streams::QUERY);
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut put = |row: [String; 4]| w.write_record(&row).map_err(|e| CliError::Runtime(e.to_string()));
    put(["i".into(), "j".into(), "value".into(), "estimate".into()])?;
    for &(i, j) in queries {
        let value = model.query_entry(i, j, QueryMode::Exact, eps, delta, &mut rng)?;
        let estimate = model.query_entry(i, j, QueryMode::Estimated, eps, delta, &mut rng)?;
        put([i.to_string(), j.to_string(), value.to_string(), estimate.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Column frequencies of `draws` samples from output row `i`, beside the
/// probabilities `Ŷ(i,j)² / ‖Ŷ(i,·)‖²` they estimate.
fn write_samples(path: &Path, model: &QiSfaModel, i: usize, draws: u64, seed: u64) -> Result<(), CliError> {
    let row = model.output_row(i)?;
    let norm_sq: f64 = row.iter().map(|v| v * v).sum();
    let mut rng = stream(seed, streams::OUTPUT);
    let mut counts = vec![0u64; row.len()];
    if draws > 0 {
        // Fails on an all-zero row, like the per-draw sampler.
        model.sample_output_row(i, &mut rng)?;
        let handle = model.output_handle(i)?;
        for _ in 0..draws {
            counts[handle.sample(&mut rng)?] += 1;
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut put = |row: [String; 4]| w.write_record(&row).map_err(|e| CliError::Runtime(e.to_string()));
    put(["column".into(), "count".into(), "frequency".into(), "probability".into()])?;
    for (j, &c) in counts.iter().enumerate() {
        let freq = if draws > 0 { c as f64 / draws as f64 } else { 0.0 };
        put([j.to_string(), c.to_string(), freq.to_string(), (row[j] * row[j] / norm_sq).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
