use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use sketch_sfa::linalg::aligned_distance;
use sketch_sfa::rng::{stream, streams};
use sketch_sfa::sfa_exact::{exact_sfa, normalize, pairwise_differentiate};
use sketch_sfa::sfa_qi::{fit_with, FitOptions};
use sketch_sfa::synth::{blobs, BlobSpec};
use sketch_sfa::verify::structures;

use crate::cli::BenchArgs;
use crate::data::{load_config, DEFAULT_J, DEFAULT_MAX_PAIRS};
use crate::error::CliError;
use crate::manifest::Recorder;
use crate::run::DEFAULT_EPS_TARGET;

struct Point {
    n: usize,
    d: usize,
    pairs: usize,
    qi_reads: u64,
    qi_xdot_reads: u64,
    exact_reads: u64,
    relative_output_error: f64,
    exact_secs: f64,
    qi_secs: f64,
}

pub fn bench(a: &BenchArgs, command: Vec<String>) -> Result<(), CliError> {
    let (config, config_sha256) = load_config(a.config.as_deref())?;
    let seed = a.seed.or(config.run.seed).unwrap_or(0);
    let j = a.j.or(config.run.j).unwrap_or(DEFAULT_J);
    let eps = a.eps_target.or(config.run.eps_target).unwrap_or(DEFAULT_EPS_TARGET);
    let max_pairs = a.max_pairs.or(config.data.max_pairs_per_class).unwrap_or(DEFAULT_MAX_PAIRS);
    if a.n_grid.is_empty() {
        return Err(CliError::Usage("--n-grid is empty".into()));
    }
    let mut opts = FitOptions::new(eps, j);
    opts.sizing = config.sizing();
    if let Some(rows) = config.spectra.pilot_rows {
        opts.pilot_rows = rows;
    }

    // Each grid point draws from its own streams; results are merged in
    // grid order so the output does not depend on scheduling.
    let points = a
        .n_grid
        .par_iter()
        .map(|&n| -> Result<Point, CliError> {
            let spec = BlobSpec::new(n, a.d, a.classes);
            let ds = normalize(&blobs(&spec, seed)?)?;
            let diff = pairwise_differentiate(&ds, max_pairs, &mut stream(seed, streams::PAIRS))?;
            let (x_t, xdot_t) = structures(&ds.x, &diff.xdot)?;

            let started = Instant::now();
            let dense = x_t.read_dense().transpose();
            let exact_reads = x_t.ledger().snapshot().entry_reads;
            let exact = exact_sfa(&dense, &diff, j)?;
            let exact_secs = started.elapsed().as_secs_f64();
            x_t.ledger().reset();

            let started = Instant::now();
            let model = fit_with(x_t, xdot_t, &opts, seed, |p| config.apply(p))?;
            let qi_secs = started.elapsed().as_secs_f64();
            let y_hat = &ds.x * &model.b_inv_half * &model.w_hat;
            Ok(Point {
                n,
                d: ds.d(),
                pairs: diff.len(),
                qi_reads: model.x_entry_reads(),
                qi_xdot_reads: model.xdot_entry_reads(),
                exact_reads,
                relative_output_error: aligned_distance(&exact.y, &y_hat) / exact.y.norm(),
                exact_secs,
                qi_secs,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::from("n,d,pairs,qi_x_reads,qi_xdot_reads,exact_x_reads,relative_output_error\n");
    let mut timings = String::from("n,exact_seconds,qi_seconds\n");
    for p in &points {
        writeln!(csv, "{},{},{},{},{},{},{}", p.n, p.d, p.pairs, p.qi_reads, p.qi_xdot_reads, p.exact_reads, p.relative_output_error)
            .unwrap();
        writeln!(timings, "{},{:.4},{:.4}", p.n, p.exact_secs, p.qi_secs).unwrap();
        println!(
            "n = {:>8}: X reads {:>9} (exact {:>10}), relative error {:.4}",
            p.n, p.qi_reads, p.exact_reads, p.relative_output_error
        );
    }
    let mut rec = Recorder::new(&a.out, command, seed)?;
    rec.config_sha256 = config_sha256;
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    rec.ledger.x_entry_reads = Some(points.iter().map(|p| p.qi_reads).sum());
    rec.ledger.xdot_entry_reads = Some(points.iter().map(|p| p.qi_xdot_reads).sum());
    std::fs::write(rec.output("bench.csv", true), csv)?;
    std::fs::write(rec.output("timings.csv", false), timings)?;
    rec.finish()?;
    Ok(())
}
