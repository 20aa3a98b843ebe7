use std::fmt::Write as _;
use std::time::Instant;

use sketch_sfa::verify::TrialReport;

use crate::cli::VerifyArgs;
use crate::error::CliError;
use crate::manifest::Recorder;

pub fn verify(a: &VerifyArgs, command: Vec<String>) -> Result<(), CliError> {
    let mut rec = Recorder::new(&a.out, command, a.seed)?;
    let mut jsonl = String::new();
    let mut summary = String::from("suite,test_id,required,passed,statistic,comparison,threshold,flags\n");
    let mut timings = String::from("suite,seconds\n");
    let mut failed = Vec::new();
    for &suite in &a.suite.0 {
        let started = Instant::now();
        let reports: Vec<TrialReport> = suite.run(a.seed)?;
        let secs = started.elapsed().as_secs_f64();
        writeln!(timings, "{},{secs:.3}", suite.name()).unwrap();
        for r in &reports {
            println!("{} {}", suite.name(), r.line());
            jsonl.push_str(&serde_json::to_string(r).map_err(|e| CliError::Runtime(e.to_string()))?);
            jsonl.push('\n');
            writeln!(
                summary,
                "{},{},{},{},{},{:?},{},{}",
                suite.name(),
                r.test_id,
                suite.required(),
                r.passed,
                r.statistic,
                r.comparison,
                r.threshold,
                r.flags.len()
            )
            .unwrap();
            if !r.passed && suite.required() {
                failed.push(r.test_id.clone());
            }
        }
    }
    std::fs::write(rec.output("reports.jsonl", true), jsonl)?;
    std::fs::write(rec.output("summary.csv", true), summary)?;
    std::fs::write(rec.output("timings.csv", false), timings)?;
    rec.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))))
    }
}
