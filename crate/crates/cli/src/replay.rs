use sketch_sfa::io::read_json;

use crate::cli::ReplayArgs;
use crate::error::CliError;
use crate::manifest::{redirect, sha256_file, RunManifest};

pub fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    let manifest: RunManifest =
        read_json(&a.manifest).map_err(|e| CliError::Usage(format!("manifest {}: {e}", a.manifest.display())))?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, replaying with {}", manifest.version, env!("CARGO_PKG_VERSION"));
    }
    for input in &manifest.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(CliError::Runtime(format!("input {} changed since the recorded run", input.path.display())));
        }
    }
    let out = match &a.out {
        Some(p) => crate::manifest::absolute(p)?,
        None => crate::manifest::absolute(a.manifest.parent().unwrap_or(std::path::Path::new(".")))?.join("replay"),
    };
    let args = redirect(&manifest.command, &out);
    if args.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("refusing to replay a replay".into()));
    }
    // Verification failures are part of the recorded outcome; compare anyway.
    match crate::cli::execute(&args) {
        Ok(()) | Err(CliError::Verification(_)) => {}
        Err(e) => return Err(e),
    }

    let mut differing = Vec::new();
    for o in manifest.outputs.iter().filter(|o| o.primary) {
        let path = out.join(&o.path);
        let same = sha256_file(&path).map(|h| h == o.sha256).unwrap_or(false);
        println!("{} {}", if same { "identical" } else { "DIFFERENT" }, o.path.display());
        if !same {
            differing.push(o.path.display().to_string());
        }
    }
    if differing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("primary artifacts differ: {}", differing.join(", "))))
    }
}
