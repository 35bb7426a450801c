use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::support::Scale;
use crate::Outcome;

const WORKERS: [usize; 3] = [1, 4, 8];

fn svjump(args: &[&str], workers: usize, cfg: &Path, out: &Path, extra: &[String]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_svjump"));
    cmd.args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers.to_string())
        .env("RUST_LOG", "warn");
    for e in extra {
        cmd.arg("--set").arg(e);
    }
    let status = cmd.output().map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            out.insert(name, std::fs::read(&path).unwrap_or_default());
        }
    }
    out
}

fn pipeline(root: &Path, variant: &str, workers: usize) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let base = root.join(format!("{variant}-{workers}"));
    let cfg = root.join(format!("{variant}.toml"));
    let run = |name: &str| -> PathBuf { base.join(name) };
    let data = format!("data=\"{}\"", run("sim").join("returns.csv").display());
    let fit_dir = format!("fit_dir=\"{}\"", run("fit").display());
    svjump(&["simulate"], workers, &cfg, &run("sim"), &[])?;
    svjump(&["fit"], workers, &cfg, &run("fit"), std::slice::from_ref(&data))?;
    svjump(&["forecast"], workers, &cfg, &run("forecast"), &[data.clone(), fit_dir.clone()])?;
    svjump(&["diagnose"], workers, &cfg, &run("diagnose"), &[data, fit_dir])?;
    let mut all = BTreeMap::new();
    for stage in ["sim", "fit", "forecast", "diagnose"] {
        for (name, bytes) in csvs(&run(stage)) {
            all.insert(format!("{stage}/{name}"), bytes);
        }
    }
    Ok(all)
}

pub fn byte_identical_outputs(_: &Scale) -> Outcome {
    let root = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for variant in ["svj_independent", "svj_factor"] {
        let toml = format!(
            "variant = \"{variant}\"\nn_factors = 2\nsim_stocks = 6\nsim_days = 320\nholdout = 5\nmin_days = 100\n\
             iterations = 400\nburn_in = 100\nseed = 17\npath_snapshots = 20\nparticles = 100\nbridge_sweeps = 2\n"
        );
        if let Err(e) = std::fs::write(root.path().join(format!("{variant}.toml")), toml) {
            return Outcome::new(false, e.to_string());
        }
        let runs: Result<Vec<_>, String> = WORKERS.iter().map(|&w| pipeline(root.path(), variant, w)).collect();
        match runs {
            Ok(runs) => {
                let reference = &runs[0];
                let differing: Vec<String> = runs[1..]
                    .iter()
                    .zip(&WORKERS[1..])
                    .flat_map(|(r, w)| {
                        reference
                            .iter()
                            .filter(move |(k, v)| r.get(*k) != Some(*v))
                            .map(move |(k, _)| format!("{k} at {w} workers"))
                    })
                    .collect();
                let same_set = runs.iter().all(|r| r.len() == reference.len());
                pass &= differing.is_empty() && same_set && !reference.is_empty();
                parts.push(if differing.is_empty() {
                    format!("{variant}: {} CSVs identical", reference.len())
                } else {
                    format!("{variant}: differs in {}", differing.join(", "))
                });
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{variant}: {e}"));
            }
        }
    }
    Outcome::new(pass, format!("workers {WORKERS:?}; {}", parts.join("; ")))
}
