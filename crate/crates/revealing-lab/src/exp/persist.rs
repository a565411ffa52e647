//! Append-only persistence for experiment runs.
//!
//! Layout under the configured output root:
//!
//! ```text
//! out/
//!   index.csv                  append-only: one line per run, ever
//!   <kind>-<hash8>/            one directory per run (suffixed -2, -3,
//!     records.csv              … on re-runs; prior runs never mutate)
//!     traces.csv | sweep.csv | checks.csv   kind-specific tables
//!     summary.csv
//!     manifest.toml            config echo, code version, wall clock
//! ```
//!
//! Determinism contract: every CSV is a pure function of the config and
//! seeds, so re-running the same config yields byte-identical tables.
//! Wall-clock time and the start timestamp are quarantined to the
//! `manifest.toml` sidecar, which is the only artifact allowed to
//! differ between identical runs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{LabError, Result};

use super::{CheckRow, ExperimentConfig, RunRecord, SummaryRow, SweepRow, TraceRow};

pub(crate) struct RunArtifacts<'a> {
    pub config: &'a ExperimentConfig,
    pub config_hash: &'a str,
    pub records: &'a [RunRecord],
    pub traces: &'a [TraceRow],
    pub sweep: &'a [SweepRow],
    pub checks: &'a [CheckRow],
    pub summary: &'a [SummaryRow],
    pub all_pass: bool,
    pub wall_clock_s: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    kind: &'a str,
    config_hash: &'a str,
    code_version: &'a str,
    started_unix_s: u64,
    wall_clock_s: f64,
    all_pass: bool,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct IndexRow<'a> {
    run: &'a str,
    kind: &'a str,
    config_hash: &'a str,
    code_version: &'a str,
}

/// Persist one run; returns the (freshly created) run directory.
pub(crate) fn persist(art: &RunArtifacts<'_>) -> Result<PathBuf> {
    let out = &art.config.out_dir;
    fs::create_dir_all(out)?;
    let (dir, run_name) = fresh_run_dir(out, art.config.kind.slug(), art.config_hash)?;

    write_csv(&dir.join("records.csv"), art.records)?;
    if !art.traces.is_empty() {
        write_csv(&dir.join("traces.csv"), art.traces)?;
    }
    if !art.sweep.is_empty() {
        write_csv(&dir.join("sweep.csv"), art.sweep)?;
    }
    if !art.checks.is_empty() {
        write_csv(&dir.join("checks.csv"), art.checks)?;
    }
    write_csv(&dir.join("summary.csv"), art.summary)?;

    let manifest = Manifest {
        format: "revealing-lab/run-manifest/v1",
        kind: art.config.kind.slug(),
        config_hash: art.config_hash,
        code_version: super::CODE_VERSION,
        started_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_clock_s: art.wall_clock_s,
        all_pass: art.all_pass,
        config: art.config,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| LabError::Format(format!("manifest to TOML: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;

    append_index(out, &run_name, art)?;
    Ok(dir)
}

/// First free directory `<kind>-<hash8>`, `<kind>-<hash8>-2`, …; never
/// reuses an existing one, so earlier runs stay untouched.
fn fresh_run_dir(out: &Path, kind: &str, hash: &str) -> Result<(PathBuf, String)> {
    let short = &hash[..hash.len().min(8)];
    let base = format!("{kind}-{short}");
    for attempt in 1u32.. {
        let name = if attempt == 1 { base.clone() } else { format!("{base}-{attempt}") };
        let dir = out.join(&name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((dir, name)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("u32 attempt counter exhausted")
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn append_index(out: &Path, run_name: &str, art: &RunArtifacts<'_>) -> Result<()> {
    let path = out.join("index.csv");
    let fresh = !path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(IndexRow {
        run: run_name,
        kind: art.config.kind.slug(),
        config_hash: art.config_hash,
        code_version: super::CODE_VERSION,
    })
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Format(format!("csv: {e}"))
}

/// Shared runner tail: persist and assemble the outcome.
pub(crate) fn finish(
    config: &ExperimentConfig,
    config_hash: String,
    records: Vec<RunRecord>,
    traces: Vec<TraceRow>,
    sweep: Vec<SweepRow>,
    checks: Vec<CheckRow>,
    summary: Vec<SummaryRow>,
    wall_clock_s: f64,
) -> Result<super::ExperimentOutcome> {
    let judged_rows = records.iter().filter_map(|r| r.pass).all(|p| p)
        && sweep.iter().all(|r| r.pass)
        && checks.iter().all(|r| r.pass)
        && summary.iter().filter_map(|r| r.pass).all(|p| p);
    let art = RunArtifacts {
        config,
        config_hash: &config_hash,
        records: &records,
        traces: &traces,
        sweep: &sweep,
        checks: &checks,
        summary: &summary,
        all_pass: judged_rows,
        wall_clock_s,
    };
    let run_dir = persist(&art)?;
    Ok(super::ExperimentOutcome {
        kind: config.kind,
        config_hash,
        records,
        traces,
        sweep,
        checks,
        summary,
        all_pass: judged_rows,
        run_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp::{shipped_config, ExperimentKind};

    fn tiny_artifacts(config: &ExperimentConfig, hash: &str) -> RunArtifacts<'_> {
        RunArtifacts {
            config,
            config_hash: hash,
            records: &[],
            traces: &[],
            sweep: &[],
            checks: &[],
            summary: &[],
            all_pass: true,
            wall_clock_s: 0.0,
        }
    }

    #[test]
    fn reruns_get_fresh_dirs_and_append_to_index() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = shipped_config(ExperimentKind::IdentitySuite);
        config.out_dir = tmp.path().to_path_buf();
        let hash = config.config_hash();

        let record = crate::exp::record(&hash, 9, "fam", 1.0, "d", "m", 0.5, Some(true));
        let records = vec![record];
        let art = RunArtifacts { records: &records, ..tiny_artifacts(&config, &hash) };
        let first = persist(&art).unwrap();
        let first_bytes = std::fs::read(first.join("records.csv")).unwrap();

        let second = persist(&art).unwrap();
        assert_ne!(first, second);
        assert!(second.file_name().unwrap().to_str().unwrap().ends_with("-2"));

        // Identical config + seed ⇒ byte-identical CSVs; the first run's
        // artifacts are untouched.
        let second_bytes = std::fs::read(second.join("records.csv")).unwrap();
        assert_eq!(first_bytes, second_bytes);
        assert_eq!(std::fs::read(first.join("records.csv")).unwrap(), first_bytes);

        let index = std::fs::read_to_string(tmp.path().join("index.csv")).unwrap();
        let lines: Vec<&str> = index.lines().collect();
        assert_eq!(lines.len(), 3, "header plus one line per run");
        assert_eq!(lines[0], "run,kind,config_hash,code_version");
        assert!(lines[1].starts_with("identity-suite-"));
        assert!(lines[2].contains("-2,identity-suite,"));
    }

    #[test]
    fn manifest_quarantines_timing_and_echoes_config() {
        let tmp = tempfile::tempdir().unwrap();
        let mut config = shipped_config(ExperimentKind::CertifySweep);
        config.out_dir = tmp.path().to_path_buf();
        let hash = config.config_hash();
        let art = RunArtifacts { wall_clock_s: 1.25, ..tiny_artifacts(&config, &hash) };
        let dir = persist(&art).unwrap();

        let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
        assert!(manifest.contains("revealing-lab/run-manifest/v1"));
        assert!(manifest.contains("wall_clock_s = 1.25"));
        assert!(manifest.contains(&hash));
        assert!(manifest.contains("kind = \"certify-sweep\""));
        // The config echo must parse back to the exact config.
        let echoed: toml::Value = toml::from_str(&manifest).unwrap();
        let cfg_text = toml::to_string(echoed.get("config").unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg_text).unwrap(), config);
    }
}
