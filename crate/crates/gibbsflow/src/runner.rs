//! Run directories: manifest, results table, verdicts, and replay.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::experiments::{self, Outcome};
use crate::scenario::{ScenarioConfig, DEFAULT_SEED};

pub const VERSION: &str = env!("GIBBSFLOW_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.csv";
pub const VERDICT: &str = "verdict.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    Flag,
    Environment,
    Config,
    Default,
}

/// Flag, then `GIBBSFLOW_SEED`, then the file, then the fixed default.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, cfg: &ScenarioConfig) -> Result<(u64, SeedSource)> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(raw) = env.filter(|s| !s.trim().is_empty()) {
        let s = parse_seed(raw).with_context(|| format!("GIBBSFLOW_SEED={raw:?} is not an unsigned integer"))?;
        return Ok((s, SeedSource::Environment));
    }
    if let Some(s) = cfg.seed {
        return Ok((s, SeedSource::Config));
    }
    Ok((DEFAULT_SEED, SeedSource::Default))
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(raw: &str) -> Result<u64> {
    let raw = raw.trim();
    Ok(match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16)?,
        None => raw.parse()?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub threads: usize,
    pub replicas: usize,
    pub horizon: f64,
    pub config: ScenarioConfig,
    pub verdict: String,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.outcome.verdicts.iter().all(|v| v.pass)
    }
}

/// First unused `<root>/<name>`, `<root>/<name>-1`, ...
fn fresh_dir(root: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
    for k in 0.. {
        let candidate = if k == 0 { root.join(name) } else { root.join(format!("{name}-{k}")) };
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("cannot create {}", candidate.display())),
        }
    }
    unreachable!()
}

fn write_results(dir: &Path, outcome: &Outcome) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(RESULTS))?;
    w.write_record(&outcome.header)?;
    for row in &outcome.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    let mut v = csv::Writer::from_path(dir.join(VERDICT))?;
    v.write_record(["property", "verdict", "detail"])?;
    for verdict in &outcome.verdicts {
        v.write_record([verdict.property.as_str(), if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail.as_str()])?;
    }
    v.flush()?;
    Ok(())
}

/// Runs `cfg` into a fresh directory under `out_root`.
pub fn run(cfg: &ScenarioConfig, seed: u64, seed_source: SeedSource, out_root: &Path) -> Result<RunSummary> {
    let outcome = experiments::run(cfg, seed).with_context(|| format!("experiment {} failed", cfg.name))?;
    let dir = fresh_dir(out_root, &cfg.name)?;
    write_results(&dir, &outcome)?;
    let passed = outcome.verdicts.iter().all(|v| v.pass);
    let manifest = Manifest {
        tool: "gibbsflow".into(),
        version: VERSION.into(),
        experiment: cfg.experiment.kind().into(),
        seed,
        seed_source,
        threads: rayon::current_num_threads(),
        replicas: cfg.replicas(),
        horizon: cfg.horizon(),
        config: cfg.clone(),
        verdict: if passed { "PASS" } else { "FAIL" }.into(),
        notes: outcome.notes.clone(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunSummary { dir, outcome })
}

pub fn read_manifest(run_dir: &Path) -> Result<Manifest> {
    let path = run_dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
    manifest.config.validate()?;
    Ok(manifest)
}

/// Re-executes a run from its manifest into `<run_dir>/replay` and compares
/// the results tables byte for byte.
pub fn replay(run_dir: &Path) -> Result<(RunSummary, bool)> {
    let manifest = read_manifest(run_dir)?;
    let original = fs::read(run_dir.join(RESULTS)).with_context(|| format!("{RESULTS} missing in {}", run_dir.display()))?;
    let target = run_dir.join("replay");
    if target.exists() {
        bail!("{} already exists; remove it to replay again", target.display());
    }
    let summary = run(&manifest.config, manifest.seed, manifest.seed_source, &target)?;
    let again = fs::read(summary.dir.join(RESULTS))?;
    Ok((summary, again == original))
}
