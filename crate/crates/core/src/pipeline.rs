//! Multi-stage pipelines described by a JSON manifest.
//!
//! A stage runs a command that reads its inputs and writes its outputs, all
//! relative to the manifest's directory. A stage depends on every stage named
//! in its `after` list and on every stage producing one of its inputs.
//! Completed stages are recorded in `.pipeline-cache.json`; with `resume`,
//! a stage whose command and input hashes are unchanged and whose outputs
//! are intact is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

pub const CACHE_FILE: &str = ".pipeline-cache.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub command: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub after: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    #[serde(default)]
    pub stages: Vec<Stage>,
    /// Recorded SHA-256 of external inputs, keyed by relative path.
    #[serde(default)]
    pub input_hashes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashMismatch {
    pub path: String,
    pub recorded: String,
    /// `None` when the file no longer exists.
    pub actual: Option<String>,
}

/// SHA-256 of a file, or of a directory's sorted relative paths and file
/// contents. `None` if the path does not exist.
pub fn hash_path(path: &Path) -> Result<Option<String>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
            h.update([0u8]);
        }
    } else {
        h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    Ok(Some(hex::encode(h.finalize())))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl PipelineManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.order()?;
        Ok(m)
    }

    /// Recomputes the recorded input hashes relative to `base`.
    pub fn check_hashes(&self, base: &Path) -> Result<Vec<HashMismatch>> {
        let mut out = Vec::new();
        for (p, recorded) in &self.input_hashes {
            let actual = hash_path(&base.join(p))?;
            if actual.as_deref() != Some(recorded.as_str()) {
                out.push(HashMismatch {
                    path: p.clone(),
                    recorded: recorded.clone(),
                    actual,
                });
            }
        }
        Ok(out)
    }

    /// Records the current hash of every input not produced by a stage.
    pub fn record_hashes(&mut self, base: &Path) -> Result<()> {
        let produced: BTreeSet<&String> = self.stages.iter().flat_map(|s| &s.outputs).collect();
        let mut hashes = BTreeMap::new();
        for s in &self.stages {
            for i in &s.inputs {
                if produced.contains(i) {
                    continue;
                }
                let h = hash_path(&base.join(i))?
                    .ok_or_else(|| Error::Pipeline(format!("stage {}: input {i} does not exist", s.name)))?;
                hashes.insert(i.clone(), h);
            }
        }
        self.input_hashes = hashes;
        Ok(())
    }

    /// Direct dependencies of each stage, by index.
    fn dependencies(&self) -> Result<Vec<BTreeSet<usize>>> {
        let mut index = BTreeMap::new();
        for (i, s) in self.stages.iter().enumerate() {
            if index.insert(s.name.as_str(), i).is_some() {
                return Err(Error::Pipeline(format!("duplicate stage name {:?}", s.name)));
            }
        }
        let mut producer = BTreeMap::new();
        for (i, s) in self.stages.iter().enumerate() {
            for o in &s.outputs {
                if let Some(j) = producer.insert(o.as_str(), i) {
                    return Err(Error::Pipeline(format!(
                        "{o} is produced by both {:?} and {:?}",
                        self.stages[j].name, s.name
                    )));
                }
            }
        }
        self.stages
            .iter()
            .map(|s| {
                let mut deps = BTreeSet::new();
                for a in &s.after {
                    let j = index
                        .get(a.as_str())
                        .ok_or_else(|| Error::Pipeline(format!("stage {:?} waits for unknown stage {a:?}", s.name)))?;
                    deps.insert(*j);
                }
                deps.extend(s.inputs.iter().filter_map(|i| producer.get(i.as_str()).copied()));
                Ok(deps)
            })
            .collect()
    }

    /// Topological order, breaking ties by manifest position.
    pub fn order(&self) -> Result<Vec<usize>> {
        let deps = self.dependencies()?;
        let mut done = vec![false; deps.len()];
        let mut order = Vec::with_capacity(deps.len());
        while order.len() < deps.len() {
            let next = (0..deps.len()).find(|&i| !done[i] && deps[i].iter().all(|&d| done[d]));
            match next {
                Some(i) => {
                    done[i] = true;
                    order.push(i);
                }
                None => {
                    let stuck: Vec<&str> = (0..deps.len())
                        .filter(|&i| !done[i])
                        .map(|i| self.stages[i].name.as_str())
                        .collect();
                    return Err(Error::Pipeline(format!("dependency cycle among stages {stuck:?}")));
                }
            }
        }
        Ok(order)
    }
}

/// Executes one stage with `base` as the working directory.
pub trait StageRunner {
    fn run(&mut self, stage: &Stage, base: &Path) -> Result<()>;
}

/// Runs stage commands as child processes. `programs` maps a command's first
/// word to the executable to launch.
#[derive(Clone, Debug, Default)]
pub struct ProcessRunner {
    pub programs: BTreeMap<String, PathBuf>,
}

impl StageRunner for ProcessRunner {
    fn run(&mut self, stage: &Stage, base: &Path) -> Result<()> {
        let (program, args) = stage
            .command
            .split_first()
            .ok_or_else(|| Error::Pipeline(format!("stage {:?} has an empty command", stage.name)))?;
        let exe = self
            .programs
            .get(program)
            .cloned()
            .unwrap_or_else(|| PathBuf::from(program));
        let output = Command::new(&exe)
            .args(args)
            .current_dir(base)
            .output()
            .map_err(|e| Error::io(&exe, e))?;
        if !output.status.success() {
            return Err(Error::Pipeline(format!(
                "stage {:?} exited with {}: {}",
                stage.name,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Cache {
    stages: BTreeMap<String, CacheEntry>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed { error: String },
    /// Not run because an upstream stage failed.
    Blocked { upstream: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub name: String,
    #[serde(flatten)]
    pub status: StageStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageOutcome>,
    pub hash_mismatches: Vec<HashMismatch>,
}

impl PipelineReport {
    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| {
            matches!(s.status, StageStatus::Completed | StageStatus::Skipped)
        })
    }
}

fn stage_key(stage: &Stage, base: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for part in &stage.command {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    for i in &stage.inputs {
        h.update(i.as_bytes());
        h.update([1u8]);
        h.update(hash_path(&base.join(i))?.unwrap_or_default().as_bytes());
        h.update([0u8]);
    }
    for o in &stage.outputs {
        h.update(o.as_bytes());
        h.update([2u8]);
    }
    Ok(hex::encode(h.finalize()))
}

fn output_hashes(stage: &Stage, base: &Path) -> Result<Option<BTreeMap<String, String>>> {
    let mut out = BTreeMap::new();
    for o in &stage.outputs {
        match hash_path(&base.join(o))? {
            Some(h) => {
                out.insert(o.clone(), h);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Runs every stage in dependency order. A failing stage blocks the stages
/// downstream of it; independent stages still run. Hash mismatches of
/// recorded inputs are reported but do not stop the run.
pub fn run_pipeline(
    manifest: &PipelineManifest,
    base: &Path,
    runner: &mut dyn StageRunner,
    options: RunOptions,
) -> Result<PipelineReport> {
    let order = manifest.order()?;
    let deps = manifest.dependencies()?;
    let hash_mismatches = manifest.check_hashes(base)?;
    let cache_path = base.join(CACHE_FILE);
    let mut cache: Cache = if cache_path.exists() {
        read_json(&cache_path)?
    } else {
        Cache::default()
    };
    let mut outcomes: Vec<Option<StageStatus>> = vec![None; manifest.stages.len()];
    for &i in &order {
        let stage = &manifest.stages[i];
        if let Some(&d) = deps[i].iter().find(|&&d| {
            !matches!(outcomes[d], Some(StageStatus::Completed | StageStatus::Skipped))
        }) {
            let upstream = match &outcomes[d] {
                Some(StageStatus::Blocked { upstream }) => upstream.clone(),
                _ => manifest.stages[d].name.clone(),
            };
            outcomes[i] = Some(StageStatus::Blocked { upstream });
            continue;
        }
        let key = stage_key(stage, base)?;
        if options.resume {
            if let Some(entry) = cache.stages.get(&stage.name) {
                if entry.key == key && output_hashes(stage, base)?.as_ref() == Some(&entry.outputs) {
                    outcomes[i] = Some(StageStatus::Skipped);
                    continue;
                }
            }
        }
        let result = runner.run(stage, base).and_then(|()| {
            output_hashes(stage, base)?.ok_or_else(|| {
                let missing: Vec<&String> = stage
                    .outputs
                    .iter()
                    .filter(|o| !base.join(o).exists())
                    .collect();
                Error::Pipeline(format!("stage {:?} did not produce {missing:?}", stage.name))
            })
        });
        match result {
            Ok(outputs) => {
                cache.stages.insert(stage.name.clone(), CacheEntry { key, outputs });
                write_json(&cache_path, &cache)?;
                outcomes[i] = Some(StageStatus::Completed);
            }
            Err(e) => {
                cache.stages.remove(&stage.name);
                outcomes[i] = Some(StageStatus::Failed { error: e.to_string() });
            }
        }
    }
    if !manifest.stages.is_empty() {
        write_json(&cache_path, &cache)?;
    }
    Ok(PipelineReport {
        stages: order
            .iter()
            .map(|&i| StageOutcome {
                name: manifest.stages[i].name.clone(),
                status: outcomes[i].clone().expect("every stage visited"),
            })
            .collect(),
        hash_mismatches,
    })
}
