//! JSON manifests tying binary files together.
//!
//! Paths inside a manifest are resolved relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::FileModels;
use crate::error::{Error, Result};
use crate::imprint::FeatureMatrix;
use crate::io::{
    read_fmat_file, read_json, read_labels_file, read_pmat_file, write_fmat_file, write_json,
    write_labels_file, write_pmat_file,
};
use crate::model::{LabelVector, TaskSpec};
use crate::stats::TrajectoryBundle;
use crate::trajectory::{ReindexedCurve, Trajectory};

/// File name used for a curve directory's manifest.
pub const CURVE_FILE: &str = "curve.json";

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub task: TaskSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    pub checkpoints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<Vec<f64>>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct LoadedTrajectory {
    pub trajectory: Trajectory,
    pub labels: Option<LabelVector>,
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<LoadedTrajectory> {
    let path = path.as_ref();
    let m: TrajectoryManifest = read_json(path)?;
    let base = base_dir(path);
    let checkpoints = m
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, p)| read_pmat_file(resolve(&base, p)).map_err(|e| e.at_checkpoint(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut trajectory = Trajectory::new(m.task, checkpoints)?;
    for (k, v) in m.meta {
        trajectory = trajectory.with_meta(k, v);
    }
    if let Some(progress) = m.progress {
        trajectory = trajectory.with_progress_values(progress)?;
    }
    let labels = m
        .labels
        .map(|l| read_labels_file(resolve(&base, &l)))
        .transpose()?;
    if let Some(l) = &labels {
        if l.len() != trajectory.shape().0 || l.n_classes() != trajectory.shape().1 {
            return Err(Error::Dimension(format!(
                "labels ({} samples, {} classes) do not match checkpoints {:?}",
                l.len(),
                l.n_classes(),
                trajectory.shape()
            )));
        }
    }
    Ok(LoadedTrajectory { trajectory, labels })
}

/// Writes `ckpt_XXXX.pmat` files, an optional `labels.lbl`, and
/// `trajectory.json` into `dir`. Returns the manifest path.
pub fn save_trajectory(dir: impl AsRef<Path>, traj: &Trajectory, labels: Option<&LabelVector>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let checkpoints = write_models(dir, "ckpt", traj.checkpoints())?;
    let labels = labels
        .map(|l| {
            write_labels_file(dir.join("labels.lbl"), l)?;
            Ok::<_, Error>("labels.lbl".to_string())
        })
        .transpose()?;
    let manifest = TrajectoryManifest {
        task: traj.task().clone(),
        labels,
        checkpoints,
        progress: traj.progress().map(<[f64]>::to_vec),
        meta: traj.meta().clone(),
    };
    let path = dir.join("trajectory.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

fn write_models<'a>(
    dir: &Path,
    prefix: &str,
    models: impl IntoIterator<Item = &'a crate::model::PredictionMatrix>,
) -> Result<Vec<String>> {
    models
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let name = format!("{prefix}_{i:04}.pmat");
            write_pmat_file(dir.join(&name), p)?;
            Ok(name)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub task: TaskSpec,
    pub labels: String,
    pub checkpoints: Vec<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Clone, Debug)]
pub struct LoadedFeatures {
    pub task: TaskSpec,
    pub labels: LabelVector,
    pub checkpoints: Vec<FeatureMatrix>,
    pub meta: BTreeMap<String, String>,
}

pub fn load_features(path: impl AsRef<Path>) -> Result<LoadedFeatures> {
    let path = path.as_ref();
    let m: FeatureManifest = read_json(path)?;
    let base = base_dir(path);
    let checkpoints = m
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, p)| read_fmat_file(resolve(&base, p)).map_err(|e| e.at_checkpoint(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedFeatures {
        labels: read_labels_file(resolve(&base, &m.labels))?,
        task: m.task,
        checkpoints,
        meta: m.meta,
    })
}

/// Writes `feat_XXXX.fmat`, `labels.lbl` and `features.json` into `dir`.
pub fn save_features(
    dir: impl AsRef<Path>,
    task: &TaskSpec,
    labels: &LabelVector,
    checkpoints: &[FeatureMatrix],
    meta: BTreeMap<String, String>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let names = checkpoints
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let name = format!("feat_{i:04}.fmat");
            write_fmat_file(dir.join(&name), f)?;
            Ok(name)
        })
        .collect::<Result<Vec<_>>>()?;
    write_labels_file(dir.join("labels.lbl"), labels)?;
    let manifest = FeatureManifest {
        task: task.clone(),
        labels: "labels.lbl".into(),
        checkpoints: names,
        meta,
    };
    let path = dir.join("features.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// On-disk description of a reindexed curve. The base checkpoints and their
/// progress are enough to rebuild it; the sampled points are written too for
/// consumers that only need the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveManifest {
    pub task: TaskSpec,
    pub checkpoints: Vec<String>,
    pub progress: Vec<f64>,
    pub grid: Vec<f64>,
    pub points: Vec<String>,
    pub kept_mask: Vec<bool>,
    pub clamped: Vec<bool>,
    pub range: (f64, f64),
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub fn save_curve(dir: impl AsRef<Path>, curve: &ReindexedCurve) -> Result<PathBuf> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let base = curve.base();
    let progress = base
        .progress()
        .ok_or_else(|| Error::Internal("reindexed curve without progress".into()))?
        .to_vec();
    let manifest = CurveManifest {
        task: curve.task().clone(),
        checkpoints: write_models(dir, "ckpt", base.checkpoints())?,
        progress,
        grid: curve.grid().to_vec(),
        points: write_models(dir, "point", curve.points())?,
        kept_mask: curve.kept_mask().to_vec(),
        clamped: curve.clamped().to_vec(),
        range: curve.range(),
        meta: base.meta().clone(),
    };
    let path = dir.join(CURVE_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads a curve from its directory or its `curve.json`.
pub fn load_curve(path: impl AsRef<Path>) -> Result<ReindexedCurve> {
    let path = path.as_ref();
    let file = if path.is_dir() { path.join(CURVE_FILE) } else { path.to_path_buf() };
    let m: CurveManifest = read_json(&file)?;
    let base = base_dir(&file);
    let checkpoints = m
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, p)| read_pmat_file(resolve(&base, p)).map_err(|e| e.at_checkpoint(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory::new(m.task, checkpoints)?;
    for (k, v) in m.meta {
        traj = traj.with_meta(k, v);
    }
    ReindexedCurve::from_progress(traj.with_progress_values(m.progress)?, m.grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    /// Curve directories or `curve.json` files.
    pub curves: Vec<String>,
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<TrajectoryBundle> {
    let path = path.as_ref();
    let m: BundleManifest = read_json(path)?;
    let base = base_dir(path);
    let curves = m
        .curves
        .iter()
        .map(|c| load_curve(resolve(&base, c)))
        .collect::<Result<Vec<_>>>()?;
    let task = match m.task {
        Some(t) => t,
        None => curves
            .first()
            .map(|c| c.task().clone())
            .ok_or_else(|| Error::Validation("bundle lists no curves".into()))?,
    };
    TrajectoryBundle::new(task, curves)
}

/// Model list: a JSON array of paths, an object `{"models": [...]}`, or
/// plain text with one path per line.
pub fn load_model_list(path: impl AsRef<Path>) -> Result<FileModels> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum List {
        Bare(Vec<String>),
        Object { models: Vec<String> },
    }
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = base_dir(path);
    let entries: Vec<String> = match serde_json::from_str::<List>(&text) {
        Ok(List::Bare(v)) | Ok(List::Object { models: v }) => v,
        Err(_) => text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect(),
    };
    Ok(FileModels {
        paths: entries.iter().map(|p| resolve(&base, p)).collect(),
    })
}

/// Writes a JSON model list with paths relative to the list itself.
pub fn write_model_list(path: impl AsRef<Path>, models: &[PathBuf]) -> Result<()> {
    let path = path.as_ref();
    let base = base_dir(path);
    let entries: Vec<String> = models
        .iter()
        .map(|p| {
            p.strip_prefix(&base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    write_json(path, &serde_json::json!({ "models": entries }))
}
