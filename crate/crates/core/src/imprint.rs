//! Mapping a representation onto another task by imprinting.
//!
//! Each classifier row is the normalised sum of the features of one class;
//! predictions are a bias-free softmax over the resulting logits.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{LabelVector, PredictionMatrix, TaskSpec};
use crate::par;
use crate::trajectory::Trajectory;

/// Rows shorter than this cannot be normalised.
pub const MIN_CLASS_NORM: f64 = 1e-12;

/// `N x d` penultimate-layer features, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n_samples: usize,
    dim: usize,
    feats: Arc<[f64]>,
}

impl FeatureMatrix {
    pub fn new(n_samples: usize, dim: usize, feats: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be non-empty, got {n_samples}x{dim}"
            )));
        }
        if feats.len() != n_samples * dim {
            return Err(Error::Dimension(format!(
                "expected {} features for {n_samples}x{dim}, got {}",
                n_samples * dim,
                feats.len()
            )));
        }
        if let Some(i) = feats.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "feature at row {}, column {} is not finite",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            n_samples,
            dim,
            feats: feats.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("feature rows have unequal lengths".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.feats
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.feats[n * self.dim..(n + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.feats.chunks_exact(self.dim)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            if r >= self.n_samples {
                return Err(Error::Dimension(format!(
                    "row {r} out of range for {} samples",
                    self.n_samples
                )));
            }
            out.extend_from_slice(self.row(r));
        }
        Self::new(rows.len(), self.dim, out)
    }

    /// Applies `f` to every row, producing a matrix of width `dim_out`.
    pub fn map_rows(&self, dim_out: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let mut out = vec![0.0; self.n_samples * dim_out];
        for (src, dst) in self.rows().zip(out.chunks_exact_mut(dim_out)) {
            f(src, dst);
        }
        Self::new(self.n_samples, dim_out, out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ImprintOptions {
    /// Normalise each sample's feature vector before summing.
    pub normalize_features: bool,
}

/// `C x d` classifier with unit-norm rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ImprintedClassifier {
    n_classes: usize,
    dim: usize,
    weights: Vec<f64>,
    class_counts: Vec<usize>,
}

impl ImprintedClassifier {
    /// Rebuilds a classifier from stored weights, checking row norms.
    pub fn from_parts(n_classes: usize, dim: usize, weights: Vec<f64>, class_counts: Vec<usize>) -> Result<Self> {
        if weights.len() != n_classes * dim || class_counts.len() != n_classes {
            return Err(Error::Dimension(format!(
                "classifier {n_classes}x{dim} has {} weights and {} counts",
                weights.len(),
                class_counts.len()
            )));
        }
        for (c, row) in weights.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "classifier row {c} has norm {norm}"
                )));
            }
            if class_counts[c] == 0 {
                return Err(Error::MissingClass { class: c });
            }
        }
        Ok(Self {
            n_classes,
            dim,
            weights,
            class_counts,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }
}

/// Imprints one unit-norm row per class from the class's summed features.
pub fn imprint(
    feats: &FeatureMatrix,
    labels: &LabelVector,
    options: ImprintOptions,
) -> Result<ImprintedClassifier> {
    if feats.n_samples() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows but {} labels",
            feats.n_samples(),
            labels.len()
        )));
    }
    let c = labels.n_classes();
    let d = feats.dim();
    let mut sums = vec![0.0; c * d];
    for (row, &y) in feats.rows().zip(labels.as_slice()) {
        let scale = if options.normalize_features {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                1.0 / norm
            } else {
                0.0
            }
        } else {
            1.0
        };
        for (s, x) in sums[y * d..(y + 1) * d].iter_mut().zip(row) {
            *s += scale * x;
        }
    }
    let class_counts = labels.class_counts();
    for (class, h) in sums.chunks_exact_mut(d).enumerate() {
        if class_counts[class] == 0 {
            return Err(Error::MissingClass { class });
        }
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < MIN_CLASS_NORM {
            return Err(Error::DegenerateClass { class, norm });
        }
        h.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(ImprintedClassifier {
        n_classes: c,
        dim: d,
        weights: sums,
        class_counts,
    })
}

/// Softmax of the bias-free logits `W phi` for every sample.
pub fn predict(clf: &ImprintedClassifier, feats: &FeatureMatrix) -> Result<PredictionMatrix> {
    if clf.dim != feats.dim() {
        return Err(Error::Dimension(format!(
            "classifier expects {}-dimensional features, got {}",
            clf.dim,
            feats.dim()
        )));
    }
    let c = clf.n_classes;
    let mut probs = vec![0.0; feats.n_samples() * c];
    for (phi, out) in feats.rows().zip(probs.chunks_exact_mut(c)) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = clf.row(k).iter().zip(phi).map(|(w, x)| w * x).sum();
        }
        softmax_in_place(out);
    }
    PredictionMatrix::new(feats.n_samples(), c, probs)
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    logits.iter_mut().for_each(|z| *z /= sum);
}

/// Result of mapping a checkpoint sequence onto a target task.
#[derive(Clone, Debug)]
pub enum MappedTrajectory {
    Trajectory(Trajectory),
    /// A single checkpoint cannot form a trajectory; its mapped model is
    /// returned on its own.
    Single(PredictionMatrix),
}

impl MappedTrajectory {
    pub fn models(&self) -> Vec<&PredictionMatrix> {
        match self {
            MappedTrajectory::Trajectory(t) => t.checkpoints().iter().collect(),
            MappedTrajectory::Single(p) => vec![p],
        }
    }
}

/// Imprints and predicts at every checkpoint, on the target task's samples.
pub fn map_trajectory(
    feature_checkpoints: &[FeatureMatrix],
    labels: &LabelVector,
    task: TaskSpec,
    options: ImprintOptions,
) -> Result<MappedTrajectory> {
    let first = feature_checkpoints
        .first()
        .ok_or_else(|| Error::Validation("no feature checkpoints".into()))?;
    if task.n_classes != labels.n_classes() {
        return Err(Error::Dimension(format!(
            "task {:?} has {} classes but labels have {}",
            task.name,
            task.n_classes,
            labels.n_classes()
        )));
    }
    for (i, f) in feature_checkpoints.iter().enumerate() {
        if f.n_samples() != first.n_samples() || f.dim() != first.dim() {
            return Err(Error::Dimension(format!(
                "checkpoint {i} has shape {}x{}, expected {}x{}",
                f.n_samples(),
                f.dim(),
                first.n_samples(),
                first.dim()
            )));
        }
    }
    let mapped = par::map_indexed(feature_checkpoints.len(), |i| {
        let f = &feature_checkpoints[i];
        imprint(f, labels, options)
            .and_then(|clf| predict(&clf, f))
            .map_err(|e| e.at_checkpoint(i))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if mapped.len() == 1 {
        return Ok(MappedTrajectory::Single(mapped.into_iter().next().unwrap()));
    }
    Ok(MappedTrajectory::Trajectory(
        Trajectory::new(task, mapped)?.with_meta("mapping", "imprinting"),
    ))
}
