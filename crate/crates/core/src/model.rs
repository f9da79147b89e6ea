//! Probabilistic models on the product of simplices and the divergences
//! between them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking logarithms.
pub const EPS_PROB: f64 = 1e-12;
/// Lower clamp applied to the Bhattacharyya coefficient before `-log`.
pub const EPS_BC: f64 = 1e-300;
/// Maximum deviation of a row sum from 1 accepted at ingestion.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// `N x C` row-stochastic matrix: one categorical distribution per sample.
///
/// Storage is row-major and shared, so clones are cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    n_samples: usize,
    n_classes: usize,
    probs: Arc<[f64]>,
}

impl PredictionMatrix {
    /// Builds a matrix from row-major probabilities, checking every row.
    pub fn new(n_samples: usize, n_classes: usize, probs: Vec<f64>) -> Result<Self> {
        check_shape(n_samples, n_classes)?;
        if probs.len() != n_samples * n_classes {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {n_samples}x{n_classes} matrix, got {}",
                n_samples * n_classes,
                probs.len()
            )));
        }
        for (n, row) in probs.chunks_exact(n_classes).enumerate() {
            check_row(row, n)?;
        }
        Ok(Self::from_parts(n_samples, n_classes, probs))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != c) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {c}",
                r.len()
            )));
        }
        Self::new(n, c, rows.concat())
    }

    /// Skips row validation. Callers guarantee row-stochasticity.
    pub(crate) fn from_parts(n_samples: usize, n_classes: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_samples * n_classes);
        Self {
            n_samples,
            n_classes,
            probs: probs.into(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_samples, self.n_classes)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.probs[n * self.n_classes..(n + 1) * self.n_classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.probs.chunks_exact(self.n_classes)
    }

    pub fn get(&self, n: usize, c: usize) -> f64 {
        self.probs[n * self.n_classes + c]
    }

    /// Element-wise square roots, row-major.
    pub fn sqrt_entries(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.sqrt()).collect()
    }

    /// Restriction to a subset of samples, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("row selection is empty".into()));
        }
        let mut out = Vec::with_capacity(rows.len() * self.n_classes);
        for &r in rows {
            if r >= self.n_samples {
                return Err(Error::Dimension(format!(
                    "row {r} out of range for {} samples",
                    self.n_samples
                )));
            }
            out.extend_from_slice(self.row(r));
        }
        Ok(Self::from_parts(rows.len(), self.n_classes, out))
    }

    /// Reorders classes so that output column `j` is input column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_classes];
        if perm.len() != self.n_classes
            || perm.iter().any(|&p| p >= self.n_classes || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Validation(format!(
                "not a permutation of {} classes",
                self.n_classes
            )));
        }
        let probs = self
            .rows()
            .flat_map(|row| perm.iter().map(move |&p| row[p]))
            .collect();
        Ok(Self::from_parts(self.n_samples, self.n_classes, probs))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        ensure_same_shape(self, other)?;
        Ok(self
            .probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Largest `|row sum - 1|` over all rows.
    pub fn max_row_drift(&self) -> f64 {
        self.rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Per-sample argmax (first index on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                        if p > best.1 {
                            (i, p)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

fn check_shape(n_samples: usize, n_classes: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::Validation("a model needs at least one sample".into()));
    }
    if n_classes < 2 {
        return Err(Error::Validation(format!(
            "a model needs at least two classes, got {n_classes}"
        )));
    }
    Ok(())
}

/// Checks one row for finiteness, non-negativity and unit sum.
pub fn check_row(row: &[f64], index: usize) -> Result<()> {
    if let Some(c) = row.iter().position(|p| !p.is_finite()) {
        return Err(Error::Validation(format!(
            "row {index}: entry {c} is not finite"
        )));
    }
    if let Some(c) = row.iter().position(|&p| p < 0.0) {
        return Err(Error::Validation(format!(
            "row {index}: entry {c} is negative ({})",
            row[c]
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Validation(format!(
            "row {index} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_shape(p: &PredictionMatrix, q: &PredictionMatrix) -> Result<()> {
    if p.shape() != q.shape() {
        return Err(Error::Dimension(format!(
            "models have shapes {:?} and {:?}",
            p.shape(),
            q.shape()
        )));
    }
    Ok(())
}

/// Ground-truth class index per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        check_shape(labels.len(), n_classes)?;
        if let Some((n, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::Validation(format!(
                "label {y} at sample {n} is out of range for {n_classes} classes"
            )));
        }
        Ok(Self { labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Sample indices whose label is `class`.
    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(n, _)| n)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, n_classes: usize) -> Self {
        Self {
            name: name.into(),
            n_classes,
            class_names: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Validation(format!(
                "task {:?} needs at least two classes",
                self.name
            )));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.n_classes {
                return Err(Error::Validation(format!(
                    "task {:?} lists {} class names for {} classes",
                    self.name,
                    names.len(),
                    self.n_classes
                )));
            }
            let mut sorted: Vec<&String> = names.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!(
                    "task {:?} has duplicate class names",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-sample divergences and their reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDivergences {
    pub per_sample: Vec<f64>,
    pub aggregate: f64,
}

/// One-hot model at the ground-truth labels.
pub fn truth_model(labels: &LabelVector) -> PredictionMatrix {
    let c = labels.n_classes();
    let mut probs = vec![0.0; labels.len() * c];
    for (n, &y) in labels.as_slice().iter().enumerate() {
        probs[n * c + y] = 1.0;
    }
    PredictionMatrix::from_parts(labels.len(), c, probs)
}

/// Uniform model over `n_classes` for every sample.
pub fn ignorance_model(n_samples: usize, n_classes: usize) -> Result<PredictionMatrix> {
    check_shape(n_samples, n_classes)?;
    let p = 1.0 / n_classes as f64;
    Ok(PredictionMatrix::from_parts(
        n_samples,
        n_classes,
        vec![p; n_samples * n_classes],
    ))
}

/// Bhattacharyya coefficient of two rows given as element-wise square roots.
///
/// Returns `None` when the rows are identical, so callers can report an
/// exact zero divergence.
#[inline]
pub(crate) fn sqrt_row_bc(a: &[f64], b: &[f64]) -> Option<f64> {
    if a == b {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

#[inline]
pub(crate) fn bhattacharyya_from_bc(bc: Option<f64>) -> f64 {
    match bc {
        None => 0.0,
        Some(bc) => -bc.clamp(EPS_BC, 1.0).ln(),
    }
}

#[inline]
pub(crate) fn half_angle_from_bc(bc: Option<f64>) -> f64 {
    match bc {
        None => 0.0,
        Some(bc) => bc.clamp(0.0, 1.0).acos(),
    }
}

fn per_sample_coefficients(p: &PredictionMatrix, q: &PredictionMatrix) -> Result<Vec<Option<f64>>> {
    ensure_same_shape(p, q)?;
    let c = p.n_classes();
    let mut sa = vec![0.0; c];
    let mut sb = vec![0.0; c];
    Ok(p.rows()
        .zip(q.rows())
        .map(|(a, b)| {
            for (dst, x) in sa.iter_mut().zip(a) {
                *dst = x.sqrt();
            }
            for (dst, x) in sb.iter_mut().zip(b) {
                *dst = x.sqrt();
            }
            sqrt_row_bc(&sa, &sb)
        })
        .collect())
}

/// Sample-averaged Bhattacharyya distance.
pub fn bhattacharyya(p: &PredictionMatrix, q: &PredictionMatrix) -> Result<SampleDivergences> {
    let per_sample: Vec<f64> = per_sample_coefficients(p, q)?
        .into_iter()
        .map(bhattacharyya_from_bc)
        .collect();
    let aggregate = mean(&per_sample);
    Ok(SampleDivergences {
        per_sample,
        aggregate,
    })
}

/// Half great-circle angles `arccos(sum_c sqrt(p q))`, aggregated as the
/// root mean square over samples.
pub fn great_circle_half(p: &PredictionMatrix, q: &PredictionMatrix) -> Result<SampleDivergences> {
    let per_sample: Vec<f64> = per_sample_coefficients(p, q)?
        .into_iter()
        .map(half_angle_from_bc)
        .collect();
    let aggregate = rms(&per_sample);
    Ok(SampleDivergences {
        per_sample,
        aggregate,
    })
}

/// `KL(P* || P)` averaged over samples; equals the cross-entropy loss for a
/// one-hot `P*`.
pub fn kl_to_truth(pstar: &PredictionMatrix, p: &PredictionMatrix) -> Result<f64> {
    ensure_same_shape(pstar, p)?;
    for (n, row) in pstar.rows().enumerate() {
        let ones = row.iter().filter(|&&x| x == 1.0).count();
        let zeros = row.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Validation(format!(
                "truth model row {n} is not one-hot"
            )));
        }
    }
    let total: f64 = pstar
        .rows()
        .zip(p.rows())
        .map(|(t, q)| {
            t.iter()
                .zip(q)
                .filter(|(&ti, _)| ti > 0.0)
                .map(|(&ti, &qi)| ti * (ti / qi.max(EPS_PROB)).ln())
                .sum::<f64>()
        })
        .sum();
    Ok(total / pstar.n_samples() as f64)
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}
