//! Training trajectories in prediction space.
//!
//! A checkpoint sequence is reindexed by *progress*: the position of the
//! closest point on the geodesic from the ignorance model `P0` to the truth
//! model `P*`. Consecutive checkpoints are joined by geodesic segments, so a
//! trajectory becomes a continuous curve parameterised by progress and two
//! runs can be compared at equal progress irrespective of how fast they
//! trained.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geodesic::{grid_value, interpolation_weights, unit_sqrt_rows, GeodesicSegment};
use crate::minimize::grid_golden_section;
use crate::model::{
    bhattacharyya, ensure_same_shape, ignorance_model, truth_model, LabelVector, PredictionMatrix,
    TaskSpec,
};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgressOptions {
    /// Coarse grid used to seed the minimization.
    pub grid_points: usize,
    /// Width of the final bracket in the geodesic parameter.
    pub tol: f64,
}

impl Default for ProgressOptions {
    fn default() -> Self {
        Self {
            grid_points: 33,
            tol: 1e-6,
        }
    }
}

/// The ignorance-to-truth geodesic, prepared for repeated progress queries.
#[derive(Clone, Debug)]
pub struct ProgressFrame {
    segment: GeodesicSegment,
    options: ProgressOptions,
}

impl ProgressFrame {
    pub fn new(p0: PredictionMatrix, pstar: PredictionMatrix, options: ProgressOptions) -> Result<Self> {
        ensure_same_shape(&p0, &pstar)?;
        if p0.max_abs_diff(&pstar)? == 0.0 {
            return Err(Error::DegenerateGeodesic(
                "ignorance and truth models coincide".into(),
            ));
        }
        Ok(Self {
            segment: GeodesicSegment::new(p0, pstar)?,
            options,
        })
    }

    /// Frame for a labelled task: uniform `P0`, one-hot `P*`.
    pub fn for_labels(labels: &LabelVector, options: ProgressOptions) -> Result<Self> {
        let p0 = ignorance_model(labels.len(), labels.n_classes())?;
        Self::new(p0, truth_model(labels), options)
    }

    pub fn segment(&self) -> &GeodesicSegment {
        &self.segment
    }

    /// Geodesic parameter in `[0, 1]` minimizing the RMS half-angle to `p`.
    pub fn progress(&self, p: &PredictionMatrix) -> Result<f64> {
        ensure_same_shape(p, self.segment.endpoint_u())?;
        let objective = ProgressObjective::new(p, &self.segment);
        let best = grid_golden_section(
            |lambda| objective.eval(lambda),
            0.0,
            1.0,
            self.options.grid_points,
            self.options.tol,
        );
        if !best.value.is_finite() {
            return Err(Error::Numerical("progress objective is not finite".into()));
        }
        Ok(best.x)
    }
}

/// RMS half-angle between a fixed model and the geodesic point at `lambda`.
///
/// The inner product of `sqrt(p)` with an interpolated point is linear in the
/// endpoint inner products, so each evaluation costs `O(N)`.
struct ProgressObjective<'a> {
    bc_u: Vec<f64>,
    bc_v: Vec<f64>,
    angles: &'a [f64],
}

impl<'a> ProgressObjective<'a> {
    fn new(p: &PredictionMatrix, seg: &'a GeodesicSegment) -> Self {
        let c = p.n_classes();
        let sp = unit_sqrt_rows(p);
        let dot = |other: &[f64]| -> Vec<f64> {
            sp.chunks_exact(c)
                .zip(other.chunks_exact(c))
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
                .collect()
        };
        Self {
            bc_u: dot(seg.unit_sqrt_u()),
            bc_v: dot(seg.unit_sqrt_v()),
            angles: seg.interpolation_angles(),
        }
    }

    fn eval(&self, lambda: f64) -> f64 {
        let mut acc = 0.0;
        for ((&bu, &bv), &angle) in self.bc_u.iter().zip(&self.bc_v).zip(self.angles) {
            let (a, b) = interpolation_weights(angle, lambda);
            let norm2 = a * a + b * b + 2.0 * a * b * angle.cos();
            let cos = (a * bu + b * bv) / norm2.sqrt();
            let theta = cos.clamp(0.0, 1.0).acos();
            acc += theta * theta;
        }
        (acc / self.bc_u.len() as f64).sqrt()
    }
}

/// Progress of `p` along the geodesic from `p0` to `pstar`.
pub fn compute_progress(
    p: &PredictionMatrix,
    p0: &PredictionMatrix,
    pstar: &PredictionMatrix,
    options: ProgressOptions,
) -> Result<f64> {
    ProgressFrame::new(p0.clone(), pstar.clone(), options)?.progress(p)
}

/// Progress computed on the samples of a single class only.
pub fn per_class_progress(
    p: &PredictionMatrix,
    labels: &LabelVector,
    class: usize,
    options: ProgressOptions,
) -> Result<f64> {
    if labels.len() != p.n_samples() || labels.n_classes() != p.n_classes() {
        return Err(Error::Dimension(format!(
            "{} labels over {} classes do not match a {:?} model",
            labels.len(),
            labels.n_classes(),
            p.shape()
        )));
    }
    if class >= labels.n_classes() {
        return Err(Error::Validation(format!(
            "class {class} out of range for {} classes",
            labels.n_classes()
        )));
    }
    let rows = labels.indices_of(class);
    if rows.is_empty() {
        return Err(Error::MissingClass { class });
    }
    let sub = p.select_rows(&rows)?;
    let sub_labels = LabelVector::new(vec![class; rows.len()], labels.n_classes())?;
    ProgressFrame::for_labels(&sub_labels, options)?.progress(&sub)
}

/// Ordered checkpoints of one training run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    task: TaskSpec,
    checkpoints: Vec<PredictionMatrix>,
    progress: Option<Vec<f64>>,
    source_meta: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn new(task: TaskSpec, checkpoints: Vec<PredictionMatrix>) -> Result<Self> {
        task.validate()?;
        if checkpoints.len() < 2 {
            return Err(Error::Validation(format!(
                "a trajectory needs at least 2 checkpoints, got {}",
                checkpoints.len()
            )));
        }
        let first = &checkpoints[0];
        if first.n_classes() != task.n_classes {
            return Err(Error::Dimension(format!(
                "task {:?} has {} classes but checkpoints have {}",
                task.name,
                task.n_classes,
                first.n_classes()
            )));
        }
        for (i, ck) in checkpoints.iter().enumerate().skip(1) {
            ensure_same_shape(first, ck).map_err(|e| e.at_checkpoint(i))?;
        }
        Ok(Self {
            task,
            checkpoints,
            progress: None,
            source_meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.source_meta.insert(key.into(), value.into());
        self
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn checkpoints(&self) -> &[PredictionMatrix] {
        &self.checkpoints
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.checkpoints[0].shape()
    }

    pub fn progress(&self) -> Option<&[f64]> {
        self.progress.as_deref()
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.source_meta
    }

    /// Attaches externally supplied per-checkpoint progress.
    pub fn with_progress_values(mut self, progress: Vec<f64>) -> Result<Self> {
        if progress.len() != self.checkpoints.len() {
            return Err(Error::Dimension(format!(
                "{} progress values for {} checkpoints",
                progress.len(),
                self.checkpoints.len()
            )));
        }
        if let Some(i) = progress.iter().position(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("progress of checkpoint {i} is not finite")));
        }
        self.progress = Some(progress);
        Ok(self)
    }

    /// Attaches per-checkpoint progress measured in `frame`.
    pub fn with_progress(mut self, frame: &ProgressFrame) -> Result<Self> {
        let progress = par::map_indexed(self.checkpoints.len(), |i| {
            frame
                .progress(&self.checkpoints[i])
                .map_err(|e| e.at_checkpoint(i))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        self.progress = Some(progress);
        Ok(self)
    }
}

/// Uniform grid of `m` values on `[lo, hi]` with exact endpoints.
pub fn uniform_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            if i + 1 == m {
                hi
            } else {
                lo + (hi - lo) * grid_value(i, m)
            }
        })
        .collect()
}

/// A trajectory as a continuous curve parameterised by progress.
#[derive(Clone, Debug)]
pub struct ReindexedCurve {
    base: Trajectory,
    kept_mask: Vec<bool>,
    knots: Vec<usize>,
    knot_progress: Vec<f64>,
    segments: Vec<GeodesicSegment>,
    grid: Vec<f64>,
    points: Vec<PredictionMatrix>,
    clamped: Vec<bool>,
}

impl ReindexedCurve {
    /// Builds the curve from a trajectory whose progress is already set.
    ///
    /// Checkpoints that do not strictly increase the running maximum of
    /// progress are dropped.
    pub fn from_progress(base: Trajectory, grid: Vec<f64>) -> Result<Self> {
        let progress = base
            .progress
            .as_ref()
            .ok_or_else(|| Error::Reindex("trajectory has no progress values".into()))?;
        let mut kept_mask = Vec::with_capacity(progress.len());
        let mut running = f64::NEG_INFINITY;
        for &t in progress {
            let keep = t > running;
            if keep {
                running = t;
            }
            kept_mask.push(keep);
        }
        let knots: Vec<usize> = (0..kept_mask.len()).filter(|&i| kept_mask[i]).collect();
        if knots.len() < 2 {
            return Err(Error::Reindex(format!(
                "only {} checkpoint(s) with increasing progress",
                knots.len()
            )));
        }
        let knot_progress = knots.iter().map(|&i| progress[i]).collect();
        let segments = knots
            .windows(2)
            .map(|w| {
                GeodesicSegment::new(base.checkpoints[w[0]].clone(), base.checkpoints[w[1]].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut curve = Self {
            base,
            kept_mask,
            knots,
            knot_progress,
            segments,
            grid: Vec::new(),
            points: Vec::new(),
            clamped: Vec::new(),
        };
        curve.set_grid(grid)?;
        Ok(curve)
    }

    /// Curve through given models at given, strictly increasing progress
    /// values (used for derived curves such as ensemble means).
    pub fn from_knots(
        task: TaskSpec,
        models: Vec<PredictionMatrix>,
        progress: Vec<f64>,
        grid: Vec<f64>,
    ) -> Result<Self> {
        if models.len() != progress.len() {
            return Err(Error::Dimension(format!(
                "{} models but {} progress values",
                models.len(),
                progress.len()
            )));
        }
        if progress.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Reindex("knot progress must be strictly increasing".into()));
        }
        let mut base = Trajectory::new(task, models)?.with_meta("progress_source", "assigned");
        base.progress = Some(progress);
        Self::from_progress(base, grid)
    }

    fn set_grid(&mut self, grid: Vec<f64>) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::Reindex("empty progress grid".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Reindex("progress grid must be strictly increasing".into()));
        }
        let evaluated = grid.iter().map(|&t| self.at(t)).collect::<Result<Vec<_>>>()?;
        let (points, clamped) = evaluated.into_iter().unzip();
        self.grid = grid;
        self.points = points;
        self.clamped = clamped;
        Ok(())
    }

    /// Same curve evaluated on a different grid.
    pub fn regrid(&self, grid: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.set_grid(grid)?;
        Ok(out)
    }

    /// Model at progress `t`, and whether `t` fell outside the covered range
    /// and was clamped to an endpoint.
    pub fn at(&self, t: f64) -> Result<(PredictionMatrix, bool)> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("progress {t} is not finite")));
        }
        let kp = &self.knot_progress;
        let (first, last) = (kp[0], kp[kp.len() - 1]);
        if t <= first {
            return Ok((self.knot(0).clone(), t < first));
        }
        if t >= last {
            return Ok((self.knot(kp.len() - 1).clone(), t > last));
        }
        // kp[k] <= t < kp[k + 1]
        let k = kp.partition_point(|&x| x <= t) - 1;
        let lambda = ((t - kp[k]) / (kp[k + 1] - kp[k])).clamp(0.0, 1.0);
        Ok((self.segments[k].point(lambda)?, false))
    }

    fn knot(&self, i: usize) -> &PredictionMatrix {
        &self.base.checkpoints[self.knots[i]]
    }

    pub fn base(&self) -> &Trajectory {
        &self.base
    }

    pub fn task(&self) -> &TaskSpec {
        &self.base.task
    }

    pub fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn points(&self) -> &[PredictionMatrix] {
        &self.points
    }

    /// Which base checkpoints survived the monotonicity filter.
    pub fn kept_mask(&self) -> &[bool] {
        &self.kept_mask
    }

    /// Which grid values lay outside the covered progress range.
    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    pub fn knot_progress(&self) -> &[f64] {
        &self.knot_progress
    }

    pub fn knot_models(&self) -> Vec<&PredictionMatrix> {
        (0..self.knots.len()).map(|i| self.knot(i)).collect()
    }

    /// Progress range `[t_first, t_last]` covered by kept checkpoints.
    pub fn range(&self) -> (f64, f64) {
        (self.knot_progress[0], self.knot_progress[self.knot_progress.len() - 1])
    }

    /// Fraction of base checkpoints removed by the monotonicity filter.
    pub fn dropped_fraction(&self) -> f64 {
        let dropped = self.kept_mask.iter().filter(|k| !**k).count();
        dropped as f64 / self.kept_mask.len() as f64
    }
}

/// Reindexes a trajectory by progress and samples it on `grid_size` uniform
/// values in `[0, 1]`.
pub fn reindex(
    traj: Trajectory,
    p0: &PredictionMatrix,
    pstar: &PredictionMatrix,
    grid_size: usize,
    options: ProgressOptions,
) -> Result<ReindexedCurve> {
    if grid_size < 2 {
        return Err(Error::Reindex(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    let frame = ProgressFrame::new(p0.clone(), pstar.clone(), options)?;
    ensure_same_shape(&traj.checkpoints[0], p0)?;
    let base = traj.with_progress(&frame)?;
    ReindexedCurve::from_progress(base, uniform_grid(0.0, 1.0, grid_size))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajDistanceOptions {
    /// Grid size used when the curves have to be re-gridded.
    pub grid_points: usize,
}

impl Default for TrajDistanceOptions {
    fn default() -> Self {
        Self { grid_points: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajDistance {
    /// Integral divided by the width of the integration range.
    pub value: f64,
    /// Trapezoid integral of the Bhattacharyya distance over `range`.
    pub raw: f64,
    pub range: (f64, f64),
    pub grid_points: usize,
    /// Whether the curves were re-sampled on the intersection of their ranges.
    pub regridded: bool,
}

/// Integrated Bhattacharyya distance between two curves at equal progress.
pub fn traj_distance(
    a: &ReindexedCurve,
    b: &ReindexedCurve,
    options: TrajDistanceOptions,
) -> Result<TrajDistance> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "curves have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let fully_covered = |c: &ReindexedCurve| c.clamped.iter().all(|f| !f);
    let (grid, pa, pb, regridded) = if a.grid == b.grid && fully_covered(a) && fully_covered(b) {
        (a.grid.clone(), a.points.clone(), b.points.clone(), false)
    } else {
        let (a_lo, a_hi) = a.range();
        let (b_lo, b_hi) = b.range();
        let lo = a_lo.max(b_lo);
        let hi = a_hi.min(b_hi);
        if !(lo < hi) {
            return Err(Error::Reindex(format!(
                "progress ranges [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}] do not overlap"
            )));
        }
        let grid = uniform_grid(lo, hi, options.grid_points.max(2));
        let eval = |c: &ReindexedCurve| {
            grid.iter()
                .map(|&t| c.at(t).map(|(p, _)| p))
                .collect::<Result<Vec<_>>>()
        };
        let pa = eval(a)?;
        let pb = eval(b)?;
        (grid, pa, pb, true)
    };
    let d = par::map_indexed(grid.len(), |i| bhattacharyya(&pa[i], &pb[i]).map(|d| d.aggregate))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let raw = trapezoid(&grid, &d);
    let width = grid[grid.len() - 1] - grid[0];
    let value = if width > 0.0 { raw / width } else { d[0] };
    Ok(TrajDistance {
        value,
        raw,
        range: (grid[0], grid[grid.len() - 1]),
        grid_points: grid.len(),
        regridded,
    })
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthOptions {
    /// Points in the first discretization.
    pub initial_points: usize,
    /// Upper bound on the number of points after doubling.
    pub max_points: usize,
    /// Relative change between successive doublings accepted as converged.
    pub rel_tol: f64,
}

impl Default for LengthOptions {
    fn default() -> Self {
        Self {
            initial_points: (1 << 6) + 1,
            max_points: (1 << 14) + 1,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannLength {
    pub value: f64,
    /// Number of points in the final discretization.
    pub points: usize,
    /// False when refinement hit `max_points` without settling; the value is
    /// then unstable.
    pub converged: bool,
}

/// Length of a reindexed curve over its covered progress range, as the sum of
/// `2 sqrt(d_B)` over successively finer grids.
pub fn riemann_length(curve: &ReindexedCurve, options: LengthOptions) -> Result<RiemannLength> {
    let (lo, hi) = curve.range();
    riemann_length_of(|s| curve.at(lo + (hi - lo) * s).map(|(p, _)| p), options)
}

/// Length of the geodesic segment, by the same discretization as
/// [`riemann_length`].
pub fn geodesic_length(seg: &GeodesicSegment, options: LengthOptions) -> Result<RiemannLength> {
    riemann_length_of(|s| seg.point(s), options)
}

/// Closed-form length `sqrt(2/N) * ||d_G||_2` of a geodesic segment under the
/// same line element.
pub fn geodesic_length_closed_form(seg: &GeodesicSegment) -> f64 {
    let n = seg.half_angles().len() as f64;
    let norm = seg.half_angles().iter().map(|a| a * a).sum::<f64>().sqrt();
    (2.0 / n).sqrt() * norm
}

fn riemann_length_of<F>(eval: F, options: LengthOptions) -> Result<RiemannLength>
where
    F: Fn(f64) -> Result<PredictionMatrix> + Sync + Send,
{
    let discretized = |m: usize| -> Result<f64> {
        let points = par::map_indexed(m, |i| eval(grid_value(i, m)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let steps = par::map_indexed(m - 1, |i| {
            bhattacharyya(&points[i], &points[i + 1]).map(|d| 2.0 * d.aggregate.sqrt())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(steps.iter().sum())
    };
    let mut m = options.initial_points.max(2);
    let mut previous = discretized(m)?;
    loop {
        let next_m = 2 * (m - 1) + 1;
        if next_m > options.max_points {
            return Ok(RiemannLength {
                value: previous,
                points: m,
                converged: false,
            });
        }
        let current = discretized(next_m)?;
        if !current.is_finite() {
            return Err(Error::Numerical("curve length is not finite".into()));
        }
        if (current - previous).abs() <= options.rel_tol * current.abs() {
            return Ok(RiemannLength {
                value: current,
                points: next_m,
                converged: true,
            });
        }
        previous = current;
        m = next_m;
    }
}
