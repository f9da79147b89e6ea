//! Ensemble statistics over reindexed trajectories.

use crate::error::{Error, Result};
use crate::model::{bhattacharyya, PredictionMatrix, TaskSpec};
use crate::par;
use crate::trajectory::{traj_distance, uniform_grid, ReindexedCurve, TrajDistanceOptions};

/// Curves from several runs of one task, sampled on a common grid.
#[derive(Clone, Debug)]
pub struct TrajectoryBundle {
    curves: Vec<ReindexedCurve>,
    task: TaskSpec,
}

impl TrajectoryBundle {
    pub fn new(task: TaskSpec, curves: Vec<ReindexedCurve>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::Validation("a bundle needs at least one curve".into()))?;
        for (i, c) in curves.iter().enumerate().skip(1) {
            if c.shape() != first.shape() {
                return Err(Error::Dimension(format!(
                    "curve {i} has shape {:?}, expected {:?}",
                    c.shape(),
                    first.shape()
                )));
            }
            if c.grid() != first.grid() {
                return Err(Error::Validation(format!("curve {i} uses a different grid")));
            }
        }
        Ok(Self { curves, task })
    }

    pub fn curves(&self) -> &[ReindexedCurve] {
        &self.curves
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn grid(&self) -> &[f64] {
        self.curves[0].grid()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// The same curves re-sampled on another grid.
    pub fn regrid(&self, grid: &[f64]) -> Result<Self> {
        let curves = self
            .curves
            .iter()
            .map(|c| c.regrid(grid.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            curves,
            task: self.task.clone(),
        })
    }
}

/// Entrywise arithmetic mean of the bundle's models at every grid value.
pub fn mean_trajectory(bundle: &TrajectoryBundle) -> Result<ReindexedCurve> {
    let grid = bundle.grid().to_vec();
    let k = bundle.len() as f64;
    let (n, c) = bundle.curves[0].shape();
    let means = (0..grid.len())
        .map(|g| {
            let mut acc = vec![0.0; n * c];
            for curve in &bundle.curves {
                for (a, x) in acc.iter_mut().zip(curve.points()[g].as_slice()) {
                    *a += x;
                }
            }
            acc.iter_mut().for_each(|a| *a /= k);
            PredictionMatrix::new(n, c, acc)
        })
        .collect::<Result<Vec<_>>>()?;
    ReindexedCurve::from_knots(bundle.task.clone(), means, grid.clone(), grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeProfile {
    pub grid: Vec<f64>,
    /// Largest Bhattacharyya distance from a member to the mean, per grid value.
    pub radius: Vec<f64>,
    /// Largest trajectory distance from a member to the mean.
    pub scalar_radius: f64,
}

/// Radius of the tube around `mean` containing every curve of the bundle.
pub fn tube_radius(bundle: &TrajectoryBundle, mean: &ReindexedCurve) -> Result<TubeProfile> {
    if mean.grid() != bundle.grid() {
        return Err(Error::Validation("mean curve and bundle use different grids".into()));
    }
    let grid = bundle.grid().to_vec();
    let radius = par::map_indexed(grid.len(), |g| {
        bundle.curves.iter().try_fold(0.0f64, |r, c| {
            Ok(r.max(bhattacharyya(&c.points()[g], &mean.points()[g])?.aggregate))
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let options = TrajDistanceOptions {
        grid_points: grid.len(),
    };
    let scalar_radius = bundle.curves.iter().try_fold(0.0f64, |r, c| {
        Ok::<_, Error>(r.max(traj_distance(c, mean, options)?.value))
    })?;
    Ok(TubeProfile {
        grid,
        radius,
        scalar_radius,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizationFlag {
    Finite,
    /// Both radii vanish but the means differ.
    Infinite,
    /// Both radii vanish and the means coincide.
    ZeroOverZero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedPoint {
    pub progress: f64,
    pub value: f64,
    pub flag: NormalizationFlag,
}

/// Distance between two bundles' mean curves, divided by the average of their
/// per-progress tube radii.
pub fn normalized_distance_curve(a: &TrajectoryBundle, b: &TrajectoryBundle) -> Result<Vec<NormalizedPoint>> {
    let (a, b) = if a.grid() == b.grid() {
        (a.clone(), b.clone())
    } else {
        let (ga, gb) = (a.grid(), b.grid());
        let lo = ga[0].max(gb[0]);
        let hi = ga[ga.len() - 1].min(gb[gb.len() - 1]);
        if !(lo < hi) {
            return Err(Error::Validation("bundle grids do not overlap".into()));
        }
        let grid = uniform_grid(lo, hi, ga.len().min(gb.len()).max(2));
        (a.regrid(&grid)?, b.regrid(&grid)?)
    };
    let mean_a = mean_trajectory(&a)?;
    let mean_b = mean_trajectory(&b)?;
    let tube_a = tube_radius(&a, &mean_a)?;
    let tube_b = tube_radius(&b, &mean_b)?;
    a.grid()
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            let d = bhattacharyya(&mean_a.points()[g], &mean_b.points()[g])?.aggregate;
            let r = (tube_a.radius[g] + tube_b.radius[g]) / 2.0;
            let (value, flag) = if r > 0.0 {
                (d / r, NormalizationFlag::Finite)
            } else if d > 0.0 {
                (f64::INFINITY, NormalizationFlag::Infinite)
            } else {
                (0.0, NormalizationFlag::ZeroOverZero)
            };
            Ok(NormalizedPoint {
                progress: t,
                value,
                flag,
            })
        })
        .collect()
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Dimension(format!(
            "rank correlation needs two equally long samples of size >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&ranks(x), &ranks(y))
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Dimension("correlation needs two equally long samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("correlation of a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
