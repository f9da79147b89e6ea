//! Fisher-Rao geodesics between two models.
//!
//! Under the square-root map every sample's distribution is a point on the
//! positive orthant of a unit sphere, and the geodesic between two models is
//! the product of the per-sample great circles.

use crate::error::{Error, Result};
use crate::model::{great_circle_half, ensure_same_shape, PredictionMatrix};

/// Below this per-sample half-angle the great-circle formula is replaced by
/// linear interpolation of the square roots.
pub const EPS_ANGLE: f64 = 1e-8;

/// Largest row-sum drift tolerated after squaring an interpolated point.
const MAX_DRIFT: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct GeodesicSegment {
    u: PredictionMatrix,
    v: PredictionMatrix,
    half_angles: Vec<f64>,
    // Unit-normalised square roots of both endpoints, and the angle between
    // them; only used for interpolation.
    sqrt_u: Vec<f64>,
    sqrt_v: Vec<f64>,
    angles: Vec<f64>,
}

impl GeodesicSegment {
    pub fn new(u: PredictionMatrix, v: PredictionMatrix) -> Result<Self> {
        ensure_same_shape(&u, &v)?;
        let half_angles = great_circle_half(&u, &v)?.per_sample;
        let sqrt_u = unit_sqrt_rows(&u);
        let sqrt_v = unit_sqrt_rows(&v);
        let c = u.n_classes();
        let angles = sqrt_u
            .chunks_exact(c)
            .zip(sqrt_v.chunks_exact(c))
            .map(|(a, b)| {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                dot.clamp(0.0, 1.0).acos()
            })
            .collect();
        Ok(Self {
            u,
            v,
            half_angles,
            sqrt_u,
            sqrt_v,
            angles,
        })
    }

    pub fn endpoint_u(&self) -> &PredictionMatrix {
        &self.u
    }

    pub fn endpoint_v(&self) -> &PredictionMatrix {
        &self.v
    }

    /// Per-sample half great-circle angles between the endpoints.
    pub fn half_angles(&self) -> &[f64] {
        &self.half_angles
    }

    pub(crate) fn unit_sqrt_u(&self) -> &[f64] {
        &self.sqrt_u
    }

    pub(crate) fn unit_sqrt_v(&self) -> &[f64] {
        &self.sqrt_v
    }

    /// Angles between the unit-normalised square-root rows.
    pub(crate) fn interpolation_angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn reversed(&self) -> Self {
        Self {
            u: self.v.clone(),
            v: self.u.clone(),
            half_angles: self.half_angles.clone(),
            sqrt_u: self.sqrt_v.clone(),
            sqrt_v: self.sqrt_u.clone(),
            angles: self.angles.clone(),
        }
    }

    /// Model at fraction `lambda` of the way from `u` to `v`.
    pub fn point(&self, lambda: f64) -> Result<PredictionMatrix> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!(
                "geodesic parameter {lambda} is outside [0, 1]"
            )));
        }
        if lambda == 0.0 {
            return Ok(self.u.clone());
        }
        if lambda == 1.0 {
            return Ok(self.v.clone());
        }
        let (n, c) = self.u.shape();
        let mut probs = vec![0.0; n * c];
        for (s, out) in probs.chunks_exact_mut(c).enumerate() {
            let su = &self.sqrt_u[s * c..(s + 1) * c];
            let sv = &self.sqrt_v[s * c..(s + 1) * c];
            let (a, b) = interpolation_weights(self.angles[s], lambda);
            for ((o, x), y) in out.iter_mut().zip(su).zip(sv) {
                let r = a * x + b * y;
                *o = r * r;
            }
            let sum: f64 = out.iter().sum();
            let small = self.angles[s] < EPS_ANGLE;
            if !small && (sum - 1.0).abs() > MAX_DRIFT {
                return Err(Error::Internal(format!(
                    "geodesic point at sample {s} has row sum {sum}"
                )));
            }
            out.iter_mut().for_each(|o| *o /= sum);
        }
        Ok(PredictionMatrix::from_parts(n, c, probs))
    }

    /// `m` points at uniformly spaced parameters `0, 1/(m-1), ..., 1`.
    pub fn grid(&self, m: usize) -> Result<Vec<PredictionMatrix>> {
        if m < 2 {
            return Err(Error::Domain(format!(
                "a geodesic grid needs at least 2 points, got {m}"
            )));
        }
        (0..m)
            .map(|i| self.point(grid_value(i, m)))
            .collect()
    }

    /// Largest per-sample gap between the half-angles `u -> mid` and
    /// `mid -> v`; zero for an exact geodesic.
    pub fn midpoint_equidistance(&self) -> Result<f64> {
        let mid = self.point(0.5)?;
        let left = great_circle_half(&self.u, &mid)?.per_sample;
        let right = great_circle_half(&mid, &self.v)?.per_sample;
        Ok(left
            .iter()
            .zip(&right)
            .map(|(l, r)| (l - r).abs())
            .fold(0.0, f64::max))
    }
}

/// `i / (m - 1)` with exact endpoints.
pub(crate) fn grid_value(i: usize, m: usize) -> f64 {
    if i + 1 == m {
        1.0
    } else {
        i as f64 / (m - 1) as f64
    }
}

/// Weights on `sqrt(u)` and `sqrt(v)` at parameter `lambda`.
///
/// For small angles this is plain linear interpolation; callers renormalise.
#[inline]
pub(crate) fn interpolation_weights(angle: f64, lambda: f64) -> (f64, f64) {
    if angle < EPS_ANGLE {
        (1.0 - lambda, lambda)
    } else {
        let s = angle.sin();
        (((1.0 - lambda) * angle).sin() / s, (lambda * angle).sin() / s)
    }
}

/// Square roots of each row, scaled to unit Euclidean norm.
pub(crate) fn unit_sqrt_rows(p: &PredictionMatrix) -> Vec<f64> {
    let mut out = p.sqrt_entries();
    for row in out.chunks_exact_mut(p.n_classes()) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }
    out
}
