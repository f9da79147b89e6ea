//! InPCA: isometric embedding of a set of models.
//!
//! The pairwise Bhattacharyya matrix is double-centred and eigendecomposed.
//! Eigenvalues may be negative, so the embedding lives in a space with a
//! signed (Minkowski) metric; with all coordinates kept, signed squared
//! coordinate differences reproduce every pairwise distance.

pub mod eigen;
pub mod pairwise;
pub mod project;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use eigen::{dense_symmetric_eigen, lanczos_top_magnitude, EigenPairs};
pub use eigen::{LanczosOptions, SymmetricOperator};
pub use pairwise::{
    pairwise_bhattacharyya, pairwise_bhattacharyya_store, DiskDistances, DistanceRows, DistanceStore, FileModels,
    ModelSource,
};
pub use project::{project_classes, StochasticMap};

/// Tolerance on `|D_uv - D_vu|`.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Symmetric `n x n` matrix of pairwise distances with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Full row-major matrix.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for {n}x{n}, got {}",
                n * n,
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let x = data[i * n + j];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::Validation(format!(
                        "entry ({i}, {j}) = {x} is not a non-negative number"
                    )));
                }
                if (x - data[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(Error::Validation(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ: {x} vs {}",
                        data[j * n + i]
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Builds the matrix from its strict upper triangle, row-major.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Dimension(format!(
                "expected {} upper-triangle entries for n = {n}, got {}",
                n * n.saturating_sub(1) / 2,
                upper.len()
            )));
        }
        let mut data = vec![0.0; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let x = *it.next().unwrap();
                data[i * n + j] = x;
                data[j * n + i] = x;
            }
        }
        Self::new(n, data)
    }

    pub(crate) fn from_parts(n: usize, data: Vec<f64>) -> Self {
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }

    /// Reorders models: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let data = (0..n * n)
            .map(|k| self.get(perm[k / n], perm[k % n]))
            .collect();
        Self { n, data }
    }
}

/// `W = -L D L / 2` with the centring matrix `L = I - 11^T / n`.
pub fn double_center(d: &DistanceMatrix) -> DMatrix<f64> {
    let n = d.n();
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| -0.5 * (d.get(i, j) - row_means[i] - row_means[j] + grand))
}

/// `chi_k = 1 - sqrt(sum_{i>k} l_i^2 / sum_i l_i^2)` for eigenvalues sorted by
/// descending magnitude. All-zero spectra count as perfectly explained.
pub fn explained_stress(eigenvalues: &[f64], k: usize) -> Result<f64> {
    if k > eigenvalues.len() {
        return Err(Error::Domain(format!(
            "k = {k} exceeds the {} available eigenvalues",
            eigenvalues.len()
        )));
    }
    let total: f64 = eigenvalues.iter().map(|l| l * l).sum();
    if total == 0.0 {
        return Ok(1.0);
    }
    let tail: f64 = eigenvalues[k..].iter().map(|l| l * l).sum();
    Ok(1.0 - (tail / total).sqrt())
}

/// Stress from the leading eigenvalues and the squared Frobenius norm of `W`.
fn stress_from_total(leading: &[f64], total: f64, k: usize) -> f64 {
    if total == 0.0 {
        return 1.0;
    }
    let head: f64 = leading[..k].iter().map(|l| l * l).sum();
    1.0 - ((total - head).max(0.0) / total).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InpcaOptions {
    /// Largest `n` handled by a dense decomposition.
    pub dense_limit: usize,
    pub lanczos: LanczosOptions,
}

impl Default for InpcaOptions {
    fn default() -> Self {
        Self {
            dense_limit: 5000,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Signed-coordinate embedding of `n` models in `k` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    n: usize,
    k: usize,
    coords: Vec<f64>,
    signature: Vec<i8>,
    eigenvalues: Vec<f64>,
    stress_curve: Vec<f64>,
    trivial: bool,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Coordinates of model `u`.
    pub fn coords(&self, u: usize) -> &[f64] {
        &self.coords[u * self.k..(u + 1) * self.k]
    }

    pub fn coords_flat(&self) -> &[f64] {
        &self.coords
    }

    /// `+1` or `-1` per coordinate.
    pub fn signature(&self) -> &[i8] {
        &self.signature
    }

    /// Eigenvalues sorted by descending magnitude; all `n` for dense
    /// decompositions, the leading `k` otherwise.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `stress_curve[j]` is the explained stress of the leading `j + 1`
    /// coordinates.
    pub fn stress_curve(&self) -> &[f64] {
        &self.stress_curve
    }

    /// True when every eigenvalue vanished (all models identical).
    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// `sum_i s_i (X_u^i - X_v^i)^2` over the first `dims` coordinates.
    pub fn signed_sq_distance(&self, u: usize, v: usize, dims: usize) -> f64 {
        let (a, b) = (self.coords(u), self.coords(v));
        (0..dims.min(self.k))
            .map(|i| f64::from(self.signature[i]) * (a[i] - b[i]).powi(2))
            .sum()
    }

    pub fn from_parts(
        n: usize,
        k: usize,
        coords: Vec<f64>,
        signature: Vec<i8>,
        eigenvalues: Vec<f64>,
        stress_curve: Vec<f64>,
    ) -> Result<Self> {
        if coords.len() != n * k || signature.len() != k {
            return Err(Error::Dimension(format!(
                "embedding {n}x{k} has {} coordinates and {} signs",
                coords.len(),
                signature.len()
            )));
        }
        let trivial = eigenvalues.iter().all(|&l| l == 0.0);
        Ok(Self {
            n,
            k,
            coords,
            signature,
            eigenvalues,
            stress_curve,
            trivial,
        })
    }
}

fn embedding_from_pairs(n: usize, k: usize, pairs: &EigenPairs, stress_curve: Vec<f64>) -> Embedding {
    let max = pairs.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let zero_tol = 1e-12 * max;
    let mut coords = vec![0.0; n * k];
    let mut signature = Vec::with_capacity(k);
    for i in 0..k {
        let l = pairs.values[i];
        if l.abs() <= zero_tol {
            signature.push(1);
            continue;
        }
        signature.push(if l > 0.0 { 1 } else { -1 });
        let s = l.abs().sqrt();
        for u in 0..n {
            coords[u * k + i] = pairs.vectors[i][u] * s;
        }
    }
    Embedding {
        n,
        k,
        coords,
        signature,
        eigenvalues: pairs.values.clone(),
        stress_curve,
        trivial: max == 0.0,
    }
}

/// InPCA embedding of a distance matrix in `k` signed coordinates.
pub fn inpca(d: &DistanceMatrix, k: usize, options: InpcaOptions) -> Result<Embedding> {
    let n = d.n();
    check_k(n, k)?;
    if n <= options.dense_limit {
        let w = double_center(d);
        let pairs = dense_symmetric_eigen(&w);
        let stress = (1..=n)
            .map(|j| explained_stress(&pairs.values, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(embedding_from_pairs(n, k, &pairs, stress))
    } else {
        inpca_iterative(d, k, options)
    }
}

/// InPCA on any row-accessible distance store (for example one spilled to
/// disk), using the dense path only when the store is in memory and small.
pub fn inpca_store(store: &DistanceStore, k: usize, options: InpcaOptions) -> Result<Embedding> {
    match store {
        DistanceStore::Memory(d) => inpca(d, k, options),
        DistanceStore::Disk(_) => inpca_iterative(store, k, options),
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!(
            "embedding dimension {k} must be in 1..={n}"
        )));
    }
    Ok(())
}

/// Top-`k` InPCA through matrix-free products with the centred matrix.
pub fn inpca_iterative<R: DistanceRows + ?Sized>(rows: &R, k: usize, options: InpcaOptions) -> Result<Embedding> {
    let n = rows.n();
    check_k(n, k)?;
    let op = CenteredOperator::new(rows)?;
    let pairs = lanczos_top_magnitude(&op, k, options.lanczos)?;
    let total = op.frobenius_sq()?;
    let stress = (1..=k).map(|j| stress_from_total(&pairs.values, total, j)).collect();
    Ok(embedding_from_pairs(n, k, &pairs, stress))
}

/// `x -> -L D L x / 2`, streaming rows of `D`.
struct CenteredOperator<'a, R: ?Sized> {
    rows: &'a R,
    row_means: Vec<f64>,
    grand: f64,
}

impl<'a, R: DistanceRows + ?Sized> CenteredOperator<'a, R> {
    fn new(rows: &'a R) -> Result<Self> {
        let n = rows.n();
        let mut buf = vec![0.0; n];
        let mut row_means = Vec::with_capacity(n);
        for i in 0..n {
            rows.row_into(i, &mut buf)?;
            row_means.push(buf.iter().sum::<f64>() / n as f64);
        }
        let grand = row_means.iter().sum::<f64>() / n as f64;
        Ok(Self {
            rows,
            row_means,
            grand,
        })
    }

    fn frobenius_sq(&self) -> Result<f64> {
        let n = self.rows.n();
        let mut buf = vec![0.0; n];
        let mut total = 0.0;
        for i in 0..n {
            self.rows.row_into(i, &mut buf)?;
            for (j, d) in buf.iter().enumerate() {
                let w = -0.5 * (d - self.row_means[i] - self.row_means[j] + self.grand);
                total += w * w;
            }
        }
        Ok(total)
    }
}

impl<R: DistanceRows + ?Sized> SymmetricOperator for CenteredOperator<'_, R> {
    fn dim(&self) -> usize {
        self.rows.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.rows.n();
        let mx = x.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = x.iter().map(|v| v - mx).collect();
        let mut buf = vec![0.0; n];
        for (i, yi) in y.iter_mut().enumerate() {
            self.rows.row_into(i, &mut buf)?;
            *yi = buf.iter().zip(&centred).map(|(a, b)| a * b).sum();
        }
        let my = y.iter().sum::<f64>() / n as f64;
        y.iter_mut().for_each(|v| *v = -0.5 * (*v - my));
        Ok(())
    }
}
