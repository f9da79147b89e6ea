//! Symmetric eigensolvers used by InPCA.
//!
//! Small and medium problems use a dense decomposition. Large ones use
//! Lanczos iteration with full reorthogonalization, run once on the operator
//! and once on its negation so both ends of the spectrum are found.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Eigenpairs; `vectors[i]` belongs to `values[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenPairs {
    /// Sorts by descending magnitude, breaking ties by ascending eigenvalue
    /// order, and fixes each vector's sign so its largest-magnitude component
    /// is positive.
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        order.sort_by(|&a, &b| self.values[b].abs().total_cmp(&self.values[a].abs()));
        self.values = order.iter().map(|&i| self.values[i]).collect();
        self.vectors = order.iter().map(|&i| std::mem::take(&mut self.vectors[i])).collect();
        for v in &mut self.vectors {
            let pivot = v
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |best, (i, &x)| match best {
                    Some((_, b)) if x.abs() <= b => best,
                    _ => Some((i, x.abs())),
                });
            if let Some((i, _)) = pivot {
                if v[i] < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
        }
    }
}

/// Full decomposition of a dense symmetric matrix.
pub fn dense_symmetric_eigen(w: &DMatrix<f64>) -> EigenPairs {
    let eig = SymmetricEigen::new(w.clone());
    let n = w.nrows();
    let values = eig.eigenvalues.iter().copied().collect();
    let vectors = (0..n)
        .map(|i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let mut pairs = EigenPairs { values, vectors };
    pairs.canonicalize();
    pairs
}

/// A symmetric linear operator known only through matrix-vector products.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }
}

struct Negated<'a, O: ?Sized>(&'a O);

impl<O: SymmetricOperator + ?Sized> SymmetricOperator for Negated<'_, O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.0.apply(x, y)?;
        y.iter_mut().for_each(|v| *v = -*v);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosOptions {
    /// Relative residual accepted for each wanted Ritz pair.
    pub tol: f64,
    /// Seed of the start vector.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `k` algebraically largest eigenpairs of `op`.
pub fn lanczos_largest<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    options: LanczosOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("cannot compute {k} eigenpairs of a {n}x{n} operator")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut m = n.min((2 * k + 20).max(40));
    loop {
        let (values, vectors, residuals, exhausted) = lanczos_run(op, &start, m)?;
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let wanted = k.min(values.len());
        let converged = residuals[..wanted].iter().all(|r| *r <= options.tol * scale);
        if converged || exhausted || m == n {
            let mut values = values;
            let mut vectors = vectors;
            values.truncate(wanted);
            vectors.truncate(wanted);
            // An exhausted Krylov space misses only eigenvalues orthogonal to
            // the start vector; they are reported as zero.
            while values.len() < k {
                values.push(0.0);
                vectors.push(vec![0.0; n]);
            }
            return Ok(EigenPairs { values, vectors });
        }
        m = n.min(2 * m);
    }
}

/// Ritz values (descending), Ritz vectors, residual norms, and whether the
/// Krylov space became invariant before `m` steps.
#[allow(clippy::type_complexity)]
fn lanczos_run<O: SymmetricOperator + ?Sized>(
    op: &O,
    start: &[f64],
    m: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>, bool)> {
    let n = op.dim();
    let norm = dot(start, start).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / norm).collect()];
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let mut w = vec![0.0; n];
    let mut exhausted = false;
    let mut last_beta = 0.0;
    for j in 0..m {
        op.apply(&basis[j], &mut w)?;
        let a = dot(&basis[j], &w);
        alpha.push(a);
        for (wi, qi) in w.iter_mut().zip(&basis[j]) {
            *wi -= a * qi;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, qi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= b * qi;
            }
        }
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = dot(&w, &w).sqrt();
        let scale = alpha.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        if j + 1 == m {
            last_beta = b;
            break;
        }
        if b <= 1e-12 * scale {
            exhausted = true;
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let size = alpha.len();
    let mut t = DMatrix::zeros(size, size);
    for i in 0..size {
        t[(i, i)] = alpha[i];
        if i + 1 < size {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec::with_capacity(size);
    let mut vectors = Vec::with_capacity(size);
    let mut residuals = Vec::with_capacity(size);
    for &i in &order {
        let y = eig.eigenvectors.column(i);
        let mut x = vec![0.0; n];
        for (q, &c) in basis.iter().zip(y.iter()) {
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi += c * qi;
            }
        }
        let xn = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= xn);
        values.push(eig.eigenvalues[i]);
        vectors.push(x);
        residuals.push(if exhausted { 0.0 } else { (last_beta * y[size - 1]).abs() });
    }
    Ok((values, vectors, residuals, exhausted))
}

/// The `k` eigenpairs of largest magnitude, from one Lanczos run on `op` and
/// one on `-op`.
pub fn lanczos_top_magnitude<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    options: LanczosOptions,
) -> Result<EigenPairs> {
    let upper = lanczos_largest(op, k, options)?;
    let lower = lanczos_largest(&Negated(op), k, options)?;
    let mut values = Vec::with_capacity(2 * k);
    let mut vectors = Vec::with_capacity(2 * k);
    for (v, x) in upper.values.into_iter().zip(upper.vectors) {
        if v > 0.0 {
            values.push(v);
            vectors.push(x);
        }
    }
    for (v, x) in lower.values.into_iter().zip(lower.vectors) {
        if v > 0.0 {
            values.push(-v);
            vectors.push(x);
        }
    }
    let mut pairs = EigenPairs { values, vectors };
    pairs.canonicalize();
    pairs.values.truncate(k);
    pairs.vectors.truncate(k);
    while pairs.values.len() < k {
        pairs.values.push(0.0);
        pairs.vectors.push(vec![0.0; op.dim()]);
    }
    Ok(pairs)
}
