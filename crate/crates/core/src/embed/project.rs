//! Random stochastic projection of the class axis.
//!
//! Each sample's distribution over `C` classes is mapped to a distribution
//! over `C'` pseudo-classes by a stochastic matrix, which shrinks the cost of
//! every pairwise distance when `C` is large.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::PredictionMatrix;

/// Tolerance on the row sums of a supplied projection matrix.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Identifier of the generator used for random maps, recorded in metadata.
pub const RNG_ALGORITHM: &str = "chacha20";

/// `C x C'` matrix whose rows are distributions; a model `P` maps to `P M`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMap {
    c_in: usize,
    c_out: usize,
    rows: Vec<f64>,
    seed: Option<u64>,
}

impl StochasticMap {
    /// `C x C'`, row-major, every row summing to 1.
    pub fn from_row_stochastic(c_in: usize, c_out: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != c_in * c_out || c_in == 0 || c_out < 2 {
            return Err(Error::Dimension(format!(
                "a {c_in}x{c_out} projection needs {} entries and at least 2 outputs, got {}",
                c_in * c_out,
                rows.len()
            )));
        }
        for (i, row) in rows.chunks_exact(c_out).enumerate() {
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Validation(format!(
                    "projection row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Validation(format!(
                    "projection row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            c_in,
            c_out,
            rows,
            seed: None,
        })
    }

    /// `C' x C`, row-major, every column summing to 1; applied as `M p` to
    /// each sample, which is the transpose of the row convention.
    pub fn from_column_stochastic(c_out: usize, c_in: usize, cols: Vec<f64>) -> Result<Self> {
        if cols.len() != c_in * c_out {
            return Err(Error::Dimension(format!(
                "a {c_out}x{c_in} projection needs {} entries, got {}",
                c_in * c_out,
                cols.len()
            )));
        }
        let rows = (0..c_in * c_out)
            .map(|k| cols[(k % c_out) * c_in + k / c_out])
            .collect();
        Self::from_row_stochastic(c_in, c_out, rows)
    }

    /// Rows drawn independently from a symmetric Dirichlet(1).
    pub fn random(c_in: usize, c_out: usize, seed: u64) -> Result<Self> {
        if c_in == 0 || c_out < 2 {
            return Err(Error::Dimension(format!(
                "cannot draw a {c_in}x{c_out} projection"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(c_in * c_out);
        for _ in 0..c_in {
            // Normalised unit exponentials are Dirichlet(1, ..., 1).
            let draws: Vec<f64> = (0..c_out)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let sum: f64 = draws.iter().sum();
            rows.extend(draws.iter().map(|x| x / sum));
        }
        Ok(Self {
            c_in,
            c_out,
            rows,
            seed: Some(seed),
        })
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn as_row_stochastic(&self) -> &[f64] {
        &self.rows
    }
}

/// Maps every sample distribution through `map`.
pub fn project_classes(p: &PredictionMatrix, map: &StochasticMap) -> Result<PredictionMatrix> {
    if p.n_classes() != map.c_in {
        return Err(Error::Dimension(format!(
            "projection expects {} classes, model has {}",
            map.c_in,
            p.n_classes()
        )));
    }
    let c_out = map.c_out;
    let mut out = vec![0.0; p.n_samples() * c_out];
    for (row, dst) in p.rows().zip(out.chunks_exact_mut(c_out)) {
        for (pc, m) in row.iter().zip(map.rows.chunks_exact(c_out)) {
            for (d, x) in dst.iter_mut().zip(m) {
                *d += pc * x;
            }
        }
    }
    PredictionMatrix::new(p.n_samples(), c_out, out)
}
