//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerical routines; each oracle
//! recomputes its quantity from the definitions with plain loops.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskgeo::{LabelVector, PredictionMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random row-stochastic matrix with strictly positive entries.
pub fn random_pmat(r: &mut ChaCha8Rng, n: usize, c: usize) -> PredictionMatrix {
    let mut probs = Vec::with_capacity(n * c);
    for _ in 0..n {
        let row: Vec<f64> = (0..c).map(|_| -(1.0 - r.random::<f64>()).ln() + 1e-9).collect();
        let s: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / s));
    }
    PredictionMatrix::new(n, c, probs).unwrap()
}

pub fn random_labels(r: &mut ChaCha8Rng, n: usize, c: usize) -> LabelVector {
    // every class present when n >= c
    let mut labels: Vec<usize> = (0..n).map(|i| if i < c { i } else { r.random_range(0..c) }).collect();
    for i in (1..labels.len()).rev() {
        let j = r.random_range(0..=i);
        labels.swap(i, j);
    }
    LabelVector::new(labels, c).unwrap()
}

/// Bhattacharyya coefficient of two rows.
pub fn bc(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum()
}

/// Half great-circle angle between two rows, from the chord length of their
/// square-root embeddings, which stays accurate for nearby rows.
pub fn half_angle(p: &[f64], q: &[f64]) -> f64 {
    let chord: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum::<f64>()
        .sqrt();
    2.0 * (chord / 2.0).min(1.0).asin()
}

/// Mean over samples of `-ln BC`.
pub fn naive_bhattacharyya(p: &PredictionMatrix, q: &PredictionMatrix) -> f64 {
    let n = p.n_samples();
    (0..n).map(|i| -bc(p.row(i), q.row(i)).clamp(1e-300, 1.0).ln()).sum::<f64>() / n as f64
}

/// Root mean square over samples of the half angle.
pub fn naive_great_circle(p: &PredictionMatrix, q: &PredictionMatrix) -> f64 {
    let n = p.n_samples();
    ((0..n).map(|i| half_angle(p.row(i), q.row(i)).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues (unsorted) and eigenvectors as columns of a row-major matrix.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Double centring `-1/2 J D J` written out entrywise.
pub fn centered(d: &[f64], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    let nf = n as f64;
    for i in 0..n {
        for j in 0..n {
            let mut s = d[i * n + j];
            s -= (0..n).map(|k| d[k * n + j]).sum::<f64>() / nf;
            s -= (0..n).map(|k| d[i * n + k]).sum::<f64>() / nf;
            s += d.iter().sum::<f64>() / (nf * nf);
            w[i * n + j] = -0.5 * s;
        }
    }
    w
}

/// Unit vector maximizing `sum_n w . x_n` by random-restart hill climbing on
/// the sphere, with no use of the closed form.
pub fn brute_force_direction(xs: &[Vec<f64>], r: &mut ChaCha8Rng) -> Vec<f64> {
    let d = xs[0].len();
    let objective = |w: &[f64]| -> f64 { xs.iter().map(|x| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum() };
    let unit = |w: &mut Vec<f64>| {
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= n);
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..d).map(|_| r.random::<f64>() - 0.5).collect();
        unit(&mut w);
        let mut f = objective(&w);
        let mut step = 0.5;
        while step > 1e-9 {
            let mut improved = false;
            for _ in 0..20 * d {
                let mut cand: Vec<f64> = w.iter().map(|x| x + step * (r.random::<f64>() - 0.5)).collect();
                unit(&mut cand);
                let fc = objective(&cand);
                if fc > f {
                    w = cand;
                    f = fc;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, w));
        }
    }
    best.unwrap().1
}

/// Composite Simpson integral of `f` over `[lo, hi]` with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
    let h = (hi - lo) / m as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

/// Spearman correlation by explicit ranking (ties averaged).
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    fn rank(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Spherical interpolation of every row in square-root coordinates.
pub fn slerp_oracle(p: &PredictionMatrix, q: &PredictionMatrix, lambda: f64) -> PredictionMatrix {
    let c = p.n_classes();
    let mut out = Vec::with_capacity(p.n_samples() * c);
    for n in 0..p.n_samples() {
        let a: Vec<f64> = p.row(n).iter().map(|x| x.sqrt()).collect();
        let b: Vec<f64> = q.row(n).iter().map(|x| x.sqrt()).collect();
        let theta = half_angle(p.row(n), q.row(n));
        let (wa, wb) = if theta < 1e-12 {
            (1.0 - lambda, lambda)
        } else {
            (((1.0 - lambda) * theta).sin() / theta.sin(), (lambda * theta).sin() / theta.sin())
        };
        let row: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (wa * x + wb * y).powi(2)).collect();
        let s: f64 = row.iter().sum();
        out.extend(row.iter().map(|x| x / s));
    }
    PredictionMatrix::new(p.n_samples(), c, out).unwrap()
}

/// Dense-grid minimizer of the distance from `p` to the `p0 -> pstar` geodesic.
pub fn progress_oracle(p: &PredictionMatrix, p0: &PredictionMatrix, pstar: &PredictionMatrix, grid: usize) -> f64 {
    let mut best = (0.0, f64::INFINITY);
    for i in 0..grid {
        let lambda = i as f64 / (grid - 1) as f64;
        let d = naive_great_circle(p, &slerp_oracle(p0, pstar, lambda));
        if d < best.1 {
            best = (lambda, d);
        }
    }
    best.0
}

/// Convex mixture `(1 - eps) p + eps q`.
pub fn mix(p: &PredictionMatrix, q: &PredictionMatrix, eps: f64) -> PredictionMatrix {
    let probs = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (1.0 - eps) * a + eps * b).collect();
    PredictionMatrix::new(p.n_samples(), p.n_classes(), probs).unwrap()
}

/// Random orthogonal `d x d` matrix (row-major) by Gram-Schmidt.
pub fn random_orthogonal(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| r.random::<f64>() - 0.5).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.iter().map(|x| x / norm).collect());
        }
    }
    q.concat()
}

pub fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    m.chunks_exact(x.len()).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
