//! Derivative-free minimization of a scalar function on an interval.

/// Result of a bounded scalar minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9; // (sqrt(5) - 1) / 2

/// Minimizes `f` on `[lo, hi]`.
///
/// The objective need not be unimodal: a uniform grid of `grid_points` values
/// picks the best cell, golden-section search refines inside the two cells
/// around it until the bracket is narrower than `tol`, and the interval
/// endpoints are kept as candidates so boundary minima are returned exactly.
pub fn grid_golden_section<F>(mut f: F, lo: f64, hi: f64, grid_points: usize, tol: f64) -> ScalarMinimum
where
    F: FnMut(f64) -> f64,
{
    assert!(hi >= lo, "empty interval");
    let m = grid_points.max(3);
    let at = |i: usize| {
        if i + 1 == m {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (m - 1) as f64
        }
    };
    let values: Vec<f64> = (0..m).map(|i| f(at(i))).collect();
    let mut evaluations = m;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < values[b] { i } else { b });

    let mut a = at(best.saturating_sub(1));
    let mut b = at((best + 1).min(m - 1));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    evaluations += 2;
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    let mut result = if fc < fd {
        ScalarMinimum { x: c, value: fc, evaluations }
    } else {
        ScalarMinimum { x: d, value: fd, evaluations }
    };
    // Grid values (including both interval ends) win ties against interior
    // refinements.
    if values[best] <= result.value {
        result.x = at(best);
        result.value = values[best];
    }
    result.evaluations = evaluations;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_smooth_interior_minimum() {
        let r = grid_golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 33, 1e-9);
        assert!((r.x - 0.3).abs() < 1e-6);
    }

    #[test]
    fn finds_kink_minimum() {
        let r = grid_golden_section(|x| (x - 0.123_456).abs(), 0.0, 1.0, 33, 1e-9);
        assert!((r.x - 0.123_456).abs() < 1e-8);
    }

    #[test]
    fn boundary_minima_are_exact() {
        assert_eq!(grid_golden_section(|x| x, 0.0, 1.0, 33, 1e-6).x, 0.0);
        assert_eq!(grid_golden_section(|x| -x, 0.0, 1.0, 33, 1e-6).x, 1.0);
    }

    #[test]
    fn escapes_local_minimum_with_grid() {
        // Local minimum near 0.1, global near 0.8.
        let f = |x: f64| ((x - 0.1).powi(2) + 0.05).min((x - 0.8).powi(2));
        let r = grid_golden_section(f, 0.0, 1.0, 33, 1e-8);
        assert!((r.x - 0.8).abs() < 1e-6);
    }
}
