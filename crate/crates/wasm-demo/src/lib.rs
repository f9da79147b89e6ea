//! Browser bindings for three interactive views: a geodesic on the
//! three-class simplex, the progress of a training run, and an InPCA
//! embedding of related training runs.

use taskgeo::embed::{inpca, pairwise_bhattacharyya, InpcaOptions};
use taskgeo::synth::{
    gen_task, related_tasks_experiment, train_trajectory, LogisticTrainer, RelatedTasksConfig, SyntheticTaskSpec,
};
use taskgeo::trajectory::{ProgressFrame, ProgressOptions};
use taskgeo::{GeodesicSegment, PredictionMatrix};
use wasm_bindgen::prelude::*;

fn normalize(v: &[f64]) -> Result<Vec<f64>, String> {
    if v.len() != 3 || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("expected three non-negative weights".into());
    }
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return Err("weights sum to zero".into());
    }
    Ok(v.iter().map(|x| x / s).collect())
}

/// `points` distributions along the geodesic from `p` to `q`, flattened.
pub fn simplex_geodesic_points(p: &[f64], q: &[f64], points: usize) -> Result<Vec<f64>, String> {
    let p = PredictionMatrix::new(1, 3, normalize(p)?).map_err(|e| e.to_string())?;
    let q = PredictionMatrix::new(1, 3, normalize(q)?).map_err(|e| e.to_string())?;
    let seg = GeodesicSegment::new(p, q).map_err(|e| e.to_string())?;
    Ok(seg
        .grid(points.max(2))
        .map_err(|e| e.to_string())?
        .iter()
        .flat_map(|m| m.as_slice().to_vec())
        .collect())
}

/// `(step, progress, loss)` triples for one logistic-regression run.
pub fn training_progress(classes: usize, steps: usize, seed: u64) -> Result<Vec<f64>, String> {
    let spec = SyntheticTaskSpec {
        n_classes: classes,
        n_samples: 100 * classes,
        input_dim: 8,
        mean_scale: 1.5,
        scale: 1.0,
        seed,
    };
    let task = gen_task(&spec).map_err(|e| e.to_string())?;
    let trainer = LogisticTrainer {
        steps,
        checkpoint_every: (steps / 40).max(1),
        ..LogisticTrainer::default()
    };
    let run = train_trajectory(&task, &trainer).map_err(|e| e.to_string())?;
    let frame = ProgressFrame::for_labels(&run.test_labels, ProgressOptions::default()).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(run.steps.len() * 3);
    for (step, p) in run.steps.iter().zip(&run.checkpoints) {
        out.push(*step as f64);
        out.push(frame.progress(p).map_err(|e| e.to_string())?);
        out.push(run.losses[*step]);
    }
    Ok(out)
}

/// Two-dimensional InPCA view of related training runs.
#[wasm_bindgen]
pub struct RelatedView {
    coords: Vec<f64>,
    tasks: Vec<u32>,
    progress: Vec<f64>,
    signature: Vec<i8>,
    stress: Vec<f64>,
}

#[wasm_bindgen]
impl RelatedView {
    /// `x, y` per model.
    pub fn coords(&self) -> Vec<f64> {
        self.coords.clone()
    }

    /// Task index per model.
    pub fn tasks(&self) -> Vec<u32> {
        self.tasks.clone()
    }

    /// Grid progress per model.
    pub fn progress(&self) -> Vec<f64> {
        self.progress.clone()
    }

    pub fn signature(&self) -> Vec<i8> {
        self.signature.clone()
    }

    /// Explained stress of the first 1, 2, 3, ... coordinates.
    pub fn stress(&self) -> Vec<f64> {
        self.stress.iter().take(10).copied().collect()
    }
}

pub fn related_view(seeds: u64, grid: usize) -> Result<RelatedView, String> {
    let mut cfg = RelatedTasksConfig {
        seeds: (1..=seeds.max(1)).collect(),
        grid_size: grid.max(2),
        ..RelatedTasksConfig::default()
    };
    // Smaller than the default so it stays interactive in a browser.
    cfg.union.n_samples = 800;
    cfg.trainer.steps = 300;
    cfg.trainer.checkpoint_every = 10;
    let run = related_tasks_experiment(&cfg).map_err(|e| e.to_string())?;
    let mut models = Vec::new();
    let mut tasks = Vec::new();
    let mut progress = Vec::new();
    for (t, (_, curves)) in run.tasks.iter().enumerate() {
        for c in curves {
            models.extend(c.points().iter().cloned());
            tasks.extend(std::iter::repeat_n(t as u32, c.points().len()));
            progress.extend_from_slice(c.grid());
        }
    }
    let d = pairwise_bhattacharyya(&models, 64).map_err(|e| e.to_string())?;
    let e = inpca(&d, 2, InpcaOptions::default()).map_err(|e| e.to_string())?;
    Ok(RelatedView {
        coords: e.coords_flat().to_vec(),
        tasks,
        progress,
        signature: e.signature().to_vec(),
        stress: e.stress_curve().to_vec(),
    })
}

#[wasm_bindgen(js_name = simplexGeodesic)]
pub fn simplex_geodesic(p: Vec<f64>, q: Vec<f64>, points: usize) -> Result<Vec<f64>, JsError> {
    simplex_geodesic_points(&p, &q, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = trainingProgress)]
pub fn training_progress_js(classes: usize, steps: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    training_progress(classes, steps, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = relatedTasks)]
pub fn related_tasks_js(seeds: u64, grid: usize) -> Result<RelatedView, JsError> {
    related_view(seeds, grid).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geodesic_hits_endpoints() {
        let pts = simplex_geodesic_points(&[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(pts.len(), 15);
        assert!((pts[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(&pts[12..], &[1.0, 0.0, 0.0]);
        assert!(simplex_geodesic_points(&[1.0, 0.0], &[0.0, 1.0, 0.0], 3).is_err());
        let still = simplex_geodesic_points(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], 3).unwrap();
        for p in still.chunks(3) {
            assert!(p.iter().zip([0.2, 0.3, 0.5]).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn progress_starts_at_zero_and_rises() {
        let out = training_progress(3, 100, 1).unwrap();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 0.0);
        let last = out[out.len() - 2];
        assert!(last > 0.5, "{last}");
    }

    #[test]
    fn related_view_shapes() {
        let v = related_view(2, 10).unwrap();
        let n = v.tasks.len();
        assert_eq!(n, 4 * 2 * 10);
        assert_eq!(v.coords.len(), 2 * n);
        assert_eq!(v.progress.len(), n);
        assert!(v.stress()[1] > 0.5);
    }
}
