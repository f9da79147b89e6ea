//! Synthetic tasks, a logistic-regression trainer, and brute-force oracles.
//!
//! Everything here is deterministic given its seed. The generator is
//! ChaCha20 (see [`RNG_ALGORITHM`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{grid_value, GeodesicSegment};
use crate::imprint::{map_trajectory, softmax_in_place, FeatureMatrix, ImprintOptions, MappedTrajectory};
use crate::model::{great_circle_half, ignorance_model, truth_model, LabelVector, PredictionMatrix, TaskSpec};
use crate::par;
use crate::trajectory::{reindex, ProgressOptions, ReindexedCurve, Trajectory};

pub use crate::embed::project::RNG_ALGORITHM;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub n_classes: usize,
    pub n_samples: usize,
    pub input_dim: usize,
    /// Standard deviation of the class means around the origin.
    pub mean_scale: f64,
    /// Standard deviation of samples around their class mean.
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            n_samples: 800,
            input_dim: 16,
            mean_scale: 1.0,
            scale: 1.0,
            seed: 1,
        }
    }
}

/// Gaussian blobs with round-robin labels.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    pub name: String,
    /// `C x d`, row-major.
    pub class_means: Vec<f64>,
    pub inputs: FeatureMatrix,
    pub labels: LabelVector,
}

/// Draws a task: sample `n` has label `n mod C` and sits at its class mean
/// plus isotropic Gaussian noise of standard deviation `scale`.
pub fn gen_task(spec: &SyntheticTaskSpec) -> Result<SyntheticTask> {
    let (c, n, d) = (spec.n_classes, spec.n_samples, spec.input_dim);
    if c < 2 || d == 0 {
        return Err(Error::Validation(format!(
            "need at least 2 classes and 1 input dimension, got {c} and {d}"
        )));
    }
    if c > n {
        return Err(Error::Validation(format!(
            "{c} classes cannot be populated by {n} samples"
        )));
    }
    if !(spec.scale >= 0.0 && spec.mean_scale > 0.0) {
        return Err(Error::Validation("scales must be non-negative, mean scale positive".into()));
    }
    let mut r = rng(spec.seed);
    let class_means: Vec<f64> = (0..c * d)
        .map(|_| spec.mean_scale * normal(&mut r))
        .collect();
    for a in 0..c {
        for b in a + 1..c {
            if class_means[a * d..(a + 1) * d] == class_means[b * d..(b + 1) * d] {
                return Err(Error::Validation(format!("class means {a} and {b} coincide")));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut inputs = Vec::with_capacity(n * d);
    for &y in &labels {
        for j in 0..d {
            let noise = normal(&mut r);
            inputs.push(class_means[y * d + j] + spec.scale * noise);
        }
    }
    Ok(SyntheticTask {
        spec: spec.clone(),
        name: format!("blobs-c{c}-s{}", spec.seed),
        class_means,
        inputs: FeatureMatrix::new(n, d, inputs)?,
        labels: LabelVector::new(labels, c)?,
    })
}

impl SyntheticTask {
    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec::new(self.name.clone(), self.spec.n_classes)
    }

    /// Every fourth round of the round-robin labelling is held out, which
    /// keeps both splits class-balanced.
    pub fn is_held_out(&self, index: usize) -> bool {
        (index / self.spec.n_classes) % 4 == 3
    }

    pub fn split_indices(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.labels.len()).partition(|&i| !self.is_held_out(i))
    }

    pub fn train_split(&self) -> Result<(FeatureMatrix, LabelVector)> {
        self.subset(&self.split_indices().0)
    }

    pub fn test_split(&self) -> Result<(FeatureMatrix, LabelVector)> {
        self.subset(&self.split_indices().1)
    }

    fn subset(&self, rows: &[usize]) -> Result<(FeatureMatrix, LabelVector)> {
        let labels = rows.iter().map(|&i| self.labels.as_slice()[i]).collect();
        Ok((
            self.inputs.select_rows(rows)?,
            LabelVector::new(labels, self.spec.n_classes)?,
        ))
    }

    /// The task restricted to `classes`, relabelled `0..classes.len()` in the
    /// given order. Samples keep their inputs, so sub-tasks share blobs.
    pub fn subtask(&self, classes: &[usize], name: impl Into<String>) -> Result<SyntheticTask> {
        if classes.len() < 2 || classes.iter().any(|&c| c >= self.spec.n_classes) {
            return Err(Error::Validation(format!("invalid class subset {classes:?}")));
        }
        let d = self.spec.input_dim;
        let rows: Vec<usize> = (0..self.labels.len())
            .filter(|&i| classes.contains(&self.labels.as_slice()[i]))
            .collect();
        let relabel = |y: usize| classes.iter().position(|&c| c == y).unwrap();
        let labels = rows.iter().map(|&i| relabel(self.labels.as_slice()[i])).collect();
        let class_means = classes
            .iter()
            .flat_map(|&c| self.class_means[c * d..(c + 1) * d].iter().copied())
            .collect();
        let mut spec = self.spec.clone();
        spec.n_classes = classes.len();
        spec.n_samples = rows.len();
        Ok(SyntheticTask {
            spec,
            name: name.into(),
            class_means,
            inputs: self.inputs.select_rows(&rows)?,
            labels: LabelVector::new(labels, classes.len())?,
        })
    }
}

/// Weights of a bias-free multinomial logistic model, `C x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticWeights {
    pub n_classes: usize,
    pub dim: usize,
    pub w: Vec<f64>,
}

impl LogisticWeights {
    pub fn logits(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, got {}",
                self.dim,
                x.dim()
            )));
        }
        let c = self.n_classes;
        x.map_rows(c, |row, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.w[k * self.dim..(k + 1) * self.dim]
                    .iter()
                    .zip(row)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<PredictionMatrix> {
        let logits = self.logits(x)?;
        let mut probs = logits.as_slice().to_vec();
        for row in probs.chunks_exact_mut(self.n_classes) {
            softmax_in_place(row);
        }
        PredictionMatrix::new(x.n_samples(), self.n_classes, probs)
    }
}

/// Representation handed to imprinting at each checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureMap {
    /// Raw inputs (constant along training).
    Inputs,
    /// A fixed Gaussian projection of the inputs (constant along training).
    RandomProjection { dim: usize, seed: u64 },
    /// The model's own logits, which evolve along training.
    Logits,
}

impl FeatureMap {
    pub fn features(&self, weights: &LogisticWeights, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        match *self {
            FeatureMap::Inputs => Ok(x.clone()),
            FeatureMap::Logits => weights.logits(x),
            FeatureMap::RandomProjection { dim, seed } => {
                let d = x.dim();
                let mut r = rng(seed);
                let scale = 1.0 / (d as f64).sqrt();
                let proj: Vec<f64> = (0..dim * d)
                    .map(|_| scale * normal(&mut r))
                    .collect();
                x.map_rows(dim, |row, out| {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = proj[k * d..(k + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum();
                    }
                })
            }
        }
    }
}

/// Full-batch gradient descent on the softmax cross-entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticTrainer {
    pub learning_rate: f64,
    pub steps: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Standard deviation of the initial weights; zero gives the ignorance
    /// model at step 0.
    pub init_scale: f64,
    pub feature_map: FeatureMap,
}

impl Default for LogisticTrainer {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            steps: 200,
            checkpoint_every: 10,
            seed: 0,
            init_scale: 0.0,
            feature_map: FeatureMap::Inputs,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingRun {
    /// `(step, weights)` at every checkpoint, starting with step 0.
    pub snapshots: Vec<(usize, LogisticWeights)>,
    /// Full-batch loss before each update, plus the final loss.
    pub losses: Vec<f64>,
}

impl LogisticTrainer {
    pub fn fit(&self, x: &FeatureMatrix, labels: &LabelVector) -> Result<TrainingRun> {
        if x.n_samples() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} labels",
                x.n_samples(),
                labels.len()
            )));
        }
        if !(self.learning_rate > 0.0) || self.checkpoint_every == 0 {
            return Err(Error::Validation(
                "learning rate and checkpoint interval must be positive".into(),
            ));
        }
        let (c, d, n) = (labels.n_classes(), x.dim(), x.n_samples());
        let mut r = rng(self.seed);
        let mut weights = LogisticWeights {
            n_classes: c,
            dim: d,
            w: (0..c * d)
                .map(|_| {
                    if self.init_scale == 0.0 {
                        0.0
                    } else {
                        self.init_scale * normal(&mut r)
                    }
                })
                .collect(),
        };
        let mut snapshots = vec![(0, weights.clone())];
        let mut losses = Vec::with_capacity(self.steps + 1);
        let mut grad = vec![0.0; c * d];
        let mut probs = vec![0.0; c];
        for step in 0..=self.steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for (row, &y) in x.rows().zip(labels.as_slice()) {
                for (k, p) in probs.iter_mut().enumerate() {
                    *p = weights.w[k * d..(k + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum();
                }
                softmax_in_place(&mut probs);
                loss -= probs[y].max(f64::MIN_POSITIVE).ln();
                for (k, &p) in probs.iter().enumerate() {
                    let e = p - if k == y { 1.0 } else { 0.0 };
                    for (g, xi) in grad[k * d..(k + 1) * d].iter_mut().zip(row) {
                        *g += e * xi;
                    }
                }
            }
            let loss = loss / n as f64;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training diverged at step {step}")));
            }
            losses.push(loss);
            if step == self.steps {
                break;
            }
            let lr = self.learning_rate / n as f64;
            for (w, g) in weights.w.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
            if weights.w.iter().any(|w| !w.is_finite()) {
                return Err(Error::Numerical(format!("training diverged at step {}", step + 1)));
            }
            let done = step + 1;
            if done % self.checkpoint_every == 0 || done == self.steps {
                snapshots.push((done, weights.clone()));
            }
        }
        Ok(TrainingRun { snapshots, losses })
    }
}

/// Checkpoints of one training run, evaluated on the held-out split.
#[derive(Clone, Debug)]
pub struct TrainedTrajectory {
    pub task: TaskSpec,
    pub steps: Vec<usize>,
    pub checkpoints: Vec<PredictionMatrix>,
    pub features: Vec<FeatureMatrix>,
    pub test_labels: LabelVector,
    pub losses: Vec<f64>,
}

impl TrainedTrajectory {
    pub fn into_trajectory(self) -> Result<Trajectory> {
        Trajectory::new(self.task, self.checkpoints)
    }
}

/// Trains on the task's training split and records predictions and features
/// on its held-out split at every checkpoint.
pub fn train_trajectory(task: &SyntheticTask, trainer: &LogisticTrainer) -> Result<TrainedTrajectory> {
    let (train_x, train_y) = task.train_split()?;
    let (test_x, test_y) = task.test_split()?;
    let run = trainer.fit(&train_x, &train_y)?;
    let mut steps = Vec::with_capacity(run.snapshots.len());
    let mut checkpoints = Vec::with_capacity(run.snapshots.len());
    let mut features = Vec::with_capacity(run.snapshots.len());
    for (step, w) in &run.snapshots {
        steps.push(*step);
        checkpoints.push(w.predict(&test_x)?);
        features.push(trainer.feature_map.features(w, &test_x)?);
    }
    Ok(TrainedTrajectory {
        task: task.task_spec(),
        steps,
        checkpoints,
        features,
        test_labels: test_y,
        losses: run.losses,
    })
}

/// Progress by exhaustive search over `grid_n` uniformly spaced geodesic
/// points. Test oracle for [`crate::trajectory::compute_progress`].
pub fn brute_force_progress(
    p: &PredictionMatrix,
    p0: &PredictionMatrix,
    pstar: &PredictionMatrix,
    grid_n: usize,
) -> Result<f64> {
    if grid_n < 1000 {
        return Err(Error::Domain(format!("oracle grid needs at least 1000 points, got {grid_n}")));
    }
    let seg = GeodesicSegment::new(p0.clone(), pstar.clone())?;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..grid_n {
        let lambda = grid_value(i, grid_n);
        let d = great_circle_half(p, &seg.point(lambda)?)?.aggregate;
        if d < best.1 {
            best = (lambda, d);
        }
    }
    Ok(best.0)
}

/// A random model whose rows are Dirichlet(`alpha`) draws.
pub fn random_model(n_samples: usize, n_classes: usize, alpha: f64, seed: u64) -> Result<PredictionMatrix> {
    let gamma = rand_distr::Gamma::new(alpha, 1.0)
        .map_err(|e| Error::Validation(format!("invalid concentration {alpha}: {e}")))?;
    let mut r = rng(seed);
    let mut probs = Vec::with_capacity(n_samples * n_classes);
    for _ in 0..n_samples {
        let draws: Vec<f64> = (0..n_classes).map(|_| gamma.sample(&mut r).max(1e-300)).collect();
        let sum: f64 = draws.iter().sum();
        probs.extend(draws.iter().map(|x| x / sum));
    }
    PredictionMatrix::new(n_samples, n_classes, probs)
}

/// Uniformly random labels.
pub fn random_labels(n_samples: usize, n_classes: usize, seed: u64) -> Result<LabelVector> {
    let mut r = rng(seed);
    LabelVector::new((0..n_samples).map(|_| r.random_range(0..n_classes)).collect(), n_classes)
}

/// Several tasks drawn from one set of blobs, each trained over several
/// seeds and mapped onto the union task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatedTasksConfig {
    pub union: SyntheticTaskSpec,
    /// Class subsets of the union task, one per related task.
    pub subsets: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub trainer: LogisticTrainer,
    pub grid_size: usize,
}

impl Default for RelatedTasksConfig {
    fn default() -> Self {
        Self {
            union: SyntheticTaskSpec {
                n_classes: 8,
                n_samples: 1600,
                input_dim: 16,
                mean_scale: 2.0,
                scale: 0.6,
                seed: 11,
            },
            subsets: vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![0, 2, 4, 6], vec![1, 3, 5, 7]],
            seeds: vec![1, 2, 3, 4, 5],
            trainer: LogisticTrainer {
                learning_rate: 1.0,
                steps: 600,
                checkpoint_every: 20,
                seed: 0,
                init_scale: 0.1,
                feature_map: FeatureMap::Logits,
            },
            grid_size: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelatedTasksRun {
    pub union_task: TaskSpec,
    pub union_labels: LabelVector,
    /// Per related task: its name and the reindexed mapped curve of each seed.
    pub tasks: Vec<(String, Vec<ReindexedCurve>)>,
}

/// Generates the union task, trains every (subset, seed) pair, maps each
/// checkpoint onto the union task's held-out samples by imprinting, and
/// reindexes the mapped trajectories against the union task.
pub fn related_tasks_experiment(cfg: &RelatedTasksConfig) -> Result<RelatedTasksRun> {
    let union = gen_task(&cfg.union)?;
    let (union_x, union_y) = union.test_split()?;
    let union_task = TaskSpec::new("union", cfg.union.n_classes);
    let p0 = ignorance_model(union_y.len(), union_y.n_classes())?;
    let pstar = truth_model(&union_y);
    let jobs: Vec<(usize, u64)> = (0..cfg.subsets.len())
        .flat_map(|t| cfg.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let curves = par::map_indexed(jobs.len(), |j| -> Result<ReindexedCurve> {
        let (t, seed) = jobs[j];
        let sub = union.subtask(&cfg.subsets[t], format!("task{t}"))?;
        let (train_x, train_y) = sub.train_split()?;
        let trainer = LogisticTrainer {
            seed,
            ..cfg.trainer.clone()
        };
        let run = trainer.fit(&train_x, &train_y)?;
        let features = run
            .snapshots
            .iter()
            .map(|(_, w)| trainer.feature_map.features(w, &union_x))
            .collect::<Result<Vec<_>>>()?;
        let traj = match map_trajectory(&features, &union_y, union_task.clone(), ImprintOptions::default())? {
            MappedTrajectory::Trajectory(t) => t,
            MappedTrajectory::Single(_) => {
                return Err(Error::Validation("training produced a single checkpoint".into()))
            }
        }
        .with_meta("task", sub.name.clone())
        .with_meta("seed", seed.to_string());
        reindex(traj, &p0, &pstar, cfg.grid_size, ProgressOptions::default())
    });
    let mut curves = curves.into_iter();
    let mut tasks = Vec::with_capacity(cfg.subsets.len());
    for t in 0..cfg.subsets.len() {
        let per_seed = curves
            .by_ref()
            .take(cfg.seeds.len())
            .collect::<Result<Vec<_>>>()?;
        tasks.push((format!("task{t}"), per_seed));
    }
    Ok(RelatedTasksRun {
        union_task,
        union_labels: union_y,
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{compute_progress, ProgressFrame};

    fn small_spec() -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            n_classes: 3,
            n_samples: 300,
            input_dim: 5,
            mean_scale: 3.0,
            scale: 0.5,
            seed: 4,
        }
    }

    #[test]
    fn zero_scale_puts_samples_on_means() {
        let mut spec = small_spec();
        spec.scale = 0.0;
        let t = gen_task(&spec).unwrap();
        for (n, row) in t.inputs.rows().enumerate() {
            let y = t.labels.as_slice()[n];
            assert_eq!(row, &t.class_means[y * 5..(y + 1) * 5]);
        }
    }

    #[test]
    fn generation_is_reproducible_and_balanced() {
        let a = gen_task(&small_spec()).unwrap();
        let b = gen_task(&small_spec()).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels.class_counts(), vec![100, 100, 100]);
        let mut other = small_spec();
        other.seed = 5;
        assert_ne!(gen_task(&other).unwrap().inputs, a.inputs);
    }

    #[test]
    fn too_many_classes() {
        let mut spec = small_spec();
        spec.n_samples = 2;
        assert!(gen_task(&spec).is_err());
    }

    #[test]
    fn zero_steps_emit_ignorance() {
        let task = gen_task(&small_spec()).unwrap();
        let trainer = LogisticTrainer {
            steps: 0,
            ..Default::default()
        };
        let run = train_trajectory(&task, &trainer).unwrap();
        assert_eq!(run.checkpoints.len(), 1);
        let p0 = ignorance_model(run.test_labels.len(), 3).unwrap();
        assert_eq!(run.checkpoints[0], p0);
        assert!(run.into_trajectory().is_err());
    }

    #[test]
    fn separable_blobs_are_learned() {
        let task = gen_task(&small_spec()).unwrap();
        let trainer = LogisticTrainer {
            steps: 300,
            ..Default::default()
        };
        let run = train_trajectory(&task, &trainer).unwrap();
        // nearest class mean oracle
        let d = 5;
        let (test_x, test_y) = task.test_split().unwrap();
        let oracle: Vec<usize> = test_x
            .rows()
            .map(|x| {
                (0..3)
                    .min_by(|&a, &b| {
                        let da: f64 = x.iter().zip(&task.class_means[a * d..]).map(|(u, v)| (u - v).powi(2)).sum();
                        let db: f64 = x.iter().zip(&task.class_means[b * d..]).map(|(u, v)| (u - v).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap()
            })
            .collect();
        assert_eq!(oracle, test_y.as_slice());
        assert_eq!(run.checkpoints.last().unwrap().argmax(), test_y.as_slice());
        assert!(run.losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn progress_is_mostly_monotone_along_training() {
        let task = gen_task(&small_spec()).unwrap();
        let trainer = LogisticTrainer {
            steps: 400,
            checkpoint_every: 5,
            ..Default::default()
        };
        let run = train_trajectory(&task, &trainer).unwrap();
        let frame = ProgressFrame::for_labels(&run.test_labels, ProgressOptions::default()).unwrap();
        let t: Vec<f64> = run.checkpoints.iter().map(|p| frame.progress(p).unwrap()).collect();
        let increasing = t.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(increasing as f64 >= 0.95 * (t.len() - 1) as f64, "{t:?}");
    }

    #[test]
    fn oracle_extremes_and_grid_bound() {
        let l = random_labels(6, 3, 1).unwrap();
        let p0 = ignorance_model(6, 3).unwrap();
        let ps = truth_model(&l);
        assert_eq!(brute_force_progress(&p0, &p0, &ps, 1000).unwrap(), 0.0);
        assert_eq!(brute_force_progress(&ps, &p0, &ps, 1000).unwrap(), 1.0);
        assert!(brute_force_progress(&ps, &p0, &ps, 999).is_err());
        let p = random_model(6, 3, 1.0, 9).unwrap();
        let oracle = brute_force_progress(&p, &p0, &ps, 2001).unwrap();
        let fast = compute_progress(&p, &p0, &ps, ProgressOptions::default()).unwrap();
        assert!((oracle - fast).abs() <= 2.0 / 2001.0);
    }

    #[test]
    fn subtask_shares_inputs() {
        let t = gen_task(&small_spec()).unwrap();
        let s = t.subtask(&[2, 0], "s").unwrap();
        assert_eq!(s.labels.n_classes(), 2);
        assert_eq!(s.labels.len(), 200);
        // first kept sample is original index 0 (class 0 -> relabelled 1)
        assert_eq!(s.labels.as_slice()[0], 1);
        assert_eq!(s.inputs.row(0), t.inputs.row(0));
        assert!(t.subtask(&[0], "bad").is_err());
    }
}
