mod common;

use common::*;
use rand::Rng;
use taskgeo::model::{ignorance_model, kl_to_truth, truth_model};
use taskgeo::stats::{mean_trajectory, normalized_distance_curve, tube_radius, NormalizationFlag, TrajectoryBundle};
use taskgeo::synth::{gen_task, train_trajectory, LogisticTrainer, SyntheticTaskSpec};
use taskgeo::trajectory::{
    per_class_progress, reindex, riemann_length, traj_distance, uniform_grid, LengthOptions, ProgressFrame,
    ProgressOptions, TrajDistanceOptions,
};
use taskgeo::{ErrorKind, PredictionMatrix, ReindexedCurve, TaskSpec, Trajectory};

fn frame(n: usize, c: usize, seed: u64) -> (PredictionMatrix, PredictionMatrix) {
    let labels = random_labels(&mut rng(seed), n, c);
    (ignorance_model(n, c).unwrap(), truth_model(&labels))
}

#[test]
fn detour_distance_matches_direct_integration() {
    // A curve that leaves the geodesic and comes back, against the geodesic.
    let (n, c) = (6, 3);
    let (p0, pstar) = frame(n, c, 1);
    let detour = random_pmat(&mut rng(2), n, c);
    let task = TaskSpec::new("t", c);
    let progress = vec![0.0, 0.5, 1.0];
    let bent = ReindexedCurve::from_knots(
        task.clone(),
        vec![p0.clone(), mix(&slerp_oracle(&p0, &pstar, 0.5), &detour, 0.4), pstar.clone()],
        progress,
        uniform_grid(0.0, 1.0, 401),
    )
    .unwrap();
    let straight = ReindexedCurve::from_knots(
        task,
        vec![p0.clone(), pstar.clone()],
        vec![0.0, 1.0],
        uniform_grid(0.0, 1.0, 401),
    )
    .unwrap();
    let got = traj_distance(&bent, &straight, TrajDistanceOptions::default()).unwrap();
    assert!(!got.regridded);

    let middle = mix(&slerp_oracle(&p0, &pstar, 0.5), &detour, 0.4);
    let along_bent = |t: f64| {
        if t <= 0.5 {
            slerp_oracle(&p0, &middle, t / 0.5)
        } else {
            slerp_oracle(&middle, &pstar, (t - 0.5) / 0.5)
        }
    };
    let integrand = |t: f64| naive_bhattacharyya(&along_bent(t), &slerp_oracle(&p0, &pstar, t));
    let oracle = simpson(integrand, 0.0, 0.5, 200) + simpson(integrand, 0.5, 1.0, 200);
    assert!(got.value > 1e-3);
    assert!((got.value - oracle).abs() < 1e-4 * oracle, "{} vs {oracle}", got.value);
}

#[test]
fn distance_uses_the_shared_progress_range() {
    let (n, c) = (4, 3);
    let (p0, pstar) = frame(n, c, 3);
    let task = TaskSpec::new("t", c);
    let knots = |hi: f64| {
        ReindexedCurve::from_knots(
            task.clone(),
            vec![p0.clone(), slerp_oracle(&p0, &pstar, hi)],
            vec![0.0, hi],
            uniform_grid(0.0, 1.0, 11),
        )
        .unwrap()
    };
    let short = knots(0.6);
    assert!(short.clamped().iter().skip(7).all(|&f| f));
    let long = knots(1.0);
    let d = traj_distance(&short, &long, TrajDistanceOptions { grid_points: 31 }).unwrap();
    assert!(d.regridded);
    assert_eq!(d.range, (0.0, 0.6));
    // both lie on one geodesic, so they coincide at equal progress
    assert!(d.value < 1e-12, "{}", d.value);
}

#[test]
fn trained_run_reindexes_with_recorded_drops() {
    let spec = SyntheticTaskSpec {
        n_classes: 3,
        n_samples: 300,
        input_dim: 6,
        mean_scale: 1.5,
        scale: 1.0,
        seed: 4,
    };
    let task = gen_task(&spec).unwrap();
    let trainer = LogisticTrainer {
        steps: 150,
        checkpoint_every: 5,
        ..LogisticTrainer::default()
    };
    let run = train_trajectory(&task, &trainer).unwrap();
    let labels = run.test_labels.clone();
    // cross-entropy is the KL divergence to the truth
    for (step, p) in run.steps.iter().zip(&run.checkpoints) {
        assert!(kl_to_truth(&truth_model(&labels), p).unwrap() >= 0.0, "step {step}");
    }
    let traj = run.into_trajectory().unwrap();
    let n = traj.shape().0;
    let p0 = ignorance_model(n, 3).unwrap();
    let curve = reindex(traj, &p0, &truth_model(&labels), 25, ProgressOptions::default()).unwrap();
    let (lo, hi) = curve.range();
    assert_eq!(lo, 0.0);
    assert!(hi > 0.5 && hi < 1.0);
    assert!(curve.knot_progress().windows(2).all(|w| w[0] < w[1]));
    let kept = curve.kept_mask().iter().filter(|k| **k).count();
    assert_eq!(kept, curve.knot_progress().len());
    assert!(curve.clamped().last().copied().unwrap());
    let length = riemann_length(&curve, LengthOptions::default()).unwrap();
    assert!(length.converged);

    for class in 0..3 {
        let t = per_class_progress(curve.base().checkpoints().last().unwrap(), &labels, class, ProgressOptions::default()).unwrap();
        assert!((0.0..=1.0).contains(&t));
    }
}

#[test]
fn non_monotone_checkpoints_are_dropped() {
    let (n, c) = (5, 4);
    let (p0, pstar) = frame(n, c, 5);
    let ts = [0.0, 0.3, 0.2, 0.6, 0.6, 0.5, 0.9];
    let ckpts: Vec<_> = ts.iter().map(|&t| slerp_oracle(&p0, &pstar, t)).collect();
    let traj = Trajectory::new(TaskSpec::new("t", c), ckpts).unwrap();
    let curve = reindex(traj, &p0, &pstar, 10, ProgressOptions::default()).unwrap();
    assert_eq!(curve.kept_mask(), &[true, true, false, true, false, false, true]);
    assert!((curve.dropped_fraction() - 3.0 / 7.0).abs() < 1e-15);
}

#[test]
fn stalled_run_cannot_be_reindexed() {
    let (p0, pstar) = frame(3, 2, 6);
    assert_eq!(Trajectory::new(TaskSpec::new("t", 2), vec![p0.clone()]).unwrap_err().kind(), ErrorKind::Validation);
    let traj = Trajectory::new(TaskSpec::new("t", 2), vec![p0.clone(), p0.clone()]).unwrap();
    let err = reindex(traj, &p0, &pstar, 10, ProgressOptions::default()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Numerical);
}

#[test]
fn frame_progress_matches_oracle_on_noisy_models() {
    let mut r = rng(7);
    for _ in 0..20 {
        let (n, c) = (r.random_range(2..8), r.random_range(2..5));
        let (p0, pstar) = frame(n, c, r.random());
        let f = ProgressFrame::new(p0.clone(), pstar.clone(), ProgressOptions::default()).unwrap();
        let p = mix(&slerp_oracle(&p0, &pstar, r.random()), &random_pmat(&mut r, n, c), 0.3);
        let t = f.progress(&p).unwrap();
        assert!((t - progress_oracle(&p, &p0, &pstar, 2001)).abs() <= 1e-3);
    }
}

#[test]
fn bundle_statistics() {
    let (n, c) = (5, 3);
    let (p0, pstar) = frame(n, c, 8);
    let task = TaskSpec::new("t", c);
    let grid = uniform_grid(0.0, 1.0, 9);
    let curve = |noise: u64, eps: f64| {
        let mid = mix(&slerp_oracle(&p0, &pstar, 0.5), &random_pmat(&mut rng(noise), n, c), eps);
        ReindexedCurve::from_knots(task.clone(), vec![p0.clone(), mid, pstar.clone()], vec![0.0, 0.5, 1.0], grid.clone()).unwrap()
    };
    let same = TrajectoryBundle::new(task.clone(), vec![curve(1, 0.0), curve(1, 0.0)]).unwrap();
    let mean = mean_trajectory(&same).unwrap();
    let tube = tube_radius(&same, &mean).unwrap();
    assert!(tube.radius.iter().all(|&r| r < 1e-12), "{:?}", tube.radius);

    let spread = TrajectoryBundle::new(task.clone(), vec![curve(2, 0.2), curve(3, 0.2), curve(4, 0.2)]).unwrap();
    let mean = mean_trajectory(&spread).unwrap();
    let tube = tube_radius(&spread, &mean).unwrap();
    assert!(tube.radius[4] > 0.0);
    // every member is inside the tube
    for c in spread.curves() {
        let d = traj_distance(c, &mean, TrajDistanceOptions::default()).unwrap();
        assert!(d.value <= tube.scalar_radius + 1e-15);
    }
    let nd = normalized_distance_curve(&same, &same).unwrap();
    assert!(nd.iter().all(|p| p.flag == NormalizationFlag::ZeroOverZero));
    let nd = normalized_distance_curve(&spread, &same).unwrap();
    assert_eq!(nd[0].flag, NormalizationFlag::ZeroOverZero);
    assert_eq!(nd[4].flag, NormalizationFlag::Finite);
}
