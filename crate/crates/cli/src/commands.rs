use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use taskgeo::config::RunConfig;
use taskgeo::embed::{
    explained_stress, inpca, inpca_store, pairwise_bhattacharyya_store, project_classes, DistanceStore,
    Embedding, FileModels, ModelSource, StochasticMap,
};
use taskgeo::imprint::{imprint, map_trajectory, predict, ImprintOptions, MappedTrajectory};
use taskgeo::io::{self, write_json};
use taskgeo::manifest::{self, load_bundle, load_curve, load_trajectory, save_curve, save_trajectory};
use taskgeo::model::{bhattacharyya, great_circle_half, ignorance_model, kl_to_truth, truth_model};
use taskgeo::pipeline::{run_pipeline, PipelineManifest, ProcessRunner, RunOptions};
use taskgeo::stats::{mean_trajectory, normalized_distance_curve, tube_radius, NormalizationFlag};
use taskgeo::synth::{
    gen_task, related_tasks_experiment, train_trajectory, FeatureMap, LogisticTrainer, RelatedTasksConfig,
    SyntheticTaskSpec, RNG_ALGORITHM,
};
use taskgeo::trajectory::{
    geodesic_length, geodesic_length_closed_form, per_class_progress, reindex, riemann_length, traj_distance,
    ProgressFrame, TrajDistanceOptions,
};
use taskgeo::{Error, GeodesicSegment, LabelVector, PredictionMatrix, Result};

use crate::{Command, FrameArgs, GlobalArgs, Metric, ModelSourceArgs, SynthCommand};

pub struct Output {
    pub json: Value,
    pub text: String,
    pub success: bool,
    pub failure_code: u8,
}

impl Output {
    fn ok(json: Value, text: impl Into<String>) -> Self {
        Self {
            json,
            text: text.into(),
            success: true,
            failure_code: 0,
        }
    }
}

pub fn run(command: Command, g: &GlobalArgs, cfg: &RunConfig) -> Result<Output> {
    match command {
        Command::Validate { paths } => validate(&paths),
        Command::Dist { p, q, metric, per_sample } => dist(&p, &q, metric, per_sample),
        Command::Geodesic { p, q, lambda, points, output } => geodesic(&p, &q, lambda, points, output),
        Command::Progress { model, labels, class, frame } => progress(&model, &labels, class, &frame, cfg),
        Command::Reindex { trajectory, labels, grid, frame, output } => {
            reindex_cmd(&trajectory, labels.as_deref(), grid, &frame, &output, cfg)
        }
        Command::Trajdist { a, b, grid_points } => trajdist(&a, &b, grid_points),
        Command::Length { curve, from, to } => length(curve, from, to, cfg),
        Command::Imprint { features, labels, normalize, output } => imprint_cmd(&features, &labels, normalize, &output),
        Command::Map { classifier, features, output } => {
            let clf = io::read_clf_file(&classifier)?;
            let p = predict(&clf, &io::read_fmat_file(&features)?)?;
            io::write_pmat_file(&output, &p)?;
            Ok(Output::ok(
                json!({ "ok": true, "output": output, "shape": [p.n_samples(), p.n_classes()] }),
                format!("wrote {} ({}x{})", output.display(), p.n_samples(), p.n_classes()),
            ))
        }
        Command::MapTraj { features, normalize, output } => map_traj(&features, normalize, &output),
        Command::Inpca { source, k, chunk, save_dmat, output } => inpca_cmd(&source, k, chunk, save_dmat, &output, cfg),
        Command::Project { model, to, map, output } => project(&model, to, map, &output, g),
        Command::Stress { embedding, dmat } => stress(embedding, dmat),
        Command::Meantraj { bundle, output } => {
            let b = load_bundle(&bundle)?;
            let mean = mean_trajectory(&b)?;
            save_curve(&output, &mean)?;
            Ok(Output::ok(
                json!({ "ok": true, "output": output, "curves": b.len(), "grid_points": mean.grid().len() }),
                format!("mean of {} curves written to {}", b.len(), output.display()),
            ))
        }
        Command::Tube { bundle } => {
            let b = load_bundle(&bundle)?;
            let mean = mean_trajectory(&b)?;
            let t = tube_radius(&b, &mean)?;
            let text = t
                .grid
                .iter()
                .zip(&t.radius)
                .map(|(g, r)| format!("{g:.4}\t{r:.6e}"))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::ok(
                json!({ "ok": true, "grid": t.grid, "radius": t.radius, "scalar_radius": t.scalar_radius }),
                format!("progress\tradius\n{text}\nscalar radius {:.6e}", t.scalar_radius),
            ))
        }
        Command::Normdist { a, b } => normdist(&a, &b),
        Command::Synth(s) => synth(s, g),
        Command::Pipeline { manifest, resume, record_hashes } => pipeline(&manifest, resume, record_hashes),
    }
}

fn validate(paths: &[PathBuf]) -> Result<Output> {
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    let mut worst: Option<Error> = None;
    for p in paths {
        match io::validate(p) {
            Ok(r) => {
                lines.push(format!("ok\t{}\t{:?} {:?}", r.path, r.format, r.shape));
                reports.push(json!({ "path": r.path, "ok": true, "format": r.format, "shape": r.shape }));
            }
            Err(e) => {
                lines.push(format!("FAIL\t{}\t{e}", p.display()));
                reports.push(json!({ "path": p, "ok": false, "error": e.to_string() }));
                if worst.as_ref().is_none_or(|w| e.kind().exit_code() > w.kind().exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    let success = worst.is_none();
    Ok(Output {
        json: json!({ "ok": success, "files": reports }),
        text: lines.join("\n"),
        success,
        failure_code: worst.map_or(0, |e| e.kind().exit_code() as u8),
    })
}

fn dist(p: &Path, q: &Path, metric: Metric, per_sample: bool) -> Result<Output> {
    let (p, q) = (io::read_model(p)?, io::read_model(q)?);
    let (name, value, samples) = match metric {
        Metric::Bhattacharyya => {
            let d = bhattacharyya(&p, &q)?;
            ("bhattacharyya", d.aggregate, Some(d.per_sample))
        }
        Metric::GreatCircle => {
            let d = great_circle_half(&p, &q)?;
            ("great_circle_half", d.aggregate, Some(d.per_sample))
        }
        Metric::Kl => ("kl_to_truth", kl_to_truth(&p, &q)?, None),
    };
    let mut out = json!({ "ok": true, "metric": name, "value": value });
    if per_sample {
        out["per_sample"] = json!(samples);
    }
    Ok(Output::ok(out, format!("{name}\t{value:.17e}")))
}

fn geodesic(p: &Path, q: &Path, lambda: Option<f64>, points: Option<usize>, output: Option<PathBuf>) -> Result<Output> {
    let seg = GeodesicSegment::new(io::read_model(p)?, io::read_model(q)?)?;
    let angles = seg.half_angles();
    let mut out = json!({
        "ok": true,
        "mean_half_angle": angles.iter().sum::<f64>() / angles.len() as f64,
        "max_half_angle": angles.iter().fold(0.0f64, |m, a| m.max(*a)),
        "midpoint_equidistance": seg.midpoint_equidistance()?,
    });
    let mut text = format!(
        "mean half angle {:.6}\nmidpoint equidistance {:.3e}",
        out["mean_half_angle"].as_f64().unwrap_or_default(),
        out["midpoint_equidistance"].as_f64().unwrap_or_default()
    );
    match (lambda, points, output) {
        (Some(l), _, Some(path)) => {
            io::write_pmat_file(&path, &seg.point(l)?)?;
            out["output"] = json!(path);
            text.push_str(&format!("\nwrote {}", path.display()));
        }
        (None, Some(m), Some(dir)) => {
            fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            let files = seg
                .grid(m)?
                .iter()
                .enumerate()
                .map(|(i, pt)| {
                    let f = dir.join(format!("point_{i:04}.pmat"));
                    io::write_pmat_file(&f, pt).map(|()| f)
                })
                .collect::<Result<Vec<_>>>()?;
            text.push_str(&format!("\nwrote {} points to {}", files.len(), dir.display()));
            out["outputs"] = json!(files);
        }
        (Some(_), _, None) | (None, Some(_), None) => {
            return Err(Error::Validation("--lambda and --points need --output".into()));
        }
        (None, None, _) => {}
    }
    Ok(Output::ok(out, text))
}

fn frame_for(labels: &LabelVector, frame: &FrameArgs, cfg: &RunConfig) -> Result<ProgressFrame> {
    let p0 = match &frame.p0 {
        Some(p) => io::read_model(p)?,
        None => ignorance_model(labels.len(), labels.n_classes())?,
    };
    let pstar = match &frame.pstar {
        Some(p) => io::read_model(p)?,
        None => truth_model(labels),
    };
    ProgressFrame::new(p0, pstar, cfg.progress_options())
}

fn progress(model: &Path, labels: &Path, class: Option<usize>, frame: &FrameArgs, cfg: &RunConfig) -> Result<Output> {
    let p = io::read_model(model)?;
    let labels = io::read_labels_file(labels)?;
    let t = match class {
        Some(c) => {
            if frame.p0.is_some() || frame.pstar.is_some() {
                return Err(Error::Validation("--class uses the ignorance and truth models".into()));
            }
            per_class_progress(&p, &labels, c, cfg.progress_options())?
        }
        None => frame_for(&labels, frame, cfg)?.progress(&p)?,
    };
    Ok(Output::ok(json!({ "ok": true, "progress": t, "class": class }), format!("{t:.9}")))
}

fn reindex_cmd(
    trajectory: &Path,
    labels: Option<&Path>,
    grid: usize,
    frame: &FrameArgs,
    output: &Path,
    cfg: &RunConfig,
) -> Result<Output> {
    let loaded = load_trajectory(trajectory)?;
    let labels = match (labels, loaded.labels) {
        (Some(p), _) => io::read_labels_file(p)?,
        (None, Some(l)) => l,
        (None, None) => return Err(Error::Validation("no labels: pass --labels or name them in the manifest".into())),
    };
    let f = frame_for(&labels, frame, cfg)?;
    let seg = f.segment();
    let curve = reindex(
        loaded.trajectory,
        seg.endpoint_u(),
        seg.endpoint_v(),
        grid,
        cfg.progress_options(),
    )?;
    save_curve(output, &curve)?;
    let (lo, hi) = curve.range();
    Ok(Output::ok(
        json!({
            "ok": true,
            "output": output,
            "range": [lo, hi],
            "kept": curve.kept_mask().iter().filter(|k| **k).count(),
            "dropped_fraction": curve.dropped_fraction(),
            "clamped": curve.clamped().iter().filter(|c| **c).count(),
        }),
        format!(
            "progress range [{lo:.4}, {hi:.4}], dropped {:.1}% of checkpoints; curve written to {}",
            100.0 * curve.dropped_fraction(),
            output.display()
        ),
    ))
}

fn trajdist(a: &Path, b: &Path, grid_points: usize) -> Result<Output> {
    let d = traj_distance(&load_curve(a)?, &load_curve(b)?, TrajDistanceOptions { grid_points })?;
    Ok(Output::ok(
        json!({
            "ok": true,
            "value": d.value,
            "raw": d.raw,
            "range": [d.range.0, d.range.1],
            "grid_points": d.grid_points,
            "regridded": d.regridded,
        }),
        format!("{:.17e}", d.value),
    ))
}

fn length(curve: Option<PathBuf>, from: Option<PathBuf>, to: Option<PathBuf>, cfg: &RunConfig) -> Result<Output> {
    let opts = cfg.length_options();
    let (len, closed) = match (curve, from, to) {
        (Some(c), _, _) => (riemann_length(&load_curve(&c)?, opts)?, None),
        (None, Some(f), Some(t)) => {
            let seg = GeodesicSegment::new(io::read_model(&f)?, io::read_model(&t)?)?;
            (geodesic_length(&seg, opts)?, Some(geodesic_length_closed_form(&seg)))
        }
        _ => return Err(Error::Validation("give a curve or --from and --to".into())),
    };
    let mut text = format!("{:.9}", len.value);
    if let Some(c) = closed {
        text.push_str(&format!("\nclosed form {c:.9}"));
    }
    Ok(Output::ok(
        json!({
            "ok": true,
            "length": len.value,
            "points": len.points,
            "converged": len.converged,
            "closed_form": closed,
        }),
        text,
    ))
}

fn imprint_cmd(features: &Path, labels: &Path, normalize: bool, output: &Path) -> Result<Output> {
    let clf = imprint(
        &io::read_fmat_file(features)?,
        &io::read_labels_file(labels)?,
        ImprintOptions {
            normalize_features: normalize,
        },
    )?;
    io::write_clf_file(output, &clf)?;
    Ok(Output::ok(
        json!({ "ok": true, "output": output, "classes": clf.n_classes(), "dim": clf.dim() }),
        format!("wrote {} ({} classes, {} features)", output.display(), clf.n_classes(), clf.dim()),
    ))
}

fn map_traj(features: &Path, normalize: bool, output: &Path) -> Result<Output> {
    let f = manifest::load_features(features)?;
    let mapped = map_trajectory(
        &f.checkpoints,
        &f.labels,
        f.task.clone(),
        ImprintOptions {
            normalize_features: normalize,
        },
    )?;
    match mapped {
        MappedTrajectory::Trajectory(mut t) => {
            for (k, v) in f.meta {
                t = t.with_meta(k, v);
            }
            let path = save_trajectory(output, &t, Some(&f.labels))?;
            Ok(Output::ok(
                json!({ "ok": true, "output": path, "checkpoints": t.len() }),
                format!("mapped {} checkpoints; manifest {}", t.len(), path.display()),
            ))
        }
        MappedTrajectory::Single(p) => {
            fs::create_dir_all(output).map_err(|e| Error::Io { path: output.into(), source: e })?;
            let path = output.join("model.pmat");
            io::write_pmat_file(&path, &p)?;
            Ok(Output::ok(
                json!({ "ok": true, "output": path, "checkpoints": 1 }),
                format!("single checkpoint mapped to {}", path.display()),
            ))
        }
    }
}

/// Models named by the source flags, in flag order.
fn collect_models(source: &ModelSourceArgs) -> Result<Box<dyn ModelSource>> {
    let mut models: Vec<PredictionMatrix> = Vec::new();
    for c in &source.curves {
        models.extend(load_curve(c)?.points().iter().cloned());
    }
    for b in &source.bundles {
        for c in load_bundle(b)?.curves() {
            models.extend(c.points().iter().cloned());
        }
    }
    match &source.models {
        Some(list) if models.is_empty() => Ok(Box::new(manifest::load_model_list(list)?)),
        Some(list) => {
            let files: FileModels = manifest::load_model_list(list)?;
            for i in 0..files.len() {
                models.push(files.load(i)?);
            }
            Ok(Box::new(models))
        }
        None if models.is_empty() => Err(Error::Validation(
            "no models: pass --models, --curve, --bundle or --dmat".into(),
        )),
        None => Ok(Box::new(models)),
    }
}

fn embedding_summary(e: &Embedding, k: usize) -> Value {
    json!({
        "n": e.n(),
        "k": k,
        "eigenvalues": e.eigenvalues().iter().take(k).collect::<Vec<_>>(),
        "signature": e.signature(),
        "stress": e.stress_curve().get(k - 1),
        "trivial": e.is_trivial(),
    })
}

fn inpca_cmd(
    source: &ModelSourceArgs,
    k: usize,
    chunk: usize,
    save_dmat: Option<PathBuf>,
    output: &Path,
    cfg: &RunConfig,
) -> Result<Output> {
    let emb = if let Some(d) = &source.dmat {
        inpca(&io::read_dmat_file(d)?, k, cfg.inpca_options())?
    } else {
        let models = collect_models(source)?;
        let spill = output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let store = pairwise_bhattacharyya_store(models.as_ref(), chunk, cfg.memory_budget_bytes, spill)?;
        if let Some(path) = &save_dmat {
            io::write_dmat_file(path, &store.to_matrix()?)?;
        }
        if let DistanceStore::Disk(_) = store {
            eprintln!("distance matrix exceeds the memory budget; using the out-of-core path");
        }
        inpca_store(&store, k, cfg.inpca_options())?
    };
    io::write_embedding(output, &emb)?;
    let mut summary = embedding_summary(&emb, k);
    summary["ok"] = json!(true);
    summary["output"] = json!(output.with_extension("csv"));
    Ok(Output::ok(
        summary,
        format!(
            "{} models, explained stress of {k} coordinates {:.4}; wrote {}",
            emb.n(),
            emb.stress_curve().get(k - 1).copied().unwrap_or(f64::NAN),
            output.with_extension("csv").display()
        ),
    ))
}

fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("{}: line {}: bad number {t:?}", path.display(), i + 1)))
                })
                .collect()
        })
        .collect()
}

fn project(model: &Path, to: usize, map: Option<PathBuf>, output: &Path, g: &GlobalArgs) -> Result<Output> {
    let p = io::read_model(model)?;
    let m = match map {
        Some(path) => {
            let rows = read_csv_matrix(&path)?;
            StochasticMap::from_row_stochastic(rows.len(), to, rows.concat())?
        }
        None => StochasticMap::random(p.n_classes(), to, g.seed)?,
    };
    let q = project_classes(&p, &m)?;
    io::write_pmat_file(output, &q)?;
    Ok(Output::ok(
        json!({
            "ok": true,
            "output": output,
            "classes_in": m.c_in(),
            "classes_out": m.c_out(),
            "seed": m.seed(),
            "rng": m.seed().map(|_| RNG_ALGORITHM),
        }),
        format!("projected {} -> {} classes; wrote {}", m.c_in(), m.c_out(), output.display()),
    ))
}

fn stress(embedding: Option<PathBuf>, dmat: Option<PathBuf>) -> Result<Output> {
    let curve = match (embedding, dmat) {
        (Some(stem), _) => io::read_embedding(stem)?.stress_curve().to_vec(),
        (None, Some(d)) => {
            let d = io::read_dmat_file(d)?;
            let e = inpca(&d, d.n(), Default::default())?;
            (1..=d.n())
                .map(|k| explained_stress(e.eigenvalues(), k))
                .collect::<Result<Vec<_>>>()?
        }
        (None, None) => return Err(Error::Validation("give --embedding or --dmat".into())),
    };
    let text = curve
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}\t{s:.6}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output::ok(json!({ "ok": true, "stress": curve }), format!("k\tstress\n{text}")))
}

fn normdist(a: &Path, b: &Path) -> Result<Output> {
    let curve = normalized_distance_curve(&load_bundle(a)?, &load_bundle(b)?)?;
    let rows: Vec<Value> = curve
        .iter()
        .map(|p| {
            let flag = match p.flag {
                NormalizationFlag::Finite => "finite",
                NormalizationFlag::Infinite => "infinite",
                NormalizationFlag::ZeroOverZero => "zero_over_zero",
            };
            // JSON has no infinity; the flag carries it.
            let value = if p.value.is_finite() { json!(p.value) } else { Value::Null };
            json!({ "progress": p.progress, "value": value, "flag": flag })
        })
        .collect();
    let text = curve
        .iter()
        .map(|p| format!("{:.4}\t{:.6}", p.progress, p.value))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Output::ok(json!({ "ok": true, "curve": rows }), format!("progress\tnormalized\n{text}")))
}

fn parse_feature_map(s: &str, seed: u64) -> Result<FeatureMap> {
    match s {
        "inputs" => Ok(FeatureMap::Inputs),
        "logits" => Ok(FeatureMap::Logits),
        _ => match s.strip_prefix("projection:").map(str::parse::<usize>) {
            Some(Ok(dim)) if dim > 0 => Ok(FeatureMap::RandomProjection { dim, seed }),
            _ => Err(Error::Validation(format!(
                "unknown feature map {s:?}; expected inputs, logits or projection:<dim>"
            ))),
        },
    }
}

fn synth(cmd: SynthCommand, g: &GlobalArgs) -> Result<Output> {
    match cmd {
        SynthCommand::Gen { classes, samples, dim, mean_scale, scale, output } => {
            let spec = SyntheticTaskSpec {
                n_classes: classes,
                n_samples: samples,
                input_dim: dim,
                mean_scale,
                scale,
                seed: g.seed,
            };
            let task = gen_task(&spec)?;
            fs::create_dir_all(&output).map_err(|e| Error::Io { path: output.clone(), source: e })?;
            write_json(output.join("task.json"), &json!({ "spec": spec, "name": task.name, "rng": RNG_ALGORITHM }))?;
            io::write_fmat_file(output.join("inputs.fmat"), &task.inputs)?;
            io::write_labels_file(output.join("labels.lbl"), &task.labels)?;
            Ok(Output::ok(
                json!({ "ok": true, "output": output, "name": task.name }),
                format!("task {} written to {}", task.name, output.display()),
            ))
        }
        SynthCommand::Train { task, classes, steps, lr, every, init_scale, features, output } => {
            let meta: Value = io::read_json(task.join("task.json"))?;
            let spec: SyntheticTaskSpec = serde_json::from_value(meta["spec"].clone())?;
            let mut t = gen_task(&spec)?;
            if !classes.is_empty() {
                let name = format!(
                    "{}-sub{}",
                    t.name,
                    classes.iter().map(ToString::to_string).collect::<Vec<_>>().join("_")
                );
                t = t.subtask(&classes, name)?;
            }
            let trainer = LogisticTrainer {
                learning_rate: lr,
                steps,
                checkpoint_every: every,
                seed: g.seed,
                init_scale,
                feature_map: parse_feature_map(&features, g.seed)?,
            };
            let run = train_trajectory(&t, &trainer)?;
            let mut meta = BTreeMap::new();
            meta.insert("task".to_string(), t.name.clone());
            meta.insert("seed".to_string(), g.seed.to_string());
            meta.insert("rng".to_string(), RNG_ALGORITHM.to_string());
            manifest::save_features(output.join("features"), &run.task, &run.test_labels, &run.features, meta.clone())?;
            write_json(
                output.join("training.json"),
                &json!({ "trainer": trainer, "steps": run.steps, "losses": run.losses }),
            )?;
            let n_ckpt = run.checkpoints.len();
            let final_loss = run.losses.last().copied();
            let labels = run.test_labels.clone();
            let manifest_path = match run.into_trajectory() {
                Ok(mut traj) => {
                    for (k, v) in meta {
                        traj = traj.with_meta(k, v);
                    }
                    Some(save_trajectory(&output, &traj, Some(&labels))?)
                }
                Err(_) if n_ckpt == 1 => None,
                Err(e) => return Err(e),
            };
            Ok(Output::ok(
                json!({ "ok": true, "output": output, "checkpoints": n_ckpt, "final_loss": final_loss, "trajectory": manifest_path }),
                format!(
                    "{n_ckpt} checkpoints, final loss {:.6}; written to {}",
                    final_loss.unwrap_or(f64::NAN),
                    output.display()
                ),
            ))
        }
        SynthCommand::Related { seeds, grid, output } => {
            let cfg = RelatedTasksConfig {
                seeds: (1..=seeds).map(|s| s + g.seed).collect(),
                grid_size: grid,
                ..RelatedTasksConfig::default()
            };
            let run = related_tasks_experiment(&cfg)?;
            fs::create_dir_all(&output).map_err(|e| Error::Io { path: output.clone(), source: e })?;
            write_json(output.join("config.json"), &cfg)?;
            let mut bundles = Vec::new();
            let mut models = Vec::new();
            for (name, curves) in &run.tasks {
                let mut dirs = Vec::new();
                for (curve, seed) in curves.iter().zip(&cfg.seeds) {
                    let rel = format!("{name}/seed{seed}");
                    let m = save_curve(output.join(&rel), curve)?;
                    let written: manifest::CurveManifest = io::read_json(&m)?;
                    models.extend(written.points.iter().map(|p| output.join(&rel).join(p)));
                    dirs.push(rel);
                }
                let bundle = output.join(format!("{name}.json"));
                write_json(&bundle, &manifest::BundleManifest { task: Some(run.union_task.clone()), curves: dirs })?;
                bundles.push(bundle);
            }
            manifest::write_model_list(output.join("models.json"), &models)?;
            Ok(Output::ok(
                json!({ "ok": true, "output": output, "bundles": bundles, "models": models.len() }),
                format!(
                    "{} tasks x {} seeds, {} models; bundles and models.json in {}",
                    run.tasks.len(),
                    cfg.seeds.len(),
                    models.len(),
                    output.display()
                ),
            ))
        }
    }
}

fn pipeline(path: &Path, resume: bool, record_hashes: bool) -> Result<Output> {
    let mut m = PipelineManifest::load(path)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
    if record_hashes {
        m.record_hashes(&base)?;
        write_json(path, &m)?;
        return Ok(Output::ok(
            json!({ "ok": true, "input_hashes": m.input_hashes }),
            format!("recorded {} input hashes", m.input_hashes.len()),
        ));
    }
    let mut runner = ProcessRunner::default();
    let exe = std::env::current_exe().map_err(|e| Error::Io { path: "taskgeo".into(), source: e })?;
    runner.programs.insert("taskgeo".into(), exe);
    let report = run_pipeline(&m, &base, &mut runner, RunOptions { resume })?;
    let mut text: Vec<String> = report
        .hash_mismatches
        .iter()
        .map(|h| format!("warning: input {} changed since its hash was recorded", h.path))
        .collect();
    text.extend(report.stages.iter().map(|s| format!("{}\t{:?}", s.name, s.status)));
    let success = report.succeeded();
    Ok(Output {
        json: json!({ "ok": success, "stages": report.stages, "hash_mismatches": report.hash_mismatches }),
        text: text.join("\n"),
        success,
        failure_code: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_maps_parse() {
        assert!(matches!(parse_feature_map("inputs", 0), Ok(FeatureMap::Inputs)));
        assert!(matches!(parse_feature_map("logits", 0), Ok(FeatureMap::Logits)));
        assert!(matches!(
            parse_feature_map("projection:6", 9),
            Ok(FeatureMap::RandomProjection { dim: 6, seed: 9 })
        ));
        for bad in ["projection:0", "projection:x", "pca"] {
            assert!(parse_feature_map(bad, 0).is_err(), "{bad}");
        }
    }
}
