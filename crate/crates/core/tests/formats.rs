mod common;

use std::fs;

use common::*;
use taskgeo::embed::{inpca, pairwise_bhattacharyya, InpcaOptions, ModelSource};
use taskgeo::imprint::{imprint, ImprintOptions};
use taskgeo::io::{self, Format};
use taskgeo::manifest;
use taskgeo::{ErrorKind, FeatureMatrix, TaskSpec, Trajectory};

#[test]
fn files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(1);
    let p = random_pmat(&mut r, 9, 4);
    let labels = random_labels(&mut r, 9, 4);
    let feats = FeatureMatrix::new(9, 3, (0..27).map(|i| (i as f64 * 0.37).sin() * 1e-7).collect()).unwrap();
    let clf = imprint(&feats, &labels, ImprintOptions::default()).unwrap();
    let d = pairwise_bhattacharyya(&vec![p.clone(), random_pmat(&mut r, 9, 4), random_pmat(&mut r, 9, 4)], 2).unwrap();
    let e = inpca(&d, 3, InpcaOptions::default()).unwrap();

    let path = |name: &str| dir.path().join(name);
    io::write_pmat_file(path("a.pmat"), &p).unwrap();
    io::write_labels_file(path("a.lbl"), &labels).unwrap();
    io::write_fmat_file(path("a.fmat"), &feats).unwrap();
    io::write_clf_file(path("a.clf"), &clf).unwrap();
    io::write_dmat_file(path("a.dmat"), &d).unwrap();
    io::write_embedding(path("emb"), &e).unwrap();
    fs::write(path("a.csv"), io::encode_pmat_csv(&p)).unwrap();

    assert_eq!(io::read_pmat_file(path("a.pmat")).unwrap(), p);
    assert_eq!(io::read_model(path("a.csv")).unwrap(), p);
    assert_eq!(io::read_labels_file(path("a.lbl")).unwrap(), labels);
    assert_eq!(io::read_fmat_file(path("a.fmat")).unwrap(), feats);
    assert_eq!(io::read_clf_file(path("a.clf")).unwrap(), clf);
    assert_eq!(io::read_dmat_file(path("a.dmat")).unwrap(), d);
    assert_eq!(io::read_embedding(path("emb")).unwrap(), e);

    for (name, format) in [
        ("a.pmat", Format::Pmat),
        ("a.lbl", Format::Lbl),
        ("a.fmat", Format::Fmat),
        ("a.clf", Format::Clf),
        ("a.dmat", Format::Dmat),
        ("a.csv", Format::Csv),
    ] {
        assert_eq!(io::validate(path(name)).unwrap().format, format, "{name}");
    }
}

#[test]
fn damaged_files_are_reported() {
    let p = random_pmat(&mut rng(2), 3, 2);
    let bytes = io::encode_pmat(&p);
    let err = io::decode_pmat(&bytes[..bytes.len() - 3]).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
    assert!(err.to_string().contains("truncated"), "{err}");

    // a row that does not sum to one
    let mut bad = bytes.clone();
    let off = bad.len() - 8;
    bad[off..].copy_from_slice(&0.9f64.to_le_bytes());
    assert!(io::decode_pmat(&bad).is_err());

    assert!(io::decode_labels(b"LBL1 2 3\n0\n3\n").is_err());
    assert!(io::decode_labels(b"LBL1 3 3\n0\n1\n").is_err());
    assert!(io::decode_pmat(b"PMAT1 1 2 f32\n").is_err());
    assert_eq!(io::detect_format(b"hello"), Format::Csv);
}

#[test]
fn trajectory_and_curve_manifests_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(3);
    let labels = random_labels(&mut r, 8, 3);
    let ckpts: Vec<_> = (0..4).map(|_| random_pmat(&mut r, 8, 3)).collect();
    let traj = Trajectory::new(TaskSpec::new("toy", 3), ckpts.clone()).unwrap().with_meta("seed", "3");
    let path = manifest::save_trajectory(dir.path().join("traj"), &traj, Some(&labels)).unwrap();
    let loaded = manifest::load_trajectory(&path).unwrap();
    assert_eq!(loaded.trajectory.checkpoints(), ckpts.as_slice());
    assert_eq!(loaded.trajectory.meta().get("seed").map(String::as_str), Some("3"));
    assert_eq!(loaded.labels.as_ref(), Some(&labels));

    let feats: Vec<_> = (0..3)
        .map(|k| FeatureMatrix::new(8, 2, (0..16).map(|i| (i + k) as f64 * 0.1 - 0.5).collect()).unwrap())
        .collect();
    let fpath = manifest::save_features(dir.path().join("feat"), &TaskSpec::new("toy", 3), &labels, &feats, Default::default()).unwrap();
    let lf = manifest::load_features(&fpath).unwrap();
    assert_eq!(lf.checkpoints, feats);
    assert_eq!(lf.labels, labels);
}

#[test]
fn model_lists_accept_json_and_lines() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(4);
    let mut paths = Vec::new();
    for i in 0..3 {
        let p = dir.path().join(format!("m{i}.pmat"));
        io::write_pmat_file(&p, &random_pmat(&mut r, 4, 2)).unwrap();
        paths.push(p);
    }
    manifest::write_model_list(dir.path().join("list.json"), &paths).unwrap();
    let text: String = ["m0.pmat", "m1.pmat", "", "m2.pmat"].join("\n");
    fs::write(dir.path().join("list.txt"), text).unwrap();
    let a = manifest::load_model_list(dir.path().join("list.json")).unwrap();
    let b = manifest::load_model_list(dir.path().join("list.txt")).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(b.len(), 3);
    for i in 0..3 {
        assert_eq!(a.load(i).unwrap(), b.load(i).unwrap());
    }
    let da = pairwise_bhattacharyya(&a, 2).unwrap();
    let db = pairwise_bhattacharyya(&b, 1).unwrap();
    assert_eq!(da, db);
}
