mod common;

use common::*;
use proptest::prelude::*;
use taskgeo::embed::{explained_stress, inpca, pairwise_bhattacharyya, DistanceMatrix, InpcaOptions};
use taskgeo::imprint::{imprint, ImprintOptions};
use taskgeo::io;
use taskgeo::model::{bhattacharyya, great_circle_half};
use taskgeo::{FeatureMatrix, GeodesicSegment, PredictionMatrix};

fn pmat(n: usize, c: usize) -> impl Strategy<Value = PredictionMatrix> {
    prop::collection::vec(1e-6f64..1.0, n * c).prop_map(move |raw| {
        let probs: Vec<f64> = raw
            .chunks_exact(c)
            .flat_map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(move |x| x / s).collect::<Vec<_>>()
            })
            .collect();
        PredictionMatrix::new(n, c, probs).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (PredictionMatrix, PredictionMatrix)> {
    (1usize..12, 2usize..6).prop_flat_map(|(n, c)| (pmat(n, c), pmat(n, c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergences_are_symmetric((p, q) in pair()) {
        let a = bhattacharyya(&p, &q).unwrap().aggregate;
        let b = bhattacharyya(&q, &p).unwrap().aggregate;
        prop_assert!((a - b).abs() <= 1e-15);
        prop_assert!(a >= 0.0);
        prop_assert!((a - naive_bhattacharyya(&p, &q)).abs() < 1e-12);
        let g = great_circle_half(&p, &q).unwrap().aggregate;
        prop_assert!((g - great_circle_half(&q, &p).unwrap().aggregate).abs() <= 1e-15);
        prop_assert!((g - naive_great_circle(&p, &q)).abs() < 1e-7);
    }

    #[test]
    fn divergences_ignore_class_order((p, q) in pair(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..p.n_classes()).collect();
        perm.shuffle(&mut rng(seed));
        let a = bhattacharyya(&p, &q).unwrap().aggregate;
        let b = bhattacharyya(&p.permute_columns(&perm).unwrap(), &q.permute_columns(&perm).unwrap()).unwrap().aggregate;
        prop_assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn bhattacharyya_matches_half_angle_near_zero(p in pmat(4, 3), eps in 1e-4f64..1e-2) {
        let q = mix(&p, &PredictionMatrix::new(4, 3, vec![1.0 / 3.0; 12]).unwrap(), eps);
        let db = bhattacharyya(&p, &q).unwrap().aggregate;
        let dg = great_circle_half(&p, &q).unwrap().aggregate;
        prop_assume!(dg > 1e-7);
        prop_assert!((2.0 * db / (dg * dg) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn geodesic_has_constant_speed((p, q) in pair(), lambda in 0.0f64..1.0) {
        let seg = GeodesicSegment::new(p.clone(), q.clone()).unwrap();
        let x = seg.point(lambda).unwrap();
        for n in 0..p.n_samples() {
            let total = half_angle(p.row(n), q.row(n));
            prop_assert!((half_angle(p.row(n), x.row(n)) - lambda * total).abs() < 1e-9);
            prop_assert!((half_angle(x.row(n), q.row(n)) - (1.0 - lambda) * total).abs() < 1e-9);
        }
        let oracle = slerp_oracle(&p, &q, lambda);
        prop_assert!(max_abs_diff(x.as_slice(), oracle.as_slice()) < 1e-10);
    }

    #[test]
    fn reversed_geodesic_runs_backwards((p, q) in pair(), lambda in 0.0f64..1.0) {
        let seg = GeodesicSegment::new(p, q).unwrap();
        let a = seg.point(lambda).unwrap();
        let b = seg.reversed().point(1.0 - lambda).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn imprinting_is_rotation_equivariant(seed in any::<u64>(), d in 2usize..7, normalize in any::<bool>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let labels = random_labels(&mut r, 20, 3);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| r.random::<f64>() - 0.3).collect()).collect();
        let q = random_orthogonal(&mut r, d);
        let opts = ImprintOptions { normalize_features: normalize };
        let a = imprint(&FeatureMatrix::from_rows(&rows).unwrap(), &labels, opts).unwrap();
        let rotated: Vec<Vec<f64>> = rows.iter().map(|x| mat_vec(&q, x)).collect();
        let b = imprint(&FeatureMatrix::from_rows(&rotated).unwrap(), &labels, opts).unwrap();
        for k in 0..3 {
            prop_assert!(max_abs_diff(&mat_vec(&q, a.row(k)), b.row(k)) < 1e-12);
        }
    }

    #[test]
    fn imprinting_ignores_per_class_scale(seed in any::<u64>(), s in prop::collection::vec(0.01f64..100.0, 3)) {
        use rand::Rng;
        let mut r = rng(seed);
        let labels = random_labels(&mut r, 15, 3);
        let rows: Vec<Vec<f64>> = (0..15).map(|_| (0..4).map(|_| r.random::<f64>() - 0.3).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .zip(labels.as_slice())
            .map(|(x, &y)| x.iter().map(|v| v * s[y]).collect())
            .collect();
        let a = imprint(&FeatureMatrix::from_rows(&rows).unwrap(), &labels, ImprintOptions::default()).unwrap();
        let b = imprint(&FeatureMatrix::from_rows(&scaled).unwrap(), &labels, ImprintOptions::default()).unwrap();
        prop_assert!(max_abs_diff(a.weights(), b.weights()) < 1e-12);
    }

    #[test]
    fn stress_is_monotone_in_k(seed in any::<u64>(), n in 2usize..20) {
        let mut r = rng(seed);
        let models: Vec<_> = (0..n).map(|_| random_pmat(&mut r, 6, 4)).collect();
        let d = pairwise_bhattacharyya(&models, 5).unwrap();
        let e = inpca(&d, n, InpcaOptions::default()).unwrap();
        let curve = e.stress_curve();
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        prop_assert_eq!(curve[n - 1], 1.0);
        for k in 1..=n {
            prop_assert_eq!(curve[k - 1], explained_stress(e.eigenvalues(), k).unwrap());
        }
    }

    #[test]
    fn full_embedding_is_isometric(seed in any::<u64>(), n in 2usize..15) {
        let mut r = rng(seed);
        let models: Vec<_> = (0..n).map(|_| random_pmat(&mut r, 5, 3)).collect();
        let d = pairwise_bhattacharyya(&models, 4).unwrap();
        let e = inpca(&d, n, InpcaOptions::default()).unwrap();
        for u in 0..n {
            for v in 0..n {
                prop_assert!((e.signed_sq_distance(u, v, n) - d.get(u, v)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn binary_formats_round_trip(p in pmat(5, 4), upper in prop::collection::vec(0.0f64..10.0, 10)) {
        prop_assert_eq!(io::decode_pmat(&io::encode_pmat(&p)).unwrap(), p.clone());
        prop_assert_eq!(io::decode_pmat_csv(&io::encode_pmat_csv(&p)).unwrap(), p);
        let d = DistanceMatrix::from_upper(5, &upper).unwrap();
        prop_assert_eq!(io::decode_dmat(&io::encode_dmat(&d)).unwrap(), d);
    }
}
