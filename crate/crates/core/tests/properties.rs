use std::path::Path;

use feataug::augment::{extrapolate, extrapolate_at, linear_delta, linear_delta_at, sample_pairs, sample_triples, upsample, ExtraConfig};
use feataug::dataio::{format_embeddings, parse_embeddings, remove_label, subsample_class, EmbeddingDataset, LabelVocab};
use feataug::fsi::{aggregate, project_2d, spearman};
use feataug::nn::loss::{kl_diag_gaussian, softmax};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = EmbeddingDataset> {
    (1usize..6, 1usize..5).prop_flat_map(|(dim, classes)| {
        let row = (0..classes, prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), dim));
        prop::collection::vec(row, 0..20).prop_map(move |rows| {
            let vocab = LabelVocab::from_names((0..classes).map(|c| format!("intent_{c}"))).unwrap();
            let mut ds = EmbeddingDataset::new(dim, vocab).unwrap();
            for (label, v) in rows {
                ds.push(label, &v).unwrap();
            }
            ds
        })
    })
}

fn seeds_strategy(max_k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..max_k, 1usize..5).prop_flat_map(|(k, dim)| {
        prop::collection::vec(prop::collection::vec(-1000i32..1000, dim), k)
            .prop_map(|s| s.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect())
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn embv1_round_trip_is_exact(ds in dataset_strategy()) {
        let text = format_embeddings(&ds);
        let back = parse_embeddings(&text, Path::new("mem")).unwrap();
        prop_assert_eq!(back.labels(), ds.labels());
        let same_bits = back.values().iter().zip(ds.values()).all(|(a, b)| a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0));
        prop_assert!(same_bits);
        prop_assert_eq!(format_embeddings(&back), text);
    }

    #[test]
    fn upsample_balances_copies(seeds in seeds_strategy(8), n in 0usize..50) {
        prop_assume!(seeds.iter().enumerate().all(|(i, a)| seeds[..i].iter().all(|b| b != a)));
        let out = upsample(&seeds, n).unwrap();
        prop_assert_eq!(out.len(), n);
        let counts: Vec<usize> = seeds.iter().map(|s| out.iter().filter(|o| *o == s).count()).collect();
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn exhaustive_linear_delta_mean_is_seed_mean(seeds in seeds_strategy(6)) {
        let k = seeds.len();
        let triples: Vec<_> = (0..k)
            .flat_map(|i| (0..k).flat_map(move |j| (0..k).map(move |l| (i, j, l))))
            .filter(|(i, j, _)| i != j)
            .collect();
        let out = linear_delta_at(&seeds, &triples);
        for d in 0..seeds[0].len() {
            let total: f64 = out.iter().map(|v| v[d]).sum();
            let seed_total: f64 = seeds.iter().map(|v| v[d]).sum();
            // Integer-valued inputs keep every sum exact.
            prop_assert_eq!(total * k as f64, seed_total * out.len() as f64);
        }
    }

    #[test]
    fn sampled_indices_are_valid(k in 2usize..20, n in 0usize..100, seed in any::<u64>()) {
        let triples = sample_triples(k, n, seed);
        prop_assert_eq!(triples.len(), n);
        prop_assert!(triples.iter().all(|&(i, j, l)| i != j && i < k && j < k && l < k));
        let pairs = sample_pairs(k, n, seed);
        prop_assert!(pairs.iter().all(|&(i, j)| i != j && i < k && j < k));
    }

    #[test]
    fn generators_follow_their_sampled_indices(seeds in seeds_strategy(8), n in 1usize..30, seed in any::<u64>(), lambda in -2.0f64..3.0) {
        let k = seeds.len();
        prop_assert_eq!(linear_delta(&seeds, n, seed).unwrap(), linear_delta_at(&seeds, &sample_triples(k, n, seed)));
        let cfg = ExtraConfig { lambda };
        prop_assert_eq!(extrapolate(&seeds, n, &cfg, seed).unwrap(), extrapolate_at(&seeds, &sample_pairs(k, n, seed), lambda));
    }

    #[test]
    fn extrapolation_stays_on_the_seed_line(seeds in seeds_strategy(6), lambda in -3.0f64..3.0) {
        let k = seeds.len();
        let pairs: Vec<_> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).filter(|(i, j)| i != j).collect();
        for (y, &(i, j)) in extrapolate_at(&seeds, &pairs, lambda).iter().zip(&pairs) {
            let (a, b) = (&seeds[i], &seeds[j]);
            let scale = dist(a, b).max(1.0);
            // y - a must equal lambda (a - b).
            let expected: Vec<f64> = a.iter().zip(b).map(|(x, z)| x + lambda * (x - z)).collect();
            prop_assert!(dist(y, &expected) <= 1e-12 * scale * (1.0 + lambda.abs()));
        }
    }

    #[test]
    fn subsample_keeps_k_targets_and_all_other_rows(ds in dataset_strategy(), label in 0usize..4, k in 1usize..8, seed in any::<u64>()) {
        prop_assume!(label < ds.num_classes());
        let available = ds.count_label(label);
        match subsample_class(&ds, label, k, seed) {
            Ok((seeds, rest)) => {
                prop_assert!(k <= available);
                prop_assert_eq!(seeds.len(), k);
                prop_assert!(seeds.labels().iter().all(|&l| l == label));
                prop_assert_eq!(rest, remove_label(&ds, label));
                let again = subsample_class(&ds, label, k, seed).unwrap().0;
                prop_assert_eq!(again, seeds);
            }
            Err(_) => prop_assert!(k > available),
        }
    }

    #[test]
    fn aggregate_bounds_and_shift_invariance(values in prop::collection::vec(0.0f64..1.0, 1..30), shift in -5.0f64..5.0) {
        let s = aggregate(&values).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-12 && s.mean <= hi + 1e-12);
        prop_assert!(s.sd >= 0.0);
        prop_assert_eq!(s.sd_defined, values.len() > 1);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let t = aggregate(&shifted).unwrap();
        prop_assert!((t.mean - s.mean - shift).abs() < 1e-9);
        prop_assert!((t.sd - s.sd).abs() < 1e-9);
    }

    #[test]
    fn spearman_is_rank_based(x in prop::collection::vec(-100.0f64..100.0, 3..20)) {
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 7.0).collect();
        let rho = spearman(&x, &y);
        let distinct = x.iter().any(|v| *v != x[0]);
        let expected = if distinct { 1.0 } else { 0.0 };
        prop_assert!((rho - expected).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &neg) + rho).abs() < 1e-12);
    }

    #[test]
    fn projection_of_planar_data_preserves_distances(
        coords in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..15),
        basis_seed in prop::collection::vec(-1.0f64..1.0, 12),
        offset in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        // Orthonormal pair in R^6 by Gram-Schmidt.
        let (u0, v0) = basis_seed.split_at(6);
        let nu = u0.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(nu > 0.1);
        let u: Vec<f64> = u0.iter().map(|a| a / nu).collect();
        let dot: f64 = u.iter().zip(v0).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = v0.iter().zip(&u).map(|(b, a)| b - dot * a).collect();
        let nw = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assume!(nw > 0.1);
        let v: Vec<f64> = w.iter().map(|a| a / nw).collect();
        let points: Vec<Vec<f64>> = coords
            .iter()
            .map(|&(a, b)| (0..6).map(|d| offset[d] + a * u[d] + b * v[d]).collect())
            .collect();
        let groups = vec![String::from("g"); points.len()];
        let projected = project_2d(&points, &groups).unwrap();
        for i in 0..points.len() {
            for j in 0..i {
                let orig = dist(&points[i], &points[j]);
                let p = dist(&[projected[i].x, projected[i].y], &[projected[j].x, projected[j].y]);
                prop_assert!((orig - p).abs() < 1e-9, "{} vs {}", orig, p);
            }
        }
    }

    #[test]
    fn kl_is_nonnegative_and_additive(mu in prop::collection::vec(-5.0f64..5.0, 1..8), lv in prop::collection::vec(-4.0f64..4.0, 8)) {
        let lv = &lv[..mu.len()];
        let total = kl_diag_gaussian(&mu, lv);
        prop_assert!(total >= 0.0);
        let parts: f64 = mu.iter().zip(lv).map(|(m, l)| kl_diag_gaussian(&[*m], &[*l])).sum();
        prop_assert!((total - parts).abs() < 1e-9 * (1.0 + total));
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
