use feataug::classifier::ClassifierTrainConfig;
use feataug::cvae::{train_cvae, CvaeTrainConfig};
use feataug::dataio::{EmbeddingDataset, LabelVocab};
use feataug::fsi::{
    full_data_augment, markdown_table, read_rows, result_rows, results_from_rows, run_fsi, seed_sweep, write_rows,
    AugSize, FullDataSpec, GeneratorConfigs, SimulationSpec,
};
use feataug::rng::{rng_from_seed, symmetric_unit};
use feataug::synthgen::{generate_mixture, snipslike_spec};
use feataug::{DatasetBundle, Jobs, Method};

fn small_bundle() -> DatasetBundle {
    generate_mixture(&snipslike_spec(8, 6.0, 3).unwrap().with_counts(40, 8, 8), 4).unwrap()
}

fn quick_generators() -> GeneratorConfigs {
    let mut g = GeneratorConfigs::default();
    g.cvae.epochs = 2;
    g.cvae.max_rows_per_class = Some(10);
    g.delta.epochs = 2;
    g.delta.max_rows_per_class = Some(10);
    g
}

fn quick_spec(methods: Vec<Method>) -> SimulationSpec {
    SimulationSpec {
        k: 3,
        n_aug: vec![5, 20],
        methods,
        repeats: 2,
        classifier: ClassifierTrainConfig { epochs: 6, ..Default::default() },
        generators: quick_generators(),
        ..SimulationSpec::new(1, 31)
    }
}

#[test]
fn fsi_layout_and_determinism() {
    let bundle = small_bundle();
    let spec = quick_spec(Method::ALL.to_vec());
    let a = run_fsi(&bundle, &spec, Jobs::Sequential).unwrap();
    assert_eq!(a.baseline.runs.len(), 2);
    assert_eq!(a.cells.len(), 2 * Method::ALL.len());
    for (i, cell) in a.cells.iter().enumerate() {
        let size = if i < Method::ALL.len() { 5 } else { 20 };
        assert_eq!(cell.size, AugSize::Count(size));
        assert_eq!(cell.method, Some(Method::ALL[i % Method::ALL.len()]));
        assert!(cell.runs.iter().all(|r| (0.0..=1.0).contains(r)));
    }
    let b = run_fsi(&bundle, &spec, Jobs::All).unwrap();
    assert_eq!(a, b, "scheduling must not change results");
}

#[test]
fn baseline_does_not_depend_on_the_method_list() {
    let bundle = small_bundle();
    let all = run_fsi(&bundle, &quick_spec(Method::ALL.to_vec()), Jobs::Sequential).unwrap();
    let one = run_fsi(&bundle, &quick_spec(vec![Method::Linear]), Jobs::Sequential).unwrap();
    assert_eq!(all.baseline, one.baseline);
    assert_eq!(all.cell(Method::Linear, AugSize::Count(20)), one.cell(Method::Linear, AugSize::Count(20)));
}

#[test]
fn fsi_rejects_too_few_target_rows() {
    let bundle = small_bundle();
    let spec = SimulationSpec { k: 41, ..quick_spec(vec![Method::Upsample]) };
    assert!(run_fsi(&bundle, &spec, Jobs::Sequential).is_err());
    // The sweep checks every k before doing any work.
    let err = seed_sweep(&bundle, &spec, &[2, 41], Jobs::Sequential).unwrap_err();
    assert!(err.to_string().contains("41"), "{err}");
}

#[test]
fn sweep_has_one_result_per_k() {
    let bundle = small_bundle();
    let spec = quick_spec(vec![Method::Upsample, Method::Extra]);
    let sweep = seed_sweep(&bundle, &spec, &[2, 5], Jobs::Sequential).unwrap();
    assert_eq!(sweep.iter().map(|s| s.0).collect::<Vec<_>>(), vec![2, 5]);
    for (_, r) in &sweep {
        assert_eq!(r.cells.len(), 4);
    }
    let direct = run_fsi(&bundle, &SimulationSpec { k: 5, ..spec }, Jobs::Sequential).unwrap();
    assert_eq!(sweep[1].1, direct);
}

#[test]
fn full_data_without_methods_is_baseline_only() {
    let bundle = small_bundle();
    let spec = FullDataSpec {
        methods: vec![],
        repeats: 2,
        classifier: ClassifierTrainConfig { epochs: 4, ..Default::default() },
        ..FullDataSpec::new(5)
    };
    let r = full_data_augment(&bundle, &spec, Jobs::Sequential).unwrap();
    assert!(r.cells.is_empty());
    assert_eq!(r.baseline.runs.len(), 2);
}

#[test]
fn full_data_cells_follow_fractions() {
    let bundle = small_bundle();
    let spec = FullDataSpec {
        fractions: vec![0.1, 0.5],
        methods: vec![Method::Upsample, Method::DeltaS],
        repeats: 1,
        classifier: ClassifierTrainConfig { epochs: 4, ..Default::default() },
        generators: quick_generators(),
        ..FullDataSpec::new(5)
    };
    let r = full_data_augment(&bundle, &spec, Jobs::Sequential).unwrap();
    let sizes: Vec<AugSize> = r.cells.iter().map(|c| c.size).collect();
    assert_eq!(sizes, [0.1, 0.1, 0.5, 0.5].map(AugSize::Fraction));
    assert!(!r.baseline.sd_defined);
}

#[test]
fn results_survive_a_csv_round_trip() {
    let bundle = small_bundle();
    let r = run_fsi(&bundle, &quick_spec(vec![Method::Perturb, Method::Cvae]), Jobs::Sequential).unwrap();
    let mut buf = Vec::new();
    write_rows(&result_rows("fsi", "AddToPlaylist", Some(3), &r), &mut buf).unwrap();
    let back = results_from_rows(&read_rows(buf.as_slice()).unwrap()).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].0, Some(3));
    assert_eq!(back[0].1, r);
    assert_eq!(markdown_table(&back[0].1), markdown_table(&r));
}

#[test]
fn cvae_collapses_onto_a_single_point() {
    let dim = 16;
    let mut rng = rng_from_seed(21);
    let point: Vec<f64> = (0..dim).map(|_| symmetric_unit(&mut rng)).collect();
    let mut ds = EmbeddingDataset::new(dim, LabelVocab::from_names(["only"]).unwrap()).unwrap();
    for _ in 0..64 {
        ds.push(0, &point).unwrap();
    }
    let (_, trace) = train_cvae(&ds, &CvaeTrainConfig { seed: 3, ..Default::default() }).unwrap();
    let last = trace.last().unwrap();
    assert!(last.reconstruction < 1e-2 * dim as f64, "{last:?}");
    assert!(last.kl >= 0.0);
}
