use tmf_core::synth::{
    build_corpus, generate, noise_draws, read_jsonl, write_jsonl, DatasetConfig, GeneratorConfig, NoiseCondition,
};

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let kurt = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n / (var * var);
    (var, kurt)
}

#[test]
fn collapsed_labels_are_merged_framewise_labels() {
    for condition in NoiseCondition::ALL {
        let cfg = GeneratorConfig {
            seed: 17,
            ..GeneratorConfig::default()
        }
        .with_condition(condition);
        let samples = generate(&cfg, 1000).unwrap();
        assert_eq!(samples.len(), 1000);
        for s in &samples {
            let mut merged = s.framewise.clone();
            merged.dedup();
            assert_eq!(merged, s.collapsed.labels());
            assert_eq!(s.features.nrows(), s.framewise.len());
            assert!(s.frames() <= 40);
            assert!(s.frames() >= s.collapsed.min_frames());
        }
    }
}

#[test]
fn unseen_noise_differs_in_family_and_scale() {
    let cfg = GeneratorConfig::default();
    let seen = noise_draws(&cfg, NoiseCondition::Seen, 10_000).unwrap();
    let unseen = noise_draws(&cfg, NoiseCondition::Unseen, 10_000).unwrap();
    let (v_seen, k_seen) = moments(&seen);
    let (v_unseen, k_unseen) = moments(&unseen);
    assert!(v_unseen / v_seen >= 2.0, "{v_unseen} / {v_seen}");
    // Gaussian kurtosis is 3, uniform is 1.8
    assert!((k_seen - 3.0).abs() < 0.2, "{k_seen}");
    assert!((k_unseen - 1.8).abs() < 0.1, "{k_unseen}");
    assert!(noise_draws(&cfg, NoiseCondition::Clean, 100).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn nearest_mean_classifies_clean_frames() {
    let cfg = GeneratorConfig::default();
    let means = cfg.class_means();
    let (mut hits, mut frames) = (0usize, 0usize);
    for s in generate(&cfg, 300).unwrap() {
        for (row, &label) in s.features.outer_iter().zip(&s.framewise) {
            let nearest = (0..cfg.num_classes)
                .min_by(|&a, &b| {
                    let da = (&row - &means.row(a)).mapv(|v| v * v).sum();
                    let db = (&row - &means.row(b)).mapv(|v| v * v).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            hits += usize::from(nearest + 1 == label);
            frames += 1;
        }
    }
    let acc = hits as f64 / frames as f64;
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn files_round_trip_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        train_sequences: 50,
        test_sequences: 20,
        ..DatasetConfig::default()
    };
    let corpus = build_corpus(&cfg).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    write_jsonl(&a, &corpus.test_unseen).unwrap();
    let back = read_jsonl(&a).unwrap();
    assert_eq!(back, corpus.test_unseen);
    for (x, y) in back.iter().zip(&corpus.test_unseen) {
        assert!(x.features.iter().zip(y.features.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    write_jsonl(&b, &build_corpus(&cfg).unwrap().test_unseen).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn unseen_noise_stays_out_of_training() {
    let cfg = DatasetConfig {
        train_sequences: 100,
        test_sequences: 10,
        ..DatasetConfig::default()
    };
    let corpus = build_corpus(&cfg).unwrap();
    assert_eq!(corpus.train.len(), 100);
    assert_eq!(corpus.valid.len(), 10);
    for s in corpus.train.iter().chain(&corpus.valid) {
        assert_ne!(s.condition, NoiseCondition::Unseen);
    }
    assert!(corpus.train.iter().any(|s| s.condition == NoiseCondition::Seen));
    assert!(corpus.test_unseen.iter().all(|s| s.condition == NoiseCondition::Unseen));
}
