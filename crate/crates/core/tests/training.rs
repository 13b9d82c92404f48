use tmf_core::config::RunConfig;
use tmf_core::model::{evaluate_set, train, MetricsRow, TrainMode, TrainState};
use tmf_core::synth::{build_corpus, Corpus, DatasetConfig, GeneratorConfig, NoiseCondition};

fn corpus(num_classes: usize, train_sequences: usize) -> Corpus {
    build_corpus(&DatasetConfig {
        generator: GeneratorConfig {
            num_classes,
            seed: 9,
            ..GeneratorConfig::default()
        },
        train_sequences,
        test_sequences: 50,
        ..DatasetConfig::default()
    })
    .unwrap()
}

fn small_config(mode: TrainMode, num_classes: usize, lambda: f64) -> RunConfig {
    let mut cfg = RunConfig::for_mode(mode);
    cfg.data.generator.num_classes = num_classes;
    cfg.network.hidden = vec![16, 8];
    cfg.network.feature_dim = 8;
    cfg.network.num_classes = mode.output_classes(num_classes);
    cfg.train.lambda = lambda;
    cfg.train.optimizer.learning_rate = 3e-3;
    cfg.train.schedule.eval_interval = 50;
    cfg.train.max_batches = 300;
    cfg.train.seed = 4;
    cfg.validate().unwrap();
    cfg
}

fn run(cfg: &RunConfig, data: &Corpus) -> (TrainState, Vec<MetricsRow>) {
    let mut state = TrainState::new(cfg.network.clone(), &cfg.train).unwrap();
    let monitors = [(NoiseCondition::Clean, data.test_clean.as_slice())];
    let rows = train(&mut state, &cfg.train, &data.train, &data.valid, &monitors, |_, _| Ok(())).unwrap();
    (state, rows)
}

fn assert_finite(state: &TrainState) {
    assert!(state.network.params().iter().all(|p| p.is_finite()));
}

#[test]
fn ce_learns_a_separable_framewise_task() {
    let data = corpus(5, 400);
    let mut cfg = small_config(TrainMode::Ce, 5, 0.0);
    cfg.train.max_batches = 600;
    let (state, _) = run(&cfg, &data);
    assert_finite(&state);
    let eval = evaluate_set(&state.network, TrainMode::Ce, &data.test_clean).unwrap();
    let acc = eval.frame_accuracy.unwrap();
    assert!(acc >= 99.0, "{acc}");
}

#[test]
fn tmf_training_loss_falls_over_the_first_evaluations() {
    let data = corpus(3, 400);
    let cfg = small_config(TrainMode::Tmf, 3, 1e-3);
    let (state, rows) = run(&cfg, &data);
    assert_finite(&state);
    assert!(rows.len() >= 3);
    let losses: Vec<f64> = rows.iter().map(|r| r.train_loss).collect();
    assert!(losses[1] < losses[0] && losses[2] < losses[1], "{losses:?}");
    let bank = state.centers.as_ref().unwrap();
    assert!(bank.center(0).is_none(), "blank must not own a center");
}

#[test]
fn zero_lambda_tmf_reproduces_ctc_bitwise() {
    let data = corpus(3, 200);
    let (ctc, ctc_rows) = run(&small_config(TrainMode::Ctc, 3, 0.0), &data);
    let (tmf, tmf_rows) = run(&small_config(TrainMode::Tmf, 3, 0.0), &data);
    assert_eq!(ctc_rows, tmf_rows);
    let bits = |s: &TrainState| s.network.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ctc), bits(&tmf));
    assert_eq!(ctc.optimizer, tmf.optimizer);
}

#[test]
fn zero_lambda_fmf_reproduces_ce_bitwise() {
    let data = corpus(3, 200);
    let (ce, ce_rows) = run(&small_config(TrainMode::Ce, 3, 0.0), &data);
    let (fmf, fmf_rows) = run(&small_config(TrainMode::Fmf, 3, 0.0), &data);
    assert_eq!(ce_rows, fmf_rows);
    let bits = |s: &TrainState| s.network.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ce), bits(&fmf));
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = corpus(3, 200);
    let cfg = small_config(TrainMode::Tmf, 3, 1e-2);
    let (a, rows_a) = run(&cfg, &data);
    let (b, rows_b) = run(&cfg, &data);
    assert_eq!(rows_a, rows_b);
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.train.seed = 5;
    let (c, _) = run(&other, &data);
    assert_ne!(a.network, c.network);
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let data = corpus(3, 200);
    let cfg = small_config(TrainMode::Tmf, 3, 1e-2);
    let (full, full_rows) = run(&cfg, &data);

    let mut first = cfg.clone();
    first.train.max_batches = 150;
    let (mut state, mut rows) = run(&first, &data);
    state.finished = false;
    let monitors = [(NoiseCondition::Clean, data.test_clean.as_slice())];
    rows.extend(train(&mut state, &cfg.train, &data.train, &data.valid, &monitors, |_, _| Ok(())).unwrap());
    assert_eq!(rows, full_rows);
    assert_eq!(state, full);
}
