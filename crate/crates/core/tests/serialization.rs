use std::path::Path;

use tmf_core::checkpoint::Checkpoint;
use tmf_core::config::RunConfig;
use tmf_core::ctc::OccupancyMode;
use tmf_core::experiment::ExperimentConfig;
use tmf_core::model::{train, TrainMode, TrainState};
use tmf_core::synth::{build_corpus, DatasetConfig};

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse_and_rewrite_identically() {
    for mode in ["ce", "fmf", "ctc", "tmf"] {
        let path = configs_dir().join(format!("{mode}.json"));
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.mode().to_string(), mode);
        assert_eq!(cfg.to_json(), text, "{}", path.display());
    }
    let text = std::fs::read_to_string(configs_dir().join("experiment.json")).unwrap();
    let exp: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(exp, ExperimentConfig::default());
    assert_eq!(RunConfig::from_json(&exp.run_config(TrainMode::Tmf, 1).to_json()).unwrap(), exp.run_config(TrainMode::Tmf, 1));
}

#[test]
fn trained_checkpoint_round_trips_bit_exactly() {
    let mut cfg = RunConfig::for_mode(TrainMode::Tmf);
    cfg.data = DatasetConfig {
        train_sequences: 60,
        test_sequences: 5,
        ..DatasetConfig::default()
    };
    cfg.train.max_batches = 30;
    cfg.train.schedule.eval_interval = 10;
    cfg.train.lambda = 1e-2;
    cfg.train.occupancy_mode = OccupancyMode::FrameNormalized;
    let data = build_corpus(&cfg.data).unwrap();
    let mut state = TrainState::new(cfg.network.clone(), &cfg.train).unwrap();
    train(&mut state, &cfg.train, &data.train, &data.valid, &[], |_, _| Ok(())).unwrap();
    assert!(state.centers.as_ref().unwrap().center(1).unwrap().iter().any(|&c| c != 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cp.json");
    let cp = Checkpoint::new(cfg.train.clone(), state);
    cp.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, cp);
    let bits = |c: &Checkpoint| {
        let mut v: Vec<u64> = c.state.network.params().iter().map(|p| p.to_bits()).collect();
        v.extend(c.state.optimizer.first_moment.iter().map(|p| p.to_bits()));
        v.extend(c.state.optimizer.second_moment.iter().map(|p| p.to_bits()));
        let bank = c.state.centers.as_ref().unwrap();
        for k in bank.classes() {
            v.extend(bank.center(k).unwrap().iter().map(|p| p.to_bits()));
        }
        v
    };
    assert_eq!(bits(&back), bits(&cp));
    back.save(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), cp.to_json());
}
