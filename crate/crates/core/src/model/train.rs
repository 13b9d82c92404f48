use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_set, Adam, AdamConfig, ModelError, Network, NetworkSpec, ScheduleAction, ScheduleConfig, ScheduleState};
use crate::ctc::{self, CtcError, ModifiedLabelSequence, OccupancyMatrix, OccupancyMode};
use crate::losses::{self, CenterBank, FusionConfig, FusionMode, LossError};
use crate::metrics::MetricsError;
use crate::synth::{NoiseCondition, SequenceSample};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training diverged at batch {batch}: {reason}")]
    Diverged { batch: u64, reason: String },
    #[error("data: {0}")]
    Data(String),
    #[error("config: {0}")]
    Config(String),
    #[error("eval hook: {0}")]
    Hook(String),
}

/// The four training criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Framewise cross entropy.
    Ce,
    /// Cross entropy plus center loss.
    Fmf,
    /// CTC likelihood.
    Ctc,
    /// CTC likelihood plus expected center loss.
    Tmf,
}

impl TrainMode {
    pub fn is_temporal(self) -> bool {
        matches!(self, Self::Ctc | Self::Tmf)
    }

    pub fn uses_centers(self) -> bool {
        matches!(self, Self::Fmf | Self::Tmf)
    }

    pub fn fusion_mode(self) -> FusionMode {
        if self.is_temporal() {
            FusionMode::Temporal
        } else {
            FusionMode::Framewise
        }
    }

    /// Network outputs for data with `labels` non-blank classes.
    pub fn output_classes(self, labels: usize) -> usize {
        if self.is_temporal() {
            labels + 1
        } else {
            labels
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ce => "ce",
            Self::Fmf => "fmf",
            Self::Ctc => "ctc",
            Self::Tmf => "tmf",
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Balancing factor; ignored by `ce` and `ctc`.
    pub lambda: f64,
    pub occupancy_mode: OccupancyMode,
    pub center_momentum: f64,
    pub occupancy_threshold: f64,
    pub optimizer: AdamConfig,
    pub schedule: ScheduleConfig,
    /// Sequences per batch; gradients are summed over the batch.
    pub batch_size: usize,
    pub max_batches: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Tmf,
            lambda: losses::LAMBDA_NOISY,
            occupancy_mode: OccupancyMode::PaperLiteral,
            center_momentum: losses::DEFAULT_CENTER_MOMENTUM,
            occupancy_threshold: losses::DEFAULT_OCCUPANCY_THRESHOLD,
            optimizer: AdamConfig::default(),
            schedule: ScheduleConfig::default(),
            batch_size: 8,
            max_batches: 20_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.fusion().validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.schedule.eval_interval == 0 {
            return Err(TrainError::Config("schedule.eval_interval must be >= 1".into()));
        }
        if !(self.optimizer.learning_rate.is_finite() && self.optimizer.learning_rate >= 0.0) {
            return Err(TrainError::Config("optimizer.learning_rate must be finite and >= 0".into()));
        }
        if !(self.center_momentum.is_finite() && self.center_momentum >= 0.0) {
            return Err(TrainError::Config("center_momentum must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            lambda: if self.mode.uses_centers() { self.lambda } else { 0.0 },
            mode: self.mode.fusion_mode(),
            occupancy_mode: self.occupancy_mode,
        }
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub network: Network,
    pub optimizer: Adam,
    pub schedule: ScheduleState,
    pub centers: Option<CenterBank>,
    pub batches_seen: u64,
    pub evals: u64,
    pub finished: bool,
}

impl TrainState {
    pub fn new(spec: NetworkSpec, cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let network = Network::init(spec, cfg.seed)?;
        let spec = network.spec();
        let centers = match cfg.mode {
            TrainMode::Tmf => Some(CenterBank::for_temporal(
                spec.num_classes,
                spec.feature_dim,
                cfg.center_momentum,
                cfg.occupancy_threshold,
            )?),
            TrainMode::Fmf => Some(CenterBank::for_framewise(spec.num_classes, spec.feature_dim, cfg.center_momentum)?),
            TrainMode::Ce | TrainMode::Ctc => None,
        };
        let optimizer = Adam::new(cfg.optimizer, network.params().len());
        Ok(Self {
            network,
            optimizer,
            schedule: ScheduleState::new(cfg.schedule),
            centers,
            batches_seen: 0,
            evals: 0,
            finished: false,
        })
    }
}

/// Framewise targets as output indices (label `j` is output `j - 1`).
pub(crate) fn framewise_targets(sample: &SequenceSample, classes: usize) -> Result<Vec<usize>, TrainError> {
    sample
        .framewise
        .iter()
        .map(|&l| match l.checked_sub(1) {
            Some(k) if k < classes => Ok(k),
            _ => Err(TrainError::Data(format!("label {l} does not fit {classes} framewise outputs"))),
        })
        .collect()
}

/// Center-bank work left over from one sequence, applied after the
/// parameter step.
#[derive(Debug, Clone)]
pub enum CenterWork {
    Temporal {
        gamma: OccupancyMatrix,
        zp: ModifiedLabelSequence,
    },
    Framewise {
        targets: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct SequenceStep {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub features: Array2<f64>,
    pub center_work: Option<CenterWork>,
}

/// Loss and parameter gradient for one sequence under the configured
/// criterion. Centers are treated as constants.
pub fn sequence_step(
    network: &Network,
    centers: Option<&CenterBank>,
    sample: &SequenceSample,
    cfg: &TrainConfig,
) -> Result<SequenceStep, TrainError> {
    let pass = network.forward(sample.features.view())?;
    let weights = network.output_weights();
    let fusion = cfg.fusion();
    let classes = network.spec().num_classes;
    let need_bank = || centers.ok_or_else(|| TrainError::Config(format!("{} training needs a center bank", cfg.mode)));

    let (loss, delta_logits, delta_features, center_work) = match cfg.mode {
        TrainMode::Ce | TrainMode::Fmf => {
            let targets = framewise_targets(sample, classes)?;
            let delta_ml = losses::ce_grad_logits(&pass.posteriors, &targets)?;
            if cfg.mode == TrainMode::Ce {
                let loss = losses::cross_entropy(&pass.posteriors, &targets)?;
                let fused = delta_ml.dot(&weights);
                (loss, delta_ml, fused, None)
            } else {
                let bank = need_bank()?;
                let loss = losses::fmf_loss(&pass.posteriors, &targets, pass.features(), bank, &fusion)?;
                let aux = losses::center_loss_grad(pass.features(), &targets, bank)?;
                let fused = losses::fuse_feature_grad(delta_ml.view(), weights, aux.view(), fusion.lambda)?;
                (loss, delta_ml, fused, Some(CenterWork::Framewise { targets }))
            }
        }
        TrainMode::Ctc | TrainMode::Tmf => {
            let zp = ctc::extend_with_blanks(&sample.collapsed);
            let tables = ctc::forward_backward(&pass.posteriors, &zp)?;
            let ml = -tables.log_seq_prob;
            let delta_ml = ctc::ctc_grad_logits(&tables, &pass.posteriors)?;
            if cfg.mode == TrainMode::Ctc {
                let fused = delta_ml.dot(&weights);
                (ml, delta_ml, fused, None)
            } else {
                let bank = need_bank()?;
                let gamma = ctc::occupancy(&tables, &pass.posteriors, fusion.occupancy_mode)?;
                let ecl = losses::ecl(pass.features(), &gamma, &zp, bank)?;
                let loss = losses::tmf_loss(ml, ecl, &fusion)?;
                let aux = losses::ecl_grad_features(pass.features(), &gamma, &zp, bank)?;
                let fused = losses::fuse_feature_grad(delta_ml.view(), weights, aux.view(), fusion.lambda)?;
                (loss, delta_ml, fused, Some(CenterWork::Temporal { gamma, zp }))
            }
        }
    };

    let grads = network.backward(&pass, delta_logits.view(), delta_features.view())?;
    Ok(SequenceStep {
        loss,
        grads,
        features: pass.features().to_owned(),
        center_work,
    })
}

/// One row of the training metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub eval_index: u64,
    pub batches_seen: u64,
    pub learning_rate: f64,
    /// Mean per-sequence training loss since the previous evaluation.
    pub train_loss: f64,
    pub validation_score: f64,
    /// `(condition, token error rate, frame accuracy)` per monitored set.
    pub conditions: Vec<(NoiseCondition, f64, Option<f64>)>,
}

impl MetricsRow {
    pub const COLUMNS: [&'static str; 11] = [
        "eval",
        "batches_seen",
        "learning_rate",
        "train_loss",
        "validation_score",
        "clean_ter",
        "clean_frame_acc",
        "seen_ter",
        "seen_frame_acc",
        "unseen_ter",
        "unseen_frame_acc",
    ];

    pub fn record(&self) -> Vec<String> {
        let mut out = vec![
            self.eval_index.to_string(),
            self.batches_seen.to_string(),
            self.learning_rate.to_string(),
            self.train_loss.to_string(),
            self.validation_score.to_string(),
        ];
        for condition in NoiseCondition::ALL {
            match self.conditions.iter().find(|(c, ..)| *c == condition) {
                Some((_, ter, acc)) => {
                    out.push(ter.to_string());
                    out.push(acc.map(|a| a.to_string()).unwrap_or_default());
                }
                None => out.extend([String::new(), String::new()]),
            }
        }
        out
    }
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order
}

/// Runs (or resumes) training until `max_batches` or early stopping.
///
/// Each batch: sum the per-sequence gradients, take an Adam step, then move
/// the centers using the features and occupancies computed before the step.
/// Every `eval_interval` batches the validation score drives the plateau
/// schedule and `on_eval` receives the state and the new metrics row.
pub fn train<F>(
    state: &mut TrainState,
    cfg: &TrainConfig,
    train_set: &[SequenceSample],
    valid_set: &[SequenceSample],
    monitors: &[(NoiseCondition, &[SequenceSample])],
    mut on_eval: F,
) -> Result<Vec<MetricsRow>, TrainError>
where
    F: FnMut(&TrainState, &MetricsRow) -> Result<(), TrainError>,
{
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(TrainError::Data("training and validation sets must be non-empty".into()));
    }
    if state.centers.is_some() != cfg.mode.uses_centers() {
        return Err(TrainError::Config(format!("state does not match {} training", cfg.mode)));
    }
    let n = train_set.len();
    let per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let mut order_for: Option<(u64, Vec<usize>)> = None;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let mut rows = Vec::new();

    while !state.finished && state.batches_seen < cfg.max_batches {
        let batch = state.batches_seen;
        let epoch = batch / per_epoch;
        if order_for.as_ref().is_none_or(|(e, _)| *e != epoch) {
            order_for = Some((epoch, epoch_order(cfg.seed, epoch, n)));
        }
        let order = &order_for.as_ref().expect("set above").1;
        let start = (batch % per_epoch) as usize * cfg.batch_size;
        let members = &order[start..(start + cfg.batch_size).min(n)];

        let mut grads = vec![0.0; state.network.params().len()];
        let mut pending = Vec::with_capacity(members.len());
        for &i in members {
            let step = sequence_step(&state.network, state.centers.as_ref(), &train_set[i], cfg)?;
            if !step.loss.is_finite() {
                return Err(TrainError::Diverged {
                    batch,
                    reason: format!("loss {}", step.loss),
                });
            }
            for (g, s) in grads.iter_mut().zip(&step.grads) {
                *g += s;
            }
            loss_sum += step.loss;
            loss_count += 1;
            pending.push((step.features, step.center_work));
        }
        match state.optimizer.step(state.network.params_mut(), &grads) {
            Err(ModelError::NonFiniteGradient { index }) => {
                return Err(TrainError::Diverged {
                    batch,
                    reason: format!("gradient entry {index} is not finite"),
                })
            }
            other => other?,
        }
        if let Some(bank) = state.centers.as_mut() {
            for (features, work) in pending {
                match work {
                    Some(CenterWork::Temporal { gamma, zp }) => bank.update_temporal(features.view(), &gamma, &zp)?,
                    Some(CenterWork::Framewise { targets }) => bank.update_framewise(features.view(), &targets)?,
                    None => {}
                }
            }
        }
        state.batches_seen += 1;
        if state.network.params().iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Diverged {
                batch,
                reason: "non-finite parameter".into(),
            });
        }

        if state.batches_seen % cfg.schedule.eval_interval == 0 {
            let validation = evaluate_set(&state.network, cfg.mode, valid_set)?;
            match state.schedule.tick(validation.score) {
                ScheduleAction::Continue => {}
                ScheduleAction::HalveLr => state.optimizer.halve_learning_rate(),
                ScheduleAction::EarlyStop => state.finished = true,
            }
            state.evals += 1;
            let mut conditions = Vec::with_capacity(monitors.len());
            for (condition, samples) in monitors {
                let e = evaluate_set(&state.network, cfg.mode, samples)?;
                conditions.push((*condition, e.token_error_rate, e.frame_accuracy));
            }
            let row = MetricsRow {
                eval_index: state.evals,
                batches_seen: state.batches_seen,
                learning_rate: state.optimizer.learning_rate,
                train_loss: loss_sum / loss_count.max(1) as f64,
                validation_score: validation.score,
                conditions,
            };
            loss_sum = 0.0;
            loss_count = 0;
            on_eval(state, &row)?;
            rows.push(row);
        }
    }
    if state.batches_seen >= cfg.max_batches {
        state.finished = true;
    }
    Ok(rows)
}
