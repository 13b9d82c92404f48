//! Verification suites: the alignment DP and the losses against the
//! exhaustive oracles, and every analytic gradient against central
//! differences.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ctc::{self, CtcError, LabelSequence, OccupancyMode};
use crate::losses::{self, CenterBank, LossError};
use crate::model::{sequence_step, ModelError, Network, NetworkSpec, TrainConfig, TrainError, TrainMode};
use crate::oracle::{self, OracleError, DEFAULT_EPSILON};
use crate::posterior::PosteriorMatrix;
use crate::synth::{NoiseCondition, SequenceSample};

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    /// Alignment DP and the CTC gradient only.
    Ctc,
    /// Occupancy, expected center loss and the center-loss gradients.
    Losses,
    /// Full-network gradients.
    Model,
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Self::All),
            "ctc" => Ok(Self::Ctc),
            "losses" => Ok(Self::Losses),
            "model" => Ok(Self::Model),
            _ => Err(format!("unknown scope {s:?}; expected all, ctc, losses or model")),
        }
    }
}

/// A deliberate defect injected into an analytic gradient, to prove the
/// suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Negate the expected-center-loss feature gradient.
    FlipEclSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    SeqProb,
    Partition,
    Consistency,
    CtcGrad,
    Occupancy,
    EclGrad,
    CenterGrad,
    TmfNetworkGrad,
    FmfNetworkGrad,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Self::SeqProb,
        Self::Partition,
        Self::Consistency,
        Self::CtcGrad,
        Self::Occupancy,
        Self::EclGrad,
        Self::CenterGrad,
        Self::TmfNetworkGrad,
        Self::FmfNetworkGrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SeqProb => "seq_prob_oracle",
            Self::Partition => "partition",
            Self::Consistency => "forward_backward_consistency",
            Self::CtcGrad => "ctc_logit_gradient",
            Self::Occupancy => "occupancy_ecl_oracle",
            Self::EclGrad => "ecl_feature_gradient",
            Self::CenterGrad => "center_loss_gradient",
            Self::TmfNetworkGrad => "tmf_network_gradient",
            Self::FmfNetworkGrad => "fmf_network_gradient",
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            Self::SeqProb | Self::Partition | Self::Consistency | Self::CtcGrad => Scope::Ctc,
            Self::Occupancy | Self::EclGrad | Self::CenterGrad => Scope::Losses,
            Self::TmfNetworkGrad | Self::FmfNetworkGrad => Scope::Model,
        }
    }

    pub fn cases(self) -> usize {
        match self {
            Self::SeqProb => 200,
            Self::Occupancy => 100,
            Self::Partition => 20,
            _ => 50,
        }
    }

    /// Absolute error for the oracle suites, relative error for the
    /// gradient suites.
    pub fn tolerance(self) -> f64 {
        match self {
            Self::SeqProb => 1e-10,
            Self::Partition | Self::Consistency | Self::Occupancy => 1e-9,
            Self::CtcGrad | Self::EclGrad | Self::CenterGrad => 1e-5,
            Self::TmfNetworkGrad | Self::FmfNetworkGrad => 1e-4,
        }
    }

    pub fn in_scope(self, scope: Scope) -> bool {
        scope == Scope::All || scope == self.scope()
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub scope: Scope,
    pub seed: u64,
    pub mutation: Mutation,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            scope: Scope::All,
            seed: 0,
            mutation: Mutation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<30} cases={:<4} max_error={:.3e} tol={:.0e} ({:.2}s)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.cases,
            self.max_error,
            self.tolerance,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs every suite in scope, in [`Suite::ALL`] order.
pub fn run_checks(opts: &CheckOptions) -> Result<Vec<SuiteReport>, CheckError> {
    Suite::ALL
        .iter()
        .filter(|s| s.in_scope(opts.scope))
        .map(|&s| run_suite(s, opts.seed, opts.mutation))
        .collect()
}

pub fn run_suite(suite: Suite, seed: u64, mutation: Mutation) -> Result<SuiteReport, CheckError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (suite as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let cases = suite.cases();
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        let err = match suite {
            Suite::SeqProb => seq_prob_case(&mut rng)?,
            Suite::Partition => partition_case(&mut rng)?,
            Suite::Consistency => consistency_case(&mut rng)?,
            Suite::CtcGrad => ctc_grad_case(&mut rng)?,
            Suite::Occupancy => occupancy_case(&mut rng)?,
            Suite::EclGrad => ecl_grad_case(&mut rng, mutation)?,
            Suite::CenterGrad => center_grad_case(&mut rng)?,
            Suite::TmfNetworkGrad => tmf_network_case(&mut rng)?,
            Suite::FmfNetworkGrad => fmf_network_case(&mut rng)?,
        };
        // NaN must fail the suite
        max_error = if err.is_nan() || max_error.is_nan() { f64::NAN } else { max_error.max(err) };
    }
    Ok(SuiteReport {
        suite,
        cases,
        max_error,
        tolerance: suite.tolerance(),
        elapsed: start.elapsed(),
    })
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Softmax of Gaussian logits, so every entry is strictly positive.
fn random_posteriors(rng: &mut ChaCha8Rng, frames: usize, classes: usize) -> PosteriorMatrix {
    PosteriorMatrix::from_logits(normal_matrix(rng, frames, classes, 1.5).view())
}

/// A random labeling over `1..classes` with `len` labels that fits in
/// `frames` frames; shortened until it does.
fn random_labels(rng: &mut ChaCha8Rng, classes: usize, frames: usize, len: usize) -> LabelSequence {
    let mut labels: Vec<usize> = (0..len).map(|_| rng.random_range(1..classes)).collect();
    loop {
        let z = LabelSequence::new(labels.clone()).expect("no blanks");
        if z.min_frames() <= frames {
            return z;
        }
        labels.pop();
    }
}

/// `(frames, classes, labeling)` with K in {2,3,4}, T in 2..=6, r in 0..=3.
fn small_instance(rng: &mut ChaCha8Rng) -> (PosteriorMatrix, LabelSequence) {
    let classes = rng.random_range(2..=4);
    let frames = rng.random_range(2..=6);
    let len = rng.random_range(0..=3);
    let z = random_labels(rng, classes, frames, len);
    (random_posteriors(rng, frames, classes), z)
}

fn random_bank(rng: &mut ChaCha8Rng, outputs: usize, dim: usize, temporal: bool) -> Result<CenterBank, LossError> {
    let mut bank = if temporal {
        CenterBank::for_temporal(outputs, dim, 1e-3, 0.01)?
    } else {
        CenterBank::for_framewise(outputs, dim, 1e-3)?
    };
    let classes: Vec<usize> = bank.classes().collect();
    for k in classes {
        bank.set_center(k, (0..dim).map(|_| rng.sample(StandardNormal)).collect())?;
    }
    Ok(bank)
}

fn seq_prob_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let (y, z) = small_instance(rng);
    let tables = ctc::forward_backward(&y, &ctc::extend_with_blanks(&z))?;
    let brute = oracle::brute_force_seq_prob(y.probs().view(), z.labels())?;
    Ok((tables.log_seq_prob.exp() - brute).abs())
}

fn partition_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let y = random_posteriors(rng, 5, 3);
    let mut total = 0.0;
    for labels in oracle::enumerate_labelings(3, 5) {
        let z = LabelSequence::new(labels).expect("no blanks");
        total += ctc::forward_backward(&y, &ctc::extend_with_blanks(&z))?.log_seq_prob.exp();
    }
    Ok((total - 1.0).abs())
}

/// `sum_s alpha_t(s) beta_t(s) / y_t(z'_s) = p(z|x)` at every frame.
fn consistency_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let (y, z) = small_instance(rng);
    let tables = ctc::forward_backward(&y, &ctc::extend_with_blanks(&z))?;
    let log_y = y.log_probs();
    let p = tables.log_seq_prob.exp();
    let mut worst: f64 = 0.0;
    for t in 0..tables.frames() {
        let sum: f64 = tables
            .symbols()
            .iter()
            .enumerate()
            .map(|(s, &k)| (tables.log_alpha[[t, s]] + tables.log_beta[[t, s]] - log_y[[t, k]]).exp())
            .sum();
        worst = worst.max((sum - p).abs() / p);
    }
    Ok(worst)
}

fn neg_log_likelihood(logits: &Array2<f64>, z: &LabelSequence) -> f64 {
    let y = PosteriorMatrix::from_logits(logits.view());
    -ctc::forward_backward(&y, &ctc::extend_with_blanks(z))
        .expect("feasible instance")
        .log_seq_prob
}

fn ctc_grad_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let classes = rng.random_range(2..=4);
    let frames = rng.random_range(2..=6);
    let len = rng.random_range(0..=3);
    let z = random_labels(rng, classes, frames, len);
    let logits = normal_matrix(rng, frames, classes, 1.5);
    let y = PosteriorMatrix::from_logits(logits.view());
    let tables = ctc::forward_backward(&y, &ctc::extend_with_blanks(&z))?;
    let analytic = ctc::ctc_grad_logits(&tables, &y)?;
    let numeric = oracle::finite_diff(
        |x| neg_log_likelihood(&Array2::from_shape_vec(logits.raw_dim(), x.to_vec()).expect("same shape"), &z),
        logits.as_slice().expect("standard layout"),
        DEFAULT_EPSILON,
    );
    Ok(oracle::relative_error(analytic.as_slice().expect("standard layout"), &numeric))
}

fn occupancy_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let (y, z) = small_instance(rng);
    let dim = 3;
    let zp = ctc::extend_with_blanks(&z);
    let tables = ctc::forward_backward(&y, &zp)?;
    let probs = y.probs();
    let brute = oracle::brute_force_occupancy(probs.view(), z.labels())?;
    let u = normal_matrix(rng, y.frames(), dim, 1.0);
    let bank = random_bank(rng, y.classes(), dim, true)?;
    let mut worst: f64 = 0.0;
    for mode in [OccupancyMode::PaperLiteral, OccupancyMode::FrameNormalized] {
        let gamma = ctc::occupancy(&tables, &y, mode)?;
        let expected = brute.gamma(mode);
        for (a, b) in gamma.gamma.iter().zip(expected.iter()) {
            worst = worst.max((a - b).abs());
        }
        let dp = losses::ecl(u.view(), &gamma, &zp, &bank)?;
        let bf = oracle::brute_force_ecl(probs.view(), z.labels(), u.view(), &bank, mode)?;
        worst = worst.max((dp - bf).abs());
    }
    Ok(worst)
}

/// The feature gradient is half the derivative of the expected center loss,
/// so it is doubled before comparison.
fn ecl_grad_case(rng: &mut ChaCha8Rng, mutation: Mutation) -> Result<f64, CheckError> {
    let (y, z) = small_instance(rng);
    let dim = 3;
    let zp = ctc::extend_with_blanks(&z);
    let tables = ctc::forward_backward(&y, &zp)?;
    let mode = if rng.random_bool(0.5) {
        OccupancyMode::PaperLiteral
    } else {
        OccupancyMode::FrameNormalized
    };
    let gamma = ctc::occupancy(&tables, &y, mode)?;
    let u = normal_matrix(rng, y.frames(), dim, 1.0);
    let bank = random_bank(rng, y.classes(), dim, true)?;
    let sign = match mutation {
        Mutation::None => 2.0,
        Mutation::FlipEclSign => -2.0,
    };
    let analytic = losses::ecl_grad_features(u.view(), &gamma, &zp, &bank)? * sign;
    let numeric = oracle::finite_diff(
        |x| {
            let v = Array2::from_shape_vec(u.raw_dim(), x.to_vec()).expect("same shape");
            losses::ecl(v.view(), &gamma, &zp, &bank).expect("shapes checked")
        },
        u.as_slice().expect("standard layout"),
        DEFAULT_EPSILON,
    );
    Ok(oracle::relative_error(analytic.as_slice().expect("standard layout"), &numeric))
}

fn center_grad_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let (frames, classes, dim) = (rng.random_range(1..=6), rng.random_range(2..=4), 3);
    let labels: Vec<usize> = (0..frames).map(|_| rng.random_range(0..classes)).collect();
    let u = normal_matrix(rng, frames, dim, 1.0);
    let bank = random_bank(rng, classes, dim, false)?;
    let analytic = losses::center_loss_grad(u.view(), &labels, &bank)?;
    let numeric = oracle::finite_diff(
        |x| {
            let v = Array2::from_shape_vec(u.raw_dim(), x.to_vec()).expect("same shape");
            losses::center_loss(v.view(), &labels, &bank).expect("shapes checked")
        },
        u.as_slice().expect("standard layout"),
        DEFAULT_EPSILON,
    );
    Ok(oracle::relative_error(analytic.as_slice().expect("standard layout"), &numeric))
}

const NET_INPUT: usize = 4;
const NET_FEATURES: usize = 5;
const NET_CLASSES: usize = 4;
const NET_FRAMES: usize = 5;

fn tiny_network(rng: &mut ChaCha8Rng) -> Result<Network, ModelError> {
    let spec = NetworkSpec {
        input_dim: NET_INPUT,
        hidden: vec![6, NET_FEATURES],
        recurrent: rng.random_bool(0.5),
        feature_dim: NET_FEATURES,
        num_classes: NET_CLASSES,
    };
    let mut net = Network::init(spec, rng.random())?;
    // nonzero biases so every parameter block is exercised
    for p in net.params_mut() {
        *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(net)
}

fn with_params(net: &Network, params: &[f64]) -> Network {
    Network::new(net.spec().clone(), params.to_vec()).expect("same spec")
}

/// Full fusion loss through the network with occupancies and centers held at
/// their values for the unperturbed parameters. The ECL term enters with
/// `lambda / 2`, matching the halved feature gradient.
fn tmf_network_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let net = tiny_network(rng)?;
    let z = random_labels(rng, NET_CLASSES, NET_FRAMES, 2);
    let sample = SequenceSample {
        features: normal_matrix(rng, NET_FRAMES, NET_INPUT, 1.0),
        framewise: vec![1; NET_FRAMES],
        collapsed: z.clone(),
        condition: NoiseCondition::Clean,
    };
    let bank = random_bank(rng, NET_CLASSES, NET_FEATURES, true)?;
    let cfg = TrainConfig {
        mode: TrainMode::Tmf,
        lambda: rng.random_range(0.05..1.0),
        occupancy_mode: if rng.random_bool(0.5) {
            OccupancyMode::PaperLiteral
        } else {
            OccupancyMode::FrameNormalized
        },
        ..TrainConfig::default()
    };
    let analytic = sequence_step(&net, Some(&bank), &sample, &cfg)?.grads;

    let zp = ctc::extend_with_blanks(&z);
    let pass = net.forward(sample.features.view())?;
    let tables = ctc::forward_backward(&pass.posteriors, &zp)?;
    let gamma = ctc::occupancy(&tables, &pass.posteriors, cfg.occupancy_mode)?;
    let numeric = oracle::finite_diff(
        |theta| {
            let pass = with_params(&net, theta).forward(sample.features.view()).expect("shapes fixed");
            let ml = -ctc::forward_backward(&pass.posteriors, &zp).expect("feasible").log_seq_prob;
            let ecl = losses::ecl(pass.features(), &gamma, &zp, &bank).expect("shapes fixed");
            ml + 0.5 * cfg.lambda * ecl
        },
        net.params(),
        DEFAULT_EPSILON,
    );
    Ok(oracle::relative_error(&analytic, &numeric))
}

/// Cross entropy plus weighted center loss, centers frozen.
fn fmf_network_case(rng: &mut ChaCha8Rng) -> Result<f64, CheckError> {
    let net = tiny_network(rng)?;
    let framewise: Vec<usize> = (0..NET_FRAMES).map(|_| rng.random_range(1..=NET_CLASSES)).collect();
    let targets: Vec<usize> = framewise.iter().map(|k| k - 1).collect();
    let sample = SequenceSample {
        features: normal_matrix(rng, NET_FRAMES, NET_INPUT, 1.0),
        collapsed: LabelSequence::new(oracle::collapse(&framewise)).expect("no blanks"),
        framewise,
        condition: NoiseCondition::Clean,
    };
    let bank = random_bank(rng, NET_CLASSES, NET_FEATURES, false)?;
    let cfg = TrainConfig {
        mode: TrainMode::Fmf,
        lambda: rng.random_range(0.05..1.0),
        ..TrainConfig::default()
    };
    let analytic = sequence_step(&net, Some(&bank), &sample, &cfg)?.grads;
    let numeric = oracle::finite_diff(
        |theta| {
            let pass = with_params(&net, theta).forward(sample.features.view()).expect("shapes fixed");
            let ce = losses::cross_entropy(&pass.posteriors, &targets).expect("shapes fixed");
            let cl = losses::center_loss(pass.features(), &targets, &bank).expect("shapes fixed");
            ce + cfg.lambda * cl
        },
        net.params(),
        DEFAULT_EPSILON,
    );
    Ok(oracle::relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_parsing() {
        assert_eq!("ctc".parse::<Scope>(), Ok(Scope::Ctc));
        assert!("everything".parse::<Scope>().is_err());
    }

    #[test]
    fn ctc_scope_skips_loss_suites() {
        let picked: Vec<Suite> = Suite::ALL.into_iter().filter(|s| s.in_scope(Scope::Ctc)).collect();
        assert_eq!(picked, vec![Suite::SeqProb, Suite::Partition, Suite::Consistency, Suite::CtcGrad]);
    }

    #[test]
    fn nan_fails() {
        let r = SuiteReport {
            suite: Suite::SeqProb,
            cases: 1,
            max_error: f64::NAN,
            tolerance: 1e-10,
            elapsed: Duration::ZERO,
        };
        assert!(!r.passed());
    }
}
