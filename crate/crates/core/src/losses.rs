//! Framewise and sequence-level loss functions, their gradients, and the
//! per-class center bank.
//!
//! Framewise fusion is cross entropy plus `lambda` times the center loss.
//! Temporal fusion replaces cross entropy by the CTC likelihood loss and the
//! center loss by its expectation under the alignment occupancy, so no
//! framewise labels are needed.
//!
//! The blank symbol owns no center: it contributes nothing to the expected
//! center loss, its gradient or the center updates.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ctc::{ModifiedLabelSequence, OccupancyMatrix, OccupancyMode, BLANK};
use crate::posterior::PosteriorMatrix;

/// Default center step size.
pub const DEFAULT_CENTER_MOMENTUM: f64 = 1e-3;
/// Occupancy weight below which a `(t, s)` term does not move its center.
pub const DEFAULT_OCCUPANCY_THRESHOLD: f64 = 0.01;
/// Balancing factor for clean training data.
pub const LAMBDA_CLEAN: f64 = 1e-3;
/// Balancing factor for noisy training data.
pub const LAMBDA_NOISY: f64 = 1e-4;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LossError {
    #[error("class {0} has no center")]
    UnknownClass(usize),
    #[error("the blank class cannot own a center")]
    BlankCenter,
    #[error("{what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("occupancy threshold must be finite and >= 0, got {0}")]
    InvalidThreshold(f64),
    #[error("balancing factor must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("operation requires {expected:?} fusion, config is {actual:?}")]
    WrongMode { expected: FusionMode, actual: FusionMode },
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), LossError> {
    if expected == actual {
        Ok(())
    } else {
        Err(LossError::Shape { what, expected, actual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Framewise,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub lambda: f64,
    pub mode: FusionMode,
    pub occupancy_mode: OccupancyMode,
}

impl FusionConfig {
    pub fn new(lambda: f64, mode: FusionMode, occupancy_mode: OccupancyMode) -> Result<Self, LossError> {
        let cfg = Self {
            lambda,
            mode,
            occupancy_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(LossError::InvalidLambda(self.lambda));
        }
        Ok(())
    }

    fn require(&self, expected: FusionMode) -> Result<(), LossError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(LossError::WrongMode {
                expected,
                actual: self.mode,
            })
        }
    }
}

/// One learnable center per non-blank class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CenterBankRecord", into = "CenterBankRecord")]
pub struct CenterBank {
    dim: usize,
    centers: BTreeMap<usize, Vec<f64>>,
    blank: Option<usize>,
    momentum: f64,
    occupancy_threshold: f64,
}

impl CenterBank {
    /// Zero-initialized centers for the given classes.
    pub fn zeros<I: IntoIterator<Item = usize>>(
        classes: I,
        dim: usize,
        blank: Option<usize>,
        momentum: f64,
        occupancy_threshold: f64,
    ) -> Result<Self, LossError> {
        let centers = classes.into_iter().map(|c| (c, vec![0.0; dim])).collect();
        Self::from_parts(dim, centers, blank, momentum, occupancy_threshold)
    }

    /// Centers for every non-blank output of a CTC network with `outputs` classes.
    pub fn for_temporal(outputs: usize, dim: usize, momentum: f64, occupancy_threshold: f64) -> Result<Self, LossError> {
        Self::zeros(1..outputs, dim, Some(BLANK), momentum, occupancy_threshold)
    }

    /// Centers for every output of a framewise classifier (no blank class).
    pub fn for_framewise(outputs: usize, dim: usize, momentum: f64) -> Result<Self, LossError> {
        Self::zeros(0..outputs, dim, None, momentum, 0.0)
    }

    fn from_parts(
        dim: usize,
        centers: BTreeMap<usize, Vec<f64>>,
        blank: Option<usize>,
        momentum: f64,
        occupancy_threshold: f64,
    ) -> Result<Self, LossError> {
        if !(occupancy_threshold.is_finite() && occupancy_threshold >= 0.0) {
            return Err(LossError::InvalidThreshold(occupancy_threshold));
        }
        if let Some(b) = blank {
            if centers.contains_key(&b) {
                return Err(LossError::BlankCenter);
            }
        }
        for c in centers.values() {
            check_len("center dimension", dim, c.len())?;
        }
        Ok(Self {
            dim,
            centers,
            blank,
            momentum,
            occupancy_threshold,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn occupancy_threshold(&self) -> f64 {
        self.occupancy_threshold
    }

    pub fn blank(&self) -> Option<usize> {
        self.blank
    }

    pub fn center(&self, class: usize) -> Option<&[f64]> {
        self.centers.get(&class).map(Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.centers.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn set_center(&mut self, class: usize, center: Vec<f64>) -> Result<(), LossError> {
        if Some(class) == self.blank {
            return Err(LossError::BlankCenter);
        }
        check_len("center dimension", self.dim, center.len())?;
        self.centers.insert(class, center);
        Ok(())
    }

    fn get(&self, class: usize) -> Result<&[f64], LossError> {
        self.center(class).ok_or(LossError::UnknownClass(class))
    }

    fn check_features(&self, u: ArrayView2<f64>) -> Result<(), LossError> {
        check_len("feature dimension", self.dim, u.ncols())
    }

    /// Moves each center toward the features aligned to it:
    /// `c -= momentum * sum gamma(t, s) * (c - u_t)` over the non-blank
    /// positions `s` carrying its class and the frames with
    /// `gamma(t, s) >= threshold`. All positions of a class are applied
    /// together from the pre-update center.
    pub fn update_temporal(
        &mut self,
        u: ArrayView2<f64>,
        gamma: &OccupancyMatrix,
        zp: &ModifiedLabelSequence,
    ) -> Result<(), LossError> {
        self.check_features(u)?;
        check_len("occupancy frames", u.nrows(), gamma.gamma.nrows())?;
        check_len("occupancy width", zp.len(), gamma.gamma.ncols())?;
        let mut steps: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (s, &class) in zp.symbols().iter().enumerate() {
            if class == BLANK {
                continue;
            }
            let center = self.get(class)?;
            for t in 0..u.nrows() {
                let w = gamma.gamma[[t, s]];
                if w < self.occupancy_threshold {
                    continue;
                }
                let step = steps.entry(class).or_insert_with(|| vec![0.0; self.dim]);
                for ((acc, c), x) in step.iter_mut().zip(center).zip(u.row(t)) {
                    *acc += w * (c - x);
                }
            }
        }
        for (class, step) in steps {
            let momentum = self.momentum;
            let center = self.centers.get_mut(&class).expect("checked above");
            for (c, d) in center.iter_mut().zip(step) {
                *c -= momentum * d;
            }
        }
        Ok(())
    }

    /// Mini-batch center update for framewise labels:
    /// `c_j -= momentum * sum_{t: k_t = j} (c_j - u_t) / (1 + n_j)`.
    pub fn update_framewise(&mut self, u: ArrayView2<f64>, labels: &[usize]) -> Result<(), LossError> {
        self.check_features(u)?;
        check_len("framewise labels", u.nrows(), labels.len())?;
        let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
        for (t, &class) in labels.iter().enumerate() {
            let center = self.get(class)?;
            let (acc, n) = sums.entry(class).or_insert_with(|| (vec![0.0; self.dim], 0));
            for ((a, c), x) in acc.iter_mut().zip(center).zip(u.row(t)) {
                *a += c - x;
            }
            *n += 1;
        }
        for (class, (acc, n)) in sums {
            let scale = self.momentum / (1 + n) as f64;
            let center = self.centers.get_mut(&class).expect("checked above");
            for (c, a) in center.iter_mut().zip(acc) {
                *c -= scale * a;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CenterBankRecord {
    dim: usize,
    blank: Option<usize>,
    momentum: f64,
    occupancy_threshold: f64,
    centers: Vec<(usize, Vec<f64>)>,
}

impl TryFrom<CenterBankRecord> for CenterBank {
    type Error = LossError;

    fn try_from(r: CenterBankRecord) -> Result<Self, Self::Error> {
        Self::from_parts(r.dim, r.centers.into_iter().collect(), r.blank, r.momentum, r.occupancy_threshold)
    }
}

impl From<CenterBank> for CenterBankRecord {
    fn from(b: CenterBank) -> Self {
        Self {
            dim: b.dim,
            blank: b.blank,
            momentum: b.momentum,
            occupancy_threshold: b.occupancy_threshold,
            centers: b.centers.into_iter().collect(),
        }
    }
}

fn sq_dist(a: impl IntoIterator<Item = f64>, b: &[f64]) -> f64 {
    a.into_iter().zip(b).map(|(x, c)| (x - c) * (x - c)).sum()
}

/// `sum_t ||u_t - c_{k_t}||^2`.
pub fn center_loss(u: ArrayView2<f64>, labels: &[usize], bank: &CenterBank) -> Result<f64, LossError> {
    bank.check_features(u)?;
    check_len("framewise labels", u.nrows(), labels.len())?;
    let mut total = 0.0;
    for (row, &k) in u.outer_iter().zip(labels) {
        total += sq_dist(row.iter().copied(), bank.get(k)?);
    }
    Ok(total)
}

/// `2 (u_t - c_{k_t})`, the exact derivative of [`center_loss`].
pub fn center_loss_grad(u: ArrayView2<f64>, labels: &[usize], bank: &CenterBank) -> Result<Array2<f64>, LossError> {
    bank.check_features(u)?;
    check_len("framewise labels", u.nrows(), labels.len())?;
    let mut grad = u.to_owned();
    for (mut row, &k) in grad.outer_iter_mut().zip(labels) {
        for (g, c) in row.iter_mut().zip(bank.get(k)?) {
            *g = 2.0 * (*g - c);
        }
    }
    Ok(grad)
}

/// `-sum_t ln y_t^{k_t}`.
pub fn cross_entropy(posteriors: &PosteriorMatrix, labels: &[usize]) -> Result<f64, LossError> {
    check_len("framewise labels", posteriors.frames(), labels.len())?;
    let log_probs = posteriors.log_probs();
    let mut total = 0.0;
    for (t, &k) in labels.iter().enumerate() {
        if k >= posteriors.classes() {
            return Err(LossError::UnknownClass(k));
        }
        total -= log_probs[[t, k]];
    }
    Ok(total)
}

/// Softmax cross-entropy gradient with respect to the logits: `y - onehot(k)`.
pub fn ce_grad_logits(posteriors: &PosteriorMatrix, labels: &[usize]) -> Result<Array2<f64>, LossError> {
    check_len("framewise labels", posteriors.frames(), labels.len())?;
    let mut delta = posteriors.probs();
    for (t, &k) in labels.iter().enumerate() {
        if k >= posteriors.classes() {
            return Err(LossError::UnknownClass(k));
        }
        delta[[t, k]] -= 1.0;
    }
    Ok(delta)
}

pub fn fmf_loss(
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    u: ArrayView2<f64>,
    bank: &CenterBank,
    cfg: &FusionConfig,
) -> Result<f64, LossError> {
    cfg.require(FusionMode::Framewise)?;
    let ce = cross_entropy(posteriors, labels)?;
    if cfg.lambda == 0.0 {
        return Ok(ce);
    }
    Ok(ce + cfg.lambda * center_loss(u, labels, bank)?)
}

fn check_occupancy(
    u: ArrayView2<f64>,
    gamma: &OccupancyMatrix,
    zp: &ModifiedLabelSequence,
    bank: &CenterBank,
) -> Result<(), LossError> {
    bank.check_features(u)?;
    check_len("occupancy frames", u.nrows(), gamma.gamma.nrows())?;
    check_len("occupancy width", zp.len(), gamma.gamma.ncols())
}

/// Expected center loss `sum_s sum_t gamma(t, s) ||u_t - c_{z'_s}||^2`
/// over non-blank positions.
pub fn ecl(
    u: ArrayView2<f64>,
    gamma: &OccupancyMatrix,
    zp: &ModifiedLabelSequence,
    bank: &CenterBank,
) -> Result<f64, LossError> {
    check_occupancy(u, gamma, zp, bank)?;
    let mut total = 0.0;
    for (s, &class) in zp.symbols().iter().enumerate() {
        if class == BLANK {
            continue;
        }
        let center = bank.get(class)?;
        for (t, row) in u.outer_iter().enumerate() {
            let w = gamma.gamma[[t, s]];
            if w != 0.0 {
                total += w * sq_dist(row.iter().copied(), center);
            }
        }
    }
    Ok(total)
}

pub fn tmf_loss(ml: f64, ecl: f64, cfg: &FusionConfig) -> Result<f64, LossError> {
    cfg.require(FusionMode::Temporal)?;
    if cfg.lambda == 0.0 {
        return Ok(ml);
    }
    Ok(ml + cfg.lambda * ecl)
}

/// Feature error signal of the expected center loss,
/// `sum_s gamma(t, s) (u_t - c_{z'_s})` over non-blank positions.
///
/// This is half the true derivative of [`ecl`]; the factor two is folded
/// into the balancing factor, so training with `lambda` follows the
/// gradient of `ml + lambda / 2 * ecl` with occupancy held fixed.
pub fn ecl_grad_features(
    u: ArrayView2<f64>,
    gamma: &OccupancyMatrix,
    zp: &ModifiedLabelSequence,
    bank: &CenterBank,
) -> Result<Array2<f64>, LossError> {
    check_occupancy(u, gamma, zp, bank)?;
    let mut delta = Array2::zeros(u.raw_dim());
    for (s, &class) in zp.symbols().iter().enumerate() {
        if class == BLANK {
            continue;
        }
        let center = bank.get(class)?;
        for t in 0..u.nrows() {
            let w = gamma.gamma[[t, s]];
            if w == 0.0 {
                continue;
            }
            for ((d, x), c) in delta.row_mut(t).iter_mut().zip(u.row(t)).zip(center) {
                *d += w * (x - c);
            }
        }
    }
    Ok(delta)
}

/// Error signal at the feature layer: `delta_ml W + lambda * delta_aux`,
/// i.e. `W^T delta_ml` frame by frame plus the weighted center term.
pub fn fuse_feature_grad(
    delta_ml: ArrayView2<f64>,
    weights: ArrayView2<f64>,
    delta_aux: ArrayView2<f64>,
    lambda: f64,
) -> Result<Array2<f64>, LossError> {
    check_len("output classes", weights.nrows(), delta_ml.ncols())?;
    check_len("aux frames", delta_ml.nrows(), delta_aux.nrows())?;
    check_len("aux dimension", weights.ncols(), delta_aux.ncols())?;
    let mut fused = delta_ml.dot(&weights);
    if lambda != 0.0 {
        fused.scaled_add(lambda, &delta_aux);
    }
    Ok(fused)
}
