//! Log-space CTC alignment: blank augmentation, forward/backward tables,
//! symbol-time occupancy, the sequence likelihood and its gradient with
//! respect to the output logits.
//!
//! The forward variable `alpha[t][s]` is the mass of all path prefixes that
//! emit the first `s + 1` symbols of the blank-augmented sequence and sit on
//! symbol `s` at frame `t`, including the emission `y[t][z'_s]`. The backward
//! variable `beta[t][s]` is the mass of the suffixes leaving `(t, s)`, again
//! including `y[t][z'_s]`. The emission at `(t, s)` is therefore counted twice
//! in `alpha * beta`; dividing it out once gives the mass of the complete
//! paths through `(t, s)`.

use ndarray::{Array2, ArrayView2};

use crate::numeric::{log_add, log_sum_exp};
use crate::posterior::PosteriorMatrix;

/// Output index reserved for the CTC blank.
pub const BLANK: usize = 0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CtcError {
    #[error("label at position {position} is the blank index")]
    BlankInLabels { position: usize },
    #[error("label {label} is out of range for {classes} output classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("labeling needs at least {required} frames but the input has {frames}")]
    InfeasibleLabeling { required: usize, frames: usize },
    #[error("alignment mass underflowed to zero at frame {frame}")]
    DegenerateFrame { frame: usize },
    #[error("alignment tables have {table_frames} frames, posteriors have {frames}")]
    FrameMismatch { table_frames: usize, frames: usize },
}

/// A target labeling without blanks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(labels: Vec<usize>) -> Result<Self, CtcError> {
        if let Some(position) = labels.iter().position(|&l| l == BLANK) {
            return Err(CtcError::BlankInLabels { position });
        }
        Ok(Self(labels))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shortest input that can carry this labeling: one frame per label plus
    /// a separating blank between each pair of equal neighbours.
    pub fn min_frames(&self) -> usize {
        let repeats = self.0.windows(2).filter(|w| w[0] == w[1]).count();
        self.0.len() + repeats
    }
}

impl TryFrom<Vec<usize>> for LabelSequence {
    type Error = CtcError;

    fn try_from(labels: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(labels)
    }
}

impl From<LabelSequence> for Vec<usize> {
    fn from(seq: LabelSequence) -> Self {
        seq.0
    }
}

/// The labeling with a blank before, after and between every label:
/// `(a, b)` becomes `(blank, a, blank, b, blank)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModifiedLabelSequence {
    symbols: Vec<usize>,
}

impl ModifiedLabelSequence {
    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Number of labels in the source sequence.
    pub fn label_count(&self) -> usize {
        self.symbols.len() / 2
    }

    /// Positions `s` with `symbols[s] == class`.
    pub fn positions_of(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .filter(move |(_, &sym)| sym == class)
            .map(|(s, _)| s)
    }

    fn min_frames(&self) -> usize {
        let labels: Vec<usize> = self.symbols.iter().skip(1).step_by(2).copied().collect();
        LabelSequence(labels).min_frames()
    }
}

pub fn extend_with_blanks(labels: &LabelSequence) -> ModifiedLabelSequence {
    let mut symbols = Vec::with_capacity(2 * labels.len() + 1);
    symbols.push(BLANK);
    for &label in labels.labels() {
        symbols.push(label);
        symbols.push(BLANK);
    }
    ModifiedLabelSequence { symbols }
}

/// Log-domain forward and backward tables for one (input, labeling) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTables {
    /// `T x (2r+1)`.
    pub log_alpha: Array2<f64>,
    /// `T x (2r+1)`.
    pub log_beta: Array2<f64>,
    /// `ln p(z | x)`.
    pub log_seq_prob: f64,
    symbols: Vec<usize>,
}

impl AlignmentTables {
    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn frames(&self) -> usize {
        self.log_alpha.nrows()
    }

    /// `ln(alpha * beta / y)` at every cell: log mass of the complete paths
    /// through `(t, s)`.
    fn log_path_mass(&self, log_probs: ArrayView2<f64>) -> Array2<f64> {
        let mut out = &self.log_alpha + &self.log_beta;
        for (t, mut row) in out.outer_iter_mut().enumerate() {
            for (s, cell) in row.iter_mut().enumerate() {
                if *cell != f64::NEG_INFINITY {
                    *cell -= log_probs[[t, self.symbols[s]]];
                }
            }
        }
        out
    }

    fn check_frames(&self, posteriors: &PosteriorMatrix) -> Result<(), CtcError> {
        if posteriors.frames() != self.frames() {
            return Err(CtcError::FrameMismatch {
                table_frames: self.frames(),
                frames: posteriors.frames(),
            });
        }
        Ok(())
    }
}

fn check_labels(zp: &ModifiedLabelSequence, classes: usize) -> Result<(), CtcError> {
    match zp.symbols.iter().find(|&&sym| sym >= classes) {
        Some(&label) => Err(CtcError::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

/// Whether position `s` may be entered directly from `s - 2`, skipping a blank.
#[inline]
fn can_skip(symbols: &[usize], s: usize) -> bool {
    s >= 2 && symbols[s] != BLANK && symbols[s] != symbols[s - 2]
}

pub fn forward_backward(
    posteriors: &PosteriorMatrix,
    zp: &ModifiedLabelSequence,
) -> Result<AlignmentTables, CtcError> {
    let log_probs = posteriors.log_probs();
    let frames = log_probs.nrows();
    check_labels(zp, log_probs.ncols())?;
    let required = zp.min_frames();
    if frames < required || frames == 0 {
        return Err(CtcError::InfeasibleLabeling {
            required: required.max(1),
            frames,
        });
    }

    let symbols = zp.symbols();
    let width = symbols.len();
    let emit = |t: usize, s: usize| log_probs[[t, symbols[s]]];

    let mut log_alpha = Array2::from_elem((frames, width), f64::NEG_INFINITY);
    log_alpha[[0, 0]] = emit(0, 0);
    if width > 1 {
        log_alpha[[0, 1]] = emit(0, 1);
    }
    for t in 1..frames {
        for s in 0..width {
            let mut acc = log_alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, log_alpha[[t - 1, s - 1]]);
            }
            if can_skip(symbols, s) {
                acc = log_add(acc, log_alpha[[t - 1, s - 2]]);
            }
            if acc != f64::NEG_INFINITY {
                log_alpha[[t, s]] = acc + emit(t, s);
            }
        }
    }

    let last = frames - 1;
    let mut log_beta = Array2::from_elem((frames, width), f64::NEG_INFINITY);
    log_beta[[last, width - 1]] = emit(last, width - 1);
    if width > 1 {
        log_beta[[last, width - 2]] = emit(last, width - 2);
    }
    for t in (0..last).rev() {
        for s in 0..width {
            let mut acc = log_beta[[t + 1, s]];
            if s + 1 < width {
                acc = log_add(acc, log_beta[[t + 1, s + 1]]);
            }
            if s + 2 < width && can_skip(symbols, s + 2) {
                acc = log_add(acc, log_beta[[t + 1, s + 2]]);
            }
            if acc != f64::NEG_INFINITY {
                log_beta[[t, s]] = acc + emit(t, s);
            }
        }
    }

    let mut log_seq_prob = log_alpha[[last, width - 1]];
    if width > 1 {
        log_seq_prob = log_add(log_seq_prob, log_alpha[[last, width - 2]]);
    }

    Ok(AlignmentTables {
        log_alpha,
        log_beta,
        log_seq_prob,
        symbols: symbols.to_vec(),
    })
}

/// How the `alpha * beta` products are turned into occupancy weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyMode {
    /// `gamma(t, s) = alpha_t(s) * beta_t(s)`, unnormalised.
    #[default]
    PaperLiteral,
    /// Posterior probability of sitting on symbol `s` at frame `t` given the
    /// labeling; every row sums to one.
    FrameNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMatrix {
    /// `T x (2r+1)`, nonnegative.
    pub gamma: Array2<f64>,
    pub mode: OccupancyMode,
}

pub fn occupancy(
    tables: &AlignmentTables,
    posteriors: &PosteriorMatrix,
    mode: OccupancyMode,
) -> Result<OccupancyMatrix, CtcError> {
    tables.check_frames(posteriors)?;
    let gamma = match mode {
        OccupancyMode::PaperLiteral => (&tables.log_alpha + &tables.log_beta).mapv(f64::exp),
        OccupancyMode::FrameNormalized => {
            let mut mass = tables.log_path_mass(posteriors.log_probs());
            for (frame, mut row) in mass.outer_iter_mut().enumerate() {
                let norm = log_sum_exp(row.iter().copied());
                if norm == f64::NEG_INFINITY {
                    return Err(CtcError::DegenerateFrame { frame });
                }
                row.mapv_inplace(|v| (v - norm).exp());
            }
            mass
        }
    };
    Ok(OccupancyMatrix { gamma, mode })
}

/// `-sum ln p(z | x)` over a batch.
pub fn ml_loss<'a, I>(pairs: I) -> Result<f64, CtcError>
where
    I: IntoIterator<Item = (&'a PosteriorMatrix, &'a LabelSequence)>,
{
    let mut total = 0.0;
    for (posteriors, labels) in pairs {
        let tables = forward_backward(posteriors, &extend_with_blanks(labels))?;
        total -= tables.log_seq_prob;
    }
    Ok(total)
}

/// Gradient of `-ln p(z | x)` with respect to the logits feeding the
/// softmax: `y_t^k` minus the share of frame `t`'s alignment mass that sits
/// on positions labelled `k`.
pub fn ctc_grad_logits(
    tables: &AlignmentTables,
    posteriors: &PosteriorMatrix,
) -> Result<Array2<f64>, CtcError> {
    tables.check_frames(posteriors)?;
    let log_probs = posteriors.log_probs();
    let mass = tables.log_path_mass(log_probs);
    let mut delta = log_probs.mapv(f64::exp);
    for (t, row) in mass.outer_iter().enumerate() {
        let norm = log_sum_exp(row.iter().copied());
        if norm == f64::NEG_INFINITY {
            return Err(CtcError::DegenerateFrame { frame: t });
        }
        for (s, &m) in row.iter().enumerate() {
            if m != f64::NEG_INFINITY {
                delta[[t, tables.symbols[s]]] -= (m - norm).exp();
            }
        }
    }
    Ok(delta)
}
