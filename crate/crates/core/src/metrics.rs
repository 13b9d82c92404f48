//! Decoding and evaluation: best-path CTC decoding, corpus-level token error
//! rate, frame accuracy and feature-scatter statistics.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::ctc::{LabelSequence, BLANK};
use crate::losses::{CenterBank, LossError};
use crate::posterior::PosteriorMatrix;
use crate::synth::NoiseCondition;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference corpus has no tokens")]
    EmptyReferenceCorpus,
    #[error("center bank has {0} centers, need at least 2")]
    DegenerateBank(usize),
    #[error("no frames to evaluate")]
    NoFrames,
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Per-frame argmax, repeats merged, blanks dropped.
pub fn greedy_decode(posteriors: &PosteriorMatrix) -> LabelSequence {
    let mut out = Vec::new();
    let mut prev = None;
    for row in posteriors.log_probs().outer_iter() {
        let k = argmax(row);
        if Some(k) != prev && k != BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    LabelSequence::new(out).expect("blanks are dropped")
}

/// Per-frame argmax of a classifier without blank, as labels
/// (`output + offset`), with repeats merged.
pub fn framewise_decode(posteriors: &PosteriorMatrix, offset: usize) -> Vec<usize> {
    let mut out: Vec<usize> = posteriors.log_probs().outer_iter().map(|r| argmax(r) + offset).collect();
    out.dedup();
    out
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut cur = vec![0; reference.len() + 1];
    for (i, h) in hyp.iter().enumerate() {
        cur[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// `100 * total edits / total reference tokens` over `(hyp, ref)` pairs.
pub fn token_error_rate<'a, I>(pairs: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a [usize], &'a [usize])>,
{
    let (mut edits, mut tokens) = (0usize, 0usize);
    for (hyp, reference) in pairs {
        edits += edit_distance(hyp, reference);
        tokens += reference.len();
    }
    if tokens == 0 {
        return Err(MetricsError::EmptyReferenceCorpus);
    }
    Ok(100.0 * edits as f64 / tokens as f64)
}

/// Percentage of frames whose argmax output equals the target output index.
pub fn frame_accuracy<'a, I>(pairs: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a PosteriorMatrix, &'a [usize])>,
{
    let (mut hits, mut frames) = (0usize, 0usize);
    for (posteriors, targets) in pairs {
        for (row, &k) in posteriors.log_probs().outer_iter().zip(targets) {
            hits += usize::from(argmax(row) == k);
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(MetricsError::NoFrames);
    }
    Ok(100.0 * hits as f64 / frames as f64)
}

/// Frames assigned to classes for scatter statistics in temporal mode: the
/// argmax class, skipping frames where the blank wins.
pub fn temporal_assignments(posteriors: &PosteriorMatrix) -> Vec<Option<usize>> {
    posteriors
        .log_probs()
        .outer_iter()
        .map(|r| Some(argmax(r)).filter(|&k| k != BLANK))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterStats {
    /// Mean squared distance of a feature to its class center.
    pub intra_class_scatter: f64,
    /// Mean pairwise Euclidean distance between centers.
    pub inter_center_separation: f64,
    /// `intra / inter^2`; lower is more discriminative.
    pub scatter_ratio: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, c)| (x - c) * (x - c)).sum()
}

pub fn embedding_report<'a, I>(frames: I, bank: &CenterBank) -> Result<ScatterStats, MetricsError>
where
    I: IntoIterator<Item = (ArrayView1<'a, f64>, usize)>,
{
    if bank.len() < 2 {
        return Err(MetricsError::DegenerateBank(bank.len()));
    }
    let (mut intra, mut count) = (0.0, 0usize);
    for (u, class) in frames {
        let c = bank.center(class).ok_or(LossError::UnknownClass(class))?;
        intra += sq_dist(u, c);
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::NoFrames);
    }
    let centers: Vec<&[f64]> = bank.classes().map(|k| bank.center(k).expect("listed class")).collect();
    let (mut inter, mut pairs) = (0.0, 0usize);
    for i in 0..centers.len() {
        for j in 0..i {
            inter += sq_dist(ArrayView1::from(centers[i]), centers[j]).sqrt();
            pairs += 1;
        }
    }
    let intra = intra / count as f64;
    let inter = inter / pairs as f64;
    Ok(ScatterStats {
        intra_class_scatter: intra,
        inter_center_separation: inter,
        scatter_ratio: if inter > 0.0 { intra / (inter * inter) } else { f64::INFINITY },
    })
}

/// Mean feature of every class with at least one assigned frame.
pub fn empirical_centers<'a, I>(frames: I, dim: usize) -> Result<CenterBank, MetricsError>
where
    I: IntoIterator<Item = (ArrayView1<'a, f64>, usize)>,
{
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (u, class) in frames {
        let (acc, n) = sums.entry(class).or_insert_with(|| (vec![0.0; dim], 0));
        for (a, x) in acc.iter_mut().zip(u) {
            *a += x;
        }
        *n += 1;
    }
    let mut bank = CenterBank::zeros(std::iter::empty(), dim, None, 0.0, 0.0)?;
    for (class, (acc, n)) in sums {
        bank.set_center(class, acc.into_iter().map(|a| a / n as f64).collect())?;
    }
    Ok(bank)
}

/// One evaluation row per noise condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: NoiseCondition,
    pub samples: usize,
    pub token_error_rate: f64,
    /// Framewise models only.
    pub frame_accuracy: Option<f64>,
    /// Absent when fewer than two classes have assigned frames.
    pub scatter: Option<ScatterStats>,
}

impl EvalReport {
    /// Column order of the evaluation CSV.
    pub const COLUMNS: [&'static str; 7] = [
        "condition",
        "samples",
        "token_error_rate",
        "frame_accuracy",
        "intra_class_scatter",
        "inter_center_separation",
        "scatter_ratio",
    ];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.condition.to_string(),
            self.samples.to_string(),
            self.token_error_rate.to_string(),
            opt(self.frame_accuracy),
            opt(self.scatter.map(|s| s.intra_class_scatter)),
            opt(self.scatter.map(|s| s.inter_center_separation)),
            opt(self.scatter.map(|s| s.scatter_ratio)),
        ]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
