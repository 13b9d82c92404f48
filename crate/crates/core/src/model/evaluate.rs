use rayon::prelude::*;

use super::train::framewise_targets;
use super::{Network, TrainError, TrainMode};
use crate::ctc;
use crate::metrics::{self, EvalReport, MetricsError};
use crate::synth::{NoiseCondition, SequenceSample};

/// Aggregate scores of a network on a set of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEvaluation {
    /// Mean per-sequence `ln p(z|x)` for temporal models, mean per-frame
    /// log-probability of the target for framewise models.
    pub score: f64,
    pub token_error_rate: f64,
    pub frame_accuracy: Option<f64>,
}

struct SampleEval {
    log_likelihood: f64,
    frames: usize,
    hits: usize,
    hypothesis: Vec<usize>,
}

fn evaluate_sample(network: &Network, mode: TrainMode, sample: &SequenceSample) -> Result<SampleEval, TrainError> {
    let pass = network.forward(sample.features.view())?;
    let frames = sample.frames();
    if mode.is_temporal() {
        let tables = ctc::forward_backward(&pass.posteriors, &ctc::extend_with_blanks(&sample.collapsed))?;
        Ok(SampleEval {
            log_likelihood: tables.log_seq_prob,
            frames,
            hits: 0,
            hypothesis: metrics::greedy_decode(&pass.posteriors).into(),
        })
    } else {
        let targets = framewise_targets(sample, network.spec().num_classes)?;
        let log_probs = pass.posteriors.log_probs();
        let mut log_likelihood = 0.0;
        let mut hits = 0;
        for (t, &k) in targets.iter().enumerate() {
            log_likelihood += log_probs[[t, k]];
            hits += usize::from(metrics::argmax(log_probs.row(t)) == k);
        }
        Ok(SampleEval {
            log_likelihood,
            frames,
            hits,
            hypothesis: metrics::framewise_decode(&pass.posteriors, 1),
        })
    }
}

/// Evaluates every sequence (in parallel) and reduces in input order.
pub fn evaluate_set(network: &Network, mode: TrainMode, samples: &[SequenceSample]) -> Result<SetEvaluation, TrainError> {
    if samples.is_empty() {
        return Err(MetricsError::NoFrames.into());
    }
    let evals = samples
        .par_iter()
        .map(|s| evaluate_sample(network, mode, s))
        .collect::<Result<Vec<_>, _>>()?;
    let (mut total, mut frames, mut hits) = (0.0, 0usize, 0usize);
    for e in &evals {
        total += e.log_likelihood;
        frames += e.frames;
        hits += e.hits;
    }
    let score = if mode.is_temporal() {
        total / samples.len() as f64
    } else {
        total / frames as f64
    };
    let token_error_rate = metrics::token_error_rate(
        evals
            .iter()
            .zip(samples)
            .map(|(e, s)| (e.hypothesis.as_slice(), s.collapsed.labels())),
    )?;
    Ok(SetEvaluation {
        score,
        token_error_rate,
        frame_accuracy: (!mode.is_temporal()).then(|| 100.0 * hits as f64 / frames as f64),
    })
}

/// Full report for one condition: error rates plus feature scatter.
///
/// Frames are assigned to classes by their framewise label for framewise
/// models, and by the non-blank argmax for temporal models (frames where the
/// blank wins are skipped). Class centers are the empirical feature means of
/// the assigned frames. Scatter is left empty when fewer than two classes
/// receive frames.
pub fn evaluate_condition(
    network: &Network,
    mode: TrainMode,
    samples: &[SequenceSample],
    condition: NoiseCondition,
) -> Result<EvalReport, TrainError> {
    let set = evaluate_set(network, mode, samples)?;
    let classes = network.spec().num_classes;
    let passes = samples
        .par_iter()
        .map(|s| {
            let pass = network.forward(s.features.view())?;
            let assignment: Vec<Option<usize>> = if mode.is_temporal() {
                metrics::temporal_assignments(&pass.posteriors)
            } else {
                framewise_targets(s, classes)?.into_iter().map(Some).collect()
            };
            Ok((pass.features().to_owned(), assignment))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let assigned = || {
        passes.iter().flat_map(|(u, a)| {
            u.outer_iter()
                .zip(a.iter())
                .filter_map(|(row, k)| k.map(|k| (row, k)))
        })
    };
    let bank = metrics::empirical_centers(assigned(), network.spec().feature_dim)?;
    let scatter = match metrics::embedding_report(assigned(), &bank) {
        Ok(s) => Some(s),
        Err(MetricsError::DegenerateBank(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(EvalReport {
        condition,
        samples: samples.len(),
        token_error_rate: set.token_error_rate,
        frame_accuracy: set.frame_accuracy,
        scatter,
    })
}
