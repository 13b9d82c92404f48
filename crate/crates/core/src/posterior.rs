//! Per-frame class posteriors, stored as natural-log probabilities.

use ndarray::{Array2, ArrayView2};

use crate::numeric::log_softmax_rows;

/// Tolerance on row sums accepted by [`PosteriorMatrix::from_probs`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PosteriorError {
    #[error("posterior ({frame}, {class}) = {value} is outside (0, 1]")]
    OutOfRange { frame: usize, class: usize, value: f64 },
    #[error("posterior row {frame} sums to {sum}")]
    RowSum { frame: usize, sum: f64 },
    #[error("posterior matrix has no classes")]
    Empty,
}

/// A `T x K` matrix of per-frame class probabilities. Every row is a
/// distribution with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    log_probs: Array2<f64>,
}

impl PosteriorMatrix {
    /// Validates a matrix of probabilities.
    pub fn from_probs(probs: Array2<f64>) -> Result<Self, PosteriorError> {
        if probs.ncols() == 0 {
            return Err(PosteriorError::Empty);
        }
        for (frame, row) in probs.outer_iter().enumerate() {
            for (class, &value) in row.iter().enumerate() {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(PosteriorError::OutOfRange { frame, class, value });
                }
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(PosteriorError::RowSum { frame, sum });
            }
        }
        Ok(Self {
            log_probs: probs.mapv(f64::ln),
        })
    }

    /// Softmax over each row of a logit matrix.
    pub fn from_logits(logits: ArrayView2<f64>) -> Self {
        Self {
            log_probs: log_softmax_rows(logits),
        }
    }

    pub fn frames(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn classes(&self) -> usize {
        self.log_probs.ncols()
    }

    pub fn log_probs(&self) -> ArrayView2<'_, f64> {
        self.log_probs.view()
    }

    pub fn probs(&self) -> Array2<f64> {
        self.log_probs.mapv(f64::exp)
    }
}
