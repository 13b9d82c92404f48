//! Exhaustive reference implementations used to validate the alignment DP,
//! the expected center loss and every analytic gradient.
//!
//! Nothing here touches the log-space tables: paths are enumerated one by
//! one in the probability domain and collapsed directly.

use ndarray::{Array2, ArrayView2};

use crate::ctc::{OccupancyMode, BLANK};
use crate::losses::CenterBank;

/// Largest number of paths any enumeration will visit.
pub const MAX_PATHS: u64 = 10_000_000;

/// Default central-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{classes}^{frames} paths exceed the enumeration limit")]
    TooLarge { classes: usize, frames: usize },
    #[error("center for class {0} is missing")]
    UnknownClass(usize),
}

fn path_count(classes: usize, frames: usize) -> Result<u64, OracleError> {
    let mut count: u64 = 1;
    for _ in 0..frames {
        count = count
            .checked_mul(classes as u64)
            .filter(|&c| c <= MAX_PATHS)
            .ok_or(OracleError::TooLarge { classes, frames })?;
    }
    Ok(count)
}

/// Calls `visit(path, probability)` for each of the `K^T` frame paths.
fn for_each_path<F: FnMut(&[usize], f64)>(probs: ArrayView2<f64>, mut visit: F) -> Result<(), OracleError> {
    let (frames, classes) = probs.dim();
    let total = path_count(classes, frames)?;
    let mut path = vec![0usize; frames];
    for index in 0..total {
        let mut rest = index;
        for slot in path.iter_mut().rev() {
            *slot = (rest % classes as u64) as usize;
            rest /= classes as u64;
        }
        let p: f64 = path.iter().enumerate().map(|(t, &k)| probs[[t, k]]).product();
        visit(&path, p);
    }
    Ok(())
}

/// Merge repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// For a path that collapses to some labeling, the position in the
/// blank-augmented labeling occupied at each frame.
fn augmented_positions(path: &[usize]) -> Vec<usize> {
    let mut emitted = 0usize;
    let mut prev = None;
    path.iter()
        .map(|&k| {
            let pos = if k == BLANK {
                2 * emitted
            } else {
                if Some(k) != prev {
                    emitted += 1;
                }
                2 * emitted - 1
            };
            prev = Some(k);
            pos
        })
        .collect()
}

/// `p(z | x)` as the sum of the probabilities of every path collapsing to `z`.
pub fn brute_force_seq_prob(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for_each_path(probs, |path, p| {
        if collapse(path) == labels {
            total += p;
        }
    })?;
    Ok(total)
}

/// Occupancy of each `(frame, augmented position)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOccupancy {
    /// Mass of the complete paths through each cell.
    pub path_mass: Array2<f64>,
    /// `path_mass` times the emission at the cell, which is what the product
    /// of forward and backward variables yields when both include it.
    pub alpha_beta: Array2<f64>,
    pub seq_prob: f64,
}

impl BruteForceOccupancy {
    pub fn gamma(&self, mode: OccupancyMode) -> Array2<f64> {
        match mode {
            OccupancyMode::PaperLiteral => self.alpha_beta.clone(),
            OccupancyMode::FrameNormalized => self.path_mass.mapv(|m| m / self.seq_prob),
        }
    }
}

pub fn brute_force_occupancy(probs: ArrayView2<f64>, labels: &[usize]) -> Result<BruteForceOccupancy, OracleError> {
    let frames = probs.nrows();
    let width = 2 * labels.len() + 1;
    let mut path_mass = Array2::zeros((frames, width));
    let mut seq_prob = 0.0;
    for_each_path(probs, |path, p| {
        if collapse(path) == labels {
            seq_prob += p;
            for (t, pos) in augmented_positions(path).into_iter().enumerate() {
                path_mass[[t, pos]] += p;
            }
        }
    })?;
    let mut alpha_beta = path_mass.clone();
    for t in 0..frames {
        for s in 0..width {
            let symbol = if s % 2 == 0 { BLANK } else { labels[s / 2] };
            alpha_beta[[t, s]] *= probs[[t, symbol]];
        }
    }
    Ok(BruteForceOccupancy {
        path_mass,
        alpha_beta,
        seq_prob,
    })
}

/// Expected center loss from enumerated occupancy, blank cells skipped.
pub fn brute_force_ecl(
    probs: ArrayView2<f64>,
    labels: &[usize],
    features: ArrayView2<f64>,
    bank: &CenterBank,
    mode: OccupancyMode,
) -> Result<f64, OracleError> {
    let gamma = brute_force_occupancy(probs, labels)?.gamma(mode);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let s = 2 * i + 1;
        let center = bank.center(label).ok_or(OracleError::UnknownClass(label))?;
        for t in 0..features.nrows() {
            let dist: f64 = features
                .row(t)
                .iter()
                .zip(center)
                .map(|(u, c)| (u - c) * (u - c))
                .sum();
            total += gamma[[t, s]] * dist;
        }
    }
    Ok(total)
}

/// Every labeling over classes `1..classes` that fits in `frames` frames.
pub fn enumerate_labelings(classes: usize, frames: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..frames {
        let mut next = Vec::new();
        for prefix in &frontier {
            for k in 1..classes {
                let mut z: Vec<usize> = prefix.clone();
                z.push(k);
                let repeats = z.windows(2).filter(|w| w[0] == w[1]).count();
                if z.len() + repeats <= frames {
                    next.push(z);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Central differences `(f(x + e_i) - f(x - e_i)) / 2e` per coordinate.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], epsilon: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + epsilon;
            let plus = f(&probe);
            probe[i] = x[i] - epsilon;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * epsilon)
        })
        .collect()
}

/// `max |a - b| / max(max |a|, max |b|)`; zero when both vectors vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[0, 1, 1, 0, 2]), vec![1, 2]);
        assert_eq!(collapse(&[1, 0, 1]), vec![1, 1]);
        assert_eq!(collapse(&[0, 0]), Vec::<usize>::new());
    }

    #[test]
    fn seq_prob_examples() {
        let y = array![[0.2, 0.5, 0.3]];
        assert_eq!(brute_force_seq_prob(y.view(), &[1]).unwrap(), 0.5);
        let uniform = Array2::from_elem((2, 3), 1.0 / 3.0);
        assert_abs_diff_eq!(brute_force_seq_prob(uniform.view(), &[1]).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(brute_force_seq_prob(uniform.view(), &[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn paths_sum_to_one() {
        let y = array![[0.1, 0.6, 0.3], [0.25, 0.25, 0.5], [0.7, 0.2, 0.1]];
        let mut total = 0.0;
        for_each_path(y.view(), |_, p| total += p).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn too_large() {
        let y = Array2::from_elem((24, 2), 0.5);
        assert_eq!(
            brute_force_seq_prob(y.view(), &[1]),
            Err(OracleError::TooLarge { classes: 2, frames: 24 })
        );
    }

    #[test]
    fn single_path_occupancy() {
        let y = array![[0.2, 0.5, 0.3]];
        let occ = brute_force_occupancy(y.view(), &[1]).unwrap();
        assert_eq!(occ.path_mass, array![[0.0, 0.5, 0.0]]);
        assert_eq!(occ.alpha_beta, array![[0.0, 0.25, 0.0]]);
    }

    #[test]
    fn labeling_enumeration() {
        // T = 2, classes {1, 2}: (), (1), (2), (1,2), (2,1)
        let mut all = enumerate_labelings(3, 2);
        all.sort();
        assert_eq!(all, vec![vec![], vec![1], vec![1, 2], vec![2], vec![2, 1]]);
    }

    #[test]
    fn finite_diff_known_derivatives() {
        let g = finite_diff(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], DEFAULT_EPSILON);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-6);
        assert_eq!(finite_diff(|_| 7.0, &[1.0, -3.0], DEFAULT_EPSILON), vec![0.0, 0.0]);
        let g = finite_diff(|x| x[0] * x[1], &[3.0, 5.0], DEFAULT_EPSILON);
        assert_abs_diff_eq!(g[0], 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-6);
    }
}
