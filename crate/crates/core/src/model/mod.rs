//! A small tanh network with an optional recurrent first layer, trained with
//! hand-written backpropagation.
//!
//! The last hidden layer is the deep feature `u_t`; a linear output layer
//! `a_t = W u_t + B` feeds the softmax. All parameters live in one flat
//! vector in the order reported by [`NetworkSpec::blocks`].

mod adam;
mod evaluate;
mod schedule;
mod train;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::posterior::PosteriorMatrix;

pub use adam::{Adam, AdamConfig, DEFAULT_LEARNING_RATE};
pub use evaluate::{evaluate_condition, evaluate_set, SetEvaluation};
pub use schedule::{ScheduleAction, ScheduleConfig, ScheduleState};
pub use train::{
    sequence_step, train, CenterWork, MetricsRow, SequenceStep, TrainConfig, TrainError, TrainMode, TrainState,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("{what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("gradient entry {index} is not finite")]
    NonFiniteGradient { index: usize },
}

fn check(what: &'static str, expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::Shape { what, expected, actual })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Hidden layer widths; the last one is the feature dimension.
    pub hidden: Vec<usize>,
    /// Make the first hidden layer a tanh recurrence over frames.
    pub recurrent: bool,
    pub feature_dim: usize,
    /// Output classes, including the blank for CTC-trained networks.
    pub num_classes: usize,
}

/// One named parameter tensor within the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
struct HiddenLayout {
    inputs: usize,
    units: usize,
    weight: usize,
    recurrent: Option<usize>,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    hidden: Vec<HiddenLayout>,
    out_weight: usize,
    out_bias: usize,
    total: usize,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(ModelError::Spec("input_dim and num_classes must be >= 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ModelError::Spec("need at least one hidden layer, all widths >= 1".into()));
        }
        if self.hidden.last() != Some(&self.feature_dim) {
            return Err(ModelError::Spec(format!(
                "feature_dim {} must equal the last hidden width {}",
                self.feature_dim,
                self.hidden.last().copied().unwrap_or(0)
            )));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut take = |n: usize| {
            let at = offset;
            offset += n;
            at
        };
        let mut hidden = Vec::with_capacity(self.hidden.len());
        let mut inputs = self.input_dim;
        for (i, &units) in self.hidden.iter().enumerate() {
            let weight = take(units * inputs);
            let recurrent = (i == 0 && self.recurrent).then(|| take(units * units));
            let bias = take(units);
            hidden.push(HiddenLayout {
                inputs,
                units,
                weight,
                recurrent,
                bias,
            });
            inputs = units;
        }
        let out_weight = take(self.num_classes * self.feature_dim);
        let out_bias = take(self.num_classes);
        Layout {
            hidden,
            out_weight,
            out_bias,
            total: offset,
        }
    }

    /// Parameter tensors in flat order. Matrices are row-major with one row
    /// per output unit.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let layout = self.layout();
        let mut out = Vec::new();
        for (i, h) in layout.hidden.iter().enumerate() {
            let block = |name: &str, rows, cols, offset| ParamBlock {
                name: format!("hidden{i}.{name}"),
                rows,
                cols,
                offset,
            };
            out.push(block("weight", h.units, h.inputs, h.weight));
            if let Some(r) = h.recurrent {
                out.push(block("recurrent", h.units, h.units, r));
            }
            out.push(block("bias", 1, h.units, h.bias));
        }
        out.push(ParamBlock {
            name: "output.weight".into(),
            rows: self.num_classes,
            cols: self.feature_dim,
            offset: layout.out_weight,
        });
        out.push(ParamBlock {
            name: "output.bias".into(),
            rows: 1,
            cols: self.num_classes,
            offset: layout.out_bias,
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<f64>,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input: Array2<f64>,
    hidden: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub posteriors: PosteriorMatrix,
}

impl ForwardPass {
    /// The deep features `u`, `T x D`.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.hidden.last().expect("at least one hidden layer").view()
    }
}

impl Network {
    pub fn new(spec: NetworkSpec, params: Vec<f64>) -> Result<Self, ModelError> {
        spec.validate()?;
        check("parameter count", spec.param_count(), params.len())?;
        Ok(Self { spec, params })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut params = vec![0.0; spec.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in spec.blocks() {
            if block.name.ends_with("bias") {
                continue;
            }
            let limit = (6.0 / (block.rows + block.cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for p in &mut params[block.range()] {
                *p = dist.sample(&mut rng);
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn matrix(&self, offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[offset..offset + rows * cols]).expect("layout")
    }

    fn vector(&self, offset: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[offset..offset + len])
    }

    /// `W`, `K x D`.
    pub fn output_weights(&self) -> ArrayView2<'_, f64> {
        let layout = self.spec.layout();
        self.matrix(layout.out_weight, self.spec.num_classes, self.spec.feature_dim)
    }

    pub fn output_bias(&self) -> ArrayView1<'_, f64> {
        let layout = self.spec.layout();
        self.vector(layout.out_bias, self.spec.num_classes)
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardPass, ModelError> {
        check("input dimension", self.spec.input_dim, input.ncols())?;
        let layout = self.spec.layout();
        let frames = input.nrows();
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(layout.hidden.len());
        for h in &layout.hidden {
            let prev = hidden.last().map_or(input.view(), |a| a.view());
            let w = self.matrix(h.weight, h.units, h.inputs);
            let b = self.vector(h.bias, h.units);
            let mut act = prev.dot(&w.t()) + &b;
            if let Some(r) = h.recurrent {
                let u = self.matrix(r, h.units, h.units);
                let mut state = Array1::<f64>::zeros(h.units);
                for t in 0..frames {
                    let mut row = act.row_mut(t);
                    row += &u.dot(&state);
                    row.mapv_inplace(f64::tanh);
                    state.assign(&row);
                }
            } else {
                act.mapv_inplace(f64::tanh);
            }
            hidden.push(act);
        }
        let features = hidden.last().expect("validated");
        let logits = features.dot(&self.output_weights().t()) + &self.output_bias();
        let posteriors = PosteriorMatrix::from_logits(logits.view());
        Ok(ForwardPass {
            input: input.to_owned(),
            hidden,
            logits,
            posteriors,
        })
    }

    /// Parameter gradients given the error signal at the logits (used for the
    /// output layer) and the error signal at the features (propagated through
    /// the hidden layers).
    pub fn backward(
        &self,
        pass: &ForwardPass,
        delta_logits: ArrayView2<f64>,
        delta_features: ArrayView2<f64>,
    ) -> Result<Vec<f64>, ModelError> {
        let frames = pass.input.nrows();
        check("logit error frames", frames, delta_logits.nrows())?;
        check("logit error classes", self.spec.num_classes, delta_logits.ncols())?;
        check("feature error frames", frames, delta_features.nrows())?;
        check("feature error dimension", self.spec.feature_dim, delta_features.ncols())?;

        let layout = self.spec.layout();
        let mut grads = vec![0.0; layout.total];
        let features = pass.features();

        let d_out = delta_logits.t().dot(&features);
        grads[layout.out_weight..layout.out_weight + d_out.len()]
            .copy_from_slice(d_out.as_slice().expect("standard layout"));
        let d_bias = delta_logits.sum_axis(Axis(0));
        grads[layout.out_bias..layout.out_bias + d_bias.len()].copy_from_slice(d_bias.as_slice().expect("contiguous"));

        let mut upstream = delta_features.to_owned();
        for (i, h) in layout.hidden.iter().enumerate().rev() {
            let act = &pass.hidden[i];
            let prev = if i == 0 { pass.input.view() } else { pass.hidden[i - 1].view() };
            let w = self.matrix(h.weight, h.units, h.inputs);

            let d_pre = match h.recurrent {
                None => &upstream * &act.mapv(|a| 1.0 - a * a),
                Some(r) => {
                    let u = self.matrix(r, h.units, h.units);
                    let mut d_pre = Array2::<f64>::zeros((frames, h.units));
                    let mut carry = Array1::<f64>::zeros(h.units);
                    for t in (0..frames).rev() {
                        let dh = &upstream.row(t) + &carry;
                        let dp = &dh * &act.row(t).mapv(|a| 1.0 - a * a);
                        carry = u.t().dot(&dp);
                        d_pre.row_mut(t).assign(&dp);
                    }
                    // recurrent weights see the previous frame's state
                    if frames > 1 {
                        let d_u = d_pre.slice(s![1.., ..]).t().dot(&act.slice(s![..frames - 1, ..]));
                        grads[r..r + d_u.len()].copy_from_slice(d_u.as_slice().expect("standard layout"));
                    }
                    d_pre
                }
            };

            let d_w = d_pre.t().dot(&prev);
            grads[h.weight..h.weight + d_w.len()].copy_from_slice(d_w.as_slice().expect("standard layout"));
            let d_b = d_pre.sum_axis(Axis(0));
            grads[h.bias..h.bias + d_b.len()].copy_from_slice(d_b.as_slice().expect("contiguous"));
            if i > 0 {
                upstream = d_pre.dot(&w);
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{finite_diff, relative_error};
    use ndarray::array;

    fn spec(recurrent: bool) -> NetworkSpec {
        NetworkSpec {
            input_dim: 3,
            hidden: vec![4, 5],
            recurrent,
            feature_dim: 5,
            num_classes: 4,
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(false);
        s.feature_dim = 4;
        assert!(matches!(s.validate(), Err(ModelError::Spec(_))));
        s.hidden.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn blocks_tile_the_parameter_vector() {
        let s = spec(true);
        let blocks = s.blocks();
        let names: Vec<&str> = blocks.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "hidden0.weight",
                "hidden0.recurrent",
                "hidden0.bias",
                "hidden1.weight",
                "hidden1.bias",
                "output.weight",
                "output.bias"
            ]
        );
        let mut next = 0;
        for b in &blocks {
            assert_eq!(b.offset, next);
            next += b.len();
        }
        assert_eq!(next, s.param_count());
    }

    #[test]
    fn identity_output_layer() {
        let s = NetworkSpec {
            input_dim: 2,
            hidden: vec![2],
            recurrent: false,
            feature_dim: 2,
            num_classes: 2,
        };
        // hidden: identity weights, so u = tanh(x); output: identity, zero bias
        let net = Network::new(s, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = array![[0.3, -0.2], [1.0, 0.5]];
        let pass = net.forward(x.view()).unwrap();
        assert_eq!(pass.logits, pass.features().to_owned());
        for row in pass.posteriors.probs().outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_bias_gives_uniform_posteriors() {
        let s = spec(true);
        let mut net = Network::new(s.clone(), vec![0.0; s.param_count()]).unwrap();
        let bias = s.blocks().last().unwrap().range();
        for p in &mut net.params_mut()[bias.clone()] {
            *p = 0.7;
        }
        let pass = net.forward(Array2::zeros((3, 3)).view()).unwrap();
        for p in pass.posteriors.probs().iter() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        net.params_mut()[bias.start] = 1.0;
        let pass = net.forward(Array2::zeros((3, 3)).view()).unwrap();
        assert!(pass.posteriors.probs()[[0, 0]] > 0.25);
    }

    #[test]
    fn zero_errors_give_zero_gradients() {
        let net = Network::init(spec(true), 1).unwrap();
        let pass = net.forward(array![[0.1, 0.2, 0.3], [0.0, -1.0, 0.5]].view()).unwrap();
        let grads = net
            .backward(&pass, Array2::zeros((2, 4)).view(), Array2::zeros((2, 5)).view())
            .unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn output_layer_gradient_is_outer_product() {
        let net = Network::init(spec(false), 2).unwrap();
        let pass = net.forward(array![[0.1, 0.2, 0.3], [0.0, -1.0, 0.5]].view()).unwrap();
        let delta = array![[0.1, -0.2, 0.0, 0.1], [0.3, 0.0, -0.3, 0.0]];
        let grads = net.backward(&pass, delta.view(), Array2::zeros((2, 5)).view()).unwrap();
        let block = &spec(false).blocks()[4];
        let expected = delta.t().dot(&pass.features());
        assert_eq!(&grads[block.range()], expected.as_slice().unwrap());
    }

    /// Linear functional of logits and features: the analytic gradient with
    /// fixed error signals must match finite differences of
    /// `sum(delta_a * a) + sum(delta_u * u)`.
    #[test]
    fn backward_matches_finite_differences() {
        for recurrent in [false, true] {
            let s = spec(recurrent);
            let net = Network::init(s.clone(), 7).unwrap();
            let x = array![[0.1, 0.2, 0.3], [0.0, -1.0, 0.5], [0.4, 0.4, -0.2]];
            let da = array![[0.1, -0.2, 0.0, 0.1], [0.3, 0.0, -0.3, 0.0], [0.05, 0.05, -0.05, -0.05]];
            let du = array![
                [0.2, -0.1, 0.0, 0.3, 0.1],
                [0.0, 0.5, -0.2, 0.1, 0.0],
                [-0.3, 0.2, 0.1, 0.0, 0.4]
            ];
            let pass = net.forward(x.view()).unwrap();
            // the feature signal also drives the output layer through u, so
            // fold W^T da into it to get the full derivative
            let du_total = &du + &da.dot(&net.output_weights());
            let analytic = net.backward(&pass, da.view(), du_total.view()).unwrap();
            let numeric = finite_diff(
                |p| {
                    let n = Network::new(s.clone(), p.to_vec()).unwrap();
                    let f = n.forward(x.view()).unwrap();
                    (&f.logits * &da).sum() + (&f.features() * &du).sum()
                },
                net.params(),
                1e-6,
            );
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-7, "recurrent={recurrent}: {err}");
        }
    }
}
