//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Everything here works on row-major batches: a batch of `n` inputs of
//! width `d` is an `n × d` matrix. Single-vector helpers wrap the batch path
//! so both routes share one implementation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("layer {layer}: expected input width {expected}, got {found}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: weights are {rows}x{cols} but biases have length {biases}")]
    MalformedLayer {
        layer: usize,
        rows: usize,
        cols: usize,
        biases: usize,
    },
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("backward called on a tape with no recorded forward pass")]
    EmptyTape,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
}

// Largest f64 strictly below one.
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept strictly inside (0, 1) even where f64 saturates.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Sigmoid {
            z.mapv_inplace(sigmoid);
        }
    }

    /// Multiplies `upstream` in place by the activation derivative, expressed
    /// through the layer output `y`.
    fn chain(self, upstream: &mut Array2<f64>, y: &Array2<f64>) {
        if self == Activation::Sigmoid {
            ndarray::Zip::from(upstream)
                .and(y)
                .for_each(|g, &y| *g *= y * (1.0 - y));
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Sigmoid => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// `y = act(W x + b)` with `W` stored as `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        biases: Array1<f64>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if weights.nrows() != biases.len() || weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(NnError::MalformedLayer {
                layer: 0,
                rows: weights.nrows(),
                cols: weights.ncols(),
                biases: biases.len(),
            });
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (in + out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-a..=a));
        DenseLayer {
            weights,
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.biases;
        self.activation.apply(&mut z);
        z
    }
}

/// Parameter gradients for one layer, shaped like the layer itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrad {
            weights: Array2::zeros(layer.weights.raw_dim()),
            biases: Array1::zeros(layer.biases.raw_dim()),
        }
    }
}

/// Gradients for a whole stack, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(network: &Network) -> Self {
        Gradients {
            layers: network.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<(), NnError> {
        if self.layers.len() != other.layers.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} vs {} layer gradients",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.dim() != b.weights.dim() {
                return Err(NnError::ShapeMismatch("layer gradient shapes differ".into()));
            }
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| {
            g.weights.iter().all(|v| v.is_finite()) && g.biases.iter().all(|v| v.is_finite())
        })
    }
}

/// Forward intermediates of one batch: `activations[0]` is the input, and
/// `activations[i + 1]` is the output of layer `i`.
#[derive(Debug, Clone, Default)]
pub struct GradientTape {
    activations: Vec<Array2<f64>>,
}

impl GradientTape {
    pub fn is_recorded(&self) -> bool {
        self.activations.len() >= 2
    }

    pub fn input(&self) -> Option<&Array2<f64>> {
        self.activations.first()
    }

    pub fn output(&self) -> Option<&Array2<f64>> {
        if self.is_recorded() {
            self.activations.last()
        } else {
            None
        }
    }

    pub fn into_output(mut self) -> Option<Array2<f64>> {
        if self.is_recorded() {
            self.activations.pop()
        } else {
            None
        }
    }
}

/// A scalar loss over the network output, summed over the batch rows.
#[derive(Debug, Clone, Copy)]
pub enum ScalarLoss<'a> {
    /// `0.5 · ‖y‖²`
    HalfSquaredNorm,
    /// `‖y − target‖²`, one target row per batch row.
    SquaredDistance(ArrayView2<'a, f64>),
}

impl ScalarLoss<'_> {
    /// Returns the per-row loss and `∂loss/∂y`.
    pub fn evaluate(&self, y: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), NnError> {
        match self {
            ScalarLoss::HalfSquaredNorm => {
                let values = y.map_axis(Axis(1), |row| 0.5 * row.dot(&row));
                Ok((values, y.clone()))
            }
            ScalarLoss::SquaredDistance(target) => {
                if target.dim() != y.dim() {
                    return Err(NnError::ShapeMismatch(format!(
                        "target {:?} vs output {:?}",
                        target.dim(),
                        y.dim()
                    )));
                }
                let diff = y - target;
                let values = diff.map_axis(Axis(1), |row| row.dot(&row));
                Ok((values, diff * 2.0))
            }
        }
    }
}

/// A feed-forward stack of dense layers with consistent widths.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyNetwork);
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.nrows() != layer.biases.len()
                || layer.weights.nrows() == 0
                || layer.weights.ncols() == 0
            {
                return Err(NnError::MalformedLayer {
                    layer: i,
                    rows: layer.weights.nrows(),
                    cols: layer.weights.ncols(),
                    biases: layer.biases.len(),
                });
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(NnError::DimensionMismatch {
                    layer: i,
                    expected: layer.in_dim(),
                    found: layers[i - 1].out_dim(),
                });
            }
        }
        Ok(Network { layers })
    }

    /// Builds `dims[0] → dims[1] → … → dims[n]` with Glorot initialization.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], activation, rng))
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    fn check_input(&self, width: usize) -> Result<(), NnError> {
        if width != self.in_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.in_dim(),
                found: width,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let batch = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x.ncols())?;
        let mut h = self.layers[0].forward_batch(x);
        for layer in &self.layers[1..] {
            h = layer.forward_batch(h.view());
        }
        Ok(h)
    }

    /// Forward pass that keeps every intermediate needed by [`Network::backward`].
    pub fn forward_tape(&self, x: Array2<f64>) -> Result<GradientTape, NnError> {
        self.check_input(x.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        for layer in &self.layers {
            let next = layer.forward_batch(activations[activations.len() - 1].view());
            activations.push(next);
        }
        Ok(GradientTape { activations })
    }

    fn check_tape(&self, tape: &GradientTape, upstream: &ArrayView2<'_, f64>) -> Result<(), NnError> {
        if !tape.is_recorded() {
            return Err(NnError::EmptyTape);
        }
        if tape.activations.len() != self.layers.len() + 1 {
            return Err(NnError::ShapeMismatch(format!(
                "tape has {} activations for {} layers",
                tape.activations.len(),
                self.layers.len()
            )));
        }
        let out = &tape.activations[self.layers.len()];
        if out.dim() != upstream.dim() {
            return Err(NnError::ShapeMismatch(format!(
                "upstream {:?} vs output {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        Ok(())
    }

    /// Reverse pass given `∂loss/∂output`. Returns parameter gradients summed
    /// over the batch and the per-row input gradient.
    pub fn backward(
        &self,
        tape: &GradientTape,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<(Gradients, Array2<f64>), NnError> {
        self.backward_impl(tape, upstream, true)
            .map(|(g, dx)| (g.expect("parameter gradients requested"), dx))
    }

    /// Reverse pass that skips parameter gradients; used by input-space attacks.
    pub fn backward_input(
        &self,
        tape: &GradientTape,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>, NnError> {
        self.backward_impl(tape, upstream, false).map(|(_, dx)| dx)
    }

    fn backward_impl(
        &self,
        tape: &GradientTape,
        upstream: ArrayView2<'_, f64>,
        with_params: bool,
    ) -> Result<(Option<Gradients>, Array2<f64>), NnError> {
        self.check_tape(tape, &upstream)?;
        let mut grads = Vec::with_capacity(if with_params { self.layers.len() } else { 0 });
        let mut delta = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.activations[i];
            let y = &tape.activations[i + 1];
            layer.activation.chain(&mut delta, y);
            if with_params {
                grads.push(LayerGrad {
                    weights: delta.t().dot(x),
                    biases: delta.sum_axis(Axis(0)),
                });
            }
            delta = delta.dot(&layer.weights);
        }
        grads.reverse();
        let grads = with_params.then_some(Gradients { layers: grads });
        Ok((grads, delta))
    }

    /// Forward + loss + backward in one call; returns `(per-row loss, param grads, input grad)`.
    pub fn loss_gradients(
        &self,
        x: Array2<f64>,
        loss: ScalarLoss<'_>,
    ) -> Result<(Array1<f64>, Gradients, Array2<f64>), NnError> {
        let tape = self.forward_tape(x)?;
        let (values, upstream) = loss.evaluate(tape.output().ok_or(NnError::EmptyTape)?)?;
        let (grads, dx) = self.backward(&tape, upstream.view())?;
        Ok((values, grads, dx))
    }
}

/// Squared Euclidean norm of each row.
pub fn row_sq_norms(m: ArrayView2<'_, f64>) -> Array1<f64> {
    m.map_axis(Axis(1), |row| row.dot(&row))
}

pub fn sq_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum UpdateRule {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for UpdateRule {
    fn default() -> Self {
        UpdateRule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Accumulators for one parameter stack, mirroring its layer shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    rule: UpdateRule,
    learning_rate: f64,
    step: u64,
    first: Vec<LayerGrad>,
    second: Vec<LayerGrad>,
}

impl OptimizerState {
    pub fn new<'a>(
        rule: UpdateRule,
        learning_rate: f64,
        layers: impl IntoIterator<Item = &'a DenseLayer>,
    ) -> Self {
        let first: Vec<LayerGrad> = layers.into_iter().map(LayerGrad::zeros_like).collect();
        let second = match rule {
            UpdateRule::Sgd => Vec::new(),
            UpdateRule::Adam { .. } => first.clone(),
        };
        OptimizerState {
            rule,
            learning_rate,
            step: 0,
            first,
            second,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to `layers` (same order and shapes as at construction).
    pub fn step<'a>(
        &mut self,
        layers: impl IntoIterator<Item = &'a mut DenseLayer>,
        grads: &[LayerGrad],
    ) -> Result<(), NnError> {
        let layers: Vec<&mut DenseLayer> = layers.into_iter().collect();
        if layers.len() != grads.len() || layers.len() != self.first.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} layers, {} gradients, optimizer tracks {}",
                layers.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for ((layer, g), m) in layers.iter().zip(grads).zip(&self.first) {
            if layer.weights.dim() != g.weights.dim()
                || layer.biases.dim() != g.biases.dim()
                || m.weights.dim() != g.weights.dim()
            {
                return Err(NnError::ShapeMismatch("parameter and gradient shapes differ".into()));
            }
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.rule {
            UpdateRule::Sgd => {
                for (layer, g) in layers.into_iter().zip(grads) {
                    layer.weights.scaled_add(-lr, &g.weights);
                    layer.biases.scaled_add(-lr, &g.biases);
                }
            }
            UpdateRule::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                for (((layer, g), m), v) in layers
                    .into_iter()
                    .zip(grads)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&g.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                    ndarray::Zip::from(&mut layer.biases)
                        .and(&g.biases)
                        .and(&mut m.biases)
                        .and(&mut v.biases)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(weights: Array2<f64>, biases: Array1<f64>, act: Activation) -> Network {
        Network::new(vec![DenseLayer::new(weights, biases, act).unwrap()]).unwrap()
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let net = single(Array2::zeros((1, 2)), Array1::zeros(1), Activation::Sigmoid);
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn identity_layer_is_dot_product() {
        let net = single(array![[1.0, -1.0]], array![0.0], Activation::Identity);
        assert_eq!(net.forward(&[3.0, 1.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn two_layer_composition_matches_hand_evaluation() {
        let net = Network::new(vec![
            DenseLayer::new(array![[0.5, -1.0], [2.0, 0.25]], array![0.1, -0.3], Activation::Sigmoid)
                .unwrap(),
            DenseLayer::new(array![[1.5, -0.5]], array![0.2], Activation::Sigmoid).unwrap(),
        ])
        .unwrap();
        let x = [0.4, 0.8];
        // hidden pre-activations: 0.2 - 0.8 + 0.1 = -0.5 ; 0.8 + 0.2 - 0.3 = 0.7
        let h0 = 1.0 / (1.0 + 0.5f64.exp());
        let h1 = 1.0 / (1.0 + (-0.7f64).exp());
        let expected = 1.0 / (1.0 + (-(1.5 * h0 - 0.5 * h1 + 0.2)).exp());
        let got = net.forward(&x).unwrap()[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let err = Network::new(vec![
            DenseLayer::zeros(3, 4, Activation::Sigmoid),
            DenseLayer::zeros(5, 2, Activation::Sigmoid),
        ])
        .unwrap_err();
        assert_eq!(
            err,
            NnError::DimensionMismatch {
                layer: 1,
                expected: 5,
                found: 4
            }
        );
        let net = Network::new(vec![DenseLayer::zeros(3, 4, Activation::Sigmoid)]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NnError::DimensionMismatch { layer: 0, .. })
        ));
    }

    #[test]
    fn quadratic_input_gradient() {
        let net = single(array![[1.0]], array![0.0], Activation::Identity);
        let (loss, _, dx) = net
            .loss_gradients(array![[2.0]], ScalarLoss::HalfSquaredNorm)
            .unwrap();
        assert_eq!(loss[0], 2.0);
        assert_eq!(dx, array![[2.0]]);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let net = Network::new(vec![
            DenseLayer::new(array![[0.3, -0.2], [0.1, 0.4]], array![0.0, 0.1], Activation::Sigmoid)
                .unwrap(),
            DenseLayer::new(array![[0.0, 0.0]], array![0.7], Activation::Identity).unwrap(),
        ])
        .unwrap();
        let tape = net.forward_tape(array![[0.5, -1.0]]).unwrap();
        let (grads, dx) = net.backward(&tape, array![[0.0]].view()).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        for g in &grads.layers {
            assert!(g.weights.iter().chain(g.biases.iter()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let net = single(array![[1.0]], array![0.0], Activation::Identity);
        let tape = GradientTape::default();
        assert_eq!(
            net.backward(&tape, array![[1.0]].view()).unwrap_err(),
            NnError::EmptyTape
        );
    }

    #[test]
    fn sigmoid_saturates_inside_open_interval() {
        for z in [-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6] {
            let y = sigmoid(z);
            assert!(y > 0.0 && y < 1.0, "sigmoid({z}) = {y}");
        }
    }

    #[test]
    fn plain_sgd_steps() {
        let mut layer = DenseLayer::new(array![[1.0]], array![0.0], Activation::Identity).unwrap();
        let mut opt = OptimizerState::new(UpdateRule::Sgd, 0.1, [&layer]);
        let g = LayerGrad {
            weights: array![[2.0]],
            biases: array![0.0],
        };
        opt.step([&mut layer], std::slice::from_ref(&g)).unwrap();
        assert!((layer.weights[[0, 0]] - 0.8).abs() < 1e-15);

        // f(w) = w², two steps from w = 1.
        let mut layer = DenseLayer::new(array![[1.0]], array![0.0], Activation::Identity).unwrap();
        let mut opt = OptimizerState::new(UpdateRule::Sgd, 0.1, [&layer]);
        for _ in 0..2 {
            let w = layer.weights[[0, 0]];
            let g = LayerGrad {
                weights: array![[2.0 * w]],
                biases: array![0.0],
            };
            opt.step([&mut layer], &[g]).unwrap();
        }
        assert!((layer.weights[[0, 0]] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::glorot(&[3, 2], Activation::Sigmoid, &mut rng).unwrap();
        for rule in [UpdateRule::Sgd, UpdateRule::default()] {
            let mut trained = net.clone();
            let mut opt = OptimizerState::new(rule, 0.01, trained.layers());
            let zeros = Gradients::zeros_like(&trained);
            opt.step(trained.layers_mut().iter_mut(), &zeros.layers).unwrap();
            assert_eq!(trained, net);
        }
    }

    #[test]
    fn optimizer_rejects_shape_mismatch() {
        let mut layer = DenseLayer::zeros(2, 2, Activation::Identity);
        let mut opt = OptimizerState::new(UpdateRule::Sgd, 0.1, [&layer]);
        let bad = LayerGrad {
            weights: Array2::zeros((3, 2)),
            biases: Array1::zeros(3),
        };
        assert!(matches!(
            opt.step([&mut layer], &[bad]),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn glorot_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = DenseLayer::glorot(10, 6, Activation::Sigmoid, &mut rng);
        let a = (6.0f64 / 16.0).sqrt();
        assert!(layer.weights.iter().all(|w| w.abs() <= a));
        assert!(layer.biases.iter().all(|&b| b == 0.0));
    }
}
