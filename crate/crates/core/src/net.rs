//! Fully connected autoencoder: forward pass, MSE loss, backpropagation,
//! plain SGD and the learning-rate schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::FaceVector;

/// Layer sizes matching the 112x112 input, 800-unit and 300-unit layers.
pub const FULL_ARCH: [usize; 5] = [12544, 800, 300, 800, 12544];

/// Small architecture used for the desk-scale benchmark and tests.
pub const DESK_ARCH: [usize; 5] = [64, 32, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    // subgradient of ReLU at exactly 0 is 0
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One dense layer; `weights` is `fan_out x fan_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl Layer {
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.fan_in).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }
}

/// Parameters of a symmetric encoder/decoder stack.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    bottleneck_index: usize,
}

/// Checks an architecture and returns its bottleneck index.
pub fn validate_sizes(layer_sizes: &[usize]) -> Result<usize> {
    if layer_sizes.len() < 3 || layer_sizes.contains(&0) {
        return Err(Error::BadLayerSize(layer_sizes.to_vec()));
    }
    if layer_sizes.iter().ne(layer_sizes.iter().rev()) {
        return Err(Error::AsymmetricArchitecture(layer_sizes.to_vec()));
    }
    let min = *layer_sizes.iter().min().expect("non-empty");
    let bottleneck = layer_sizes.iter().position(|&s| s == min).expect("min exists");
    Ok(bottleneck)
}

/// ReLU on every layer except the last, which is linear.
pub fn default_activations(n_layers: usize) -> Vec<Activation> {
    (0..n_layers)
        .map(|l| {
            if l + 1 == n_layers {
                Activation::Linear
            } else {
                Activation::Relu
            }
        })
        .collect()
}

/// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`,
/// zero biases. Deterministic in `seed`.
pub fn init_autoencoder(layer_sizes: &[usize], seed: u64) -> Result<AutoencoderParams> {
    let bottleneck_index = validate_sizes(layer_sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = default_activations(layer_sizes.len() - 1);
    let layers = layer_sizes
        .windows(2)
        .zip(acts)
        .map(|(w, activation)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.random::<f64>() - 1.0) * s)
                .collect();
            Layer {
                weights,
                biases: vec![0.0; fan_out],
                fan_in,
                fan_out,
                activation,
            }
        })
        .collect();
    Ok(AutoencoderParams {
        layer_sizes: layer_sizes.to_vec(),
        layers,
        bottleneck_index,
    })
}

impl AutoencoderParams {
    /// Assembles parameters from explicit arrays, validating every shape.
    ///
    /// Unlike [`init_autoencoder`] this accepts any activation per layer.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        let bottleneck_index = validate_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers || activations.len() != n_layers {
            return Err(Error::ShapeMismatch(format!(
                "expected {n_layers} layers, got {} weights, {} biases, {} activations",
                weights.len(),
                biases.len(),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (l, ((w, b), act)) in weights.into_iter().zip(biases).zip(activations).enumerate() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if w.len() != fan_in * fan_out || b.len() != fan_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: expected {fan_out}x{fan_in} weights and {fan_out} biases"
                )));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!("layer {l} has non-finite parameters")));
            }
            layers.push(Layer {
                weights: w,
                biases: b,
                fan_in,
                fan_out,
                activation: act,
            });
        }
        Ok(AutoencoderParams {
            layer_sizes,
            layers,
            bottleneck_index,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Index into `layer_sizes` of the encoder output.
    pub fn bottleneck_index(&self) -> usize {
        self.bottleneck_index
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layer_sizes[self.bottleneck_index]
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Runs the network, keeping pre-activations and activations of every
    /// layer. `acts[0]` is the input.
    fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.fan_out);
            layer.affine(&acts[l], &mut z);
            let a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: l });
            }
            pre.push(z);
            acts.push(a);
        }
        Ok(Trace { pre, acts })
    }

    /// Output of the encoder only.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers[..self.bottleneck_index] {
            layer.affine(&cur, &mut next);
            for v in next.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// In-place `theta <- theta - lr * g`.
    pub fn apply_sgd(&mut self, g: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidLearningRate(lr));
        }
        g.check_shape(self)?;
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(g.weights.iter().zip(&g.biases)) {
            for (w, d) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * d;
            }
            for (b, d) in layer.biases.iter_mut().zip(gb) {
                *b -= lr * d;
            }
        }
        Ok(())
    }
}

struct Trace {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

/// Bottleneck activations and reconstruction for one input.
pub fn forward(p: &AutoencoderParams, x: &FaceVector) -> Result<(FaceVector, FaceVector)> {
    let mut trace = p.trace(x.as_slice())?;
    let recon = trace.acts.pop().expect("at least one layer");
    let bottleneck = trace.acts.swap_remove(p.bottleneck_index);
    Ok((
        FaceVector::from_vec_unchecked(bottleneck),
        FaceVector::from_vec_unchecked(recon),
    ))
}

/// Mean squared error over coordinates.
pub fn mse_loss(x_hat: &FaceVector, target: &FaceVector) -> Result<f64> {
    mse(x_hat.as_slice(), target.as_slice())
}

pub(crate) fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Parameter gradients, shape-congruent with [`AutoencoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(p: &AutoencoderParams) -> Self {
        Gradients {
            weights: p.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: p.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn check_shape(&self, p: &AutoencoderParams) -> Result<()> {
        let ok = self.weights.len() == p.layers.len()
            && self.biases.len() == p.layers.len()
            && p.layers.iter().zip(&self.weights).zip(&self.biases).all(|((l, w), b)| {
                w.len() == l.weights.len() && b.len() == l.biases.len()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("gradients do not match parameters".into()))
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Loss and gradient of `MSE(reconstruction(x), target)`.
pub fn backward(
    p: &AutoencoderParams,
    x: &FaceVector,
    target: &FaceVector,
) -> Result<(f64, Gradients)> {
    let mut g = Gradients::zeros_like(p);
    let loss = backward_accumulate(p, x.as_slice(), target.as_slice(), &mut g)?;
    Ok((loss, g))
}

/// Adds the gradient for one pair into `acc` and returns that pair's loss.
pub(crate) fn backward_accumulate(
    p: &AutoencoderParams,
    x: &[f64],
    target: &[f64],
    acc: &mut Gradients,
) -> Result<f64> {
    let out_dim = *p.layer_sizes.last().expect("validated");
    if target.len() != out_dim {
        return Err(Error::DimensionMismatch {
            expected: out_dim,
            got: target.len(),
        });
    }
    let trace = p.trace(x)?;
    let recon = trace.acts.last().expect("validated");
    let loss = mse(recon, target)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteActivation {
            layer: p.layers.len() - 1,
        });
    }

    let scale = 2.0 / out_dim as f64;
    // dL/da for the current layer's output
    let mut grad_out: Vec<f64> = recon.iter().zip(target).map(|(r, t)| scale * (r - t)).collect();
    for (l, layer) in p.layers.iter().enumerate().rev() {
        let delta: Vec<f64> = grad_out
            .iter()
            .zip(&trace.pre[l])
            .map(|(g, &z)| g * layer.activation.derivative(z))
            .collect();
        let input = &trace.acts[l];
        let gw = &mut acc.weights[l];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
            for (g, &a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        for (gb, &d) in acc.biases[l].iter_mut().zip(&delta) {
            *gb += d;
        }
        if l > 0 {
            let mut prev = vec![0.0; layer.fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (pg, &w) in prev.iter_mut().zip(row) {
                    *pg += d * w;
                }
            }
            grad_out = prev;
        }
    }
    Ok(loss)
}

/// Returns `theta - lr * g` as new parameters.
pub fn sgd_step(p: &AutoencoderParams, g: &Gradients, lr: f64) -> Result<AutoencoderParams> {
    let mut next = p.clone();
    next.apply_sgd(g, lr)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Log-linear interpolation from `start` at the first epoch to `end` at
    /// the last.
    LogDecay { start: f64, end: f64 },
    /// `lr0 / (1 + decay * epoch)`.
    ConstantWithDecay { lr0: f64, decay: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::LogDecay {
            start: 1e-2,
            end: 1e-8,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::LogDecay { start, end } => {
                if !(start.is_finite() && end > 0.0 && start > end) {
                    return Err(Error::InvalidSchedule(format!(
                        "log decay needs start > end > 0, got {start} -> {end}"
                    )));
                }
            }
            LrSchedule::ConstantWithDecay { lr0, decay } => {
                if !(lr0 > 0.0 && lr0.is_finite() && decay >= 0.0 && decay.is_finite()) {
                    return Err(Error::InvalidSchedule(format!(
                        "constant schedule needs lr0 > 0 and decay >= 0, got {lr0}, {decay}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize, total_epochs: usize) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            total: total_epochs,
        });
    }
    schedule.validate()?;
    Ok(match *schedule {
        LrSchedule::LogDecay { start, end } => {
            if total_epochs == 1 {
                return Ok(start);
            }
            let frac = epoch as f64 / (total_epochs - 1) as f64;
            let (ls, le) = (start.log10(), end.log10());
            10f64.powf(ls + frac * (le - ls))
        }
        LrSchedule::ConstantWithDecay { lr0, decay } => lr0 / (1.0 + decay * epoch as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FaceVector {
        FaceVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_autoencoder(&[4, 2, 4], 7).unwrap();
        let b = init_autoencoder(&[4, 2, 4], 7).unwrap();
        assert_eq!(a, b);
        let c = init_autoencoder(&[4, 2, 4], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_shapes_and_bounds() {
        let p = init_autoencoder(&[4, 3, 2, 3, 4], 1).unwrap();
        let shapes: Vec<(usize, usize)> = p.layers().iter().map(|l| (l.fan_out, l.fan_in)).collect();
        assert_eq!(shapes, vec![(3, 4), (2, 3), (3, 2), (4, 3)]);
        for l in p.layers() {
            let s = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= s));
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
        assert_eq!(p.bottleneck_index(), 2);
        assert_eq!(p.bottleneck_dim(), 2);
        assert_eq!(
            p.activations(),
            vec![Activation::Relu, Activation::Relu, Activation::Relu, Activation::Linear]
        );
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(matches!(
            init_autoencoder(&[4, 2, 5], 0),
            Err(Error::AsymmetricArchitecture(_))
        ));
        assert!(matches!(init_autoencoder(&[4, 0, 4], 0), Err(Error::BadLayerSize(_))));
        assert!(matches!(init_autoencoder(&[4, 4], 0), Err(Error::BadLayerSize(_))));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let sizes = vec![3, 2, 3];
        let p = AutoencoderParams::from_parts(
            sizes,
            vec![vec![0.0; 6], vec![0.0; 6]],
            vec![vec![0.0; 2], vec![0.0; 3]],
            default_activations(2),
        )
        .unwrap();
        let (b, r) = forward(&p, &fv(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(b.as_slice(), &[0.0, 0.0]);
        assert_eq!(r.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_linear_network() {
        let eye = |n: usize| -> Vec<f64> {
            (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
        };
        let p = AutoencoderParams::from_parts(
            vec![3, 3, 3],
            vec![eye(3), eye(3)],
            vec![vec![0.0; 3], vec![0.0; 3]],
            vec![Activation::Linear, Activation::Linear],
        )
        .unwrap();
        let x = fv(&[0.5, -1.5, 2.0]);
        let (_, r) = forward(&p, &x).unwrap();
        for (a, b) in r.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_checks_dim() {
        let p = init_autoencoder(&[4, 2, 4], 0).unwrap();
        assert!(matches!(
            forward(&p, &fv(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn mse_examples() {
        let v = fv(&[1.0, 2.0]);
        assert_eq!(mse_loss(&v, &v).unwrap(), 0.0);
        assert_eq!(mse_loss(&fv(&[1.0, 1.0]), &fv(&[0.0, 0.0])).unwrap(), 1.0);
        let got = mse_loss(&fv(&[2.0, 0.0, 1.0]), &fv(&[0.0, 1.0, 1.0])).unwrap();
        assert!((got - 5.0 / 3.0).abs() < 1e-15);
        assert!(mse_loss(&fv(&[1.0]), &v).is_err());
    }

    #[test]
    fn zero_gradient_at_exact_target() {
        let p = init_autoencoder(&[4, 2, 4], 3).unwrap();
        let x = fv(&[0.1, 0.2, -0.3, 0.4]);
        let (_, recon) = forward(&p, &x).unwrap();
        let (loss, g) = backward(&p, &x, &recon).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn final_bias_gradient_closed_form() {
        let p = init_autoencoder(&[6, 4, 2, 4, 6], 11).unwrap();
        let x = fv(&[0.3, -0.1, 0.7, 0.2, -0.5, 0.9]);
        let t = fv(&[0.0, 0.4, -0.2, 0.1, 0.3, -0.6]);
        let (_, recon) = forward(&p, &x).unwrap();
        let (_, g) = backward(&p, &x, &t).unwrap();
        let last = g.biases.last().unwrap();
        for ((gb, r), tt) in last.iter().zip(recon.as_slice()).zip(t.as_slice()) {
            assert!((gb - 2.0 / 6.0 * (r - tt)).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let p = AutoencoderParams::from_parts(
            vec![1, 1, 1],
            vec![vec![1.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
            default_activations(2),
        )
        .unwrap();
        let mut g = Gradients::zeros_like(&p);
        assert_eq!(sgd_step(&p, &g, 0.1).unwrap(), p);
        g.weights[0][0] = 0.5;
        let q = sgd_step(&p, &g, 0.1).unwrap();
        assert!((q.layers()[0].weights[0] - 0.95).abs() < 1e-15);
        assert!(matches!(sgd_step(&p, &g, 0.0), Err(Error::InvalidLearningRate(_))));
        let other = init_autoencoder(&[2, 1, 2], 0).unwrap();
        assert!(matches!(
            sgd_step(&p, &Gradients::zeros_like(&other), 0.1),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn log_decay_endpoints() {
        let s = LrSchedule::LogDecay {
            start: 1e-2,
            end: 1e-8,
        };
        let first = lr_at(&s, 0, 400).unwrap();
        let last = lr_at(&s, 399, 400).unwrap();
        assert!((first - 1e-2).abs() / 1e-2 < 1e-12);
        assert!((last - 1e-8).abs() / 1e-8 < 1e-12);
        let mid = lr_at(&s, 1, 3).unwrap();
        assert!((mid - 1e-5).abs() / 1e-5 < 1e-12);
        assert!(matches!(lr_at(&s, 400, 400), Err(Error::EpochOutOfRange { .. })));
    }

    #[test]
    fn constant_with_decay() {
        let s = LrSchedule::ConstantWithDecay {
            lr0: 0.03,
            decay: 0.0002,
        };
        assert_eq!(lr_at(&s, 0, 10).unwrap(), 0.03);
        assert!((lr_at(&s, 5, 10).unwrap() - 0.03 / 1.001).abs() < 1e-15);
        let bad = LrSchedule::LogDecay {
            start: 1e-8,
            end: 1e-2,
        };
        assert!(lr_at(&bad, 0, 10).is_err());
    }
}
