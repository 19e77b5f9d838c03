//! The autoencoder, its two losses, and the reconstruction anomaly score.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Activation, DenseLayer, LayerGrad, Network, NnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("decoder widths {decoder:?} do not mirror encoder widths {encoder:?}")]
    NotMirrored {
        encoder: Vec<usize>,
        decoder: Vec<usize>,
    },
    #[error("expected input of width {expected}, got {found}")]
    InputWidth { expected: usize, found: usize },
    #[error("expected latent code of width {expected}, got {found}")]
    LatentWidth { expected: usize, found: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One grayscale image flattened row-major, with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pixels: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub label: usize,
    pub split: Split,
}

impl Sample {
    pub fn new(
        pixels: Vec<f64>,
        height: usize,
        width: usize,
        label: usize,
        split: Split,
    ) -> Result<Self, ModelError> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(ModelError::InvalidSample(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ModelError::InvalidSample(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Sample {
            pixels,
            height,
            width,
            label,
            split,
        })
    }

    pub fn dim(&self) -> usize {
        self.pixels.len()
    }
}

/// Stacks samples into an `n × d` matrix.
pub fn stack_pixels<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Array2<f64> {
    let rows: Vec<&Sample> = samples.into_iter().collect();
    let d = rows.first().map_or(0, |s| s.dim());
    let mut out = Array2::zeros((rows.len(), d));
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(rows) {
        row.assign(&ArrayView1::from(&s.pixels[..]));
    }
    out
}

/// Encoder and mirrored decoder, every layer sigmoid-activated by default.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: Network,
    decoder: Network,
}

/// Hidden sizes used for 28×28 inputs; the last entry is the bottleneck.
pub const DEFAULT_HIDDEN: [usize; 3] = [512, 256, 128];

impl Autoencoder {
    /// `input → hidden[0] → … → hidden[k-1]` and the exact mirror back.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        let encoder = Network::glorot(&dims, Activation::Sigmoid, rng)?;
        dims.reverse();
        let decoder = Network::glorot(&dims, Activation::Sigmoid, rng)?;
        Autoencoder::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: Network, decoder: Network) -> Result<Self, ModelError> {
        let enc = encoder.dims();
        let mut dec = decoder.dims();
        dec.reverse();
        if enc != dec {
            dec.reverse();
            return Err(ModelError::NotMirrored {
                encoder: enc,
                decoder: dec,
            });
        }
        Ok(Autoencoder { encoder, decoder })
    }

    /// Splits a flat layer list in half: encoder first, decoder second.
    pub fn from_layers(mut layers: Vec<DenseLayer>) -> Result<Self, ModelError> {
        if layers.len() < 2 || layers.len() % 2 != 0 {
            return Err(ModelError::NotMirrored {
                encoder: vec![],
                decoder: vec![],
            });
        }
        let decoder = layers.split_off(layers.len() / 2);
        Autoencoder::from_parts(Network::new(layers)?, Network::new(decoder)?)
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.layers().iter().chain(self.decoder.layers())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder
            .layers_mut()
            .iter_mut()
            .chain(self.decoder.layers_mut().iter_mut())
    }

    pub fn layer_count(&self) -> usize {
        self.encoder.layers().len() + self.decoder.layers().len()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(DenseLayer::param_count).sum()
    }

    /// Zero-filled gradients matching [`Autoencoder::layers`] order.
    pub fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers().map(LayerGrad::zeros_like).collect()
    }

    fn check_input(&self, found: usize) -> Result<(), ModelError> {
        if found != self.input_dim() {
            return Err(ModelError::InputWidth {
                expected: self.input_dim(),
                found,
            });
        }
        Ok(())
    }

    pub fn encode(&self, x: &Sample) -> Result<Array1<f64>, ModelError> {
        self.encode_pixels(&x.pixels)
    }

    pub fn encode_pixels(&self, x: &[f64]) -> Result<Array1<f64>, ModelError> {
        self.check_input(x.len())?;
        Ok(Array1::from(self.encoder.forward(x)?))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Array1<f64>, ModelError> {
        if z.len() != self.latent_dim() {
            return Err(ModelError::LatentWidth {
                expected: self.latent_dim(),
                found: z.len(),
            });
        }
        Ok(Array1::from(self.decoder.forward(z)?))
    }

    pub fn reconstruct_pixels(&self, x: &[f64]) -> Result<Array1<f64>, ModelError> {
        let z = self.encode_pixels(x)?;
        self.decode(z.as_slice().expect("contiguous"))
    }

    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input(x.ncols())?;
        Ok(self.encoder.forward_batch(x)?)
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ModelError> {
        let z = self.encode_batch(x)?;
        Ok(self.decoder.forward_batch(z.view())?)
    }

    /// `‖Enc(x_adv) − Enc(x)‖²`
    pub fn latent_loss(&self, x: &Sample, x_adv: &[f64]) -> Result<f64, ModelError> {
        let z = self.encode(x)?;
        let z_adv = self.encode_pixels(x_adv)?;
        Ok(crate::nn::sq_distance(z.view(), z_adv.view()))
    }

    /// `‖x − Dec(Enc(x_adv))‖²`; the target is the clean sample.
    pub fn rec_loss(&self, x: &Sample, x_adv: &[f64]) -> Result<f64, ModelError> {
        self.check_input(x.dim())?;
        let y = self.reconstruct_pixels(x_adv)?;
        Ok(crate::nn::sq_distance(ArrayView1::from(&x.pixels[..]), y.view()))
    }

    /// Reconstruction error `‖x − Dec(Enc(x))‖²`; larger is more anomalous.
    pub fn anomaly_score(&self, x: &Sample) -> Result<f64, ModelError> {
        self.score_pixels(&x.pixels)
    }

    pub fn score_pixels(&self, x: &[f64]) -> Result<f64, ModelError> {
        let y = self.reconstruct_pixels(x)?;
        Ok(crate::nn::sq_distance(ArrayView1::from(x), y.view()))
    }

    /// Scores every row of `x`.
    pub fn score_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ModelError> {
        let y = self.reconstruct_batch(x)?;
        Ok(crate::nn::row_sq_norms((&y - &x).view()))
    }

    /// Scores samples in fixed-size chunks, preserving input order.
    pub fn score_samples(&self, samples: &[Sample]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(SCORE_CHUNK) {
            let x = stack_pixels(chunk);
            out.extend(self.score_batch(x.view())?);
        }
        Ok(out)
    }
}

const SCORE_CHUNK: usize = 512;

/// Adds `Uniform[0, amplitude]` noise per pixel and clamps to `[0, 1]`.
pub fn dae_corrupt<R: Rng + ?Sized>(x: &Sample, amplitude: f64, rng: &mut R) -> Vec<f64> {
    corrupt_pixels(&x.pixels, amplitude, rng)
}

pub fn corrupt_pixels<R: Rng + ?Sized>(pixels: &[f64], amplitude: f64, rng: &mut R) -> Vec<f64> {
    pixels
        .iter()
        .map(|&p| (p + amplitude * rng.random::<f64>()).clamp(0.0, 1.0))
        .collect()
}

/// Default corruption amplitude of the denoising baseline.
pub const DAE_NOISE: f64 = 0.1;
