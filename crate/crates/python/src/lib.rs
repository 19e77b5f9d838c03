//! Python bindings: the autoencoder, training, attacks, metrics and the
//! interpretability tools, with images passed as flat lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use arae_core::attacks::{attack as run_attack, AttackError, PerturbationSpec};
use arae_core::data::make_synthetic_bars;
use arae_core::interpret::{local_minimum as run_minimum, occlusion1 as run_occlusion, MinimaConfig};
use arae_core::metrics::{self, PositiveClass, ScoredSet};
use arae_core::model::{ModelError, Sample, Split};
use arae_core::persist::{decode_model, encode_model, load_model, save_model, PersistError};
use arae_core::training::{train as run_train, TrainConfig, TrainError, ValidationSet, Variant, UNION_L2_FACTOR};
use arae_core::AttackKind;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model_err(e: ModelError) -> PyErr {
    value_err(e)
}

fn persist_err(e: PersistError) -> PyErr {
    match e {
        PersistError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn train_err(e: TrainError) -> PyErr {
    match e {
        TrainError::NonFinite { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn attack_err(e: AttackError) -> PyErr {
    value_err(e)
}

fn sample(pixels: Vec<f64>, height: usize, width: usize, label: usize) -> PyResult<Sample> {
    Sample::new(pixels, height, width, label, Split::Train).map_err(model_err)
}

fn samples(images: Vec<Vec<f64>>, height: usize, width: usize) -> PyResult<Vec<Sample>> {
    images.into_iter().map(|p| sample(p, height, width, 0)).collect()
}

/// Fully connected autoencoder with sigmoid layers and a mirrored decoder.
#[pyclass(name = "Autoencoder", module = "arae")]
struct PyAutoencoder {
    inner: arae_core::Autoencoder,
}

#[pymethods]
impl PyAutoencoder {
    #[new]
    #[pyo3(signature = (input_dim, hidden=vec![512, 256, 128], seed=0))]
    fn new(input_dim: usize, hidden: Vec<usize>, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = arae_core::Autoencoder::new(input_dim, &hidden, &mut rng).map_err(model_err)?;
        Ok(PyAutoencoder { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyAutoencoder {
            inner: load_model(&path).map_err(persist_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, &path).map_err(persist_err)
    }

    #[staticmethod]
    fn from_bytes(data: Vec<u8>) -> PyResult<Self> {
        Ok(PyAutoencoder {
            inner: decode_model(&data).map_err(persist_err)?,
        })
    }

    fn to_bytes(&self) -> Vec<u8> {
        encode_model(&self.inner)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn encode(&self, pixels: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.encode_pixels(&pixels).map_err(model_err)?.to_vec())
    }

    fn reconstruct(&self, pixels: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.reconstruct_pixels(&pixels).map_err(model_err)?.to_vec())
    }

    /// Reconstruction error; larger means more anomalous.
    fn score(&self, pixels: Vec<f64>) -> PyResult<f64> {
        self.inner.score_pixels(&pixels).map_err(model_err)
    }

    fn scores(&self, images: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        images.iter().map(|p| self.inner.score_pixels(p).map_err(model_err)).collect()
    }

    fn __eq__(&self, other: &Self) -> bool {
        encode_model(&self.inner) == encode_model(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Autoencoder(input_dim={}, latent_dim={}, params={})",
            self.inner.input_dim(),
            self.inner.latent_dim(),
            self.inner.param_count()
        )
    }
}

/// Trains a model on normal images. Returns the model and one dict per epoch.
#[pyfunction]
#[pyo3(signature = (
    images, height, width, variant="arae", epsilon=0.2, gamma=0.1, epochs=100,
    batch_size=128, learning_rate=1e-3, seed=0, hidden=vec![512, 256, 128],
    val_normals=None, val_anomalies=None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    images: Vec<Vec<f64>>,
    height: usize,
    width: usize,
    variant: &str,
    epsilon: f64,
    gamma: f64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    hidden: Vec<usize>,
    val_normals: Option<Vec<Vec<f64>>>,
    val_anomalies: Option<Vec<Vec<f64>>>,
) -> PyResult<(PyAutoencoder, Vec<Py<PyAny>>)> {
    let variant: Variant = variant.parse().map_err(PyValueError::new_err)?;
    let cfg = TrainConfig {
        epsilon,
        gamma,
        epochs,
        batch_size,
        learning_rate,
        seed,
        hidden,
        ..TrainConfig::new(variant)
    };
    let data = samples(images, height, width)?;
    let normals = val_normals.map(|v| samples(v, height, width)).transpose()?;
    let anomalies = val_anomalies.map(|v| samples(v, height, width)).transpose()?;
    let validation = match (&normals, &anomalies) {
        (Some(n), Some(a)) => Some(ValidationSet { normals: n, anomalies: a }),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("pass both val_normals and val_anomalies or neither")),
    };
    let (ae, log) = run_train(&data, &cfg, validation).map_err(train_err)?;
    let records = log
        .records
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("l_rec", r.l_rec)?;
            d.set_item("l_latent", r.l_latent)?;
            d.set_item("l_ae", r.l_ae)?;
            d.set_item("val_auc", r.val_auc)?;
            d.set_item("seconds", r.seconds)?;
            Ok(d.into_any().unbind())
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyAutoencoder { inner: ae }, records))
}

fn spec_for(kind: &str, epsilon: f64, steps: usize) -> PyResult<PerturbationSpec> {
    let spec = match kind {
        "linf" => PerturbationSpec::linf(epsilon),
        "l2" => PerturbationSpec::l2(epsilon),
        "recon_linf" => PerturbationSpec::recon_linf(epsilon),
        "score_linf" => PerturbationSpec::score_linf(epsilon),
        "rot_trans" => PerturbationSpec::rot_trans_default(),
        "union" => PerturbationSpec::union_default(epsilon, UNION_L2_FACTOR * epsilon),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown attack {other:?} (linf, l2, recon_linf, score_linf, rot_trans, union)"
            )))
        }
    };
    Ok(match spec.kind {
        AttackKind::RotTrans | AttackKind::Union => spec,
        _ => spec.with_steps(steps),
    })
}

/// Crafts one adversarial example. Returns `(perturbed_pixels, achieved_loss)`.
#[pyfunction]
#[pyo3(signature = (model, pixels, height, width, kind="linf", epsilon=0.2, steps=10, seed=0))]
#[allow(clippy::too_many_arguments)]
fn attack(
    model: &PyAutoencoder,
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    kind: &str,
    epsilon: f64,
    steps: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, f64)> {
    let spec = spec_for(kind, epsilon, steps)?;
    let x = sample(pixels, height, width, 0)?;
    run_attack(&model.inner, &x, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(attack_err)
}

fn scored(scores: Vec<f64>, positive: Vec<bool>, normal_positive: bool) -> PyResult<ScoredSet> {
    let meaning = if normal_positive {
        PositiveClass::Normal
    } else {
        PositiveClass::Anomalous
    };
    ScoredSet::new(scores, positive, meaning).map_err(value_err)
}

/// Probability that a random positive outscores a random negative (ties count ½).
#[pyfunction]
fn roc_auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<f64> {
    Ok(metrics::roc_auc(&scored(scores, positive, false)?))
}

/// Best F1 over all thresholds. Returns `(f1, threshold)`.
#[pyfunction]
#[pyo3(signature = (scores, positive, normal_positive=false))]
fn best_f1(scores: Vec<f64>, positive: Vec<bool>, normal_positive: bool) -> PyResult<(f64, f64)> {
    Ok(metrics::best_f1(&scored(scores, positive, normal_positive)?))
}

#[pyfunction]
#[pyo3(signature = (scores, positive, tpr=0.995))]
fn fpr_at_tpr(scores: Vec<f64>, positive: Vec<bool>, tpr: f64) -> PyResult<f64> {
    metrics::fpr_at_tpr(&scored(scores, positive, false)?, tpr).map_err(value_err)
}

/// Synthetic bars: returns `(train_images, train_labels, test_images, test_labels)`.
#[pyfunction]
#[pyo3(signature = (count_per_class=100, side=8, seed=0))]
#[allow(clippy::type_complexity)]
fn synthetic_bars(
    count_per_class: usize,
    side: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>)> {
    let ds = make_synthetic_bars(count_per_class, side, &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(value_err)?;
    let split = |s: Vec<Sample>| -> (Vec<Vec<f64>>, Vec<usize>) {
        s.into_iter().map(|s| (s.pixels, s.label)).unzip()
    };
    let (a, b) = split(ds.train);
    let (c, d) = split(ds.test);
    Ok((a, b, c, d))
}

/// Change in reconstruction error when each pixel is set to 0.
#[pyfunction]
fn occlusion1(model: &PyAutoencoder, pixels: Vec<f64>, height: usize, width: usize) -> PyResult<Vec<f64>> {
    let x = sample(pixels, height, width, 0)?;
    Ok(run_occlusion(&model.inner, &x).map_err(model_err)?.deltas)
}

/// Gradient descent on the reconstruction error from uniform noise.
/// Returns `(x_min, losses)`.
#[pyfunction]
#[pyo3(signature = (model, seed=0, lr=0.1, max_iters=2000, tol=1e-8))]
fn local_minimum(
    model: &PyAutoencoder,
    seed: u64,
    lr: f64,
    max_iters: usize,
    tol: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if !(lr > 0.0) || max_iters == 0 {
        return Err(PyValueError::new_err("lr must be positive and max_iters at least 1"));
    }
    let cfg = MinimaConfig {
        learning_rate: lr,
        max_iters,
        tol,
    };
    run_minimum(&model.inner, &mut ChaCha8Rng::seed_from_u64(seed), cfg).map_err(model_err)
}

#[pymodule]
fn arae(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAutoencoder>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(best_f1, m)?)?;
    m.add_function(wrap_pyfunction!(fpr_at_tpr, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_bars, m)?)?;
    m.add_function(wrap_pyfunction!(occlusion1, m)?)?;
    m.add_function(wrap_pyfunction!(local_minimum, m)?)?;
    Ok(())
}
