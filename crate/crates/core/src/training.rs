//! Saddle-point training for ARAE and its variants, plus the DAE and
//! plain autoencoder baselines.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{craft_epoch_set, craft_rows, AttackError, Objective, PerturbationSpec};
use crate::metrics::{roc_auc, MetricsError, PositiveClass, ScoredSet};
use crate::model::{
    corrupt_pixels, stack_pixels, Autoencoder, ModelError, Sample, DAE_NOISE, DEFAULT_HIDDEN,
};
use crate::nn::{row_sq_norms, NnError, OptimizerState, UpdateRule};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Usage(String),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Latent ℓ∞ attack.
    Arae,
    /// Union of ℓ∞, ℓ2 and rotation/translation attacks.
    AraeA,
    /// Reconstruction-loss attack.
    AraeR,
    Dae,
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Arae,
        Variant::AraeA,
        Variant::AraeR,
        Variant::Dae,
        Variant::Plain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Arae => "arae",
            Variant::AraeA => "arae_a",
            Variant::AraeR => "arae_r",
            Variant::Dae => "dae",
            Variant::Plain => "plain",
        }
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, Variant::Arae | Variant::AraeA | Variant::AraeR)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown variant {s:?} (expected arae, arae_a, arae_r, dae or plain)"))
    }
}

/// ℓ2 radius used by the default ARAE-A union, as a multiple of the ℓ∞ budget.
pub const UNION_L2_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the attack derived from `variant` and `epsilon`.
    #[serde(default)]
    pub attack: Option<PerturbationSpec>,
    #[serde(default = "default_dae_noise")]
    pub dae_noise: f64,
    #[serde(default)]
    pub update_rule: UpdateRule,
    /// Re-craft adversarials for every minibatch instead of once per epoch.
    #[serde(default)]
    pub craft_per_batch: bool,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_gamma() -> f64 {
    0.1
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    128
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_dae_noise() -> f64 {
    DAE_NOISE
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        TrainConfig {
            variant,
            gamma: default_gamma(),
            epsilon: default_epsilon(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            seed: 0,
            attack: None,
            dae_noise: default_dae_noise(),
            update_rule: UpdateRule::default(),
            craft_per_batch: false,
            hidden: default_hidden(),
        }
    }

    /// The perturbation set the inner maximization searches.
    pub fn resolved_attack(&self) -> Option<PerturbationSpec> {
        if !self.variant.is_adversarial() {
            return None;
        }
        Some(self.attack.clone().unwrap_or_else(|| match self.variant {
            Variant::AraeA => {
                PerturbationSpec::union_default(self.epsilon, UNION_L2_FACTOR * self.epsilon)
            }
            Variant::AraeR => PerturbationSpec::recon_linf(self.epsilon),
            _ => PerturbationSpec::linf(self.epsilon),
        }))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Usage(msg));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be a finite non-negative number, got {}", self.gamma));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be a finite non-negative number, got {}", self.epsilon));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.dae_noise) {
            return bad(format!("dae_noise must lie in [0, 1], got {}", self.dae_noise));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be non-empty and positive".into());
        }
        if let Some(spec) = self.resolved_attack() {
            spec.validate()?;
            let want = if self.variant == Variant::AraeR {
                Objective::Reconstruction
            } else {
                Objective::Latent
            };
            if spec.objective() != want {
                return bad(format!(
                    "variant {} needs a {want:?}-objective attack, got {:?}",
                    self.variant, spec.kind
                ));
            }
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_latent: f64,
    pub l_ae: f64,
    pub val_auc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub crafting_calls: usize,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,l_rec,l_latent,l_ae,val_auc,seconds";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let auc = r.val_auc.map(|a| format!("{a:?}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{},{:.6}",
                r.epoch, r.l_rec, r.l_latent, r.l_ae, auc, r.seconds
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(TRAIN_LOG_HEADER) {
            return Err("missing training-log header".into());
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let err = |what: &str| format!("line {}: bad {what}", i + 2);
            if f.len() != 6 {
                return Err(err("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(what));
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| err("epoch"))?,
                l_rec: num(f[1], "l_rec")?,
                l_latent: num(f[2], "l_latent")?,
                l_ae: num(f[3], "l_ae")?,
                val_auc: if f[4].is_empty() { None } else { Some(num(f[4], "val_auc")?) },
                seconds: num(f[5], "seconds")?,
            });
        }
        Ok(TrainLog {
            records,
            crafting_calls: 0,
        })
    }

    pub fn val_aucs(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.val_auc).collect()
    }

    /// Population standard deviation of the last `k` validation AUCs.
    pub fn val_auc_std_last(&self, k: usize) -> Option<f64> {
        let aucs = self.val_aucs();
        if aucs.is_empty() {
            return None;
        }
        Some(crate::metrics::std_dev(&aucs[aucs.len().saturating_sub(k)..]))
    }
}

/// Held-out data scored after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct ValidationSet<'a> {
    pub normals: &'a [Sample],
    pub anomalies: &'a [Sample],
}

/// AUC with anomalies as the positive class.
pub fn validation_auc_hook(
    ae: &Autoencoder,
    normals: &[Sample],
    anomalies: &[Sample],
) -> Result<f64, TrainError> {
    let mut scores = ae.score_samples(normals)?;
    scores.extend(ae.score_samples(anomalies)?);
    let flags: Vec<bool> = (0..scores.len()).map(|i| i >= normals.len()).collect();
    let set = ScoredSet::from_anomaly_flags(scores, &flags, PositiveClass::Anomalous)?;
    Ok(roc_auc(&set))
}

/// Independent RNG streams derived from the run seed.
struct Streams {
    init: ChaCha8Rng,
    shuffle: ChaCha8Rng,
    attack: ChaCha8Rng,
    noise: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Streams {
            init: stream(1),
            shuffle: stream(2),
            attack: stream(3),
            noise: stream(4),
        }
    }
}

struct BatchLoss {
    rec: Array1<f64>,
    latent: Array1<f64>,
}

/// One optimizer step on `mean_i ‖x_i − Dec(Enc(x̃_i))‖² + γ ‖Enc(x̃_i) − Enc(x_i)‖²`.
/// When `x_in` equals `x` bit for bit the latent term is identically zero and
/// its pass is skipped.
fn batch_step(
    ae: &mut Autoencoder,
    opt: &mut OptimizerState,
    x: ArrayView2<'_, f64>,
    x_in: Array2<f64>,
    gamma: Option<f64>,
    position: (usize, usize),
) -> Result<BatchLoss, TrainError> {
    let b = x.nrows() as f64;
    let latent_needed = gamma.is_some() && x_in != x;
    let enc_tape = ae.encoder().forward_tape(x_in)?;
    let z_adv = enc_tape.output().ok_or(NnError::EmptyTape)?.clone();
    let dec_tape = ae.decoder().forward_tape(z_adv.clone())?;
    let diff = dec_tape.output().ok_or(NnError::EmptyTape)? - &x;
    let rec = row_sq_norms(diff.view());
    let (dec_grads, mut dz) = ae.decoder().backward(&dec_tape, (&diff * (2.0 / b)).view())?;

    let mut latent = Array1::zeros(x.nrows());
    let mut clean_grads = None;
    if latent_needed {
        let gamma = gamma.unwrap_or_default();
        let clean_tape = ae.encoder().forward_tape(x.to_owned())?;
        let gap = &z_adv - clean_tape.output().ok_or(NnError::EmptyTape)?;
        latent = row_sq_norms(gap.view());
        let g = gap * (2.0 * gamma / b);
        dz += &g;
        clean_grads = Some(ae.encoder().backward(&clean_tape, (-g).view())?.0);
    }
    let (epoch, batch) = position;
    if !rec.iter().all(|v| v.is_finite()) {
        return Err(TrainError::NonFinite { what: "reconstruction loss", epoch, batch });
    }
    if !latent.iter().all(|v| v.is_finite()) {
        return Err(TrainError::NonFinite { what: "latent loss", epoch, batch });
    }

    let (mut enc_grads, _) = ae.encoder().backward(&enc_tape, dz.view())?;
    if let Some(g) = clean_grads {
        enc_grads.add_assign(&g)?;
    }
    if !enc_grads.is_finite() || !dec_grads.is_finite() {
        return Err(TrainError::NonFinite { what: "gradient", epoch, batch });
    }
    let mut all = enc_grads.layers;
    all.extend(dec_grads.layers);
    opt.step(ae.layers_mut(), &all)?;
    Ok(BatchLoss { rec, latent })
}

fn check_dataset(dataset: &[Sample]) -> Result<usize, TrainError> {
    let first = dataset
        .first()
        .ok_or_else(|| TrainError::Usage("training set is empty".into()))?;
    let d = first.dim();
    if let Some(i) = dataset.iter().position(|s| s.dim() != d) {
        return Err(TrainError::Usage(format!(
            "sample {i} has {} pixels, expected {d}",
            dataset[i].dim()
        )));
    }
    Ok(d)
}

/// Runs any variant. All randomness is drawn from `cfg.seed`.
pub fn train(
    dataset: &[Sample],
    cfg: &TrainConfig,
    validation: Option<ValidationSet<'_>>,
) -> Result<(Autoencoder, TrainLog), TrainError> {
    cfg.validate()?;
    let d = check_dataset(dataset)?;
    if let Some(v) = validation {
        if v.normals.is_empty() || v.anomalies.is_empty() {
            return Err(TrainError::Usage("validation needs both normals and anomalies".into()));
        }
    }
    let mut streams = Streams::new(cfg.seed);
    let mut ae = Autoencoder::new(d, &cfg.hidden, &mut streams.init)?;
    let mut opt = OptimizerState::new(cfg.update_rule, cfg.learning_rate, ae.layers());
    let attack = cfg.resolved_attack();
    let gamma = match cfg.variant {
        Variant::Arae | Variant::AraeA | Variant::AraeR => Some(cfg.gamma),
        Variant::Dae | Variant::Plain => None,
    };
    let clean = stack_pixels(dataset);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let epoch_adv = match &attack {
            Some(spec) if !cfg.craft_per_batch => {
                log.crafting_calls += 1;
                Some(craft_epoch_set(&ae, dataset, spec, &mut streams.attack)?.perturbed)
            }
            _ => None,
        };
        order.shuffle(&mut streams.shuffle);
        let (mut sum_rec, mut sum_lat) = (0.0, 0.0);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = clean.select(Axis(0), idx);
            let x_in = match (&attack, &epoch_adv) {
                (_, Some(adv)) => adv.select(Axis(0), idx),
                (Some(spec), None) => {
                    log.crafting_calls += 1;
                    let rows: Vec<Sample> = idx.iter().map(|&i| dataset[i].clone()).collect();
                    craft_rows(&ae, &rows, spec, &mut streams.attack)?.0
                }
                (None, None) if cfg.variant == Variant::Dae => {
                    let mut noisy = x.clone();
                    for mut row in noisy.rows_mut() {
                        let px = corrupt_pixels(&row.to_vec(), cfg.dae_noise, &mut streams.noise);
                        row.assign(&Array1::from(px));
                    }
                    noisy
                }
                (None, None) => x.clone(),
            };
            let loss = batch_step(&mut ae, &mut opt, x.view(), x_in, gamma, (epoch, batch))?;
            sum_rec += loss.rec.sum();
            sum_lat += loss.latent.sum();
        }
        let n = dataset.len() as f64;
        let (l_rec, l_latent) = (sum_rec / n, sum_lat / n);
        let val_auc = validation
            .map(|v| validation_auc_hook(&ae, v.normals, v.anomalies))
            .transpose()?;
        log.records.push(EpochRecord {
            epoch,
            l_rec,
            l_latent,
            l_ae: l_rec + gamma.unwrap_or(0.0) * l_latent,
            val_auc,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((ae, log))
}

fn require(cfg: &TrainConfig, allowed: &[Variant]) -> Result<(), TrainError> {
    if allowed.contains(&cfg.variant) {
        Ok(())
    } else {
        Err(TrainError::Usage(format!(
            "variant {} is not accepted here (expected one of {allowed:?})",
            cfg.variant
        )))
    }
}

pub fn train_arae(
    dataset: &[Sample],
    cfg: &TrainConfig,
    validation: Option<ValidationSet<'_>>,
) -> Result<(Autoencoder, TrainLog), TrainError> {
    require(cfg, &[Variant::Arae, Variant::AraeA, Variant::AraeR])?;
    train(dataset, cfg, validation)
}

pub fn train_dae(
    dataset: &[Sample],
    cfg: &TrainConfig,
    validation: Option<ValidationSet<'_>>,
) -> Result<(Autoencoder, TrainLog), TrainError> {
    require(cfg, &[Variant::Dae])?;
    train(dataset, cfg, validation)
}

pub fn train_plain(
    dataset: &[Sample],
    cfg: &TrainConfig,
    validation: Option<ValidationSet<'_>>,
) -> Result<(Autoencoder, TrainLog), TrainError> {
    require(cfg, &[Variant::Plain])?;
    train(dataset, cfg, validation)
}
