//! Experiment configuration, named presets and the end-to-end runs behind
//! the command-line tool.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{craft_rows, AttackError, PerturbationSpec, DEFAULT_STEPS};
use crate::data::{
    make_protocol1, make_protocol2, make_synthetic_bars, DataError, LabeledDataset, Protocol,
    ProtocolSplit,
};
use crate::interpret::{local_minimum, occlusion1, to_pgm, MinimaConfig, SaliencyMap};
use crate::metrics::{best_f1, fpr_at_tpr, roc_auc, MetricsError, PositiveClass, ScoredSet};
use crate::model::{corrupt_pixels, Autoencoder, ModelError, Sample};
use crate::persist::{save_model, PersistError};
use crate::training::{train, TrainConfig, TrainError, TrainLog, ValidationSet, Variant};

/// Environment variable consulted for the MNIST directory when neither the
/// config nor the command line names one.
pub const MNIST_DIR_ENV: &str = "ARAE_MNIST_DIR";
pub const DEFAULT_MNIST_DIR: &str = "data/mnist";
pub const TPR_TARGET: f64 = 0.995;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ExperimentError {
    /// 1 usage/config, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Train(TrainError::Usage(_)) => 1,
            ExperimentError::Data(DataError::Usage(_)) => 1,
            ExperimentError::Attack(AttackError::Config(_)) => 1,
            ExperimentError::Train(TrainError::NonFinite { .. }) => 3,
            ExperimentError::Metrics(MetricsError::NonFinite(_)) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Directory holding the four MNIST-layout IDX files.
    Mnist {
        name: String,
        #[serde(default)]
        dir: Option<PathBuf>,
        /// Average-pooling factor; 1 keeps full resolution.
        #[serde(default = "one")]
        downscale: usize,
    },
    Bars { count_per_class: usize, side: usize },
}

fn one() -> usize {
    1
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::Mnist { name, .. } => name,
            DatasetSpec::Bars { .. } => "bars",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub protocol: Protocol,
    pub normal_classes: BTreeSet<usize>,
    #[serde(default)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackEvalSpec {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_eval_steps")]
    pub steps: usize,
}

fn default_eval_steps() -> usize {
    DEFAULT_STEPS
}

impl Default for AttackEvalSpec {
    fn default() -> Self {
        AttackEvalSpec {
            epsilons: vec![0.05, 0.1],
            steps: DEFAULT_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Every random stream of a run derives from this value.
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub protocol: ProtocolSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub attack_eval: AttackEvalSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

pub const PRESETS: [&str; 3] = ["bars", "mnist8-mini", "mnist8-full"];

/// Random-stream ids for everything outside the training loop.
pub mod stream {
    pub const DATASET: u64 = 10;
    pub const PROTOCOL: u64 = 11;
    pub const ATTACK_EVAL: u64 = 12;
    pub const INPUT_NOISE: u64 = 13;
    pub const MINIMA: u64 = 14;
}

pub fn seeded_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl ExperimentConfig {
    /// Named desk-scale configurations.
    pub fn preset(name: &str) -> Option<Self> {
        let mnist8 = |dataset: DatasetSpec, train: TrainConfig, name: &str| ExperimentConfig {
            name: name.into(),
            seed: 0,
            dataset,
            protocol: ProtocolSpec {
                protocol: Protocol::P2,
                normal_classes: BTreeSet::from([8]),
                tau: None,
            },
            train,
            attack_eval: AttackEvalSpec::default(),
            output_dir: PathBuf::from("runs").join(name),
        };
        match name {
            "bars" => Some(ExperimentConfig {
                name: "bars".into(),
                seed: 0,
                dataset: DatasetSpec::Bars {
                    count_per_class: 100,
                    side: 8,
                },
                protocol: ProtocolSpec {
                    protocol: Protocol::P2,
                    normal_classes: BTreeSet::from([0]),
                    tau: None,
                },
                train: TrainConfig {
                    epsilon: 0.1,
                    epochs: 30,
                    batch_size: 2,
                    learning_rate: 3e-3,
                    hidden: vec![128, 64, 32],
                    ..TrainConfig::new(Variant::Arae)
                },
                attack_eval: AttackEvalSpec {
                    epsilons: vec![0.05],
                    steps: DEFAULT_STEPS,
                },
                output_dir: PathBuf::from("runs/bars"),
            }),
            "mnist8-mini" => Some(mnist8(
                DatasetSpec::Mnist {
                    name: "mnist".into(),
                    dir: None,
                    downscale: 2,
                },
                TrainConfig {
                    epsilon: 0.2,
                    epochs: 20,
                    batch_size: 32,
                    learning_rate: 1e-3,
                    hidden: vec![256, 128, 64],
                    ..TrainConfig::new(Variant::Arae)
                },
                "mnist8-mini",
            )),
            "mnist8-full" => Some(mnist8(
                DatasetSpec::Mnist {
                    name: "mnist".into(),
                    dir: None,
                    downscale: 1,
                },
                TrainConfig {
                    epsilon: 0.2,
                    epochs: 100,
                    ..TrainConfig::new(Variant::Arae)
                },
                "mnist8-full",
            )),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    /// The snapshot written next to every run's outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Training config with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.train_config().validate()?;
        if self.protocol.normal_classes.is_empty() {
            return Err(ExperimentError::Config("normal_classes is empty".into()));
        }
        match (self.protocol.protocol, self.protocol.tau) {
            (Protocol::P1, None) => {
                return Err(ExperimentError::Config("protocol p1 needs tau".into()))
            }
            (Protocol::P2, Some(_)) => {
                return Err(ExperimentError::Config("tau only applies to protocol p1".into()))
            }
            _ => {}
        }
        if self.attack_eval.epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(ExperimentError::Config("attack_eval epsilons must be non-negative".into()));
        }
        Ok(())
    }

    pub fn normal_classes_label(&self) -> String {
        let parts: Vec<String> = self.protocol.normal_classes.iter().map(|c| c.to_string()).collect();
        parts.join("+")
    }
}

/// Resolves the MNIST directory: explicit override, then config, then the
/// environment, then `data/mnist` under the working directory.
pub fn mnist_dir(config_dir: Option<&Path>, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .or(config_dir)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_DIR))
}

pub fn load_dataset(
    cfg: &ExperimentConfig,
    data_dir: Option<&Path>,
) -> Result<LabeledDataset, ExperimentError> {
    match &cfg.dataset {
        DatasetSpec::Mnist { name, dir, downscale } => {
            let dir = mnist_dir(dir.as_deref(), data_dir);
            let ds = LabeledDataset::load_mnist_dir(&dir, name)?;
            Ok(if *downscale > 1 { ds.downscaled(*downscale)? } else { ds })
        }
        DatasetSpec::Bars { count_per_class, side } => Ok(make_synthetic_bars(
            *count_per_class,
            *side,
            &mut seeded_stream(cfg.seed, stream::DATASET),
        )?),
    }
}

pub fn build_split(
    cfg: &ExperimentConfig,
    ds: &LabeledDataset,
) -> Result<ProtocolSplit, ExperimentError> {
    let p = &cfg.protocol;
    Ok(match p.protocol {
        Protocol::P2 => make_protocol2(ds, &p.normal_classes)?,
        Protocol::P1 => make_protocol1(
            ds,
            &p.normal_classes,
            p.tau.unwrap_or(1.0),
            &mut seeded_stream(cfg.seed, stream::PROTOCOL),
        )?,
    })
}

pub fn prepare(
    cfg: &ExperimentConfig,
    data_dir: Option<&Path>,
) -> Result<ProtocolSplit, ExperimentError> {
    cfg.validate()?;
    build_split(cfg, &load_dataset(cfg, data_dir)?)
}

fn test_partition(split: &ProtocolSplit) -> (Vec<Sample>, Vec<Sample>) {
    (
        split.test_normals().cloned().collect(),
        split.test_anomalies().cloned().collect(),
    )
}

/// Trains on the split's normals; the test partition is scored after every
/// epoch when it holds both classes.
pub fn train_on_split(
    cfg: &TrainConfig,
    split: &ProtocolSplit,
) -> Result<(Autoencoder, TrainLog), ExperimentError> {
    let (normals, anomalies) = test_partition(split);
    let validation = (!normals.is_empty() && !anomalies.is_empty()).then_some(ValidationSet {
        normals: &normals,
        anomalies: &anomalies,
    });
    Ok(train(&split.train_normals, cfg, validation)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub best_f1: f64,
    pub f1_threshold: f64,
    pub fpr_at_tpr: f64,
    pub scores: Vec<f64>,
    pub is_anomalous: Vec<bool>,
    pub labels: Vec<usize>,
    pub n_train: usize,
}

pub const EVAL_HEADER: &str = "dataset,normal_classes,protocol,variant,auc,best_f1,f1_threshold,fpr_at_99.5_tpr,n_train,n_test_normal,n_test_anomalous";
pub const SCORES_HEADER: &str = "index,label,is_anomalous,score";

impl EvalReport {
    pub fn from_scores(
        scores: Vec<f64>,
        is_anomalous: Vec<bool>,
        labels: Vec<usize>,
        n_train: usize,
    ) -> Result<Self, ExperimentError> {
        let set = ScoredSet::from_anomaly_flags(scores.clone(), &is_anomalous, PositiveClass::Anomalous)?;
        let (f1, thr) = best_f1(&set);
        Ok(EvalReport {
            auc: roc_auc(&set),
            best_f1: f1,
            f1_threshold: thr,
            fpr_at_tpr: fpr_at_tpr(&set, TPR_TARGET)?,
            scores,
            is_anomalous,
            labels,
            n_train,
        })
    }

    /// Parses a scores file written by [`EvalReport::scores_csv`] and
    /// recomputes every metric from it.
    pub fn from_scores_csv(text: &str, n_train: usize) -> Result<Self, ExperimentError> {
        let mut lines = text.lines();
        if lines.next() != Some(SCORES_HEADER) {
            return Err(ExperimentError::Config("missing scores header".into()));
        }
        let (mut scores, mut flags, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = || ExperimentError::Config(format!("scores line {}: malformed", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            labels.push(f[1].parse().map_err(|_| bad())?);
            flags.push(f[2] == "1");
            scores.push(f[3].parse().map_err(|_| bad())?);
        }
        Self::from_scores(scores, flags, labels, n_train)
    }

    pub fn csv_row(&self, cfg: &ExperimentConfig) -> String {
        let anomalous = self.is_anomalous.iter().filter(|a| **a).count();
        format!(
            "{},{},{},{},{:.4},{:.4},{:?},{:.4},{},{},{}",
            cfg.dataset.name(),
            cfg.normal_classes_label(),
            cfg.protocol.protocol,
            cfg.train.variant,
            self.auc,
            self.best_f1,
            self.f1_threshold,
            self.fpr_at_tpr,
            self.n_train,
            self.is_anomalous.len() - anomalous,
            anomalous
        )
    }

    pub fn scores_csv(&self) -> String {
        let mut out = format!("{SCORES_HEADER}\n");
        for (i, ((s, a), l)) in self.scores.iter().zip(&self.is_anomalous).zip(&self.labels).enumerate() {
            let _ = writeln!(out, "{i},{l},{},{s:?}", u8::from(*a));
        }
        out
    }
}

pub fn evaluate(ae: &Autoencoder, split: &ProtocolSplit) -> Result<EvalReport, ExperimentError> {
    check_dims(ae, split)?;
    EvalReport::from_scores(
        ae.score_samples(&split.test_samples)?,
        split.test_is_anomalous.clone(),
        split.test_samples.iter().map(|s| s.label).collect(),
        split.train_normals.len(),
    )
}

fn check_dims(ae: &Autoencoder, split: &ProtocolSplit) -> Result<(), ExperimentError> {
    match split.test_samples.first() {
        Some(s) if s.dim() != ae.input_dim() => Err(ModelError::InputWidth {
            expected: ae.input_dim(),
            found: s.dim(),
        }
        .into()),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackedAuc {
    pub epsilon: f64,
    pub auc: f64,
    pub clean_auc: f64,
}

pub const ATTACK_HEADER: &str = "dataset,normal_classes,variant,epsilon,attacked_auc,clean_auc";

/// Replaces every normal test sample with an ℓ∞ PGD adversarial that
/// maximizes its own reconstruction error, then rescores. Anomalies are
/// left untouched, so the AUC can only fall.
pub fn attack_eval(
    ae: &Autoencoder,
    split: &ProtocolSplit,
    spec: &AttackEvalSpec,
    seed: u64,
) -> Result<Vec<AttackedAuc>, ExperimentError> {
    check_dims(ae, split)?;
    let clean_scores = ae.score_samples(&split.test_samples)?;
    let flags = split.test_is_anomalous.clone();
    let set = ScoredSet::from_anomaly_flags(clean_scores.clone(), &flags, PositiveClass::Anomalous)?;
    let clean_auc = roc_auc(&set);
    let normal_idx: Vec<usize> = (0..flags.len()).filter(|&i| !flags[i]).collect();
    let normals: Vec<Sample> = normal_idx.iter().map(|&i| split.test_samples[i].clone()).collect();
    let mut rng = seeded_stream(seed, stream::ATTACK_EVAL);
    let mut out = Vec::with_capacity(spec.epsilons.len());
    for &epsilon in &spec.epsilons {
        let attack = PerturbationSpec::score_linf(epsilon).with_steps(spec.steps);
        let mut scores = clean_scores.clone();
        for (chunk_idx, chunk) in normals.chunks(256).enumerate() {
            let (x_adv, _) = craft_rows(ae, chunk, &attack, &mut rng)?;
            let attacked = ae.score_batch(x_adv.view())?;
            for (k, s) in attacked.iter().enumerate() {
                scores[normal_idx[chunk_idx * 256 + k]] = *s;
            }
        }
        let set = ScoredSet::from_anomaly_flags(scores, &flags, PositiveClass::Anomalous)?;
        out.push(AttackedAuc {
            epsilon,
            auc: roc_auc(&set),
            clean_auc,
        });
    }
    Ok(out)
}

pub fn attack_csv(cfg: &ExperimentConfig, rows: &[AttackedAuc]) -> String {
    let mut out = format!("{ATTACK_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4}",
            cfg.dataset.name(),
            cfg.normal_classes_label(),
            cfg.train.variant,
            r.epsilon,
            r.auc,
            r.clean_auc
        );
    }
    out
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub const MODEL_FILE: &str = "model.arae";
pub const LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Trains and writes the model, the training log and a config snapshot.
pub fn run_train(
    cfg: &ExperimentConfig,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<(Autoencoder, TrainLog), ExperimentError> {
    let split = prepare(cfg, data_dir)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    let (ae, log) = train_on_split(&cfg.train_config(), &split)?;
    save_model(&ae, &out.join(MODEL_FILE))?;
    write_file(&out.join(LOG_FILE), log.to_csv())?;
    Ok((ae, log))
}

pub fn run_eval(
    cfg: &ExperimentConfig,
    ae: &Autoencoder,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<EvalReport, ExperimentError> {
    let split = prepare(cfg, data_dir)?;
    let report = evaluate(ae, &split)?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    write_file(
        &out.join("eval.csv"),
        format!("{EVAL_HEADER}\n{}\n", report.csv_row(cfg)),
    )?;
    write_file(&out.join("scores.csv"), report.scores_csv())?;
    Ok(report)
}

pub fn run_attack_eval(
    cfg: &ExperimentConfig,
    ae: &Autoencoder,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<Vec<AttackedAuc>, ExperimentError> {
    let split = prepare(cfg, data_dir)?;
    let rows = attack_eval(ae, &split, &cfg.attack_eval, cfg.seed)?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml())?;
    write_file(&out.join("attack_eval.csv"), attack_csv(cfg, &rows))?;
    Ok(rows)
}

/// Where saliency inputs come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    /// The first `count` test samples of the split.
    TestSamples { count: usize },
    /// Indices into the split's test samples.
    TestIndices(Vec<usize>),
}

/// Writes, per image, the (optionally noised) input as PGM, its
/// reconstruction as PGM, the saliency map as PPM and the raw deltas as CSV.
pub fn run_saliency(
    cfg: &ExperimentConfig,
    ae: &Autoencoder,
    data_dir: Option<&Path>,
    source: &ImageSource,
    noise: f64,
    out: &Path,
) -> Result<Vec<SaliencyMap>, ExperimentError> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(ExperimentError::Config(format!("noise must lie in [0, 1], got {noise}")));
    }
    let split = prepare(cfg, data_dir)?;
    check_dims(ae, &split)?;
    let indices: Vec<usize> = match source {
        ImageSource::TestSamples { count } => (0..(*count).min(split.test_samples.len())).collect(),
        ImageSource::TestIndices(idx) => idx.clone(),
    };
    let mut rng = seeded_stream(cfg.seed, stream::INPUT_NOISE);
    let mut maps = Vec::with_capacity(indices.len());
    for &i in &indices {
        let s = split
            .test_samples
            .get(i)
            .ok_or_else(|| ExperimentError::Config(format!("test index {i} out of range")))?;
        let pixels = corrupt_pixels(&s.pixels, noise, &mut rng);
        let x = Sample { pixels, ..s.clone() };
        let map = occlusion1(ae, &x)?;
        let recon = ae.reconstruct_pixels(&x.pixels)?;
        let stem = format!("test{i:05}_label{}", s.label);
        write_file(&out.join(format!("{stem}_input.pgm")), to_pgm(&x.pixels, x.height, x.width))?;
        write_file(
            &out.join(format!("{stem}_recon.pgm")),
            to_pgm(recon.as_slice().expect("contiguous"), x.height, x.width),
        )?;
        write_file(&out.join(format!("{stem}_saliency.ppm")), map.to_ppm())?;
        write_file(&out.join(format!("{stem}_saliency.csv")), map.to_csv())?;
        maps.push(map);
    }
    Ok(maps)
}

/// Image side length for a square model input.
pub fn square_side(ae: &Autoencoder) -> Result<usize, ExperimentError> {
    let d = ae.input_dim();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(ExperimentError::Config(format!("model input width {d} is not a square image")));
    }
    Ok(side)
}

/// Local minima from `count` noise starts, written as PGM plus the loss
/// trajectories as CSV.
pub fn run_minima(
    ae: &Autoencoder,
    seed: u64,
    count: usize,
    cfg: MinimaConfig,
    out: &Path,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, ExperimentError> {
    let side = square_side(ae)?;
    let mut rng = seeded_stream(seed, stream::MINIMA);
    let mut results = Vec::with_capacity(count);
    let mut traj_csv = String::from("start,step,loss\n");
    for k in 0..count {
        let (x, traj) = local_minimum(ae, &mut rng, cfg)?;
        write_file(&out.join(format!("minimum{k:03}.pgm")), to_pgm(&x, side, side))?;
        for (step, loss) in traj.iter().enumerate() {
            let _ = writeln!(traj_csv, "{k},{step},{loss:?}");
        }
        results.push((x, traj));
    }
    write_file(&out.join("minima_trajectories.csv"), traj_csv)?;
    Ok(results)
}

/// Mean score of each partition of the test split.
pub fn mean_scores(report: &EvalReport) -> (f64, f64) {
    let mean = |want: bool| {
        let v: Vec<f64> = report
            .scores
            .iter()
            .zip(&report.is_anomalous)
            .filter(|(_, a)| **a == want)
            .map(|(s, _)| *s)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    (mean(false), mean(true))
}
