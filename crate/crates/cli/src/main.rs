use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use arae_core::experiment::{
    self, ExperimentConfig, ExperimentError, ImageSource, EVAL_HEADER, MODEL_FILE, PRESETS,
};
use arae_core::interpret::MinimaConfig;
use arae_core::persist::load_model;
use arae_core::training::Variant;
use arae_core::Autoencoder;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arae", version, about = "Adversarially robust autoencoders for novelty detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it with its log and config snapshot.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// One run per normal class (e.g. `0-9` or `1,4,8`); each also gets evaluated.
        #[arg(long)]
        classes: Option<String>,
        /// Parallel runs for a class sweep.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score the test split and report AUC, best F1 and FPR at 99.5% TPR.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// AUC after replacing normal test samples with adversarial ones.
    AttackEval {
        #[command(flatten)]
        model: ModelArgs,
        /// Attack budgets, comma separated (default from config).
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
    /// Occlusion saliency maps for test images.
    Saliency {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of leading test images.
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Explicit test indices, comma separated; overrides --count.
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<usize>>,
        /// Amplitude of uniform noise added to each input.
        #[arg(long, default_value_t = 0.4)]
        noise: f64,
    },
    /// Inputs that locally minimize the reconstruction error.
    Minima {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: bars, mnist8-mini or mnist8-full.
    #[arg(long)]
    preset: Option<String>,
    /// Directory with the MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory (default: the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// arae, arae_a, arae_r, dae or plain.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Without --config/--preset, the snapshot next to the model is used.
    #[command(flatten)]
    config: ConfigArgs,
}

impl ConfigArgs {
    fn resolve(&self, model: Option<&Path>) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match (&self.config, &self.preset, model) {
            (Some(path), _, _) => ExperimentConfig::load(path)?,
            (None, Some(name), _) => ExperimentConfig::preset(name).ok_or_else(|| {
                ExperimentError::Config(format!("unknown preset {name:?} (expected one of {PRESETS:?})"))
            })?,
            (None, None, Some(model)) => {
                let snapshot = model.with_file_name(experiment::CONFIG_FILE);
                if !snapshot.exists() {
                    return Err(ExperimentError::Config(format!(
                        "no --config or --preset given and {} does not exist",
                        snapshot.display()
                    )));
                }
                ExperimentConfig::load(&snapshot)?
            }
            (None, None, None) => {
                return Err(ExperimentError::Config("one of --config or --preset is required".into()))
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(eps) = self.epsilon {
            cfg.train.epsilon = eps;
            cfg.train.attack = None;
        }
        if let Some(gamma) = self.gamma {
            cfg.train.gamma = gamma;
        }
        if let Some(variant) = self.variant {
            cfg.train.variant = variant;
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_classes(spec: &str) -> Result<Vec<usize>, ExperimentError> {
    let bad = || ExperimentError::Config(format!("bad class list {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn load(model: &Path) -> Result<Autoencoder, ExperimentError> {
    Ok(load_model(model)?)
}

fn train_one(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> Result<(), ExperimentError> {
    let out = cfg.output_dir.clone();
    let (_, log) = experiment::run_train(cfg, data_dir, &out)?;
    if let Some(last) = log.records.last() {
        println!(
            "{}: {} epochs, final l_rec {:.4}, l_latent {:.4}{}",
            out.display(),
            log.records.len(),
            last.l_rec,
            last.l_latent,
            last.val_auc.map(|a| format!(", val auc {a:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

fn sweep(
    base: &ExperimentConfig,
    classes: &[usize],
    jobs: usize,
    data_dir: Option<&Path>,
) -> Result<(), ExperimentError> {
    let root = base.output_dir.clone();
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(vec![None; classes.len()]);
    let first_error = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, classes.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= classes.len() {
                    break;
                }
                let mut cfg = base.clone();
                cfg.protocol.normal_classes = [classes[k]].into();
                cfg.output_dir = root.join(format!("class{}", classes[k]));
                let result = train_one(&cfg, data_dir).and_then(|()| {
                    let ae = load(&cfg.output_dir.join(MODEL_FILE))?;
                    experiment::run_eval(&cfg, &ae, data_dir, &cfg.output_dir.clone())
                        .map(|r| r.csv_row(&cfg))
                });
                match result {
                    Ok(row) => rows.lock().expect("no poisoned lock")[k] = Some(row),
                    Err(e) => {
                        first_error.lock().expect("no poisoned lock").get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("no poisoned lock") {
        return Err(e);
    }
    let mut table = format!("{EVAL_HEADER}\n");
    for row in rows.into_inner().expect("no poisoned lock").into_iter().flatten() {
        table.push_str(&row);
        table.push('\n');
    }
    experiment::write_file(&root.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Train { config, classes, jobs } => {
            let cfg = config.resolve(None)?;
            match classes {
                Some(spec) => sweep(&cfg, &parse_classes(&spec)?, jobs, config.data_dir.as_deref()),
                None => train_one(&cfg, config.data_dir.as_deref()),
            }
        }
        Command::Eval { model } => {
            let cfg = model.config.resolve(Some(&model.model))?;
            let ae = load(&model.model)?;
            let report = experiment::run_eval(&cfg, &ae, model.config.data_dir.as_deref(), &cfg.output_dir)?;
            println!("{EVAL_HEADER}\n{}", report.csv_row(&cfg));
            Ok(())
        }
        Command::AttackEval { model, epsilons } => {
            let mut cfg = model.config.resolve(Some(&model.model))?;
            if let Some(eps) = epsilons {
                cfg.attack_eval.epsilons = eps;
                cfg.validate()?;
            }
            let ae = load(&model.model)?;
            let rows = experiment::run_attack_eval(&cfg, &ae, model.config.data_dir.as_deref(), &cfg.output_dir)?;
            print!("{}", experiment::attack_csv(&cfg, &rows));
            Ok(())
        }
        Command::Saliency { model, count, indices, noise } => {
            let cfg = model.config.resolve(Some(&model.model))?;
            let ae = load(&model.model)?;
            let source = match indices {
                Some(idx) => ImageSource::TestIndices(idx),
                None => ImageSource::TestSamples { count },
            };
            let maps = experiment::run_saliency(
                &cfg,
                &ae,
                model.config.data_dir.as_deref(),
                &source,
                noise,
                &cfg.output_dir,
            )?;
            println!("wrote {} saliency maps to {}", maps.len(), cfg.output_dir.display());
            Ok(())
        }
        Command::Minima { model, out, seed, count, lr, max_iters, tol } => {
            if !(lr > 0.0) || max_iters == 0 {
                return Err(ExperimentError::Config("--lr must be positive and --max-iters at least 1".into()));
            }
            let ae = load(&model)?;
            let cfg = MinimaConfig { learning_rate: lr, max_iters, tol };
            let results = experiment::run_minima(&ae, seed, count, cfg, &out)?;
            for (k, (_, traj)) in results.iter().enumerate() {
                println!("start {k}: {} steps, loss {:.6} -> {:.6}", traj.len() - 1, traj[0], traj[traj.len() - 1]);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
