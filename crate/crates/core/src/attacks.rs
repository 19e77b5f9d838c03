//! Adversarial example crafting against an [`Autoencoder`].
//!
//! The main attack pushes a sample's latent code as far as possible from the
//! clean code inside an ℓ∞ ball (projected sign-gradient ascent). Ablation
//! attacks swap the perturbation set (ℓ2 ball, rotation/translation grid, or
//! a union of sets) or the objective (reconstruction error instead of latent
//! distance).
//!
//! All PGD variants keep the best iterate seen per sample, so the returned
//! loss never drops below the loss at the clean input.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{stack_pixels, Autoencoder, ModelError, Sample};
use crate::nn::row_sq_norms;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("invalid perturbation spec: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<crate::nn::NnError> for AttackError {
    fn from(e: crate::nn::NnError) -> Self {
        AttackError::Model(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Linf,
    L2,
    RotTrans,
    Union,
    ReconLinf,
    /// ℓ∞ PGD on the anomaly score of the perturbed input itself.
    ScoreLinf,
}

/// Which quantity the attack maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `‖Enc(x + δ) − Enc(x)‖²`
    Latent,
    /// `‖x − Dec(Enc(x + δ))‖²`
    Reconstruction,
    /// `‖(x + δ) − Dec(Enc(x + δ))‖²`
    Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ball {
    Linf,
    L2,
}

pub const DEFAULT_STEPS: usize = 10;

/// Describes a perturbation set and how to search it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: AttackKind,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Defaults to `2.5 · ε / steps` when absent.
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub random_start: bool,
    /// Independent random starts; the best result over all of them is kept.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub rotation_grid: Vec<f64>,
    #[serde(default)]
    pub translation_grid: Vec<i32>,
    #[serde(default)]
    pub children: Vec<PerturbationSpec>,
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

fn default_restarts() -> usize {
    1
}

impl PerturbationSpec {
    fn pgd(kind: AttackKind, epsilon: f64, random_start: bool) -> Self {
        PerturbationSpec {
            kind,
            epsilon,
            steps: DEFAULT_STEPS,
            step_size: None,
            random_start,
            restarts: 1,
            rotation_grid: Vec::new(),
            translation_grid: Vec::new(),
            children: Vec::new(),
        }
    }

    /// ℓ∞ latent attack. The latent loss is stationary at `δ = 0`, so a
    /// random start in the ball is on by default.
    pub fn linf(epsilon: f64) -> Self {
        Self::pgd(AttackKind::Linf, epsilon, true)
    }

    pub fn l2(epsilon: f64) -> Self {
        Self::pgd(AttackKind::L2, epsilon, true)
    }

    /// ℓ∞ attack on the reconstruction error, starting from the clean input.
    pub fn recon_linf(epsilon: f64) -> Self {
        Self::pgd(AttackKind::ReconLinf, epsilon, false)
    }

    /// ℓ∞ attack that pushes up the anomaly score of the perturbed sample.
    pub fn score_linf(epsilon: f64) -> Self {
        Self::pgd(AttackKind::ScoreLinf, epsilon, false)
    }

    pub fn rot_trans(rotation_grid: Vec<f64>, translation_grid: Vec<i32>) -> Self {
        PerturbationSpec {
            kind: AttackKind::RotTrans,
            epsilon: 0.0,
            steps: 1,
            step_size: None,
            random_start: false,
            restarts: 1,
            rotation_grid,
            translation_grid,
            children: Vec::new(),
        }
    }

    /// Rotations −30°..30° in 5° steps and shifts −3..3 px per axis.
    pub fn rot_trans_default() -> Self {
        Self::rot_trans(
            (-6..=6).map(|k| 5.0 * k as f64).collect(),
            (-3..=3).collect(),
        )
    }

    pub fn union(children: Vec<PerturbationSpec>) -> Self {
        PerturbationSpec {
            kind: AttackKind::Union,
            epsilon: 0.0,
            steps: 1,
            step_size: None,
            random_start: false,
            restarts: 1,
            rotation_grid: Vec::new(),
            translation_grid: Vec::new(),
            children,
        }
    }

    /// ℓ∞ ∪ ℓ2 ∪ rotation/translation.
    pub fn union_default(linf_epsilon: f64, l2_epsilon: f64) -> Self {
        Self::union(vec![
            Self::linf(linf_epsilon),
            Self::l2(l2_epsilon),
            Self::rot_trans_default(),
        ])
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = Some(step_size);
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_random_start(mut self, random_start: bool) -> Self {
        self.random_start = random_start;
        self
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size
            .unwrap_or(2.5 * self.epsilon / self.steps.max(1) as f64)
    }

    pub fn objective(&self) -> Objective {
        match self.kind {
            AttackKind::ReconLinf => Objective::Reconstruction,
            AttackKind::ScoreLinf => Objective::Score,
            _ => Objective::Latent,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |msg: String| Err(AttackError::Config(msg));
        match self.kind {
            AttackKind::Linf | AttackKind::L2 | AttackKind::ReconLinf | AttackKind::ScoreLinf => {
                if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
                    return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
                }
                if self.steps == 0 {
                    return bad("steps must be >= 1".into());
                }
                if self.restarts == 0 {
                    return bad("restarts must be >= 1".into());
                }
                let step = self.effective_step_size();
                if self.epsilon > 0.0 && !(step > 0.0 && step.is_finite()) {
                    return bad(format!("step size must be positive, got {step}"));
                }
            }
            AttackKind::RotTrans => {
                if self.rotation_grid.is_empty() || self.translation_grid.is_empty() {
                    return bad("rotation and translation grids must be non-empty".into());
                }
                if self.rotation_grid.iter().any(|r| !r.is_finite()) {
                    return bad("rotation angles must be finite".into());
                }
            }
            AttackKind::Union => {
                if self.children.is_empty() {
                    return bad("union needs at least one child".into());
                }
                for child in &self.children {
                    if child.objective() != Objective::Latent {
                        return bad("union children must maximize the latent loss".into());
                    }
                    child.validate()?;
                }
            }
        }
        Ok(())
    }

    fn expect_kind(&self, kind: AttackKind) -> Result<(), AttackError> {
        if self.kind != kind {
            return Err(AttackError::Config(format!(
                "expected a {kind:?} spec, got {:?}",
                self.kind
            )));
        }
        self.validate()
    }
}

/// Perturbed copies of a dataset with the loss each one achieved.
#[derive(Debug, Clone)]
pub struct AdversarialBatch<'a> {
    pub originals: &'a [Sample],
    /// One row per original, in the same order.
    pub perturbed: Array2<f64>,
    pub achieved_loss: Vec<f64>,
}

impl AdversarialBatch<'_> {
    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }
}

fn single_row(x: &Sample) -> Array2<f64> {
    stack_pixels(std::iter::once(x))
}

fn unpack_single((x_adv, loss): (Array2<f64>, Array1<f64>)) -> (Vec<f64>, f64) {
    (x_adv.row(0).to_vec(), loss[0])
}

/// ℓ∞-bounded PGD on the latent loss.
pub fn pgd_linf_latent<R: Rng + ?Sized>(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.expect_kind(AttackKind::Linf)?;
    attack_rows(ae, single_row(x).view(), spec, rng).map(unpack_single)
}

/// ℓ2-bounded PGD on the latent loss.
pub fn pgd_l2_latent<R: Rng + ?Sized>(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.expect_kind(AttackKind::L2)?;
    attack_rows(ae, single_row(x).view(), spec, rng).map(unpack_single)
}

/// Exhaustive search over the quantized rotation/translation grid.
pub fn rot_trans_attack(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.expect_kind(AttackKind::RotTrans)?;
    grid_search(ae, &x.pixels, x.height, x.width, spec)
}

/// Runs every child attack and keeps the result with the largest latent loss.
pub fn union_attack<R: Rng + ?Sized>(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.expect_kind(AttackKind::Union)?;
    union_rows(ae, &[x], spec, rng).map(unpack_single)
}

/// ℓ∞-bounded PGD on the reconstruction error.
pub fn pgd_linf_recon<R: Rng + ?Sized>(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.expect_kind(AttackKind::ReconLinf)?;
    attack_rows(ae, single_row(x).view(), spec, rng).map(unpack_single)
}

/// ℓ∞-bounded PGD on the perturbed sample's own anomaly score.
pub fn pgd_linf_score<R: Rng + ?Sized>(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.expect_kind(AttackKind::ScoreLinf)?;
    attack_rows(ae, single_row(x).view(), spec, rng).map(unpack_single)
}

/// Dispatches on `spec.kind` for a single sample.
pub fn attack<R: Rng + ?Sized>(
    ae: &Autoencoder,
    x: &Sample,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.validate()?;
    match spec.kind {
        AttackKind::RotTrans => rot_trans_attack(ae, x, spec),
        AttackKind::Union => union_rows(ae, &[x], spec, rng).map(unpack_single),
        _ => attack_rows(ae, single_row(x).view(), spec, rng).map(unpack_single),
    }
}

const CRAFT_CHUNK: usize = 256;

/// Attacks every sample against the current parameters. Results come back
/// in input order and are reproducible for a given RNG state.
pub fn craft_epoch_set<'a, R: Rng + ?Sized>(
    ae: &Autoencoder,
    dataset: &'a [Sample],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<AdversarialBatch<'a>, AttackError> {
    if dataset.is_empty() {
        return Err(AttackError::Config("cannot craft from an empty dataset".into()));
    }
    spec.validate()?;
    let d = dataset[0].dim();
    let mut perturbed = Array2::zeros((dataset.len(), d));
    let mut achieved_loss = Vec::with_capacity(dataset.len());
    for (chunk_idx, chunk) in dataset.chunks(CRAFT_CHUNK).enumerate() {
        let (x_adv, loss) = craft_rows(ae, chunk, spec, rng)?;
        let start = chunk_idx * CRAFT_CHUNK;
        perturbed
            .slice_mut(ndarray::s![start..start + chunk.len(), ..])
            .assign(&x_adv);
        achieved_loss.extend(loss);
    }
    Ok(AdversarialBatch {
        originals: dataset,
        perturbed,
        achieved_loss,
    })
}

/// Attacks a slice of samples as one batch.
pub fn craft_rows<R: Rng + ?Sized>(
    ae: &Autoencoder,
    samples: &[Sample],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Array2<f64>, Array1<f64>), AttackError> {
    match spec.kind {
        AttackKind::RotTrans => {
            let d = samples.first().map_or(0, Sample::dim);
            let mut out = Array2::zeros((samples.len(), d));
            let mut loss = Array1::zeros(samples.len());
            for (i, s) in samples.iter().enumerate() {
                let (x_adv, l) = grid_search(ae, &s.pixels, s.height, s.width, spec)?;
                out.row_mut(i).assign(&ndarray::ArrayView1::from(&x_adv[..]));
                loss[i] = l;
            }
            Ok((out, loss))
        }
        AttackKind::Union => {
            let refs: Vec<&Sample> = samples.iter().collect();
            union_rows(ae, &refs, spec, rng)
        }
        _ => attack_rows(ae, stack_pixels(samples).view(), spec, rng),
    }
}

fn union_rows<R: Rng + ?Sized>(
    ae: &Autoencoder,
    samples: &[&Sample],
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Array2<f64>, Array1<f64>), AttackError> {
    spec.validate()?;
    let owned: Vec<Sample> = samples.iter().map(|s| (*s).clone()).collect();
    let mut best: Option<(Array2<f64>, Array1<f64>)> = None;
    for child in &spec.children {
        let (x_adv, loss) = craft_rows(ae, &owned, child, rng)?;
        match best.as_mut() {
            None => best = Some((x_adv, loss)),
            Some((best_x, best_loss)) => {
                for i in 0..loss.len() {
                    // strict: earlier children win ties
                    if loss[i] > best_loss[i] {
                        best_loss[i] = loss[i];
                        best_x.row_mut(i).assign(&x_adv.row(i));
                    }
                }
            }
        }
    }
    Ok(best.expect("validated non-empty children"))
}

/// Loss (and optionally input gradient) of the attack objective for each row.
struct ObjectiveEval<'a> {
    ae: &'a Autoencoder,
    objective: Objective,
    clean: ArrayView2<'a, f64>,
    clean_latent: Option<Array2<f64>>,
}

impl<'a> ObjectiveEval<'a> {
    fn new(ae: &'a Autoencoder, objective: Objective, clean: ArrayView2<'a, f64>) -> Result<Self, AttackError> {
        let clean_latent = match objective {
            Objective::Latent => Some(ae.encode_batch(clean)?),
            Objective::Reconstruction | Objective::Score => None,
        };
        Ok(ObjectiveEval {
            ae,
            objective,
            clean,
            clean_latent,
        })
    }

    fn loss(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, AttackError> {
        match self.objective {
            Objective::Latent => {
                let z = self.ae.encode_batch(x)?;
                let z0 = self.clean_latent.as_ref().expect("latent objective");
                Ok(row_sq_norms((&z - z0).view()))
            }
            Objective::Reconstruction => {
                let y = self.ae.reconstruct_batch(x)?;
                Ok(row_sq_norms((&y - &self.clean).view()))
            }
            Objective::Score => Ok(self.ae.score_batch(x)?),
        }
    }

    fn loss_and_grad(&self, x: Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), AttackError> {
        let enc = self.ae.encoder();
        let input = (self.objective == Objective::Score).then(|| x.clone());
        let enc_tape = enc.forward_tape(x)?;
        let z = enc_tape.output().expect("recorded");
        match self.objective {
            Objective::Latent => {
                let diff = z - self.clean_latent.as_ref().expect("latent objective");
                let loss = row_sq_norms(diff.view());
                let grad = enc.backward_input(&enc_tape, (diff * 2.0).view())?;
                Ok((loss, grad))
            }
            Objective::Reconstruction => {
                let dec = self.ae.decoder();
                let dec_tape = dec.forward_tape(z.clone())?;
                let diff = dec_tape.output().expect("recorded") - &self.clean;
                let loss = row_sq_norms(diff.view());
                let dz = dec.backward_input(&dec_tape, (diff * 2.0).view())?;
                let grad = enc.backward_input(&enc_tape, dz.view())?;
                Ok((loss, grad))
            }
            Objective::Score => {
                let x = input.expect("kept for the score objective");
                let dec = self.ae.decoder();
                let dec_tape = dec.forward_tape(z.clone())?;
                let diff = dec_tape.output().expect("recorded") - &x;
                let loss = row_sq_norms(diff.view());
                let upstream = diff * 2.0;
                let dz = dec.backward_input(&dec_tape, upstream.view())?;
                let grad = enc.backward_input(&enc_tape, dz.view())? - &upstream;
                Ok((loss, grad))
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Batched PGD for the ℓ∞/ℓ2 kinds; every row is attacked independently.
fn attack_rows<R: Rng + ?Sized>(
    ae: &Autoencoder,
    clean: ArrayView2<'_, f64>,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<(Array2<f64>, Array1<f64>), AttackError> {
    spec.validate()?;
    let ball = match spec.kind {
        AttackKind::Linf | AttackKind::ReconLinf | AttackKind::ScoreLinf => Ball::Linf,
        AttackKind::L2 => Ball::L2,
        other => {
            return Err(AttackError::Config(format!("{other:?} is not a PGD attack")));
        }
    };
    let eval = ObjectiveEval::new(ae, spec.objective(), clean)?;
    let eps = spec.epsilon;

    // Keep-best starts from the clean input.
    let mut best_x = clean.to_owned();
    let mut best_loss = match spec.objective() {
        Objective::Latent => Array1::zeros(clean.nrows()),
        Objective::Reconstruction | Objective::Score => eval.loss(clean)?,
    };
    if eps == 0.0 {
        return Ok((best_x, best_loss));
    }

    let step = spec.effective_step_size();
    let mut keep = |x: &Array2<f64>, loss: &Array1<f64>| {
        for i in 0..loss.len() {
            if loss[i] > best_loss[i] {
                best_loss[i] = loss[i];
                best_x.row_mut(i).assign(&x.row(i));
            }
        }
    };

    let runs = if spec.random_start { spec.restarts } else { 1 };
    for _ in 0..runs {
        let mut delta = Array2::<f64>::zeros(clean.raw_dim());
        if spec.random_start {
            match ball {
                Ball::Linf => delta.mapv_inplace(|_| rng.random_range(-eps..=eps)),
                Ball::L2 => {
                    let d = clean.ncols() as f64;
                    for mut row in delta.axis_iter_mut(Axis(0)) {
                        row.mapv_inplace(|_| rng.sample::<f64, _>(StandardNormal));
                        let norm = row.dot(&row).sqrt();
                        let radius = eps * rng.random::<f64>().powf(1.0 / d);
                        if norm > 0.0 {
                            row *= radius / norm;
                        }
                    }
                }
            }
            clamp_to_image(&mut delta, clean);
        }

        for _ in 0..spec.steps {
            let x = &clean + &delta;
            let (loss, grad) = eval.loss_and_grad(x.clone())?;
            keep(&x, &loss);
            match ball {
                Ball::Linf => {
                    Zip::from(&mut delta).and(&grad).for_each(|d, &g| {
                        *d = (*d + step * sign(g)).clamp(-eps, eps);
                    });
                }
                Ball::L2 => {
                    for (mut d, g) in delta.axis_iter_mut(Axis(0)).zip(grad.axis_iter(Axis(0))) {
                        let gnorm = g.dot(&g).sqrt();
                        if gnorm > 0.0 {
                            d.scaled_add(step / gnorm, &g);
                        }
                        let dnorm = d.dot(&d).sqrt();
                        if dnorm > eps {
                            d *= eps / dnorm;
                        }
                    }
                }
            }
            clamp_to_image(&mut delta, clean);
        }
        let x = &clean + &delta;
        let loss = eval.loss(x.view())?;
        keep(&x, &loss);
    }
    Ok((best_x, best_loss))
}

/// Shrinks `delta` so that `clean + delta` lies in `[0, 1]`. Only ever
/// reduces component magnitudes, so any norm bound is preserved.
fn clamp_to_image(delta: &mut Array2<f64>, clean: ArrayView2<'_, f64>) {
    Zip::from(delta).and(clean).for_each(|d, &x| {
        *d = (x + *d).clamp(0.0, 1.0) - x;
    });
}

/// Rotates by `degrees` about the image centre, then shifts by `(dx, dy)`.
/// Nearest-neighbour sampling; pixels mapped from outside the frame are 0.
pub fn rotate_translate(
    pixels: &[f64],
    height: usize,
    width: usize,
    degrees: f64,
    dx: i32,
    dy: i32,
) -> Vec<f64> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let u = (c as i64 - dx as i64) as f64 - cx;
            let v = (r as i64 - dy as i64) as f64 - cy;
            // inverse rotation maps the output position back to its source
            let sc = (cos * u + sin * v + cx).round();
            let sr = (-sin * u + cos * v + cy).round();
            if sc >= 0.0 && sr >= 0.0 && (sc as usize) < width && (sr as usize) < height {
                out[r * width + c] = pixels[sr as usize * width + sc as usize];
            }
        }
    }
    out
}

/// Grid order: rotation-major, then horizontal shift, then vertical shift.
pub fn grid_points(spec: &PerturbationSpec) -> Vec<(f64, i32, i32)> {
    let mut points = Vec::with_capacity(
        spec.rotation_grid.len() * spec.translation_grid.len() * spec.translation_grid.len(),
    );
    for &rot in &spec.rotation_grid {
        for &dx in &spec.translation_grid {
            for &dy in &spec.translation_grid {
                points.push((rot, dx, dy));
            }
        }
    }
    points
}

fn grid_search(
    ae: &Autoencoder,
    pixels: &[f64],
    height: usize,
    width: usize,
    spec: &PerturbationSpec,
) -> Result<(Vec<f64>, f64), AttackError> {
    spec.validate()?;
    let points = grid_points(spec);
    let d = pixels.len();
    let mut candidates = Array2::zeros((points.len(), d));
    for (mut row, &(rot, dx, dy)) in candidates.axis_iter_mut(Axis(0)).zip(&points) {
        let img = rotate_translate(pixels, height, width, rot, dx, dy);
        row.assign(&ndarray::ArrayView1::from(&img[..]));
    }
    let z0 = ae.encode_pixels(pixels)?;
    let z = ae.encode_batch(candidates.view())?;
    let losses = row_sq_norms((&z - &z0).view());
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l > losses[best] {
            best = i;
        }
    }
    Ok((candidates.row(best).to_vec(), losses[best]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Split;
    use crate::nn::{Activation, DenseLayer, Network};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(pixels: Vec<f64>) -> Sample {
        let n = pixels.len();
        Sample::new(pixels, 1, n, 0, Split::Test).unwrap()
    }

    /// Scalar identity-activated encoder `Enc(x) = wᵀx`.
    fn linear_ae(w: &[f64]) -> Autoencoder {
        let d = w.len();
        let enc = DenseLayer::new(
            Array2::from_shape_vec((1, d), w.to_vec()).unwrap(),
            array![0.0],
            Activation::Identity,
        )
        .unwrap();
        let dec = DenseLayer::zeros(1, d, Activation::Sigmoid);
        Autoencoder::from_parts(Network::new(vec![enc]).unwrap(), Network::new(vec![dec]).unwrap())
            .unwrap()
    }

    #[test]
    fn zero_budget_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ae = Autoencoder::new(4, &[3, 2], &mut rng).unwrap();
        let x = sample(vec![0.1, 0.2, 0.8, 0.5]);
        let (adv, loss) = pgd_linf_latent(&ae, &x, &PerturbationSpec::linf(0.0), &mut rng).unwrap();
        assert_eq!(adv, x.pixels);
        assert_eq!(loss, 0.0);
        let (adv, loss) = pgd_l2_latent(&ae, &x, &PerturbationSpec::l2(0.0), &mut rng).unwrap();
        assert_eq!(adv, x.pixels);
        assert_eq!(loss, 0.0);
        let (adv, loss) =
            pgd_linf_recon(&ae, &x, &PerturbationSpec::recon_linf(0.0), &mut rng).unwrap();
        assert_eq!(adv, x.pixels);
        assert_eq!(loss, ae.anomaly_score(&x).unwrap());
    }

    #[test]
    fn negative_budget_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ae = linear_ae(&[1.0, 1.0]);
        let x = sample(vec![0.5, 0.5]);
        for spec in [
            PerturbationSpec::linf(-0.1),
            PerturbationSpec::l2(-0.1),
            PerturbationSpec::recon_linf(-0.1),
        ] {
            assert!(matches!(attack(&ae, &x, &spec, &mut rng), Err(AttackError::Config(_))));
        }
        assert!(matches!(
            pgd_linf_latent(&ae, &x, &PerturbationSpec::l2(0.1), &mut rng),
            Err(AttackError::Config(_))
        ));
    }

    #[test]
    fn linf_linear_encoder_reaches_ball_corner() {
        let w = [0.7, -1.2, 0.4];
        let ae = linear_ae(&w);
        let x = sample(vec![0.5, 0.5, 0.5]);
        let eps = 0.1;
        let l1: f64 = w.iter().map(|v: &f64| v.abs()).sum();
        for steps in [1, 3, 10] {
            let spec = PerturbationSpec::linf(eps).with_steps(steps).with_step_size(2.0 * eps);
            let mut rng = ChaCha8Rng::seed_from_u64(steps as u64);
            let (adv, loss) = pgd_linf_latent(&ae, &x, &spec, &mut rng).unwrap();
            let delta: Vec<f64> = adv.iter().zip(&x.pixels).map(|(a, b)| a - b).collect();
            // either corner ±ε·sign(w) maximizes (wᵀδ)²
            let s = sign(delta[0]) * sign(w[0]);
            for (d, wi) in delta.iter().zip(&w) {
                assert!((d - s * eps * sign(*wi)).abs() < 1e-12, "{delta:?}");
            }
            assert!((loss - eps * eps * l1 * l1).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_linear_encoder_aligns_with_weights() {
        let w = [0.3, -0.4, 1.2];
        let ae = linear_ae(&w);
        let x = sample(vec![0.5, 0.5, 0.5]);
        let eps = 0.2;
        let wn2: f64 = w.iter().map(|v| v * v).sum();
        // without a random start the iterate never leaves δ = 0
        let spec = PerturbationSpec::l2(eps).with_steps(1).with_step_size(eps).with_random_start(false);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, loss) = pgd_l2_latent(&ae, &x, &spec, &mut rng).unwrap();
        assert_eq!(loss, 0.0, "latent gradient vanishes at δ = 0");
        // from a random start, one long step lands (almost) on ε·w/‖w‖
        let spec = PerturbationSpec::l2(eps).with_steps(1).with_step_size(100.0 * eps);
        let (adv, loss) = pgd_l2_latent(&ae, &x, &spec, &mut rng).unwrap();
        assert!(loss >= 0.9999 * eps * eps * wn2, "{loss}");
        let spec = PerturbationSpec::l2(eps).with_steps(20);
        let (adv20, loss20) = pgd_l2_latent(&ae, &x, &spec, &mut rng).unwrap();
        assert!(loss20 >= 0.98 * eps * eps * wn2, "{loss20}");
        assert!(loss20 <= eps * eps * wn2 + 1e-12);
        let norm: f64 = adv20.iter().zip(&x.pixels).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(norm <= eps + 1e-9);
        let norm: f64 = adv.iter().zip(&x.pixels).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(norm <= eps + 1e-9);
    }

    #[test]
    fn recon_attack_never_below_clean_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ae = Autoencoder::new(6, &[4, 2], &mut rng).unwrap();
        for _ in 0..20 {
            let x = sample((0..6).map(|_| rng.random::<f64>()).collect());
            let score = ae.anomaly_score(&x).unwrap();
            let (adv, loss) =
                pgd_linf_recon(&ae, &x, &PerturbationSpec::recon_linf(0.05), &mut rng).unwrap();
            assert!(loss >= score);
            assert!((ae.anomaly_score(&x).unwrap() - score).abs() == 0.0);
            assert!((ae.rec_loss(&x, &adv).unwrap() - loss).abs() < 1e-12);
            for (a, p) in adv.iter().zip(&x.pixels) {
                assert!((a - p).abs() <= 0.05 + 1e-9 && (0.0..=1.0).contains(a));
            }
        }
    }

    #[test]
    fn score_attack_raises_own_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ae = Autoencoder::new(6, &[4, 2], &mut rng).unwrap();
        let spec = PerturbationSpec::score_linf(0.1);
        let mut improved = 0;
        for _ in 0..20 {
            let x = sample((0..6).map(|_| rng.random::<f64>()).collect());
            let score = ae.anomaly_score(&x).unwrap();
            let (adv, loss) = pgd_linf_score(&ae, &x, &spec, &mut rng).unwrap();
            assert!(loss >= score);
            assert!((ae.score_pixels(&adv).unwrap() - loss).abs() < 1e-12);
            improved += usize::from(loss > score);
        }
        assert!(improved >= 15);
        assert!(pgd_linf_score(&ae, &sample(vec![0.5; 6]), &PerturbationSpec::linf(0.1), &mut rng).is_err());
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let ae = Autoencoder::new(5, &[4, 3], &mut rng).unwrap();
        let x = Array2::from_shape_fn((1, 5), |_| rng.random::<f64>());
        let eval = ObjectiveEval::new(&ae, Objective::Score, x.view()).unwrap();
        let (_, grad) = eval.loss_and_grad(x.clone()).unwrap();
        for j in 0..5 {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[[0, j]] += h;
            xm[[0, j]] -= h;
            let fd = (eval.loss(xp.view()).unwrap()[0] - eval.loss(xm.view()).unwrap()[0]) / (2.0 * h);
            assert!((fd - grad[[0, j]]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn keep_best_makes_more_steps_no_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ae = Autoencoder::new(5, &[4, 3], &mut rng).unwrap();
        let x = sample(vec![0.2, 0.9, 0.4, 0.0, 0.6]);
        let base = PerturbationSpec::recon_linf(0.1).with_step_size(0.02);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..12 {
            let (_, loss) =
                pgd_linf_recon(&ae, &x, &base.clone().with_steps(k), &mut rng).unwrap();
            assert!(loss >= prev - 1e-12, "step {k}: {loss} < {prev}");
            prev = loss;
        }
    }

    #[test]
    fn restarts_never_lose_the_first_start() {
        let ae = Autoencoder::new(6, &[4, 2], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = sample(vec![0.05, 0.9, 0.5, 0.5, 0.98, 0.3]);
        let run = |restarts| {
            let spec = PerturbationSpec::linf(0.2).with_restarts(restarts);
            pgd_linf_latent(&ae, &x, &spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap().1
        };
        let single = run(1);
        for k in [2, 5, 9] {
            assert!(run(k) >= single);
        }
        assert!(matches!(
            pgd_linf_latent(&ae, &x, &PerturbationSpec::linf(0.2).with_restarts(0), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(AttackError::Config(_))
        ));
    }

    #[test]
    fn identity_rotation_translation() {
        let px: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        assert_eq!(rotate_translate(&px, 4, 5, 0.0, 0, 0), px);
        let shifted = rotate_translate(&px, 4, 5, 0.0, 1, 0);
        assert_eq!(shifted[0], 0.0);
        assert_eq!(shifted[1], px[0]);
        let down = rotate_translate(&px, 4, 5, 0.0, 0, 2);
        assert!(down[..10].iter().all(|&v| v == 0.0));
        assert_eq!(&down[10..], &px[..10]);
        // a quarter turn of a square image is a permutation of pixels
        let sq: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let mut turned = rotate_translate(&sq, 4, 4, 90.0, 0, 0);
        turned.sort_by(f64::total_cmp);
        assert_eq!(turned, sq);
    }

    #[test]
    fn trivial_grid_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ae = Autoencoder::new(16, &[6], &mut rng).unwrap();
        let x = Sample::new((0..16).map(|i| i as f64 / 16.0).collect(), 4, 4, 0, Split::Train).unwrap();
        let spec = PerturbationSpec::rot_trans(vec![0.0], vec![0]);
        let (adv, loss) = rot_trans_attack(&ae, &x, &spec).unwrap();
        assert_eq!(adv, x.pixels);
        assert_eq!(loss, 0.0);
        assert!(matches!(
            rot_trans_attack(&ae, &x, &PerturbationSpec::rot_trans(vec![], vec![0])),
            Err(AttackError::Config(_))
        ));
    }

    #[test]
    fn constant_encoder_ties_resolve_to_first_grid_point() {
        let enc = DenseLayer::zeros(16, 2, Activation::Sigmoid);
        let dec = DenseLayer::zeros(2, 16, Activation::Sigmoid);
        let ae = Autoencoder::from_parts(Network::new(vec![enc]).unwrap(), Network::new(vec![dec]).unwrap())
            .unwrap();
        let x = Sample::new((0..16).map(|i| i as f64 / 16.0).collect(), 4, 4, 0, Split::Train).unwrap();
        let spec = PerturbationSpec::rot_trans(vec![-10.0, 0.0, 10.0], vec![-1, 0, 1]);
        let (adv, loss) = rot_trans_attack(&ae, &x, &spec).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(adv, rotate_translate(&x.pixels, 4, 4, -10.0, -1, -1));
    }

    #[test]
    fn union_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ae = Autoencoder::new(16, &[8, 4], &mut rng).unwrap();
        let x = Sample::new((0..16).map(|_| rng.random::<f64>()).collect(), 4, 4, 0, Split::Train)
            .unwrap();

        let zero = PerturbationSpec::union(vec![PerturbationSpec::linf(0.0), PerturbationSpec::l2(0.0)]);
        assert_eq!(union_attack(&ae, &x, &zero, &mut rng).unwrap().1, 0.0);

        let child = PerturbationSpec::linf(0.1);
        let single = PerturbationSpec::union(vec![child.clone()]);
        let a = union_attack(&ae, &x, &single, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = pgd_linf_latent(&ae, &x, &child, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);

        let children = vec![
            PerturbationSpec::linf(0.1),
            PerturbationSpec::l2(0.5),
            PerturbationSpec::rot_trans(vec![-15.0, 0.0, 15.0], vec![-1, 0, 1]),
        ];
        let spec = PerturbationSpec::union(children.clone());
        let (adv, loss) = union_attack(&ae, &x, &spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!((ae.latent_loss(&x, &adv).unwrap() - loss).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in &children {
            let (_, l) = attack(&ae, &x, c, &mut rng).unwrap();
            assert!(loss >= l - 1e-15);
        }

        let bad = PerturbationSpec::union(vec![PerturbationSpec::recon_linf(0.1)]);
        assert!(union_attack(&ae, &x, &bad, &mut rng).is_err());
        assert!(union_attack(&ae, &x, &PerturbationSpec::union(vec![]), &mut rng).is_err());
    }

    #[test]
    fn epoch_set_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ae = Autoencoder::new(9, &[6, 3], &mut rng).unwrap();
        let data: Vec<Sample> = (0..300)
            .map(|i| {
                Sample::new((0..9).map(|_| rng.random::<f64>()).collect(), 3, 3, i % 2, Split::Train)
                    .unwrap()
            })
            .collect();

        let zero = craft_epoch_set(&ae, &data, &PerturbationSpec::linf(0.0), &mut rng).unwrap();
        assert_eq!(zero.perturbed, stack_pixels(&data));

        for spec in [
            PerturbationSpec::linf(0.2),
            PerturbationSpec::l2(0.3),
            PerturbationSpec::recon_linf(0.05),
        ] {
            let a = craft_epoch_set(&ae, &data, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = craft_epoch_set(&ae, &data, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(a.perturbed, b.perturbed);
            assert_eq!(a.len(), data.len());
            for (i, s) in data.iter().enumerate() {
                let row = a.perturbed.row(i);
                let diffs = row.iter().zip(&s.pixels).map(|(p, q)| p - q);
                match spec.kind {
                    AttackKind::L2 => {
                        assert!(diffs.map(|d| d * d).sum::<f64>().sqrt() <= spec.epsilon + 1e-9)
                    }
                    _ => assert!(diffs.fold(0.0f64, |m, d| m.max(d.abs())) <= spec.epsilon + 1e-9),
                }
                assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
                assert!(a.achieved_loss[i] >= 0.0);
            }
        }
        assert!(craft_epoch_set(&ae, &[], &PerturbationSpec::linf(0.1), &mut rng).is_err());
    }
}
