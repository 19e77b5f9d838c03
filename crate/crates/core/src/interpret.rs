//! Occlusion saliency, input-space local minima and image writers.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::model::{Autoencoder, ModelError, Sample};
use crate::nn::NnError;

/// Change in reconstruction error when each pixel is blacked out.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub deltas: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl SaliencyMap {
    pub fn max_abs(&self) -> f64 {
        self.deltas.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.deltas.iter().all(|&d| d == 0.0)
    }

    /// Binary PPM: positive deltas in blue, negative in red, scaled by the
    /// largest magnitude. A zero map renders black.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        let max = self.max_abs();
        for &d in &self.deltas {
            let level = if max > 0.0 {
                (255.0 * d.abs() / max).round() as u8
            } else {
                0
            };
            let rgb = if d > 0.0 {
                [0, 0, level]
            } else if d < 0.0 {
                [level, 0, 0]
            } else {
                [0, 0, 0]
            };
            out.extend(rgb);
        }
        out
    }

    /// One line per image row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.deltas.chunks(self.width.max(1)) {
            let cells: Vec<String> = row.iter().map(|d| format!("{d:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Binary PGM of values in `[0, 1]`.
pub fn to_pgm(pixels: &[f64], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn occlusion1(ae: &Autoencoder, x: &Sample) -> Result<SaliencyMap, ModelError> {
    let d = x.dim();
    if d != ae.input_dim() {
        return Err(ModelError::InputWidth {
            expected: ae.input_dim(),
            found: d,
        });
    }
    let mut batch = Array2::zeros((d + 1, d));
    for mut row in batch.rows_mut() {
        row.assign(&ArrayView1::from(&x.pixels[..]));
    }
    for i in 0..d {
        batch[[i + 1, i]] = 0.0;
    }
    let scores = ae.score_batch(batch.view())?;
    let base = scores[0];
    let deltas = (0..d)
        .map(|i| if x.pixels[i] == 0.0 { 0.0 } else { scores[i + 1] - base })
        .collect();
    Ok(SaliencyMap {
        deltas,
        height: x.height,
        width: x.width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MinimaConfig {
    fn default() -> Self {
        MinimaConfig {
            learning_rate: 0.1,
            max_iters: 2000,
            tol: 1e-8,
        }
    }
}

const MAX_HALVINGS: usize = 40;

/// Score and its gradient with respect to the input.
fn score_and_grad(ae: &Autoencoder, x: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("single row");
    let enc_tape = ae.encoder().forward_tape(row.clone())?;
    let z = enc_tape.output().ok_or(NnError::EmptyTape)?.clone();
    let dec_tape = ae.decoder().forward_tape(z)?;
    let residual = dec_tape.output().ok_or(NnError::EmptyTape)? - &row;
    let score = residual.iter().map(|r| r * r).sum();
    let upstream = &residual * 2.0;
    let dz = ae.decoder().backward_input(&dec_tape, upstream.view())?;
    let through = ae.encoder().backward_input(&enc_tape, dz.view())?;
    let grad = through
        .iter()
        .zip(upstream.iter())
        .map(|(t, u)| t - u)
        .collect();
    Ok((score, grad))
}

/// Projected gradient descent on the reconstruction error from `Uniform[0, 1]` noise.
pub fn local_minimum<R: Rng + ?Sized>(
    ae: &Autoencoder,
    rng: &mut R,
    cfg: MinimaConfig,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let start: Vec<f64> = (0..ae.input_dim()).map(|_| rng.random::<f64>()).collect();
    local_minimum_from(ae, start, cfg)
}

/// Like [`local_minimum`] from a given point. A step that would raise the
/// loss is halved until it does not; the returned trajectory starts with the
/// initial loss and holds one entry per accepted step.
pub fn local_minimum_from(
    ae: &Autoencoder,
    start: Vec<f64>,
    cfg: MinimaConfig,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if start.len() != ae.input_dim() {
        return Err(ModelError::InputWidth {
            expected: ae.input_dim(),
            found: start.len(),
        });
    }
    let mut x = start;
    let (mut loss, mut grad) = score_and_grad(ae, &x)?;
    let mut trajectory = vec![loss];
    for _ in 0..cfg.max_iters {
        let mut lr = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| (xi - lr * gi).clamp(0.0, 1.0))
                .collect();
            let (c_loss, c_grad) = score_and_grad(ae, &candidate)?;
            if c_loss <= loss {
                accepted = Some((candidate, c_loss, c_grad));
                break;
            }
            lr *= 0.5;
        }
        let Some((candidate, c_loss, c_grad)) = accepted else {
            break;
        };
        let decrease = loss - c_loss;
        if decrease <= 0.0 {
            break;
        }
        x = candidate;
        loss = c_loss;
        grad = c_grad;
        trajectory.push(loss);
        if decrease < cfg.tol {
            break;
        }
    }
    Ok((x, trajectory))
}

/// Pearson correlation; zero when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Single-pixel-wide bar at `position` on a `side × side` canvas.
pub fn bar_template(side: usize, horizontal: bool, position: usize) -> Vec<f64> {
    let mut t = vec![0.0; side * side];
    for i in 0..side {
        let idx = if horizontal { position * side + i } else { i * side + position };
        t[idx] = 1.0;
    }
    t
}

/// Best correlation with any horizontal bar and with any vertical bar.
pub fn bar_correlations(pixels: &[f64], side: usize) -> (f64, f64) {
    let best = |horizontal: bool| {
        (0..side)
            .map(|p| correlation(pixels, &bar_template(side, horizontal, p)))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    (best(true), best(false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Split;
    use crate::nn::{Activation, DenseLayer, Network};
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-pixel AE with identity layers and hand-set weights.
    fn toy_ae(enc: Array2<f64>, dec: Array2<f64>) -> Autoencoder {
        let e = DenseLayer::new(enc, Array1::zeros(1), Activation::Identity).unwrap();
        let d = DenseLayer::new(dec, Array1::zeros(2), Activation::Identity).unwrap();
        Autoencoder::from_parts(Network::new(vec![e]).unwrap(), Network::new(vec![d]).unwrap()).unwrap()
    }

    fn identity_ae(d: usize) -> Autoencoder {
        let e = DenseLayer::new(Array2::eye(d), Array1::zeros(d), Activation::Identity).unwrap();
        let dl = DenseLayer::new(Array2::eye(d), Array1::zeros(d), Activation::Identity).unwrap();
        Autoencoder::from_parts(Network::new(vec![e]).unwrap(), Network::new(vec![dl]).unwrap()).unwrap()
    }

    fn sample(pixels: Vec<f64>, h: usize, w: usize) -> Sample {
        Sample::new(pixels, h, w, 0, Split::Test).unwrap()
    }

    #[test]
    fn identity_ae_has_zero_saliency() {
        let map = occlusion1(&identity_ae(4), &sample(vec![0.1, 0.9, 0.0, 0.5], 2, 2)).unwrap();
        assert!(map.is_zero());
        assert_eq!(map.to_ppm()[11..], [0u8; 12]);
    }

    #[test]
    fn toy_deltas_match_recomputed_scores() {
        let ae = toy_ae(array![[0.5, 0.25]], array![[1.0], [2.0]]);
        let x = sample(vec![0.8, 0.4], 1, 2);
        let map = occlusion1(&ae, &x).unwrap();
        let base = ae.score_pixels(&x.pixels).unwrap();
        let d0 = ae.score_pixels(&[0.0, 0.4]).unwrap() - base;
        let d1 = ae.score_pixels(&[0.8, 0.0]).unwrap() - base;
        assert!((map.deltas[0] - d0).abs() < 1e-15);
        assert!((map.deltas[1] - d1).abs() < 1e-15);
        // z = 0.5, y = (0.5, 1.0): base = 0.09 + 0.36
        assert!((base - 0.45).abs() < 1e-12);
    }

    #[test]
    fn black_pixels_and_black_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ae = Autoencoder::new(9, &[4, 2], &mut rng).unwrap();
        let x = sample(vec![0.0, 0.3, 0.0, 1.0, 0.2, 0.0, 0.0, 0.7, 0.1], 3, 3);
        let map = occlusion1(&ae, &x).unwrap();
        for (p, d) in x.pixels.iter().zip(&map.deltas) {
            if *p == 0.0 {
                assert_eq!(*d, 0.0);
            }
        }
        assert!(occlusion1(&ae, &sample(vec![0.0; 9], 3, 3)).unwrap().is_zero());
        assert!(occlusion1(&ae, &sample(vec![0.0; 4], 2, 2)).is_err());
    }

    #[test]
    fn ppm_colours_follow_sign() {
        let map = SaliencyMap {
            deltas: vec![2.0, -1.0, 0.0],
            height: 1,
            width: 3,
        };
        let ppm = map.to_ppm();
        assert!(ppm.starts_with(b"P6\n3 1\n255\n"));
        assert_eq!(&ppm[ppm.len() - 9..], &[0, 0, 255, 128, 0, 0, 0, 0, 0]);
        assert_eq!(map.to_csv(), "2.0,-1.0,0.0\n");
        assert_eq!(to_pgm(&[0.0, 1.0, 0.5, 2.0], 2, 2)[11..], [0, 255, 128, 255]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ae = Autoencoder::new(5, &[4, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let (_, g) = score_and_grad(&ae, &x).unwrap();
        for i in 0..5 {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (ae.score_pixels(&xp).unwrap() - ae.score_pixels(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn constant_output_ae_converges_to_constant() {
        let enc = DenseLayer::new(array![[1.0, -1.0, 0.5]], Array1::zeros(1), Activation::Sigmoid).unwrap();
        let dec = DenseLayer::new(Array2::zeros((3, 1)), array![0.0, 1.0, -1.0], Activation::Sigmoid).unwrap();
        let ae = Autoencoder::from_parts(Network::new(vec![enc]).unwrap(), Network::new(vec![dec]).unwrap()).unwrap();
        let target = ae.reconstruct_pixels(&[0.0; 3]).unwrap();
        let (x, traj) = local_minimum(&ae, &mut ChaCha8Rng::seed_from_u64(1), MinimaConfig::default()).unwrap();
        assert!(*traj.last().unwrap() < 1e-6);
        for (xi, ti) in x.iter().zip(target.iter()) {
            assert!((xi - ti).abs() < 1e-3);
        }
        assert!(traj.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn fixed_point_does_not_move() {
        let ae = identity_ae(3);
        let start = vec![0.2, 0.5, 0.9];
        let (x, traj) = local_minimum_from(&ae, start.clone(), MinimaConfig::default()).unwrap();
        assert_eq!(x, start);
        assert_eq!(traj, vec![0.0]);
    }

    #[test]
    fn trajectories_are_monotone_on_random_nets() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ae = Autoencoder::new(16, &[8, 4], &mut rng).unwrap();
            let cfg = MinimaConfig { learning_rate: 5.0, max_iters: 200, tol: 1e-10 };
            let (x, traj) = local_minimum(&ae, &mut rng, cfg).unwrap();
            assert!(traj.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn bar_correlation_picks_orientation() {
        let h = bar_template(8, true, 3);
        let (ch, cv) = bar_correlations(&h, 8);
        assert!((ch - 1.0).abs() < 1e-12 && cv < 0.1);
        let v = bar_template(8, false, 6);
        let (ch, cv) = bar_correlations(&v, 8);
        assert!(cv > ch);
        assert_eq!(correlation(&[1.0, 1.0], &[0.0, 1.0]), 0.0);
    }
}
