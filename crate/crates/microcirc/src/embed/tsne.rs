//! Exact O(N²) t-SNE with the canonical hyperparameter schedule: early
//! exaggeration 12 for the first 250 iterations, momentum 0.5 switching to
//! 0.8 at iteration 250, learning rate 200, seeded small-variance Gaussian
//! initialization. The per-iteration KL trace is always computed against
//! the plain (non-exaggerated) affinities so it is comparable across the
//! whole run.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EmbedError, Result};

#[derive(Debug, Clone)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_start: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches and exaggeration ends.
    pub schedule_switch: usize,
    pub exaggeration: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            momentum_start: 0.5,
            momentum_final: 0.8,
            schedule_switch: 250,
            exaggeration: 12.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Embedding2D {
    /// N embedded points.
    pub points: Vec<[f64; 2]>,
    /// KL divergence after each iteration; length equals `iterations`.
    pub kl_trace: Vec<f64>,
}

/// Binary-search the Gaussian bandwidth for one point so the conditional
/// distribution over its neighbors reaches the target perplexity.
///
/// `sq_distances` is the full row of squared distances including the
/// self-entry at `self_index`, which is forced to probability zero.
/// Returns (sigma, conditional probabilities).
pub fn perplexity_calibration(
    sq_distances: &[f64],
    self_index: usize,
    target: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = sq_distances.len();
    if n < 2 {
        return Err(EmbedError::TooFewPoints { needed: 2, got: n });
    }
    if sq_distances.iter().any(|d| !d.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    if !(target >= 1.0) || target >= n as f64 {
        return Err(EmbedError::PerplexityTooLarge {
            perplexity: target,
            points: n,
        });
    }

    // beta = 1 / (2 sigma^2); perplexity is monotone decreasing in beta
    let mut beta = 1.0f64;
    let mut beta_lo = f64::NEG_INFINITY;
    let mut beta_hi = f64::INFINITY;
    let log2_target = target.log2();
    let mut p = vec![0.0; n];
    for _ in 0..100 {
        row_probabilities(sq_distances, self_index, beta, &mut p);
        let entropy_bits = p
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -v * v.log2())
            .sum::<f64>();
        let diff = entropy_bits - log2_target;
        if diff.abs() <= 1e-5 {
            break;
        }
        if diff > 0.0 {
            // too diffuse: sharpen
            beta_lo = beta;
            beta = if beta_hi.is_finite() {
                (beta + beta_hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            beta_hi = beta;
            beta = if beta_lo.is_finite() {
                (beta + beta_lo) / 2.0
            } else {
                beta / 2.0
            };
        }
    }
    let sigma = (1.0 / (2.0 * beta)).sqrt();
    Ok((sigma, p))
}

fn row_probabilities(sq_distances: &[f64], self_index: usize, beta: f64, out: &mut [f64]) {
    // subtract the row minimum before exponentiating for stability
    let min = sq_distances
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != self_index)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, &d) in sq_distances.iter().enumerate() {
        out[j] = if j == self_index {
            0.0
        } else {
            (-beta * (d - min)).exp()
        };
        sum += out[j];
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

/// Symmetrized, normalized affinities P from high-dimensional codes.
fn joint_affinities(codes: &[Vec<f64>], perplexity: f64) -> Result<Vec<Vec<f64>>> {
    let n = codes.len();
    let mut sq = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = codes[i]
                .iter()
                .zip(&codes[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sq[i][j] = d;
            sq[j][i] = d;
        }
    }
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let (_, row) = perplexity_calibration(&sq[i], i, perplexity)?;
        p[i] = row;
    }
    // P_ij = (p_{j|i} + p_{i|j}) / 2N, floored to keep KL finite
    let mut joint = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                joint[i][j] = ((p[i][j] + p[j][i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    Ok(joint)
}

/// Student-t numerators 1/(1 + d²) and their total.
fn q_numerators(y: &[[f64; 2]]) -> (Vec<Vec<f64>>, f64) {
    let n = y.len();
    let mut num = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i][j] = v;
            num[j][i] = v;
            total += 2.0 * v;
        }
    }
    (num, total)
}

/// KL(P ‖ Q) for the current embedding.
pub(crate) fn kl_divergence(p: &[Vec<f64>], y: &[[f64; 2]]) -> f64 {
    let (num, total) = q_numerators(y);
    let n = y.len();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[i][j] / total).max(1e-12);
                kl += p[i][j] * (p[i][j] / q).ln();
            }
        }
    }
    kl
}

/// Analytic t-SNE gradient: dKL/dy_i = 4 Σ_j (P_ij − Q_ij)·num_ij·(y_i − y_j).
pub(crate) fn kl_gradient(p: &[Vec<f64>], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let (num, total) = q_numerators(y);
    let n = y.len();
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = num[i][j] / total;
                let f = 4.0 * (p[i][j] - q) * num[i][j];
                grad[i][0] += f * (y[i][0] - y[j][0]);
                grad[i][1] += f * (y[i][1] - y[j][1]);
            }
        }
    }
    grad
}

pub fn tsne(codes: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding2D> {
    let n = codes.len();
    if n < 3 {
        return Err(EmbedError::TooFewPoints { needed: 3, got: n });
    }
    if config.iterations == 0 {
        return Err(EmbedError::Invalid("iterations must be ≥ 1".into()));
    }
    if config.perplexity >= n as f64 {
        return Err(EmbedError::PerplexityTooLarge {
            perplexity: config.perplexity,
            points: n,
        });
    }
    let dim = codes[0].len();
    for row in codes {
        if row.len() != dim {
            return Err(EmbedError::Invalid("ragged code matrix".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
    }
    if codes.iter().all(|row| row == &codes[0]) {
        return Err(EmbedError::Degenerate(
            "all input points are identical (zero variance)".into(),
        ));
    }

    let p = joint_affinities(codes, config.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(config.iterations);

    let mut p_eff = p.clone();
    for iter in 0..config.iterations {
        let exaggerating = iter < config.schedule_switch;
        let factor = if exaggerating { config.exaggeration } else { 1.0 };
        for i in 0..n {
            for j in 0..n {
                p_eff[i][j] = p[i][j] * factor;
            }
        }
        let grad = kl_gradient(&p_eff, &y);
        let momentum = if exaggerating {
            config.momentum_start
        } else {
            config.momentum_final
        };
        for i in 0..n {
            for d in 0..2 {
                velocity[i][d] = momentum * velocity[i][d] - config.learning_rate * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        kl_trace.push(kl_divergence(&p, &y));
    }

    if y.iter().any(|pt| !pt[0].is_finite() || !pt[1].is_finite()) {
        return Err(EmbedError::Degenerate("embedding diverged to non-finite".into()));
    }
    Ok(Embedding2D { points: y, kl_trace })
}

pub fn write_embedding_csv(embedding: &Embedding2D, path: &Path) -> Result<()> {
    let mut out = String::from("point_id,x,y\n");
    for (i, pt) in embedding.points.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", pt[0], pt[1]));
    }
    write_text(path, &out)
}

pub fn write_trace_csv(trace: &[f64], value_name: &str, path: &Path) -> Result<()> {
    let mut out = format!("iteration,{value_name}\n");
    for (i, v) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    write_text(path, &out)
}

pub fn write_assignments_csv(assignments: &[usize], path: &Path) -> Result<()> {
    let mut out = String::from("point_id,cluster\n");
    for (i, c) in assignments.iter().enumerate() {
        out.push_str(&format!("{i},{c}\n"));
    }
    write_text(path, &out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| EmbedError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(text.as_bytes()).map_err(|e| EmbedError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn equidistant_triple_splits_evenly() {
        // 3 mutually equidistant points: symmetry forces p = 0.5 each
        let (_, p) = perplexity_calibration(&[1.0, 0.0, 1.0], 1, 2.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9);
        assert!((p[2] - 0.5).abs() < 1e-9);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn single_neighbor_gets_everything() {
        let (_, p) = perplexity_calibration(&[0.0, 4.0], 0, 1.0).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn achieved_perplexity_matches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 2]> = (0..10).map(|_| [rng.gen(), rng.gen()]).collect();
        let sq: Vec<f64> = pts
            .iter()
            .map(|q| (q[0] - pts[0][0]).powi(2) + (q[1] - pts[0][1]).powi(2))
            .collect();
        let (_, p) = perplexity_calibration(&sq, 0, 5.0).unwrap();
        // recompute 2^entropy from the returned distribution
        let entropy: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
        assert!((entropy.exp2() - 5.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_distances_rejected() {
        assert!(matches!(
            perplexity_calibration(&[0.0, f64::NAN, 1.0], 0, 2.0),
            Err(EmbedError::NonFinite)
        ));
    }

    fn blob_codes(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut codes = Vec::new();
        let mut labels = Vec::new();
        for label in 0..2usize {
            for _ in 0..20 {
                let center = if label == 0 { 0.0 } else { 8.0 };
                codes.push((0..10).map(|_| center + noise.sample(&mut rng)).collect());
                labels.push(label);
            }
        }
        (codes, labels)
    }

    #[test]
    fn symmetrized_affinities_form_a_distribution() {
        let (codes, _) = blob_codes(1);
        let p = joint_affinities(&codes, 10.0).unwrap();
        let mut sum = 0.0;
        for row in &p {
            for &v in row {
                assert!(v >= 0.0);
                sum += v;
            }
        }
        assert!((sum - 1.0).abs() <= 1e-8, "P sums to {sum}");
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let codes: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let p = joint_affinities(&codes, 3.0).unwrap();
        let y: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
            .collect();
        let grad = kl_gradient(&p, &y);
        let h = 1e-6;
        for i in 0..n {
            for d in 0..2 {
                let mut plus = y.clone();
                plus[i][d] += h;
                let mut minus = y.clone();
                minus[i][d] -= h;
                let fd = (kl_divergence(&p, &plus) - kl_divergence(&p, &minus)) / (2.0 * h);
                let denom = fd.abs().max(grad[i][d].abs()).max(1e-8);
                assert!(
                    (grad[i][d] - fd).abs() / denom <= 1e-4,
                    "point {i} dim {d}: analytic {} vs fd {fd}",
                    grad[i][d]
                );
            }
        }
    }

    #[test]
    fn kl_keeps_descending_after_exaggeration() {
        let (codes, _) = blob_codes(2);
        let config = TsneConfig {
            perplexity: 10.0,
            iterations: 500,
            seed: 7,
            ..TsneConfig::default()
        };
        let emb = tsne(&codes, &config).unwrap();
        assert_eq!(emb.kl_trace.len(), 500);
        let at_switch = emb.kl_trace[config.schedule_switch - 1];
        let last = *emb.kl_trace.last().unwrap();
        assert!(
            last < at_switch,
            "final KL {last} not below end-of-exaggeration KL {at_switch}"
        );
    }

    #[test]
    fn separated_blobs_embed_with_high_neighbor_purity() {
        let (codes, labels) = blob_codes(4);
        let config = TsneConfig {
            perplexity: 10.0,
            iterations: 500,
            seed: 11,
            ..TsneConfig::default()
        };
        let emb = tsne(&codes, &config).unwrap();
        let mut pure = 0;
        for i in 0..codes.len() {
            let mut best = (f64::INFINITY, 0usize);
            for j in 0..codes.len() {
                if i == j {
                    continue;
                }
                let d = (emb.points[i][0] - emb.points[j][0]).powi(2)
                    + (emb.points[i][1] - emb.points[j][1]).powi(2);
                if d < best.0 {
                    best = (d, j);
                }
            }
            if labels[best.1] == labels[i] {
                pure += 1;
            }
        }
        let purity = pure as f64 / codes.len() as f64;
        assert!(purity >= 0.9, "1-NN purity {purity} below 0.9");
    }

    #[test]
    fn identical_points_rejected() {
        let codes = vec![vec![1.0, 2.0]; 10];
        assert!(matches!(
            tsne(&codes, &TsneConfig { perplexity: 3.0, ..TsneConfig::default() }),
            Err(EmbedError::Degenerate(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let (codes, _) = blob_codes(6);
        let config = TsneConfig {
            perplexity: 8.0,
            iterations: 100,
            seed: 9,
            ..TsneConfig::default()
        };
        let a = tsne(&codes, &config).unwrap();
        let b = tsne(&codes, &config).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.kl_trace, b.kl_trace);
    }
}
