//! Lloyd's k-means with k-means++ seeding, empty-cluster repair, and
//! majority-mapping accuracy against clinical labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbedError, Result};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

const MAX_ITERS: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, subsequent ones with
/// probability proportional to squared distance from the nearest chosen.
fn seed_centroids(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(vectors[rng.gen_range(0..n)].clone());
    let mut dist: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(vectors[pick].clone());
        for (i, v) in vectors.iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(v, centroids.last().unwrap()));
        }
    }
    centroids
}

pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    let n = vectors.len();
    if n == 0 || k == 0 {
        return Err(EmbedError::Invalid("need at least one point and one cluster".into()));
    }
    if k > n {
        return Err(EmbedError::KTooLarge { k, points: n });
    }
    let dim = vectors[0].len();
    for v in vectors {
        if v.len() != dim {
            return Err(EmbedError::Invalid("ragged input matrix".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(vectors, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut previous_inertia = f64::INFINITY;
    let mut iterations = 0;
    loop {
        // assignment step
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let (c, d) = nearest(v, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            inertia += d;
        }
        assert!(
            inertia <= previous_inertia * (1.0 + 1e-12) + 1e-12,
            "k-means inertia increased: {previous_inertia} -> {inertia}"
        );
        previous_inertia = inertia;
        if (!changed && iterations > 0) || iterations >= MAX_ITERS {
            return Ok(KMeansResult {
                centroids,
                assignments,
                inertia,
                iterations,
            });
        }
        iterations += 1;

        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, v) in vectors.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, x) in sums[assignments[i]].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (s, out) in sums[c].iter().zip(centroids[c].iter_mut()) {
                    *out = s / counts[c] as f64;
                }
            }
        }
        // empty-cluster repair: steal the farthest point from the largest
        for c in 0..k {
            if counts[c] == 0 {
                let largest = (0..k).max_by_key(|&j| counts[j]).unwrap();
                let victim = (0..n)
                    .filter(|&i| assignments[i] == largest)
                    .max_by(|&a, &b| {
                        sq_dist(&vectors[a], &centroids[largest])
                            .total_cmp(&sq_dist(&vectors[b], &centroids[largest]))
                    })
                    .unwrap();
                centroids[c] = vectors[victim].clone();
                counts[c] += 1;
                counts[largest] -= 1;
                // centroid move can raise the distance sum transiently
                previous_inertia = f64::INFINITY;
            }
        }
    }
}

/// Best of `restarts` independent seeded runs by inertia.
pub fn kmeans_restarts(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    if restarts == 0 {
        return Err(EmbedError::Invalid("need at least one restart".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts {
        let run = kmeans(vectors, k, seed.wrapping_add(r as u64))?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Accuracy of cluster assignments against true labels under the best
/// one-to-one mapping of cluster ids to label values. With two clusters and
/// two labels this is the max over the two possible bijections; ties in a
/// cluster's majority label resolve toward whichever mapping scores higher.
pub fn cluster_label_accuracy(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.is_empty() {
        return Err(EmbedError::Invalid("empty input".into()));
    }
    if assignments.len() != labels.len() {
        return Err(EmbedError::Invalid(format!(
            "{} assignments vs {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    let mut clusters: Vec<usize> = assignments.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut distinct_labels: Vec<usize> = labels.to_vec();
    distinct_labels.sort_unstable();
    distinct_labels.dedup();
    if clusters.len() != distinct_labels.len() {
        return Err(EmbedError::Invalid(format!(
            "{} clusters cannot be bijectively mapped onto {} labels",
            clusters.len(),
            distinct_labels.len()
        )));
    }
    if clusters.len() > 8 {
        return Err(EmbedError::Invalid("more than 8 clusters unsupported".into()));
    }

    // contingency counts: cluster index × label index
    let k = clusters.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        let ci = clusters.iter().position(|&c| c == a).unwrap();
        let li = distinct_labels.iter().position(|&v| v == l).unwrap();
        counts[ci][li] += 1;
    }

    // exhaustive max over bijections (k ≤ 8)
    fn best_matching(counts: &[Vec<usize>], used: &mut Vec<bool>, row: usize) -> usize {
        if row == counts.len() {
            return 0;
        }
        let mut best = 0;
        for col in 0..counts.len() {
            if !used[col] {
                used[col] = true;
                best = best.max(counts[row][col] + best_matching(counts, used, row + 1));
                used[col] = false;
            }
        }
        best
    }
    let mut used = vec![false; k];
    let correct = best_matching(&counts, &mut used, 0);
    Ok(correct as f64 / assignments.len() as f64)
}
