//! Two-level k-means codebook training.
//!
//! The training vectors are first split into `K` coarse clusters, one per
//! basis codebook; each codebook is then fit to its own cluster with
//! k-means++ seeding followed by Lloyd iterations. Assignment steps run in
//! parallel, centroid sums are reduced sequentially in point order, so the
//! result depends only on the data and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BasisCodebooks, Codebook};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    /// Number of basis codebooks, `K`.
    pub books: usize,
    /// Codewords per codebook.
    pub size: usize,
    pub seed: u64,
    /// Upper bound on Lloyd iterations per k-means run.
    pub max_iters: usize,
}

impl TrainConfig {
    pub fn new(books: usize, size: usize, seed: u64) -> Self {
        TrainConfig { books, size, seed, max_iters: 30 }
    }
}

/// Trains `cfg.books` codebooks of `cfg.size` codewords on `data`, a flat
/// list of `dim`-dimensional vectors.
pub fn train_codebooks(data: &[f64], dim: usize, cfg: &TrainConfig) -> Result<BasisCodebooks> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::invalid("training data is not a whole number of vectors"));
    }
    if !cfg.books.is_power_of_two() || cfg.books > 128 {
        return Err(Error::invalid(format!("codebook count {} must be a power of two <= 128", cfg.books)));
    }
    if !cfg.size.is_power_of_two() || cfg.size > 1 << 16 {
        return Err(Error::invalid(format!("codebook size {} must be a power of two <= 65536", cfg.size)));
    }
    let count = data.len() / dim;
    if count < cfg.books * cfg.size {
        return Err(Error::invalid(format!(
            "{count} training vectors cannot fit {} codebooks of {} codewords",
            cfg.books, cfg.size
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let partition =
        if cfg.books == 1 { vec![0; count] } else { kmeans(data, dim, cfg.books, cfg.max_iters, &mut rng).assignment };

    let mut books = Vec::with_capacity(cfg.books);
    for k in 0..cfg.books {
        let members: Vec<f64> = data
            .chunks_exact(dim)
            .zip(&partition)
            .filter(|(_, &p)| p == k)
            .flat_map(|(v, _)| v.iter().copied())
            .collect();
        // A coarse cluster can only end up empty on degenerate data.
        let points = if members.is_empty() { data } else { &members };
        let fit = kmeans(points, dim, cfg.size, cfg.max_iters, &mut rng);
        books.push(Codebook::new(dim, fit.centroids.iter().map(|&v| v as f32).collect())?);
    }
    BasisCodebooks::new(books)
}

pub(crate) struct KMeans {
    pub centroids: Vec<f64>,
    pub assignment: Vec<usize>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn assign(points: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_chunks(dim)
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.chunks_exact(dim).enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

fn kmeans_plus_plus(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let first = rng.gen_range(0..n);
    let mut centroids = point(first).to_vec();
    let mut d2: Vec<f64> = points.par_chunks(dim).map(|p| sq_dist(p, point(first))).collect();

    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    acc += d;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every point already coincides with a centroid
            j % n
        };
        let c = point(next).to_vec();
        d2.par_iter_mut().zip(points.par_chunks(dim)).for_each(|(d, p)| *d = d.min(sq_dist(p, &c)));
        centroids.extend_from_slice(&c);
    }
    centroids
}

pub(crate) fn kmeans(points: &[f64], dim: usize, k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let centroids = kmeans_plus_plus(points, dim, k, rng);
    lloyd(points, dim, centroids, max_iters)
}

fn lloyd(points: &[f64], dim: usize, mut centroids: Vec<f64>, max_iters: usize) -> KMeans {
    let n = points.len() / dim;
    let k = centroids.len() / dim;
    let (mut assignment, mut dists) = assign(points, dim, &centroids);

    for _ in 0..max_iters {
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.chunks_exact(dim).zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            let c = &mut centroids[j * dim..(j + 1) * dim];
            if counts[j] == 0 {
                // reseed from the point farthest from its centroid
                let mut far = 0;
                for i in 1..n {
                    if dists[i] > dists[far] {
                        far = i;
                    }
                }
                c.copy_from_slice(&points[far * dim..(far + 1) * dim]);
                dists[far] = 0.0;
            } else {
                let count = counts[j] as f64;
                for (c, s) in c.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *c = s / count;
                }
            }
        }
        let (next, next_dists) = assign(points, dim, &centroids);
        let converged = next == assignment;
        assignment = next;
        dists = next_dists;
        if converged {
            break;
        }
    }
    KMeans { centroids, assignment }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters() -> Vec<f64> {
        let mut data = Vec::new();
        for _ in 0..100 {
            data.extend_from_slice(&[0.0, 0.0]);
        }
        for _ in 0..100 {
            data.extend_from_slice(&[10.0, 10.0]);
        }
        data
    }

    #[test]
    fn recovers_two_cluster_means() {
        let books = train_codebooks(&two_clusters(), 2, &TrainConfig::new(1, 2, 7)).unwrap();
        let mut words: Vec<Vec<f32>> = books.book(0).codewords().map(<[f32]>::to_vec).collect();
        words.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((words[0][0] - 0.0).abs() < 1e-9 && (words[0][1] - 0.0).abs() < 1e-9);
        assert!((words[1][0] - 10.0).abs() < 1e-9 && (words[1][1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn single_codeword_is_the_mean() {
        let data: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let books = train_codebooks(&data, 3, &TrainConfig::new(1, 1, 0)).unwrap();
        for d in 0..3 {
            let mean = data.iter().skip(d).step_by(3).sum::<f64>() / 10.0;
            assert!((f64::from(books.book(0).codeword(0)[d]) - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_codebooks() {
        let data: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1013) as f64 / 1013.0).collect();
        let cfg = TrainConfig::new(4, 8, 42);
        let a = train_codebooks(&data, 4, &cfg).unwrap();
        let b = train_codebooks(&data, 4, &cfg).unwrap();
        let bits = |bc: &BasisCodebooks| -> Vec<u32> {
            bc.books().iter().flat_map(|b| b.as_slice().iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));

        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = one.install(|| train_codebooks(&data, 4, &cfg).unwrap());
        assert_eq!(bits(&a), bits(&c));
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = two_clusters();
        assert!(train_codebooks(&data, 2, &TrainConfig::new(3, 2, 0)).is_err());
        assert!(train_codebooks(&data, 2, &TrainConfig::new(1, 3, 0)).is_err());
        assert!(train_codebooks(&data, 2, &TrainConfig::new(2, 128, 0)).is_err());
        assert!(train_codebooks(&data[..3], 2, &TrainConfig::new(1, 1, 0)).is_err());
    }

    #[test]
    fn duplicate_heavy_data_still_trains() {
        // four distinct points, eight codewords requested per book
        let mut data = Vec::new();
        for i in 0..16 {
            data.push((i % 4) as f64);
        }
        let books = train_codebooks(&data, 1, &TrainConfig::new(2, 8, 3)).unwrap();
        assert_eq!(books.sizes(), vec![8, 8]);
        for b in books.books() {
            for c in b.codewords() {
                assert!((0.0..=3.0).contains(&c[0]));
            }
        }
    }

    #[test]
    fn empty_cluster_is_reseeded_from_farthest_point() {
        // the second centroid starts with no members and must move to 2.0,
        // the point farthest from its assigned centroid
        let fit = lloyd(&[0.0, 1.0, 2.0], 1, vec![0.0, 100.0], 10);
        assert_eq!(fit.centroids, vec![0.5, 2.0]);
        assert_eq!(fit.assignment, vec![0, 0, 1]);
    }
}
