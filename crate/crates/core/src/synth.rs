//! Synthetic two-class data with a nonlinear decision boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};

use crate::dataio::Dataset;
use crate::vectors::SparseVector;

/// Number of prototype pairs; pair `p` belongs to class `+1` when `p` is even.
const PAIRS: usize = 4;

/// Signed-coordinate mixture: rows are drawn around `+p` or `-p` for one of
/// a few sparse prototypes `p`, with a heavy-tailed per-coordinate scale and
/// Gaussian noise. The label depends on the prototype but not on the sign, so
/// both classes are symmetric under negation and no linear rule separates
/// them.
pub fn signed_mixture(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let magnitude = Exp::new(1.0).expect("valid rate");
    let support = (dim / 3).max(1);
    let prototypes: Vec<Vec<f64>> = (0..PAIRS)
        .map(|_| {
            let mut p = vec![0.0; dim];
            for _ in 0..support {
                let i = rng.random_range(0..dim);
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                p[i] = s * (0.5 + magnitude.sample(&mut rng));
            }
            p
        })
        .collect();
    let scale = LogNormal::new(0.0, 0.5).expect("valid sigma");
    let noise = Normal::new(0.0, 0.5).expect("valid sigma");
    let rows = (0..n)
        .map(|_| {
            let pair = rng.random_range(0..PAIRS);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let x: Vec<f64> = prototypes[pair]
                .iter()
                .map(|&p| sign * p * scale.sample(&mut rng) + noise.sample(&mut rng))
                .collect();
            let label = if pair % 2 == 0 { 1.0 } else { -1.0 };
            (label, SparseVector::from_dense(&x).expect("finite"))
        })
        .collect();
    Dataset::with_dim(rows, dim).expect("rows have the dataset dimension")
}

/// Deterministic split: every `round(1 / test_fraction)`-th row goes to test.
pub fn interleaved_split(ds: &Dataset, test_fraction: f64) -> (Dataset, Dataset) {
    let every = (1.0 / test_fraction.clamp(1e-9, 1.0)).round().max(1.0) as usize;
    let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|i| i % every == every - 1);
    (ds.select(&train), ds.select(&test))
}
