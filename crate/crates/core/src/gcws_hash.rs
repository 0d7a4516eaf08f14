//! Generalized consistent weighted sampling (GCWS).
//!
//! A vector is sign-split into a nonnegative vector, then each of `k`
//! independent consistent weighted samples picks one coordinate `i*` together
//! with an integer `t*`. Two vectors collide on `(i*, t*)` with probability
//! equal to their GMM similarity. For learning, only the lowest `b` bits of
//! `i*` are kept and expanded into a one-hot block of width `2^b`.
//!
//! Randomness for sample `j` at coordinate `i` is a pure function of
//! `(master_seed, j, i)`, so sketches of different vectors are consistent
//! without storing any random matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{domain, StreamKey};
use crate::vectors::{SparseVector, TransformedVector};

/// Work size (samples x nonzeros) above which sample indices are spread
/// over the thread pool.
const PAR_SKETCH_WORK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcwsConfig {
    pub k: usize,
    pub b: u32,
    pub master_seed: u64,
    pub normalize_output: bool,
}

impl GcwsConfig {
    pub fn new(k: usize, b: u32, master_seed: u64) -> Result<Self> {
        let cfg = GcwsConfig {
            k,
            b,
            master_seed,
            normalize_output: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_normalize_output(mut self, on: bool) -> Self {
        self.normalize_output = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(1..=16).contains(&self.b) {
            return Err(Error::InvalidConfig(format!("b = {} is outside [1, 16]", self.b)));
        }
        Ok(())
    }

    /// Width of the encoded feature space, `k * 2^b`.
    pub fn encoded_dim(&self) -> usize {
        self.k << self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GcwsSample {
    pub i_star: usize,
    pub t_star: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcwsSketch {
    samples: Vec<GcwsSample>,
    master_seed: u64,
}

impl GcwsSketch {
    pub fn samples(&self) -> &[GcwsSample] {
        &self.samples
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The first `k` samples; equal to sketching with a smaller `k`.
    pub fn prefix(&self, k: usize) -> GcwsSketch {
        GcwsSketch {
            samples: self.samples[..k.min(self.samples.len())].to_vec(),
            master_seed: self.master_seed,
        }
    }
}

/// The per-coordinate random variables of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwsDraws {
    /// Gamma(2, 1)
    pub r: f64,
    /// Gamma(2, 1)
    pub c: f64,
    /// Uniform(0, 1)
    pub beta: f64,
}

#[inline]
pub fn coordinate_draws(master_seed: u64, sample_index: usize, coordinate: usize) -> CwsDraws {
    let key = StreamKey::new(master_seed, domain::GCWS)
        .with(sample_index as u64)
        .with(coordinate as u64);
    draws_at(key)
}

#[inline]
fn draws_at(key: StreamKey) -> CwsDraws {
    CwsDraws {
        r: key.gamma2(0),
        c: key.gamma2(2),
        beta: key.open_unit(4),
    }
}

/// One consistent weighted sample of a nonnegative vector.
pub fn gcws_sample(tv: &TransformedVector, sample_index: usize, master_seed: u64) -> Result<GcwsSample> {
    if tv.is_empty() {
        return Err(Error::ZeroVector);
    }
    let key = StreamKey::new(master_seed, domain::GCWS).with(sample_index as u64);
    Ok(sample_with_key(tv, key))
}

fn sample_with_key(tv: &TransformedVector, key: StreamKey) -> GcwsSample {
    let mut best: Option<(f64, GcwsSample)> = None;
    for (i, weight) in tv.entries() {
        let CwsDraws { r, c, beta } = draws_at(key.with(i as u64));
        let t = (weight.ln() / r + beta).floor();
        let a = c.ln() - r * (t + 1.0 - beta);
        // entries are in increasing index order; strict `<` keeps the smallest index on ties
        if best.is_none_or(|(a_min, _)| a < a_min) {
            best = Some((
                a,
                GcwsSample {
                    i_star: i,
                    t_star: t as i64,
                },
            ));
        }
    }
    best.expect("nonempty vector").1
}

/// `k` samples, `j = 0..k`.
pub fn sketch(tv: &TransformedVector, config: &GcwsConfig) -> Result<GcwsSketch> {
    config.validate()?;
    if tv.is_empty() {
        return Err(Error::ZeroVector);
    }
    let root = StreamKey::new(config.master_seed, domain::GCWS);
    let one = |j: usize| sample_with_key(tv, root.with(j as u64));
    let samples = if config.k.saturating_mul(tv.nnz()) >= PAR_SKETCH_WORK {
        (0..config.k).into_par_iter().map(one).collect()
    } else {
        (0..config.k).map(one).collect()
    };
    Ok(GcwsSketch {
        samples,
        master_seed: config.master_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Collision on both `i*` and `t*`.
    Full,
    /// Collision on `i*` only.
    ZeroBit,
}

fn check_compatible(sa: &GcwsSketch, sb: &GcwsSketch) -> Result<()> {
    if sa.k() != sb.k() {
        return Err(Error::SketchMismatch(format!("k differs ({} vs {})", sa.k(), sb.k())));
    }
    if sa.master_seed != sb.master_seed {
        return Err(Error::SketchMismatch("master seeds differ".into()));
    }
    if sa.k() == 0 {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Collision rate, the GMM estimate.
pub fn estimate_gmm(sa: &GcwsSketch, sb: &GcwsSketch, mode: MatchMode) -> Result<f64> {
    check_compatible(sa, sb)?;
    let hits = sa
        .samples
        .iter()
        .zip(&sb.samples)
        .filter(|(x, y)| match mode {
            MatchMode::Full => x == y,
            MatchMode::ZeroBit => x.i_star == y.i_star,
        })
        .count();
    Ok(hits as f64 / sa.k() as f64)
}

/// Number of samples whose `i*` agree on the lowest `b` bits.
pub fn low_bit_matches(sa: &GcwsSketch, sb: &GcwsSketch, b: u32) -> Result<usize> {
    check_compatible(sa, sb)?;
    let mask = (1usize << b) - 1;
    Ok(sa
        .samples
        .iter()
        .zip(&sb.samples)
        .filter(|(x, y)| x.i_star & mask == y.i_star & mask)
        .count())
}

/// One-hot b-bit encoding: `k` blocks of width `2^b`, one nonzero per block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeatures {
    total_dim: usize,
    positions: Vec<usize>,
    value: f64,
}

impl EncodedFeatures {
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dim];
        for &p in &self.positions {
            out[p] = self.value;
        }
        out
    }

    pub fn to_sparse(&self) -> SparseVector {
        SparseVector::new(self.total_dim, self.positions.iter().map(|&p| (p, self.value)))
            .expect("block positions are increasing")
    }
}

/// Sample `j` with low bits `v = i* mod 2^b` sets position `j 2^b + (2^b - 1 - v)`.
pub fn encode(sk: &GcwsSketch, config: &GcwsConfig) -> EncodedFeatures {
    let width = 1usize << config.b;
    let mask = width - 1;
    let positions = sk
        .samples
        .iter()
        .enumerate()
        .map(|(j, s)| j * width + (mask - (s.i_star & mask)))
        .collect();
    let value = if config.normalize_output {
        1.0 / (sk.k() as f64).sqrt()
    } else {
        1.0
    };
    EncodedFeatures {
        total_dim: sk.k() * width,
        positions,
        value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::gmm;
    use crate::vectors::{transform, CenterVector, DenseVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tv(x: &[f64]) -> TransformedVector {
        transform(&DenseVector::new(x.to_vec()).unwrap(), &CenterVector::zeros(x.len())).unwrap()
    }

    fn sk(samples: &[usize]) -> GcwsSketch {
        GcwsSketch {
            samples: samples.iter().map(|&i| GcwsSample { i_star: i, t_star: 0 }).collect(),
            master_seed: 0,
        }
    }

    #[test]
    fn single_nonzero_always_selected() {
        // dense [0, 0, -4] -> transformed index 5
        let t = tv(&[0.0, 0.0, -4.0]);
        for j in 0..200 {
            assert_eq!(gcws_sample(&t, j, 11).unwrap().i_star, 5);
        }
    }

    #[test]
    fn zero_vector_rejected() {
        let err = gcws_sample(&tv(&[0.0, 0.0]), 0, 1).unwrap_err();
        assert_eq!(err.to_string(), "cannot hash zero vector");
        let cfg = GcwsConfig::new(4, 2, 1).unwrap();
        assert!(matches!(sketch(&tv(&[0.0]), &cfg), Err(Error::ZeroVector)));
    }

    #[test]
    fn config_validation() {
        assert!(GcwsConfig::new(0, 4, 0).is_err());
        assert!(GcwsConfig::new(8, 0, 0).is_err());
        assert!(GcwsConfig::new(8, 17, 0).is_err());
        assert_eq!(GcwsConfig::new(8, 16, 0).unwrap().encoded_dim(), 8 << 16);
    }

    #[test]
    fn sketch_deterministic_and_seed_sensitive() {
        let t = tv(&[-5.0, 3.0, 0.5, 1.0]);
        let cfg = GcwsConfig::new(1, 4, 3).unwrap();
        assert_eq!(sketch(&t, &cfg).unwrap().k(), 1);
        let cfg = GcwsConfig::new(64, 4, 3).unwrap();
        let a = sketch(&t, &cfg).unwrap();
        assert_eq!(a, sketch(&t, &cfg).unwrap());
        assert_eq!(
            estimate_gmm(&a, &sketch(&t, &cfg).unwrap(), MatchMode::Full).unwrap(),
            1.0
        );

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..100u64 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = tv(&x);
            let c1 = GcwsConfig::new(16, 4, s).unwrap();
            let c2 = GcwsConfig::new(16, 4, s + 1).unwrap();
            assert_ne!(sketch(&t, &c1).unwrap().samples, sketch(&t, &c2).unwrap().samples);
        }
    }

    #[test]
    fn parallel_and_sequential_paths_agree() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let t = tv(&x);
        let big = GcwsConfig::new(1024, 8, 9).unwrap();
        let par = sketch(&t, &big).unwrap();
        let seq: Vec<GcwsSample> = (0..1024).map(|j| gcws_sample(&t, j, 9).unwrap()).collect();
        assert_eq!(par.samples(), &seq[..]);
        assert_eq!(par.prefix(10).samples(), &seq[..10]);
    }

    #[test]
    fn randomness_depends_only_on_seed_sample_coordinate() {
        // two different vectors sharing coordinate 2 see the same draws there
        let a = coordinate_draws(5, 17, 2);
        assert_eq!(a, coordinate_draws(5, 17, 2));
        assert_ne!(a, coordinate_draws(5, 17, 3));
        assert_ne!(a, coordinate_draws(5, 18, 2));
        assert!(a.r > 0.0 && a.c > 0.0 && a.beta > 0.0 && a.beta < 1.0);
        // a vector with only coordinate 2 (dense index 1, positive) agrees on
        // (i*, t*) with the direct evaluation of the algorithm on those draws
        let t = tv(&[0.0, 2.5]);
        let s = gcws_sample(&t, 17, 5).unwrap();
        assert_eq!(s.i_star, 2);
        assert_eq!(s.t_star, ((2.5f64).ln() / a.r + a.beta).floor() as i64);
    }

    #[test]
    fn identical_vectors_collide_everywhere() {
        let t = tv(&[1.0, -2.0, 0.25]);
        for j in 0..100 {
            assert_eq!(gcws_sample(&t, j, 77).unwrap(), gcws_sample(&t.clone(), j, 77).unwrap());
        }
    }

    #[test]
    fn collision_rate_matches_gmm_example() {
        // gmm([-5,3],[2,3]) = 0.3
        let (u, v) = ([-5.0, 3.0], [2.0, 3.0]);
        let g = gmm(
            &DenseVector::new(u.to_vec()).unwrap(),
            &DenseVector::new(v.to_vec()).unwrap(),
            &CenterVector::zeros(2),
        )
        .unwrap();
        let k = 100_000;
        let cfg = GcwsConfig::new(k, 8, 2024).unwrap();
        let (a, b) = (sketch(&tv(&u), &cfg).unwrap(), sketch(&tv(&v), &cfg).unwrap());
        let rate = estimate_gmm(&a, &b, MatchMode::Full).unwrap();
        assert!((rate - g).abs() <= 3.0 * (g * (1.0 - g) / k as f64).sqrt(), "{rate}");

        let k = 10_000;
        let cfg = GcwsConfig::new(k, 8, 99).unwrap();
        let (a, b) = (sketch(&tv(&u), &cfg).unwrap(), sketch(&tv(&v), &cfg).unwrap());
        let est = estimate_gmm(&a, &b, MatchMode::Full).unwrap();
        assert!((est - 0.3).abs() <= 0.014, "{est}");
        assert!(estimate_gmm(&a, &b, MatchMode::ZeroBit).unwrap() >= est);
    }

    #[test]
    fn disjoint_supports_never_collide() {
        let cfg = GcwsConfig::new(2000, 4, 8).unwrap();
        let a = sketch(&tv(&[1.0, 0.0, 2.0]), &cfg).unwrap();
        let b = sketch(&tv(&[-1.0, 3.0, 0.0]), &cfg).unwrap();
        assert_eq!(estimate_gmm(&a, &b, MatchMode::Full).unwrap(), 0.0);
        assert_eq!(estimate_gmm(&a, &b, MatchMode::ZeroBit).unwrap(), 0.0);
    }

    #[test]
    fn estimate_rejects_mismatched_sketches() {
        let t = tv(&[1.0, 2.0]);
        let a = sketch(&t, &GcwsConfig::new(8, 4, 1).unwrap()).unwrap();
        let b = sketch(&t, &GcwsConfig::new(9, 4, 1).unwrap()).unwrap();
        let c = sketch(&t, &GcwsConfig::new(8, 4, 2).unwrap()).unwrap();
        assert!(matches!(
            estimate_gmm(&a, &b, MatchMode::Full),
            Err(Error::SketchMismatch(_))
        ));
        assert!(matches!(
            estimate_gmm(&a, &c, MatchMode::ZeroBit),
            Err(Error::SketchMismatch(_))
        ));
    }

    #[test]
    fn uniform_over_equal_weights() {
        // m equal nonzeros: i* is uniform. Chi-square at significance 0.001.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let m = 8;
        let t = tv(&vec![1.7; m]);
        let k = 100_000;
        let s = sketch(&t, &GcwsConfig::new(k, 8, 31).unwrap()).unwrap();
        let mut counts = vec![0usize; 2 * m];
        for x in s.samples() {
            counts[x.i_star] += 1;
        }
        let expected = k as f64 / m as f64;
        let chi2: f64 = (0..m)
            .map(|i| {
                assert_eq!(counts[2 * i + 1], 0);
                (counts[2 * i] as f64 - expected).powi(2) / expected
            })
            .sum();
        let crit = ChiSquared::new((m - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn collision_law_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = 2048;
        let trials = 200;
        let mut inside = 0;
        for trial in 0..trials {
            let d = 2 + trial % 9;
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = u.iter().map(|x| x + rng.random_range(-0.6..0.6)).collect();
            let g = gmm(
                &DenseVector::new(u.clone()).unwrap(),
                &DenseVector::new(v.clone()).unwrap(),
                &CenterVector::zeros(d),
            )
            .unwrap();
            let cfg = GcwsConfig::new(k, 8, 1000 + trial as u64).unwrap();
            let rate = estimate_gmm(
                &sketch(&tv(&u), &cfg).unwrap(),
                &sketch(&tv(&v), &cfg).unwrap(),
                MatchMode::Full,
            )
            .unwrap();
            if (rate - g).abs() <= 4.0 * (g * (1.0 - g) / k as f64).sqrt() {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * trials as f64, "{inside}/{trials}");
    }

    #[test]
    fn i_star_under_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let k = 4096;
        for c in [0.1, 10.0] {
            let u: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cu: Vec<f64> = u.iter().map(|x| x * c).collect();
            let cfg = GcwsConfig::new(k, 8, 5).unwrap();
            let (a, b) = (sketch(&tv(&u), &cfg).unwrap(), sketch(&tv(&cu), &cfg).unwrap());
            let zero_bit = estimate_gmm(&a, &b, MatchMode::ZeroBit).unwrap();
            let full = estimate_gmm(&a, &b, MatchMode::Full).unwrap();
            // gmm(u, c u) = 0.1 for both scales
            assert!((full - 0.1).abs() <= 4.0 * (0.09 / k as f64).sqrt(), "full {full}");
            // i* moves, but agrees far more often than two independent draws
            let l1: f64 = u.iter().map(|x| x.abs()).sum();
            let independent: f64 = u.iter().map(|x| (x.abs() / l1).powi(2)).sum();
            assert!(zero_bit > independent + 0.1, "zero-bit {zero_bit} vs {independent}");
            assert!(zero_bit < 0.9, "zero-bit {zero_bit}");
        }
    }

    #[test]
    fn encode_examples() {
        let cfg = GcwsConfig::new(1, 2, 0).unwrap().with_normalize_output(false);
        assert_eq!(encode(&sk(&[3]), &cfg).to_dense(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(encode(&sk(&[0]), &cfg).to_dense(), vec![0.0, 0.0, 0.0, 1.0]);
        // only the low bits matter
        assert_eq!(encode(&sk(&[7]), &cfg).positions(), &[0]);

        let cfg = GcwsConfig::new(2, 2, 0).unwrap();
        let e = encode(&sk(&[3, 0]), &cfg);
        assert_eq!(e.total_dim(), 8);
        assert_eq!(e.positions(), &[0, 7]);
        assert_eq!(e.value(), 1.0 / 2f64.sqrt());
        let s = e.to_sparse();
        assert!((crate::vectors::VectorView::norm(&s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn encoded_inner_product_counts_low_bit_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for b in [1, 2, 4, 8] {
            let u: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = u.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect();
            let cfg = GcwsConfig::new(300, b, 6).unwrap();
            let (a, bb) = (sketch(&tv(&u), &cfg).unwrap(), sketch(&tv(&v), &cfg).unwrap());
            let ea = encode(&a, &cfg).to_sparse();
            let eb = encode(&bb, &cfg).to_sparse();
            let ip = crate::vectors::dot(&ea, &eb).unwrap();
            let m = low_bit_matches(&a, &bb, b).unwrap();
            // sums of 1/k terms are exact only up to round-off
            assert!((ip - m as f64 / 300.0).abs() < 1e-12);
            assert!(m as f64 / 300.0 >= estimate_gmm(&a, &bb, MatchMode::ZeroBit).unwrap());
        }
    }
}
