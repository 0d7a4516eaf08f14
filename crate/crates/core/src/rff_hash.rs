//! Random Fourier features for the correlation-form RBF kernel, plain and
//! normalized (NRFF).
//!
//! Feature `j` of a unit vector `u` is `sqrt(2) cos(sqrt(gamma) <u, r_j> + w_j)`
//! with `r_j` standard normal per coordinate and `w_j` uniform on `[0, 2 pi)`,
//! all drawn from the counter-based stream keyed by `(master_seed, j, coordinate)`.
//! With normalization on, the `k` features are divided by their l2 norm so the
//! inner product of two feature vectors is the ratio estimator `Z_k`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{check_domain, Error, Result};
use crate::kernels::UNIT_NORM_TOL;
use crate::rng::{domain, StreamKey};
use crate::vectors::{SparseVector, VectorView};

/// Counter slot of the phase `w_j`, outside any coordinate index.
const PHASE_COORDINATE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RffConfig {
    pub k: usize,
    pub gamma: f64,
    pub master_seed: u64,
    /// On: NRFF. Off: plain RFF.
    pub normalize: bool,
}

impl RffConfig {
    pub fn new(k: usize, gamma: f64, master_seed: u64) -> Result<Self> {
        let cfg = RffConfig {
            k,
            gamma,
            master_seed,
            normalize: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_normalize(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        check_domain("gamma", self.gamma, self.gamma > 0.0, "(0, inf)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RffFeatures {
    values: Vec<f64>,
    config: RffConfig,
}

impl RffFeatures {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn config(&self) -> &RffConfig {
        &self.config
    }

    pub fn to_sparse(&self) -> SparseVector {
        SparseVector::from_dense(&self.values).expect("features are finite")
    }
}

/// `sqrt(2) cos(sqrt(gamma) x + w)` for a projection `x` and phase `w`.
#[inline]
pub fn fourier_feature(projection: f64, phase: f64, gamma: f64) -> f64 {
    SQRT_2 * (gamma.sqrt() * projection + phase).cos()
}

/// Phase `w_j` of sample `j`.
pub fn phase(master_seed: u64, sample_index: usize) -> f64 {
    2.0 * PI
        * StreamKey::new(master_seed, domain::RFF)
            .with(sample_index as u64)
            .with(PHASE_COORDINATE)
            .open_unit(0)
}

/// Gaussian projection weight `r_ij`.
pub fn projection_weight(master_seed: u64, sample_index: usize, coordinate: usize) -> f64 {
    StreamKey::new(master_seed, domain::RFF)
        .with(sample_index as u64)
        .with(coordinate as u64)
        .std_normal(0)
}

pub fn rff_features<V: VectorView>(u: &V, config: &RffConfig) -> Result<RffFeatures> {
    config.validate()?;
    let norm = u.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::NotUnitNorm { norm });
    }
    let nz: Vec<(usize, f64)> = u.nonzeros().collect();
    let root = StreamKey::new(config.master_seed, domain::RFF);
    let mut values: Vec<f64> = (0..config.k)
        .map(|j| {
            let key = root.with(j as u64);
            let x: f64 = nz.iter().map(|&(i, ui)| ui * key.with(i as u64).std_normal(0)).sum();
            let w = 2.0 * PI * key.with(PHASE_COORDINATE).open_unit(0);
            fourier_feature(x, w, config.gamma)
        })
        .collect();
    if config.normalize {
        let n = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::DegenerateFeatures);
        }
        values.iter_mut().for_each(|x| *x /= n);
    }
    Ok(RffFeatures {
        values,
        config: *config,
    })
}

/// RBF estimate from two feature vectors built with the same configuration.
///
/// Normalized: the cosine of the two vectors, i.e. `Z_k`. Plain: the mean of
/// the products `X_j Y_j`.
pub fn estimate_rbf(fu: &RffFeatures, fv: &RffFeatures) -> Result<f64> {
    if fu.config != fv.config {
        return Err(Error::SketchMismatch("feature configurations differ".into()));
    }
    let xy: f64 = fu.values.iter().zip(&fv.values).map(|(x, y)| x * y).sum();
    if fu.config.normalize {
        let xx: f64 = fu.values.iter().map(|x| x * x).sum();
        let yy: f64 = fv.values.iter().map(|y| y * y).sum();
        Ok(xy / (xx * yy).sqrt())
    } else {
        Ok(xy / fu.config.k as f64)
    }
}
