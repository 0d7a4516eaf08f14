//! Monte Carlo harness for the kernel estimators.
//!
//! Each repetition derives its randomness from `(master_seed, rep_index)`, so
//! repetitions run on any number of threads and are then folded in rep order:
//! the statistics are bit-identical whatever the pool size. Within a
//! repetition, estimates for every `k` in the grid are read off prefixes of
//! one run of `max(k_grid)` samples.

use std::f64::consts::PI;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::csv_table;
use crate::error::{check_domain, Error, Result};
use crate::gcws_hash::{self, GcwsConfig};
use crate::kernels;
use crate::rng::{domain, StreamKey};
use crate::variance_theory::{self as theory, Method};
use crate::vectors::{transform, CenterVector, VectorView};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub rho: f64,
    pub gamma: f64,
    pub k_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
}

pub const MIN_REPS: usize = 100;

impl SimConfig {
    pub fn new(rho: f64, gamma: f64, k_grid: Vec<usize>, reps: usize, master_seed: u64) -> Result<Self> {
        let c = SimConfig {
            rho,
            gamma,
            k_grid,
            reps,
            master_seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_domain("rho", self.rho, (-1.0..=1.0).contains(&self.rho), "[-1, 1]")?;
        check_domain("gamma", self.gamma, self.gamma > 0.0, "(0, inf)")?;
        if self.reps < MIN_REPS {
            return Err(Error::InvalidConfig(format!(
                "reps = {} is below the minimum of {MIN_REPS}",
                self.reps
            )));
        }
        if self.k_grid.is_empty() || self.k_grid[0] == 0 {
            return Err(Error::InvalidConfig("k grid must be nonempty and positive".into()));
        }
        if self.k_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("k grid must be strictly ascending".into()));
        }
        Ok(())
    }

    fn k_max(&self) -> usize {
        *self.k_grid.last().expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Rff,
    Nrff,
    GcwsGmm,
    GcwsRbf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorStats {
    pub estimator: Estimator,
    pub k: usize,
    pub reps: usize,
    pub target: f64,
    pub mean: f64,
    pub bias: f64,
    /// Population variance over repetitions, so that `mse = bias^2 + variance`.
    pub variance: f64,
    pub mse: f64,
}

impl EstimatorStats {
    /// Standard error of the mean estimate.
    pub fn std_error(&self) -> f64 {
        (self.variance / (self.reps as f64 - 1.0)).sqrt()
    }
}

/// Single-pass moments: Welford for mean and variance, a compensated sum for
/// the squared error against the target.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    sq_err: f64,
    sq_err_c: f64,
}

impl Moments {
    fn new() -> Self {
        Moments {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            sq_err: 0.0,
            sq_err_c: 0.0,
        }
    }

    fn push(&mut self, x: f64, target: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        // Neumaier summation
        let e = (x - target) * (x - target);
        let t = self.sq_err + e;
        if self.sq_err.abs() >= e {
            self.sq_err_c += (self.sq_err - t) + e;
        } else {
            self.sq_err_c += (e - t) + self.sq_err;
        }
        self.sq_err = t;
    }

    fn finish(&self, estimator: Estimator, k: usize, target: f64) -> EstimatorStats {
        let n = self.n as f64;
        EstimatorStats {
            estimator,
            k,
            reps: self.n,
            target,
            mean: self.mean,
            bias: self.mean - target,
            variance: self.m2 / n,
            mse: (self.sq_err + self.sq_err_c) / n,
        }
    }
}

/// Runs `reps` independent repetitions in parallel, each producing one value
/// per `(k, estimator)` cell, and folds them in repetition order.
fn run_reps<F>(reps: usize, cells: &[(Estimator, usize, f64)], rep: F) -> Vec<EstimatorStats>
where
    F: Fn(u64) -> Vec<f64> + Sync,
{
    let values: Vec<Vec<f64>> = (0..reps as u64).into_par_iter().map(&rep).collect();
    let mut acc = vec![Moments::new(); cells.len()];
    for row in &values {
        for ((m, &(_, _, target)), &x) in acc.iter_mut().zip(cells).zip(row) {
            m.push(x, target);
        }
    }
    acc.iter()
        .zip(cells)
        .map(|(m, &(est, k, target))| m.finish(est, k, target))
        .collect()
}

/// Plain and normalized RFF estimates of `exp(-gamma (1 - rho))` from
/// correlated Gaussian pairs `y = rho x + sqrt(1 - rho^2) z`.
///
/// Output order: for each `k` in the grid, `rff` then `nrff`.
pub fn simulate_rff(config: &SimConfig) -> Result<Vec<EstimatorStats>> {
    config.validate()?;
    let target = theory::expectation(config.rho, config.gamma)?;
    let cells: Vec<(Estimator, usize, f64)> = config
        .k_grid
        .iter()
        .flat_map(|&k| [(Estimator::Rff, k, target), (Estimator::Nrff, k, target)])
        .collect();
    let (rho, c) = (config.rho, config.gamma.sqrt());
    let s = (1.0 - rho * rho).sqrt();
    let root = StreamKey::new(config.master_seed, domain::SIM_RFF);
    let k_max = config.k_max();
    Ok(run_reps(config.reps, &cells, |r| {
        let key = root.with(r);
        let mut out = Vec::with_capacity(cells.len());
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        let mut next = config.k_grid.iter().peekable();
        for j in 0..k_max {
            let kj = key.with(j as u64);
            let x = kj.std_normal(0);
            let y = rho * x + s * kj.std_normal(1);
            let w = 2.0 * PI * kj.open_unit(2);
            let xx = std::f64::consts::SQRT_2 * (c * x + w).cos();
            let yy = std::f64::consts::SQRT_2 * (c * y + w).cos();
            sxy += xx * yy;
            sxx += xx * xx;
            syy += yy * yy;
            if next.peek() == Some(&&(j + 1)) {
                next.next();
                out.push(sxy / (j + 1) as f64);
                out.push(sxy / (sxx * syy).sqrt());
            }
        }
        out
    }))
}

/// GCWS estimates for a concrete vector pair: the collision rate (GMM) and
/// the RBF value derived from it.
///
/// Output order: for each `k`, `gcws_gmm` then `gcws_rbf`. Targets are the
/// exact GMM of the pair and the RBF value it implies.
pub fn simulate_gcws<A: VectorView + Sync, B: VectorView + Sync>(
    u: &A,
    v: &B,
    config: &SimConfig,
) -> Result<Vec<EstimatorStats>> {
    config.validate()?;
    let mu = CenterVector::zeros(u.dim());
    let g = kernels::gmm(u, v, &mu)?;
    let (tu, tv) = (transform(u, &mu)?, transform(v, &mu)?);
    if tu.is_empty() || tv.is_empty() {
        return Err(Error::ZeroVector);
    }
    let rbf_target = theory::gcws_rbf_estimate(g, config.gamma)?;
    let cells: Vec<(Estimator, usize, f64)> = config
        .k_grid
        .iter()
        .flat_map(|&k| [(Estimator::GcwsGmm, k, g), (Estimator::GcwsRbf, k, rbf_target)])
        .collect();
    let root = StreamKey::new(config.master_seed, domain::SIM_GCWS);
    let k_max = config.k_max();
    let gamma = config.gamma;
    Ok(run_reps(config.reps, &cells, |r| {
        let cfg = GcwsConfig::new(k_max, 1, root.with(r).bits(0)).expect("valid");
        let a = gcws_hash::sketch(&tu, &cfg).expect("nonempty");
        let b = gcws_hash::sketch(&tv, &cfg).expect("nonempty");
        let mut out = Vec::with_capacity(cells.len());
        let mut hits = 0usize;
        let mut next = config.k_grid.iter().peekable();
        for (j, (x, y)) in a.samples().iter().zip(b.samples()).enumerate() {
            hits += usize::from(x == y);
            if next.peek() == Some(&&(j + 1)) {
                next.next();
                let g_hat = hits as f64 / (j + 1) as f64;
                out.push(g_hat);
                out.push(theory::gcws_rbf_estimate(g_hat, gamma).expect("g_hat in [0,1]"));
            }
        }
        out
    }))
}

/// The idealized GCWS model: the collision count is `Binomial(k, g)` with
/// `g = g_of_rho(rho)`. Output order per `k`: `gcws_gmm` then `gcws_rbf`.
pub fn simulate_gcws_binomial(config: &SimConfig) -> Result<Vec<EstimatorStats>> {
    config.validate()?;
    let g = theory::g_of_rho(config.rho)?;
    let rbf_target = theory::expectation(config.rho, config.gamma)?;
    let cells: Vec<(Estimator, usize, f64)> = config
        .k_grid
        .iter()
        .flat_map(|&k| [(Estimator::GcwsGmm, k, g), (Estimator::GcwsRbf, k, rbf_target)])
        .collect();
    let samplers: Vec<Binomial> = config
        .k_grid
        .iter()
        .map(|&k| Binomial::new(k as u64, g).map_err(|e| Error::InvalidConfig(e.to_string())))
        .collect::<Result<_>>()?;
    let root = StreamKey::new(config.master_seed, domain::SIM_BINOMIAL);
    let gamma = config.gamma;
    Ok(run_reps(config.reps, &cells, |r| {
        let mut out = Vec::with_capacity(cells.len());
        for (&k, bin) in config.k_grid.iter().zip(&samplers) {
            let mut rng = root.with(k as u64).with(r).stream();
            let g_hat = bin.sample(&mut rng) as f64 / k as f64;
            out.push(g_hat);
            out.push(theory::gcws_rbf_estimate(g_hat, gamma).expect("g_hat in [0,1]"));
        }
        out
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// `V_n / V` over `(rho, gamma)`.
    NormalizationGain,
    /// Simulated MSE of RFF and NRFF against `k`.
    MseVsK,
    /// `Var / E^2` of GCWS, RFF and NRFF against `E`.
    RelativeVariance,
    /// `V_n / V_g` over `(rho, gamma)`.
    NrffOverGcws,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("fig") {
            "1" => Ok(Figure::NormalizationGain),
            "2" => Ok(Figure::MseVsK),
            "3" => Ok(Figure::RelativeVariance),
            "4" => Ok(Figure::NrffOverGcws),
            _ => Err(Error::UnknownFigure(s.to_string())),
        }
    }
}

/// Grid for [`emit_figure_data`].
#[derive(Debug, Clone, PartialEq)]
pub struct FigureGrid {
    pub rhos: Vec<f64>,
    pub gammas: Vec<f64>,
    pub e_values: Vec<f64>,
    /// Required for the simulated figure.
    pub sim: Option<SimConfig>,
}

impl Default for FigureGrid {
    fn default() -> Self {
        FigureGrid {
            rhos: (0..=40).map(|i| (5 * i - 100) as f64 / 100.0).collect(),
            gammas: vec![0.5, 1.0, 2.0, 4.0],
            e_values: (1..=20).map(|i| (5 * i) as f64 / 100.0).collect(),
            sim: None,
        }
    }
}

#[derive(Serialize)]
struct GainRow {
    rho: f64,
    gamma: f64,
    v_rff: f64,
    v_nrff: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct RelVarRow {
    e: f64,
    gamma: f64,
    gcws: f64,
    rff: Option<f64>,
    nrff: Option<f64>,
}

#[derive(Serialize)]
struct GcwsRatioRow {
    rho: f64,
    gamma: f64,
    g: f64,
    v_nrff: f64,
    v_gcws_rbf: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct MseRow {
    rho: f64,
    gamma: f64,
    k: usize,
    estimator: Estimator,
    reps: usize,
    mean: f64,
    bias: f64,
    variance: f64,
    mse: f64,
    theory_variance: f64,
}

/// CSV data behind the variance figures. Cells with no defined value (a
/// ratio of two zero variances, or an `E` out of reach for a given `gamma`)
/// are left empty.
pub fn emit_figure_data(which: Figure, grid: &FigureGrid) -> Result<String> {
    match which {
        Figure::NormalizationGain => {
            let mut rows = Vec::new();
            for &gamma in &grid.gammas {
                for &rho in &grid.rhos {
                    let v = theory::v_rff(rho, gamma)?;
                    let vn = theory::v_nrff(rho, gamma)?;
                    rows.push(GainRow {
                        rho,
                        gamma,
                        v_rff: v,
                        v_nrff: vn,
                        ratio: vn / v,
                    });
                }
            }
            csv_table(&rows)
        }
        Figure::RelativeVariance => {
            let mut rows = Vec::new();
            for &gamma in &grid.gammas {
                for &e in &grid.e_values {
                    rows.push(RelVarRow {
                        e,
                        gamma,
                        gcws: theory::relative_variance(Method::Gcws, e, gamma)?,
                        rff: theory::relative_variance(Method::Rff, e, gamma).ok(),
                        nrff: theory::relative_variance(Method::Nrff, e, gamma).ok(),
                    });
                }
            }
            csv_table(&rows)
        }
        Figure::NrffOverGcws => {
            let mut rows = Vec::new();
            for &gamma in &grid.gammas {
                for &rho in &grid.rhos {
                    let vn = theory::v_nrff(rho, gamma)?;
                    let vg = theory::v_gcws_rbf(rho, gamma)?;
                    rows.push(GcwsRatioRow {
                        rho,
                        gamma,
                        g: theory::g_of_rho(rho)?,
                        v_nrff: vn,
                        v_gcws_rbf: vg,
                        ratio: (vg > 0.0).then(|| vn / vg),
                    });
                }
            }
            csv_table(&rows)
        }
        Figure::MseVsK => {
            let sim = grid
                .sim
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("figure 2 needs simulation parameters".into()))?;
            let v = theory::v_rff(sim.rho, sim.gamma)?;
            let vn = theory::v_nrff(sim.rho, sim.gamma)?;
            let rows: Vec<MseRow> = simulate_rff(sim)?
                .into_iter()
                .map(|s| MseRow {
                    rho: sim.rho,
                    gamma: sim.gamma,
                    k: s.k,
                    estimator: s.estimator,
                    reps: s.reps,
                    mean: s.mean,
                    bias: s.bias,
                    variance: s.variance,
                    mse: s.mse,
                    theory_variance: match s.estimator {
                        Estimator::Rff => v,
                        _ => vn,
                    } / s.k as f64,
                })
                .collect();
            csv_table(&rows)
        }
    }
}
