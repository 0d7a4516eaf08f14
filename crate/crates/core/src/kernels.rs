//! Exact kernel evaluation: generalized min-max, RBF in correlation form, and
//! full kernel matrices.

use rayon::prelude::*;

use crate::error::{check_domain, Error, Result};
use crate::vectors::{self, correlation, CenterVector, TransformedVector, VectorView};

/// Tolerance on the unit-norm precondition of the RBF and linear kernels.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfParams {
    gamma: f64,
}

impl RbfParams {
    pub fn new(gamma: f64) -> Result<Self> {
        check_domain("gamma", gamma, gamma > 0.0, "(0, inf)")?;
        Ok(RbfParams { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Min-max ratio of two sign-split vectors.
pub fn gmm_transformed(a: &TransformedVector, b: &TransformedVector) -> Result<f64> {
    if a.dim2() != b.dim2() {
        return Err(Error::DimensionMismatch {
            expected: a.dim2(),
            found: b.dim2(),
        });
    }
    let mut ia = a.entries().peekable();
    let mut ib = b.entries().peekable();
    let (mut num, mut den) = (0.0, 0.0);
    loop {
        match (ia.peek().copied(), ib.peek().copied()) {
            (Some((i, x)), Some((j, y))) if i == j => {
                num += x.min(y);
                den += x.max(y);
                ia.next();
                ib.next();
            }
            (Some((i, x)), Some((j, _))) if i < j => {
                den += x;
                ia.next();
            }
            (Some(_), Some((_, y))) => {
                den += y;
                ib.next();
            }
            (Some((_, x)), None) => {
                den += x;
                ia.next();
            }
            (None, Some((_, y))) => {
                den += y;
                ib.next();
            }
            (None, None) => break,
        }
    }
    if den == 0.0 {
        return Err(Error::GmmUndefined);
    }
    Ok(num / den)
}

/// Generalized min-max similarity of two real vectors.
///
/// A zero vector against a nonzero one gives 0; two zero vectors are an error.
pub fn gmm<A: VectorView, B: VectorView>(u: &A, v: &B, mu: &CenterVector) -> Result<f64> {
    let tu = vectors::transform(u, mu)?;
    let tv = vectors::transform(v, mu)?;
    gmm_transformed(&tu, &tv)
}

/// `exp(-gamma (1 - rho))`.
pub fn rbf(rho: f64, params: RbfParams) -> Result<f64> {
    let rho = vectors::clamp_correlation(rho)?;
    Ok((-params.gamma * (1.0 - rho)).exp())
}

/// RBF of two vectors through their correlation.
pub fn rbf_vectors<A: VectorView, B: VectorView>(u: &A, v: &B, params: RbfParams) -> Result<f64> {
    rbf(correlation(u, v)?, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gmm,
    Rbf(RbfParams),
    Linear,
}

/// Dense symmetric `n x n` kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

fn check_unit<V: VectorView>(v: &V) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::NotUnitNorm { norm });
    }
    Ok(())
}

/// Kernel matrix over `data`, computed in parallel over rows.
///
/// RBF and linear kinds require unit-norm rows. GMM uses the zero center.
pub fn kernel_matrix<V: VectorView + Sync>(data: &[V], kind: KernelKind) -> Result<KernelMatrix> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let cell = |row: usize, col: usize| {
        move |source: Error| Error::KernelCell {
            row,
            col,
            source: Box::new(source),
        }
    };
    let rows: Vec<Vec<f64>> = match kind {
        KernelKind::Gmm => {
            let mu = CenterVector::zeros(data[0].dim());
            let t: Vec<TransformedVector> = data
                .iter()
                .enumerate()
                .map(|(i, v)| vectors::transform(v, &mu).map_err(cell(i, i)))
                .collect::<Result<_>>()?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i..n)
                        .map(|j| gmm_transformed(&t[i], &t[j]).map_err(cell(i, j)))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?
        }
        KernelKind::Rbf(_) | KernelKind::Linear => {
            for (i, v) in data.iter().enumerate() {
                check_unit(v).map_err(cell(i, i))?;
            }
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i..n)
                        .map(|j| {
                            let rho = if i == j {
                                1.0
                            } else {
                                vectors::dot(&data[i], &data[j])
                                    .and_then(vectors::clamp_correlation)
                                    .map_err(cell(i, j))?
                            };
                            match kind {
                                KernelKind::Rbf(p) => rbf(rho, p).map_err(cell(i, j)),
                                _ => Ok(rho),
                            }
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?
        }
    };
    let mut values = vec![0.0; n * n];
    for (i, upper) in rows.into_iter().enumerate() {
        for (off, v) in upper.into_iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(KernelMatrix { n, values })
}
