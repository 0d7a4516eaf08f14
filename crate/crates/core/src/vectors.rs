//! Data vectors, the sign-split transform and the correlation kernel.
//!
//! Dense and sparse vectors share every operation through [`VectorView`],
//! which exposes the dimension and an ascending iterator over nonzero entries.

use crate::error::{Error, Result};

/// Read-only access shared by dense and sparse vectors.
pub trait VectorView {
    fn dim(&self) -> usize;

    /// Nonzero entries as `(index, value)`, indices strictly increasing.
    fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_;

    fn norm_sq(&self) -> f64 {
        self.nonzeros().map(|(_, v)| v * v).sum()
    }

    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, v) in self.nonzeros() {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    entries: Vec<f64>,
}

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(DenseVector { entries })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }
}

impl VectorView for DenseVector {
    fn dim(&self) -> usize {
        self.entries.len()
    }

    fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied().enumerate().filter(|&(_, v)| v != 0.0)
    }
}

/// Sparse vector; never stores explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds from `(index, value)` pairs. Indices must be strictly increasing
    /// and below `dim`; zero values are dropped.
    pub fn new(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::InvalidSparse(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if let Some(&last) = indices.last() {
                if i <= last {
                    return Err(Error::InvalidSparse(format!(
                        "indices not strictly increasing ({last} then {i})"
                    )));
                }
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVector { dim, indices, values })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), values.iter().copied().enumerate())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same entries, larger ambient dimension.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if let Some(&last) = self.indices.last() {
            if last >= dim {
                return Err(Error::InvalidSparse(format!(
                    "index {last} out of range for dimension {dim}"
                )));
            }
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.dim, self.nonzeros().map(|(i, v)| (i, v * c)))
    }
}

impl VectorView for SparseVector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Center used by the sign-split transform; all zeros by default.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterVector {
    entries: Vec<f64>,
}

impl CenterVector {
    pub fn zeros(dim: usize) -> Self {
        CenterVector {
            entries: vec![0.0; dim],
        }
    }

    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(CenterVector { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    fn is_zero(&self) -> bool {
        self.entries.iter().all(|&m| m == 0.0)
    }
}

/// Nonnegative image of a vector under the sign-split transform, in `2 * dim`
/// coordinates. Position `2i` carries the part above the center, `2i + 1` the
/// part below it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedVector {
    dim2: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl TransformedVector {
    pub fn dim2(&self) -> usize {
        self.dim2
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim2];
        for (i, v) in self.entries() {
            out[i] = v;
        }
        out
    }

    pub fn to_sparse(&self) -> SparseVector {
        SparseVector {
            dim: self.dim2,
            indices: self.indices.clone(),
            values: self.values.clone(),
        }
    }

    fn push(&mut self, i: usize, x: f64, m: f64) {
        if x > m {
            self.indices.push(2 * i);
            self.values.push(x - m);
        } else if x < m {
            self.indices.push(2 * i + 1);
            self.values.push(m - x);
        }
    }
}

/// Sign-split transform of `u` around the center `mu`.
pub fn transform<V: VectorView>(u: &V, mu: &CenterVector) -> Result<TransformedVector> {
    if u.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: u.dim(),
        });
    }
    let mut out = TransformedVector {
        dim2: 2 * u.dim(),
        indices: Vec::new(),
        values: Vec::new(),
    };
    if mu.is_zero() {
        for (i, x) in u.nonzeros() {
            if !x.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            out.push(i, x, 0.0);
        }
    } else {
        let dense = u.to_dense();
        for (i, (&x, &m)) in dense.iter().zip(mu.as_slice()).enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            out.push(i, x, m);
        }
    }
    Ok(out)
}

/// Inner product by merge-join over nonzeros.
pub fn dot<A: VectorView, B: VectorView>(a: &A, b: &B) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let mut ia = a.nonzeros().peekable();
    let mut ib = b.nonzeros().peekable();
    let mut acc = 0.0;
    while let (Some(&(i, x)), Some(&(j, y))) = (ia.peek(), ib.peek()) {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                acc += x * y;
                ia.next();
                ib.next();
            }
        }
    }
    Ok(acc)
}

/// Round-off slack for clamping a correlation into [-1, 1].
pub const CORRELATION_CLAMP_TOL: f64 = 1e-12;

/// Normalized linear kernel `<u, v> / (|u| |v|)`.
pub fn correlation<A: VectorView, B: VectorView>(u: &A, v: &B) -> Result<f64> {
    let uv = dot(u, v)?;
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    clamp_correlation(uv / (nu * nv))
}

pub(crate) fn clamp_correlation(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 + CORRELATION_CLAMP_TOL {
        return Err(Error::OutOfDomain {
            name: "rho",
            value: rho,
            domain: "[-1, 1]",
        });
    }
    Ok(rho.clamp(-1.0, 1.0))
}

/// Scales to unit l2 norm.
pub fn l2_normalize<V: VectorView>(u: &V) -> Result<SparseVector> {
    let n = u.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    SparseVector::new(u.dim(), u.nonzeros().map(|(i, v)| (i, v / n)))
}

pub fn l2_normalize_dense(u: &DenseVector) -> Result<DenseVector> {
    let n = u.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    DenseVector::new(u.as_slice().iter().map(|v| v / n).collect())
}
