//! Sparse vectors stored as sorted `(dim, weight)` pairs, plus the numeric
//! kernels the rest of the crate is built on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size ratio above which `dot` switches from a linear merge to galloping
/// search through the longer support.
const GALLOP_RATIO: usize = 16;

/// Vectors whose computed norm is this close to one are treated as already
/// normalized and returned unchanged, which makes `normalize` idempotent.
const UNIT_SNAP: f64 = 1e-12;

/// A sparse vector with strictly increasing dims and nonzero weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dims: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from already sorted entries, checking every invariant.
    pub fn new(dims: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let (indices, values): (Vec<u32>, Vec<f64>) = entries.into_iter().unzip();
        Self::from_parts(dims, indices, values)
    }

    pub fn from_parts(dims: usize, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidVector(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidVector(format!(
                    "dims not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dims {
                return Err(Error::InvalidVector(format!(
                    "dim {last} out of bounds for dimensionality {dims}"
                )));
            }
        }
        if let Some(pos) = values.iter().position(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "weight at dim {} is {}",
                indices[pos], values[pos]
            )));
        }
        Ok(Self {
            dims,
            indices,
            values,
        })
    }

    /// Builds a vector from arbitrary entries: sorts them, sums duplicate
    /// dims and drops zeros.
    pub fn from_unsorted(dims: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let mut indices: Vec<u32> = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for (d, w) in entries {
            if indices.last() == Some(&d) {
                *values.last_mut().unwrap() += w;
            } else {
                indices.push(d);
                values.push(w);
            }
        }
        let mut out_i = Vec::with_capacity(indices.len());
        let mut out_v = Vec::with_capacity(values.len());
        for (d, w) in indices.into_iter().zip(values) {
            if w != 0.0 {
                out_i.push(d);
                out_v.push(w);
            }
        }
        Self::from_parts(dims, out_i, out_v)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, dim: u32) -> Option<f64> {
        self.indices
            .binary_search(&dim)
            .ok()
            .map(|pos| self.values[pos])
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        dot(self, other)
    }

    pub fn normalize(&self) -> Result<SparseVector> {
        normalize(self)
    }
}

/// Sum over shared dims of the weight products, in ascending dim order.
///
/// Both the merge walk and the galloping walk visit shared dims in the same
/// order, so `dot(a, b) == dot(b, a)` bitwise.
pub fn dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (short, long) = if a.nnz() <= b.nnz() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0.0;
    }
    if long.nnz() / short.nnz() >= GALLOP_RATIO {
        gallop_dot(short, long)
    } else {
        merge_dot(short, long)
    }
}

fn merge_dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (ai, av) = (&a.indices, &a.values);
    let (bi, bv) = (&b.indices, &b.values);
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < ai.len() && j < bi.len() {
        let (x, y) = (ai[i], bi[j]);
        if x == y {
            sum += av[i] * bv[j];
            i += 1;
            j += 1;
        } else if x < y {
            i += 1;
        } else {
            j += 1;
        }
    }
    sum
}

fn gallop_dot(short: &SparseVector, long: &SparseVector) -> f64 {
    let li = &long.indices;
    let mut base = 0;
    let mut sum = 0.0;
    for (d, w) in short.iter() {
        if base >= li.len() {
            break;
        }
        // exponential probe, then binary search inside the bracket
        let mut step = 1;
        while base + step < li.len() && li[base + step] < d {
            step <<= 1;
        }
        let hi = (base + step + 1).min(li.len());
        match li[base..hi].binary_search(&d) {
            Ok(off) => {
                sum += w * long.values[base + off];
                base += off + 1;
            }
            Err(off) => base += off,
        }
    }
    sum
}

/// Divides every weight by the Euclidean norm.
pub fn normalize(v: &SparseVector) -> Result<SparseVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() <= UNIT_SNAP {
        return Ok(v.clone());
    }
    Ok(SparseVector {
        dims: v.dims,
        indices: v.indices.clone(),
        values: v.values.iter().map(|w| w / norm).collect(),
    })
}

/// Squared Euclidean distance over the union of both supports.
pub fn sq_euclidean(a: &SparseVector, b: &SparseVector) -> f64 {
    let (ai, av) = (&a.indices, &a.values);
    let (bi, bv) = (&b.indices, &b.values);
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < ai.len() || j < bi.len() {
        let diff = match (ai.get(i), bi.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                let d = av[i] - bv[j];
                i += 1;
                j += 1;
                d
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                av[i - 1]
            }
            (Some(_), None) => {
                i += 1;
                av[i - 1]
            }
            _ => {
                j += 1;
                bv[j - 1]
            }
        };
        sum += diff * diff;
    }
    sum
}

/// Dense scratch buffer for summing sparse vectors.
///
/// Tracks touched dims so clearing and extraction cost is proportional to the
/// touched support rather than the dimensionality.
#[derive(Debug, Clone)]
pub struct DenseAccumulator {
    sums: Vec<f64>,
    touched: Vec<u32>,
    seen: Vec<bool>,
}

impl DenseAccumulator {
    pub fn new(dims: usize) -> Self {
        Self {
            sums: vec![0.0; dims],
            touched: Vec::new(),
            seen: vec![false; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.sums.len()
    }

    /// Adds `v` into the buffer, growing it if `v` reaches past the current
    /// dimensionality.
    pub fn accumulate(&mut self, v: &SparseVector) {
        if let Some(&last) = v.indices.last() {
            let need = last as usize + 1;
            if need > self.sums.len() {
                self.sums.resize(need, 0.0);
                self.seen.resize(need, false);
            }
        }
        for (d, w) in v.iter() {
            let slot = d as usize;
            if !self.seen[slot] {
                self.seen[slot] = true;
                self.touched.push(d);
            }
            self.sums[slot] += w;
        }
    }

    pub fn value(&self, dim: u32) -> f64 {
        self.sums.get(dim as usize).copied().unwrap_or(0.0)
    }

    /// Current contents as a sparse vector of dimensionality `dims`.
    pub fn extract(&self, dims: usize) -> SparseVector {
        let mut touched = self.touched.clone();
        touched.sort_unstable();
        let mut indices = Vec::with_capacity(touched.len());
        let mut values = Vec::with_capacity(touched.len());
        for d in touched {
            let w = self.sums[d as usize];
            if w != 0.0 {
                indices.push(d);
                values.push(w);
            }
        }
        SparseVector {
            dims: dims.max(indices.last().map_or(0, |&d| d as usize + 1)),
            indices,
            values,
        }
    }

    pub fn clear(&mut self) {
        for &d in &self.touched {
            self.sums[d as usize] = 0.0;
            self.seen[d as usize] = false;
        }
        self.touched.clear();
    }
}

/// Convenience wrapper: `acc` with `v` added.
pub fn accumulate(mut acc: DenseAccumulator, v: &SparseVector) -> DenseAccumulator {
    acc.accumulate(v);
    acc
}
