#![allow(dead_code)]

use rand::seq::index::sample;
use rand::Rng;
use sskm::SparseVector;

/// Random unit vector over `dims` dims with `nnz` nonzeros and positive
/// weights.
pub fn random_unit<R: Rng>(rng: &mut R, dims: usize, nnz: usize) -> SparseVector {
    let mut idx: Vec<u32> = sample(rng, dims, nnz.min(dims))
        .into_iter()
        .map(|i| i as u32)
        .collect();
    idx.sort_unstable();
    let entries = idx
        .into_iter()
        .map(|d| (d, rng.random_range(0.01..1.0f64).powi(2)))
        .collect();
    SparseVector::new(dims, entries).unwrap().normalize().unwrap()
}

pub fn dense(v: &SparseVector, dims: usize) -> Vec<f64> {
    let mut out = vec![0.0; dims];
    for (d, w) in v.iter() {
        out[d as usize] = w;
    }
    out
}

pub fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Argmax over all centroids with ties to the lowest id, on dense copies.
pub fn brute_argmax(x: &SparseVector, centroids: &[SparseVector], dims: usize) -> (u32, f64) {
    let xd = dense(x, dims);
    let mut best = (0u32, f64::NEG_INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let s = dense_dot(&xd, &dense(c, dims));
        if s > best.1 {
            best = (j as u32, s);
        }
    }
    best
}
