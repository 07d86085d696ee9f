//! Candidate generation for "which centroids can reach a dot product of at
//! least λ with this unit query?".
//!
//! For unit vectors `c` and `x`, `c · x ≥ λ` implies that the squared weights
//! of `c` on the support of `x` sum to at least `λ²`. Sorting a centroid's
//! weights by magnitude, each dim therefore gets a *minimum overlap count*:
//! the length of the shortest run of that dim and the next lighter dims whose
//! squares reach `λ²`. A query can only reach `λ` with a centroid if, for the
//! heaviest shared dim, the number of shared dims is at least that count.
//!
//! [`GeneralIndex`] maps dims to the centroids that have them and is used to
//! count overlaps. Each [`ThresholdIndex`] maps dims to `(centroid, min
//! overlap)` pairs for one λ. [`MultiIndex`] bundles one general index with a
//! threshold index per configured λ.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparsevec::SparseVector;

/// Default λ set.
pub const DEFAULT_LAMBDAS: [f64; 4] = [0.1, 0.25, 0.4, 0.6];

/// Centroids whose norm deviates from one by more than this are rejected.
const UNIT_TOLERANCE: f64 = 1e-6;

/// Relative slack on `λ²` when closing a window. Running sums carry rounding
/// error; erring towards shorter windows keeps the candidate set a superset.
const WINDOW_SLACK: f64 = 1e-9;

/// Compressed posting lists: `offsets[d]..offsets[d + 1]` indexes `items`.
#[derive(Debug, Clone, Default)]
struct Postings<T> {
    offsets: Vec<usize>,
    items: Vec<T>,
}

impl<T: Copy> Postings<T> {
    /// `rows` yields `(dim, item)` in the order items should appear in each
    /// list.
    fn from_rows(dims: usize, rows: &[(u32, T)]) -> Self {
        let mut offsets = vec![0usize; dims + 1];
        for &(d, _) in rows {
            offsets[d as usize + 1] += 1;
        }
        for d in 0..dims {
            offsets[d + 1] += offsets[d];
        }
        let mut cursor = offsets.clone();
        let mut items: Vec<Option<T>> = vec![None; rows.len()];
        for &(d, item) in rows {
            items[cursor[d as usize]] = Some(item);
            cursor[d as usize] += 1;
        }
        Self {
            offsets,
            items: items.into_iter().map(Option::unwrap).collect(),
        }
    }

    fn get(&self, dim: u32) -> &[T] {
        let d = dim as usize;
        if d + 1 >= self.offsets.len() {
            return &[];
        }
        &self.items[self.offsets[d]..self.offsets[d + 1]]
    }
}

/// Dim → ids of the centroids with a nonzero weight there, sorted by id.
#[derive(Debug, Clone, Default)]
pub struct GeneralIndex {
    postings: Postings<u32>,
    n_centroids: usize,
}

impl GeneralIndex {
    pub fn build(centroids: &[SparseVector]) -> Self {
        let dims = index_dims(centroids);
        let rows: Vec<(u32, u32)> = centroids
            .iter()
            .enumerate()
            .flat_map(|(id, c)| c.indices().iter().map(move |&d| (d, id as u32)))
            .collect();
        Self {
            postings: Postings::from_rows(dims, &rows),
            n_centroids: centroids.len(),
        }
    }

    pub fn n_centroids(&self) -> usize {
        self.n_centroids
    }

    pub fn postings(&self, dim: u32) -> &[u32] {
        self.postings.get(dim)
    }

    /// Fills `counts` with `|support(x) ∩ support(c)|` for every centroid `c`
    /// sharing at least one dim with `x`.
    pub fn count_overlaps(&self, x: &SparseVector, counts: &mut OverlapCounts) {
        counts.reset(self.n_centroids);
        for &d in x.indices() {
            for &c in self.postings(d) {
                counts.increment(c);
            }
        }
    }
}

fn index_dims(centroids: &[SparseVector]) -> usize {
    centroids
        .iter()
        .map(|c| {
            c.dims()
                .max(c.indices().last().map_or(0, |&d| d as usize + 1))
        })
        .max()
        .unwrap_or(0)
}

/// Per-query overlap counts, reusable across queries without reallocating.
#[derive(Debug, Clone, Default)]
pub struct OverlapCounts {
    counts: Vec<u32>,
    touched: Vec<u32>,
}

impl OverlapCounts {
    fn reset(&mut self, n_centroids: usize) {
        for &c in &self.touched {
            self.counts[c as usize] = 0;
        }
        self.touched.clear();
        if self.counts.len() < n_centroids {
            self.counts.resize(n_centroids, 0);
        }
    }

    #[inline]
    fn increment(&mut self, c: u32) {
        let slot = &mut self.counts[c as usize];
        if *slot == 0 {
            self.touched.push(c);
        }
        *slot += 1;
    }

    /// Overlap with centroid `c`; zero when absent.
    #[inline]
    pub fn get(&self, c: u32) -> u32 {
        self.counts.get(c as usize).copied().unwrap_or(0)
    }

    /// Number of centroids with a nonzero overlap.
    pub fn len(&self) -> usize {
        self.touched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }

    pub fn to_map(&self) -> HashMap<u32, u32> {
        self.touched
            .iter()
            .map(|&c| (c, self.counts[c as usize]))
            .collect()
    }
}

/// Overlap count map for a single query.
pub fn overlap_counts(g: &GeneralIndex, x: &SparseVector) -> HashMap<u32, u32> {
    let mut counts = OverlapCounts::default();
    g.count_overlaps(x, &mut counts);
    counts.to_map()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThresholdEntry {
    pub centroid: u32,
    pub min_overlap: u32,
}

/// The threshold entries of one centroid, in construction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentroidEntries {
    /// `(dim, min_overlap)` pairs, heaviest dim first.
    pub entries: Vec<(u32, u32)>,
    /// Squared-value additions plus subtractions performed by the window.
    pub window_ops: usize,
}

/// Centroid entries sorted by weight magnitude, descending; ties by dim.
fn sort_by_weight(centroid: &SparseVector) -> Vec<(u32, f64)> {
    let mut pairs: Vec<(u32, f64)> = centroid.iter().map(|(d, w)| (d, w.abs())).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs
}

/// Derives the threshold entries of one centroid for threshold `lambda`.
pub fn threshold_entries(centroid: &SparseVector, lambda: f64) -> CentroidEntries {
    entries_from_sorted(&sort_by_weight(centroid), lambda)
}

fn entries_from_sorted(sorted: &[(u32, f64)], lambda: f64) -> CentroidEntries {
    let m = sorted.len();
    let target = lambda * lambda * (1.0 - WINDOW_SLACK);
    let mut entries = Vec::new();

    // single heavy dims are enough on their own
    let mut i = 0;
    while i < m && sorted[i].1 >= lambda {
        entries.push((sorted[i].0, 1));
        i += 1;
    }

    // sliding window [i, end) over the lighter dims
    let mut sum = 0.0;
    let mut end = i;
    let mut ops = 0;
    while i < m {
        while end < m && sum < target {
            sum += sorted[end].1 * sorted[end].1;
            end += 1;
            ops += 1;
        }
        if sum < target {
            break;
        }
        entries.push((sorted[i].0, (end - i) as u32));
        sum -= sorted[i].1 * sorted[i].1;
        ops += 1;
        i += 1;
        if end == i {
            sum = 0.0;
        }
    }
    CentroidEntries {
        entries,
        window_ops: ops,
    }
}

/// Dim → `(centroid, min_overlap)` lists for one λ, sorted by centroid id.
#[derive(Debug, Clone, Default)]
pub struct ThresholdIndex {
    lambda: f64,
    postings: Postings<ThresholdEntry>,
}

impl ThresholdIndex {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn postings(&self, dim: u32) -> &[ThresholdEntry] {
        self.postings.get(dim)
    }

    /// Total number of stored entries.
    pub fn len(&self) -> usize {
        self.postings.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.items.is_empty()
    }

    /// Every centroid that could reach `lambda` with `x`, sorted by id.
    /// `counts` must come from the general index of the same centroids.
    pub fn candidates(&self, x: &SparseVector, counts: &OverlapCounts) -> Vec<u32> {
        let mut scratch = QueryScratch::default();
        self.collect_candidates(x, counts, &mut scratch, |_| true);
        scratch.candidates
    }

    /// Like [`candidates`](Self::candidates), keeping only ids accepted by
    /// `keep`; the result is left in `scratch.candidates`.
    fn collect_candidates(
        &self,
        x: &SparseVector,
        counts: &OverlapCounts,
        scratch: &mut QueryScratch,
        keep: impl Fn(u32) -> bool,
    ) {
        scratch.begin(counts.counts.len());
        for &d in x.indices() {
            for e in self.postings(d) {
                if counts.get(e.centroid) >= e.min_overlap && keep(e.centroid) {
                    scratch.mark(e.centroid);
                }
            }
        }
        scratch.candidates.sort_unstable();
    }
}

/// Reusable per-worker state for index queries.
#[derive(Debug, Clone, Default)]
pub struct QueryScratch {
    counts: OverlapCounts,
    stamps: Vec<u32>,
    generation: u32,
    candidates: Vec<u32>,
}

impl QueryScratch {
    fn begin(&mut self, n_centroids: usize) {
        if self.stamps.len() < n_centroids {
            self.stamps.resize(n_centroids, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.candidates.clear();
    }

    #[inline]
    fn mark(&mut self, c: u32) {
        let slot = &mut self.stamps[c as usize];
        if *slot != self.generation {
            *slot = self.generation;
            self.candidates.push(c);
        }
    }

    pub fn candidates(&self) -> &[u32] {
        &self.candidates
    }
}

/// A general index shared by one threshold index per λ, all built from the
/// same centroid snapshot.
#[derive(Debug, Clone, Default)]
pub struct MultiIndex {
    general: GeneralIndex,
    thresholds: Vec<ThresholdIndex>,
    window_ops: Vec<usize>,
}

impl MultiIndex {
    /// Builds the index. Centroids must be unit length and `lambdas` strictly
    /// ascending inside `(0, 1)`.
    pub fn build(centroids: &[SparseVector], lambdas: &[f64]) -> Result<Self> {
        validate_lambdas(lambdas)?;
        for (id, c) in centroids.iter().enumerate() {
            let norm = c.norm();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NonUnitCentroid { id, norm });
            }
        }
        let general = GeneralIndex::build(centroids);
        let dims = index_dims(centroids);

        let per_centroid: Vec<Vec<CentroidEntries>> = centroids
            .par_iter()
            .map(|c| {
                let sorted = sort_by_weight(c);
                lambdas
                    .iter()
                    .map(|&l| entries_from_sorted(&sorted, l))
                    .collect()
            })
            .collect();

        let window_ops = per_centroid
            .iter()
            .map(|per| per.iter().map(|e| e.window_ops).sum())
            .collect();

        let thresholds = lambdas
            .iter()
            .enumerate()
            .map(|(li, &lambda)| {
                let rows: Vec<(u32, ThresholdEntry)> = per_centroid
                    .iter()
                    .enumerate()
                    .flat_map(|(id, per)| {
                        per[li].entries.iter().map(move |&(d, min_overlap)| {
                            (
                                d,
                                ThresholdEntry {
                                    centroid: id as u32,
                                    min_overlap,
                                },
                            )
                        })
                    })
                    .collect();
                ThresholdIndex {
                    lambda,
                    postings: Postings::from_rows(dims, &rows),
                }
            })
            .collect();

        Ok(Self {
            general,
            thresholds,
            window_ops,
        })
    }

    pub fn general(&self) -> &GeneralIndex {
        &self.general
    }

    pub fn thresholds(&self) -> &[ThresholdIndex] {
        &self.thresholds
    }

    /// Window operations spent on each centroid, summed over all λ.
    pub fn window_ops(&self) -> &[usize] {
        &self.window_ops
    }

    /// The threshold index with the largest λ not above `baseline_sim`.
    pub fn select_threshold(&self, baseline_sim: f64) -> Option<&ThresholdIndex> {
        self.thresholds
            .iter()
            .rev()
            .find(|t| t.lambda <= baseline_sim)
    }

    /// Runs a full query: counts overlaps, then collects candidates from the
    /// threshold index selected by `baseline_sim`, keeping only ids accepted
    /// by `keep`. Returns `None` when no threshold applies.
    pub fn query<'s>(
        &self,
        x: &SparseVector,
        baseline_sim: f64,
        scratch: &'s mut QueryScratch,
        keep: impl Fn(u32) -> bool,
    ) -> Option<&'s [u32]> {
        let threshold = self.select_threshold(baseline_sim)?;
        let mut counts = std::mem::take(&mut scratch.counts);
        self.general.count_overlaps(x, &mut counts);
        threshold.collect_candidates(x, &counts, scratch, keep);
        scratch.counts = counts;
        Some(&scratch.candidates)
    }
}

pub fn validate_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("λ set is empty".into()));
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::InvalidParameter(format!("λ = {l} outside (0, 1)")));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "λ values must be strictly ascending".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_centroid() -> SparseVector {
        SparseVector::new(8, vec![(0, 0.9), (1, 0.3), (2, 0.3), (3, 0.1)]).unwrap()
    }

    #[test]
    fn worked_build_examples() {
        let c = worked_centroid();
        assert_eq!(threshold_entries(&c, 0.6).entries, vec![(0, 1)]);
        assert_eq!(threshold_entries(&c, 0.4).entries, vec![(0, 1), (1, 2)]);
        let single = SparseVector::new(8, vec![(5, 1.0)]).unwrap();
        for l in DEFAULT_LAMBDAS {
            assert_eq!(threshold_entries(&single, l).entries, vec![(5, 1)]);
        }
    }

    #[test]
    fn worked_query_examples() {
        let idx = MultiIndex::build(&[worked_centroid()], &[0.4]).unwrap();
        let p = &idx.thresholds()[0];

        let x = SparseVector::new(8, vec![(1, 1.0), (2, 1.0)])
            .unwrap()
            .normalize()
            .unwrap();
        let mut counts = OverlapCounts::default();
        idx.general().count_overlaps(&x, &mut counts);
        assert_eq!(counts.get(0), 2);
        assert_eq!(p.candidates(&x, &counts), vec![0]);

        let x = SparseVector::new(8, vec![(3, 1.0)]).unwrap();
        idx.general().count_overlaps(&x, &mut counts);
        assert_eq!(counts.get(0), 1);
        assert!(p.candidates(&x, &counts).is_empty());

        let x = SparseVector::new(8, vec![(7, 1.0)]).unwrap();
        idx.general().count_overlaps(&x, &mut counts);
        assert!(counts.is_empty());
        assert!(p.candidates(&x, &counts).is_empty());
    }

    #[test]
    fn overlap_counts_full_and_empty() {
        let c = worked_centroid();
        let g = GeneralIndex::build(std::slice::from_ref(&c));
        assert_eq!(overlap_counts(&g, &c), HashMap::from([(0, 4)]));
        let x = SparseVector::new(8, vec![(6, 1.0)]).unwrap();
        assert!(overlap_counts(&g, &x).is_empty());
    }

    #[test]
    fn select_threshold_examples() {
        let c = worked_centroid();
        let idx = MultiIndex::build(&[c], &DEFAULT_LAMBDAS).unwrap();
        assert_eq!(idx.select_threshold(0.5).map(|t| t.lambda()), Some(0.4));
        assert!(idx.select_threshold(0.05).is_none());
        assert_eq!(idx.select_threshold(0.6).map(|t| t.lambda()), Some(0.6));
        assert_eq!(idx.select_threshold(1.0).map(|t| t.lambda()), Some(0.6));
    }

    #[test]
    fn build_rejects_bad_input() {
        let c = worked_centroid();
        let half = SparseVector::new(8, vec![(0, 0.5)]).unwrap();
        assert!(matches!(
            MultiIndex::build(&[c.clone(), half], &[0.4]),
            Err(Error::NonUnitCentroid { id: 1, .. })
        ));
        assert!(MultiIndex::build(std::slice::from_ref(&c), &[0.0]).is_err());
        assert!(MultiIndex::build(std::slice::from_ref(&c), &[1.0]).is_err());
        assert!(MultiIndex::build(std::slice::from_ref(&c), &[0.4, 0.2]).is_err());
        assert!(MultiIndex::build(std::slice::from_ref(&c), &[]).is_err());
    }

    #[test]
    fn window_ops_stay_linear() {
        let c = worked_centroid();
        for l in [0.05, 0.1, 0.4, 0.6, 0.95] {
            assert!(threshold_entries(&c, l).window_ops <= 2 * c.nnz());
        }
    }

    #[test]
    fn postings_are_sorted_by_centroid() {
        let cs: Vec<SparseVector> = (0..5)
            .map(|i| {
                SparseVector::new(10, vec![(i, 0.6), (9, 0.8)])
                    .unwrap()
            })
            .collect();
        let idx = MultiIndex::build(&cs, &[0.5]).unwrap();
        assert_eq!(idx.general().postings(9), &[0, 1, 2, 3, 4]);
        let ids: Vec<u32> = idx.thresholds()[0]
            .postings(9)
            .iter()
            .map(|e| e.centroid)
            .collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert!(idx.general().postings(100).is_empty());
    }
}
