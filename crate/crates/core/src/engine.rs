//! The spherical k-means loop and its two exact accelerations.
//!
//! Each iteration recomputes centroids as normalized member sums, marks the
//! centroids that did not move, and reassigns every document to its most
//! similar centroid. Three assignment modes share that loop:
//!
//! * [`Mode::Baseline`] compares every document with every centroid.
//! * [`Mode::Ncc`] skips unchanged centroids for documents whose previous
//!   cluster is unchanged, reusing the cached similarity.
//! * [`Mode::NccIndex`] additionally asks a [`MultiIndex`] for the centroids
//!   that can still beat the document's current similarity, once enough
//!   centroids changed for the index to pay for its construction.
//!
//! With `ncc_epsilon == 0` all three produce identical assignments in every
//! iteration. Ties always go to the lowest cluster id.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruneindex::{validate_lambdas, MultiIndex, QueryScratch, DEFAULT_LAMBDAS};
use crate::sparsevec::{dot, sq_euclidean, DenseAccumulator, SparseVector};

pub const DEFAULT_CONV_SQ_DIST: f64 = 1e-4;
pub const DEFAULT_INDEX_ACTIVATION: usize = 100;
pub const DEFAULT_MAX_ITERS: usize = 100;

/// k-means++ distances below this are treated as zero so exact duplicates of
/// a chosen seed are never drawn while anything else remains.
const SEED_DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "ncc")]
    Ncc,
    #[serde(rename = "ncc+index")]
    NccIndex,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Ncc, Mode::NccIndex];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Ncc => "ncc",
            Mode::NccIndex => "ncc+index",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "ncc" => Ok(Mode::Ncc),
            "ncc+index" | "ncc_index" | "ncc-index" => Ok(Mode::NccIndex),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode {other:?} (expected baseline, ncc or ncc+index)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub mode: Mode,
    pub lambdas: Vec<f64>,
    /// Stop once no centroid moved by this squared distance or more.
    pub conv_sq_dist: f64,
    /// Squared distance up to which a centroid counts as unchanged.
    pub ncc_epsilon: f64,
    /// The index is used only when more centroids than this changed.
    pub index_activation_threshold: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Worker cap; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(k: usize, mode: Mode, seed: u64) -> Self {
        Self {
            k,
            mode,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            conv_sq_dist: DEFAULT_CONV_SQ_DIST,
            ncc_epsilon: 0.0,
            index_activation_threshold: DEFAULT_INDEX_ACTIVATION,
            max_iters: DEFAULT_MAX_ITERS,
            seed,
            threads: None,
        }
    }

    pub fn validate(&self, n_docs: usize) -> Result<()> {
        if self.k < 2 || self.k > n_docs {
            return Err(Error::InvalidParameter(format!(
                "k = {} must lie in 2..={n_docs}",
                self.k
            )));
        }
        if self.k > u32::MAX as usize {
            return Err(Error::InvalidParameter(format!("k = {} too large", self.k)));
        }
        validate_lambdas(&self.lambdas)?;
        if self.conv_sq_dist.is_nan() || self.conv_sq_dist <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "convergence threshold {} must be positive",
                self.conv_sq_dist
            )));
        }
        if self.ncc_epsilon.is_nan() || self.ncc_epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ncc epsilon {} must be nonnegative",
                self.ncc_epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counters for one assignment step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// 1-based.
    pub iteration: usize,
    pub n_reassigned: usize,
    pub n_unchanged_centroids: usize,
    pub n_repaired_clusters: usize,
    pub index_active: bool,
    pub dot_products: u64,
    pub index_queries: u64,
    pub candidates_total: u64,
    /// Largest squared centroid movement going into this step; zero for the
    /// first step.
    pub max_drift: f64,
    /// Σ similarity of each document to its assigned centroid.
    pub objective: f64,
    /// Centroid update, index build and assignment.
    pub wall_time: Duration,
    pub index_build_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoReassignments,
    CentroidDrift,
    MaxIterations,
}

/// Loop state between iterations.
#[derive(Debug, Clone)]
pub struct ClusteringState {
    pub assignments: Vec<u32>,
    /// `sims[i] = dot(x_i, centroids[assignments[i]])` as of the last
    /// assignment step.
    pub sims: Vec<f64>,
    pub centroids: Vec<SparseVector>,
    pub prev_centroids: Vec<SparseVector>,
    /// `unchanged[j]` marks centroids equal (within `ncc_epsilon`) to their
    /// previous version.
    pub unchanged: Vec<bool>,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub assignments: Vec<u32>,
    pub sims: Vec<f64>,
    /// The centroids the final assignments were computed against.
    pub centroids: Vec<SparseVector>,
    pub seeds: Vec<usize>,
    pub iterations: Vec<IterationStats>,
    pub objective: f64,
    pub stop_reason: StopReason,
}

impl RunResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a as usize] += 1;
        }
        sizes
    }

    pub fn total_dot_products(&self) -> u64 {
        self.iterations.iter().map(|s| s.dot_products).sum()
    }

    pub fn total_wall_time(&self) -> Duration {
        self.iterations.iter().map(|s| s.wall_time).sum()
    }

    pub fn total_index_build_time(&self) -> Duration {
        self.iterations.iter().map(|s| s.index_build_time).sum()
    }
}

/// k-means++ seeding with cosine distance `1 - similarity`.
///
/// The first seed is uniform; each further seed is drawn with probability
/// proportional to the squared distance to the nearest seed so far. When
/// every remaining document duplicates a seed, the next one is drawn
/// uniformly from the unchosen documents.
pub fn init_kmeanspp(data: &[SparseVector], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.len();
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the number of documents ({n})"
        )));
    }
    let mut seeds = Vec::with_capacity(k);
    if k == 0 {
        return Ok(seeds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    let mut best_sim = vec![f64::NEG_INFINITY; n];

    let first = rng.random_range(0..n);
    seeds.push(first);
    chosen[first] = true;

    while seeds.len() < k {
        let last = &data[*seeds.last().unwrap()];
        best_sim.par_iter_mut().zip(data).for_each(|(best, x)| {
            let s = dot(x, last);
            if s > *best {
                *best = s;
            }
        });
        let weights: Vec<f64> = best_sim
            .iter()
            .zip(&chosen)
            .map(|(&s, &taken)| {
                let d = 1.0 - s;
                if taken || d < SEED_DISTANCE_FLOOR {
                    0.0
                } else {
                    d * d
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                pick = Some(i);
                acc += w;
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            let remaining = n - seeds.len();
            let nth = rng.random_range(0..remaining);
            (0..n)
                .filter(|&i| !chosen[i])
                .nth(nth)
                .expect("fewer seeds than documents")
        };
        seeds.push(next);
        chosen[next] = true;
    }
    Ok(seeds)
}

/// Result of a centroid update.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidUpdate {
    pub centroids: Vec<SparseVector>,
    /// `(cluster, document)` pairs moved by empty-cluster repair.
    pub repaired: Vec<(u32, usize)>,
}

/// Normalized member sums, each summed in ascending document order.
///
/// Empty clusters are repaired first: each one, in ascending id order, takes
/// the document with the lowest cached similarity (ties: lowest index) among
/// documents whose cluster has at least two members. `assignments` and
/// `sims` are updated for moved documents.
pub fn compute_centroids(
    data: &[SparseVector],
    assignments: &mut [u32],
    sims: &mut [f64],
    k: usize,
) -> CentroidUpdate {
    let repaired = repair_empty_clusters(data, assignments, sims, k);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        members[a as usize].push(i);
    }
    let dims = data.iter().map(SparseVector::dims).max().unwrap_or(0);
    let centroids = members
        .par_iter()
        .map_init(
            || DenseAccumulator::new(dims),
            |acc, ids| {
                acc.clear();
                for &i in ids {
                    acc.accumulate(&data[i]);
                }
                // a sum can only vanish through cancelling signs; fall back
                // to the first member
                acc.extract(dims)
                    .normalize()
                    .unwrap_or_else(|_| data[ids[0]].clone())
            },
        )
        .collect();
    CentroidUpdate {
        centroids,
        repaired,
    }
}

fn repair_empty_clusters(
    data: &[SparseVector],
    assignments: &mut [u32],
    sims: &mut [f64],
    k: usize,
) -> Vec<(u32, usize)> {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a as usize] += 1;
    }
    let empty: Vec<u32> = (0..k as u32).filter(|&j| sizes[j as usize] == 0).collect();
    if empty.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..assignments.len()).collect();
    order.sort_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b)));
    let mut donors = order.into_iter();
    let mut repaired = Vec::with_capacity(empty.len());
    for j in empty {
        let doc = donors
            .by_ref()
            .find(|&i| sizes[assignments[i] as usize] >= 2)
            .expect("k <= n leaves a donor for every empty cluster");
        sizes[assignments[doc] as usize] -= 1;
        sizes[j as usize] = 1;
        assignments[doc] = j;
        sims[doc] = dot(&data[doc], &data[doc]);
        repaired.push((j, doc));
    }
    repaired
}

/// `true` for every cluster whose centroid did not move. With `epsilon == 0`
/// this is exact equality of support and weights.
pub fn detect_unchanged(
    prev: &[SparseVector],
    next: &[SparseVector],
    epsilon: f64,
) -> Vec<bool> {
    prev.iter()
        .zip(next)
        .map(|(p, n)| {
            if epsilon == 0.0 {
                p == n
            } else {
                sq_euclidean(p, n) <= epsilon
            }
        })
        .collect()
}

/// Σ over documents of the similarity to their assigned centroid.
pub fn objective(data: &[SparseVector], assignments: &[u32], centroids: &[SparseVector]) -> f64 {
    data.iter()
        .zip(assignments)
        .map(|(x, &a)| dot(x, &centroids[a as usize]))
        .sum()
}

/// What the assignment step needs to know about the current centroids.
#[derive(Debug, Clone, Copy)]
pub struct AssignContext<'a> {
    pub mode: Mode,
    pub centroids: &'a [SparseVector],
    /// `None` on the first iteration, which always scans every centroid.
    pub unchanged: Option<&'a [bool]>,
    /// Present only when the index is active for this step.
    pub index: Option<&'a MultiIndex>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssignOutput {
    pub assignments: Vec<u32>,
    pub sims: Vec<f64>,
    pub n_reassigned: usize,
    pub dot_products: u64,
    pub index_queries: u64,
    pub candidates_total: u64,
}

#[derive(Debug, Clone, Copy)]
struct DocOutcome {
    cluster: u32,
    sim: f64,
    dots: u32,
    queried: bool,
    candidates: u32,
}

/// Running argmax with ties going to the lowest cluster id.
#[derive(Debug, Clone, Copy)]
struct Best {
    cluster: u32,
    sim: f64,
}

impl Best {
    #[inline]
    fn offer(&mut self, cluster: u32, sim: f64) {
        if sim > self.sim || (sim == self.sim && cluster < self.cluster) {
            self.cluster = cluster;
            self.sim = sim;
        }
    }
}

/// Reassigns every document. `prev_assignments` and `prev_sims` describe the
/// previous step and are ignored when `ctx.unchanged` is `None`.
pub fn assign(
    data: &[SparseVector],
    prev_assignments: &[u32],
    prev_sims: &[f64],
    ctx: AssignContext<'_>,
) -> AssignOutput {
    let changed: Vec<u32> = match ctx.unchanged {
        Some(u) => (0..u.len() as u32).filter(|&j| !u[j as usize]).collect(),
        None => Vec::new(),
    };
    let outcomes: Vec<DocOutcome> = data
        .par_iter()
        .enumerate()
        .map_init(QueryScratch::default, |scratch, (i, x)| {
            assign_one(x, prev_assignments.get(i).copied(), prev_sims.get(i).copied(), &ctx, &changed, scratch)
        })
        .collect();

    let mut out = AssignOutput {
        assignments: Vec::with_capacity(data.len()),
        sims: Vec::with_capacity(data.len()),
        ..Default::default()
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        if prev_assignments.get(i) != Some(&o.cluster) {
            out.n_reassigned += 1;
        }
        out.assignments.push(o.cluster);
        out.sims.push(o.sim);
        out.dot_products += o.dots as u64;
        out.index_queries += o.queried as u64;
        out.candidates_total += o.candidates as u64;
    }
    out
}

fn full_scan(x: &SparseVector, centroids: &[SparseVector]) -> Best {
    let mut best = Best {
        cluster: 0,
        sim: f64::NEG_INFINITY,
    };
    for (j, c) in centroids.iter().enumerate() {
        best.offer(j as u32, dot(x, c));
    }
    best
}

fn assign_one(
    x: &SparseVector,
    prev: Option<u32>,
    prev_sim: Option<f64>,
    ctx: &AssignContext<'_>,
    changed: &[u32],
    scratch: &mut QueryScratch,
) -> DocOutcome {
    let k = ctx.centroids.len() as u32;
    let scan_all = |outcome_dots: u32| {
        let best = full_scan(x, ctx.centroids);
        DocOutcome {
            cluster: best.cluster,
            sim: best.sim,
            dots: outcome_dots,
            queried: false,
            candidates: 0,
        }
    };
    let (unchanged, prev, prev_sim) = match (ctx.mode, ctx.unchanged, prev, prev_sim) {
        (Mode::Baseline, ..) | (_, None, ..) | (_, _, None, _) | (_, _, _, None) => {
            return scan_all(k)
        }
        (_, Some(u), Some(p), Some(s)) => (u, p, s),
    };

    let mut dots = 0u32;
    let mut queried = false;
    let mut n_candidates = 0u32;
    let mut best;

    if unchanged[prev as usize] {
        // every unchanged centroid already lost to (or tied above) `prev`
        best = Best {
            cluster: prev,
            sim: prev_sim,
        };
        let hits = ctx
            .index
            .and_then(|idx| idx.query(x, prev_sim, scratch, |c| !unchanged[c as usize]));
        let scan: &[u32] = match hits {
            Some(c) => {
                queried = true;
                n_candidates = c.len() as u32;
                c
            }
            None => changed,
        };
        for &j in scan {
            best.offer(j, dot(x, &ctx.centroids[j as usize]));
            dots += 1;
        }
    } else {
        let baseline = dot(x, &ctx.centroids[prev as usize]);
        dots += 1;
        best = Best {
            cluster: prev,
            sim: baseline,
        };
        match ctx.index.and_then(|idx| idx.query(x, baseline, scratch, |_| true)) {
            Some(c) => {
                queried = true;
                n_candidates = c.len() as u32;
                for &j in c {
                    if j != prev {
                        best.offer(j, dot(x, &ctx.centroids[j as usize]));
                        dots += 1;
                    }
                }
            }
            None => {
                for (j, c) in ctx.centroids.iter().enumerate() {
                    if j as u32 != prev {
                        best.offer(j as u32, dot(x, c));
                        dots += 1;
                    }
                }
            }
        }
    }
    DocOutcome {
        cluster: best.cluster,
        sim: best.sim,
        dots,
        queried,
        candidates: n_candidates,
    }
}

/// Runs the clustering loop to convergence.
pub fn run(data: &[SparseVector], config: &RunConfig) -> Result<RunResult> {
    run_observed(data, config, |_, _| {})
}

/// Like [`run`], calling `observer` after every assignment step with that
/// step's stats and assignment vector.
pub fn run_observed(
    data: &[SparseVector],
    config: &RunConfig,
    mut observer: impl FnMut(&IterationStats, &[u32]) + Send,
) -> Result<RunResult> {
    config.validate(data.len())?;
    match config.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| run_loop(data, config, &mut observer))
        }
        None => run_loop(data, config, &mut observer),
    }
}

fn run_loop(
    data: &[SparseVector],
    config: &RunConfig,
    observer: &mut (dyn FnMut(&IterationStats, &[u32]) + Send),
) -> Result<RunResult> {
    let k = config.k;
    let start = Instant::now();
    let seeds = init_kmeanspp(data, k, config.seed)?;
    let centroids: Vec<SparseVector> = seeds.iter().map(|&s| data[s].clone()).collect();

    let first = assign(
        data,
        &[],
        &[],
        AssignContext {
            mode: config.mode,
            centroids: &centroids,
            unchanged: None,
            index: None,
        },
    );
    let mut state = ClusteringState {
        assignments: first.assignments,
        sims: first.sims,
        prev_centroids: Vec::new(),
        centroids,
        unchanged: vec![false; k],
        iteration: 1,
    };
    let mut stats = vec![IterationStats {
        iteration: 1,
        n_reassigned: first.n_reassigned,
        dot_products: first.dot_products,
        objective: state.sims.iter().sum(),
        wall_time: start.elapsed(),
        ..Default::default()
    }];
    observer(&stats[0], &state.assignments);

    let stop_reason = loop {
        if state.iteration >= config.max_iters {
            break StopReason::MaxIterations;
        }
        let step_start = Instant::now();
        let update = compute_centroids(data, &mut state.assignments, &mut state.sims, k);
        let max_drift = state
            .centroids
            .par_iter()
            .zip(&update.centroids)
            .map(|(p, n)| sq_euclidean(p, n))
            .reduce(|| 0.0, f64::max);
        if update.repaired.is_empty() && max_drift < config.conv_sq_dist {
            break StopReason::CentroidDrift;
        }
        let mut unchanged = detect_unchanged(&state.centroids, &update.centroids, config.ncc_epsilon);
        for &(j, _) in &update.repaired {
            unchanged[j as usize] = false;
        }
        state.prev_centroids = std::mem::replace(&mut state.centroids, update.centroids);
        state.unchanged = unchanged;
        state.iteration += 1;

        let n_changed = state.unchanged.iter().filter(|u| !**u).count();
        let use_index =
            config.mode == Mode::NccIndex && n_changed > config.index_activation_threshold;
        let build_start = Instant::now();
        let index = if use_index {
            Some(MultiIndex::build(&state.centroids, &config.lambdas)?)
        } else {
            None
        };
        let index_build_time = if use_index {
            build_start.elapsed()
        } else {
            Duration::ZERO
        };

        let out = assign(
            data,
            &state.assignments,
            &state.sims,
            AssignContext {
                mode: config.mode,
                centroids: &state.centroids,
                unchanged: Some(&state.unchanged),
                index: index.as_ref(),
            },
        );
        state.assignments = out.assignments;
        state.sims = out.sims;
        let step = IterationStats {
            iteration: state.iteration,
            n_reassigned: out.n_reassigned,
            n_unchanged_centroids: k - n_changed,
            n_repaired_clusters: update.repaired.len(),
            index_active: use_index,
            dot_products: out.dot_products,
            index_queries: out.index_queries,
            candidates_total: out.candidates_total,
            max_drift,
            objective: state.sims.iter().sum(),
            wall_time: step_start.elapsed(),
            index_build_time,
        };
        observer(&step, &state.assignments);
        stats.push(step);
        if out.n_reassigned == 0 {
            break StopReason::NoReassignments;
        }
    };

    let objective = state.sims.iter().sum();
    Ok(RunResult {
        assignments: state.assignments,
        sims: state.sims,
        centroids: state.centroids,
        seeds,
        iterations: stats,
        objective,
        stop_reason,
    })
}
