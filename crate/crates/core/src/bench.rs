//! Mode × k benchmark matrix with median timings.

use std::io::Write;

use serde::Serialize;

use crate::engine::{self, Mode, RunConfig};
use crate::error::Result;
use crate::sparsevec::SparseVector;

pub const CSV_HEADER: &str =
    "mode,k,median_seconds,iqr_seconds,dot_products,iterations,index_build_seconds";

/// One (mode, k) cell of the benchmark matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub mode: Mode,
    pub k: usize,
    pub median_seconds: f64,
    pub iqr_seconds: f64,
    /// Total dot products of one run; identical across repeats.
    pub dot_products: u64,
    pub iterations: usize,
    pub index_build_seconds: f64,
    /// Per-repeat clustering wall times, in run order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// Linear-interpolation quantile of an unsorted sample, `q` in `[0, 1]`.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty(), "quantile of an empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

pub fn iqr(samples: &[f64]) -> f64 {
    quantile(samples, 0.75) - quantile(samples, 0.25)
}

/// Runs every `(mode, k)` pair `repeats` times with otherwise identical
/// settings taken from `base`. Rows come out mode-major, in the given order.
pub fn run_matrix(
    data: &[SparseVector],
    modes: &[Mode],
    ks: &[usize],
    repeats: usize,
    base: &RunConfig,
) -> Result<Vec<BenchCell>> {
    let repeats = repeats.max(1);
    let mut cells = Vec::with_capacity(modes.len() * ks.len());
    for &mode in modes {
        for &k in ks {
            let config = RunConfig {
                k,
                mode,
                ..base.clone()
            };
            let mut samples = Vec::with_capacity(repeats);
            let mut builds = Vec::with_capacity(repeats);
            let mut dot_products = 0;
            let mut iterations = 0;
            for _ in 0..repeats {
                let result = engine::run(data, &config)?;
                samples.push(result.total_wall_time().as_secs_f64());
                builds.push(result.total_index_build_time().as_secs_f64());
                dot_products = result.total_dot_products();
                iterations = result.iterations.len();
            }
            cells.push(BenchCell {
                mode,
                k,
                median_seconds: median(&samples),
                iqr_seconds: iqr(&samples),
                dot_products,
                iterations,
                index_build_seconds: median(&builds),
                samples,
            });
        }
    }
    Ok(cells)
}

pub fn write_csv<W: Write>(mut out: W, cells: &[BenchCell]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{},{},{:.6}",
            c.mode,
            c.k,
            c.median_seconds,
            c.iqr_seconds,
            c.dot_products,
            c.iterations,
            c.index_build_seconds
        )?;
    }
    out.flush()
}
