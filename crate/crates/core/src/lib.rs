//! Spherical k-means for sparse unit vectors.
//!
//! The crate provides the sparse vector kernels ([`sparsevec`]), a TF-IDF
//! document pipeline ([`corpus`]), a threshold pruning index over centroids
//! ([`pruneindex`]), the clustering loop with its assignment modes
//! ([`engine`]), a synthetic Zipf corpus generator ([`synth`]) and the
//! benchmark runner behind the `sskm` command line tool ([`bench`], [`cli`]).

pub mod bench;
pub mod cli;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod pruneindex;
pub mod sparsevec;
pub mod synth;

pub use corpus::{CorpusMatrix, Vocabulary};
pub use engine::{IterationStats, Mode, RunConfig, RunResult};
pub use error::{Error, Result};
pub use pruneindex::{GeneralIndex, MultiIndex, ThresholdIndex};
pub use sparsevec::{DenseAccumulator, SparseVector};
