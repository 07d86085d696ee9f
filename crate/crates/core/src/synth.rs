//! Synthetic TF-IDF corpora with Zipf-distributed term draws.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusMatrix;
use crate::error::{Error, Result};
use crate::sparsevec::SparseVector;

/// Parameters of a synthetic corpus, written `N,V,avg_nnz,zipf_s,seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub vocab: usize,
    pub avg_nnz: usize,
    pub zipf_s: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_docs: usize, vocab: usize, avg_nnz: usize, zipf_s: f64, seed: u64) -> Self {
        Self {
            n_docs,
            vocab,
            avg_nnz,
            zipf_s,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_docs == 0 || self.vocab < 2 || self.avg_nnz == 0 {
            return Err(Error::InvalidParameter(format!(
                "synthetic corpus needs N >= 1, V >= 2, avg_nnz >= 1 (got {self})"
            )));
        }
        if self.avg_nnz * 2 > self.vocab {
            return Err(Error::InvalidParameter(format!(
                "avg_nnz {} too large for vocabulary {}",
                self.avg_nnz, self.vocab
            )));
        }
        if !self.zipf_s.is_finite() || self.zipf_s < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "zipf exponent {} must be finite and nonnegative",
                self.zipf_s
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.n_docs, self.vocab, self.avg_nnz, self.zipf_s, self.seed
        )
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || {
            Error::InvalidParameter(format!(
                "synthetic spec {s:?} must look like N,V,avg_nnz,zipf_s,seed"
            ))
        };
        if parts.len() != 5 {
            return Err(bad());
        }
        Ok(Self {
            n_docs: parts[0].parse().map_err(|_| bad())?,
            vocab: parts[1].parse().map_err(|_| bad())?,
            avg_nnz: parts[2].parse().map_err(|_| bad())?,
            zipf_s: parts[3].parse().map_err(|_| bad())?,
            seed: parts[4].parse().map_err(|_| bad())?,
        })
    }
}

/// Generates a unit-length TF-IDF corpus.
///
/// Each document draws a distinct-term target uniformly from
/// `1..=2·avg_nnz - 1`, then samples term ranks from a Zipf law over the
/// vocabulary until it holds that many distinct terms. Rank `r` maps to dim
/// `r - 1`. Weights are `tf · ln(N / df)`; documents left without weight are
/// skipped, so the result can hold slightly fewer than `n_docs` rows.
pub fn generate(spec: &SyntheticSpec) -> Result<CorpusMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let zipf = Zipf::new(spec.vocab as f64, spec.zipf_s)
        .map_err(|e| Error::InvalidParameter(format!("zipf: {e}")))?;

    let max_target = 2 * spec.avg_nnz - 1;
    let mut docs: Vec<Vec<(u32, u32)>> = Vec::with_capacity(spec.n_docs);
    let mut df = vec![0u32; spec.vocab];
    for _ in 0..spec.n_docs {
        let target = rng.random_range(1..=max_target);
        let mut tf: HashMap<u32, u32> = HashMap::with_capacity(target);
        // bounded so tiny vocabularies with steep laws still terminate
        let mut draws = 0;
        while tf.len() < target && draws < 64 * target {
            let rank = zipf.sample(&mut rng) as usize;
            let dim = (rank.clamp(1, spec.vocab) - 1) as u32;
            *tf.entry(dim).or_insert(0) += 1;
            draws += 1;
        }
        let mut counts: Vec<(u32, u32)> = tf.into_iter().collect();
        counts.sort_unstable();
        for &(d, _) in &counts {
            df[d as usize] += 1;
        }
        docs.push(counts);
    }

    let n = spec.n_docs as f64;
    let mut vectors = Vec::with_capacity(docs.len());
    let mut ids = Vec::with_capacity(docs.len());
    for (i, counts) in docs.into_iter().enumerate() {
        let entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(d, c)| (d, c as f64 * (n / df[d as usize] as f64).ln()))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        if entries.is_empty() {
            continue;
        }
        let v = SparseVector::new(spec.vocab, entries)?.normalize()?;
        vectors.push(v);
        ids.push(format!("syn-{i}"));
    }
    CorpusMatrix::new(vectors, ids, spec.vocab)
}
