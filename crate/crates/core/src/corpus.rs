//! Document ingestion: tokenizing, vocabulary building, TF-IDF weighting and
//! the on-disk interchange formats.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparsevec::SparseVector;

pub const DEFAULT_MAX_DF: f64 = 0.5;

const MATRIX_MAGIC: &str = "%%sparse-unit-matrix";
const UNIT_TOLERANCE: f64 = 1e-9;

/// Lowercases `text` and splits it on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Term to dimension mapping with per-term document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    term_to_dim: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from `(term, doc_freq)` rows given in dim order.
    pub fn from_terms(rows: Vec<(String, u32)>, n_docs: usize) -> Result<Self> {
        let mut terms = Vec::with_capacity(rows.len());
        let mut doc_freq = Vec::with_capacity(rows.len());
        let mut term_to_dim = HashMap::with_capacity(rows.len());
        for (dim, (term, df)) in rows.into_iter().enumerate() {
            if df == 0 || df as usize > n_docs {
                return Err(Error::InvalidParameter(format!(
                    "document frequency {df} of {term:?} outside 1..={n_docs}"
                )));
            }
            if term_to_dim.insert(term.clone(), dim as u32).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate term {term:?}")));
            }
            terms.push(term);
            doc_freq.push(df);
        }
        Ok(Self {
            terms,
            term_to_dim,
            doc_freq,
            n_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn dim(&self, term: &str) -> Option<u32> {
        self.term_to_dim.get(term).copied()
    }

    pub fn term(&self, dim: u32) -> Option<&str> {
        self.terms.get(dim as usize).map(String::as_str)
    }

    pub fn doc_freq(&self, dim: u32) -> u32 {
        self.doc_freq[dim as usize]
    }

    /// `ln(n_docs / df)` for the term at `dim`.
    pub fn idf(&self, dim: u32) -> f64 {
        (self.n_docs as f64 / self.doc_freq[dim as usize] as f64).ln()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.terms
            .iter()
            .zip(&self.doc_freq)
            .map(|(t, &df)| (t.as_str(), df))
    }

    /// Writes one `term<TAB>doc_freq` line per dim.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "# n_docs {}", self.n_docs).map_err(io)?;
        for (term, df) in self.terms() {
            writeln!(out, "{term}\t{df}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Counts document frequencies and assigns dims in first-occurrence order.
///
/// Terms listed in `stop_words` or occurring in more than
/// `max_df_ratio * n_docs` documents are left out.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    stop_words: &HashSet<String>,
    max_df_ratio: f64,
) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(max_df_ratio > 0.0 && max_df_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "max df ratio {max_df_ratio} outside (0, 1]"
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut df: HashMap<&str, u32> = HashMap::new();
    let mut in_doc: HashSet<&str> = HashSet::new();
    for doc in docs {
        in_doc.clear();
        for tok in doc {
            let tok = tok.as_ref();
            if stop_words.contains(tok) || !in_doc.insert(tok) {
                continue;
            }
            let count = df.entry(tok).or_insert_with(|| {
                order.push(tok);
                0
            });
            *count += 1;
        }
    }
    let n_docs = docs.len();
    let rows: Vec<(String, u32)> = order
        .into_iter()
        .filter_map(|t| {
            let f = df[t];
            (f as f64 / n_docs as f64 <= max_df_ratio).then(|| (t.to_owned(), f))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::from_terms(rows, n_docs)
}

/// Sorted `(dim, tf·idf)` weights for a document, before normalization.
/// Out-of-vocabulary terms and zero-idf terms are skipped.
pub fn tfidf_weights<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> Vec<(u32, f64)> {
    let mut tf: HashMap<u32, u32> = HashMap::new();
    for tok in doc {
        if let Some(d) = vocab.dim(tok.as_ref()) {
            *tf.entry(d).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(u32, f64)> = tf
        .into_iter()
        .map(|(d, count)| (d, count as f64 * vocab.idf(d)))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    entries
}

/// Unit-length TF-IDF vector for `doc`, or `None` when no weight survives.
pub fn vectorize<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> Option<SparseVector> {
    let entries = tfidf_weights(doc, vocab);
    if entries.is_empty() {
        return None;
    }
    let raw = SparseVector::new(vocab.len(), entries).ok()?;
    raw.normalize().ok()
}

/// Unit vectors with their document ids, one row per retained document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusMatrix {
    pub vectors: Vec<SparseVector>,
    pub doc_ids: Vec<String>,
    pub dims: usize,
}

impl CorpusMatrix {
    pub fn new(vectors: Vec<SparseVector>, doc_ids: Vec<String>, dims: usize) -> Result<Self> {
        if vectors.len() != doc_ids.len() {
            return Err(Error::InvalidParameter(format!(
                "{} vectors but {} doc ids",
                vectors.len(),
                doc_ids.len()
            )));
        }
        for (row, v) in vectors.iter().enumerate() {
            check_unit_row(v, row)?;
            if let Some(&d) = v.indices().last() {
                if d as usize >= dims {
                    return Err(Error::InvalidVector(format!(
                        "row {row} has dim {d} outside {dims}"
                    )));
                }
            }
        }
        Ok(Self {
            vectors,
            doc_ids,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.vectors.iter().map(SparseVector::nnz).sum()
    }
}

fn check_unit_row(v: &SparseVector, row: usize) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidVector(format!("row {row} is empty")));
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidVector(format!(
            "row {row} is not unit length (norm {norm})"
        )));
    }
    Ok(())
}

/// Output of the full document pipeline.
#[derive(Debug, Clone)]
pub struct Vectorized {
    pub matrix: CorpusMatrix,
    pub vocabulary: Vocabulary,
    /// Ids of documents whose vector came out empty.
    pub dropped: Vec<String>,
}

/// Tokenizes, builds the vocabulary over every document and vectorizes each
/// one, dropping documents that end up with no weight.
pub fn vectorize_corpus(
    docs: &[(String, String)],
    stop_words: &HashSet<String>,
    max_df_ratio: f64,
) -> Result<Vectorized> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokens: Vec<Vec<String>> = docs.iter().map(|(_, text)| tokenize(text)).collect();
    let vocabulary = build_vocabulary(&tokens, stop_words, max_df_ratio)?;
    let mut vectors = Vec::with_capacity(docs.len());
    let mut doc_ids = Vec::with_capacity(docs.len());
    let mut dropped = Vec::new();
    for ((id, _), toks) in docs.iter().zip(&tokens) {
        match vectorize(toks, &vocabulary) {
            Some(v) => {
                vectors.push(v);
                doc_ids.push(id.clone());
            }
            None => dropped.push(id.clone()),
        }
    }
    let matrix = CorpusMatrix::new(vectors, doc_ids, vocabulary.len())?;
    Ok(Vectorized {
        matrix,
        vocabulary,
        dropped,
    })
}

#[derive(Deserialize)]
struct JsonDoc {
    id: String,
    text: String,
}

/// Reads `{"id": ..., "text": ...}` objects, one per line. Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn load_jsonl(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: JsonDoc =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        docs.push((doc.id, doc.text));
    }
    Ok(docs)
}

/// Plain text, one term per line; blank lines ignored. Terms are lowercased
/// to match the tokenizer.
pub fn load_stop_words(path: &Path) -> Result<HashSet<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut words = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let term = line.trim();
        if !term.is_empty() {
            words.insert(term.to_lowercase());
        }
    }
    Ok(words)
}

/// Path of the row → doc id sidecar written next to a matrix file.
pub fn ids_path(matrix_path: &Path) -> PathBuf {
    let mut p = matrix_path.as_os_str().to_owned();
    p.push(".ids");
    PathBuf::from(p)
}

/// Writes the coordinate text file and its `.ids` sidecar.
pub fn write_matrix(path: &Path, matrix: &CorpusMatrix) -> Result<()> {
    if let Some(id) = matrix.doc_ids.iter().find(|id| id.contains(['\n', '\r'])) {
        return Err(Error::InvalidParameter(format!(
            "doc id {id:?} contains a line break"
        )));
    }
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "{MATRIX_MAGIC} {} {} {}",
        matrix.len(),
        matrix.dims,
        matrix.nnz()
    )
    .map_err(io)?;
    for (row, v) in matrix.vectors.iter().enumerate() {
        for (d, w) in v.iter() {
            writeln!(out, "{row} {d} {w:.16e}").map_err(io)?;
        }
    }
    out.flush().map_err(io)?;

    let ids = ids_path(path);
    let file = File::create(&ids).map_err(|e| Error::io(&ids, e))?;
    let mut out = BufWriter::new(file);
    for id in &matrix.doc_ids {
        writeln!(out, "{id}").map_err(|e| Error::io(&ids, e))?;
    }
    out.flush().map_err(|e| Error::io(&ids, e))
}

/// Reads a matrix written by [`write_matrix`]. When the `.ids` sidecar is
/// missing, rows are named by their index.
pub fn load_matrix(path: &Path) -> Result<CorpusMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MATRIX_MAGIC {
        return Err(Error::parse(
            path,
            1,
            format!("expected `{MATRIX_MAGIC} <n_rows> <n_dims> <nnz>`"),
        ));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::parse(path, 1, format!("bad count {s:?}: {e}")))
    };
    let n_rows = parse_count(fields[1])?;
    let dims = parse_count(fields[2])?;
    let nnz = parse_count(fields[3])?;

    let mut rows: Vec<(Vec<u32>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_rows];
    let mut seen = 0usize;
    let mut last: Option<(usize, u32)> = None;
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(r), Some(d), Some(w), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::parse(path, lineno, "expected `row dim weight`"));
        };
        let bad = |what: &str| Error::parse(path, lineno, format!("bad {what} in {line:?}"));
        let row: usize = r.parse().map_err(|_| bad("row"))?;
        let dim: u32 = d.parse().map_err(|_| bad("dim"))?;
        let weight: f64 = w.parse().map_err(|_| bad("weight"))?;
        if row >= n_rows {
            return Err(Error::parse(
                path,
                lineno,
                format!("row {row} out of bounds for {n_rows} rows"),
            ));
        }
        if dim as usize >= dims {
            return Err(Error::parse(
                path,
                lineno,
                format!("dim {dim} out of bounds for {dims} dims"),
            ));
        }
        if weight == 0.0 || !weight.is_finite() {
            return Err(Error::parse(path, lineno, format!("invalid weight {weight}")));
        }
        if let Some(prev) = last {
            if (row, dim) <= prev {
                return Err(Error::parse(
                    path,
                    lineno,
                    "entries must be sorted by row, then by strictly increasing dim",
                ));
            }
        }
        last = Some((row, dim));
        rows[row].0.push(dim);
        rows[row].1.push(weight);
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {nnz} entries but file has {seen}"),
        ));
    }
    let vectors = rows
        .into_iter()
        .map(|(i, v)| SparseVector::from_parts(dims, i, v))
        .collect::<Result<Vec<_>>>()?;

    let ids = ids_path(path);
    let doc_ids = if ids.exists() {
        let file = File::open(&ids).map_err(|e| Error::io(&ids, e))?;
        let ids_vec = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<Vec<String>>>()
            .map_err(|e| Error::io(&ids, e))?;
        if ids_vec.len() != n_rows {
            return Err(Error::parse(
                &ids,
                ids_vec.len() + 1,
                format!("expected {n_rows} ids, found {}", ids_vec.len()),
            ));
        }
        ids_vec
    } else {
        (0..n_rows).map(|r| r.to_string()).collect()
    };
    CorpusMatrix::new(vectors, doc_ids, dims)
}
