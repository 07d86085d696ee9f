//! Acceptance criteria. Each test prints one `[acceptance]` line with its
//! verdict; run with `--nocapture` to see them.

mod common;

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sskm::bench;
use sskm::corpus::vectorize_corpus;
use sskm::engine::{compute_centroids, run, run_observed, Mode, RunConfig, StopReason};
use sskm::pruneindex::{threshold_entries, MultiIndex, OverlapCounts, DEFAULT_LAMBDAS};
use sskm::sparsevec::{dot, sq_euclidean};
use sskm::synth::{generate, SyntheticSpec};
use sskm::{CorpusMatrix, SparseVector};

use common::random_unit;

fn report(id: u32, name: &str, pass: bool, detail: String, started: Instant) {
    println!(
        "[acceptance] {id}. {name}: {} ({detail}; {:.2}s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

fn history(data: &[SparseVector], config: &RunConfig) -> Vec<Vec<u32>> {
    let mut seen = Vec::new();
    run_observed(data, config, |_, a| seen.push(a.to_vec())).unwrap();
    seen
}

#[test]
fn c1_mode_equivalence() {
    let t = Instant::now();
    let corpus = generate(&SyntheticSpec::new(2_000, 5_000, 10, 1.0, 7)).unwrap();
    let mut failures = Vec::new();
    let mut iterations = 0;
    // default activation (index idle at k = 50) and an always-on index
    for activation in [100, 0] {
        let mut base = RunConfig::new(50, Mode::Baseline, 7);
        base.index_activation_threshold = activation;
        let reference = history(&corpus.vectors, &base);
        iterations = iterations.max(reference.len());
        for mode in [Mode::Ncc, Mode::NccIndex] {
            let h = history(&corpus.vectors, &RunConfig { mode, ..base.clone() });
            if h != reference {
                failures.push(format!("{mode} (activation {activation})"));
            }
        }
    }
    let pass = failures.is_empty();
    report(
        1,
        "mode equivalence",
        pass,
        format!("{iterations} iterations, mismatches: {failures:?}"),
        t,
    );
    assert!(pass);
}

#[test]
fn c2_index_soundness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut hits = 0;
    let mut counts = OverlapCounts::default();
    for _ in 0..1_000 {
        let dims = rng.random_range(20..200);
        let k = rng.random_range(5..=100);
        let centroids: Vec<SparseVector> = (0..k)
            .map(|_| {
                let nnz = rng.random_range(1..=dims.min(40));
                random_unit(&mut rng, dims, nnz)
            })
            .collect();
        let nnz = rng.random_range(1..=dims.min(15));
        let x = random_unit(&mut rng, dims, nnz);
        let lambda = DEFAULT_LAMBDAS[rng.random_range(0..DEFAULT_LAMBDAS.len())];
        let idx = MultiIndex::build(&centroids, &[lambda]).unwrap();
        idx.general().count_overlaps(&x, &mut counts);
        let cands: HashSet<u32> = idx.thresholds()[0]
            .candidates(&x, &counts)
            .into_iter()
            .collect();
        for (j, c) in centroids.iter().enumerate() {
            if dot(c, &x) >= lambda {
                hits += 1;
                if !cands.contains(&(j as u32)) {
                    violations += 1;
                }
            }
        }
    }
    let pass = violations == 0;
    report(
        2,
        "index soundness",
        pass,
        format!("{violations} violations over {hits} centroids at or above λ"),
        t,
    );
    assert!(pass);
}

#[test]
fn c3_support_mass_bound() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut premises = 0;
    for _ in 0..10_000 {
        let dims = rng.random_range(5..100);
        let (cn, xn) = (rng.random_range(1..=dims), rng.random_range(1..=dims));
        let c = random_unit(&mut rng, dims, cn);
        let x = random_unit(&mut rng, dims, xn);
        let mass: f64 = x
            .indices()
            .iter()
            .filter_map(|&d| c.get(d))
            .map(|w| w * w)
            .sum();
        for lambda in DEFAULT_LAMBDAS {
            if mass < lambda * lambda {
                premises += 1;
                if dot(&c, &x) >= lambda {
                    violations += 1;
                }
            }
        }
    }
    let pass = violations == 0;
    report(
        3,
        "support mass bound",
        pass,
        format!("{violations} violations over {premises} premises"),
        t,
    );
    assert!(pass);
}

#[test]
fn c4_linear_time_build() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let m = if i == 0 { 10_000 } else { rng.random_range(1..=10_000) };
        let c = random_unit(&mut rng, 20_000, m);
        for lambda in DEFAULT_LAMBDAS {
            let ops = threshold_entries(&c, lambda).window_ops;
            worst = worst.max(ops as f64 / (2 * m) as f64);
            if ops > 2 * m {
                violations += 1;
            }
        }
    }
    let pass = violations == 0;
    report(
        4,
        "linear-time build",
        pass,
        format!("{violations} violations, worst ops/2m = {worst:.3}"),
        t,
    );
    assert!(pass);
}

#[test]
fn c5_worked_index_examples() {
    let t = Instant::now();
    let c = SparseVector::new(4, vec![(0, 0.9), (1, 0.3), (2, 0.3), (3, 0.1)]).unwrap();
    let at_06 = threshold_entries(&c, 0.6).entries;
    let at_04 = threshold_entries(&c, 0.4).entries;
    let idx = MultiIndex::build(std::slice::from_ref(&c), &[0.4, 0.6]).unwrap();
    let stored = |li: usize| -> Vec<(u32, u32)> {
        (0..4)
            .flat_map(|d| {
                idx.thresholds()[li]
                    .postings(d)
                    .iter()
                    .map(move |e| (d, e.min_overlap))
            })
            .collect()
    };
    let pass = at_06 == vec![(0, 1)]
        && at_04 == vec![(0, 1), (1, 2)]
        && stored(1) == at_06
        && stored(0) == at_04;
    report(
        5,
        "worked index examples",
        pass,
        format!("λ=0.6 → {at_06:?}, λ=0.4 → {at_04:?}"),
        t,
    );
    assert!(pass);
}

#[test]
fn c6_convergence_contract() {
    let t = Instant::now();
    let mut problems = Vec::new();
    let mut total_iters = 0;
    for seed in 0..20u64 {
        let corpus = generate(&SyntheticSpec::new(1_000, 3_000, 10, 1.0, 100 + seed)).unwrap();
        let mode = Mode::ALL[seed as usize % 3];
        let config = RunConfig::new(10 + seed as usize * 3, mode, seed);
        let r = run(&corpus.vectors, &config).unwrap();
        total_iters += r.iterations.len();
        if r.iterations.len() > config.max_iters {
            problems.push(format!("seed {seed}: exceeded max_iters"));
        }
        for w in r.iterations.windows(2) {
            if w[1].objective < w[0].objective {
                problems.push(format!(
                    "seed {seed}: objective fell {} -> {} at iteration {}",
                    w[0].objective, w[1].objective, w[1].iteration
                ));
            }
        }
        match r.stop_reason {
            StopReason::NoReassignments => {
                if r.iterations.last().unwrap().n_reassigned != 0 {
                    problems.push(format!("seed {seed}: stopped with reassignments"));
                }
            }
            StopReason::CentroidDrift => {
                let mut a = r.assignments.clone();
                let mut s = r.sims.clone();
                let next = compute_centroids(&corpus.vectors, &mut a, &mut s, config.k).centroids;
                let drift = r
                    .centroids
                    .iter()
                    .zip(&next)
                    .map(|(p, n)| sq_euclidean(p, n))
                    .fold(0.0, f64::max);
                if drift >= 1e-4 {
                    problems.push(format!("seed {seed}: drift stop at {drift}"));
                }
            }
            StopReason::MaxIterations => {
                problems.push(format!("seed {seed}: did not converge"));
            }
        }
    }
    let pass = problems.is_empty();
    report(
        6,
        "convergence contract",
        pass,
        format!("20 runs, {total_iters} iterations, problems: {problems:?}"),
        t,
    );
    assert!(pass);
}

#[test]
fn c7_operation_count_reduction() {
    let t = Instant::now();
    let corpus = generate(&SyntheticSpec::new(10_000, 20_000, 10, 1.0, 7)).unwrap();
    let base = RunConfig::new(50, Mode::Baseline, 7);
    let cells = bench::run_matrix(&corpus.vectors, &Mode::ALL, &[50, 500], 1, &base).unwrap();
    let cell = |mode: Mode, k: usize| {
        cells
            .iter()
            .find(|c| c.mode == mode && c.k == k)
            .expect("cell present")
    };
    let n = corpus.len() as u64;
    let ratio = |mode: Mode, k: usize| {
        let b = cell(Mode::Baseline, k);
        assert_eq!(b.dot_products, k as u64 * n * b.iterations as u64);
        assert_eq!(cell(mode, k).iterations, b.iterations);
        cell(mode, k).dot_products as f64 / b.dot_products as f64
    };
    let index_500 = ratio(Mode::NccIndex, 500);
    let ncc_500 = ratio(Mode::Ncc, 500);
    let index_50 = ratio(Mode::NccIndex, 50);
    let pass = index_500 <= 0.60 && ncc_500 <= 0.90 && index_500 < index_50;
    let mut csv = Vec::new();
    bench::write_csv(&mut csv, &cells).unwrap();
    print!("{}", String::from_utf8(csv).unwrap());
    report(
        7,
        "operation-count reduction",
        pass,
        format!(
            "k=500: ncc+index {index_500:.3}, ncc {ncc_500:.3} of baseline; k=50: ncc+index {index_50:.3}"
        ),
        t,
    );
    assert!(pass);
}

#[test]
fn c8_tfidf_fixture() {
    let t = Instant::now();
    let docs: Vec<(String, String)> = [
        ("d1", "Apple banana apple"),
        ("d2", "banana, cherry!"),
        ("d3", "The of the"),
    ]
    .iter()
    .map(|(i, s)| (i.to_string(), s.to_string()))
    .collect();
    let stop: HashSet<String> = ["the", "of"].iter().map(|s| s.to_string()).collect();
    let out = vectorize_corpus(&docs, &stop, 1.0).unwrap();

    // hand count: apple df 1, banana df 2, cherry df 1, N = 3
    let v = &out.vocabulary;
    let mut ok = v.len() == 3
        && v.dim("apple") == Some(0)
        && v.dim("banana") == Some(1)
        && v.dim("cherry") == Some(2)
        && (v.doc_freq(0), v.doc_freq(1), v.doc_freq(2)) == (1, 2, 1)
        && v.n_docs() == 3;

    let (l3, l15) = (3f64.ln(), 1.5f64.ln());
    let n1 = (4.0 * l3 * l3 + l15 * l15).sqrt();
    let n2 = (l15 * l15 + l3 * l3).sqrt();
    let expected = [
        vec![(0u32, 2.0 * l3 / n1), (1, l15 / n1)],
        vec![(1u32, l15 / n2), (2, l3 / n2)],
    ];
    ok &= out.matrix.doc_ids == ["d1", "d2"] && out.dropped == ["d3"];
    for (row, exp) in out.matrix.vectors.iter().zip(&expected) {
        ok &= row.indices() == exp.iter().map(|e| e.0).collect::<Vec<_>>().as_slice();
        ok &= row
            .values()
            .iter()
            .zip(exp)
            .all(|(got, e)| (got - e.1).abs() <= 1e-9);
        ok &= (row.norm() - 1.0).abs() <= 1e-9;
    }
    report(
        8,
        "TF-IDF fixture",
        ok,
        format!("dropped {:?}", out.dropped),
        t,
    );
    assert!(ok);
}

#[test]
fn c9_cli_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let matrix_path = dir.path().join("corpus.mtx");
    let corpus: CorpusMatrix = generate(&SyntheticSpec::new(1_500, 4_000, 10, 1.0, 9)).unwrap();
    sskm::corpus::write_matrix(&matrix_path, &corpus).unwrap();

    let run_cli = |threads: &str, tag: &str| -> Vec<u8> {
        let out = dir.path().join(format!("assign-{tag}.tsv"));
        let report_path = dir.path().join(format!("report-{tag}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_sskm"))
            .args(["cluster", "--input"])
            .arg(&matrix_path)
            .args(["--k", "40", "--mode", "ncc+index", "--seed", "3"])
            .args(["--index-activation", "10", "--threads", threads])
            .arg("--out-assignments")
            .arg(&out)
            .arg("--out-report")
            .arg(&report_path)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(Path::new(&out)).unwrap()
    };
    let outputs: Vec<Vec<u8>> = ["1", "2", "8"]
        .iter()
        .enumerate()
        .map(|(i, th)| run_cli(th, &i.to_string()))
        .collect();
    let pass = !outputs[0].is_empty() && outputs.iter().all(|o| *o == outputs[0]);
    report(
        9,
        "CLI determinism",
        pass,
        format!("3 runs with --threads 1, 2, 8; {} bytes", outputs[0].len()),
        t,
    );
    assert!(pass);
}
