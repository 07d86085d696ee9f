"""Quick end-to-end check of the pysskm extension.

Build the module first (see README), so that pysskm.so sits next to this file.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pysskm  # noqa: E402


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def check_vectors():
    v = pysskm.SparseVector(4, [(2, 3.0), (0, 4.0)])
    assert v.indices() == [0, 2]
    assert close(v.norm(), 5.0)
    u = v.normalize()
    assert close(u.norm(), 1.0)
    assert close(u.dot(u), 1.0)
    assert u.get(1) == 0.0
    try:
        pysskm.SparseVector(4, [(1, 0.0)]).normalize()
    except ValueError:
        pass
    else:
        raise AssertionError("zero vector normalized")


def check_tfidf():
    assert pysskm.tokenize("Hello, wörld-42!") == ["hello", "wörld", "42"]
    docs = [("d1", "Apple banana apple"), ("d2", "banana cherry"), ("d3", "the of the")]
    c = pysskm.Corpus.from_documents(docs, stop_words={"the", "of"}, max_df=1.0)
    assert len(c) == 2 and c.dropped == ["d3"]
    vocab = c.vocabulary()
    assert vocab["banana"] == (1, 2)
    l3, l15 = math.log(3), math.log(1.5)
    norm = math.hypot(2 * l3, l15)
    assert close(c.vector(0).get(0), 2 * l3 / norm)


def check_index():
    c = pysskm.SparseVector(4, [(0, 0.9), (1, 0.3), (2, 0.3), (3, 0.1)])
    assert pysskm.threshold_entries(c, 0.6)[0] == [(0, 1)]
    assert pysskm.threshold_entries(c, 0.4)[0] == [(0, 1), (1, 2)]
    other = pysskm.SparseVector(4, [(3, 1.0)])
    idx = pysskm.PruneIndex([c, other])
    assert idx.lambdas == pysskm.DEFAULT_LAMBDAS
    assert idx.select_threshold(0.5) == 0.4
    assert idx.select_threshold(0.05) is None
    x = pysskm.SparseVector(4, [(0, 1.0)])
    assert idx.query(x, 0.5) == [0]
    assert idx.overlap_counts(pysskm.SparseVector(4, [(0, 0.6), (3, 0.8)])) == {0: 2, 1: 1}


def check_cluster():
    corpus = pysskm.Corpus.synthetic(600, 1500, 8, 1.0, 3)
    runs = {
        mode: pysskm.cluster(corpus, 20, mode=mode, seed=4, index_activation=0)
        for mode in ("baseline", "ncc", "ncc+index")
    }
    base = runs["baseline"]
    for r in runs.values():
        assert r.assignments == base.assignments
        assert r.total_dot_products <= base.total_dot_products
    assert sum(base.cluster_sizes()) == len(corpus)
    assert base.stop_reason in ("no_reassignments", "centroid_drift")
    objectives = [it["objective"] for it in base.iterations()]
    assert objectives == sorted(objectives)
    assert len(pysskm.init_kmeanspp(corpus, 5, 1)) == 5

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.mtx")
        corpus.save(path)
        again = pysskm.Corpus.load(path)
        assert again.doc_ids == corpus.doc_ids
        assert again.vector(7) == corpus.vector(7)
        try:
            pysskm.Corpus.load(os.path.join(d, "missing"))
        except IOError:
            pass
        else:
            raise AssertionError("missing file loaded")
    try:
        pysskm.cluster(corpus, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("k = 0 accepted")


if __name__ == "__main__":
    for check in (check_vectors, check_tfidf, check_index, check_cluster):
        check()
        print(f"ok {check.__name__}")
