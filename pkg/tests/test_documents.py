import io
import json

import numpy as np
import pytest

from bayesrose.builder import build
from bayesrose.core import count_partitions, from_nested, leaf, to_nested
from bayesrose.documents import (
    DataError, Dataset, dumps_document, export_newick, ingest, load_document, parse_binarize,
    tree_document, tree_from_document, write_csv, write_dataset,
)
from bayesrose.likelihood import BetaBernoulli

Phylo = pytest.importorskip("Bio.Phylo")


def doc_for(data, gamma=0.5, labels=None):
    ds = Dataset(np.asarray(data), row_labels=labels)
    m = BetaBernoulli(ds.rows)
    t = build(m, gamma)
    return tree_document(t, gamma, {"alpha": m.alpha.tolist(), "beta": m.beta.tolist()}, ds), t, m


def newick_shape(clade):
    if clade.is_terminal():
        return clade.name
    return frozenset(newick_shape(c) for c in clade.clades)


def local_shape(tree, name):
    if tree.is_leaf:
        return name(tree.data_index)
    return frozenset(local_shape(c, name) for c in tree.children)


class TestIngest:
    def write(self, tmp_path, text, name="d.csv"):
        p = tmp_path / name
        p.write_text(text)
        return p

    def test_threshold(self, tmp_path):
        ds = ingest(self.write(tmp_path, "32,31\n40,0\n"), binarize="threshold:32")
        assert ds.rows.tolist() == [[1, 0], [1, 0]]

    def test_nonzero_keeps_zero_column(self, tmp_path):
        ds = ingest(self.write(tmp_path, "0,3.5\n0,0\n0,-1\n"), binarize="nonzero")
        assert ds.rows[:, 0].tolist() == [0, 0, 0]
        assert ds.rows[:, 1].tolist() == [1, 0, 1]

    def test_presence_alias(self):
        x = np.array([[0.0, 2.0]])
        assert np.array_equal(parse_binarize("presence")(x), parse_binarize("nonzero")(x))

    def test_header_and_labels(self, tmp_path):
        p = self.write(tmp_path, "name,a,b\nr1,1,0\nr2,0,1\n")
        ds = ingest(p, row_labels=True)
        assert ds.column_labels == ["a", "b"] and ds.row_labels == ["r1", "r2"]
        assert ds.rows.dtype == np.int64

    def test_tsv(self, tmp_path):
        ds = ingest(self.write(tmp_path, "1\t0\n0\t1\n", "d.tsv"), delimiter="\t")
        assert ds.shape == (2, 2)

    def test_ragged(self, tmp_path):
        with pytest.raises(DataError, match=":2:"):
            ingest(self.write(tmp_path, "1,0\n1\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(DataError, match=":3: non-numeric"):
            ingest(self.write(tmp_path, "1,0\n0,1\n0,x\n"))

    def test_unknown_rule(self, tmp_path):
        with pytest.raises(DataError):
            ingest(self.write(tmp_path, "1,0\n"), binarize="median")

    def test_provenance(self, tmp_path):
        ds = ingest(self.write(tmp_path, "5,0\n"), binarize="threshold:2")
        assert ds.provenance["binarize"] == "threshold:2"

    @pytest.mark.parametrize("labels", [False, True])
    def test_round_trip(self, tmp_path, labels):
        rows = np.random.default_rng(0).integers(0, 2, size=(6, 4))
        ds = Dataset(rows, [f"s{i}" for i in range(6)] if labels else None, list("abcd"))
        p = tmp_path / "out.csv"
        write_dataset(ds, p)
        back = ingest(p, header=True, row_labels=labels)
        assert back == ds

    def test_float_round_trip(self, tmp_path):
        rows = np.random.default_rng(1).normal(size=(3, 2))
        p = tmp_path / "f.csv"
        write_dataset(Dataset(rows), p)
        assert np.array_equal(ingest(p).rows, rows)


class TestDocument:
    def test_single_leaf(self):
        doc, _, _ = doc_for([[1, 0, 1]])
        assert len(doc["nodes"]) == 1 and doc["nodes"][0]["leaf"] == 0
        assert doc["n_partitions"] == 1

    def test_fields(self):
        doc, t, _ = doc_for(np.random.default_rng(2).integers(0, 2, size=(9, 5)))
        assert doc["schema_version"] == 1 and doc["root"] == t.node_id
        assert doc["nodes"][-1]["id"] == t.node_id
        assert doc["n_partitions"] == count_partitions(t)
        rec = doc["nodes"][-1]
        assert {"id", "n_leaves", "log_f", "log_p", "pi", "responsibility", "children"} <= set(rec)
        assert len(doc["dataset"]["fingerprint"]) == 64

    def test_provenance_closure(self):
        data = np.random.default_rng(3).integers(0, 2, size=(15, 6))
        doc, _, _ = doc_for(data)
        doc = json.loads(dumps_document(doc))
        hyper = doc["hyperparameters"]
        model = BetaBernoulli(data, np.array(hyper["alpha"]), np.array(hyper["beta"]))
        assert Dataset(data).fingerprint() == doc["dataset"]["fingerprint"]
        t = tree_from_document(doc, model, hyper["gamma"])
        assert abs(t.log_p - doc["log_p"]) <= 1e-9
        for rec, node in zip(doc["nodes"], t.postorder()):
            assert rec["id"] == node.node_id
            assert abs(rec["log_p"] - node.log_p) <= 1e-9

    def test_deterministic(self):
        data = np.random.default_rng(4).integers(0, 2, size=(12, 6))
        assert dumps_document(doc_for(data)[0]) == dumps_document(doc_for(data)[0])

    def test_rejects_unknown_version(self, tmp_path):
        doc, _, _ = doc_for([[1, 0], [0, 1]])
        doc["schema_version"] = 99
        p = tmp_path / "t.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="schema version"):
            load_document(p)

    def test_rejects_garbage(self, tmp_path):
        p = tmp_path / "t.json"
        p.write_text("{not json")
        with pytest.raises(DataError):
            load_document(p)

    def test_labels(self):
        doc, _, _ = doc_for([[1, 0], [0, 1], [1, 1]], labels=["x", "y", "z"])
        assert {n["label"] for n in doc["nodes"] if "leaf" in n} == {"x", "y", "z"}


class TestNewick:
    def structural(self, tree):
        return tree_document(tree, 0.5, {})

    def scored(self, nested, n):
        m = BetaBernoulli(np.random.default_rng(5).integers(0, 2, size=(n, 4)))
        return from_nested(nested, m, 0.5)

    def test_leaf(self):
        m = BetaBernoulli(np.array([[1]]))
        assert export_newick(self.structural(leaf(0, m))) == "L0;"

    def test_flat(self):
        doc = self.structural(self.scored((0, 1, 2), 3))
        assert export_newick(doc, annotate=False) == "(L0,L1,L2);"

    def test_annotations(self):
        doc = self.structural(self.scored(((0, 1), 2), 3))
        text = export_newick(doc)
        assert text.count("[&log_p=") == 2 and text.endswith("];")

    def test_quoting(self):
        doc = self.structural(self.scored((0, 1), 2))
        assert export_newick(doc, ["a b", "it's"], annotate=False) == "('a b','it''s');"

    @pytest.mark.parametrize("seed", range(4))
    def test_parse_back_with_biopython(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.integers(0, 2, size=(25, 6))
        labels = [f"row{i}" for i in range(25)]
        doc, t, _ = doc_for(data, labels=labels)
        parsed = Phylo.read(io.StringIO(export_newick(doc)), "newick")
        assert newick_shape(parsed.root) == local_shape(t, lambda i: labels[i])
        assert parsed.count_terminals() == 25

    def test_non_binary_nodes_kept(self):
        doc = self.structural(self.scored(((0, 1, 2, 3), 4), 5))
        parsed = Phylo.read(io.StringIO(export_newick(doc)), "newick")
        assert sorted(len(c.clades) for c in parsed.find_clades() if c.clades) == [2, 4]


def test_write_csv_precision():
    out = io.StringIO()
    write_csv([{"a": 0.1, "b": 3, "c": "x"}], ["a", "b", "c"], out)
    assert out.getvalue() == "a,b,c\n0.10000000000000001,3,x\n"


def test_tree_from_document_structure():
    doc, t, _ = doc_for(np.random.default_rng(6).integers(0, 2, size=(10, 4)))
    assert to_nested(tree_from_document(doc)) == to_nested(t)
