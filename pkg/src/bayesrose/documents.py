"""Dataset ingestion and tree serialisation.

Datasets are delimited numeric text with an optional header row and an
optional leading column of row labels. Fitted trees are written as a
versioned JSON document holding every node's cached quantities, or as
Newick text with the marginal and mixing proportion in node comments.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import count_partitions, leaf, log_mixing, mixing_proportion, node

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Malformed input data or documents."""


@dataclass
class Dataset:
    rows: np.ndarray
    row_labels: list | None = None
    column_labels: list | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows)
        if self.rows.ndim != 2:
            raise DataError("dataset must be a 2-d matrix")
        n, d = self.rows.shape
        if self.row_labels is not None and len(self.row_labels) != n:
            raise DataError("row_labels length does not match the number of rows")
        if self.column_labels is not None and len(self.column_labels) != d:
            raise DataError("column_labels length does not match the number of columns")

    @property
    def shape(self):
        return self.rows.shape

    def fingerprint(self):
        """SHA-256 of the matrix shape and values (not of the labels)."""
        h = hashlib.sha256()
        rows = self.rows
        kind = "int" if np.issubdtype(rows.dtype, np.integer) else "float"
        arr = rows.astype("<i8" if kind == "int" else "<f8")
        h.update(f"{kind}:{rows.shape[0]}x{rows.shape[1]}:".encode())
        h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.rows.shape == other.rows.shape and np.array_equal(self.rows, other.rows)
                and self.row_labels == other.row_labels
                and self.column_labels == other.column_labels)


def parse_binarize(rule):
    """Return a function mapping a float matrix to 0/1 according to ``rule``.

    ``none`` leaves values alone, ``nonzero`` and ``presence`` map any
    non-zero value to 1, and ``threshold:K`` maps values ``>= K`` to 1.
    """
    rule = (rule or "none").strip().lower()
    if rule == "none":
        return None
    if rule in ("nonzero", "presence"):
        return lambda x: (x != 0).astype(np.int64)
    if rule.startswith("threshold:"):
        try:
            k = float(rule.split(":", 1)[1])
        except ValueError:
            raise DataError(f"bad threshold in binarization rule {rule!r}") from None
        return lambda x: (x >= k).astype(np.int64)
    raise DataError(f"unknown binarization rule {rule!r}")


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def ingest(path, delimiter=",", header=None, row_labels=False, binarize="none"):
    """Read a delimited numeric file into a :class:`Dataset`.

    ``header=None`` detects a header from non-numeric cells in the first row.
    With ``row_labels`` the first column holds row names. Integral data are
    stored as ``int64``. Raises :class:`DataError` with the offending line.
    """
    convert = parse_binarize(binarize)
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    records = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text), delimiter=delimiter))
               if r and any(c.strip() for c in r)]
    if not records:
        raise DataError(f"{path}: no data rows")
    first = records[0][1]
    cells = first[1:] if row_labels else first
    if header is None:
        header = not all(_is_number(c) for c in cells)
    column_labels = None
    if header:
        column_labels = [c.strip() for c in cells]
        records = records[1:]
        if not records:
            raise DataError(f"{path}: header but no data rows")
    labels = [] if row_labels else None
    values = []
    width = None
    for lineno, rec in records:
        if row_labels:
            labels.append(rec[0].strip())
            rec = rec[1:]
        if width is None:
            width = len(rec)
        elif len(rec) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(rec)}")
        try:
            values.append([float(c) for c in rec])
        except ValueError:
            bad = next(c for c in rec if not _is_number(c))
            raise DataError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
    if column_labels is not None and len(column_labels) != width:
        raise DataError(f"{path}: header has {len(column_labels)} columns, data has {width}")
    rows = np.array(values, dtype=float)
    if not np.all(np.isfinite(rows)):
        raise DataError(f"{path}: non-finite values")
    if convert is not None:
        rows = convert(rows)
    elif np.all(rows == np.round(rows)) and np.all(np.abs(rows) < 2 ** 53):
        rows = rows.astype(np.int64)
    return Dataset(rows, labels, column_labels,
                   {"path": str(path), "binarize": (binarize or "none"), "delimiter": delimiter})


def format_float(x):
    return format(float(x), ".17g")


def _cell(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format_float(x)


def write_dataset(dataset, path_or_stream, delimiter=","):
    """Write ``dataset`` in the format :func:`ingest` reads."""
    own = isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__")
    fh = open(path_or_stream, "w", newline="", encoding="utf-8") if own else path_or_stream
    try:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if dataset.column_labels is not None:
            w.writerow(([""] if dataset.row_labels is not None else []) + dataset.column_labels)
        for i, row in enumerate(dataset.rows):
            cells = [_cell(v) for v in row.tolist()]
            if dataset.row_labels is not None:
                cells = [dataset.row_labels[i]] + cells
            w.writerow(cells)
    finally:
        if own:
            fh.close()


def write_csv(rows, header, path_or_stream):
    """Write dict rows as CSV with floats at 17 significant digits."""
    own = isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__")
    fh = open(path_or_stream, "w", newline="", encoding="utf-8") if own else path_or_stream
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r[h]) if isinstance(r[h], (float, int, np.floating, np.integer))
                        and not isinstance(r[h], bool) else r[h] for h in header])
    finally:
        if own:
            fh.close()


def _float(x):
    x = float(x)
    if not math.isfinite(x):
        raise DataError("non-finite value in tree document")
    return x


def tree_document(tree, gamma, hyperparameters, dataset=None, model_name="beta-bernoulli",
                  mode="rose", extra=None):
    """JSON-ready description of a scored tree.

    Nodes are listed in post-order, so the root comes last.
    """
    nodes = []
    for t in tree.postorder():
        rec = {"id": int(t.node_id), "n_leaves": int(t.n_leaves),
               "log_f": _float(t.log_f), "log_p": _float(t.log_p)}
        if t.is_leaf:
            rec["leaf"] = int(t.data_index)
            rec["pi"] = 1.0
            rec["responsibility"] = 1.0
        else:
            rec["children"] = [int(c.node_id) for c in t.children]
            rec["pi"] = mixing_proportion(t.n_children, gamma)
            r = math.exp(min(0.0, log_mixing(t.n_children, gamma)[0] + t.log_f - t.log_p))
            rec["responsibility"] = r
        if dataset is not None and dataset.row_labels is not None and t.is_leaf:
            rec["label"] = dataset.row_labels[t.data_index]
        nodes.append(rec)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": model_name,
        "mode": mode,
        "hyperparameters": dict(hyperparameters, gamma=float(gamma)),
        "root": int(tree.node_id),
        "log_p": _float(tree.log_p),
        "n_partitions": count_partitions(tree),
        "nodes": nodes,
    }
    if dataset is not None:
        doc["dataset"] = {"fingerprint": dataset.fingerprint(),
                          "n_rows": int(dataset.shape[0]), "n_cols": int(dataset.shape[1]),
                          **{k: v for k, v in dataset.provenance.items() if k != "path"}}
    if extra:
        doc.update(extra)
    return doc


def dumps_document(doc):
    return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def dump_document(doc, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_document(doc))


def check_document(doc):
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise DataError("not a tree document")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise DataError(f"unsupported tree document schema version {doc['schema_version']!r}")
    ids = {n["id"] for n in doc["nodes"]}
    if doc["root"] not in ids:
        raise DataError("root id missing from nodes")
    return doc


def load_document(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    return check_document(doc)


def tree_from_document(doc, model=None, gamma=None):
    """Rebuild the tree structure (scored if ``model`` and ``gamma`` are given)."""
    check_document(doc)
    by_id = {n["id"]: n for n in doc["nodes"]}
    built = {}
    for rec in doc["nodes"]:
        if "leaf" in rec:
            built[rec["id"]] = leaf(rec["leaf"], model, rec["id"])
        else:
            try:
                kids = [built[c] for c in rec["children"]]
            except KeyError:
                raise DataError(f"node {rec['id']} listed before its children") from None
            built[rec["id"]] = node(kids, model, gamma, rec["id"])
    if set(built) != set(by_id):
        raise DataError("duplicate node ids in document")
    return built[doc["root"]]


_NEWICK_SPECIAL = set(" \t\n()[]':;,")


def _newick_name(name):
    name = str(name)
    if name and not (_NEWICK_SPECIAL & set(name)):
        return name
    return "'" + name.replace("'", "''") + "'"


def export_newick(doc, labels=None, annotate=True):
    """Newick text for a tree document.

    Leaves are named from ``labels`` (or the document's leaf labels), else
    ``L<index>``. Internal nodes carry ``[&log_p=...,pi=...]`` comments.
    """
    check_document(doc)

    def name(rec):
        i = rec["leaf"]
        if labels is not None:
            return _newick_name(labels[i])
        return _newick_name(rec.get("label", f"L{i}"))

    out = {}
    for rec in doc["nodes"]:
        if "leaf" in rec:
            out[rec["id"]] = name(rec)
        else:
            text = "(" + ",".join(out.pop(c) for c in rec["children"]) + ")"
            if annotate:
                text += (f"[&log_p={format_float(rec['log_p'])},"
                         f"pi={format_float(rec['pi'])}]")
            out[rec["id"]] = text
    return out[doc["root"]] + ";"
