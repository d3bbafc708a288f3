"""Portable predictor DSL plus the greedy tree learners built on it.

Submitted groups and models enter the system only as documents in this DSL,
so everything here is deterministic, total, and serializable. Binary
predictors output {0, 1}; ternary predictors additionally output ``DEFER``,
meaning "leave the decision to the deployed model".
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import (
    NUMERIC,
    DatasetError,
    FeatureSchema,
    LabeledDataset,
    SchemaMismatchError,
)

LE = "le"
EQ = "eq"
DEFER = 2

BINARY = "binary"
TERNARY = "ternary"
REAL = "real"


class DocumentError(ValueError):
    """Malformed, unknown, or structurally invalid predictor document."""


class _Cols:
    """Column view over a single feature mapping, for scalar evaluation."""

    def __init__(self, mapping):
        self._mapping = dict(mapping)
        self.n = 1

    def column(self, name):
        try:
            return np.asarray([float(self._mapping[name])])
        except KeyError:
            raise SchemaMismatchError(f"feature {name!r} is not in the schema") from None

    def row(self, i):
        return self._mapping


def eval_rows(model, source, idx: np.ndarray) -> np.ndarray:
    """Evaluate ``model`` on the rows of ``source`` selected by ``idx``."""
    if isinstance(model, (Predictor, RealRegressor)):
        return model._eval(source, idx)
    method = getattr(model, "_eval_rows", None)
    if method is not None:
        return method(source, idx)
    if callable(model):
        values = [model(source.row(int(i))) for i in idx]
        return np.asarray(values, dtype=np.int64)
    raise TypeError(f"cannot evaluate object of type {type(model).__name__}")


class Predictor:
    """Base of the tagged union; subclasses are frozen dataclasses."""

    kind = ""
    output = BINARY

    def predict_dataset(self, data: LabeledDataset) -> np.ndarray:
        return self._eval(data, np.arange(data.n))

    def __call__(self, x) -> int:
        return evaluate(self, x)

    def _eval(self, source, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def evaluate(p, x) -> int:
    """Evaluate a predictor on one feature mapping ``{name: value}``."""
    out = eval_rows(p, _Cols(x), np.asarray([0]))
    return int(out[0])


def _compare(column: np.ndarray, cmp: str, value: float) -> np.ndarray:
    if cmp == LE:
        return column <= value
    if cmp == EQ:
        return column == value
    raise DocumentError(f"unknown comparison {cmp!r}")


@dataclass(frozen=True)
class Constant(Predictor):
    label: int

    kind = "constant"

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DocumentError("constant label must be 0 or 1")

    def _eval(self, source, idx):
        return np.full(len(idx), self.label, dtype=np.int64)

    def to_doc(self):
        return {"kind": self.kind, "label": self.label}


@dataclass(frozen=True)
class Stump(Predictor):
    feature: str
    cmp: str
    value: float
    left: int
    right: int

    kind = "stump"

    def __post_init__(self):
        if self.cmp not in (LE, EQ):
            raise DocumentError(f"unknown comparison {self.cmp!r}")
        if self.left not in (0, 1) or self.right not in (0, 1):
            raise DocumentError("stump labels must be 0 or 1")
        object.__setattr__(self, "value", float(self.value))

    def _eval(self, source, idx):
        hit = _compare(source.column(self.feature)[idx], self.cmp, self.value)
        return np.where(hit, self.left, self.right).astype(np.int64)

    def to_doc(self):
        return {
            "kind": self.kind,
            "feature": self.feature,
            "cmp": self.cmp,
            "value": self.value,
            "left": self.left,
            "right": self.right,
        }


@dataclass(frozen=True)
class Clause:
    feature: str
    cmp: str
    value: float

    def __post_init__(self):
        if self.cmp not in (LE, EQ):
            raise DocumentError(f"unknown comparison {self.cmp!r}")
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Conjunction(Predictor):
    """1 iff every clause holds; the empty conjunction is identically 1."""

    clauses: tuple[Clause, ...]

    kind = "conjunction"

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))

    def _eval(self, source, idx):
        hit = np.ones(len(idx), dtype=bool)
        for clause in self.clauses:
            hit &= _compare(source.column(clause.feature)[idx], clause.cmp, clause.value)
        return hit.astype(np.int64)

    def to_doc(self):
        return {
            "kind": self.kind,
            "clauses": [
                {"feature": c.feature, "cmp": c.cmp, "value": c.value} for c in self.clauses
            ],
        }


@dataclass(frozen=True)
class Split:
    feature: str
    cmp: str
    value: float
    left: int
    right: int

    def __post_init__(self):
        if self.cmp not in (LE, EQ):
            raise DocumentError(f"unknown comparison {self.cmp!r}")
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Leaf:
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DocumentError("tree leaf label must be 0 or 1")


@dataclass(frozen=True)
class ValueLeaf:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


def _check_node_indices(nodes, leaf_types):
    # Children strictly greater than their parent index: walks are strictly
    # increasing over a finite array, so every path terminates at a leaf.
    if not nodes:
        raise DocumentError("tree must contain at least one node")
    for i, node in enumerate(nodes):
        if isinstance(node, Split):
            for child in (node.left, node.right):
                if not isinstance(child, int) or child <= i or child >= len(nodes):
                    raise DocumentError(
                        f"node {i} has child index {child}; children must lie in ({i}, {len(nodes)})"
                    )
        elif not isinstance(node, leaf_types):
            raise DocumentError(f"node {i} is neither a split nor a leaf")


def _eval_nodes(nodes, source, idx, out):
    stack = [(0, np.arange(len(idx)))]
    while stack:
        node_id, positions = stack.pop()
        if positions.size == 0:
            continue
        node = nodes[node_id]
        if isinstance(node, Split):
            column = source.column(node.feature)[idx[positions]]
            hit = _compare(column, node.cmp, node.value)
            stack.append((node.left, positions[hit]))
            stack.append((node.right, positions[~hit]))
        elif isinstance(node, Leaf):
            out[positions] = node.label
        else:
            out[positions] = node.value
    return out


@dataclass(frozen=True)
class Tree(Predictor):
    nodes: tuple

    kind = "tree"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        _check_node_indices(self.nodes, (Leaf,))

    def _eval(self, source, idx):
        return _eval_nodes(self.nodes, source, idx, np.empty(len(idx), dtype=np.int64))

    def to_doc(self):
        out = []
        for node in self.nodes:
            if isinstance(node, Split):
                out.append(
                    {
                        "feature": node.feature,
                        "cmp": node.cmp,
                        "value": node.value,
                        "left": node.left,
                        "right": node.right,
                    }
                )
            else:
                out.append({"label": node.label})
        return {"kind": self.kind, "nodes": out}


@dataclass(frozen=True)
class RealRegressor:
    """Depth-limited regression tree; leaves carry real values."""

    nodes: tuple

    kind = "regressor"
    output = REAL

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        _check_node_indices(self.nodes, (ValueLeaf,))

    def predict_dataset(self, data: LabeledDataset) -> np.ndarray:
        return self._eval(data, np.arange(data.n))

    def _eval(self, source, idx):
        return _eval_nodes(self.nodes, source, idx, np.empty(len(idx), dtype=np.float64))

    def to_doc(self):
        out = []
        for node in self.nodes:
            if isinstance(node, Split):
                out.append(
                    {
                        "feature": node.feature,
                        "cmp": node.cmp,
                        "value": node.value,
                        "left": node.left,
                        "right": node.right,
                    }
                )
            else:
                out.append({"value": node.value})
        return {"kind": self.kind, "nodes": out}


@dataclass(frozen=True)
class TernaryFromCosts(Predictor):
    """Pick the cheapest of {defer: 0, predict 0: cost0(x), predict 1: cost1(x)}.

    Ties break toward deferring, then toward 0: a label is emitted only when
    its predicted cost strictly beats doing nothing.
    """

    cost0: RealRegressor
    cost1: RealRegressor

    kind = "ternary_from_costs"
    output = TERNARY

    def _eval(self, source, idx):
        r0 = self.cost0._eval(source, idx)
        r1 = self.cost1._eval(source, idx)
        out = np.full(len(idx), DEFER, dtype=np.int64)
        out[(r0 < 0) & (r0 <= r1)] = 0
        out[(r1 < 0) & (r1 < r0)] = 1
        return out

    def to_doc(self):
        return {"kind": self.kind, "cost0": self.cost0.to_doc(), "cost1": self.cost1.to_doc()}


@dataclass(frozen=True)
class DerivedGroup(Predictor):
    """Indicator of the region where a ternary predictor does not defer."""

    ternary: Predictor

    kind = "derived_group"

    def __post_init__(self):
        if getattr(self.ternary, "output", None) != TERNARY:
            raise DocumentError("derived_group requires a ternary predictor")

    def _eval(self, source, idx):
        return (self.ternary._eval(source, idx) != DEFER).astype(np.int64)

    def to_doc(self):
        return {"kind": self.kind, "ternary": self.ternary.to_doc()}


@dataclass(frozen=True)
class DerivedModel(Predictor):
    """A ternary predictor's labels, with deferrals mapped to 0."""

    ternary: Predictor

    kind = "derived_model"

    def __post_init__(self):
        if getattr(self.ternary, "output", None) != TERNARY:
            raise DocumentError("derived_model requires a ternary predictor")

    def _eval(self, source, idx):
        raw = self.ternary._eval(source, idx)
        return np.where(raw == DEFER, 0, raw).astype(np.int64)

    def to_doc(self):
        return {"kind": self.kind, "ternary": self.ternary.to_doc()}


def derive_group(p):
    """Group indicator g_p: 1 exactly where the ternary predictor commits."""
    if isinstance(p, Predictor):
        return DerivedGroup(p)
    return lambda x: 0 if p(x) == DEFER else 1


def derive_model(p):
    """Binary model h_p: the committed label, 0 wherever the predictor defers."""
    if isinstance(p, Predictor):
        return DerivedModel(p)

    def h(x):
        raw = p(x)
        return 0 if raw == DEFER else raw

    return h


# --- documents -------------------------------------------------------------


def canonical_json(doc) -> str:
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def serialize(p) -> str:
    """Canonical document text; byte equality implies structural equality."""
    return canonical_json(p.to_doc())


def _require_keys(doc, keys, kind):
    if set(doc) != set(keys) | {"kind"}:
        raise DocumentError(f"{kind} document must have exactly the fields {sorted(keys)}")


def _clause_from_doc(item) -> Clause:
    if not isinstance(item, dict) or set(item) != {"feature", "cmp", "value"}:
        raise DocumentError("clause must have fields feature, cmp, value")
    return Clause(str(item["feature"]), str(item["cmp"]), float(item["value"]))


def _nodes_from_doc(items, kind, leaf_key):
    if not isinstance(items, list):
        raise DocumentError(f"{kind} nodes must be a list")
    nodes = []
    for item in items:
        if not isinstance(item, dict):
            raise DocumentError(f"{kind} node must be an object")
        if set(item) == {leaf_key}:
            if leaf_key == "label":
                if not isinstance(item[leaf_key], int):
                    raise DocumentError("tree leaf label must be an integer")
                nodes.append(Leaf(item[leaf_key]))
            else:
                nodes.append(ValueLeaf(float(item[leaf_key])))
        elif set(item) == {"feature", "cmp", "value", "left", "right"}:
            if not isinstance(item["left"], int) or not isinstance(item["right"], int):
                raise DocumentError(f"{kind} child indices must be integers")
            nodes.append(
                Split(str(item["feature"]), str(item["cmp"]), float(item["value"]),
                      item["left"], item["right"])
            )
        else:
            raise DocumentError(f"{kind} node has unexpected fields {sorted(item)}")
    return tuple(nodes)


def predictor_from_doc(doc) -> Predictor | RealRegressor:
    if not isinstance(doc, dict):
        raise DocumentError("predictor document must be an object")
    kind = doc.get("kind")
    if kind == "constant":
        _require_keys(doc, {"label"}, kind)
        if not isinstance(doc["label"], int):
            raise DocumentError("constant label must be an integer")
        return Constant(doc["label"])
    if kind == "stump":
        _require_keys(doc, {"feature", "cmp", "value", "left", "right"}, kind)
        if not isinstance(doc["left"], int) or not isinstance(doc["right"], int):
            raise DocumentError("stump labels must be integers")
        return Stump(str(doc["feature"]), str(doc["cmp"]), float(doc["value"]),
                     doc["left"], doc["right"])
    if kind == "conjunction":
        _require_keys(doc, {"clauses"}, kind)
        if not isinstance(doc["clauses"], list):
            raise DocumentError("conjunction clauses must be a list")
        return Conjunction(tuple(_clause_from_doc(c) for c in doc["clauses"]))
    if kind == "tree":
        _require_keys(doc, {"nodes"}, kind)
        return Tree(_nodes_from_doc(doc["nodes"], kind, "label"))
    if kind == "regressor":
        _require_keys(doc, {"nodes"}, kind)
        return RealRegressor(_nodes_from_doc(doc["nodes"], kind, "value"))
    if kind == "ternary_from_costs":
        _require_keys(doc, {"cost0", "cost1"}, kind)
        cost0 = predictor_from_doc(doc["cost0"])
        cost1 = predictor_from_doc(doc["cost1"])
        if not isinstance(cost0, RealRegressor) or not isinstance(cost1, RealRegressor):
            raise DocumentError("ternary_from_costs requires two regressor documents")
        return TernaryFromCosts(cost0, cost1)
    if kind == "derived_group":
        _require_keys(doc, {"ternary"}, kind)
        return DerivedGroup(predictor_from_doc(doc["ternary"]))
    if kind == "derived_model":
        _require_keys(doc, {"ternary"}, kind)
        return DerivedModel(predictor_from_doc(doc["ternary"]))
    raise DocumentError(f"unknown predictor kind {kind!r}")


def deserialize(text: str) -> Predictor | RealRegressor:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"predictor document is not valid JSON: {exc}") from None
    return predictor_from_doc(doc)


def referenced_features(p) -> set[str]:
    names: set[str] = set()

    def walk(obj):
        if isinstance(obj, (Stump, Clause, Split)):
            names.add(obj.feature)
        if isinstance(obj, Conjunction):
            for c in obj.clauses:
                walk(c)
        if isinstance(obj, (Tree, RealRegressor)):
            for node in obj.nodes:
                walk(node)
        if isinstance(obj, TernaryFromCosts):
            walk(obj.cost0)
            walk(obj.cost1)
        if isinstance(obj, (DerivedGroup, DerivedModel)):
            walk(obj.ternary)

    walk(p)
    return names


def validate_against_schema(p, schema: FeatureSchema) -> None:
    for name in sorted(referenced_features(p)):
        schema.index_of(name)


# --- tree learners ----------------------------------------------------------


def _gini_score(n_left, ones_left, n_right, ones_right):
    # Weighted child impurity, up to the constant factor 1/n of the parent.
    zeros_left = n_left - ones_left
    zeros_right = n_right - ones_right
    left = n_left - (zeros_left * zeros_left + ones_left * ones_left) / np.maximum(n_left, 1)
    right = n_right - (zeros_right * zeros_right + ones_right * ones_right) / np.maximum(n_right, 1)
    return left + right


def _best_split(data: LabeledDataset, idx, values, score_fn, min_leaf):
    """Shared candidate search. ``score_fn(nL, aggL, nR, aggR)`` returns the
    quantity to minimise; ties prefer the lowest feature index, then the
    smallest threshold or category value."""
    n = len(idx)
    best = None
    best_score = None
    for j, feat in enumerate(data.schema.features):
        col = data.X[idx, j]
        if feat.kind == NUMERIC:
            order = np.argsort(col, kind="stable")
            sv = col[order]
            st = values[order]
            boundaries = np.nonzero(sv[:-1] != sv[1:])[0]
            if boundaries.size == 0:
                continue
            n_left = boundaries + 1.0
            agg_left = np.cumsum(st)[boundaries]
            n_right = n - n_left
            agg_right = st.sum() - agg_left
            scores = score_fn(n_left, agg_left, n_right, agg_right)
            valid = (n_left >= min_leaf) & (n_right >= min_leaf)
            if not valid.any():
                continue
            scores = np.where(valid, scores, np.inf)
            k = int(np.argmin(scores))
            if best_score is None or scores[k] < best_score:
                best_score = float(scores[k])
                threshold = (sv[boundaries[k]] + sv[boundaries[k] + 1]) / 2.0
                best = (feat.name, LE, float(threshold))
        else:
            for v in np.unique(col):
                mask = col == v
                n_left = float(mask.sum())
                n_right = n - n_left
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                agg_left = float(values[mask].sum())
                score = float(score_fn(n_left, agg_left, n_right, values.sum() - agg_left))
                if best_score is None or score < best_score:
                    best_score = score
                    best = (feat.name, EQ, float(v))
    if best is None:
        return None
    return best, best_score


def fit_tree_classifier(data: LabeledDataset, max_depth: int, min_leaf: int = 1) -> Predictor:
    """Greedy top-down classifier minimising weighted Gini impurity.

    Numeric splits test midpoints of consecutive distinct values; categorical
    splits test equality with each observed value. Leaves take the majority
    label with ties going to 0. Splitting stops at the depth limit, at the
    ``min_leaf`` floor, at pure nodes, and when no candidate split exists;
    zero-gain plateaus (XOR-style targets) are split through rather than
    treated as terminal.
    """
    if data.n == 0:
        raise DatasetError("cannot fit a tree on an empty dataset")
    if max_depth < 0:
        raise DatasetError("max_depth must be >= 0")
    if min_leaf < 1:
        raise DatasetError("min_leaf must be >= 1")
    y = data.y.astype(np.float64)
    nodes: list = []

    def leaf_label(idx) -> int:
        ones = int(data.y[idx].sum())
        return 1 if ones > len(idx) - ones else 0

    def build(idx, depth):
        ones = int(data.y[idx].sum())
        pure = ones == 0 or ones == len(idx)
        found = None
        if depth < max_depth and not pure and len(idx) >= 2 * min_leaf:
            found = _best_split(data, idx, y[idx], _gini_score, min_leaf)
        if found is not None:
            (feature, cmp, value), _ = found
            column = data.X[idx, data.schema.index_of(feature)]
            mask = _compare(column, cmp, value)
            position = len(nodes)
            nodes.append(None)
            left = build(idx[mask], depth + 1)
            right = build(idx[~mask], depth + 1)
            nodes[position] = Split(feature, cmp, value, left, right)
            return position
        nodes.append(Leaf(leaf_label(idx)))
        return len(nodes) - 1

    if max_depth == 0:
        return Constant(leaf_label(np.arange(data.n)))
    build(np.arange(data.n), 0)
    if len(nodes) == 1:
        return Constant(nodes[0].label)
    return Tree(tuple(nodes))


def _sse_score(n_left, sum_left, n_right, sum_right):
    return -(sum_left * sum_left / np.maximum(n_left, 1)
             + sum_right * sum_right / np.maximum(n_right, 1))


def fit_tree_regressor(schema: FeatureSchema, rows, targets,
                       max_depth: int, min_leaf: int = 1) -> RealRegressor:
    """Greedy regression tree minimising the sum of squared errors; leaf
    values are target means. Same split search and tie rules as the
    classifier."""
    X = np.asarray(rows, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if t.size == 0:
        raise DatasetError("cannot fit a regressor on empty input")
    if X.shape[0] != t.shape[0]:
        raise DatasetError("row/target counts differ")
    if min_leaf < 1:
        raise DatasetError("min_leaf must be >= 1")
    data = LabeledDataset(schema, X, np.zeros(t.shape[0], dtype=np.int8))
    nodes: list = []

    def parent_score(idx):
        total = float(t[idx].sum())
        return -(total * total / len(idx))

    def build(idx, depth):
        found = None
        if depth < max_depth and len(idx) >= 2 * min_leaf:
            found = _best_split(data, idx, t[idx], _sse_score, min_leaf)
        # Minimising SSE is minimising -sum(mean^2 * n); a strict improvement
        # over the unsplit node is required.
        if found is not None and found[1] < parent_score(idx) - 1e-12 * (1 + abs(parent_score(idx))):
            (feature, cmp, value), _ = found
            column = data.X[idx, data.schema.index_of(feature)]
            mask = _compare(column, cmp, value)
            position = len(nodes)
            nodes.append(None)
            left = build(idx[mask], depth + 1)
            right = build(idx[~mask], depth + 1)
            nodes[position] = Split(feature, cmp, value, left, right)
            return position
        nodes.append(ValueLeaf(float(t[idx].mean())))
        return len(nodes) - 1

    build(np.arange(data.n), 0)
    return RealRegressor(tuple(nodes))
