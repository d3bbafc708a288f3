"""Labelled datasets: CSV ingestion, deterministic splitting, loss evaluation,
and a synthetic generator with planted per-group structure.

Rows are stored in a dense float matrix. Numeric features hold arbitrary
reals; categorical features hold integer codes in ``[0, arity)``. Labels are
binary ``{0, 1}``. Datasets are frozen after construction and safe to share
across threads; every operation in this module is a pure function.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DatasetError(ValueError):
    """Malformed dataset input: bad file, bad schema, or bad labels."""


class SchemaMismatchError(ValueError):
    """A predictor referenced a feature the schema does not define."""


class EmptyGroupError(ValueError):
    """Conditional loss requested for a group with zero mass on the data."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    arity: int | None = None

    def __post_init__(self):
        if not self.name:
            raise DatasetError("feature name must be non-empty")
        if self.kind == NUMERIC:
            if self.arity is not None:
                raise DatasetError(f"numeric feature {self.name!r} cannot carry an arity")
        elif self.kind == CATEGORICAL:
            if not isinstance(self.arity, int) or self.arity < 2:
                raise DatasetError(f"categorical feature {self.name!r} needs arity >= 2")
        else:
            raise DatasetError(f"unknown feature kind {self.kind!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature declarations; the contract every predictor is checked against."""

    features: tuple[Feature, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DatasetError("feature names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaMismatchError(f"feature {name!r} is not in the schema")

    def feature(self, name: str) -> Feature:
        return self.features[self.index_of(name)]

    def to_doc(self) -> dict:
        out = []
        for f in self.features:
            if f.kind == NUMERIC:
                out.append({"name": f.name, "kind": NUMERIC})
            else:
                out.append({"name": f.name, "kind": CATEGORICAL, "arity": f.arity})
        return {"features": out}

    @classmethod
    def from_doc(cls, doc: dict) -> "FeatureSchema":
        if not isinstance(doc, dict) or "features" not in doc:
            raise DatasetError("schema document must contain a 'features' list")
        feats = []
        for item in doc["features"]:
            kind = item.get("kind")
            if kind == NUMERIC:
                feats.append(Feature(item["name"], NUMERIC))
            elif kind == CATEGORICAL:
                feats.append(Feature(item["name"], CATEGORICAL, int(item["arity"])))
            else:
                raise DatasetError(f"unknown feature kind {kind!r} in schema document")
        return cls(tuple(feats))


class LabeledDataset:
    """Immutable table of feature rows with binary labels."""

    def __init__(self, schema: FeatureSchema, rows, labels):
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(schema.features))
        if X.ndim != 2:
            raise DatasetError("rows must form a 2-d table")
        y = np.asarray(labels, dtype=np.int8)
        if X.shape[0] != y.shape[0]:
            raise DatasetError("row/label counts differ")
        if X.shape[1] != len(schema.features):
            raise DatasetError("row arity does not match the schema")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")
        for j, f in enumerate(schema.features):
            if f.kind == CATEGORICAL and X.shape[0]:
                col = X[:, j]
                if ((col != np.floor(col)) | (col < 0) | (col >= f.arity)).any():
                    raise DatasetError(
                        f"categorical feature {f.name!r} has values outside [0, {f.arity})"
                    )
        X.setflags(write=False)
        y.setflags(write=False)
        self.schema = schema
        self.X = X
        self.y = y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index_of(name)]

    def row(self, i: int) -> dict[str, float]:
        return {f.name: float(self.X[i, j]) for j, f in enumerate(self.schema.features)}

    def take(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.schema, self.X[idx], self.y[idx])


def predictions(model, data: LabeledDataset) -> np.ndarray:
    """Evaluate any supported model on every row of ``data``.

    Accepts DSL predictors and pointer decision lists (via their
    ``predict_dataset`` method) as well as plain callables taking a
    ``{feature: value}`` mapping. Returns an int array of labels.
    """
    method = getattr(model, "predict_dataset", None)
    if method is not None:
        return np.asarray(method(data))
    if callable(model):
        return np.fromiter((model(data.row(i)) for i in range(data.n)), dtype=np.int64, count=data.n)
    raise TypeError(f"cannot evaluate object of type {type(model).__name__} on a dataset")


def zero_one_loss(predicted: int, actual: int) -> int:
    """1 iff the labels differ."""
    return int(predicted != actual)


def group_mass(data: LabeledDataset, group) -> float:
    """Fraction of rows on which the group indicator fires."""
    if data.n == 0:
        raise DatasetError("group mass is undefined on an empty dataset")
    return int((predictions(group, data) == 1).sum()) / data.n


def loss_on(data: LabeledDataset, model, group=None) -> float:
    """Mean zero/one loss of ``model``, optionally conditioned on ``group``.

    Raises :class:`EmptyGroupError` when the group has zero mass; callers
    that want the "mass times conditional loss" convention (where an empty
    group contributes nothing) multiply by the mass themselves.
    """
    if data.n == 0:
        raise DatasetError("loss is undefined on an empty dataset")
    wrong = predictions(model, data) != data.y
    if group is None:
        return int(wrong.sum()) / data.n
    in_group = predictions(group, data) == 1
    members = int(in_group.sum())
    if members == 0:
        raise EmptyGroupError("conditional loss is undefined on an empty group")
    return int((wrong & in_group).sum()) / members


def _shuffled_indices(n: int, seed: int) -> list[int]:
    # Counter-based shuffle: sort indices by a keyed hash of the index, so the
    # permutation depends only on (n, seed) and never on library RNG streams.
    key = int(seed).to_bytes(8, "little", signed=True)

    def rank(i: int) -> int:
        digest = hashlib.blake2b(i.to_bytes(8, "little"), key=key, digest_size=8).digest()
        return int.from_bytes(digest, "little")

    return sorted(range(n), key=lambda i: (rank(i), i))


def split(data: LabeledDataset, fractions, seed: int) -> list[LabeledDataset]:
    """Deterministically partition ``data`` into parts of the given fractions.

    Part sizes are floor(n * fraction) with the remainder distributed one row
    at a time to the earliest parts. The partition is exhaustive, disjoint,
    and a pure function of (data order, fractions, seed).
    """
    fracs = [float(f) for f in fractions]
    if not fracs or any(f < 0 for f in fracs):
        raise DatasetError("fractions must be non-negative")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise DatasetError("fractions must sum to 1")
    n = data.n
    sizes = [int(n * f) for f in fracs]
    for i in range(n - sum(sizes)):
        sizes[i % len(sizes)] += 1
    order = _shuffled_indices(n, seed)
    parts = []
    start = 0
    for size in sizes:
        chunk = sorted(order[start:start + size])
        parts.append(data.take(chunk))
        start += size
    return parts


def load_csv(path, label_column: str, schema_hint: FeatureSchema | None = None) -> LabeledDataset:
    """Load a comma-separated file with a header row into a dataset.

    Without a hint, a column is numeric iff every value parses as a number;
    otherwise it is categorical over its observed distinct values, coded in
    sorted order. Row order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: missing header row") from None
        raw_rows = list(reader)
    if label_column not in header:
        raise DatasetError(f"{path}: label column {label_column!r} not found")
    label_idx = header.index(label_column)
    feature_names = [h for i, h in enumerate(header) if i != label_idx]

    labels = []
    cells: list[list[str]] = []
    for lineno, row in enumerate(raw_rows, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        raw_label = row[label_idx].strip()
        if raw_label not in ("0", "1"):
            raise DatasetError(f"{path}:{lineno}: non-binary label {raw_label!r}")
        labels.append(int(raw_label))
        cells.append([v for i, v in enumerate(row) if i != label_idx])

    if schema_hint is not None:
        if list(schema_hint.names) != feature_names:
            raise DatasetError(f"{path}: header does not match the hinted schema")
        schema = schema_hint
        matrix = _encode_with_schema(path, schema, cells)
    else:
        schema, matrix = _infer_schema(path, feature_names, cells)
    return LabeledDataset(schema, matrix, labels)


def _encode_with_schema(path, schema: FeatureSchema, cells: list[list[str]]) -> np.ndarray:
    matrix = np.zeros((len(cells), len(schema.features)), dtype=np.float64)
    for j, feat in enumerate(schema.features):
        for i, row in enumerate(cells):
            raw = row[j].strip()
            try:
                value = float(raw)
            except ValueError:
                raise DatasetError(
                    f"{path}: value {raw!r} in column {feat.name!r} is not numeric"
                ) from None
            if feat.kind == CATEGORICAL and not (value == int(value) and 0 <= value < feat.arity):
                raise DatasetError(
                    f"{path}: value {raw!r} is not a code of categorical feature {feat.name!r}"
                )
            matrix[i, j] = value
    return matrix


def _infer_schema(path, names: list[str], cells: list[list[str]]):
    feats = []
    matrix = np.zeros((len(cells), len(names)), dtype=np.float64)
    for j, name in enumerate(names):
        column = [row[j].strip() for row in cells]
        parsed = []
        numeric = True
        for raw in column:
            if raw == "":
                continue
            try:
                parsed.append(float(raw))
            except ValueError:
                numeric = False
                break
        if numeric and len(parsed) != len(column):
            raise DatasetError(f"{path}: numeric column {name!r} has missing values")
        if numeric:
            feats.append(Feature(name, NUMERIC))
            matrix[:, j] = parsed if column else []
        else:
            values = sorted(set(column))
            codes = {v: k for k, v in enumerate(values)}
            feats.append(Feature(name, CATEGORICAL, max(len(values), 2)))
            matrix[:, j] = [codes[v] for v in column]
    return FeatureSchema(tuple(feats)), matrix


def csv_text(data: LabeledDataset, label_column: str = "label") -> str:
    """Render the dataset as CSV text; numeric values keep full precision."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(data.schema.names) + [label_column])
    for i in range(data.n):
        row = []
        for j, feat in enumerate(data.schema.features):
            value = data.X[i, j]
            row.append(int(value) if feat.kind == CATEGORICAL else repr(float(value)))
        row.append(int(data.y[i]))
        writer.writerow(row)
    return out.getvalue()


def write_csv(data: LabeledDataset, path, label_column: str = "label") -> None:
    Path(path).write_text(csv_text(data, label_column), encoding="utf-8")


@dataclass(frozen=True)
class GroupRule:
    """Labelling rule for one combination of the group features."""

    values: tuple[int, ...]
    rule: object
    noise_rate: float

    def __post_init__(self):
        if not 0 <= self.noise_rate < 0.5:
            raise DatasetError("noise_rate must lie in [0, 0.5)")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a census-like dataset with planted per-group labelling rules.

    Each row draws its group features uniformly and its numeric features
    uniformly from [0, 1]; the label is the owning group's rule applied to the
    row, flipped with that group's noise rate. The planted rule therefore
    achieves the Bayes error (= noise rate) on its group in expectation.
    """

    group_features: tuple[Feature, ...]
    numeric_feature_count: int
    rules: tuple[GroupRule, ...]
    row_count: int
    seed: int

    def __post_init__(self):
        if self.numeric_feature_count < 0 or self.row_count < 0:
            raise DatasetError("counts must be non-negative")
        for f in self.group_features:
            if f.kind != CATEGORICAL:
                raise DatasetError("group features must be categorical")
        combos = {r.values for r in self.rules}
        if len(combos) != len(self.rules):
            raise DatasetError("duplicate rule for a group combination")
        expected = 1
        for f in self.group_features:
            expected *= f.arity
        if len(combos) != expected:
            raise DatasetError("every group combination needs exactly one rule")

    def schema(self) -> FeatureSchema:
        numerics = tuple(Feature(f"x{i}", NUMERIC) for i in range(self.numeric_feature_count))
        return FeatureSchema(self.group_features + numerics)

    @classmethod
    def from_doc(cls, doc: dict) -> "SyntheticSpec":
        from .predictor import predictor_from_doc

        group_features = tuple(
            Feature(item["name"], CATEGORICAL, int(item["arity"]))
            for item in doc.get("group_features", [])
        )
        rules = tuple(
            GroupRule(
                values=tuple(int(v) for v in item["values"]),
                rule=predictor_from_doc(item["rule"]),
                noise_rate=float(item["noise"]),
            )
            for item in doc.get("rules", [])
        )
        return cls(
            group_features=group_features,
            numeric_feature_count=int(doc.get("numeric_features", 0)),
            rules=rules,
            row_count=int(doc["rows"]),
            seed=int(doc["seed"]),
        )


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Materialise a :class:`SyntheticSpec`; identical specs yield identical data."""
    rng = np.random.default_rng(spec.seed)
    n = spec.row_count
    columns = [rng.integers(0, f.arity, size=n).astype(np.float64) for f in spec.group_features]
    numerics = rng.random((n, spec.numeric_feature_count))
    flips = rng.random(n)

    X = np.column_stack(columns + [numerics]) if columns else numerics
    if X.size == 0:
        X = X.reshape(n, len(spec.group_features) + spec.numeric_feature_count)
    schema = spec.schema()
    unlabeled = LabeledDataset(schema, X, np.zeros(n, dtype=np.int8))

    labels = np.zeros(n, dtype=np.int8)
    for rule in spec.rules:
        mask = np.ones(n, dtype=bool)
        for j, value in enumerate(rule.values):
            mask &= X[:, j] == value
        if not mask.any():
            continue
        base = predictions(rule.rule, unlabeled)[mask]
        flipped = flips[mask] < rule.noise_rate
        labels[mask] = np.where(flipped, 1 - base, base)
    return LabeledDataset(schema, X, labels)
