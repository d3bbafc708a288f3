"""Shared fixtures: tiny hand-traced datasets and random model builders."""

from __future__ import annotations

import numpy as np
import pytest

import biasbounty as bb
from biasbounty.predictor import Clause, Leaf, Split, ValueLeaf


def numeric_schema(*names) -> bb.FeatureSchema:
    return bb.FeatureSchema(tuple(bb.Feature(n, bb.NUMERIC) for n in names))


def binary_schema(*names) -> bb.FeatureSchema:
    return bb.FeatureSchema(tuple(bb.Feature(n, bb.CATEGORICAL, 2) for n in names))


def dataset(schema, rows, labels) -> bb.LabeledDataset:
    return bb.LabeledDataset(schema, rows, labels)


@pytest.fixture
def four_point():
    """Four rows, one binary feature; the group covers half of them, the base
    model is wrong exactly there, and the challenger fixes it. The statistic
    of (Constant(0), group, Constant(1)) is 0.5."""
    schema = binary_schema("a")
    data = dataset(schema, [[1], [1], [0], [0]], [1, 1, 0, 0])
    group = bb.Conjunction((Clause("a", "eq", 1.0),))
    return data, bb.Constant(0), group, bb.Constant(1)


def monotone_instance():
    """60-row instance on binary features a, b, c where the second accepted
    update degrades the first group and forces one repair back-pointer.

    Region layout (feature triple, count, label):
      (1,0,0) x6  y=1   (0,1,0) x20 y=1   (1,1,0) x10 y=1
      (0,0,1) x14 y=1   (0,0,0) x10 y=0
    With epsilon 0.2 the accept threshold is 0.15; the expected engine trace
    for the stream below is accept(+1), accept(+1, one repair), accept(+1).
    """
    schema = binary_schema("a", "b", "c")
    regions = [
        ((1, 0, 0), 6, 1),
        ((1, 1, 0), 10, 1),
        ((0, 1, 0), 20, 1),
        ((0, 0, 1), 14, 1),
        ((0, 0, 0), 10, 0),
    ]
    rows, labels = [], []
    for values, count, label in regions:
        rows.extend([list(values)] * count)
        labels.extend([label] * count)
    data = dataset(schema, rows, labels)
    g1 = bb.Conjunction((Clause("a", "eq", 1.0),))
    g2 = bb.Conjunction((Clause("b", "eq", 1.0),))
    g3 = bb.Conjunction((Clause("c", "eq", 1.0),))
    h1 = bb.Constant(1)
    h2 = bb.Stump("a", "eq", 0.0, 1, 0)
    h3 = bb.Constant(1)
    stream = [(g1, h1), (g2, h2), (g3, h3)]
    return data, bb.Constant(0), stream, 0.2


@pytest.fixture
def monotone_fixture():
    return monotone_instance()


def random_predictor(rng: np.random.Generator, feature_names, depth: int = 2):
    """Random DSL predictor over numeric features with values in [0, 1]."""
    kind = rng.integers(0, 4)
    if kind == 0:
        return bb.Constant(int(rng.integers(0, 2)))
    if kind == 1:
        name = str(rng.choice(feature_names))
        return bb.Stump(name, "le", float(rng.random()),
                        int(rng.integers(0, 2)), int(rng.integers(0, 2)))
    if kind == 2:
        clauses = tuple(
            Clause(str(rng.choice(feature_names)), "le", float(rng.random()))
            for _ in range(rng.integers(1, 3))
        )
        return bb.Conjunction(clauses)
    return random_tree(rng, feature_names, depth)


def random_tree(rng: np.random.Generator, feature_names, depth: int):
    nodes = []

    def build(level):
        if level >= depth or rng.random() < 0.3:
            nodes.append(Leaf(int(rng.integers(0, 2))))
            return len(nodes) - 1
        position = len(nodes)
        nodes.append(None)
        left = build(level + 1)
        right = build(level + 1)
        nodes[position] = Split(str(rng.choice(feature_names)), "le",
                                float(rng.random()), left, right)
        return position

    build(0)
    if len(nodes) == 1:
        return bb.Constant(nodes[0].label)
    return bb.Tree(tuple(nodes))


def random_regressor(rng: np.random.Generator, feature_names, depth: int = 2) -> bb.RealRegressor:
    nodes = []

    def build(level):
        if level >= depth or rng.random() < 0.3:
            nodes.append(ValueLeaf(float(rng.normal())))
            return len(nodes) - 1
        position = len(nodes)
        nodes.append(None)
        left = build(level + 1)
        right = build(level + 1)
        nodes[position] = Split(str(rng.choice(feature_names)), "le",
                                float(rng.random()), left, right)
        return position

    build(0)
    return bb.RealRegressor(tuple(nodes))


def random_pdl(rng: np.random.Generator, feature_names, levels: int) -> bb.PointerDecisionList:
    model = bb.PointerDecisionList(random_predictor(rng, feature_names))
    for _ in range(levels):
        group = random_predictor(rng, feature_names)
        if model.level > 0 and rng.random() < 0.3:
            action = bb.Repair(int(rng.integers(0, model.level)))
        else:
            action = bb.Model(random_predictor(rng, feature_names))
        model = bb.list_update(model, group, action)
    return model


def random_rows(rng: np.random.Generator, feature_names, count: int):
    return [{name: float(rng.random()) for name in feature_names} for _ in range(count)]
