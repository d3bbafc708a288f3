"""Batch certificate discovery and training.

A certificate finder looks at a dataset and the current model and proposes a
(group, challenger) pair maximising the same statistic the checker uses. Three
finders are provided: a cost-sensitive reduction that learns per-label cost
regressors and thresholds them into a ternary deferral rule, an alternating
maximisation loop over explicit group/model learners, and an exhaustive
oracle for small instances. ``train_by_opt`` drives any of them to a model no
finder-reachable pair can improve by more than the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._util import snap_ceil
from .certify import certificate_statistic
from .dataset import DatasetError, LabeledDataset, predictions, split
from .pdl import Model, PointerDecisionList, list_update
from .predictor import (
    DEFER,
    EQ,
    LE,
    Constant,
    Stump,
    TernaryFromCosts,
    derive_group,
    derive_model,
    evaluate,
    fit_tree_classifier,
    fit_tree_regressor,
)
from .dataset import CATEGORICAL

BRUTE_FORCE_PAIR_LIMIT = 10**6


@dataclass(frozen=True)
class FinderResult:
    group: object
    model: object
    objective_value: float
    trace: tuple[float, ...] = field(default=(), compare=False)


def objective(data: LabeledDataset, f, g, h) -> float:
    """Group mass times the loss improvement of h over f on the group.

    Shares its implementation with the checker statistic, so finder scores
    and checker verdicts can never disagree about a pair.
    """
    return certificate_statistic(data, f, g, h).product


def induced_costs(f, x, y: int) -> tuple[float, float, float]:
    """Costs of predicting (0, 1, defer) on one example, given the deployed model.

    Deferring costs nothing. Committing to the label the model already gives
    costs nothing. Overriding a correct model costs 1; correcting a wrong
    model earns 1 (cost -1).
    """
    fx = evaluate(f, x)
    costs = []
    for label in (0, 1):
        if label == fx:
            costs.append(0.0)
        elif fx == y:
            costs.append(1.0)
        else:
            costs.append(-1.0)
    return costs[0], costs[1], 0.0


def _cost_targets(data: LabeledDataset, f) -> tuple[np.ndarray, np.ndarray]:
    fx = predictions(f, data)
    y = data.y
    out = []
    for label in (0, 1):
        cost = np.where(fx == label, 0.0, np.where(fx == y, 1.0, -1.0))
        out.append(cost)
    return out[0], out[1]


def expected_induced_cost(data: LabeledDataset, f, p) -> float:
    """Mean induced cost of a ternary predictor; equals minus the objective of
    its derived pair."""
    c0, c1 = _cost_targets(data, f)
    raw = predictions(p, data)
    per_row = np.where(raw == DEFER, 0.0, np.where(raw == 1, c1, c0))
    return float(per_row.sum()) / data.n


def csc_finder(data: LabeledDataset, f, max_depth: int = 7, min_leaf: int = 1) -> FinderResult:
    """Cost-sensitive reduction: regress the costs of predicting 0 and 1,
    defer wherever neither beats doing nothing, and return the derived pair."""
    if data.n == 0:
        raise DatasetError("finder needs a non-empty dataset")
    c0, c1 = _cost_targets(data, f)
    r0 = fit_tree_regressor(data.schema, data.X, c0, max_depth, min_leaf)
    r1 = fit_tree_regressor(data.schema, data.X, c1, max_depth, min_leaf)
    p = TernaryFromCosts(r0, r1)
    g, h = derive_group(p), derive_model(p)
    return FinderResult(g, h, objective(data, f, g, h))


def _subset(data: LabeledDataset, mask: np.ndarray) -> LabeledDataset:
    return data.take(np.nonzero(mask)[0])


def relabel_for_group_step(data: LabeledDataset, f, h) -> LabeledDataset:
    """Dataset for the group step: rows where h and f disagree, labelled 1
    where h is right and 0 where f is right; agreement rows are dropped."""
    fx = predictions(f, data)
    hx = predictions(h, data)
    y = data.y
    keep_one = (hx == y) & (fx != y)
    keep_zero = (hx != y) & (fx == y)
    keep = keep_one | keep_zero
    rows = data.X[keep]
    labels = keep_one[keep].astype(np.int8)
    return LabeledDataset(data.schema, rows, labels)


def alt_min_finder(data: LabeledDataset, f, group_learner=None, model_learner=None,
                   epsilon: float = 0.05) -> FinderResult:
    """Alternate between refitting the challenger on the group and refitting
    the group on the relabelled disagreement set, until an iteration improves
    the objective by less than ``epsilon``.

    Both learners take a :class:`LabeledDataset` and return a predictor; the
    defaults are the built-in depth-limited tree learner. If either step's
    input dataset comes up empty the current pair is returned as a degenerate
    fixed point. At most ceil(2/epsilon) iterations run.
    """
    if data.n == 0:
        raise DatasetError("finder needs a non-empty dataset")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if group_learner is None:
        group_learner = lambda d: fit_tree_classifier(d, max_depth=7)
    if model_learner is None:
        model_learner = lambda d: fit_tree_classifier(d, max_depth=7)

    group = Constant(1)
    model = model_learner(data)
    trace = [objective(data, f, group, model)]

    def result():
        return FinderResult(group, model, objective(data, f, group, model), tuple(trace))

    for _ in range(snap_ceil(2 / epsilon)):
        members = predictions(group, data) == 1
        if not members.any():
            return result()
        model = model_learner(_subset(data, members))
        relabelled = relabel_for_group_step(data, f, model)
        if relabelled.n == 0:
            return result()
        group = group_learner(relabelled)
        current = objective(data, f, group, model)
        trace.append(current)
        if current < trace[-2] + epsilon:
            break
    return result()


def brute_force_finder(data: LabeledDataset, f, groups, models, paired: bool = False) -> FinderResult:
    """Exact argmax of the objective by enumeration; the test oracle.

    Searches the product of the two classes, or their diagonal when
    ``paired`` is set. Ties break toward the lowest group index, then the
    lowest model index.
    """
    groups = list(groups)
    models = list(models)
    if paired and len(groups) != len(models):
        raise ValueError("paired search needs classes of equal length")
    pair_count = len(groups) if paired else len(groups) * len(models)
    if pair_count > BRUTE_FORCE_PAIR_LIMIT:
        raise ValueError(f"{pair_count} candidate pairs exceed the enumeration guard")
    if pair_count == 0:
        raise ValueError("cannot search empty classes")
    best = None
    if paired:
        candidates = ((i, i) for i in range(len(groups)))
    else:
        candidates = ((i, j) for i in range(len(groups)) for j in range(len(models)))
    for i, j in candidates:
        value = objective(data, f, groups[i], models[j])
        if best is None or value > best[0]:
            best = (value, i, j)
    value, i, j = best
    return FinderResult(groups[i], models[j], value)


def enumerate_basic_predictors(data: LabeledDataset) -> list:
    """Both constants plus every stump over the dataset's observed values.

    Numeric features contribute midpoint thresholds, categorical features
    equality tests; each with both label orientations. The order is
    deterministic, so enumeration-based finders are reproducible.
    """
    out: list = [Constant(0), Constant(1)]
    for j, feat in enumerate(data.schema.features):
        column = np.unique(data.X[:, j])
        if feat.kind == CATEGORICAL:
            for v in column:
                out.append(Stump(feat.name, EQ, float(v), 1, 0))
                out.append(Stump(feat.name, EQ, float(v), 0, 1))
        else:
            midpoints = (column[:-1] + column[1:]) / 2.0
            for v in midpoints:
                out.append(Stump(feat.name, LE, float(v), 1, 0))
                out.append(Stump(feat.name, LE, float(v), 0, 1))
    return out


class EnumeratedErm:
    """Exact empirical risk minimiser over an explicit class; ties take the
    earliest class member. Usable as a group or model learner."""

    def __init__(self, candidates):
        self.candidates = list(candidates)
        if not self.candidates:
            raise ValueError("class must be non-empty")

    def __call__(self, data: LabeledDataset):
        best = None
        for k, candidate in enumerate(self.candidates):
            wrong = int((predictions(candidate, data) != data.y).sum())
            if best is None or wrong < best[0]:
                best = (wrong, k)
        return self.candidates[best[1]]


def train_by_opt(data: LabeledDataset, finder, epsilon: float, f0,
                 seed: int = 0) -> PointerDecisionList:
    """Iterate a finder to a model it can no longer improve.

    The data is split into T = ceil(2/epsilon) equal parts; round t runs the
    finder on part t against the current model, so each round's evidence is
    independent of the model it judges. The loop stops early as soon as a
    round's best pair scores at most 3*epsilon/4 on that round's part.
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    rounds = snap_ceil(2 / epsilon)
    if data.n < rounds:
        raise DatasetError(f"need at least {rounds} rows to run {rounds} rounds")
    parts = split(data, [1.0 / rounds] * rounds, seed)
    model = PointerDecisionList(f0)
    for part in parts:
        found = finder(part, model)
        score = objective(part, model, found.group, found.model)
        if score <= 3 * epsilon / 4:
            return model
        model = list_update(model, found.group, Model(found.model))
    return model
