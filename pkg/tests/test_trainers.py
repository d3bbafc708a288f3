import itertools

import numpy as np
import pytest

import biasbounty as bb
from biasbounty._util import snap_ceil
from biasbounty.predictor import DEFER, Clause
from biasbounty.trainers import (
    EnumeratedErm,
    brute_force_finder,
    enumerate_basic_predictors,
    expected_induced_cost,
    relabel_for_group_step,
)

from conftest import binary_schema, dataset, numeric_schema


def categorical_schema(arity):
    return bb.FeatureSchema((bb.Feature("c", bb.CATEGORICAL, arity),))


def table_predictor(table):
    """Lookup-table predictor over the single categorical feature ``c``."""
    return lambda x: table[int(x["c"])]


def all_ternary_tables(arity):
    return [table_predictor(t) for t in itertools.product((0, 1, DEFER), repeat=arity)]


def random_instance(rng, max_rows=12, arity=None):
    arity = arity or int(rng.integers(2, 5))
    n = int(rng.integers(4, max_rows + 1))
    rows = [[int(rng.integers(0, arity))] for _ in range(n)]
    labels = [int(rng.integers(0, 2)) for _ in range(n)]
    data = bb.LabeledDataset(categorical_schema(arity), rows, labels)
    f_table = [int(rng.integers(0, 2)) for _ in range(arity)]
    f = table_predictor(f_table)
    return data, f, arity


class TestObjective:
    def test_identical_models(self, four_point):
        data, f, g, _ = four_point
        assert bb.objective(data, f, g, f) == 0.0

    def test_full_group_oracle(self):
        data = dataset(numeric_schema("a"), [[float(i)] for i in range(10)],
                       [1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
        oracle = bb.Stump("a", "le", 2.5, 1, 0)
        assert bb.objective(data, bb.Constant(0), bb.Constant(1), oracle) == 0.3

    def test_worse_challenger_is_negative(self, four_point):
        data, f, g, h = four_point
        # swap roles: h is now the incumbent and f the challenger
        assert bb.objective(data, h, g, f) == -0.5

    def test_matches_statistic(self, four_point):
        data, f, g, h = four_point
        assert bb.objective(data, f, g, h) == bb.certificate_statistic(data, f, g, h).product


class TestInducedCosts:
    def test_case_y1_f1(self):
        f = bb.Constant(1)
        assert bb.induced_costs(f, {"a": 0.0}, 1) == (1.0, 0.0, 0.0)

    def test_case_y1_f0(self):
        f = bb.Constant(0)
        assert bb.induced_costs(f, {"a": 0.0}, 1) == (0.0, -1.0, 0.0)

    def test_agreement_cases(self):
        f = bb.Constant(0)
        # y = 0, f right: predicting 0 costs nothing, overriding costs 1
        assert bb.induced_costs(f, {"a": 0.0}, 0) == (0.0, 1.0, 0.0)

    def test_expected_cost_is_negated_objective(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            data, f, arity = random_instance(rng)
            table = [int(rng.integers(0, 3)) for _ in range(arity)]
            p = table_predictor([DEFER if v == 2 else v for v in table])
            g, h = bb.derive_group(p), bb.derive_model(p)
            cost = expected_induced_cost(data, f, p)
            assert abs(cost + bb.objective(data, f, g, h)) <= 1e-12


class TestCscFinder:
    def test_perfect_model_defers_everywhere(self):
        data = dataset(numeric_schema("a"), [[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
        f = bb.Stump("a", "le", 1.5, 0, 1)
        found = bb.csc_finder(data, f, max_depth=3)
        assert found.objective_value == 0.0
        assert bb.group_mass(data, found.group) == 0.0

    def test_exact_on_small_instances(self):
        # with a single low-arity feature and enough depth, the cost
        # regressors recover exact conditional means, so the finder must hit
        # the enumeration optimum over all derived pairs
        rng = np.random.default_rng(6)
        for _ in range(50):
            data, f, arity = random_instance(rng)
            found = bb.csc_finder(data, f, max_depth=arity)
            best = max(
                bb.objective(data, f, bb.derive_group(p), bb.derive_model(p))
                for p in all_ternary_tables(arity)
            )
            assert abs(found.objective_value - best) <= 1e-12

    def test_objective_value_is_recomputable(self):
        rng = np.random.default_rng(7)
        data, f, _ = random_instance(rng)
        found = bb.csc_finder(data, f, max_depth=2)
        assert found.objective_value == bb.objective(data, f, found.group, found.model)


class TestRelabel:
    def test_five_point_case_split(self):
        # 2 rows where h right / f wrong -> label 1; 1 row h wrong / f right
        # -> label 0; 2 agreement rows dropped
        schema = binary_schema("a", "b")
        rows = [[0, 0], [0, 1], [1, 0], [1, 1], [0, 0]]
        labels = [1, 1, 0, 0, 0]
        data = dataset(schema, rows, labels)
        f = bb.Constant(0)  # right on rows 3,4,5
        h = bb.Stump("a", "le", 0.5, 1, 0)  # 1 on a=0: right on rows 1,2, wrong on row 5
        relabelled = relabel_for_group_step(data, f, h)
        assert relabelled.n == 3
        assert list(relabelled.y) == [1, 1, 0]
        assert np.array_equal(relabelled.X, np.asarray([[0, 0], [0, 1], [0, 0]], dtype=float))


def altmin_classes():
    thresholds = [(2 * k + 1) / 16 for k in range(8)]
    groups = [bb.Stump("a", "le", t, 1, 0) for t in thresholds]
    groups += [bb.Stump("a", "le", t, 0, 1) for t in thresholds]
    models = [bb.Constant(0), bb.Constant(1)]
    models += [bb.Stump("a", "le", t, 1, 0) for t in (0.25, 0.5, 0.75)]
    models += [bb.Stump("a", "le", t, 0, 1) for t in (0.25, 0.5, 0.75)]
    return groups, models


def random_numeric_instance(rng, max_rows=12):
    n = int(rng.integers(4, max_rows + 1))
    rows = [[float(rng.integers(0, 8)) / 8 + 1 / 16] for _ in range(n)]
    labels = [int(rng.integers(0, 2)) for _ in range(n)]
    return dataset(numeric_schema("a"), rows, labels)


class TestAltMin:
    def test_perfect_model_returns_nonpositive_objective(self):
        data = dataset(numeric_schema("a"), [[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
        f = bb.Stump("a", "le", 1.5, 0, 1)
        found = bb.alt_min_finder(data, f, epsilon=0.1)
        assert found.objective_value <= 0.0

    def test_h_step_matches_single_coordinate_max(self):
        rng = np.random.default_rng(8)
        groups, models = altmin_classes()
        erm = EnumeratedErm(models)
        for _ in range(60):
            data = random_numeric_instance(rng)
            f = models[int(rng.integers(0, len(models)))]
            g = groups[int(rng.integers(0, len(groups)))]
            members = np.nonzero(bb.dataset.predictions(g, data) == 1)[0]
            if members.size == 0:
                continue
            h_star = erm(data.take(members))
            best = max(bb.objective(data, f, g, h) for h in models)
            assert abs(bb.objective(data, f, g, h_star) - best) <= 1e-12

    def test_g_step_matches_single_coordinate_max(self):
        rng = np.random.default_rng(9)
        groups, models = altmin_classes()
        erm = EnumeratedErm(groups)
        for _ in range(60):
            data = random_numeric_instance(rng)
            f = models[int(rng.integers(0, len(models)))]
            h = models[int(rng.integers(0, len(models)))]
            relabelled = relabel_for_group_step(data, f, h)
            best = max(bb.objective(data, f, g, h) for g in groups)
            if relabelled.n == 0:
                assert best == 0.0
                continue
            g_star = erm(relabelled)
            assert abs(bb.objective(data, f, g_star, h) - best) <= 1e-12

    def test_trace_monotone_and_bounded(self):
        rng = np.random.default_rng(10)
        groups, models = altmin_classes()
        epsilon = 0.05
        for _ in range(30):
            data = random_numeric_instance(rng)
            f = models[int(rng.integers(0, len(models)))]
            found = bb.alt_min_finder(
                data, f, EnumeratedErm(groups), EnumeratedErm(models), epsilon=epsilon
            )
            assert len(found.trace) <= snap_ceil(2 / epsilon) + 1
            assert all(a <= b + 1e-12 for a, b in zip(found.trace, found.trace[1:]))
            assert found.objective_value == bb.objective(data, f, found.group, found.model)


class TestBruteForce:
    def test_singleton_classes(self, four_point):
        data, f, g, h = four_point
        found = brute_force_finder(data, f, [g], [h])
        assert found.group is g and found.model is h
        assert found.objective_value == 0.5

    def test_improver_dominates(self, four_point):
        data, f, g, h = four_point
        found = brute_force_finder(data, f, [g], [f, h])
        assert found.model is h

    def test_tie_breaks_to_lowest_indices(self, four_point):
        data, f, g, h = four_point
        h_clone = bb.Constant(1)
        found = brute_force_finder(data, f, [g], [h, h_clone])
        assert found.model is h

    def test_matches_independent_enumeration(self):
        rng = np.random.default_rng(11)
        data = random_numeric_instance(rng, max_rows=8)
        f = bb.Constant(0)
        groups = [bb.Stump("a", "le", (2 * k + 1) / 16, 1, 0) for k in range(8)]
        models = [bb.Constant(0), bb.Constant(1),
                  bb.Stump("a", "le", 0.5, 1, 0), bb.Stump("a", "le", 0.5, 0, 1)]
        found = brute_force_finder(data, f, groups, models)
        best = max(
            bb.objective(data, f, g, h) for g in groups for h in models
        )
        assert found.objective_value == best

    def test_pair_guard(self, four_point):
        data, f, g, h = four_point
        with pytest.raises(ValueError, match="enumeration guard"):
            brute_force_finder(data, f, [g] * 1001, [h] * 1000)

    def test_paired_mode_searches_diagonal(self, four_point):
        data, f, g, h = four_point
        # diagonal pairs are (g, f) and (Constant(0), h), both scoring 0;
        # only the off-diagonal (g, h) reaches 0.5, so paired mode must not
        # see it while the product search must
        groups = [g, bb.Constant(0)]
        models = [f, h]
        diagonal = brute_force_finder(data, f, groups, models, paired=True)
        assert diagonal.objective_value == 0.0
        assert diagonal.group is g and diagonal.model is f
        product = brute_force_finder(data, f, groups, models)
        assert product.objective_value == 0.5
        assert product.group is g and product.model is h


class TestTrainByOpt:
    def test_immediate_stop_returns_f0(self):
        data = dataset(numeric_schema("a"), [[float(i)] for i in range(12)], [0] * 12)
        f0 = bb.Constant(0)
        calls = []

        def null_finder(part, f):
            calls.append(part.n)
            return bb.FinderResult(bb.Constant(1), f, 0.0)

        model = bb.train_by_opt(data, null_finder, 0.5, f0)
        assert model.level == 0
        assert len(calls) == 1

    def test_planted_improvement_with_csc(self):
        spec = bb.SyntheticSpec(
            group_features=(bb.Feature("g", bb.CATEGORICAL, 2),),
            numeric_feature_count=1,
            rules=(
                bb.GroupRule((0,), bb.Stump("x0", "le", 0.5, 1, 0), 0.0),
                bb.GroupRule((1,), bb.Constant(1), 0.0),
            ),
            row_count=400,
            seed=21,
        )
        data = bb.generate_synthetic(spec)
        f0 = bb.Constant(0)
        finder = lambda part, f: bb.csc_finder(part, f, max_depth=3)
        model = bb.train_by_opt(data, finder, 0.5, f0, seed=2)
        assert model.level >= 1
        assert bb.loss_on(data, model) < bb.loss_on(data, bb.PointerDecisionList(f0))

    def test_update_count_bounded(self):
        rng = np.random.default_rng(12)
        rows = [[float(v)] for v in rng.integers(0, 8, size=80)]
        labels = [int(b) for b in rng.integers(0, 2, size=80)]
        data = dataset(numeric_schema("a"), rows, labels)
        epsilon = 0.4
        calls = []

        def greedy_finder(part, f):
            calls.append(1)
            catalogue = enumerate_basic_predictors(part)
            return brute_force_finder(part, f, catalogue, catalogue)

        model = bb.train_by_opt(data, greedy_finder, epsilon, bb.Constant(0), seed=3)
        assert model.level <= snap_ceil(2 / epsilon)
        assert len(calls) <= snap_ceil(2 / epsilon)

    def test_rejects_undersized_dataset(self):
        data = dataset(numeric_schema("a"), [[0.0], [1.0]], [0, 1])
        with pytest.raises(bb.DatasetError, match="at least"):
            bb.train_by_opt(data, lambda p, f: None, 0.1, bb.Constant(0))

    def test_stopping_rule_contract_with_exact_finder(self):
        # when an exact finder stops the loop, the returned model admits no
        # pair in the finder's reach scoring above 3*epsilon/4 on the part
        # that triggered the stop
        rng = np.random.default_rng(13)
        rows = [[float(v)] for v in rng.integers(0, 6, size=60)]
        labels = [int(b) for b in rng.integers(0, 2, size=60)]
        data = dataset(numeric_schema("a"), rows, labels)
        epsilon = 0.5
        catalogue = enumerate_basic_predictors(data)
        seen = []

        def finder(part, f):
            result = brute_force_finder(part, f, catalogue, catalogue)
            seen.append((part, f, result))
            return result

        model = bb.train_by_opt(data, finder, epsilon, bb.Constant(0), seed=9)
        rounds = snap_ceil(2 / epsilon)
        if len(seen) < rounds or model.level < rounds:
            part, judged, _ = seen[-1]
            best = brute_force_finder(part, model, catalogue, catalogue)
            assert best.objective_value <= 3 * epsilon / 4
            assert bb.serialize_pdl(model) == bb.serialize_pdl(
                judged if isinstance(judged, bb.PointerDecisionList) else model
            )
