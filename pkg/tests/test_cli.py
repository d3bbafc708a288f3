import json

import numpy as np
import pytest

import biasbounty as bb
from biasbounty.cli import main
from biasbounty.dataset import csv_text
from biasbounty.trainers import brute_force_finder, enumerate_basic_predictors

from conftest import monotone_instance, numeric_schema, dataset


SYNTH_SPEC = {
    "group_features": [{"name": "g", "arity": 2}],
    "numeric_features": 1,
    "rows": 50,
    "seed": 9,
    "rules": [
        {"values": [0], "rule": {"kind": "stump", "feature": "x0", "cmp": "le",
                                 "value": 0.5, "left": 1, "right": 0}, "noise": 0.1},
        {"values": [1], "rule": {"kind": "constant", "label": 0}, "noise": 0.0},
    ],
}


class TestSynth:
    def test_deterministic_bytes(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SYNTH_SPEC))
        assert main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "a.csv")]) == 0
        assert main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SYNTH_SPEC))
        main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "a.csv")])
        main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "c.csv"),
              "--seed", "10"])
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


class TestSplit:
    def test_partition_files(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(SYNTH_SPEC))
        main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "d.csv")])
        code = main(["split", "--data", str(tmp_path / "d.csv"), "--label", "label",
                     "--fractions", "0.8,0.2", "--seed", "3",
                     "--out-prefix", str(tmp_path / "part")])
        assert code == 0
        part0 = bb.load_csv(tmp_path / "part0.csv", "label")
        part1 = bb.load_csv(tmp_path / "part1.csv", "label")
        assert part0.n == 40 and part1.n == 10


class TestTrain:
    def test_bruteforce_matches_library_call(self, tmp_path):
        rows = [[float(v)] for v in (0, 1, 2, 3, 4, 5, 6, 7)]
        labels = [1, 1, 1, 1, 0, 0, 0, 0]
        data = dataset(numeric_schema("a"), rows, labels)
        (tmp_path / "d.csv").write_text(csv_text(data))
        out = tmp_path / "model.json"
        code = main(["train", "--data", str(tmp_path / "d.csv"), "--label", "label",
                     "--epsilon", "0.5", "--finder", "bruteforce", "--seed", "5",
                     "--out", str(out)])
        assert code == 0
        catalogue = enumerate_basic_predictors(data)
        expected = bb.train_by_opt(
            data,
            lambda part, f: brute_force_finder(part, f, catalogue, catalogue),
            0.5,
            bb.Constant(0),
            seed=5,
        )
        assert out.read_text().strip() == bb.serialize_pdl(expected)

    def test_csc_trainer_improves_on_planted_data(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        # plant a large improvement (Constant(0) is wrong on ~3/4 of rows) so
        # the first round clears the 3*epsilon/4 bar on every split part
        rules = [
            {"values": [0], "rule": {"kind": "stump", "feature": "x0", "cmp": "le",
                                     "value": 0.5, "left": 1, "right": 0}, "noise": 0.1},
            {"values": [1], "rule": {"kind": "constant", "label": 1}, "noise": 0.0},
        ]
        spec = dict(SYNTH_SPEC, rows=300, rules=rules)
        spec_path.write_text(json.dumps(spec))
        main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "d.csv")])
        code = main(["train", "--data", str(tmp_path / "d.csv"), "--label", "label",
                     "--epsilon", "0.4", "--finder", "csc", "--max-depth", "3",
                     "--out", str(tmp_path / "model.json")])
        assert code == 0
        model = bb.deserialize_pdl((tmp_path / "model.json").read_text())
        data = bb.load_csv(tmp_path / "d.csv", "label")
        assert bb.loss_on(data, model) < bb.loss_on(data, bb.Constant(0))


class TestAudit:
    def test_four_point_worked_example(self, tmp_path, four_point):
        data, f0, g, h = four_point
        (tmp_path / "h.csv").write_text(csv_text(data))
        (tmp_path / "f0.json").write_text(bb.serialize(f0))
        subs = tmp_path / "subs"
        subs.mkdir()
        (subs / "001.json").write_text(json.dumps({"group": g.to_doc(), "model": h.to_doc()}))
        code = main(["audit", "--epsilon", "0.4", "--holdout", str(tmp_path / "h.csv"),
                     "--label", "label", "--f0", str(tmp_path / "f0.json"),
                     "--submissions-dir", str(subs),
                     "--out-model", str(tmp_path / "model.json"),
                     "--out-transcript", str(tmp_path / "transcript.csv"),
                     "--out-report", str(tmp_path / "report.csv")])
        assert code == 0
        model = bb.deserialize_pdl((tmp_path / "model.json").read_text())
        assert model.level == 1
        transcript = (tmp_path / "transcript.csv").read_text().splitlines()
        assert transcript == ["submission,verdict,round_after", "001,accepted,1"]

    def test_monotone_instance_through_cli(self, tmp_path):
        data, f0, stream, epsilon = monotone_instance()
        (tmp_path / "h.csv").write_text(csv_text(data))
        (tmp_path / "f0.json").write_text(bb.serialize(f0))
        subs = tmp_path / "subs"
        subs.mkdir()
        for i, (g, h) in enumerate(stream, 1):
            (subs / f"{i:03}.json").write_text(
                json.dumps({"group": g.to_doc(), "model": h.to_doc()}))
        code = main(["audit", "--epsilon", str(epsilon), "--holdout", str(tmp_path / "h.csv"),
                     "--label", "label", "--f0", str(tmp_path / "f0.json"),
                     "--submissions-dir", str(subs),
                     "--out-model", str(tmp_path / "model.json"),
                     "--out-transcript", str(tmp_path / "t.csv"),
                     "--out-report", str(tmp_path / "r.csv")])
        assert code == 0
        model = bb.deserialize_pdl((tmp_path / "model.json").read_text())
        assert model.level == 4
        report_lines = (tmp_path / "r.csv").read_text().splitlines()
        assert report_lines[0].split(",")[:5] == [
            "submission", "verdict", "round", "holdout_loss", "test_loss"]
        assert len(report_lines) == 1 + 1 + len(stream)

    def test_fit_per_group_flow(self, tmp_path):
        data, f0, stream, epsilon = monotone_instance()
        (tmp_path / "h.csv").write_text(csv_text(data))
        (tmp_path / "train.csv").write_text(csv_text(data))
        (tmp_path / "f0.json").write_text(bb.serialize(f0))
        groups_dir = tmp_path / "groups"
        groups_dir.mkdir()
        for i, (g, _) in enumerate(stream, 1):
            (groups_dir / f"g{i}.json").write_text(bb.serialize(g))
        code = main(["audit", "--epsilon", str(epsilon), "--holdout", str(tmp_path / "h.csv"),
                     "--label", "label", "--train", str(tmp_path / "train.csv"),
                     "--f0", str(tmp_path / "f0.json"),
                     "--groups-dir", str(groups_dir), "--fit-per-group", "depth=10",
                     "--out-model", str(tmp_path / "model.json"),
                     "--out-transcript", str(tmp_path / "t.csv"),
                     "--out-report", str(tmp_path / "r.csv")])
        assert code == 0
        model = bb.deserialize_pdl((tmp_path / "model.json").read_text())
        # each group's fitted tree is exact on its region, so all three land
        assert model.level == 3
        transcript = (tmp_path / "t.csv").read_text().splitlines()
        assert [line.split(",")[1] for line in transcript[1:]] == ["accepted"] * 3


class TestReport:
    def test_per_round_table(self, tmp_path):
        data, f0, stream, epsilon = monotone_instance()
        config = bb.CheckerConfig(epsilon=epsilon, max_submissions=3, holdout=data)
        final, _ = bb.monotone_falsify_and_update(f0, config, stream)
        (tmp_path / "model.json").write_text(bb.serialize_pdl(final))
        (tmp_path / "d.csv").write_text(csv_text(data))
        code = main(["report", "--model", str(tmp_path / "model.json"),
                     "--data", str(tmp_path / "d.csv"), "--label", "label",
                     "--out", str(tmp_path / "r.csv")])
        assert code == 0
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "round,loss,g1_loss,g2_loss,g4_loss"
        assert len(lines) == final.level + 2
        final_row = lines[-1].split(",")
        assert float(final_row[1]) == bb.loss_on(data, final)


class TestFailureModes:
    def test_bad_spec_exits_nonzero_without_output(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        bad = dict(SYNTH_SPEC, rules=SYNTH_SPEC["rules"][:1])
        spec_path.write_text(json.dumps(bad))
        out = tmp_path / "a.csv"
        assert main(["synth", "--spec", str(spec_path), "--out", str(out)]) == 2
        assert not out.exists()

    def test_missing_file_exits_nonzero(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope.csv"), "--label", "y",
                     "--epsilon", "0.5", "--out", str(tmp_path / "m.json")]) == 2
