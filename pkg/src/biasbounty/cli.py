"""Operator and researcher entry point.

Subcommands: ``synth`` (materialise a synthetic spec), ``split`` (partition a
CSV), ``train`` (batch training with a selectable finder), ``audit`` (replay
a directory of submissions through the monotone engine), ``serve`` (run the
HTTP program), and ``report`` (per-round loss table for a model document).

Every run is a pure function of its flags and input files; outputs are
written atomically so a failed run leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from functools import partial
from pathlib import Path

from .certify import CheckerConfig
from .dataset import (
    DatasetError,
    FeatureSchema,
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    group_mass,
    load_csv,
    loss_on,
    predictions,
    split,
)
from .engine import EngineRun, run_report
from .pdl import deserialize_pdl, groups_of, prefix_model, serialize_pdl
from .predictor import (
    BINARY,
    Constant,
    DocumentError,
    Predictor,
    deserialize,
    fit_tree_classifier,
    serialize,
)
from .service import ConfigError
from .trainers import (
    alt_min_finder,
    brute_force_finder,
    csc_finder,
    enumerate_basic_predictors,
    train_by_opt,
)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_schema_hint(path) -> FeatureSchema | None:
    if path is None:
        return None
    return FeatureSchema.from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def _load_binary_predictor(path) -> Predictor:
    p = deserialize(Path(path).read_text(encoding="utf-8"))
    if not isinstance(p, Predictor) or p.output != BINARY:
        raise DocumentError(f"{path}: expected a binary predictor document")
    return p


def _csv_table(header, rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return out.getvalue()


# -- synth ---------------------------------------------------------------


def _cmd_synth(args) -> int:
    doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = SyntheticSpec.from_doc(doc)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    data = generate_synthetic(spec)
    from .dataset import csv_text

    _atomic_write(Path(args.out), csv_text(data, args.label))
    return 0


# -- split ---------------------------------------------------------------


def _cmd_split(args) -> int:
    fractions = [float(f) for f in args.fractions.split(",")]
    data = load_csv(args.data, args.label, _load_schema_hint(args.schema))
    parts = split(data, fractions, args.seed)
    from .dataset import csv_text

    for i, part in enumerate(parts):
        _atomic_write(Path(f"{args.out_prefix}{i}.csv"), csv_text(part, args.label))
    return 0


# -- train ---------------------------------------------------------------


def _make_finder(args, data: LabeledDataset):
    if args.finder == "csc":
        return partial(csc_finder, max_depth=args.max_depth, min_leaf=args.min_leaf)
    if args.finder == "altmin":
        learner = lambda d: fit_tree_classifier(d, max_depth=args.max_depth, min_leaf=args.min_leaf)
        return lambda part, f: alt_min_finder(part, f, learner, learner, epsilon=args.epsilon)
    if args.finder == "bruteforce":
        catalogue = enumerate_basic_predictors(data)
        return lambda part, f: brute_force_finder(part, f, catalogue, catalogue)
    raise ConfigError(f"unknown finder {args.finder!r}")


def _cmd_train(args) -> int:
    data = load_csv(args.data, args.label, _load_schema_hint(args.schema))
    f0 = _load_binary_predictor(args.f0) if args.f0 else Constant(0)
    finder = _make_finder(args, data)
    model = train_by_opt(data, finder, args.epsilon, f0, seed=args.seed)
    _atomic_write(Path(args.out), serialize_pdl(model) + "\n")
    return 0


# -- audit ---------------------------------------------------------------


def _load_submission_dir(path) -> list[tuple[str, Predictor, Predictor]]:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise DatasetError(f"no submission documents in {path}")
    out = []
    for file in files:
        doc = json.loads(file.read_text(encoding="utf-8"))
        if not isinstance(doc, dict) or set(doc) != {"group", "model"}:
            raise DocumentError(f"{file}: submission must have exactly the fields group, model")
        from .predictor import predictor_from_doc

        group = predictor_from_doc(doc["group"])
        model = predictor_from_doc(doc["model"])
        out.append((file.stem, group, model))
    return out


def _fit_per_group(args, holdout_schema) -> list[tuple[str, Predictor, Predictor]]:
    options = {}
    for item in args.fit_per_group.split(","):
        key, _, value = item.partition("=")
        options[key.strip()] = int(value)
    depth = options.pop("depth", 10)
    min_leaf = options.pop("min_leaf", 1)
    if options:
        raise ConfigError(f"unknown --fit-per-group options: {sorted(options)}")
    if not args.train:
        raise ConfigError("--fit-per-group requires --train")
    train = load_csv(args.train, args.label, holdout_schema)
    out = []
    for file in sorted(Path(args.groups_dir).glob("*.json")):
        group = _load_binary_predictor(file)
        members = predictions(group, train) == 1
        if not members.any():
            print(f"note: group {file.name} matches no training rows; skipped", file=sys.stderr)
            continue
        import numpy as np

        subset = train.take(np.nonzero(members)[0])
        model = fit_tree_classifier(subset, max_depth=depth, min_leaf=min_leaf)
        out.append((file.stem, group, model))
    return out


def _cmd_audit(args) -> int:
    holdout = load_csv(args.holdout, args.label, _load_schema_hint(args.schema))
    test = load_csv(args.test, args.label, holdout.schema) if args.test else holdout
    if args.f0:
        f0 = _load_binary_predictor(args.f0)
    elif args.train:
        f0 = fit_tree_classifier(load_csv(args.train, args.label, holdout.schema), max_depth=1)
    else:
        f0 = Constant(0)

    if args.submissions_dir:
        stream = _load_submission_dir(args.submissions_dir)
    elif args.groups_dir:
        stream = _fit_per_group(args, holdout.schema)
    else:
        raise ConfigError("audit needs --submissions-dir or --groups-dir")

    budget = args.max_submissions if args.max_submissions else max(len(stream), 1)
    config = CheckerConfig(args.epsilon, budget, holdout, args.delta)
    run = EngineRun(f0, config, monotone=True)
    transcript_rows = []
    for name, group, model in stream:
        if run.halted:
            print(f"note: checker halted; {name} and later submissions were not judged",
                  file=sys.stderr)
            break
        outcome = run.process(group, model, submission_id=name)
        transcript_rows.append([name, "accepted" if outcome.accepted else "rejected",
                                outcome.round_after])

    header, rows = run_report(run, holdout, test)
    _atomic_write(Path(args.out_model), serialize_pdl(run.model) + "\n")
    _atomic_write(Path(args.out_transcript),
                  _csv_table(["submission", "verdict", "round_after"], transcript_rows))
    _atomic_write(Path(args.out_report), _csv_table(header, rows))
    return 0


# -- report ---------------------------------------------------------------


def _cmd_report(args) -> int:
    model = deserialize_pdl(Path(args.model).read_text(encoding="utf-8"))
    data = load_csv(args.data, args.label, _load_schema_hint(args.schema))
    groups = groups_of(model)
    introduced = []
    for g in groups:
        key = serialize(g)
        introduced.append(next(
            level for level, node in enumerate(model.nodes, start=1)
            if serialize(node.group) == key
        ))
    header = ["round", "loss"] + [f"g{level}_loss" for level in introduced]
    rows = []
    for level in range(model.level + 1):
        state = prefix_model(model, level)
        row = [level, loss_on(data, state)]
        for g in groups:
            row.append(loss_on(data, state, g) if group_mass(data, g) > 0 else None)
        rows.append(row)
    _atomic_write(Path(args.out), _csv_table(header, rows))
    return 0


# -- serve ---------------------------------------------------------------


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.config)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biasbounty")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="materialise a synthetic dataset spec into a CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="label")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("split", help="partition a CSV into seed-deterministic parts")
    p.add_argument("--data", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--fractions", required=True, help="comma-separated, summing to 1")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--schema", default=None)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="batch-train a pointer decision list")
    p.add_argument("--data", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--finder", choices=["csc", "altmin", "bruteforce"], default="csc")
    p.add_argument("--max-depth", type=int, default=7)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--f0", default=None, help="initial model document (default: constant 0)")
    p.add_argument("--schema", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("audit", help="replay submissions through the monotone engine")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--holdout", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--test", default=None, help="public test CSV for the report (default: holdout)")
    p.add_argument("--train", default=None)
    p.add_argument("--f0", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--submissions-dir", default=None,
                   help="directory of {group, model} documents, replayed in name order")
    p.add_argument("--groups-dir", default=None,
                   help="directory of group documents; pair each with a tree fitted on --train")
    p.add_argument("--fit-per-group", default="depth=10",
                   help="tree options for --groups-dir, e.g. depth=10,min_leaf=1")
    p.add_argument("--max-submissions", type=int, default=None)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-transcript", required=True)
    p.add_argument("--out-report", required=True)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("serve", help="run the bounty service")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("report", help="per-round loss table for a model document")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, DocumentError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
