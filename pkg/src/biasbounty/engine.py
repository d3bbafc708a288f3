"""Bounty-loop orchestration.

The engine owns the deployed pointer decision list and a checker. External
submissions are judged in a strict total order; when one is accepted the
model is patched, and in monotone mode the engine then probes every
(previous group, previous prefix) pair and applies repair back-pointers
until no probe is accepted, so no earlier fix gets undone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .certify import CheckerConfig, CheckerState, check, monotone_budget
from .dataset import LabeledDataset, group_mass, loss_on
from .pdl import Model, PointerDecisionList, Repair, groups_of, list_update, prefix_model
from .predictor import serialize as serialize_predictor


@dataclass(frozen=True)
class HistoryEntry:
    submission_id: object
    accepted: bool
    resulting_level: int


@dataclass(frozen=True)
class SubmissionOutcome:
    accepted: bool
    round_after: int
    repairs_applied: int


class EngineRun:
    """Single-writer state machine; readers get immutable model snapshots."""

    def __init__(self, f0, config: CheckerConfig, monotone: bool = True):
        budget = monotone_budget(config.epsilon, config.max_submissions) if monotone else config.max_submissions
        self.config = replace(config, max_submissions=budget)
        self.external_budget = config.max_submissions
        self.monotone = monotone
        self.model = PointerDecisionList(f0)
        self.checker = CheckerState()
        self.history: list[HistoryEntry] = []

    @property
    def round(self) -> int:
        return self.model.level

    @property
    def halted(self) -> bool:
        return self.checker.halted or self._externals_processed() >= self.external_budget

    def _externals_processed(self) -> int:
        return len(self.history)

    def process(self, group, model, submission_id=None) -> SubmissionOutcome:
        """Judge one external submission and, on accept, patch and repair."""
        accepted, self.checker = check(self.checker, self.config, self.model, group, model)
        repairs = 0
        if accepted:
            self.model = list_update(self.model, group, Model(model))
            if self.monotone:
                repairs = self._repair_scan()
        self.history.append(HistoryEntry(submission_id, accepted, self.model.level))
        return SubmissionOutcome(accepted, self.model.level, repairs)

    def _repair_scan(self) -> int:
        # Probe (group, prefix) pairs against the current working model, in
        # group-introduction order with prefix levels ascending. The first
        # accepted probe is applied as a back-pointer and the scan restarts;
        # the loop ends on a full clean scan or when the checker halts.
        applied = 0
        while True:
            accepted_one = False
            for group in groups_of(self.model):
                for level in range(self.model.level):
                    if self.checker.halted:
                        return applied
                    target = prefix_model(self.model, level)
                    accepted, self.checker = check(
                        self.checker, self.config, self.model, group, target
                    )
                    if accepted:
                        self.model = list_update(self.model, group, Repair(level))
                        applied += 1
                        accepted_one = True
                        break
                if accepted_one:
                    break
            if not accepted_one:
                return applied


def falsify_and_update(f0, config: CheckerConfig, stream):
    """Feed submissions to a fresh checker; accepted ones patch the model."""
    run = EngineRun(f0, config, monotone=False)
    for i, (group, model) in enumerate(stream, start=1):
        if run.halted:
            break
        run.process(group, model, submission_id=i)
    return run.model, run.checker.transcript


def monotone_falsify_and_update(f0, config: CheckerConfig, stream):
    """Like :func:`falsify_and_update`, but every accepted update is followed
    by repair probes that restore any previously patched group the update
    degraded."""
    run = EngineRun(f0, config, monotone=True)
    for i, (group, model) in enumerate(stream, start=1):
        if run.halted:
            break
        run.process(group, model, submission_id=i)
    return run.model, run.checker.transcript


def run_report(run: EngineRun, holdout: LabeledDataset, test: LabeledDataset):
    """Per-submission loss table: the data behind per-group error charts.

    One row per processed external submission (plus an initial row), with the
    holdout loss and public-test losses of the model as it stood after that
    submission. Group columns cover every distinct group in the final model
    and are computed retroactively for all rows, so a plot can draw each
    series before and after its introduction round.
    """
    groups = groups_of(run.model)
    introduced = []
    for g in groups:
        key = serialize_predictor(g)
        level = next(
            level for level, node in enumerate(run.model.nodes, start=1)
            if serialize_predictor(node.group) == key
        )
        introduced.append(level)
    header = ["submission", "verdict", "round", "holdout_loss", "test_loss"]
    header += [f"g{level}_test_loss" for level in introduced]

    def row(submission, verdict, level):
        state = prefix_model(run.model, level)
        values = [submission, verdict, level,
                  loss_on(holdout, state), loss_on(test, state)]
        for g in groups:
            values.append(loss_on(test, state, g) if group_mass(test, g) > 0 else None)
        return values

    rows = [row(0, "initial", 0)]
    for i, entry in enumerate(run.history, start=1):
        rows.append(row(i, "accepted" if entry.accepted else "rejected", entry.resulting_level))
    return header, rows
