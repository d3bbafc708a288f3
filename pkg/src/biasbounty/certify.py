"""The adaptive holdout validator.

A checker owns a hidden holdout set and judges a stream of (model, group,
challenger) triples. The only information it ever releases about the holdout
is the per-submission verdict bit; everything else stays behind this module's
boundary. Budgets cap both the number of submissions processed and the number
ever accepted, which is what keeps holdout reuse statistically safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import snap_ceil, snap_floor
from .dataset import LabeledDataset, predictions

# Slack on the accept comparison so float non-associativity cannot flip a
# verdict across platforms. Documented behaviour: accept iff the statistic is
# >= 3*epsilon/4 up to 1e-12.
ACCEPT_SLACK = 1e-12


class CheckerHaltedError(RuntimeError):
    """A submission was fed to a checker that has already halted."""


@dataclass(frozen=True)
class CheckerConfig:
    epsilon: float
    max_submissions: int
    holdout: LabeledDataset
    delta: float = 0.05

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.max_submissions < 1:
            raise ValueError("max_submissions must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def accept_cap(self) -> int:
        return snap_floor(2 / self.epsilon)

    @property
    def threshold(self) -> float:
        return 3 * self.epsilon / 4


@dataclass(frozen=True)
class CheckerState:
    """Verdict history; advances only through :func:`check`."""

    accepted_count: int = 0
    processed_count: int = 0
    halted: bool = False
    transcript: tuple[bool, ...] = ()


@dataclass(frozen=True)
class CertificateStats:
    """Empirical certificate statistic. Never serialized, never served."""

    mu_hat: float
    delta_hat: float
    product: float


def certificate_statistic(data: LabeledDataset, f, g, h) -> CertificateStats:
    """Single-average form of the statistic: mean of 1[g(x)=1] * (loss(f) - loss(h)).

    Computed as one average rather than a product of two ratios so it stays
    well defined (zero) when the group is empty on the data.
    """
    in_group = predictions(g, data) == 1
    members = int(in_group.sum())
    wrong_f = (predictions(f, data) != data.y).astype(np.int64)
    wrong_h = (predictions(h, data) != data.y).astype(np.int64)
    advantage = int((wrong_f - wrong_h)[in_group].sum())
    if members == 0:
        return CertificateStats(0.0, 0.0, 0.0)
    return CertificateStats(
        mu_hat=members / data.n,
        delta_hat=advantage / members,
        product=advantage / data.n,
    )


def check(state: CheckerState, config: CheckerConfig, f, g, h) -> tuple[bool, CheckerState]:
    """Judge one submission; returns (accepted, successor state).

    Accepts iff the statistic reaches three quarters of epsilon. The checker
    halts once it has accepted its lifetime cap of floor(2/epsilon)
    submissions or processed its full budget.
    """
    if state.halted:
        raise CheckerHaltedError("checker has halted; no further submissions can be judged")
    stats = certificate_statistic(config.holdout, f, g, h)
    accepted = stats.product >= config.threshold - ACCEPT_SLACK
    accepted_count = state.accepted_count + int(accepted)
    processed_count = state.processed_count + 1
    halted = accepted_count >= config.accept_cap or processed_count >= config.max_submissions
    new_state = CheckerState(
        accepted_count=accepted_count,
        processed_count=processed_count,
        halted=halted,
        transcript=state.transcript + (accepted,),
    )
    return accepted, new_state


def required_holdout_size(epsilon: float, delta: float, max_submissions: int) -> int:
    """Holdout rows needed so all verdicts are sound with probability 1 - delta.

    Evaluates ceil(65 * ln(2 * U / delta) / epsilon^3). The guarantee is over
    the draw of the holdout; the checker's runtime behaviour does not depend
    on delta.
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if max_submissions < 1:
        raise ValueError("max_submissions must be >= 1")
    value = 65 * math.log(2 * max_submissions / delta) / epsilon**3
    return snap_ceil(value)


def monotone_budget(epsilon: float, max_submissions: int) -> int:
    """Checker budget needed when repair probes are generated internally."""
    return max_submissions + snap_ceil(8 / epsilon**3)


def transcript_lines(state: CheckerState) -> list[str]:
    """Line-oriented transcript export: index and verdict bit, nothing else."""
    return [f"{i},{'accept' if bit else 'reject'}" for i, bit in enumerate(state.transcript, start=1)]
