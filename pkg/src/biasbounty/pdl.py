"""Pointer decision lists: the deployed model representation.

A list is a base predictor plus an ordered stack of patch nodes. Each node
guards on a group indicator and either invokes a replacement model or jumps
back to an earlier prefix of the same list. Lists are persistent: updates
return a new list that shares all existing nodes, so every historical prefix
stays addressable forever.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .predictor import DocumentError, canonical_json, eval_rows, predictor_from_doc, serialize


@dataclass(frozen=True)
class Model:
    predictor: object


@dataclass(frozen=True)
class Repair:
    target_level: int


@dataclass(frozen=True)
class PdlNode:
    group: object
    action: Model | Repair
    introduced_round: int


class PointerDecisionList:
    """Immutable; evaluation scans newest node first and falls through to the base."""

    def __init__(self, base, nodes: tuple[PdlNode, ...] = ()):
        nodes = tuple(nodes)
        for level, node in enumerate(nodes, start=1):
            if isinstance(node.action, Repair):
                target = node.action.target_level
                if not 0 <= target < level:
                    raise ValueError(
                        f"repair at level {level} targets {target}; targets must lie in [0, {level})"
                    )
        self.base = base
        self.nodes = nodes

    @property
    def level(self) -> int:
        return len(self.nodes)

    def predict_dataset(self, data: LabeledDataset) -> np.ndarray:
        return self._eval_rows(data, np.arange(data.n))

    def _eval_rows(self, source, idx: np.ndarray) -> np.ndarray:
        return self._eval_prefix(self.level, source, idx)

    def _eval_prefix(self, level: int, source, idx: np.ndarray) -> np.ndarray:
        out = np.empty(len(idx), dtype=np.int64)
        remaining_idx = np.asarray(idx)
        remaining_pos = np.arange(len(idx))
        for i in range(level, 0, -1):
            if remaining_idx.size == 0:
                break
            node = self.nodes[i - 1]
            hit = eval_rows(node.group, source, remaining_idx) == 1
            if hit.any():
                hit_idx = remaining_idx[hit]
                hit_pos = remaining_pos[hit]
                if isinstance(node.action, Model):
                    out[hit_pos] = eval_rows(node.action.predictor, source, hit_idx)
                else:
                    # Repair targets are strictly below the node's level, so
                    # this recursion strictly decreases and terminates.
                    out[hit_pos] = self._eval_prefix(node.action.target_level, source, hit_idx)
                remaining_idx = remaining_idx[~hit]
                remaining_pos = remaining_pos[~hit]
        if remaining_idx.size:
            out[remaining_pos] = eval_rows(self.base, source, remaining_idx)
        return out


class PdlPrefix:
    """Read-only view of a list truncated to ``level``; usable anywhere a model is."""

    def __init__(self, pdl: PointerDecisionList, level: int):
        if not 0 <= level <= pdl.level:
            raise ValueError(f"prefix level {level} outside [0, {pdl.level}]")
        self.pdl = pdl
        self.level = level

    def predict_dataset(self, data: LabeledDataset) -> np.ndarray:
        return self.pdl._eval_prefix(self.level, data, np.arange(data.n))

    def _eval_rows(self, source, idx: np.ndarray) -> np.ndarray:
        return self.pdl._eval_prefix(self.level, source, idx)


def list_update(f: PointerDecisionList, group, action: Model | Repair,
                introduced_round: int | None = None) -> PointerDecisionList:
    """Append one patch node; the input list is left untouched."""
    if isinstance(action, Repair) and not 0 <= action.target_level <= f.level:
        raise ValueError(
            f"repair target {action.target_level} outside [0, {f.level}]"
        )
    round_ = f.level + 1 if introduced_round is None else introduced_round
    node = PdlNode(group=group, action=action, introduced_round=round_)
    return PointerDecisionList(f.base, f.nodes + (node,))


def evaluate_prefix(f: PointerDecisionList, level: int, x) -> int:
    """Evaluate the prefix of ``f`` with the given number of nodes on one row."""
    if not 0 <= level <= f.level:
        raise ValueError(f"prefix level {level} outside [0, {f.level}]")
    from .predictor import _Cols

    out = f._eval_prefix(level, _Cols(x), np.asarray([0]))
    return int(out[0])


def evaluate(f: PointerDecisionList, x) -> int:
    return evaluate_prefix(f, f.level, x)


def prefix_model(f: PointerDecisionList, level: int) -> PdlPrefix:
    return PdlPrefix(f, level)


def groups_of(f: PointerDecisionList) -> list:
    """Distinct node groups in introduction order; identity is canonical-document equality."""
    seen: set[str] = set()
    out = []
    for node in f.nodes:
        key = serialize(node.group)
        if key not in seen:
            seen.add(key)
            out.append(node.group)
    return out


def pdl_to_doc(f: PointerDecisionList) -> dict:
    nodes = []
    for node in f.nodes:
        if isinstance(node.action, Model):
            action = {"model": node.action.predictor.to_doc()}
        else:
            action = {"repair": node.action.target_level}
        nodes.append(
            {"group": node.group.to_doc(), "action": action, "introduced_round": node.introduced_round}
        )
    return {"base": f.base.to_doc(), "nodes": nodes}


def pdl_from_doc(doc: dict) -> PointerDecisionList:
    if not isinstance(doc, dict) or set(doc) != {"base", "nodes"}:
        raise DocumentError("model document must have exactly the fields base, nodes")
    base = predictor_from_doc(doc["base"])
    nodes = []
    for level, item in enumerate(doc["nodes"], start=1):
        if not isinstance(item, dict) or set(item) != {"group", "action", "introduced_round"}:
            raise DocumentError("model node must have fields group, action, introduced_round")
        group = predictor_from_doc(item["group"])
        action_doc = item["action"]
        if not isinstance(action_doc, dict) or len(action_doc) != 1:
            raise DocumentError("node action must be a single-field object")
        if "model" in action_doc:
            action: Model | Repair = Model(predictor_from_doc(action_doc["model"]))
        elif "repair" in action_doc:
            target = action_doc["repair"]
            if not isinstance(target, int) or not 0 <= target < level:
                raise DocumentError(
                    f"repair target at level {level} must be an integer in [0, {level})"
                )
            action = Repair(target)
        else:
            raise DocumentError("node action must be either a model or a repair")
        nodes.append(PdlNode(group, action, int(item["introduced_round"])))
    return PointerDecisionList(base, tuple(nodes))


def serialize_pdl(f: PointerDecisionList) -> str:
    """Canonical document text for the whole list."""
    return canonical_json(pdl_to_doc(f))


def deserialize_pdl(text: str) -> PointerDecisionList:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"model document is not valid JSON: {exc}") from None
    return pdl_from_doc(doc)
