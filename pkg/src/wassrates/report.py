"""Bound reports: a headline constant plus the tree of sub-constants behind it.

Every composite node names a registered formula. Replaying a report
recomputes each composite node from its children's recorded values with the
same function that produced it, so an intact ledger replays exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

FORMULAS: dict[str, Callable[[Mapping[str, Any], Mapping[str, float]], float]] = {}

GIVEN = "given"


def formula(name: str):
    """Register ``fn(inputs, subs) -> float`` under ``name``."""

    def deco(fn):
        FORMULAS[name] = fn
        return fn

    return deco


@dataclass
class Node:
    formula: str
    value: float
    inputs: dict = field(default_factory=dict)
    subs: dict = field(default_factory=dict)
    note: str = ""

    def __getitem__(self, key: str) -> "Node":
        return self.subs[key]

    def to_dict(self) -> dict:
        out = {"formula": self.formula, "value": self.value}
        if self.inputs:
            out["inputs"] = self.inputs
        if self.subs:
            out["sub_constants"] = {k: v.to_dict() for k, v in self.subs.items()}
        if self.note:
            out["note"] = self.note
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "Node":
        try:
            return cls(
                formula=d["formula"],
                value=float(d["value"]),
                inputs=dict(d.get("inputs", {})),
                subs={k: cls.from_dict(v) for k, v in d.get("sub_constants", {}).items()},
                note=d.get("note", ""),
            )
        except (KeyError, TypeError) as exc:
            raise LedgerError(f"malformed ledger node: {exc}") from None


class LedgerError(ValueError):
    """Raised for ledgers that cannot be parsed or replayed."""


def given(value: float, note: str = "", **inputs) -> Node:
    """A leaf computed outside the replay system (a summed series, a MC value...)."""
    return Node(GIVEN, float(value), dict(inputs), {}, note)


def compose(name: str, inputs: Mapping[str, Any], subs: Mapping[str, Node], note: str = "") -> Node:
    """Evaluate the registered formula ``name`` and wrap the result as a node."""
    fn = FORMULAS[name]
    value = float(fn(inputs, {k: v.value for k, v in subs.items()}))
    return Node(name, value, dict(inputs), dict(subs), note)


def replay(node: Node, path: str = "") -> list[str]:
    """Recompute every composite node; return descriptions of mismatches."""
    failures = []
    here = path or node.formula
    for key, child in node.subs.items():
        failures += replay(child, f"{here}/{key}")
    if node.formula == GIVEN:
        return failures
    if node.formula not in FORMULAS:
        return failures + [f"{here}: unknown formula {node.formula!r}"]
    try:
        again = float(FORMULAS[node.formula](node.inputs, {k: v.value for k, v in node.subs.items()}))
    except Exception as exc:  # a broken ledger must fail the audit, not crash it
        return failures + [f"{here}: replay raised {type(exc).__name__}: {exc}"]
    if not _close(again, node.value):
        failures.append(f"{here}: recorded {node.value!r}, replayed {again!r}")
    return failures


def _close(a: float, b: float, rel: float = 1e-12) -> bool:
    if math.isinf(a) or math.isinf(b) or math.isnan(a) or math.isnan(b):
        return a == b
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


@dataclass
class BoundReport:
    """A computed constant (C_p, Y_p, C_2, Y_2, ...) with its sub-constant ledger."""

    kind: str
    root: Node
    inputs: dict = field(default_factory=dict)
    verdict: str = "unconditional"

    @property
    def value(self) -> float:
        return self.root.value

    @property
    def sub_constants(self) -> dict:
        return self.root.subs

    def find(self, name: str) -> Node:
        """Depth-first search for a sub-constant by key."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if name in node.subs:
                return node.subs[name]
            stack.extend(reversed(list(node.subs.values())))
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "inputs": self.inputs,
                "verdict": self.verdict, "ledger": self.root.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BoundReport":
        try:
            root = Node.from_dict(d["ledger"])
            rep = cls(d["kind"], root, dict(d.get("inputs", {})), d.get("verdict", ""))
        except KeyError as exc:
            raise LedgerError(f"malformed report: missing {exc}") from None
        if not _close(float(d["value"]), root.value):
            raise LedgerError("headline value differs from the ledger root")
        return rep


def audit(report: BoundReport | Mapping) -> tuple[bool, list[str]]:
    """Replay a report's ledger; pass iff every node reproduces at 1e-12 relative."""
    _load_formulas()
    if not isinstance(report, BoundReport):
        try:
            report = BoundReport.from_dict(report)
        except LedgerError as exc:
            return False, [str(exc)]
    failures = replay(report.root)
    return not failures, failures


def _load_formulas():
    # formulas register on import of the modules that define them
    from . import bayes, expfam, rates  # noqa: F401
