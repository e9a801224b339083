"""Heuristic generation-order selectors.

Given the canvas (and, for belief-driven kinds, per-position beliefs),
pick the next masked slot to fill. All ties break to the lowest index so
decoding traces are reproducible.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

from .errors import ConfigError, StateError


@dataclass(frozen=True)
class Uniform:
    """Pick a masked position uniformly at random (rng supplied per call)."""


@dataclass(frozen=True)
class Left2Right:
    """Always fill the left-most masked position."""


@dataclass(frozen=True)
class Least2Most:
    """Fill the slot whose greedy prediction is least confident first.

    variant="most-confident" flips the rule, filling the highest-confidence
    slot first.
    """

    variant: str = "least-confident"

    def __post_init__(self):
        if self.variant not in ("least-confident", "most-confident"):
            raise ConfigError(f"unknown least2most variant: {self.variant!r}")


@dataclass(frozen=True)
class EasyFirst:
    """Fill the slot maximizing a weighted sum of confidence and -entropy."""

    alpha_logp: float = 1.0
    alpha_negent: float = 1.0


@dataclass(frozen=True)
class Outer2Inner:
    """Alternate chunks of `stride` slots from the left and right ends."""

    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")


SchedulerKind = Uniform | Left2Right | Least2Most | EasyFirst | Outer2Inner


@dataclass(frozen=True)
class ScoreBreakdown:
    """Per-position selection scores used by the belief-driven heuristics."""

    conf: float      # greedy log-probability, nats
    negent: float    # negated belief entropy, nats
    combined: float


def position_scores(beliefs, alpha_logp=1.0, alpha_negent=1.0):
    return {
        j: ScoreBreakdown(
            conf=b.greedy_logp,
            negent=-b.entropy,
            combined=alpha_logp * b.greedy_logp + alpha_negent * (-b.entropy),
        )
        for j, b in beliefs.items()
    }


@functools.lru_cache(maxsize=None)
def outer2inner_order(length: int, stride: int = 1) -> tuple[int, ...]:
    """Fixed outer-to-inner visitation order.

    A left chunk of `stride` slots is emitted left-to-right, then a right
    chunk right-to-left, alternating until the frontiers meet. With
    stride >= length this degenerates to plain left-to-right.
    """
    if length < 1:
        raise ConfigError("length must be >= 1")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    lo, hi = 0, length - 1
    order = []
    while lo <= hi:
        for _ in range(stride):
            if lo > hi:
                break
            order.append(lo)
            lo += 1
        for _ in range(stride):
            if lo > hi:
                break
            order.append(hi)
            hi -= 1
    return tuple(order)


def _argbest(positions, score, best=max):
    """Index with the best score; ties resolve to the lowest position."""
    chosen, chosen_score = None, None
    for j in sorted(positions):
        s = score(j)
        if chosen is None or (s != chosen_score and s == best(s, chosen_score)):
            chosen, chosen_score = j, s
    return chosen


def next_position(kind, canvas, beliefs=None, rng=None) -> int:
    """Select the next masked slot under the given scheduler kind."""
    masked = canvas.masked_positions()
    if not masked:
        raise StateError("canvas has no masked slot")
    if isinstance(kind, Left2Right):
        return masked[0]
    if isinstance(kind, Uniform):
        if rng is None:
            raise ValueError("Uniform scheduling needs an rng")
        return int(masked[int(rng.integers(len(masked)))])
    if isinstance(kind, Outer2Inner):
        for j in outer2inner_order(canvas.length, kind.stride):
            if canvas.slots[j] == canvas.vocab.mask_id:
                return j
        raise StateError("canvas has no masked slot")
    if beliefs is None or any(j not in beliefs for j in masked):
        raise ValueError(f"{type(kind).__name__} needs beliefs for every masked slot")
    if isinstance(kind, Least2Most):
        if kind.variant == "least-confident":
            return _argbest(masked, lambda j: beliefs[j].greedy_logp, best=min)
        return _argbest(masked, lambda j: beliefs[j].greedy_logp, best=max)
    if isinstance(kind, EasyFirst):
        scores = position_scores(beliefs, kind.alpha_logp, kind.alpha_negent)
        return _argbest(masked, lambda j: scores[j].combined, best=max)
    raise ConfigError(f"unknown scheduler kind: {kind!r}")


def parse_order(text: str) -> SchedulerKind:
    """Parse a CLI order spec: uniform|l2r|l2m|easy-first|outer2inner:S."""
    if text == "uniform":
        return Uniform()
    if text == "l2r":
        return Left2Right()
    if text == "l2m":
        return Least2Most()
    if text == "easy-first":
        return EasyFirst()
    if text == "outer2inner" or text.startswith("outer2inner:"):
        stride = 1
        if ":" in text:
            try:
                stride = int(text.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad outer2inner stride in {text!r}") from None
        return Outer2Inner(stride)
    raise ConfigError(f"unknown order: {text!r}")


def order_label(kind) -> str:
    if isinstance(kind, Uniform):
        return "uniform"
    if isinstance(kind, Left2Right):
        return "l2r"
    if isinstance(kind, Least2Most):
        return "l2m" if kind.variant == "least-confident" else "l2m-most-confident"
    if isinstance(kind, EasyFirst):
        return "easy-first"
    if isinstance(kind, Outer2Inner):
        return f"outer2inner:{kind.stride}"
    return "learned"
