"""Synthetic parallel corpora over small symbol vocabularies.

Sources are drawn from a seeded first-order Markov chain (each token has a
few preferred successors), so adjacent tokens carry usable local signal for
a small-context generation model. Targets are deterministic rearrangements
or recodings of the source, and every bundled task preserves length.
Generation is a pure function of (TaskSpec, example index).
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError
from .rng import named_rng

MASK_SYMBOL = "<mask>"
PAD_SYMBOL = "<pad>"

# Token id 0 doubles as the designated low-information "filler" token when
# TaskSpec.filler_rate > 0; ciphers keep it fixed so it stays recognizable
# in targets (it stands in for determiners/suffixes in order analyses).
FILLER_ID = 0

TASK_KINDS = ("copy", "cipher", "reverse", "reverse_cipher", "swap_halves")

# Source-chain shape: each state prefers a few successors with decaying
# weights, mixed with a uniform floor so every transition stays possible.
_CHAIN_BRANCH = 3
_CHAIN_WEIGHTS = (0.7, 0.2, 0.1)
_CHAIN_FLOOR = 0.05


@dataclass(frozen=True)
class Vocab:
    """Payload token symbols with ids 0..size-1, plus MASK/PAD sentinels."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) < 2:
            raise ConfigError("vocab needs at least 2 payload tokens")
        index = {}
        for i, sym in enumerate(self.tokens):
            if sym in (MASK_SYMBOL, PAD_SYMBOL) or sym in index:
                raise ConfigError(f"bad or duplicate vocab symbol: {sym!r}")
            index[sym] = i
        index[MASK_SYMBOL] = self.mask_id
        index[PAD_SYMBOL] = self.pad_id
        object.__setattr__(self, "_index", index)

    @classmethod
    def standard(cls, vocab_size: int) -> "Vocab":
        return cls(tuple(f"t{i}" for i in range(vocab_size)))

    @property
    def size(self) -> int:
        """Number of payload tokens (sentinels excluded)."""
        return len(self.tokens)

    @property
    def mask_id(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return len(self.tokens) + 1

    @property
    def total_size(self) -> int:
        return len(self.tokens) + 2

    def symbol(self, token_id: int) -> str:
        if token_id == self.mask_id:
            return MASK_SYMBOL
        if token_id == self.pad_id:
            return PAD_SYMBOL
        if 0 <= token_id < len(self.tokens):
            return self.tokens[token_id]
        raise ConfigError(f"token id out of range: {token_id}")

    def token_id(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise ConfigError(f"unknown symbol: {symbol!r}") from None


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    vocab_size: int
    len_min: int
    len_max: int
    seed: int
    filler_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind: {self.kind!r}")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if self.len_min < 1 or self.len_min > self.len_max:
            raise ConfigError("need 1 <= len_min <= len_max")
        if not 0.0 <= self.filler_rate < 1.0:
            raise ConfigError("filler_rate must lie in [0, 1)")

    def vocab(self) -> Vocab:
        return Vocab.standard(self.vocab_size)


@dataclass(frozen=True)
class SentencePair:
    source: tuple[int, ...]
    target: tuple[int, ...]
    task_tag: str


@functools.lru_cache(maxsize=None)
def cipher_permutation(spec: TaskSpec) -> tuple[int, ...]:
    """Seed-derived vocabulary permutation; the filler token is a fixed point."""
    rng = named_rng(spec.seed, "cipher")
    perm = np.arange(spec.vocab_size)
    rest = np.arange(1, spec.vocab_size)
    perm[1:] = rng.permutation(rest)
    return tuple(int(x) for x in perm)


@functools.lru_cache(maxsize=None)
def transition_matrix(spec: TaskSpec) -> np.ndarray:
    """Row-stochastic source-chain transitions, derived from the task seed."""
    rng = named_rng(spec.seed, "chain")
    size = spec.vocab_size
    branch = min(_CHAIN_BRANCH, size)
    weights = np.asarray(_CHAIN_WEIGHTS[:branch], dtype=float)
    weights = weights / weights.sum()
    mat = np.full((size, size), _CHAIN_FLOOR / size)
    for state in range(size):
        successors = rng.choice(size, size=branch, replace=False)
        mat[state, successors] += (1.0 - _CHAIN_FLOOR) * weights
    return mat


def _apply_task(kind, source, perm):
    src = np.asarray(source)
    if kind == "copy":
        tgt = src
    elif kind == "cipher":
        tgt = np.asarray(perm)[src]
    elif kind == "reverse":
        tgt = src[::-1]
    elif kind == "reverse_cipher":
        tgt = np.asarray(perm)[src[::-1]]
    elif kind == "swap_halves":
        half = len(src) // 2
        if len(src) % 2:
            tgt = np.concatenate([src[half + 1:], src[half:half + 1], src[:half]])
        else:
            tgt = np.concatenate([src[half:], src[:half]])
    else:
        raise ConfigError(f"unknown task kind: {kind!r}")
    return tuple(int(x) for x in tgt)


def generate_pair(spec: TaskSpec, index: int) -> SentencePair:
    """Deterministically generate the index-th pair of the corpus."""
    rng = named_rng(spec.seed, "pair", index)
    length = int(rng.integers(spec.len_min, spec.len_max + 1))
    trans = transition_matrix(spec)
    walk = np.empty(length, dtype=int)
    walk[0] = rng.integers(spec.vocab_size)
    for t in range(1, length):
        walk[t] = rng.choice(spec.vocab_size, p=trans[walk[t - 1]])
    if spec.filler_rate > 0.0:
        # overwrite after the walk so the chain continues underneath the filler
        fill = rng.random(length) < spec.filler_rate
        source = np.where(fill, FILLER_ID, walk)
    else:
        source = walk
    source = tuple(int(x) for x in source)
    target = _apply_task(spec.kind, source, cipher_permutation(spec))
    return SentencePair(source, target, spec.kind)


def generate_corpus(spec: TaskSpec, n: int) -> list[SentencePair]:
    if n < 1:
        raise ConfigError("corpus size must be >= 1")
    return [generate_pair(spec, i) for i in range(n)]


def save_corpus(corpus, vocab: Vocab, path):
    """Write one JSON object per line with keys src/tgt/task (symbol arrays)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus:
            rec = {
                "src": [vocab.symbol(t) for t in pair.source],
                "tgt": [vocab.symbol(t) for t in pair.target],
                "task": pair.task_tag,
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_corpus(path, vocab: Vocab) -> list[SentencePair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise ParseError(f"{path}:{lineno}: blank line")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            for key in ("src", "tgt", "task"):
                if key not in rec:
                    raise ParseError(f"{path}:{lineno}: missing key {key!r}")
            try:
                source = tuple(vocab.token_id(s) for s in rec["src"])
                target = tuple(vocab.token_id(s) for s in rec["tgt"])
            except ConfigError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            pairs.append(SentencePair(source, target, str(rec["task"])))
    return pairs
