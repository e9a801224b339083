"""Count-based conditional masked language model with back-off.

The generator is a stack of context -> token count tables at five back-off
levels keyed on (aligned source token, left slot, right slot). Neighbor
slots appear either as a concrete token, the MASK sentinel, or PAD at the
boundary, so "masked neighbor" is itself informative context. After fit()
the model is frozen: every query path is read-only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Vocab
from .errors import ConfigError, ParseError, StateError
from .rng import named_rng

CHECKPOINT_VERSION = "mlm-v1"

# back-off levels over (src, left, right): drop right, then left, then both,
# then the source itself (unigram)
_NUM_LEVELS = 5


@dataclass
class Canvas:
    """A partially generated target: source tokens plus token-or-MASK slots."""

    vocab: Vocab
    source: tuple[int, ...]
    slots: list[int]

    @classmethod
    def all_masked(cls, vocab, source, length):
        return cls(vocab, tuple(source), [vocab.mask_id] * length)

    @classmethod
    def from_tokens(cls, vocab, source, tokens):
        return cls(vocab, tuple(source), list(tokens))

    @property
    def length(self) -> int:
        return len(self.slots)

    @property
    def step(self) -> int:
        """Number of fill actions taken so far."""
        return self.length - len(self.masked_positions())

    def masked_positions(self) -> list[int]:
        mask = self.vocab.mask_id
        return [j for j, s in enumerate(self.slots) if s == mask]

    def is_complete(self) -> bool:
        return self.vocab.mask_id not in self.slots

    def fill(self, position: int, token: int):
        """Fill one masked slot; a filled slot never changes again."""
        if self.slots[position] != self.vocab.mask_id:
            raise StateError(f"slot {position} is already filled")
        if not 0 <= token < self.vocab.size:
            raise ConfigError(f"not a payload token id: {token}")
        self.slots[position] = token

    def copy(self) -> "Canvas":
        return Canvas(self.vocab, self.source, list(self.slots))


def _context(source, slots, pad_id, j):
    src = source[j] if j < len(source) else pad_id
    left = slots[j - 1] if j > 0 else pad_id
    right = slots[j + 1] if j + 1 < len(slots) else pad_id
    return src, left, right


def _level_keys(src, left, right):
    return ((src, left, right), (src, left), (src, right), (src,), ())


@dataclass(frozen=True)
class PositionBelief:
    """Model output at one masked slot."""

    dist: np.ndarray        # over the full id space; MASK/PAD get exactly 0
    entropy: float          # nats
    greedy_tok: int         # argmax token, ties to the lowest id
    greedy_logp: float      # log dist[greedy_tok]
    backoff_level: int      # shallowest level whose key had been observed


class MlmModel:
    """Frozen back-off count model; fit() is the only writer."""

    def __init__(self, vocab: Vocab, k: float = 0.1, beta: float = 0.4):
        if k <= 0:
            raise ConfigError("smoothing constant k must be positive")
        if not 0 < beta <= 1:
            raise ConfigError("back-off discount beta must lie in (0, 1]")
        self.vocab = vocab
        self.k = k
        self.beta = beta
        self.counts = [dict() for _ in range(_NUM_LEVELS)]

    def _observe(self, src, left, right, token):
        for level, key in enumerate(_level_keys(src, left, right)):
            arr = self.counts[level].get(key)
            if arr is None:
                arr = np.zeros(self.vocab.size)
                self.counts[level][key] = arr
            arr[token] += 1.0

    def belief_at(self, canvas: Canvas, position: int) -> PositionBelief:
        src, left, right = _context(canvas.source, canvas.slots, canvas.vocab.pad_id, position)
        size = self.vocab.size
        est = None
        used_level = _NUM_LEVELS - 1
        for level, key in enumerate(_level_keys(src, left, right)):
            arr = self.counts[level].get(key)
            if arr is not None:
                total = arr.sum()
                if total > 0:
                    est = (arr + self.k) / (total + self.k * size)
                    # the back-off discount cancels under the final renormalize
                    est = est * (self.beta ** level)
                    used_level = level
                    break
        if est is None:
            est = np.full(size, 1.0 / size)
        est = est / est.sum()
        dist = np.zeros(self.vocab.total_size)
        dist[:size] = est
        entropy = float(-(est * np.log(est)).sum())
        greedy = int(np.argmax(est))
        return PositionBelief(
            dist=dist,
            entropy=entropy,
            greedy_tok=greedy,
            greedy_logp=float(math.log(est[greedy])),
            backoff_level=used_level,
        )

    def beliefs(self, canvas: Canvas) -> dict[int, PositionBelief]:
        """Belief for every masked slot, keyed by position."""
        masked = canvas.masked_positions()
        if not masked:
            raise StateError("canvas has no masked slot")
        return {j: self.belief_at(canvas, j) for j in masked}

    def pseudo_loglik(self, canvas: Canvas) -> float:
        """Mean log-probability per token, re-masking one slot at a time."""
        if not canvas.is_complete():
            raise StateError("canvas must be fully filled")
        probe = canvas.copy()
        total = 0.0
        for j in range(canvas.length):
            token = canvas.slots[j]
            probe.slots[j] = canvas.vocab.mask_id
            total += float(math.log(self.belief_at(probe, j).dist[token]))
            probe.slots[j] = token
        return total / canvas.length

    def to_json(self) -> dict:
        levels = []
        for table in self.counts:
            entries = {}
            for key in sorted(table):
                arr = table[key]
                nz = {str(tok): float(arr[tok]) for tok in np.nonzero(arr)[0]}
                entries[",".join(str(x) for x in key)] = nz
            levels.append(entries)
        return {
            "version": CHECKPOINT_VERSION,
            "k": self.k,
            "beta": self.beta,
            "vocab": list(self.vocab.tokens),
            "levels": levels,
        }

    @classmethod
    def from_json(cls, blob: dict) -> "MlmModel":
        if blob.get("version") != CHECKPOINT_VERSION:
            raise ParseError(
                f"bad mlm checkpoint version: {blob.get('version')!r}, "
                f"expected {CHECKPOINT_VERSION!r}"
            )
        model = cls(Vocab(tuple(blob["vocab"])), k=blob["k"], beta=blob["beta"])
        for level, entries in enumerate(blob["levels"]):
            for key_str, nz in entries.items():
                key = tuple(int(x) for x in key_str.split(",")) if key_str else ()
                arr = np.zeros(model.vocab.size)
                for tok, cnt in nz.items():
                    arr[int(tok)] = float(cnt)
                model.counts[level][key] = arr
        return model


def fit(corpus, vocab: Vocab, masking_rounds: int = 8, seed: int = 0,
        k: float = 0.1, beta: float = 0.4) -> MlmModel:
    """Fit the count model by repeated random masking of each target.

    Per round and example the mask ratio is drawn uniformly from (0, 1],
    at least one slot is always masked, and every masked slot contributes
    one observation to each back-off level.
    """
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("cannot fit on an empty corpus")
    if masking_rounds < 1:
        raise ConfigError("masking_rounds must be >= 1")
    model = MlmModel(vocab, k=k, beta=beta)
    rng = named_rng(seed, "mlm-fit")
    mask_id = vocab.mask_id
    pad_id = vocab.pad_id
    for _ in range(masking_rounds):
        for pair in corpus:
            length = len(pair.target)
            ratio = 1.0 - rng.random()
            n_masked = max(1, int(math.floor(ratio * length + 0.5)))
            positions = rng.choice(length, size=n_masked, replace=False)
            slots = list(pair.target)
            for j in positions:
                slots[j] = mask_id
            for j in positions:
                src, left, right = _context(pair.source, slots, pad_id, j)
                model._observe(src, left, right, pair.target[j])
    return model


def save_mlm(model: MlmModel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model.to_json(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_mlm(path) -> MlmModel:
    with open(path, encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc.msg})") from None
    return MlmModel.from_json(blob)
