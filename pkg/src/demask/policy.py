"""Learnable order policy: features, 2-layer MLP heads, exact gradients, Adam.

The policy head maps per-slot feature vectors to scalar logits and softmaxes
them over the masked slots; the value head scores the mean feature vector.
Gradients are written out analytically (advantages and value targets are
treated as constants, so no gradient crosses between the two heads) and are
checked against finite differences in the test suite.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import StateError

FEATURE_DIM = 10

# One tape entry per decoding step: the full feature matrix of the canvas
# before the fill, the masked slots at that point, and the slot picked.
StepTape = namedtuple("StepTape", "features mask action")


def extract_features(canvas, beliefs) -> np.ndarray:
    """Per-slot features, shape (length, FEATURE_DIM), all entries in [0, 1].

    Columns: is_masked, j/T, distance past the leftmost mask, distance to the
    rightmost mask, normalized belief entropy, greedy-token probability,
    fraction filled, left/right neighbor filled, 1/T. Filled slots carry 0
    for the entropy/confidence columns; out-of-range neighbors count as not
    filled.
    """
    length = canvas.length
    mask_id = canvas.vocab.mask_id
    slots = canvas.slots
    masked = [j for j in range(length) if slots[j] == mask_id]
    feats = np.zeros((length, FEATURE_DIM))
    positions = np.arange(length)
    feats[:, 1] = positions / length
    if masked:
        lo, hi = masked[0], masked[-1]
        feats[:, 2] = np.maximum(positions - lo, 0) / length
        feats[:, 3] = np.maximum(hi - positions, 0) / length
    feats[:, 6] = (length - len(masked)) / length
    feats[:, 9] = 1.0 / length
    log_vocab = math.log(canvas.vocab.size)
    for j in masked:
        feats[j, 0] = 1.0
        belief = beliefs[j]
        feats[j, 4] = belief.entropy / log_vocab
        feats[j, 5] = math.exp(belief.greedy_logp)
    for j in range(length):
        if j > 0 and slots[j - 1] != mask_id:
            feats[j, 7] = 1.0
        if j + 1 < length and slots[j + 1] != mask_id:
            feats[j, 8] = 1.0
    return feats


@dataclass
class MlpParams:
    """One scalar-output 2-layer tanh MLP (used for both heads)."""

    w1: np.ndarray  # (hidden, feat)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # (1,)

    @classmethod
    def init(cls, feat_dim, hidden, rng, scale=0.1):
        return cls(
            w1=rng.uniform(-scale, scale, size=(hidden, feat_dim)),
            b1=rng.uniform(-scale, scale, size=hidden),
            w2=rng.uniform(-scale, scale, size=hidden),
            b2=rng.uniform(-scale, scale, size=1),
        )

    @classmethod
    def zeros(cls, feat_dim, hidden):
        return cls(
            w1=np.zeros((hidden, feat_dim)),
            b1=np.zeros(hidden),
            w2=np.zeros(hidden),
            b2=np.zeros(1),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.w1.shape[1]


def _zero_grads(params):
    return {name: np.zeros_like(arr) for name, arr in params.arrays().items()}


def logits(params: MlpParams, features: np.ndarray) -> np.ndarray:
    """Scalar logit per row of `features`."""
    hidden = np.tanh(features @ params.w1.T + params.b1)
    return hidden @ params.w2 + params.b2[0]


def policy_forward(params: MlpParams, features: np.ndarray, mask) -> np.ndarray:
    """Position distribution over the masked slots; exact zeros elsewhere."""
    mask = list(mask)
    if not mask:
        raise StateError("empty mask set")
    z = logits(params, features[mask])
    z = z - z.max()
    expz = np.exp(z)
    probs = np.zeros(features.shape[0])
    probs[mask] = expz / expz.sum()
    return probs


def value_forward(params: MlpParams, features: np.ndarray) -> float:
    """Critic value: the MLP applied to the mean feature vector."""
    pooled = features.mean(axis=0)
    hidden = np.tanh(params.w1 @ pooled + params.b1)
    return float(hidden @ params.w2 + params.b2[0])


def _step_distribution(params, features, mask):
    rows = features[mask]
    hidden = np.tanh(rows @ params.w1.T + params.b1)
    z = hidden @ params.w2 + params.b2[0]
    z = z - z.max()
    expz = np.exp(z)
    probs = expz / expz.sum()
    return rows, hidden, probs


def policy_episode_terms(params, tape, advantages):
    """(rl_term, entropy_term) of one episode under the current parameters.

    rl_term is the advantage-weighted negative log-likelihood of the chosen
    positions, averaged over steps. entropy_term is the summed step entropies
    scaled by 1/steps^2 (always >= 0).
    """
    steps = len(tape)
    rl_term = 0.0
    ent_term = 0.0
    for entry, adv in zip(tape, advantages):
        _, _, probs = _step_distribution(params, entry.features, entry.mask)
        idx = entry.mask.index(entry.action)
        rl_term += -math.log(probs[idx]) * adv
        ent_term += float(-(probs * np.log(probs)).sum())
    return rl_term / steps, ent_term / steps ** 2


def policy_episode_grads(params, tape, advantages, entropy_coeff=0.0):
    """Gradients of rl_term + entropy_coeff * entropy_term w.r.t. params.

    Advantages are constants. Pass entropy_coeff=-lambda to reward entropy,
    +lambda for a literal penalty, 0 to drop the term.
    """
    steps = len(tape)
    grads = _zero_grads(params)
    rl_term = 0.0
    ent_term = 0.0
    for entry, adv in zip(tape, advantages):
        rows, hidden, probs = _step_distribution(params, entry.features, entry.mask)
        idx = entry.mask.index(entry.action)
        logp = np.log(probs)
        step_entropy = float(-(probs * logp).sum())
        rl_term += -logp[idx] * adv
        ent_term += step_entropy
        # d(rl)/dz for this step
        gz = (adv / steps) * probs
        gz[idx] -= adv / steps
        if entropy_coeff != 0.0:
            # d(entropy)/dz_j = -p_j (log p_j + H)
            gz += (entropy_coeff / steps ** 2) * (-probs * (logp + step_entropy))
        grads["w2"] += gz @ hidden
        grads["b2"][0] += gz.sum()
        dhidden = np.outer(gz, params.w2)
        dpre = dhidden * (1.0 - hidden ** 2)
        grads["w1"] += dpre.T @ rows
        grads["b1"] += dpre.sum(axis=0)
    return grads, rl_term / steps, ent_term / steps ** 2


def value_episode_loss(params, tape, targets):
    """Mean squared error of the critic against fixed per-step targets."""
    steps = len(tape)
    loss = 0.0
    for entry, target in zip(tape, targets):
        loss += (value_forward(params, entry.features) - target) ** 2
    return loss / steps


def value_episode_grads(params, tape, targets):
    steps = len(tape)
    grads = _zero_grads(params)
    loss = 0.0
    for entry, target in zip(tape, targets):
        pooled = entry.features.mean(axis=0)
        hidden = np.tanh(params.w1 @ pooled + params.b1)
        value = float(hidden @ params.w2 + params.b2[0])
        err = value - target
        loss += err ** 2
        dv = 2.0 * err / steps
        grads["w2"] += dv * hidden
        grads["b2"][0] += dv
        dpre = dv * params.w2 * (1.0 - hidden ** 2)
        grads["w1"] += np.outer(dpre, pooled)
        grads["b1"] += dpre
    return grads, loss / steps


@dataclass
class AdamState:
    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def init(cls, params, lr=1e-4, beta1=0.9, beta2=0.98, eps=1e-8):
        return cls(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
            m={k: np.zeros_like(a) for k, a in params.arrays().items()},
            v={k: np.zeros_like(a) for k, a in params.arrays().items()},
        )


def adam_step(params: MlpParams, grads, state: AdamState) -> MlpParams:
    """One bias-corrected Adam update, applied in place."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, arr in params.arrays().items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g ** 2
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        arr -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def average_grads(grad_list):
    """Elementwise mean of a nonempty list of gradient dicts."""
    out = {name: arr.copy() for name, arr in grad_list[0].items()}
    for grads in grad_list[1:]:
        for name in out:
            out[name] += grads[name]
    for name in out:
        out[name] /= len(grad_list)
    return out
