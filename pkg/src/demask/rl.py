"""Advantage actor-critic training and evaluation of de-masking orders.

An episode decodes one sentence pair: the canvas starts fully masked at the
reference length, one slot is filled per step with the generator's greedy
token, and the terminal reward is the smoothed sentence BLEU (or the
generator's own pseudo-log-likelihood) of the finished sequence.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError
from .metrics import corpus_bleu, sentence_bleu
from .mlm import Canvas, MlmModel
from .policy import (
    AdamState,
    FEATURE_DIM,
    MlpParams,
    StepTape,
    adam_step,
    average_grads,
    extract_features,
    policy_episode_grads,
    policy_forward,
    value_episode_grads,
    value_forward,
)
from .rng import named_rng
from .schedulers import next_position, order_label

POLICY_VERSION = "policy-v1"

REWARD_KINDS = ("bleu", "pseudo_loglik")
ENTROPY_SIGNS = ("explore", "literal")


@dataclass
class A2CConfig:
    gamma: float = 0.999
    entropy_coeff: float = 0.001
    entropy_sign: str = "explore"   # "explore" rewards entropy, "literal" penalizes it
    reward: str = "bleu"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    episodes_per_update: int = 32
    epochs: int = 10
    hidden: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.entropy_coeff < 0.0:
            raise ConfigError("entropy coefficient must be >= 0")
        if self.entropy_sign not in ENTROPY_SIGNS:
            raise ConfigError(f"unknown entropy_sign: {self.entropy_sign!r}")
        if self.reward not in REWARD_KINDS:
            raise ConfigError(f"unknown reward: {self.reward!r}")
        if self.episodes_per_update < 1 or self.epochs < 1 or self.hidden < 1:
            raise ConfigError("episodes_per_update, epochs, hidden must be >= 1")


@dataclass
class OrderPolicy:
    """Policy and value heads trained jointly."""

    policy: MlpParams
    value: MlpParams

    @classmethod
    def init(cls, hidden, rng, feat_dim=FEATURE_DIM):
        return cls(MlpParams.init(feat_dim, hidden, rng),
                   MlpParams.init(feat_dim, hidden, rng))

    @classmethod
    def zeros(cls, hidden, feat_dim=FEATURE_DIM):
        return cls(MlpParams.zeros(feat_dim, hidden), MlpParams.zeros(feat_dim, hidden))

    def copy(self):
        return OrderPolicy(self.policy.copy(), self.value.copy())


@dataclass
class StepRecord:
    position: int
    token: int
    probs: np.ndarray | None = None   # full position distribution (policy mode)
    logp: float | None = None
    value: float | None = None


@dataclass
class EpisodeRecord:
    source: tuple[int, ...]
    reference: tuple[int, ...]
    task_tag: str
    steps: list[StepRecord]
    output: tuple[int, ...]
    reward: float
    tape: list[StepTape] = field(default_factory=list, repr=False)

    @property
    def positions(self) -> list[int]:
        return [s.position for s in self.steps]


def _terminal_reward(kind, model, canvas, reference):
    if kind == "bleu":
        return sentence_bleu(list(canvas.slots), list(reference), smoothed=True)
    return model.pseudo_loglik(canvas)


def _refresh_beliefs(model, canvas, beliefs, filled_pos):
    """Only the filled slot's neighbors see a context change (radius 1)."""
    del beliefs[filled_pos]
    mask_id = canvas.vocab.mask_id
    for nb in (filled_pos - 1, filled_pos + 1):
        if 0 <= nb < canvas.length and canvas.slots[nb] == mask_id:
            beliefs[nb] = model.belief_at(canvas, nb)


def rollout(model: MlmModel, head: OrderPolicy, pair, mode="sample", rng=None,
            reward="bleu", keep_tape=True) -> EpisodeRecord:
    """Decode one pair under the order policy, one token per step.

    mode="sample" draws each position from the policy distribution (training);
    mode="greedy" takes its argmax with ties to the lowest index (evaluation).
    """
    if mode not in ("sample", "greedy"):
        raise ConfigError(f"unknown rollout mode: {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling rollouts need an rng")
    length = len(pair.target)
    canvas = Canvas.all_masked(model.vocab, pair.source, length)
    beliefs = model.beliefs(canvas)
    steps, tape = [], []
    for _ in range(length):
        mask = canvas.masked_positions()
        feats = extract_features(canvas, beliefs)
        probs = policy_forward(head.policy, feats, mask)
        value = value_forward(head.value, feats)
        if mode == "greedy":
            pos = int(np.argmax(probs))
        else:
            weights = probs[mask]
            pos = int(rng.choice(mask, p=weights / weights.sum()))
        token = beliefs[pos].greedy_tok
        logp = float(math.log(probs[pos]))
        canvas.fill(pos, token)
        _refresh_beliefs(model, canvas, beliefs, pos)
        steps.append(StepRecord(position=pos, token=token, probs=probs,
                                logp=logp, value=value))
        if keep_tape:
            tape.append(StepTape(features=feats, mask=mask, action=pos))
    return EpisodeRecord(
        source=pair.source, reference=pair.target, task_tag=pair.task_tag,
        steps=steps, output=tuple(canvas.slots),
        reward=float(_terminal_reward(reward, model, canvas, pair.target)),
        tape=tape,
    )


def decode_with_scheduler(model: MlmModel, kind, pair, rng=None,
                          reward="bleu") -> EpisodeRecord:
    """Decode one pair under a heuristic scheduler (greedy token fill)."""
    length = len(pair.target)
    canvas = Canvas.all_masked(model.vocab, pair.source, length)
    beliefs = model.beliefs(canvas)
    steps = []
    for _ in range(length):
        pos = next_position(kind, canvas, beliefs, rng)
        token = beliefs[pos].greedy_tok
        canvas.fill(pos, token)
        _refresh_beliefs(model, canvas, beliefs, pos)
        steps.append(StepRecord(position=pos, token=token))
    return EpisodeRecord(
        source=pair.source, reference=pair.target, task_tag=pair.task_tag,
        steps=steps, output=tuple(canvas.slots),
        reward=float(_terminal_reward(reward, model, canvas, pair.target)),
    )


def compute_advantages(reward, values, gamma) -> np.ndarray:
    """A_i = gamma^(T-i) * R - v_i for steps i = 1..T; no intermediate rewards."""
    values = np.asarray(values, dtype=float)
    steps = len(values)
    discounts = gamma ** np.arange(steps - 1, -1, -1)
    return discounts * reward - values


def discounted_targets(reward, steps, gamma) -> np.ndarray:
    return gamma ** np.arange(steps - 1, -1, -1) * reward


def losses(episode: EpisodeRecord, advantages, gamma, entropy_coeff,
           entropy_sign="explore"):
    """(rl, entropy, value, total) loss terms of one recorded episode.

    The entropy term is the summed step entropies of the full position
    distributions scaled by 1/steps^2 (0*log 0 counts as 0); "explore"
    subtracts it from the total, "literal" adds it.
    """
    steps = len(episode.steps)
    advantages = np.asarray(advantages, dtype=float)
    l_rl = -sum(s.logp * a for s, a in zip(episode.steps, advantages)) / steps
    ent = 0.0
    for s in episode.steps:
        p = s.probs
        ent += float(-np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)))
    l_ent = ent / steps ** 2
    targets = discounted_targets(episode.reward, steps, gamma)
    values = np.array([s.value for s in episode.steps])
    l_value = float(np.mean((values - targets) ** 2))
    sign = -1.0 if entropy_sign == "explore" else 1.0
    l_total = l_rl + sign * entropy_coeff * l_ent + l_value
    return float(l_rl), float(l_ent), float(l_value), float(l_total)


@dataclass
class EpochStats:
    epoch: int
    mean_reward: float
    mean_entropy: float
    dev_bleu: float
    loss_rl: float
    loss_ent: float
    loss_value: float
    loss_total: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_bleu: float = -1.0


def _episode_dump(episode: EpisodeRecord, vocab) -> dict:
    return {
        "source": [vocab.symbol(t) for t in episode.source],
        "reference": [vocab.symbol(t) for t in episode.reference],
        "output": [vocab.symbol(t) for t in episode.output],
        "positions": episode.positions,
        "logps": [s.logp for s in episode.steps],
        "values": [s.value for s in episode.steps],
        "reward": episode.reward,
    }


def train(model: MlmModel, train_pairs, dev_pairs, config: A2CConfig,
          resume=None, log=None):
    """Train the order policy with batched A2C updates.

    Returns (final OrderPolicy, best-dev OrderPolicy, TrainReport, state)
    where state carries the Adam moments and the next epoch index so training
    can resume deterministically from an epoch boundary.
    """
    if not train_pairs or not dev_pairs:
        raise ConfigError("train and dev corpora must be nonempty")
    sign = -1.0 if config.entropy_sign == "explore" else 1.0
    if resume is None:
        head = OrderPolicy.init(config.hidden, named_rng(config.seed, "policy-init"))
        adam_p = AdamState.init(head.policy, config.lr, config.beta1, config.beta2, config.eps)
        adam_v = AdamState.init(head.value, config.lr, config.beta1, config.beta2, config.eps)
        start_epoch = 0
        report = TrainReport()
        best = None
    else:
        head, adam_p, adam_v, start_epoch, report, best = resume
    for epoch in range(start_epoch, config.epochs):
        order = named_rng(config.seed, "shuffle", epoch).permutation(len(train_pairs))
        roll_rng = named_rng(config.seed, "rollout", epoch)
        reward_sum = entropy_sum = 0.0
        step_count = 0
        loss_sums = np.zeros(4)
        episode_count = 0
        for lo in range(0, len(order), config.episodes_per_update):
            batch = order[lo:lo + config.episodes_per_update]
            pgrads, vgrads = [], []
            for idx in batch:
                ep = rollout(model, head, train_pairs[idx], mode="sample",
                             rng=roll_rng, reward=config.reward)
                steps = len(ep.steps)
                values = [s.value for s in ep.steps]
                adv = compute_advantages(ep.reward, values, config.gamma)
                targets = discounted_targets(ep.reward, steps, config.gamma)
                pg, l_rl, l_ent = policy_episode_grads(
                    head.policy, ep.tape, adv,
                    entropy_coeff=sign * config.entropy_coeff)
                vg, l_value = value_episode_grads(head.value, ep.tape, targets)
                l_total = l_rl + sign * config.entropy_coeff * l_ent + l_value
                if not math.isfinite(l_total):
                    dump = json.dumps(_episode_dump(ep, model.vocab), sort_keys=True)
                    raise RuntimeError(
                        f"non-finite loss at epoch {epoch}, example {int(idx)}: "
                        f"rl={l_rl} ent={l_ent} value={l_value}\nepisode: {dump}")
                pgrads.append(pg)
                vgrads.append(vg)
                reward_sum += ep.reward
                entropy_sum += l_ent * steps ** 2  # undo the 1/T^2 scale: summed step entropies
                step_count += steps
                loss_sums += (l_rl, l_ent, l_value, l_total)
                episode_count += 1
            adam_step(head.policy, average_grads(pgrads), adam_p)
            adam_step(head.value, average_grads(vgrads), adam_v)
        dev_report, _ = evaluate(head, model, dev_pairs, keep_traces=False)
        stats = EpochStats(
            epoch=epoch,
            mean_reward=reward_sum / episode_count,
            mean_entropy=entropy_sum / step_count,
            dev_bleu=dev_report.score,
            loss_rl=loss_sums[0] / episode_count,
            loss_ent=loss_sums[1] / episode_count,
            loss_value=loss_sums[2] / episode_count,
            loss_total=loss_sums[3] / episode_count,
        )
        report.epochs.append(stats)
        if best is None or stats.dev_bleu > report.best_dev_bleu:
            best = head.copy()
            report.best_epoch = epoch
            report.best_dev_bleu = stats.dev_bleu
        if log is not None:
            log(f"epoch {epoch}: reward {stats.mean_reward:.4f} "
                f"entropy {stats.mean_entropy:.4f} dev BLEU {100 * stats.dev_bleu:.2f}")
    state = {"adam_policy": adam_p, "adam_value": adam_v, "next_epoch": config.epochs}
    return head, best, report, state


def evaluate(order_source, model: MlmModel, pairs, rng=None, reward="bleu",
             keep_traces=True):
    """Decode every pair under a scheduler kind or trained policy.

    Returns (corpus BleuReport, traces); policies decode greedily.
    """
    traces = []
    outputs, refs = [], []
    for pair in pairs:
        if isinstance(order_source, OrderPolicy):
            ep = rollout(model, order_source, pair, mode="greedy",
                         reward=reward, keep_tape=False)
        else:
            ep = decode_with_scheduler(model, order_source, pair, rng=rng, reward=reward)
        outputs.append(list(ep.output))
        refs.append(list(pair.target))
        if keep_traces:
            traces.append(ep)
    return corpus_bleu(outputs, refs), traces


def save_traces(path, episodes, vocab):
    """JSONL traces: one episode per line with per-step parallel arrays."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ep in episodes:
            rec = {
                "source": [vocab.symbol(t) for t in ep.source],
                "reference": [vocab.symbol(t) for t in ep.reference],
                "output": [vocab.symbol(t) for t in ep.output],
                "task": ep.task_tag,
                "positions": ep.positions,
                "tokens": [vocab.symbol(s.token) for s in ep.steps],
                "logps": [s.logp for s in ep.steps],
                "values": [s.value for s in ep.steps],
                "reward": ep.reward,
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_traces(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return out


def _params_json(params: MlpParams) -> dict:
    return {name: arr.ravel().tolist() for name, arr in params.arrays().items()}


def _params_from_json(blob, feat_dim, hidden) -> MlpParams:
    return MlpParams(
        w1=np.asarray(blob["w1"], dtype=float).reshape(hidden, feat_dim),
        b1=np.asarray(blob["b1"], dtype=float),
        w2=np.asarray(blob["w2"], dtype=float),
        b2=np.asarray(blob["b2"], dtype=float),
    )


def _adam_json(state: AdamState) -> dict:
    return {
        "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
        "eps": state.eps, "step": state.step,
        "m": {k: v.ravel().tolist() for k, v in state.m.items()},
        "v": {k: v.ravel().tolist() for k, v in state.v.items()},
    }


def _adam_from_json(blob, params: MlpParams) -> AdamState:
    shapes = {k: a.shape for k, a in params.arrays().items()}
    return AdamState(
        lr=blob["lr"], beta1=blob["beta1"], beta2=blob["beta2"],
        eps=blob["eps"], step=blob["step"],
        m={k: np.asarray(blob["m"][k], dtype=float).reshape(shapes[k]) for k in shapes},
        v={k: np.asarray(blob["v"][k], dtype=float).reshape(shapes[k]) for k in shapes},
    )


def save_policy(path, head: OrderPolicy, state=None, best=None,
                best_dev_bleu=None, config_hash=""):
    hidden = head.policy.hidden
    feat_dim = head.policy.feat_dim
    blob = {
        "version": POLICY_VERSION,
        "hidden": hidden,
        "feat_dim": feat_dim,
        "config_hash": config_hash,
        "policy": _params_json(head.policy),
        "value": _params_json(head.value),
    }
    if state is not None:
        blob["adam_policy"] = _adam_json(state["adam_policy"])
        blob["adam_value"] = _adam_json(state["adam_value"])
        blob["next_epoch"] = state["next_epoch"]
    if best is not None:
        blob["best"] = {"policy": _params_json(best.policy),
                        "value": _params_json(best.value)}
        blob["best_dev_bleu"] = best_dev_bleu
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(blob, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_policy(path):
    """Returns (head, best_head_or_None, blob) from a policy-v1 checkpoint."""
    with open(path, encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc.msg})") from None
    if blob.get("version") != POLICY_VERSION:
        raise ParseError(
            f"bad policy checkpoint version: {blob.get('version')!r}, "
            f"expected {POLICY_VERSION!r}")
    feat_dim, hidden = blob["feat_dim"], blob["hidden"]
    head = OrderPolicy(
        _params_from_json(blob["policy"], feat_dim, hidden),
        _params_from_json(blob["value"], feat_dim, hidden),
    )
    best = None
    if "best" in blob:
        best = OrderPolicy(
            _params_from_json(blob["best"]["policy"], feat_dim, hidden),
            _params_from_json(blob["best"]["value"], feat_dim, hidden),
        )
    return head, best, blob


def resume_state(path, config: A2CConfig):
    """Rebuild the train() resume tuple from a checkpoint with optimizer state."""
    head, best, blob = load_policy(path)
    if "adam_policy" not in blob:
        raise ParseError(f"{path}: checkpoint has no optimizer state to resume from")
    adam_p = _adam_from_json(blob["adam_policy"], head.policy)
    adam_v = _adam_from_json(blob["adam_value"], head.value)
    report = TrainReport(best_dev_bleu=blob.get("best_dev_bleu") or -1.0)
    return head, adam_p, adam_v, blob["next_epoch"], report, best


def order_name(order_source) -> str:
    if isinstance(order_source, OrderPolicy):
        return "learned"
    return order_label(order_source)


__all__ = [
    "A2CConfig", "OrderPolicy", "StepRecord", "EpisodeRecord",
    "rollout", "decode_with_scheduler", "compute_advantages",
    "discounted_targets", "losses", "train", "evaluate",
    "save_traces", "load_traces", "save_policy", "load_policy",
    "resume_state", "order_name", "TrainReport", "EpochStats",
]
