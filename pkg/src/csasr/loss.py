"""CTC, attention cross-entropy, the English-mass reward and their combination.

Every loss returns its value together with the exact gradient with respect
to the pre-softmax logits, so the toy model can back-propagate without an
autodiff framework. CTC runs in log space; the reward is computed from
exponentiated log-probabilities since it only sums values in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_softmax

NEG_INF = -np.inf


class LossError(ValueError):
    pass


class EmptyPosterior(LossError):
    pass


class LabelTooLong(LossError):
    def __init__(self, T: int, needed: int):
        super().__init__(f"{T} frames cannot emit a label sequence needing {needed}")
        self.T = T
        self.needed = needed


class LengthMismatch(LossError):
    def __init__(self, T: int, expected: int):
        super().__init__(f"posterior has {T} steps, expected {expected}")
        self.T = T
        self.expected = expected


@dataclass(frozen=True, eq=False)
class PosteriorSequence:
    """Row-wise softmax of a T x V logit matrix."""

    logits: np.ndarray
    log_probs: np.ndarray = field(init=False, repr=False)
    probs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 2 or logits.shape[1] == 0:
            raise EmptyPosterior(f"logits must be T x V with V >= 1, got {logits.shape}")
        lp = log_softmax(logits, axis=1)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "log_probs", lp)
        object.__setattr__(self, "probs", np.exp(lp))

    @classmethod
    def from_probs(cls, probs) -> "PosteriorSequence":
        # log of a distribution is a valid logit vector for that distribution
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(probs, dtype=np.float64)))

    @property
    def T(self) -> int:
        return self.logits.shape[0]

    @property
    def V(self) -> int:
        return self.logits.shape[1]


@dataclass(frozen=True)
class LossConfig:
    english_set: frozenset = frozenset()
    blank_index: int = 0
    eos_index: int = 3
    lambda_mtl: float = 0.7
    lambda_prime: float = 0.25
    reward_enabled: bool = False
    # which branch lambda_mtl weighs; the other gets 1 - lambda_mtl
    mtl_weight_on: str = "ctc"

    def __post_init__(self):
        if not 0.0 <= self.lambda_mtl <= 1.0:
            raise ValueError(f"lambda_mtl must be in [0, 1], got {self.lambda_mtl}")
        if self.lambda_prime < 0:
            raise ValueError(f"lambda_prime must be >= 0, got {self.lambda_prime}")
        if self.mtl_weight_on not in ("ctc", "att"):
            raise ValueError(f"mtl_weight_on must be 'ctc' or 'att', got {self.mtl_weight_on!r}")
        object.__setattr__(self, "english_set", frozenset(int(i) for i in self.english_set))

    @property
    def ctc_weight(self) -> float:
        return self.lambda_mtl if self.mtl_weight_on == "ctc" else 1.0 - self.lambda_mtl

    @property
    def att_weight(self) -> float:
        return 1.0 - self.ctc_weight

    @property
    def effective_lambda_prime(self) -> float:
        return self.lambda_prime if self.reward_enabled else 0.0


@dataclass(frozen=True, eq=False)
class LossOutput:
    total: float
    l_ctc: float
    l_att: float
    l_mtl: float
    r_ctc: float
    r_att: float
    grad_ctc_logits: np.ndarray
    grad_att_logits: np.ndarray


def _extended(labels: Sequence[int], blank: int) -> np.ndarray:
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_min_frames(labels: Sequence[int]) -> int:
    """Fewest frames that can emit ``labels``: one per symbol plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_forward_backward(log_probs: np.ndarray, labels: Sequence[int], blank: int):
    """Log-space alpha/beta lattices over the blank-augmented label sequence.

    Both lattices include the emission at their own frame, so
    ``alpha[t, s] + beta[t, s] - log_probs[t, ext[s]]`` is the log mass of all
    paths through state ``s`` at time ``t``.
    """
    T = log_probs.shape[0]
    ext = _extended(labels, blank)
    S = len(ext)
    emit = log_probs[:, ext]  # T x S
    # s-2 skip allowed into non-blank states whose label differs from s-2
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]

    if S > 1:
        log_like = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    else:
        log_like = alpha[T - 1, 0]
    return alpha, beta, ext, log_like


def ctc_loss(post: PosteriorSequence, labels: Sequence[int], blank_index: int = 0):
    """Negative log-likelihood of ``labels`` under CTC, and its gradient w.r.t. logits."""
    labels = [int(c) for c in labels]
    T = post.T
    if T == 0:
        raise EmptyPosterior("posterior has no frames")
    if blank_index in labels:
        raise LossError("labels must not contain the blank symbol")
    needed = ctc_min_frames(labels)
    if T < needed:
        raise LabelTooLong(T, needed)

    lp = post.log_probs
    alpha, beta, ext, log_like = ctc_forward_backward(lp, labels, blank_index)
    # state occupancy posteriors lie in [0, 1], so summing them per symbol in linear space is safe
    occ = np.exp(alpha + beta - lp[:, ext] - log_like)
    onehot = np.zeros((len(ext), post.V))
    onehot[np.arange(len(ext)), ext] = 1.0
    grad = post.probs - occ @ onehot
    return float(-log_like), grad


def attention_ce_loss(post: PosteriorSequence, labels: Sequence[int], eos_index: int = 3):
    """Teacher-forced per-step cross-entropy against ``labels + [eos]``."""
    targets = np.asarray(list(labels) + [eos_index], dtype=np.int64)
    if post.T != len(targets):
        raise LengthMismatch(post.T, len(targets))
    steps = np.arange(post.T)
    loss = -post.log_probs[steps, targets].sum()
    grad = post.probs.copy()
    grad[steps, targets] -= 1.0
    return float(loss), grad


def cs_reward(post: PosteriorSequence, english_set):
    """Total posterior mass on English characters, summed over steps.

    Gradient via the softmax Jacobian:
    d reward / dz[t, j] = p[t, j] * (1[j is English] - English mass at step t).
    """
    idx = np.array(sorted(int(i) for i in english_set), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= post.V):
        raise ValueError("english_set index out of vocabulary range")
    mask = np.zeros(post.V)
    mask[idx] = 1.0
    p = post.probs
    mass = p @ mask  # per-step English mass
    grad = p * (mask[None, :] - mass[:, None])
    return float(mass.sum()), grad


def cs_bias_loss(
    ctc_post: PosteriorSequence,
    att_post: PosteriorSequence,
    labels: Sequence[int],
    cfg: LossConfig,
) -> LossOutput:
    """Multitask CTC/attention loss minus the scaled English-mass reward of both branches."""
    l_ctc, g_ctc = ctc_loss(ctc_post, labels, cfg.blank_index)
    l_att, g_att = attention_ce_loss(att_post, labels, cfg.eos_index)
    r_ctc, gr_ctc = cs_reward(ctc_post, cfg.english_set)
    r_att, gr_att = cs_reward(att_post, cfg.english_set)

    wc, wa = cfg.ctc_weight, cfg.att_weight
    lp = cfg.effective_lambda_prime
    l_mtl = wc * l_ctc + wa * l_att
    total = l_mtl - lp * (r_ctc + r_att) if cfg.reward_enabled else l_mtl
    return LossOutput(
        total=float(total),
        l_ctc=l_ctc,
        l_att=l_att,
        l_mtl=float(l_mtl),
        r_ctc=r_ctc,
        r_att=r_att,
        grad_ctc_logits=wc * g_ctc - lp * gr_ctc,
        grad_att_logits=wa * g_att - lp * gr_att,
    )


def combine(l_ctc: float, l_att: float, r_ctc: float, r_att: float, cfg: LossConfig) -> float:
    """Scalar form of the combined objective, for already-computed constituents."""
    l_mtl = cfg.ctc_weight * l_ctc + cfg.att_weight * l_att
    if not cfg.reward_enabled:
        return l_mtl
    return l_mtl - cfg.lambda_prime * (r_ctc + r_att)
