"""Feature-space mixup of TTS and real utterances.

A mixed example keeps the TTS time axis and transcript::

    mixed = lam * tts + (1 - lam) * real,   lam = max(u, 1 - u),  u ~ Beta(alpha, beta)

The real member is truncated, or zero-padded, to the TTS frame count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import DimMismatch, Kind, Transcript, Utterance


class InvalidLambda(ValueError):
    pass


class EmptyRealPool(ValueError):
    pass


@dataclass(frozen=True)
class MixupParams:
    alpha: float = 0.4
    beta: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True, eq=False)
class MixedUtterance:
    features: np.ndarray
    transcript: Transcript
    lambda_mix: float
    source_tts_id: str
    source_real_id: str

    @property
    def id(self) -> str:
        return f"{self.source_tts_id}~{self.source_real_id}"

    def as_utterance(self, utt_id: str | None = None) -> Utterance:
        return Utterance(utt_id or self.id, self.features, self.transcript, Kind.TTS)


def draw_beta(alpha: float, beta: float, rng: np.random.Generator) -> float:
    """One Beta(alpha, beta) draw as a ratio of two Gamma draws."""
    x = rng.standard_gamma(alpha)
    y = rng.standard_gamma(beta)
    if x + y == 0.0:
        # both gammas underflowed; only reachable for tiny shapes
        return 0.5
    return float(x / (x + y))


def fold_lambda(lam: float) -> float:
    return max(lam, 1.0 - lam)


def sample_lambda_mix(params: MixupParams, rng: np.random.Generator) -> float:
    return fold_lambda(draw_beta(params.alpha, params.beta, rng))


def align_frames(real: np.ndarray, frames: int) -> np.ndarray:
    """Truncate or zero-pad ``real`` along time to exactly ``frames`` rows."""
    if real.shape[0] >= frames:
        return real[:frames]
    pad = np.zeros((frames - real.shape[0], real.shape[1]), dtype=real.dtype)
    return np.concatenate([real, pad], axis=0)


def mix_pair(tts: Utterance, real: Utterance, lambda_mix: float) -> MixedUtterance:
    if tts.kind is not Kind.TTS or real.kind is not Kind.REAL:
        raise ValueError(f"expected (tts, real) pair, got ({tts.kind.value}, {real.kind.value})")
    if tts.features.shape[1] != real.features.shape[1]:
        raise DimMismatch(tts.features.shape[1], real.features.shape[1], real.id)
    if not 0.5 <= lambda_mix <= 1.0:
        raise InvalidLambda(f"lambda_mix must lie in [0.5, 1], got {lambda_mix}")
    xa = np.asarray(tts.features, dtype=np.float64)
    xb = align_frames(np.asarray(real.features, dtype=np.float64), xa.shape[0])
    mixed = lambda_mix * xa + (1.0 - lambda_mix) * xb
    return MixedUtterance(mixed, tts.transcript, float(lambda_mix), tts.id, real.id)


def mix_batches(
    tts_batch: Sequence[Utterance],
    real_pool: Sequence[Utterance],
    params: MixupParams,
    rng: np.random.Generator,
) -> list[MixedUtterance]:
    """Mix one batch of TTS utterances with a fresh batch of real partners.

    A single ``lambda_mix`` is drawn for the whole batch. Partners are drawn
    without replacement when the pool is large enough, otherwise with
    replacement.
    """
    if len(real_pool) == 0:
        raise EmptyRealPool("real pool is empty")
    lam = sample_lambda_mix(params, rng)
    n = len(tts_batch)
    replace = len(real_pool) < n
    picks = rng.choice(len(real_pool), size=n, replace=replace)
    return [mix_pair(t, real_pool[int(j)], lam) for t, j in zip(tts_batch, picks)]
