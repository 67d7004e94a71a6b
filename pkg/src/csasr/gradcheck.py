"""Central finite-difference verification of every analytic gradient."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .loss import (
    LossConfig,
    PosteriorSequence,
    attention_ce_loss,
    cs_bias_loss,
    cs_reward,
    ctc_loss,
    ctc_min_frames,
)
from .model import ToyModel

STEP = 1e-5
TOL = 1e-4
MODEL_TOL = 1e-3
# gradients smaller than this in max-norm are compared absolutely
DENOM_FLOOR = 1e-6


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f(x)
        x[i] = orig - h
        fm = f(x)
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm relative error ``|a - n|_inf / max(|a|_inf, |n|_inf)``."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    denom = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), DENOM_FLOOR)
    return float(np.abs(a - n).max(initial=0.0) / denom)


def _random_labels(rng, T, V, blank, max_len=4, exclude=()):
    allowed = [k for k in range(V) if k != blank and k not in exclude]
    for _ in range(100):
        n = int(rng.integers(0, max_len + 1))
        labels = [int(c) for c in rng.choice(allowed, size=n)] if n else []
        if ctc_min_frames(labels) <= T:
            return labels
    return []


def _random_english(rng, V, blank):
    cand = [k for k in range(V) if k != blank]
    k = int(rng.integers(1, len(cand) + 1))
    return frozenset(int(c) for c in rng.choice(cand, size=k, replace=False))


def check_ctc(rng) -> float:
    T, V = int(rng.integers(1, 9)), int(rng.integers(2, 6))
    labels = _random_labels(rng, T, V, 0)
    z = rng.normal(scale=1.5, size=(T, V))
    _, g = ctc_loss(PosteriorSequence(z), labels, 0)
    return rel_error(g, numeric_grad(lambda w: ctc_loss(PosteriorSequence(w), labels, 0)[0], z))


def check_attention(rng) -> float:
    V = int(rng.integers(2, 7))
    eos = int(rng.integers(0, V))
    labels = [int(c) for c in rng.integers(0, V, size=int(rng.integers(0, 6)))]
    z = rng.normal(scale=1.5, size=(len(labels) + 1, V))
    _, g = attention_ce_loss(PosteriorSequence(z), labels, eos)
    return rel_error(g, numeric_grad(lambda w: attention_ce_loss(PosteriorSequence(w), labels, eos)[0], z))


def check_reward(rng) -> float:
    T, V = int(rng.integers(1, 9)), int(rng.integers(2, 7))
    eng = _random_english(rng, V, 0)
    z = rng.normal(scale=1.5, size=(T, V))
    _, g = cs_reward(PosteriorSequence(z), eng)
    return rel_error(g, numeric_grad(lambda w: cs_reward(PosteriorSequence(w), eng)[0], z))


def check_cs_bias(rng) -> float:
    V = int(rng.integers(3, 7))
    T = int(rng.integers(1, 9))
    eos = V - 1
    labels = _random_labels(rng, T, V, 0, exclude=(eos,))
    cfg = LossConfig(
        english_set=_random_english(rng, V, 0),
        blank_index=0,
        eos_index=eos,
        lambda_mtl=float(rng.uniform()),
        lambda_prime=float(rng.uniform(0, 1)),
        reward_enabled=True,
    )
    zc = rng.normal(scale=1.5, size=(T, V))
    za = rng.normal(scale=1.5, size=(len(labels) + 1, V))
    out = cs_bias_loss(PosteriorSequence(zc), PosteriorSequence(za), labels, cfg)
    nc = numeric_grad(lambda w: cs_bias_loss(PosteriorSequence(w), PosteriorSequence(za), labels, cfg).total, zc)
    na = numeric_grad(lambda w: cs_bias_loss(PosteriorSequence(zc), PosteriorSequence(w), labels, cfg).total, za)
    return max(rel_error(out.grad_ctc_logits, nc), rel_error(out.grad_att_logits, na))


def check_model(rng, frames: int = 3) -> float:
    dims, V = 4, 6
    eos = 3
    model = ToyModel.init(dims, V, rng, hidden=5, embed=3, eos_index=eos)
    for v in model.params.values():
        v += rng.normal(scale=0.3, size=v.shape)
    x = rng.normal(size=(frames, dims))
    labels = _random_labels(rng, frames, V, 0, max_len=2, exclude=(eos,))
    cfg = LossConfig(english_set=frozenset({4, 5}), eos_index=eos, lambda_prime=0.25, reward_enabled=True)
    _, grads = model.loss_and_grad(x, labels, cfg)
    worst = 0.0
    for name, value in model.params.items():

        def f(w, name=name):
            saved = model.params[name]
            model.params[name] = w
            try:
                ctc_post, att_post, _ = model.forward(x, labels)
                return cs_bias_loss(ctc_post, att_post, labels, cfg).total
            finally:
                model.params[name] = saved

        worst = max(worst, rel_error(grads[name], numeric_grad(f, value)))
    return worst


CHECKS = {
    "ctc_loss": (check_ctc, TOL),
    "attention_ce_loss": (check_attention, TOL),
    "cs_reward": (check_reward, TOL),
    "cs_bias_loss": (check_cs_bias, TOL),
    "model_end_to_end": (check_model, MODEL_TOL),
}


def run_suite(trials: int = 100, seed: int = 0, checks=None) -> dict:
    """Run each check ``trials`` times; returns a JSON-ready report."""
    rng = np.random.default_rng(seed)
    report = {"trials": trials, "seed": seed, "step": STEP, "checks": {}}
    ok = True
    for name in checks or CHECKS:
        fn, tol = CHECKS[name]
        t0 = time.perf_counter()
        errs = [fn(rng) for _ in range(trials)]
        worst = max(errs) if errs else 0.0
        passed = worst <= tol
        ok &= passed
        report["checks"][name] = {
            "max_rel_error": worst,
            "tolerance": tol,
            "pass": passed,
            "seconds": round(time.perf_counter() - t0, 3),
        }
    report["max_rel_error"] = max((c["max_rel_error"] for c in report["checks"].values()), default=0.0)
    report["pass"] = bool(ok)
    return report
