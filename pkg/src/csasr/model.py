"""A tiny hybrid CTC/attention encoder-decoder with manual backpropagation.

Encoder: one bidirectional tanh recurrent layer over frames (forward and
backward states concatenated), plus an affine CTC head.
Decoder: embedding of the previous symbol, dot-product attention over the
encoder states, one tanh layer and an affine output head. The decoder input
is ``[eos] + labels`` (eos doubles as start symbol) and it is trained to emit
``labels + [eos]``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .loss import LossConfig, LossOutput, PosteriorSequence, cs_bias_loss

ENCODER_PARAMS = ("enc.W_x", "enc.W_h", "enc.b_h", "enc.W_xb", "enc.W_hb", "enc.b_hb", "enc.W_ctc", "enc.b_ctc")
DECODER_PARAMS = ("dec.emb", "dec.W_q", "dec.W_c", "dec.W_e", "dec.b", "dec.W_out", "dec.b_out")
PARAM_NAMES = ENCODER_PARAMS + DECODER_PARAMS


def param_shapes(dims: int, vocab_size: int, hidden: int = 32, embed: int = 16) -> dict[str, tuple]:
    D, V, H, E = dims, vocab_size, hidden, embed
    return {
        "enc.W_x": (H, D),
        "enc.W_h": (H, H),
        "enc.b_h": (H,),
        "enc.W_xb": (H, D),
        "enc.W_hb": (H, H),
        "enc.b_hb": (H,),
        "enc.W_ctc": (V, 2 * H),
        "enc.b_ctc": (V,),
        "dec.emb": (V, E),
        "dec.W_q": (2 * H, E),
        "dec.W_c": (H, 2 * H),
        "dec.W_e": (H, E),
        "dec.b": (H,),
        "dec.W_out": (V, H),
        "dec.b_out": (V,),
    }


@dataclass
class ToyModel:
    params: dict[str, np.ndarray]
    trainable: dict[str, bool] = field(default_factory=dict)
    eos_index: int = 3

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.params)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        self.params = {k: np.asarray(self.params[k], dtype=np.float64) for k in PARAM_NAMES}
        for k in PARAM_NAMES:
            self.trainable.setdefault(k, True)

    @classmethod
    def init(cls, dims: int, vocab_size: int, rng: np.random.Generator, hidden: int = 32, embed: int = 16, eos_index: int = 3):
        params = {}
        for name, shape in param_shapes(dims, vocab_size, hidden, embed).items():
            if len(shape) == 1:
                params[name] = np.zeros(shape)
            else:
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[1]), size=shape)
        return cls(params, eos_index=eos_index)

    @classmethod
    def zeros(cls, dims: int, vocab_size: int, hidden: int = 32, embed: int = 16, eos_index: int = 3):
        shapes = param_shapes(dims, vocab_size, hidden, embed)
        return cls({k: np.zeros(s) for k, s in shapes.items()}, eos_index=eos_index)

    @property
    def dims(self) -> int:
        return self.params["enc.W_x"].shape[1]

    @property
    def vocab_size(self) -> int:
        return self.params["enc.W_ctc"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["enc.W_h"].shape[0]

    def copy(self) -> "ToyModel":
        return ToyModel({k: v.copy() for k, v in self.params.items()}, dict(self.trainable), self.eos_index)

    def freeze_encoder(self, frozen: bool = True) -> None:
        for k in ENCODER_PARAMS:
            self.trainable[k] = not frozen

    def param_hash(self, names=PARAM_NAMES) -> str:
        h = hashlib.sha256()
        for k in names:
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k], dtype="<f8").tobytes())
        return h.hexdigest()

    def encoder_hash(self) -> str:
        return self.param_hash(ENCODER_PARAMS)

    # -- forward / backward ------------------------------------------------

    def encode(self, features: np.ndarray):
        p = self.params
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dims:
            raise ValueError(f"expected T x {self.dims} features, got {x.shape}")
        T, H = x.shape[0], self.hidden
        hs = np.zeros((T, 2 * H))
        h = np.zeros(H)
        xin = x @ p["enc.W_x"].T + p["enc.b_h"]
        for t in range(T):
            h = np.tanh(xin[t] + p["enc.W_h"] @ h)
            hs[t, :H] = h
        h = np.zeros(H)
        xin = x @ p["enc.W_xb"].T + p["enc.b_hb"]
        for t in range(T - 1, -1, -1):
            h = np.tanh(xin[t] + p["enc.W_hb"] @ h)
            hs[t, H:] = h
        ctc_logits = hs @ p["enc.W_ctc"].T + p["enc.b_ctc"]
        return x, hs, ctc_logits

    def forward(self, features: np.ndarray, labels=None):
        """CTC posteriors per frame and, when ``labels`` are given, teacher-forced
        attention posteriors for ``len(labels) + 1`` steps.

        Returns ``(ctc_post, att_post, cache)``; ``att_post`` is None without labels.
        """
        x, hs, ctc_logits = self.encode(features)
        cache = {"x": x, "hs": hs}
        att_post = None
        if labels is not None:
            p = self.params
            y_in = np.asarray([self.eos_index] + [int(c) for c in labels], dtype=np.int64)
            e = p["dec.emb"][y_in]
            q = e @ p["dec.W_q"].T
            attn = softmax(q @ hs.T, axis=1)
            ctx = attn @ hs
            d = np.tanh(ctx @ p["dec.W_c"].T + e @ p["dec.W_e"].T + p["dec.b"])
            att_logits = d @ p["dec.W_out"].T + p["dec.b_out"]
            cache.update(y_in=y_in, e=e, q=q, attn=attn, ctx=ctx, d=d)
            att_post = PosteriorSequence(att_logits)
        return PosteriorSequence(ctc_logits), att_post, cache

    def backward(self, cache, d_ctc_logits: np.ndarray, d_att_logits: np.ndarray | None) -> dict[str, np.ndarray]:
        p = self.params
        g = {k: np.zeros_like(v) for k, v in p.items()}
        x, hs = cache["x"], cache["hs"]
        T = hs.shape[0]

        g["enc.W_ctc"] = d_ctc_logits.T @ hs
        g["enc.b_ctc"] = d_ctc_logits.sum(axis=0)
        d_hs = d_ctc_logits @ p["enc.W_ctc"]

        if d_att_logits is not None:
            e, q, attn, ctx, d = cache["e"], cache["q"], cache["attn"], cache["ctx"], cache["d"]
            g["dec.W_out"] = d_att_logits.T @ d
            g["dec.b_out"] = d_att_logits.sum(axis=0)
            d_pre = (d_att_logits @ p["dec.W_out"]) * (1.0 - d * d)
            g["dec.W_c"] = d_pre.T @ ctx
            g["dec.W_e"] = d_pre.T @ e
            g["dec.b"] = d_pre.sum(axis=0)
            d_ctx = d_pre @ p["dec.W_c"]
            d_e = d_pre @ p["dec.W_e"]
            d_attn = d_ctx @ hs.T
            d_hs = d_hs + attn.T @ d_ctx
            d_scores = attn * (d_attn - (d_attn * attn).sum(axis=1, keepdims=True))
            d_q = d_scores @ hs
            d_hs = d_hs + d_scores.T @ q
            g["dec.W_q"] = d_q.T @ e
            d_e = d_e + d_q @ p["dec.W_q"]
            np.add.at(g["dec.emb"], cache["y_in"], d_e)

        H = self.hidden
        zero = np.zeros(H)
        # forward direction: gradient flows from t+1 back to t
        d_next = zero
        for t in range(T - 1, -1, -1):
            h = hs[t, :H]
            h_prev = hs[t - 1, :H] if t > 0 else zero
            d_pre = (d_hs[t, :H] + d_next) * (1.0 - h * h)
            g["enc.W_x"] += np.outer(d_pre, x[t])
            g["enc.W_h"] += np.outer(d_pre, h_prev)
            g["enc.b_h"] += d_pre
            d_next = p["enc.W_h"].T @ d_pre
        # backward direction: gradient flows from t-1 forward to t
        d_next = zero
        for t in range(T):
            h = hs[t, H:]
            h_prev = hs[t + 1, H:] if t < T - 1 else zero
            d_pre = (d_hs[t, H:] + d_next) * (1.0 - h * h)
            g["enc.W_xb"] += np.outer(d_pre, x[t])
            g["enc.W_hb"] += np.outer(d_pre, h_prev)
            g["enc.b_hb"] += d_pre
            d_next = p["enc.W_hb"].T @ d_pre
        return g

    def loss_and_grad(self, features, labels, cfg: LossConfig) -> tuple[LossOutput, dict[str, np.ndarray]]:
        ctc_post, att_post, cache = self.forward(features, labels)
        out = cs_bias_loss(ctc_post, att_post, labels, cfg)
        return out, self.backward(cache, out.grad_ctc_logits, out.grad_att_logits)

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for k, gk in grads.items():
            if self.trainable[k]:
                self.params[k] = self.params[k] - lr * gk
