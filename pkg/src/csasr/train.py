"""Training loop, sortagrad batching, checkpoints and evaluation for the toy model.

Checkpoint layout (little-endian)::

    b"CSCK" | u32 version | u32 n_symbols | (u32 len, utf-8 bytes) * n_symbols
            | u32 n_params | (u32 len, name, u32 rank, u32 dims[rank], f64 payload) * n_params
"""

from __future__ import annotations

import csv
import enum
import io
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .decode import ctc_decode
from .features import Transcript, Utterance, Vocabulary, build_vocabulary, write_atomic
from .loss import LossConfig, cs_reward
from .metrics import corpus_report
from .mixup import MixupParams, mix_batches
from .model import ENCODER_PARAMS, PARAM_NAMES, ToyModel

CKPT_MAGIC = b"CSCK"
CKPT_VERSION = 1
HISTORY_FIELDS = ("epoch", "loss_total", "loss_ctc", "loss_att", "reward_ctc", "reward_att")


class MissingCheckpoint(ValueError):
    pass


class MissingTTSCorpus(ValueError):
    pass


class Mode(enum.Enum):
    SCRATCH = "scratch"
    FINETUNE = "finetune"


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of the run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 20
    lr: float = 0.05
    seed: int = 0
    mode: Mode = Mode.SCRATCH
    freeze_encoder: bool = False
    mixup_enabled: bool = False
    mixup: MixupParams = field(default_factory=MixupParams)
    loss_cfg: LossConfig = field(default_factory=LossConfig)
    tts_ratio: float = 0.0
    interleave: str = "round_robin"
    hidden: int = 32
    embed: int = 16
    grad_clip: float | None = 5.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.tts_ratio < 0:
            raise ValueError("tts_ratio must be >= 0")
        if self.interleave not in ("round_robin", "sequential"):
            raise ValueError(f"unknown interleave {self.interleave!r}")


# -- batching ----------------------------------------------------------------


def sortagrad_batches(corpus: Sequence[Utterance], batch_size: int, seed) -> list[list[Utterance]]:
    """Sort by frame count (ties by id), chunk, then shuffle the batch order."""
    if not corpus:
        raise ValueError("corpus is empty")
    ordered = sorted(corpus, key=lambda u: (u.frames, u.id))
    batches = [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [batches[int(i)] for i in rng.permutation(len(batches))]


def interleave_schedule(n_real: int, n_tts: int, how: str = "round_robin") -> list[str]:
    """Order of "real"/"tts" batches within an epoch, spreading TTS batches evenly."""
    if how == "sequential":
        return ["real"] * n_real + ["tts"] * n_tts
    slots = [((i + 0.5) / n_real, 0, "real") for i in range(n_real)]
    slots += [((j + 0.5) / n_tts, 1, "tts") for j in range(n_tts)]
    return [kind for _, _, kind in sorted(slots)]


# -- optimisation ------------------------------------------------------------


class Optimizer(Protocol):
    def step(self, model: ToyModel, grads: dict[str, np.ndarray]) -> None: ...


@dataclass
class SGD:
    lr: float
    clip: float | None = None

    def step(self, model: ToyModel, grads: dict[str, np.ndarray]) -> None:
        if self.clip is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for k, g in grads.items() if model.trainable[k]))
            if norm > self.clip:
                grads = {k: g * (self.clip / norm) for k, g in grads.items()}
        model.sgd_step(grads, self.lr)


def _utt_grad(model: ToyModel, vocab: Vocabulary, cfg: LossConfig, utt: Utterance):
    labels = vocab.encode(utt.transcript)
    return model.loss_and_grad(utt.features, labels, cfg)


def batch_step(model, vocab, cfg: LossConfig, batch, optimizer: Optimizer, pool=None):
    """One update on the batch-mean objective; returns per-utterance LossOutputs."""
    fn = lambda u: _utt_grad(model, vocab, cfg, u)  # noqa: E731
    results = list(pool.map(fn, batch)) if pool is not None else [fn(u) for u in batch]
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    # fixed summation order keeps results identical for any thread count
    for _, g in results:
        for k in grads:
            grads[k] += g[k]
    n = len(batch)
    optimizer.step(model, {k: v / n for k, v in grads.items()})
    return [out for out, _ in results]


# -- training ----------------------------------------------------------------


@dataclass
class Checkpoint:
    vocab: Vocabulary
    model: ToyModel


def train_run(
    cfg: TrainConfig,
    real_corpus: Sequence[Utterance],
    tts_corpus: Sequence[Utterance] | None = None,
    checkpoint: Checkpoint | str | Path | None = None,
    vocab: Vocabulary | None = None,
    threads: int = 1,
    optimizer: Optimizer | None = None,
):
    """Train the toy model and return ``(model, vocab, history)``.

    Each epoch visits every real batch once and ``round(tts_ratio * n_real)``
    TTS batches (cycling over the TTS corpus), interleaved per
    ``cfg.interleave``. With mixup, every TTS batch is mixed with a fresh
    draw of real partners and a fresh ``lambda_mix``.
    """
    tts_corpus = list(tts_corpus or [])
    if (cfg.mixup_enabled or cfg.tts_ratio > 0) and not tts_corpus:
        raise MissingTTSCorpus("mixup or tts_ratio > 0 needs a TTS corpus")
    if cfg.mode is Mode.FINETUNE:
        if checkpoint is None:
            raise MissingCheckpoint("finetune mode needs a checkpoint")
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = load_checkpoint(checkpoint)
        vocab = checkpoint.vocab
        model = checkpoint.model.copy()
    else:
        if vocab is None:
            vocab = build_vocabulary(u.transcript.text for u in list(real_corpus) + tts_corpus)
        dims = real_corpus[0].features.shape[1]
        model = ToyModel.init(dims, len(vocab), substream(cfg.seed, "init"), cfg.hidden, cfg.embed, vocab.eos_index)
    model.freeze_encoder(cfg.freeze_encoder)

    loss_cfg = cfg.loss_cfg
    if not loss_cfg.english_set:
        loss_cfg = LossConfig(**{**loss_cfg.__dict__, "english_set": vocab.english_set})
    optimizer = optimizer or SGD(cfg.lr, cfg.grad_clip)
    shuffle_rng = substream(cfg.seed, "shuffle")
    mix_rng = substream(cfg.seed, "mixup")

    history = []
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        tts_cursor = 0
        for epoch in range(1, cfg.epochs + 1):
            real_batches = sortagrad_batches(real_corpus, cfg.batch_size, shuffle_rng)
            n_tts = int(round(cfg.tts_ratio * len(real_batches))) if tts_corpus else 0
            tts_batches = []
            if n_tts:
                pool_tts = sortagrad_batches(tts_corpus, cfg.batch_size, shuffle_rng)
                for _ in range(n_tts):
                    tts_batches.append(pool_tts[tts_cursor % len(pool_tts)])
                    tts_cursor += 1
            real_iter, tts_iter = iter(real_batches), iter(tts_batches)
            sums = np.zeros(5)
            count = 0
            for kind in interleave_schedule(len(real_batches), n_tts, cfg.interleave):
                if kind == "real":
                    batch = next(real_iter)
                else:
                    batch = next(tts_iter)
                    if cfg.mixup_enabled:
                        batch = [m.as_utterance() for m in mix_batches(batch, real_corpus, cfg.mixup, mix_rng)]
                outs = batch_step(model, vocab, loss_cfg, batch, optimizer, pool)
                for o in outs:
                    sums += (o.total, o.l_ctc, o.l_att, o.r_ctc, o.r_att)
                count += len(outs)
            history.append({"epoch": epoch, **dict(zip(HISTORY_FIELDS[1:], (sums / count).tolist()))})
    finally:
        if pool is not None:
            pool.shutdown()
    return model, vocab, history


# -- evaluation --------------------------------------------------------------


def decode(model: ToyModel, features: np.ndarray, beam_width: int = 1, vocab: Vocabulary | None = None):
    """CTC decode one utterance; returns a Transcript when ``vocab`` is given, else symbol indices."""
    ctc_post, _, _ = model.forward(features)
    indices = ctc_decode(ctc_post.log_probs, beam_width, blank=0)
    return vocab.decode(indices) if vocab is not None else indices


def transcript_text(tr: Transcript) -> str:
    return " ".join(tr.text.split())


def evaluate(model: ToyModel, vocab: Vocabulary, corpus: Sequence[Utterance], beam_width: int = 1) -> dict:
    """Decode ``corpus`` and score it; also reports the mean English-mass reward per utterance."""
    refs, hyps = {}, {}
    rewards = []
    for u in corpus:
        labels = vocab.encode(u.transcript)
        ctc_post, att_post, _ = model.forward(u.features, labels)
        rewards.append(cs_reward(ctc_post, vocab.english_set)[0] + cs_reward(att_post, vocab.english_set)[0])
        refs[u.id] = transcript_text(u.transcript)
        hyps[u.id] = transcript_text(vocab.decode(ctc_decode(ctc_post.log_probs, beam_width, 0)))
    report = corpus_report(refs, hyps)
    report["mean_reward"] = float(np.mean(rewards))
    return report


# -- persistence -------------------------------------------------------------

_U32 = struct.Struct("<I")


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return _U32.pack(len(b)) + b


def encode_checkpoint(vocab: Vocabulary, model: ToyModel) -> bytes:
    out = io.BytesIO()
    out.write(CKPT_MAGIC)
    out.write(_U32.pack(CKPT_VERSION))
    out.write(_U32.pack(len(vocab.symbols)))
    for s in vocab.symbols:
        out.write(_pack_str(s))
    out.write(_U32.pack(len(PARAM_NAMES)))
    for name in PARAM_NAMES:
        arr = model.params[name]
        out.write(_pack_str(name))
        out.write(_U32.pack(arr.ndim))
        for d in arr.shape:
            out.write(_U32.pack(d))
        out.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return out.getvalue()


def decode_checkpoint(blob: bytes) -> Checkpoint:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise ValueError("truncated checkpoint")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    def u32():
        return _U32.unpack(take(4))[0]

    if take(4) != CKPT_MAGIC:
        raise ValueError("not a CSCK checkpoint")
    version = u32()
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    symbols = tuple(take(u32()).decode("utf-8") for _ in range(u32()))
    params = {}
    for _ in range(u32()):
        name = take(u32()).decode("utf-8")
        shape = tuple(u32() for _ in range(u32()))
        n = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    vocab = Vocabulary(symbols)
    return Checkpoint(vocab, ToyModel(params, eos_index=vocab.eos_index))


def save_checkpoint(path, vocab: Vocabulary, model: ToyModel) -> None:
    write_atomic(path, encode_checkpoint(vocab, model))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(str(path))
    return decode_checkpoint(path.read_bytes())


def history_csv(history: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for row in history:
        w.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])
    return buf.getvalue()


def encoder_params_equal(a: ToyModel, b: ToyModel) -> bool:
    return all(np.array_equal(a.params[k], b.params[k]) for k in ENCODER_PARAMS)

