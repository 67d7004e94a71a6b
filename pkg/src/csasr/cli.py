"""Command-line entry point: ``csasr {synth,mix,train,decode,eval,gradcheck}``.

Options resolve as CLI flags > ``--config`` file > built-in defaults. The
config file is TOML (keys are the long flag names with ``_`` for ``-``) or a
``runspec.json`` written by an earlier run, which replays that run.

Exit codes: 0 success, 1 I/O or failed check, 2 bad flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .features import FeatureError, load_manifest, write_atomic, write_manifest
from .gradcheck import run_suite
from .loss import LossConfig
from .metrics import corpus_report
from .mixup import MixupParams, mix_batches
from .synth import synth_corpus, synth_vocabulary
from .train import (
    Checkpoint,
    MissingCheckpoint,
    MissingTTSCorpus,
    Mode,
    TrainConfig,
    decode,
    history_csv,
    load_checkpoint,
    save_checkpoint,
    substream,
    train_run,
    transcript_text,
)

DEFAULTS = {
    "synth": {"n_utts": 50, "cs_fraction": 0.5, "seed": 0},
    "mix": {"batch_size": 32, "alpha": 0.4, "beta": 0.4, "seed": 0},
    "train": {
        "tts": None,
        "epochs": 20,
        "batch_size": 32,
        "lr": 0.05,
        "seed": 0,
        "mixup": False,
        "alpha": 0.4,
        "beta": 0.4,
        "tts_ratio": 0.0,
        "cs_bias": False,
        "lambda_prime": 0.25,
        "lambda_mtl": 0.7,
        "mtl_weight_on": "ctc",
        "finetune": None,
        "freeze_encoder": False,
        "interleave": "round_robin",
        "hidden": 32,
        "embed": 16,
        "grad_clip": 5.0,
        "threads": 1,
    },
    "decode": {"beam_width": 20, "threads": 1},
    "eval": {"count_once": True},
    "gradcheck": {"trials": 100, "seed": 0},
}
REQUIRED = {
    "synth": ("out",),
    "mix": ("tts", "real", "out"),
    "train": ("real", "out"),
    "decode": ("model", "manifest", "out"),
    "eval": ("refs", "hyps"),
    "gradcheck": (),
}


class UsageError(Exception):
    """Invalid option value; reported with exit code 2."""


def _flag(p, name, **kw):
    p.add_argument(name, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csasr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, out_help="output directory"):
        _flag(p, "--config", help="TOML config or runspec.json to replay")
        _flag(p, "--out", help=out_help)
        return p

    p = common(sub.add_parser("synth", help="write a synthetic real/tts corpus pair"))
    _flag(p, "--n-utts", type=int)
    _flag(p, "--cs-fraction", type=float)
    _flag(p, "--seed", type=int)

    p = common(sub.add_parser("mix", help="mix TTS utterances with real speech"))
    _flag(p, "--tts", help="TTS manifest")
    _flag(p, "--real", help="real-speech manifest")
    _flag(p, "--batch-size", type=int)
    _flag(p, "--alpha", type=float)
    _flag(p, "--beta", type=float)
    _flag(p, "--seed", type=int)

    p = common(sub.add_parser("train", help="train the toy hybrid CTC/attention model"))
    _flag(p, "--real", help="real-speech manifest")
    _flag(p, "--tts", help="TTS manifest")
    _flag(p, "--epochs", type=int)
    _flag(p, "--batch-size", type=int)
    _flag(p, "--lr", type=float)
    _flag(p, "--seed", type=int)
    _flag(p, "--mixup", action="store_true")
    _flag(p, "--alpha", type=float)
    _flag(p, "--beta", type=float)
    _flag(p, "--tts-ratio", type=float)
    _flag(p, "--cs-bias", action="store_true")
    _flag(p, "--lambda-prime", type=float)
    _flag(p, "--lambda-mtl", type=float)
    _flag(p, "--mtl-weight-on", choices=("ctc", "att"))
    _flag(p, "--finetune", metavar="CKPT", help="start from this checkpoint")
    _flag(p, "--freeze-encoder", action="store_true")
    _flag(p, "--interleave", choices=("round_robin", "sequential"))
    _flag(p, "--hidden", type=int)
    _flag(p, "--embed", type=int)
    _flag(p, "--grad-clip", type=float)
    _flag(p, "--threads", type=int)

    p = common(sub.add_parser("decode", help="CTC-decode a manifest"))
    _flag(p, "--model", help="checkpoint")
    _flag(p, "--manifest")
    _flag(p, "--beam-width", type=int)
    _flag(p, "--threads", type=int)

    p = common(sub.add_parser("eval", help="score hypotheses against references"), "optional report directory")
    _flag(p, "--refs", help="manifest or JSONL with id/transcript")
    _flag(p, "--hyps", help="JSONL with id/hyp")
    p.add_argument("--count-twice", dest="count_once", action="store_false", default=argparse.SUPPRESS,
                   help="count a word next to two switch points twice")

    p = common(sub.add_parser("gradcheck", help="finite-difference check of all gradients"), "optional report directory")
    _flag(p, "--trials", type=int)
    _flag(p, "--seed", type=int)
    return parser


def _load_config(path: str, subcommand: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        data = json.loads(text)
        if "subcommand" in data:
            if data["subcommand"] != subcommand:
                raise UsageError(f"argument --config: runspec is for {data['subcommand']!r}, not {subcommand!r}")
            return dict(data["config"])
        return data
    return tomllib.loads(text)


def resolve(args: argparse.Namespace) -> dict:
    sub = args.subcommand
    given = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    cfg = dict(DEFAULTS[sub])
    cfg["out"] = None
    if "config" in vars(args):
        loaded = _load_config(args.config, sub)
        unknown = set(loaded) - set(cfg) - set(REQUIRED[sub])
        if unknown:
            raise UsageError(f"argument --config: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(given)
    for key in REQUIRED[sub]:
        if cfg.get(key) is None:
            raise UsageError(f"argument --{key.replace('_', '-')} is required")
    _validate(sub, cfg)
    return cfg


def _validate(sub: str, cfg: dict) -> None:
    def check(key, ok, what):
        if key in cfg and cfg[key] is not None and not ok(cfg[key]):
            raise UsageError(f"argument --{key.replace('_', '-')}: {what}, got {cfg[key]!r}")

    check("cs_fraction", lambda v: 0.0 <= v <= 1.0, "must be in [0, 1]")
    check("n_utts", lambda v: v >= 1, "must be >= 1")
    check("batch_size", lambda v: v >= 1, "must be >= 1")
    check("alpha", lambda v: v > 0, "must be > 0")
    check("beta", lambda v: v > 0, "must be > 0")
    check("epochs", lambda v: v >= 0, "must be >= 0")
    check("lr", lambda v: v >= 0, "must be >= 0")
    check("tts_ratio", lambda v: v >= 0, "must be >= 0")
    check("lambda_prime", lambda v: v >= 0, "must be >= 0")
    check("lambda_mtl", lambda v: 0.0 <= v <= 1.0, "must be in [0, 1]")
    check("beam_width", lambda v: v >= 1, "must be >= 1")
    check("threads", lambda v: v >= 1, "must be >= 1")
    check("trials", lambda v: v >= 1, "must be >= 1")
    check("hidden", lambda v: v >= 1, "must be >= 1")
    check("embed", lambda v: v >= 1, "must be >= 1")
    if sub == "train" and (cfg["mixup"] or cfg["tts_ratio"] > 0) and not cfg["tts"]:
        raise UsageError("argument --tts: required with --mixup or --tts-ratio > 0")


def _write_json(path: Path, obj) -> None:
    write_atomic(path, (json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n").encode("utf-8"))


def _runspec(sub: str, cfg: dict) -> None:
    if cfg.get("out") is None:
        return
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "runspec.json", {"subcommand": sub, "version": __version__, "seed": cfg.get("seed"), "config": cfg})


def _child_seed(seed: int, name: str) -> int:
    return int(substream(seed, name).integers(2**31))


# -- subcommands -------------------------------------------------------------


def cmd_synth(cfg: dict) -> int:
    out = Path(cfg["out"])
    vocab = synth_vocabulary()
    real, tts = synth_corpus(vocab, cfg["n_utts"], cfg["cs_fraction"], _child_seed(cfg["seed"], "corpus"))
    write_manifest(out / "real" / "manifest.jsonl", real)
    write_manifest(out / "tts" / "manifest.jsonl", tts)
    print(f"wrote {len(real)} real and {len(tts)} tts utterances to {out}", file=sys.stderr)
    return 0


def cmd_mix(cfg: dict) -> int:
    out = Path(cfg["out"])
    tts = load_manifest(cfg["tts"])
    real = load_manifest(cfg["real"])
    params = MixupParams(cfg["alpha"], cfg["beta"], cfg["seed"])
    rng = substream(cfg["seed"], "mixup")
    mixed, log = [], []
    bs = cfg["batch_size"]
    for b, start in enumerate(range(0, len(tts), bs)):
        for m in mix_batches(tts[start : start + bs], real, params, rng):
            utt = m.as_utterance(f"mix-{m.source_tts_id}")
            mixed.append(utt)
            log.append(
                {"id": utt.id, "batch": b, "lambda_mix": m.lambda_mix,
                 "source_tts_id": m.source_tts_id, "source_real_id": m.source_real_id}
            )
    write_manifest(out / "manifest.jsonl", mixed)
    write_atomic(out / "mix_log.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in log).encode("utf-8"))
    print(f"wrote {len(mixed)} mixed utterances to {out}", file=sys.stderr)
    return 0


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        lr=cfg["lr"],
        seed=cfg["seed"],
        mode=Mode.FINETUNE if cfg["finetune"] else Mode.SCRATCH,
        freeze_encoder=cfg["freeze_encoder"],
        mixup_enabled=cfg["mixup"],
        mixup=MixupParams(cfg["alpha"], cfg["beta"], cfg["seed"]),
        loss_cfg=LossConfig(
            lambda_mtl=cfg["lambda_mtl"],
            lambda_prime=cfg["lambda_prime"],
            reward_enabled=cfg["cs_bias"],
            mtl_weight_on=cfg["mtl_weight_on"],
        ),
        tts_ratio=cfg["tts_ratio"],
        interleave=cfg["interleave"],
        hidden=cfg["hidden"],
        embed=cfg["embed"],
        grad_clip=cfg["grad_clip"],
    )


def cmd_train(cfg: dict) -> int:
    out = Path(cfg["out"])
    real = load_manifest(cfg["real"])
    tts = load_manifest(cfg["tts"]) if cfg["tts"] else None
    checkpoint = load_checkpoint(cfg["finetune"]) if cfg["finetune"] else None
    model, vocab, history = train_run(train_config(cfg), real, tts, checkpoint, threads=cfg["threads"])
    save_checkpoint(out / "model.ckpt", vocab, model)
    write_atomic(out / "history.csv", history_csv(history).encode("utf-8"))
    if history:
        last = history[-1]
        print(f"epoch {last['epoch']}: loss {last['loss_total']:.4f}", file=sys.stderr)
    return 0


def cmd_decode(cfg: dict) -> int:
    out = Path(cfg["out"])
    ckpt: Checkpoint = load_checkpoint(cfg["model"])
    utts = load_manifest(cfg["manifest"])

    def run(u):
        tr = decode(ckpt.model, u.features, cfg["beam_width"], ckpt.vocab)
        return {"id": u.id, "hyp": transcript_text(tr)}

    if cfg["threads"] > 1:
        with ThreadPoolExecutor(cfg["threads"]) as pool:
            rows = list(pool.map(run, utts))
    else:
        rows = [run(u) for u in utts]
    write_atomic(out / "hyps.jsonl", "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows).encode("utf-8"))
    return 0


def _read_texts(path: str, keys=("transcript", "hyp", "text")) -> dict[str, str]:
    texts = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = next(k for k in keys if k in rec)
                texts[rec["id"]] = " ".join(str(rec[key]).lower().split())
            except (ValueError, KeyError, StopIteration) as exc:
                raise FeatureError(f"{path}:{line_no}: malformed record") from exc
    return texts


def cmd_eval(cfg: dict) -> int:
    refs = _read_texts(cfg["refs"])
    hyps = _read_texts(cfg["hyps"], keys=("hyp", "transcript", "text"))
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise FeatureError(f"no hypothesis for {len(missing)} reference ids, e.g. {missing[0]!r}")
    report = corpus_report(refs, {k: hyps[k] for k in refs}, count_once=cfg["count_once"])
    print(json.dumps(report, ensure_ascii=False, sort_keys=True))
    if cfg.get("out"):
        _write_json(Path(cfg["out"]) / "metrics.json", report)
    return 0


def cmd_gradcheck(cfg: dict) -> int:
    report = run_suite(cfg["trials"], cfg["seed"])
    # wall-clock timings would break byte-identical reruns
    for check in report["checks"].values():
        check.pop("seconds", None)
    print(json.dumps(report, sort_keys=True))
    if cfg.get("out"):
        _write_json(Path(cfg["out"]) / "gradcheck.json", report)
    return 0 if report["pass"] else 1


COMMANDS = {
    "synth": cmd_synth,
    "mix": cmd_mix,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError) as exc:
        print(f"csasr: error: cannot read config: {exc}", file=sys.stderr)
        return 1
    print(f"csasr: {args.subcommand} config {json.dumps(cfg, sort_keys=True, ensure_ascii=False)}", file=sys.stderr)
    try:
        _runspec(args.subcommand, cfg)
        return COMMANDS[args.subcommand](cfg)
    except (FeatureError, MissingCheckpoint, MissingTTSCorpus, OSError) as exc:
        print(f"csasr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
