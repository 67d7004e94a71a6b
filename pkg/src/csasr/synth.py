"""Synthetic Hindi-English corpora for desk-scale experiments.

Every vocabulary symbol owns a fixed prototype vector. An utterance is its
characters' prototypes, each held for 2-4 frames, plus Gaussian noise. The
"tts" rendering of the same transcript is cleaner (sigma 0.02) but carries a
constant additive channel offset, a stand-in for the TTS/real mismatch.

Loanwords are acoustically identical in both scripts: "car" and "कार" map
letter by letter onto the same prototypes. Monolingual Hindi text spells them
in Devanagari, code-switched text spells them in Roman, so only context can
tell which spelling the reference uses.
"""

from __future__ import annotations

import zlib

import numpy as np

from .features import Kind, Transcript, Utterance, Vocabulary, build_vocabulary

LOANWORDS = (("car", "कार"), ("pen", "पेन"))
HINDI_WORDS = ("घर", "पानी", "काम", "दिन", "बात", "नाम", "मन", "कल")
ENGLISH_WORDS = ("phone", "time", "game", "office", "bus")

DIMS = 8
REAL_SIGMA = 0.1
TTS_SIGMA = 0.02
CHANNEL_SCALE = 0.5
PROTOTYPE_SEED = 20200518


def _sound_classes() -> dict[str, str]:
    classes = {}
    for latin, deva in LOANWORDS:
        if len(latin) != len(deva):
            raise ValueError(f"loanword pair {latin}/{deva} differs in length")
        for a, b in zip(latin, deva):
            if classes.setdefault(b, a) != a:
                raise ValueError(f"{b!r} maps to both {classes[b]!r} and {a!r}")
    return classes


# Devanagari symbol -> Latin symbol it sounds identical to
SOUND_CLASS = _sound_classes()


def lexicons() -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(monolingual Hindi words, English words), loanwords included in both scripts."""
    return (
        HINDI_WORDS + tuple(d for _, d in LOANWORDS),
        ENGLISH_WORDS + tuple(e for e, _ in LOANWORDS),
    )


def synth_vocabulary() -> Vocabulary:
    hindi, english = lexicons()
    return build_vocabulary(hindi + english)


def prototype(symbol: str, dims: int = DIMS, seed: int = PROTOTYPE_SEED) -> np.ndarray:
    """Unit-scale prototype of one symbol; depends only on its sound class and ``seed``."""
    key = SOUND_CLASS.get(symbol, symbol)
    return np.random.default_rng([seed, zlib.crc32(key.encode("utf-8"))]).normal(size=dims)


def prototypes(vocab: Vocabulary, dims: int = DIMS, seed: int = PROTOTYPE_SEED) -> np.ndarray:
    """Prototype rows for every vocabulary symbol, independent of the corpus seed."""
    return np.stack([prototype(s, dims, seed) for s in vocab.symbols])


def channel_offset(dims: int = DIMS, seed: int = PROTOTYPE_SEED) -> np.ndarray:
    return CHANNEL_SCALE * np.random.default_rng([seed, 1]).normal(size=dims)


def random_text(rng: np.random.Generator, code_switched: bool) -> str:
    """2-4 words: monolingual Hindi or English, or Hindi-matrix with English insertions.

    Hindi spans of code-switched text never contain loanwords; those are written
    in Roman script there.
    """
    hindi, english = lexicons()
    n = int(rng.integers(2, 5))
    if not code_switched:
        lexicon = hindi if rng.random() < 0.5 else english
        return " ".join(lexicon[int(i)] for i in rng.integers(0, len(lexicon), size=n))
    langs = ["hi"] * n
    for i in rng.choice(n, size=int(rng.integers(1, n)), replace=False):
        langs[int(i)] = "en"
    words = []
    for lang in langs:
        lexicon = HINDI_WORDS if lang == "hi" else english
        words.append(lexicon[int(rng.integers(0, len(lexicon)))])
    return " ".join(words)


def render(
    transcript: Transcript,
    vocab: Vocabulary,
    rng: np.random.Generator,
    sigma: float,
    offset: np.ndarray | None = None,
    durations=None,
    protos: np.ndarray | None = None,
) -> np.ndarray:
    """Features for ``transcript``: prototypes held for 2-4 frames each, plus noise and offset."""
    protos = prototypes(vocab) if protos is None else protos
    idx = []
    for ch in transcript.chars:
        if ch not in vocab.symbols:
            raise ValueError(f"symbol {ch!r} not in vocabulary")
        idx.append(vocab.index(ch))
    if durations is None:
        durations = rng.integers(2, 5, size=len(idx))
    rows = np.repeat(protos[idx], durations, axis=0)
    if sigma > 0:
        rows = rows + rng.normal(scale=sigma, size=rows.shape)
    if offset is not None:
        rows = rows + offset
    return rows.astype(np.float32)


def synth_corpus(
    vocab: Vocabulary,
    n_utts: int,
    cs_fraction: float,
    seed: int,
    dims: int = DIMS,
    id_prefix: str = "",
) -> tuple[list[Utterance], list[Utterance]]:
    """Paired real and TTS renderings of ``n_utts`` random transcripts.

    Exactly ``round(cs_fraction * n_utts)`` transcripts mix Devanagari and Latin
    words; the rest are monolingual.
    """
    if not 0.0 <= cs_fraction <= 1.0:
        raise ValueError(f"cs_fraction must be in [0, 1], got {cs_fraction}")
    rng = np.random.default_rng(seed)
    n_cs = int(round(cs_fraction * n_utts))
    is_cs = np.zeros(n_utts, dtype=bool)
    is_cs[rng.permutation(n_utts)[:n_cs]] = True
    protos = prototypes(vocab, dims)
    offset = channel_offset(dims)
    real, tts = [], []
    for i in range(n_utts):
        tr = Transcript.from_text(random_text(rng, bool(is_cs[i])))
        real.append(Utterance(f"{id_prefix}real-{i:05d}", render(tr, vocab, rng, REAL_SIGMA, protos=protos), tr, Kind.REAL))
        tts.append(Utterance(f"{id_prefix}tts-{i:05d}", render(tr, vocab, rng, TTS_SIGMA, offset, protos=protos), tr, Kind.TTS))
    return real, tts

