"""Domain types, grapheme vocabulary and feature/manifest I/O.

Feature files use a fixed little-endian layout::

    b"CSFK" | u32 version=1 | u32 frames | u32 dims | float32[frames*dims]

Manifests are UTF-8 JSONL with one record per line::

    {"id": ..., "features": <path relative to manifest>, "transcript": ..., "kind": "real"|"tts"}
"""

from __future__ import annotations

import enum
import json
import os
import struct
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FEATURE_MAGIC = b"CSFK"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")

BLANK = "<blank>"
SPACE = " "
UNK = "<unk>"
EOS = "<eos>"
RESERVED = (BLANK, SPACE, UNK, EOS)

DEVANAGARI_BLOCK = (0x0900, 0x097F)


class FeatureError(Exception):
    """Base class for ingest errors."""


class UnsupportedCodepoint(FeatureError):
    def __init__(self, char: str, position: int):
        super().__init__(f"unsupported codepoint {char!r} (U+{ord(char):04X}) at position {position}")
        self.char = char
        self.position = position


class MissingFeatureFile(FeatureError):
    pass


class DimMismatch(FeatureError):
    def __init__(self, expected: int, got: int, utt_id: str):
        super().__init__(f"{utt_id}: expected {expected} feature dims, got {got}")
        self.expected = expected
        self.got = got
        self.utt_id = utt_id


class MalformedRecord(FeatureError):
    def __init__(self, line_no: int, reason: str = ""):
        super().__init__(f"malformed record at line {line_no}" + (f": {reason}" if reason else ""))
        self.line_no = line_no


class Script(enum.Enum):
    DEVANAGARI = "devanagari"
    LATIN = "latin"
    NEUTRAL = "neutral"


class Kind(enum.Enum):
    REAL = "real"
    TTS = "tts"


def script_of(char: str) -> Script:
    """Script tag of a single vocabulary symbol. Multi-character reserved symbols are NEUTRAL."""
    if len(char) != 1:
        return Script.NEUTRAL
    cp = ord(char)
    if DEVANAGARI_BLOCK[0] <= cp <= DEVANAGARI_BLOCK[1]:
        return Script.DEVANAGARI
    if "a" <= char <= "z":
        return Script.LATIN
    return Script.NEUTRAL


def _supported(char: str) -> bool:
    return (
        char == SPACE
        or "a" <= char <= "z"
        or "0" <= char <= "9"
        or DEVANAGARI_BLOCK[0] <= ord(char) <= DEVANAGARI_BLOCK[1]
    )


def normalize_text(text: str) -> str:
    """NFC, lowercase Latin, collapse whitespace; raise on anything outside the grapheme inventory."""
    text = " ".join(unicodedata.normalize("NFC", text).lower().split())
    for pos, ch in enumerate(text):
        if not _supported(ch):
            raise UnsupportedCodepoint(ch, pos)
    return text


@dataclass(frozen=True)
class Transcript:
    chars: tuple[str, ...]
    scripts: tuple[Script, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        chars = tuple(self.chars)
        object.__setattr__(self, "chars", chars)
        if self.scripts is None:
            object.__setattr__(self, "scripts", tuple(script_of(c) for c in chars))
        elif len(self.scripts) != len(chars):
            raise ValueError("chars and scripts differ in length")

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        return cls(tuple(normalize_text(text)))

    @property
    def text(self) -> str:
        return "".join(self.chars)

    def words(self) -> list[str]:
        return self.text.split()

    def __len__(self) -> int:
        return len(self.chars)


@dataclass(frozen=True)
class Vocabulary:
    """Ordered grapheme inventory: blank, space, unk, eos, then sorted codepoints."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.symbols[:4]) != RESERVED:
            raise ValueError("vocabulary must start with blank, space, unk, eos")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    blank_index = 0
    space_index = 1
    unk_index = 2
    eos_index = 3

    @property
    def english_set(self) -> frozenset[int]:
        return frozenset(i for i, s in enumerate(self.symbols) if i >= 4 and script_of(s) is Script.LATIN)

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self._index.get(symbol, self.unk_index)  # type: ignore[attr-defined]

    def encode(self, transcript: Transcript) -> list[int]:
        return [self.index(c) for c in transcript.chars]

    def decode(self, indices: Iterable[int]) -> Transcript:
        chars = []
        for i in indices:
            i = int(i)
            if i == self.blank_index or i == self.eos_index:
                continue
            chars.append(self.symbols[i])
        return Transcript(tuple(chars))


def build_vocabulary(corpus: Iterable[str]) -> Vocabulary:
    """Build a grapheme vocabulary from raw transcripts.

    The result depends only on the set of characters seen, so any permutation
    of ``corpus`` yields the same vocabulary.
    """
    seen: set[str] = set()
    for text in corpus:
        seen.update(normalize_text(text))
    seen.discard(SPACE)
    return Vocabulary(RESERVED + tuple(sorted(seen)))


# -- feature files ---------------------------------------------------------


def as_feature_matrix(data) -> np.ndarray:
    """Validate a frames x dims feature array (frames, dims >= 1, finite)."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"feature matrix must be 2-D with frames, dims >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature matrix has non-finite entries")
    return arr


def encode_features(data: np.ndarray) -> bytes:
    arr = as_feature_matrix(data)
    frames, dims = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, frames, dims) + payload


def decode_features(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise ValueError("truncated feature header")
    magic, version, frames, dims = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise ValueError(f"unsupported feature version {version}")
    expected = _HEADER.size + 4 * frames * dims
    if len(blob) != expected:
        raise ValueError(f"payload length {len(blob)} != {expected}")
    arr = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(frames, dims)
    return as_feature_matrix(arr.astype(np.float32))


def write_atomic(path: os.PathLike | str, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def write_features(path, data: np.ndarray) -> None:
    write_atomic(path, encode_features(data))


def read_features(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_features(f.read())


# -- manifests -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Utterance:
    id: str
    features: np.ndarray
    transcript: Transcript
    kind: Kind

    def __post_init__(self):
        if len(self.transcript) == 0:
            raise ValueError(f"{self.id}: empty transcript")

    @property
    def frames(self) -> int:
        return self.features.shape[0]


def load_manifest(path) -> list[Utterance]:
    path = Path(path)
    root = path.parent
    utts: list[Utterance] = []
    seen: set[str] = set()
    dims = None
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                utt_id = rec["id"]
                rel = rec["features"]
                kind = Kind(rec["kind"])
                transcript = Transcript.from_text(rec["transcript"])
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            if utt_id in seen:
                raise MalformedRecord(line_no, f"duplicate id {utt_id!r}")
            seen.add(utt_id)
            feat_path = root / rel
            if not feat_path.is_file():
                raise MissingFeatureFile(str(feat_path))
            try:
                feats = read_features(feat_path)
            except ValueError as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            if dims is None:
                dims = feats.shape[1]
            elif feats.shape[1] != dims:
                raise DimMismatch(dims, feats.shape[1], utt_id)
            try:
                utts.append(Utterance(utt_id, feats, transcript, kind))
            except ValueError as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return utts


def write_manifest(path, utterances: Sequence[Utterance], feature_dir: str = "feats") -> None:
    """Write utterances as a manifest plus one feature file each, under ``path``'s directory."""
    path = Path(path)
    (path.parent / feature_dir).mkdir(parents=True, exist_ok=True)
    lines = []
    for utt in utterances:
        rel = f"{feature_dir}/{utt.id}.csfk"
        write_features(path.parent / rel, utt.features)
        rec = {"id": utt.id, "features": rel, "transcript": utt.transcript.text, "kind": utt.kind.value}
        lines.append(json.dumps(rec, ensure_ascii=False, sort_keys=False))
    write_atomic(path, ("\n".join(lines) + "\n").encode("utf-8"))
