"""Word/character error rates and the switch-point error rate (CS-WER).

CS-WER looks only at reference words that sit next to a change of script
(Devanagari <-> Latin). With m such words and n of them aligned to an
identical hypothesis word, CS-WER = 1 - n / m.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .features import Script, Transcript, script_of


class NoSwitchPoints(ValueError):
    pass


class Op(enum.Enum):
    MATCH = "match"
    SUB = "sub"
    INS = "ins"
    DEL = "del"


@dataclass(frozen=True)
class AlignedPair:
    ref_words: tuple
    hyp_words: tuple
    alignment: tuple  # of (Op, ref_idx | None, hyp_idx | None)

    @property
    def cost(self) -> int:
        return sum(op is not Op.MATCH for op, _, _ in self.alignment)

    def ops_for_ref(self) -> dict[int, Op]:
        return {r: op for op, r, _ in self.alignment if r is not None}


@dataclass
class ErrorCounts:
    sub: int = 0
    ins: int = 0
    dele: int = 0
    n_ref: int = 0
    empty_reference: bool = False

    @property
    def errors(self) -> int:
        return self.sub + self.ins + self.dele

    @property
    def rate(self) -> float:
        if self.n_ref == 0:
            return math.inf if self.errors else 0.0
        return self.errors / self.n_ref

    def __add__(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(
            self.sub + other.sub,
            self.ins + other.ins,
            self.dele + other.dele,
            self.n_ref + other.n_ref,
            self.empty_reference or other.empty_reference,
        )


def edit_table(ref: Sequence, hyp: Sequence) -> list[list[int]]:
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, diag)
    return d


def align(ref: Sequence, hyp: Sequence) -> AlignedPair:
    """Minimum-edit-distance alignment.

    Backtrace from the end; on ties the diagonal move (match/substitution)
    wins over insertion, which wins over deletion, so the path is a
    deterministic function of the inputs.
    """
    d = edit_table(ref, hyp)
    i, j = len(ref), len(hyp)
    path = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            op = Op.MATCH if ref[i - 1] == hyp[j - 1] else Op.SUB
            path.append((op, i - 1, j - 1))
            i -= 1
            j -= 1
        elif j > 0 and d[i][j] == d[i][j - 1] + 1:
            path.append((Op.INS, None, j - 1))
            j -= 1
        else:
            path.append((Op.DEL, i - 1, None))
            i -= 1
    return AlignedPair(tuple(ref), tuple(hyp), tuple(reversed(path)))


def _count(ref: Sequence, hyp: Sequence) -> ErrorCounts:
    counts = ErrorCounts(n_ref=len(ref), empty_reference=len(ref) == 0 and len(hyp) > 0)
    for op, _, _ in align(ref, hyp).alignment:
        if op is Op.SUB:
            counts.sub += 1
        elif op is Op.INS:
            counts.ins += 1
        elif op is Op.DEL:
            counts.dele += 1
    return counts


def _words(x) -> list[str]:
    if isinstance(x, Transcript):
        return x.words()
    if isinstance(x, str):
        return x.split()
    return list(x)


def _chars(x) -> list[str]:
    if isinstance(x, Transcript):
        return list(x.chars)
    return list(x)


def wer(ref, hyp) -> tuple[float, ErrorCounts]:
    """Word error rate. An empty reference with a non-empty hypothesis gives ``inf``
    and sets ``counts.empty_reference`` instead of raising."""
    counts = _count(_words(ref), _words(hyp))
    return counts.rate, counts


def cer(ref, hyp) -> float:
    return cer_counts(ref, hyp).rate


def cer_counts(ref, hyp) -> ErrorCounts:
    """Character-level counts, spaces included."""
    return _count(_chars(ref), _chars(hyp))


# -- switch points ---------------------------------------------------------


def word_script(word: str) -> Script:
    """Majority script over the word's scripted characters; ties and digit-only words are NEUTRAL."""
    dev = lat = 0
    for ch in word:
        s = script_of(ch)
        if s is Script.DEVANAGARI:
            dev += 1
        elif s is Script.LATIN:
            lat += 1
    if dev > lat:
        return Script.DEVANAGARI
    if lat > dev:
        return Script.LATIN
    return Script.NEUTRAL


@dataclass(frozen=True)
class SwitchPointSet:
    """Reference word indices adjacent to a script change.

    ``multiplicity`` records how many switch points each word touches; with
    set semantics every value is 1.
    """

    multiplicity: Mapping[int, int] = field(default_factory=dict)

    @property
    def positions(self) -> frozenset[int]:
        return frozenset(self.multiplicity)

    @property
    def m(self) -> int:
        return sum(self.multiplicity.values())


def find_switch_points(scripts: Sequence[Script], count_once: bool = True) -> SwitchPointSet:
    scripted = [i for i, s in enumerate(scripts) if s is not Script.NEUTRAL]
    mult: dict[int, int] = {}
    for a, b in zip(scripted, scripted[1:]):
        if scripts[a] is not scripts[b]:
            for k in (a, b):
                mult[k] = 1 if count_once else mult.get(k, 0) + 1
    return SwitchPointSet(dict(sorted(mult.items())))


def switch_points_of(words: Sequence[str], count_once: bool = True) -> SwitchPointSet:
    return find_switch_points([word_script(w) for w in words], count_once)


def switch_counts(ref, hyp, count_once: bool = True) -> tuple[int, int]:
    """(N, M) for one utterance: matched switch-adjacent words and their total."""
    ref_w, hyp_w = _words(ref), _words(hyp)
    sp = switch_points_of(ref_w, count_once)
    ops = align(ref_w, hyp_w).ops_for_ref()
    n = sum(k for i, k in sp.multiplicity.items() if ops[i] is Op.MATCH)
    return n, sp.m


def _pair(refs, hyps):
    if isinstance(refs, Mapping):
        missing = set(refs) - set(hyps)
        if missing:
            raise KeyError(f"no hypothesis for {sorted(missing)[:5]}")
        return [(refs[k], hyps[k]) for k in refs]
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    return list(zip(refs, hyps))


def cs_wer(refs, hyps, count_once: bool = True, pooling: str = "corpus") -> float:
    """Switch-point error rate over a corpus.

    ``refs``/``hyps`` are either mappings keyed by utterance id or parallel
    sequences. ``pooling="corpus"`` sums N and M over all utterances;
    ``pooling="utterance"`` averages the per-utterance rates of utterances
    with at least one switch point.
    """
    pairs = _pair(refs, hyps)
    per = [switch_counts(r, h, count_once) for r, h in pairs]
    total_m = sum(m for _, m in per)
    if total_m == 0:
        raise NoSwitchPoints("no switch points in the reference corpus")
    if pooling == "corpus":
        return 1.0 - sum(n for n, _ in per) / total_m
    if pooling == "utterance":
        rates = [1.0 - n / m for n, m in per if m > 0]
        return sum(rates) / len(rates)
    raise ValueError(f"unknown pooling {pooling!r}")


def corpus_report(refs: Mapping[str, str], hyps: Mapping[str, str], count_once: bool = True) -> dict:
    """Pooled WER/CER/CS-WER plus per-utterance rows, as written by ``eval``."""
    pairs = _pair(refs, hyps)
    w_tot, c_tot = ErrorCounts(), ErrorCounts()
    n_tot = m_tot = 0
    rows = []
    for utt_id, (r, h) in zip(refs, pairs):
        _, wc = wer(r, h)
        cc = cer_counts(r, h)
        n, m = switch_counts(r, h, count_once)
        w_tot, c_tot = w_tot + wc, c_tot + cc
        n_tot, m_tot = n_tot + n, m_tot + m
        rows.append(
            {
                "id": utt_id,
                "ref": r,
                "hyp": h,
                "wer": _finite_or_none(wc.rate),
                "cer": _finite_or_none(cc.rate),
                "sub": wc.sub,
                "ins": wc.ins,
                "del": wc.dele,
                "n_ref": wc.n_ref,
                "m": m,
                "n": n,
            }
        )
    return {
        "wer": _finite_or_none(w_tot.rate),
        "cer": _finite_or_none(c_tot.rate),
        "cs_wer": (1.0 - n_tot / m_tot) if m_tot else None,
        "m": m_tot,
        "n": n_tot,
        "empty_reference": w_tot.empty_reference,
        "per_utterance": rows,
    }


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None
