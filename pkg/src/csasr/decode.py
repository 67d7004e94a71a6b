"""CTC decoding: greedy collapse and prefix beam search."""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def collapse(path, blank: int = 0) -> tuple[int, ...]:
    """Merge repeats, then drop blanks."""
    out = []
    prev = None
    for k in path:
        k = int(k)
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return tuple(out)


def greedy_decode(log_probs: np.ndarray, blank: int = 0) -> tuple[int, ...]:
    # argmax returns the lowest index on ties
    return collapse(np.argmax(log_probs, axis=1), blank)


def _rank(item):
    prefix, (pb, pnb) = item
    return (-np.logaddexp(pb, pnb), prefix)


def prefix_beam_search(log_probs: np.ndarray, beam_width: int, blank: int = 0) -> tuple[int, ...]:
    """CTC prefix beam search with no language model and no insertion bonus.

    Each prefix carries log P(prefix, ends in blank) and log P(prefix, ends in
    non-blank). Ties in score are broken by the lexicographically smallest
    prefix, so results are deterministic. When ``beam_width`` is never
    exceeded the search is exact over all labelings.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    T, V = log_probs.shape
    beam = {(): (0.0, NEG_INF)}
    for t in range(T):
        lp = log_probs[t]
        nxt: dict[tuple, list[float]] = {}

        def add(prefix, pb, pnb):
            cur = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            cur[0] = np.logaddexp(cur[0], pb)
            cur[1] = np.logaddexp(cur[1], pnb)

        for prefix, (pb, pnb) in beam.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, total + lp[blank], NEG_INF)
            last = prefix[-1] if prefix else None
            for c in range(V):
                if c == blank:
                    continue
                if c == last:
                    # repeat without separating blank stays on the same prefix
                    add(prefix, NEG_INF, pnb + lp[c])
                    add(prefix + (c,), NEG_INF, pb + lp[c])
                else:
                    add(prefix + (c,), NEG_INF, total + lp[c])
        ranked = sorted(((p, tuple(v)) for p, v in nxt.items()), key=_rank)
        beam = dict(ranked[:beam_width])
    return min(beam.items(), key=_rank)[0]


def ctc_decode(log_probs: np.ndarray, beam_width: int = 1, blank: int = 0) -> tuple[int, ...]:
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    if beam_width == 1:
        return greedy_decode(log_probs, blank)
    return prefix_beam_search(log_probs, beam_width, blank)
