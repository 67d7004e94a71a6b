#!/usr/bin/env python3
"""Scoring code-switched hypotheses: WER, CER and the switch-point error rate."""

from csasr.metrics import align, corpus_report, cs_wer, switch_points_of

refs = {
    "a": "घर car पानी",
    "b": "मेरा phone काम नहीं कर रहा",
    "c": "कल office बस से गया",
    "d": "time नहीं है",
}
hyps = {
    "a": "घर कार पानी",  # English word written in Devanagari
    "b": "मेरा phone काम नहीं कर रहा",
    "c": "कल ऑफिस बस गया",
    "d": "time है",
}

for k, ref in refs.items():
    words = ref.split()
    sp = switch_points_of(words)
    marked = " ".join(f"[{w}]" if i in sp.positions else w for i, w in enumerate(words))
    ops = " ".join(op.value for op, _, _ in align(words, hyps[k].split()).alignment)
    print(f"{k}: {marked:38s} ops: {ops}")

rep = corpus_report(refs, hyps)
print(f"\nWER {rep['wer']:.3f}  CER {rep['cer']:.3f}  CS-WER {rep['cs_wer']:.3f}  (N={rep['n']}, M={rep['m']})")

# the same corpus under the alternative readings of the metric
print("count doubly-adjacent words twice:", round(cs_wer(refs, hyps, count_once=False), 3))
print("average per utterance instead of pooling:", round(cs_wer(refs, hyps, pooling="utterance"), 3))
