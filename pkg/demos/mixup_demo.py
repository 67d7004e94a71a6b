#!/usr/bin/env python3
"""Mixing synthetic (TTS) features with real speech features."""

import numpy as np

from csasr.mixup import MixupParams, mix_batches, mix_pair, sample_lambda_mix
from csasr.synth import synth_corpus, synth_vocabulary

vocab = synth_vocabulary()
real, tts = synth_corpus(vocab, n_utts=6, cs_fraction=0.5, seed=1)

# lambda_mix is folded onto [0.5, 1] so the TTS member always dominates
rng = np.random.default_rng(0)
params = MixupParams(alpha=0.4, beta=0.4)
draws = np.array([sample_lambda_mix(params, rng) for _ in range(10_000)])
print("lambda_mix: min %.3f  mean %.3f  max %.3f" % (draws.min(), draws.mean(), draws.max()))
print("histogram over [0.5, 1]:", np.histogram(draws, bins=5, range=(0.5, 1.0))[0])

# one pair by hand: the real member is cut or zero-padded to the TTS length
t, r = tts[0], real[3]
m = mix_pair(t, r, 0.8)
print(f"\n{t.id} ({t.frames} frames) + {r.id} ({r.frames} frames) -> {m.features.shape[0]} frames")
print("transcript kept from the TTS side:", m.transcript.text)
print("first frame, first 4 dims:")
print("  tts  ", np.round(t.features[0, :4], 3))
print("  real ", np.round(r.features[0, :4], 3))
print("  mixed", np.round(m.features[0, :4], 3))

# a batch shares one lambda and draws distinct real partners
for mu in mix_batches(tts[:4], real, params, rng):
    print(f"{mu.source_tts_id} <- {mu.source_real_id}  lambda={mu.lambda_mix:.3f}")
