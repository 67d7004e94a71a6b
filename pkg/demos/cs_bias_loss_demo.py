#!/usr/bin/env python3
"""How the English-mass reward shifts the multitask loss and its gradient."""

import numpy as np

from csasr.features import Transcript
from csasr.loss import LossConfig, PosteriorSequence, cs_bias_loss, cs_reward
from csasr.synth import synth_vocabulary

vocab = synth_vocabulary()
labels = vocab.encode(Transcript.from_text("घर car"))
V = len(vocab)
rng = np.random.default_rng(0)
ctc = PosteriorSequence(rng.normal(size=(3 * len(labels), V)))
att = PosteriorSequence(rng.normal(size=(len(labels) + 1, V)))
eng = vocab.english_set
print("english symbols:", "".join(vocab.symbols[i] for i in sorted(eng)))

r, _ = cs_reward(ctc, eng)
print(f"reward on CTC frames: {r:.3f} out of at most {ctc.T}")

# total falls linearly as lambda_prime grows, with slope -(r_ctc + r_att)
for lp in (0.0, 0.25, 0.5, 1.0):
    out = cs_bias_loss(ctc, att, labels, LossConfig(english_set=eng, reward_enabled=True, lambda_prime=lp))
    print(f"lambda_prime={lp:4.2f}  l_mtl={out.l_mtl:8.4f}  r={out.r_ctc + out.r_att:6.3f}  total={out.total:8.4f}")

# the reward pushes English logits up: the gradient on them gets more negative
off = cs_bias_loss(ctc, att, labels, LossConfig(english_set=eng))
on = cs_bias_loss(ctc, att, labels, LossConfig(english_set=eng, reward_enabled=True))
idx = sorted(eng)
shift = (on.grad_ctc_logits - off.grad_ctc_logits)[:, idx].sum()
print(f"summed change in English-logit gradient with the reward on: {shift:.4f}")
