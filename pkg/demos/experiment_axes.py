#!/usr/bin/env python3
"""Small versions of the training configurations: baseline, add-mixup, CS-bias, finetune with a frozen encoder.

Runs in under a minute on one core. At this size the CS-bias term raises the reward,
but CS-WER can move either way; the acceptance test uses a larger corpus.
"""

from csasr.loss import LossConfig
from csasr.synth import synth_corpus, synth_vocabulary
from csasr.train import Checkpoint, Mode, TrainConfig, evaluate, train_run

vocab = synth_vocabulary()
real, _ = synth_corpus(vocab, 120, 0.0, seed=100)  # monolingual real speech
_, tts = synth_corpus(vocab, 120, 1.0, seed=200)  # code-switched TTS
held, _ = synth_corpus(vocab, 40, 1.0, seed=300, id_prefix="held-")

common = dict(batch_size=4, epochs=12, lr=0.05, seed=0)
runs = {
    "baseline": TrainConfig(**common),
    "add-mixup": TrainConfig(**common, mixup_enabled=True, tts_ratio=1.0),
    "add-mixup + cs-bias": TrainConfig(
        **common, mixup_enabled=True, tts_ratio=1.0, loss_cfg=LossConfig(reward_enabled=True, lambda_prime=0.25)
    ),
}

models = {}
print(f"{'system':28s} {'WER':>6s} {'CS-WER':>7s} {'reward':>7s}")
for name, cfg in runs.items():
    model, _, _ = train_run(cfg, real, tts if cfg.tts_ratio else None, vocab=vocab)
    models[name] = model
    rep = evaluate(model, vocab, held)
    print(f"{name:28s} {rep['wer']:6.3f} {rep['cs_wer']:7.3f} {rep['mean_reward']:7.2f}")

# finetune the baseline on mixed TTS with the encoder held fixed
ft = TrainConfig(**{**common, "epochs": 6}, mode=Mode.FINETUNE, freeze_encoder=True, mixup_enabled=True, tts_ratio=1.0)
model, _, _ = train_run(ft, real, tts, checkpoint=Checkpoint(vocab, models["baseline"]))
rep = evaluate(model, vocab, held)
print(f"{'baseline -> FT (frozen enc)':28s} {rep['wer']:6.3f} {rep['cs_wer']:7.3f} {rep['mean_reward']:7.2f}")
print("encoder unchanged:", model.encoder_hash() == models["baseline"].encoder_hash())
