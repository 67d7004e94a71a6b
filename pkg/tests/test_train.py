import numpy as np
import pytest

from csasr.features import Kind, Script, Transcript, Utterance
from csasr.loss import LossConfig
from csasr.metrics import word_script
from csasr.model import DECODER_PARAMS, ENCODER_PARAMS, ToyModel
from csasr.synth import prototype, render, synth_corpus, synth_vocabulary
from csasr.train import (
    SGD,
    Checkpoint,
    MissingCheckpoint,
    MissingTTSCorpus,
    Mode,
    TrainConfig,
    batch_step,
    decode,
    decode_checkpoint,
    encode_checkpoint,
    encoder_params_equal,
    evaluate,
    history_csv,
    interleave_schedule,
    load_checkpoint,
    save_checkpoint,
    sortagrad_batches,
    train_run,
)

VOCAB = synth_vocabulary()
VOCAB_DIMS = 8


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(VOCAB, 12, 0.5, seed=1)


def small_cfg(**kw):
    base = dict(batch_size=4, epochs=2, lr=0.05, hidden=8, embed=4)
    base.update(kw)
    return TrainConfig(**base)


def _utt(uid, frames):
    return Utterance(uid, np.zeros((frames, 2)), Transcript.from_text("a"), Kind.REAL)


class TestSortagrad:
    def test_grouping(self):
        corpus = [_utt(f"u{i}", n) for i, n in enumerate([9, 3, 7, 3, 1])]
        batches = sortagrad_batches(corpus, 2, 0)
        assert sorted([u.frames for u in b] for b in batches) == [[1, 3], [3, 7], [9]]
        # ties broken by id, so u1 precedes u3
        pair = next(b for b in batches if [u.frames for u in b] == [1, 3])
        assert [u.id for u in pair] == ["u4", "u1"]

    def test_single_batch(self):
        corpus = [_utt(f"u{i}", n) for i, n in enumerate([5, 2, 4])]
        assert [[u.id for u in b] for b in sortagrad_batches(corpus, 10, 3)] == [["u1", "u2", "u0"]]

    def test_seeded(self):
        corpus = [_utt(f"u{i:02d}", i % 7 + 1) for i in range(30)]
        ids = lambda bs: [[u.id for u in b] for b in bs]  # noqa: E731
        assert ids(sortagrad_batches(corpus, 3, 9)) == ids(sortagrad_batches(corpus, 3, 9))
        assert ids(sortagrad_batches(corpus, 3, 9)) != ids(sortagrad_batches(corpus, 3, 10))

    def test_empty(self):
        with pytest.raises(ValueError):
            sortagrad_batches([], 2, 0)


class TestInterleave:
    def test_round_robin_spreads(self):
        assert interleave_schedule(4, 2) == ["real", "tts", "real", "real", "tts", "real"]
        assert interleave_schedule(2, 0) == ["real", "real"]

    def test_sequential(self):
        assert interleave_schedule(2, 1, "sequential") == ["real", "real", "tts"]


class TestModel:
    def test_zero_model_uniform(self):
        m = ToyModel.zeros(3, 5, hidden=4, embed=2)
        ctc, att, _ = m.forward(np.random.default_rng(0).normal(size=(6, 3)), [4, 4])
        np.testing.assert_allclose(ctc.probs, 0.2, atol=1e-15)
        np.testing.assert_allclose(att.probs, 0.2, atol=1e-15)
        assert att.T == 3 and ctc.T == 6

    def test_rows_sum_to_one(self):
        m = ToyModel.init(4, 7, np.random.default_rng(1), hidden=6, embed=3)
        ctc, att, _ = m.forward(np.random.default_rng(2).normal(scale=3, size=(9, 4)), [4, 5, 6])
        np.testing.assert_allclose(ctc.probs.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(att.probs.sum(axis=1), 1.0, atol=1e-9)

    def test_disjoint_parameter_sets(self):
        assert not set(ENCODER_PARAMS) & set(DECODER_PARAMS)

    def test_end_to_end_gradient(self):
        from csasr.gradcheck import MODEL_TOL, check_model

        rng = np.random.default_rng(0)
        assert max(check_model(rng) for _ in range(3)) < MODEL_TOL


def _model():
    return ToyModel.init(VOCAB_DIMS, len(VOCAB), np.random.default_rng(0), hidden=8, embed=4)


class TestSteps:
    def test_zero_lr_no_change(self, corpus):
        m = _model()
        before = m.param_hash()
        batch_step(m, VOCAB, LossConfig(), corpus[0][:3], SGD(0.0))
        assert m.param_hash() == before

    def test_small_step_descends(self, corpus):
        m = _model()
        batch = corpus[0][:4]
        cfg = LossConfig()
        loss = lambda: sum(m.loss_and_grad(u.features, VOCAB.encode(u.transcript), cfg)[0].total for u in batch)  # noqa: E731
        before = loss()
        batch_step(m, VOCAB, cfg, batch, SGD(1e-3))
        assert loss() < before

    def test_frozen_encoder_step(self, corpus):
        m = _model()
        ref = m.copy()
        m.freeze_encoder()
        batch_step(m, VOCAB, LossConfig(), corpus[0][:3], SGD(0.1))
        assert encoder_params_equal(m, ref)
        assert any(not np.array_equal(m.params[k], ref.params[k]) for k in DECODER_PARAMS)

    def test_clip_bounds_update(self, corpus):
        m = _model()
        ref = m.copy()
        batch_step(m, VOCAB, LossConfig(), corpus[0][:3], SGD(1.0, clip=1e-3))
        delta = np.sqrt(sum(((m.params[k] - ref.params[k]) ** 2).sum() for k in m.params))
        assert delta <= 1e-3 * (1 + 1e-9)

    def test_reward_gradient_linearity(self, corpus):
        m = _model()
        u = corpus[1][0]
        labels = VOCAB.encode(u.transcript)
        eng = VOCAB.english_set
        off, _ = m.loss_and_grad(u.features, labels, LossConfig(english_set=eng))
        on, _ = m.loss_and_grad(u.features, labels, LossConfig(english_set=eng, reward_enabled=True))
        unit, _ = m.loss_and_grad(
            u.features, labels, LossConfig(english_set=eng, reward_enabled=True, lambda_mtl=0.7, lambda_prime=1.0)
        )
        # the reward part of the logit gradient scales exactly with lambda_prime
        r_grad = unit.grad_ctc_logits - off.grad_ctc_logits
        np.testing.assert_allclose(on.grad_ctc_logits - off.grad_ctc_logits, 0.25 * r_grad, atol=1e-13)
        assert on.total == pytest.approx(off.total - 0.25 * (off.r_ctc + off.r_att), rel=1e-13)


class TestTrainRun:
    def test_history_and_determinism(self, corpus):
        real, _ = corpus
        a = train_run(small_cfg(), real, vocab=VOCAB)
        b = train_run(small_cfg(), real, vocab=VOCAB)
        assert a[0].param_hash() == b[0].param_hash()
        assert history_csv(a[2]) == history_csv(b[2])
        assert [row["epoch"] for row in a[2]] == [1, 2]
        assert history_csv(a[2]).splitlines()[0] == "epoch,loss_total,loss_ctc,loss_att,reward_ctc,reward_att"

    def test_threads_do_not_change_result(self, corpus):
        real, tts = corpus
        cfg = small_cfg(mixup_enabled=True, tts_ratio=1.0)
        one = train_run(cfg, real, tts, vocab=VOCAB, threads=1)
        four = train_run(cfg, real, tts, vocab=VOCAB, threads=4)
        assert one[0].param_hash() == four[0].param_hash()

    def test_missing_tts(self, corpus):
        with pytest.raises(MissingTTSCorpus):
            train_run(small_cfg(mixup_enabled=True), corpus[0], vocab=VOCAB)
        with pytest.raises(MissingTTSCorpus):
            train_run(small_cfg(tts_ratio=0.5), corpus[0], vocab=VOCAB)

    def test_missing_checkpoint(self, corpus, tmp_path):
        with pytest.raises(MissingCheckpoint):
            train_run(small_cfg(mode=Mode.FINETUNE), corpus[0])
        with pytest.raises(MissingCheckpoint):
            train_run(small_cfg(mode=Mode.FINETUNE), corpus[0], checkpoint=tmp_path / "nope.ckpt")

    def test_finetune_frozen_encoder(self, corpus):
        real, tts = corpus
        base, vocab, _ = train_run(small_cfg(epochs=1), real, vocab=VOCAB)
        ckpt = Checkpoint(vocab, base)
        frozen, _, _ = train_run(small_cfg(mode=Mode.FINETUNE, freeze_encoder=True, tts_ratio=1.0), real, tts, ckpt)
        free, _, _ = train_run(small_cfg(mode=Mode.FINETUNE, tts_ratio=1.0), real, tts, ckpt)
        assert frozen.encoder_hash() == base.encoder_hash()
        assert frozen.param_hash() != base.param_hash()
        assert free.encoder_hash() != base.encoder_hash()
        assert not any(frozen.trainable[k] for k in ENCODER_PARAMS)

    def test_baseline_reduces_loss(self, corpus):
        _, _, hist = train_run(small_cfg(epochs=6, batch_size=2), corpus[0], vocab=VOCAB)
        assert hist[-1]["loss_total"] < hist[0]["loss_total"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(tts_ratio=-1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = _model()
        save_checkpoint(tmp_path / "m.ckpt", VOCAB, m)
        ck = load_checkpoint(tmp_path / "m.ckpt")
        assert ck.vocab == VOCAB
        assert ck.model.param_hash() == m.param_hash()
        assert encode_checkpoint(ck.vocab, ck.model) == (tmp_path / "m.ckpt").read_bytes()

    @pytest.mark.parametrize("cut", [3, 10, -1])
    def test_truncated(self, cut):
        blob = encode_checkpoint(VOCAB, _model())
        with pytest.raises(ValueError):
            decode_checkpoint(blob[:cut])

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            decode_checkpoint(b"XXXX" + encode_checkpoint(VOCAB, _model())[4:])


class TestDecodeAndEvaluate:
    def test_decode_deterministic(self, corpus):
        m = _model()
        x = corpus[0][0].features
        assert decode(m, x, 5, VOCAB) == decode(m, x, 5, VOCAB)
        assert isinstance(decode(m, x, 1), tuple)

    def test_evaluate_report(self, corpus):
        report = evaluate(_model(), VOCAB, corpus[0])
        assert {"wer", "cer", "cs_wer", "m", "n", "per_utterance", "mean_reward"} <= set(report)
        assert len(report["per_utterance"]) == len(corpus[0])


class TestSynth:
    def test_monolingual(self):
        real, tts = synth_corpus(VOCAB, 30, 0.0, seed=4)
        for u in real:
            scripts = {word_script(w) for w in u.transcript.words()}
            assert len(scripts) == 1

    def test_cs_fraction_exact(self):
        real, _ = synth_corpus(VOCAB, 20, 0.25, seed=5)
        mixed = [u for u in real if len({word_script(w) for w in u.transcript.words()}) == 2]
        assert len(mixed) == 5

    def test_bit_identical(self):
        a, b = synth_corpus(VOCAB, 6, 0.5, seed=2), synth_corpus(VOCAB, 6, 0.5, seed=2)
        for x, y in zip(a[0] + a[1], b[0] + b[1]):
            assert x.id == y.id and x.transcript == y.transcript
            assert x.features.tobytes() == y.features.tobytes()

    def test_pairing_and_kinds(self):
        real, tts = synth_corpus(VOCAB, 4, 0.5, seed=3)
        assert [u.kind for u in real] == [Kind.REAL] * 4 and [u.kind for u in tts] == [Kind.TTS] * 4
        assert [u.transcript for u in real] == [u.transcript for u in tts]
        assert all(u.features.shape[1] == 8 and u.features.dtype == np.float32 for u in real + tts)

    def test_noise_free_rendering(self):
        tr = Transcript.from_text("a")
        rows = render(tr, VOCAB, np.random.default_rng(0), sigma=0.0, durations=[3])
        assert rows.shape == (3, 8)
        assert np.array_equal(rows[0], rows[1]) and np.array_equal(rows[1], rows[2])
        np.testing.assert_array_equal(rows[0], prototype("a").astype(np.float32))

    def test_cs_text_mixes_scripts(self):
        real, _ = synth_corpus(VOCAB, 10, 1.0, seed=6)
        for u in real:
            scripts = [word_script(w) for w in u.transcript.words()]
            assert Script.DEVANAGARI in scripts and Script.LATIN in scripts

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            synth_corpus(VOCAB, 3, 1.5, seed=0)
