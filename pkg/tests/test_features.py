import json
import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csasr.features import (
    BLANK,
    EOS,
    SPACE,
    UNK,
    DimMismatch,
    Kind,
    MalformedRecord,
    MissingFeatureFile,
    Script,
    Transcript,
    UnsupportedCodepoint,
    Utterance,
    build_vocabulary,
    decode_features,
    encode_features,
    load_manifest,
    read_features,
    script_of,
    write_features,
    write_manifest,
)


class TestScriptOf:
    @pytest.mark.parametrize(
        "char, script",
        [
            ("a", Script.LATIN),
            ("z", Script.LATIN),
            ("न", Script.DEVANAGARI),
            ("ा", Script.DEVANAGARI),
            (" ", Script.NEUTRAL),
            ("7", Script.NEUTRAL),
            (UNK, Script.NEUTRAL),
            (EOS, Script.NEUTRAL),
            (BLANK, Script.NEUTRAL),
        ],
    )
    def test_tags(self, char, script):
        assert script_of(char) is script

    def test_block_edges(self):
        assert script_of("ऀ") is Script.DEVANAGARI
        assert script_of("ॿ") is Script.DEVANAGARI
        assert script_of("ঀ") is Script.NEUTRAL


class TestVocabulary:
    def test_ordering(self):
        v = build_vocabulary(["ab"])
        assert v.symbols == (BLANK, SPACE, UNK, EOS, "a", "b")
        assert v.english_set == {4, 5}

    def test_mixed_script(self):
        v = build_vocabulary(["नमस्ते hello"])
        eng = {v.symbols[i] for i in v.english_set}
        assert eng == {"e", "h", "l", "o"}
        deva = [s for s in v.symbols if script_of(s) is Script.DEVANAGARI]
        assert set("नमस्ते") == set(deva)
        assert not set(deva) & eng

    def test_empty_corpus(self):
        assert build_vocabulary([]).symbols == (BLANK, SPACE, UNK, EOS)

    def test_case_folded(self):
        assert build_vocabulary(["AbC"]).symbols[4:] == ("a", "b", "c")

    def test_reserved_indices(self):
        v = build_vocabulary(["x"])
        assert (v.blank_index, v.space_index, v.unk_index, v.eos_index) == (0, 1, 2, 3)
        assert not v.english_set & {0, 1, 2, 3}

    def test_all_latin_letters(self):
        v = build_vocabulary(["the quick brown fox jumps over a lazy dog 42"])
        assert len(v.english_set) == 26
        assert "4" in v.symbols and v.index("4") not in v.english_set

    @pytest.mark.parametrize("text, char, pos", [("ab,c", ",", 2), ("hi!", "!", 2), ("कल?", "?", 2)])
    def test_punctuation_rejected(self, text, char, pos):
        with pytest.raises(UnsupportedCodepoint) as exc:
            build_vocabulary([text])
        assert exc.value.char == char and exc.value.position == pos

    def test_devanagari_block_accepted_whole(self):
        # the danda sits in the Devanagari block, so it is a Devanagari symbol
        v = build_vocabulary(["कल।"])
        assert "।" in v.symbols

    @given(st.lists(st.text(alphabet="abcxyz नमक01", max_size=12), max_size=6), st.randoms())
    def test_order_insensitive(self, corpus, rnd):
        shuffled = list(corpus)
        rnd.shuffle(shuffled)
        assert build_vocabulary(corpus) == build_vocabulary(shuffled)

    def test_encode_decode(self):
        v = build_vocabulary(["कल car"])
        tr = Transcript.from_text("car कल")
        assert v.decode(v.encode(tr)) == tr
        assert v.encode(Transcript.from_text("q")) == [v.unk_index]


class TestTranscript:
    def test_scripts_follow_chars(self):
        tr = Transcript.from_text("Car  कल 9")
        assert tr.text == "car कल 9"
        assert tr.scripts == tuple(script_of(c) for c in tr.chars)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Transcript(("a", "b"), (Script.LATIN,))


def _blob(frames, dims, values=None, version=1, magic=b"CSFK"):
    values = np.zeros(frames * dims) if values is None else values
    return struct.pack("<4sIII", magic, version, frames, dims) + np.asarray(values, dtype="<f4").tobytes()


class TestFeatureFile:
    def test_layout(self):
        data = np.array([[1.0, 2.0], [3.0, -0.5], [0.25, 8.0]], dtype=np.float32)
        blob = encode_features(data)
        assert blob[:4] == b"CSFK"
        assert struct.unpack_from("<III", blob, 4) == (1, 3, 2)
        assert blob[16:] == data.astype("<f4").tobytes()
        assert len(blob) == 16 + 3 * 2 * 4

    @settings(max_examples=50)
    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 6), st.integers(1, 5)),
            elements=st.floats(-1e6, 1e6, width=32, allow_nan=False),
        )
    )
    def test_byte_round_trip(self, data):
        blob = encode_features(data)
        assert encode_features(decode_features(blob)) == blob

    def test_file_round_trip(self, tmp_path):
        data = np.random.default_rng(0).normal(size=(4, 3)).astype(np.float32)
        write_features(tmp_path / "x.csfk", data)
        blob = (tmp_path / "x.csfk").read_bytes()
        write_features(tmp_path / "y.csfk", read_features(tmp_path / "x.csfk"))
        assert (tmp_path / "y.csfk").read_bytes() == blob

    @pytest.mark.parametrize(
        "blob",
        [
            _blob(2, 2)[:-1],
            _blob(2, 2) + b"\0",
            _blob(2, 2)[:10],
            _blob(2, 2, magic=b"XXXX"),
            _blob(2, 2, version=2),
            _blob(0, 2),
            _blob(1, 1, [np.nan]),
        ],
    )
    def test_rejects_bad_files(self, blob):
        with pytest.raises(ValueError):
            decode_features(blob)


def _write_record_files(tmp_path, shapes, transcripts=None, kinds=None):
    lines = []
    for i, shape in enumerate(shapes):
        write_features(tmp_path / f"f{i}.csfk", np.ones(shape, dtype=np.float32) * i)
        lines.append(
            json.dumps(
                {
                    "id": f"u{i}",
                    "features": f"f{i}.csfk",
                    "transcript": (transcripts or ["कल car"] * len(shapes))[i],
                    "kind": (kinds or ["real"] * len(shapes))[i],
                },
                ensure_ascii=False,
            )
        )
    path = tmp_path / "m.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestManifest:
    def test_two_records_in_order(self, tmp_path):
        path = _write_record_files(tmp_path, [(3, 4), (5, 4)], ["b a", "कल"], ["real", "tts"])
        utts = load_manifest(path)
        assert [u.id for u in utts] == ["u0", "u1"]
        assert [u.kind for u in utts] == [Kind.REAL, Kind.TTS]
        assert utts[1].features.shape == (5, 4)
        assert utts[0].transcript.text == "b a"

    def test_dim_mismatch(self, tmp_path):
        path = _write_record_files(tmp_path, [(3, 40), (3, 80)])
        with pytest.raises(DimMismatch) as exc:
            load_manifest(path)
        assert (exc.value.expected, exc.value.got, exc.value.utt_id) == (40, 80, "u1")

    def test_truncated_payload(self, tmp_path):
        path = _write_record_files(tmp_path, [(3, 4), (3, 4)])
        blob = (tmp_path / "f1.csfk").read_bytes()
        (tmp_path / "f1.csfk").write_bytes(blob[:-3])
        with pytest.raises(MalformedRecord) as exc:
            load_manifest(path)
        assert exc.value.line_no == 2

    def test_missing_feature_file(self, tmp_path):
        path = _write_record_files(tmp_path, [(3, 4)])
        (tmp_path / "f0.csfk").unlink()
        with pytest.raises(MissingFeatureFile):
            load_manifest(path)

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            '{"id": "x", "features": "f0.csfk", "transcript": "a"}',
            '{"id": "x", "features": "f0.csfk", "transcript": "a", "kind": "synthetic"}',
            '{"id": "x", "features": "f0.csfk", "transcript": "", "kind": "real"}',
        ],
    )
    def test_malformed_lines(self, tmp_path, line):
        write_features(tmp_path / "f0.csfk", np.ones((2, 2), dtype=np.float32))
        path = tmp_path / "m.jsonl"
        path.write_text(line + "\n", encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_manifest(path)

    def test_duplicate_id(self, tmp_path):
        path = _write_record_files(tmp_path, [(2, 2), (2, 2)])
        path.write_text(path.read_text(encoding="utf-8").replace('"u1"', '"u0"'), encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_manifest(path)

    def test_write_then_load(self, tmp_path):
        rng = np.random.default_rng(1)
        utts = [
            Utterance(f"x{i}", rng.normal(size=(i + 2, 3)).astype(np.float32), Transcript.from_text("कल bus"), Kind.TTS)
            for i in range(3)
        ]
        write_manifest(tmp_path / "out" / "manifest.jsonl", utts)
        back = load_manifest(tmp_path / "out" / "manifest.jsonl")
        assert [u.id for u in back] == ["x0", "x1", "x2"]
        for a, b in zip(utts, back):
            assert np.array_equal(a.features, b.features)
            assert a.transcript == b.transcript


def test_random_shuffle_stability():
    # vocabulary built from a real-looking corpus is independent of corpus order
    corpus = ["घर car पानी", "time game", "दिन बात", "office 42"]
    orders = [random.Random(s).sample(corpus, len(corpus)) for s in range(5)]
    assert len({build_vocabulary(o) for o in orders}) == 1
