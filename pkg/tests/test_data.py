import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgmae.data import (EOS, MAGIC, PAD, SOS, SPECIALS, UNK, ParallelCorpus, Vocab, build_vocab,
                        dumps_checkpoint, load_checkpoint, load_geoquery, load_tsv_pairs, loads_checkpoint,
                        read_tsv_token_pairs, save_checkpoint, tokenize, tokenize_logical_form)
from mgmae.errors import FormatError
from mgmae.seq2seq import Decoder, Encoder, encode, greedy_decode


class TestTokenize:
    def test_punctuation_is_isolated(self):
        assert tokenize("Hello, world!") == ["hello", ",", "world", "!"]

    def test_empty(self):
        assert tokenize("") == []

    def test_quotes_and_apostrophes(self):
        assert tokenize('He said "don\'t"') == ["he", "said", '"', "don", "'", "t", '"']

    @settings(max_examples=300, deadline=None)
    @given(st.text(alphabet=st.characters(codec="ascii"), max_size=60))
    def test_join_round_trip(self, text):
        toks = tokenize(text)
        assert tokenize(" ".join(toks)) == toks

    def test_logical_form(self):
        assert tokenize_logical_form("answer(A)") == ["answer", "(", "A", ")"]
        assert tokenize_logical_form("answer(capital(loc_2(stateid('texas'))))")[:4] == ["answer", "(", "capital", "("]

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet="abAB_'(), ", max_size=40))
    def test_logical_form_round_trip(self, text):
        toks = tokenize_logical_form(text)
        assert tokenize_logical_form(" ".join(toks)) == toks


class TestVocab:
    def test_first_occurrence_order(self):
        v = build_vocab([["a", "b", "a"]])
        assert v.itos == list(SPECIALS) + ["a", "b"]

    def test_min_count(self):
        v = build_vocab([["a", "b", "a"]], min_count=2)
        assert "b" not in v
        assert v.encode(["a", "b"]) == [4, UNK, EOS]

    def test_specials(self):
        assert (PAD, SOS, EOS, UNK) == (0, 1, 2, 3)
        with pytest.raises(FormatError):
            Vocab(["x"])

    def test_decode_stops_at_eos(self):
        v = build_vocab([["a", "b"]])
        assert v.decode([SOS, 4, PAD, 5, EOS, 4]) == ["a", "b"]

    def test_encode_decode_encode(self):
        sents = [tokenize(s) for s in ["the cat sat .", "a dog ran !", "the end"]]
        v = build_vocab(sents)
        for s in sents:
            ids = v.encode(s)
            assert v.encode(v.decode(ids)) == ids

    def test_deterministic(self):
        sents = [tokenize("b a c a"), tokenize("d b")]
        assert build_vocab(sents).itos == build_vocab(sents).itos


class TestLoaders:
    def test_translation_line(self, tmp_path):
        p = tmp_path / "pairs.txt"
        p.write_text("Go.\tVa !\tCC-BY 2.0 attribution\n", encoding="utf-8")
        corpus = load_tsv_pairs(p)
        assert corpus.src_vocab.decode(corpus.pairs[0][0]) == ["go", "."]
        assert corpus.tgt_vocab.decode(corpus.pairs[0][1]) == ["va", "!"]
        assert corpus.pairs[0][0][-1] == EOS and corpus.pairs[0][1][-1] == EOS

    def test_limit(self, tmp_path):
        p = tmp_path / "pairs.txt"
        p.write_text("".join(f"s{i}\tt{i}\n" for i in range(10)), encoding="utf-8")
        assert len(load_tsv_pairs(p, limit=0)) == 0
        assert len(load_tsv_pairs(p, limit=3)) == 3
        assert len(load_tsv_pairs(p)) == 10

    def test_malformed_lines_are_counted(self, tmp_path, caplog):
        p = tmp_path / "pairs.txt"
        p.write_text("a\tb\nno tab here\n\t\n\nc\td\n", encoding="utf-8")
        pairs, skipped = read_tsv_token_pairs(p)
        assert pairs == [(["a"], ["b"]), (["c"], ["d"])]
        assert skipped == 2
        assert "skipped 2" in caplog.text

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(OSError, match="nowhere.tsv"):
            load_tsv_pairs(tmp_path / "nowhere.tsv")

    def test_geoquery(self, tmp_path):
        p = tmp_path / "train.tsv"
        p.write_text("what is x\tanswer(A)\n", encoding="utf-8")
        corpus = load_geoquery(p)
        assert corpus.tgt_vocab.decode(corpus.pairs[0][1]) == ["answer", "(", "A", ")"]
        assert corpus.src_vocab.decode(corpus.pairs[0][0]) == ["what", "is", "x"]

    def test_dev_uses_training_vocab(self, tmp_path):
        (tmp_path / "train.tsv").write_text("a b\tf(x)\n", encoding="utf-8")
        (tmp_path / "dev.tsv").write_text("a c\tg(x)\n", encoding="utf-8")
        train = load_geoquery(tmp_path / "train.tsv")
        dev = load_geoquery(tmp_path / "dev.tsv", train.src_vocab, train.tgt_vocab)
        assert dev.pairs[0][0] == [4, UNK, EOS]
        assert dev.pairs[0][1][0] == UNK

    def test_corpus_invariants(self, five_corpus):
        assert isinstance(five_corpus, ParallelCorpus)
        for s, t in five_corpus.pairs:
            assert s and t and s[-1] == EOS and t[-1] == EOS
            assert max(s) < len(five_corpus.src_vocab)


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path):
        enc = Encoder(12, 4, 5, seed=2)
        state = {"encoder": enc.params, "config": {"lr": 1e-3, "name": "x", "k": 2, "flag": True, "none": None},
                 "labels": np.arange(5), "history": [0.1, float("nan")], "nested": [[1, 2], {"a": np.eye(2)}]}
        path = tmp_path / "model.ckpt"
        save_checkpoint(state, path)
        back = load_checkpoint(path)
        for k, v in enc.params.items():
            assert back["encoder"][k].tobytes() == v.tobytes()
        assert back["config"] == state["config"]
        assert back["labels"].dtype == np.int64 and back["labels"].tolist() == list(range(5))
        assert back["history"][0] == 0.1 and np.isnan(back["history"][1])
        np.testing.assert_array_equal(back["nested"][1]["a"], np.eye(2))
        assert [p.name for p in tmp_path.iterdir()] == ["model.ckpt"]

    def test_serialisation_is_deterministic(self):
        state = {"b": np.ones(3), "a": [1, 2]}
        assert dumps_checkpoint(state) == dumps_checkpoint(dict(reversed(list(state.items()))))

    def test_magic_header(self):
        assert dumps_checkpoint({}).startswith(MAGIC)

    def test_corrupted_header(self):
        blob = bytearray(dumps_checkpoint({"x": np.ones(4)}))
        blob[0:6] = b"XXXXXX"
        with pytest.raises(FormatError, match="magic"):
            loads_checkpoint(bytes(blob))

    def test_flipped_payload_byte(self):
        blob = bytearray(dumps_checkpoint({"x": np.ones(4)}))
        blob[-40] ^= 0xFF
        with pytest.raises(FormatError):
            loads_checkpoint(bytes(blob))

    def test_truncated(self):
        blob = dumps_checkpoint({"x": np.ones(40)})
        for cut in (10, len(blob) // 2, len(blob) - 1):
            with pytest.raises(FormatError):
                loads_checkpoint(blob[:cut])

    def test_version_mismatch(self):
        blob = bytearray(dumps_checkpoint({}))
        blob[6:10] = struct.pack("<I", 99)
        with pytest.raises(FormatError, match="version"):
            loads_checkpoint(bytes(blob))

    def test_unsupported_objects(self):
        with pytest.raises(TypeError):
            dumps_checkpoint({"x": object()})
        with pytest.raises(TypeError):
            dumps_checkpoint({1: 2})

    def test_greedy_decoding_survives_reload(self, tmp_path):
        enc, dec = Encoder(10, 4, 6, seed=0), Decoder(10, 4, 6, seed=1)
        sources = [[4, 5, EOS], [6, 7, 8, EOS], [9, EOS]]
        before = [greedy_decode(dec, encode(enc, s), 8) for s in sources]
        save_checkpoint({"enc": enc.params, "dec": dec.params}, tmp_path / "m.ckpt")
        state = load_checkpoint(tmp_path / "m.ckpt")
        enc2 = Encoder(10, 4, 6, params=state["enc"])
        dec2 = Decoder(10, 4, 6, params=state["dec"])
        assert [greedy_decode(dec2, encode(enc2, s), 8) for s in sources] == before
