"""Docword parsing, vocabulary, cache format, and query splits."""

import io
import struct

import numpy as np
import pytest

from ssdd.corpus import (
    CACHE_MAGIC,
    Corpus,
    RawDocument,
    load_cache,
    load_vocabulary,
    parse_bag_of_words,
    save_cache,
    split_queries,
    write_docword,
)
from ssdd.errors import (
    DuplicateEntryError,
    DuplicateTermError,
    ParseError,
    RangeError,
)

from conftest import synth_corpus

EXAMPLE = "3\n4\n2\n1 2 5\n3 4 1\n"


class TestParseBagOfWords:
    def test_reference_example(self):
        corpus = parse_bag_of_words(io.StringIO(EXAMPLE))
        assert len(corpus) == 3
        assert corpus.dims == 4
        assert corpus.documents[0].counts == {1: 5}
        assert corpus.documents[1].counts == {}
        assert corpus.documents[2].counts == {3: 1}
        assert corpus.vectors[1].degenerate
        np.testing.assert_allclose(corpus.vectors[0].weights, [1.0])

    def test_stats(self):
        stats = parse_bag_of_words(io.StringIO(EXAMPLE)).stats()
        assert stats.documents == 3
        assert stats.dims == 4
        assert stats.total_tokens == 6
        assert stats.nnz_entries == 2

    def test_bad_header(self):
        with pytest.raises(ParseError):
            parse_bag_of_words(io.StringIO("x\n4\n0\n"))

    def test_non_integer_entry(self):
        with pytest.raises(ParseError):
            parse_bag_of_words(io.StringIO("1\n4\n1\n1 two 5\n"))

    def test_wrong_field_count(self):
        with pytest.raises(ParseError):
            parse_bag_of_words(io.StringIO("1\n4\n1\n1 2\n"))

    def test_doc_id_out_of_range(self):
        with pytest.raises(RangeError) as err:
            parse_bag_of_words(io.StringIO("2\n4\n1\n0 2 5\n"))
        assert err.value.line == 4
        with pytest.raises(RangeError):
            parse_bag_of_words(io.StringIO("2\n4\n1\n3 2 5\n"))

    def test_word_id_out_of_range(self):
        with pytest.raises(RangeError):
            parse_bag_of_words(io.StringIO("2\n4\n1\n1 5 5\n"))

    def test_duplicate_entry(self):
        with pytest.raises(DuplicateEntryError):
            parse_bag_of_words(io.StringIO("2\n4\n2\n1 2 5\n1 2 7\n"))

    def test_non_positive_count(self):
        with pytest.raises(ValueError):
            parse_bag_of_words(io.StringIO("1\n4\n1\n1 2 0\n"))
        with pytest.raises(ValueError):
            parse_bag_of_words(io.StringIO("1\n4\n1\n1 2 -3\n"))

    def test_missing_entries(self):
        with pytest.raises(ParseError):
            parse_bag_of_words(io.StringIO("1\n4\n2\n1 2 5\n"))

    def test_extra_entries(self):
        with pytest.raises(ParseError):
            parse_bag_of_words(io.StringIO("2\n4\n1\n1 2 5\n2 3 1\n"))

    def test_round_trip_through_text(self):
        corpus = synth_corpus(n_docs=20, dims=80, seed=9, mean_terms=12)
        buf = io.StringIO()
        write_docword(corpus, buf)
        again = parse_bag_of_words(io.StringIO(buf.getvalue()))
        assert len(again) == len(corpus)
        assert again.dims == corpus.dims
        for a, b in zip(corpus.documents, again.documents):
            assert a.counts == b.counts


class TestVocabulary:
    def test_load_and_index(self):
        vocab = load_vocabulary(io.StringIO("alpha\nbeta\ngamma\n"))
        assert len(vocab) == 3
        assert vocab.index_of("beta") == 1

    def test_duplicate_term(self):
        with pytest.raises(DuplicateTermError):
            load_vocabulary(io.StringIO("alpha\nbeta\nalpha\n"))

    def test_interior_blank_line(self):
        with pytest.raises(ParseError):
            load_vocabulary(io.StringIO("alpha\n\nbeta\n"))

    def test_trailing_blank_ok(self):
        vocab = load_vocabulary(io.StringIO("alpha\nbeta\n\n"))
        assert len(vocab) == 2


class TestCache:
    def test_round_trip(self, tmp_path):
        corpus = synth_corpus(n_docs=15, dims=120, seed=13, mean_terms=10)
        path = tmp_path / "corpus.bin"
        save_cache(corpus, path)
        again = load_cache(path)
        assert len(again) == len(corpus)
        assert again.dims == corpus.dims
        assert again.documents is None
        for a, b in zip(corpus.vectors, again.vectors):
            np.testing.assert_array_equal(a.indices, b.indices)
            np.testing.assert_array_equal(a.weights, b.weights)
            assert a.degenerate == b.degenerate

    def test_degenerate_documents_survive(self, tmp_path):
        corpus = Corpus(4, [RawDocument(0, {}), RawDocument(1, {2: 3})])
        path = tmp_path / "deg.bin"
        save_cache(corpus, path)
        again = load_cache(path)
        assert again.vectors[0].degenerate
        assert not again.vectors[1].degenerate

    def test_exact_layout(self, tmp_path):
        """The cache bytes match the documented little-endian layout."""
        corpus = Corpus(3, [RawDocument(0, {0: 3, 1: 4})])
        path = tmp_path / "layout.bin"
        save_cache(corpus, path)
        # magic, (version, D, W), then per doc: nnz, (index, weight) pairs
        expected = (
            CACHE_MAGIC
            + struct.pack("<III", 1, 1, 3)
            + struct.pack("<I", 2)
            + struct.pack("<Id", 0, 0.6)
            + struct.pack("<Id", 1, 0.8)
        )
        assert path.read_bytes() == expected

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTACORP" + b"\x00" * 16)
        with pytest.raises(ParseError):
            load_cache(path)

    def test_truncated_body(self, tmp_path):
        corpus = Corpus(3, [RawDocument(0, {0: 3, 1: 4})])
        path = tmp_path / "trunc.bin"
        save_cache(corpus, path)
        whole = path.read_bytes()
        path.write_bytes(whole[:-5])
        with pytest.raises(ParseError):
            load_cache(path)

    def test_trailing_garbage(self, tmp_path):
        corpus = Corpus(3, [RawDocument(0, {0: 3})])
        path = tmp_path / "trail.bin"
        save_cache(corpus, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ParseError):
            load_cache(path)


class TestSplitQueries:
    def test_partition_and_determinism(self):
        corpus = synth_corpus(n_docs=40, dims=100, seed=3, mean_terms=8)
        q1, t1 = split_queries(corpus, k=10, seed=5)
        q2, t2 = split_queries(corpus, k=10, seed=5)
        assert q1 == q2 and t1 == t2
        assert len(q1) == 10
        assert sorted(q1 + t1) == list(range(40))
        assert not set(q1) & set(t1)

    def test_overlap_keeps_all_targets(self):
        corpus = synth_corpus(n_docs=20, dims=100, seed=3, mean_terms=8)
        queries, targets = split_queries(corpus, k=5, seed=1, overlap=True)
        assert targets == list(range(20))
        assert len(queries) == 5

    def test_k_out_of_range(self):
        corpus = synth_corpus(n_docs=10, dims=50, seed=3, mean_terms=8)
        with pytest.raises(RangeError):
            split_queries(corpus, k=0)
        with pytest.raises(RangeError):
            split_queries(corpus, k=11)

    def test_different_seeds_differ(self):
        corpus = synth_corpus(n_docs=40, dims=100, seed=3, mean_terms=8)
        q1, _ = split_queries(corpus, k=10, seed=1)
        q2, _ = split_queries(corpus, k=10, seed=2)
        assert q1 != q2
