"""Corpus ingestion, splitting, and token sampling."""

import io
import os

import numpy as np
import pytest
from scipy.stats import chi2

from spiketopics.corpus import (Corpus, parse_uci, sample_token,
                                split_fold_in, synthetic_corpus, write_uci)
from spiketopics.errors import (ConfigError, ConsistencyError,
                                CorpusFormatError)


def make_docword(header, entries):
    lines = [str(h) for h in header] + entries
    return io.StringIO("\n".join(lines) + "\n")


class TestParseUci:
    def test_basic(self):
        c = parse_uci(make_docword([2, 3, 2], ["1 1 4", "2 3 1"]))
        assert c.num_docs == 2
        assert c.vocab_size == 3
        assert c.total_tokens == 5
        words, counts = c.docs[0]
        assert words.tolist() == [0] and counts.tolist() == [4]

    def test_empty_nnz_section(self):
        c = parse_uci(make_docword([1, 1, 0], []))
        assert (c.num_docs, c.vocab_size, c.total_tokens) == (1, 1, 0)

    def test_malformed_header_reports_line(self):
        with pytest.raises(CorpusFormatError) as exc:
            parse_uci(make_docword([2, "x", 1], ["1 1 1"]))
        assert exc.value.line_number == 2

    def test_doc_id_out_of_range(self):
        with pytest.raises(ConsistencyError, match="doc id"):
            parse_uci(make_docword([1, 2, 1], ["2 1 1"]))

    def test_word_id_out_of_range(self):
        with pytest.raises(ConsistencyError, match="word id"):
            parse_uci(make_docword([1, 2, 1], ["1 3 1"]))

    def test_nnz_mismatch(self):
        with pytest.raises(ConsistencyError, match="NNZ"):
            parse_uci(make_docword([2, 3, 5], ["1 1 4", "2 3 1"]))

    def test_bad_entry_line(self):
        with pytest.raises(CorpusFormatError) as exc:
            parse_uci(make_docword([1, 1, 1], ["1 1"]))
        assert exc.value.line_number == 4

    def test_duplicate_entries_merge(self):
        c = parse_uci(make_docword([1, 2, 2], ["1 1 2", "1 1 3"]))
        assert c.total_tokens == 5
        assert c.docs[0][1].tolist() == [5]

    def test_vocab_stream(self):
        vocab = io.StringIO("alpha\nbeta\ngamma\n")
        c = parse_uci(make_docword([1, 3, 1], ["1 2 1"]), vocab)
        assert c.vocab == ["alpha", "beta", "gamma"]

    def test_vocab_length_mismatch(self):
        vocab = io.StringIO("alpha\n")
        with pytest.raises(ConsistencyError, match="vocab"):
            parse_uci(make_docword([1, 3, 1], ["1 2 1"]), vocab)

    def test_gzip_transparent(self, tmp_path):
        import gzip
        path = tmp_path / "docword.txt.gz"
        with gzip.open(path, "wt") as fh:
            fh.write("1\n2\n1\n1 2 3\n")
        c = parse_uci(str(path))
        assert c.total_tokens == 3

    def test_roundtrip_bit_exact(self):
        corpus, _, _ = synthetic_corpus(12, 30, 3, 25, seed=5)
        out = io.StringIO()
        write_uci(corpus, out)
        back = parse_uci(io.StringIO(out.getvalue()))
        assert back.num_docs == corpus.num_docs
        assert back.vocab_size == corpus.vocab_size
        for (w1, c1), (w2, c2) in zip(corpus.docs, back.docs):
            assert np.array_equal(w1, w2)
            assert np.array_equal(c1, c2)

    @pytest.mark.skipif("SPIKETOPICS_KOS_DOCWORD" not in os.environ,
                        reason="full KOS dataset not available")
    def test_kos_statistics(self):
        c = parse_uci(os.environ["SPIKETOPICS_KOS_DOCWORD"])
        assert round(c.num_docs / 1e3, 1) == pytest.approx(3.4, abs=0.1)
        assert c.total_tokens == pytest.approx(467e3, rel=0.05)


class TestSplitFoldIn:
    def test_counts_and_halving(self):
        corpus, _, _ = synthetic_corpus(10, 20, 2, 8, seed=1)
        split = split_fold_in(corpus, 0.1, rng_seed=3)
        assert split.train.num_docs == 9
        assert split.test_observed.num_docs == 1
        assert split.test_holdout.num_docs == 1
        n_obs = split.test_observed.total_tokens
        n_hold = split.test_holdout.total_tokens
        assert n_obs + n_hold == 8
        assert n_obs == 4 and n_hold == 4

    def test_odd_token_goes_to_observed(self):
        docs = [(np.array([0]), np.array([5])), (np.array([1]), np.array([7]))]
        corpus = Corpus(docs, vocab_size=2)
        split = split_fold_in(corpus, 0.5, rng_seed=0)
        assert split.test_observed.total_tokens == 3
        assert split.test_holdout.total_tokens == 2

    def test_deterministic(self):
        corpus, _, _ = synthetic_corpus(15, 25, 3, 10, seed=2)
        a = split_fold_in(corpus, 0.2, rng_seed=42)
        b = split_fold_in(corpus, 0.2, rng_seed=42)
        assert a.test_doc_ids == b.test_doc_ids
        for da, db in zip(a.test_observed.docs, b.test_observed.docs):
            assert np.array_equal(da[0], db[0]) and np.array_equal(da[1], db[1])

    def test_short_test_docs_excluded(self):
        docs = [(np.array([0]), np.array([1]))] * 4 \
            + [(np.array([1]), np.array([6]))] * 4
        corpus = Corpus(docs, vocab_size=2)
        split = split_fold_in(corpus, 0.5, rng_seed=7)
        assert all(corpus.doc_lengths[d] >= 2 for d in split.test_doc_ids)

    def test_total_multiplicity_preserved(self):
        corpus, _, _ = synthetic_corpus(20, 30, 3, 9, seed=11)
        split = split_fold_in(corpus, 0.3, rng_seed=1)
        excluded_tokens = sum(int(corpus.doc_lengths[d])
                              for d in split.excluded_test_docs)
        total = (split.train.total_tokens + split.test_observed.total_tokens
                 + split.test_holdout.total_tokens)
        assert total == corpus.total_tokens - excluded_tokens

    def test_bad_fraction(self):
        corpus, _, _ = synthetic_corpus(5, 10, 2, 6, seed=0)
        with pytest.raises(ConfigError):
            split_fold_in(corpus, 0.0, rng_seed=0)
        with pytest.raises(ConfigError):
            split_fold_in(corpus, 0.01, rng_seed=0)  # rounds to empty test


class TestSampleToken:
    def test_single_token(self):
        corpus = Corpus([(np.array([2]), np.array([1]))], vocab_size=3)
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert sample_token(corpus, rng) == (2, 0)

    def test_empty_corpus_raises(self):
        corpus = Corpus([(np.array([], dtype=int), np.array([], dtype=int))],
                        vocab_size=1)
        with pytest.raises(ConfigError):
            sample_token(corpus, np.random.default_rng(0))

    def test_multinomial_frequency_3sigma(self):
        # doc0 = {w0 x1}, doc1 = {w1 x3}: P(w1, d1) = 0.75 exactly
        corpus = Corpus([(np.array([0]), np.array([1])),
                         (np.array([1]), np.array([3]))], vocab_size=2)
        rng = np.random.default_rng(123)
        n = 100_000
        hits = sum(sample_token(corpus, rng) == (1, 1) for _ in range(n))
        p = 0.75
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(hits / n - p) < 3 * sigma

    def test_uniform_chi_square(self):
        # 4 equally likely tokens; empirical chi^2 below the 99th percentile
        corpus = Corpus([(np.array([0, 1]), np.array([1, 1])),
                         (np.array([0, 2]), np.array([1, 1]))], vocab_size=3)
        rng = np.random.default_rng(7)
        n = 100_000
        counts = np.zeros(4)
        keys = [(0, 0), (1, 0), (0, 1), (2, 1)]
        for _ in range(n):
            counts[keys.index(sample_token(corpus, rng))] += 1
        expected = n / 4
        stat = float(np.sum((counts - expected) ** 2 / expected))
        assert stat < chi2.ppf(0.99, df=3)

    def test_marginals_match_enumeration(self):
        # exact enumeration oracle on a small corpus (N <= 1000)
        corpus, _, _ = synthetic_corpus(6, 8, 2, 20, seed=3)
        ws, ds, cs = corpus.pairs()
        exact = {}
        for w, d, c in zip(ws, ds, cs):
            exact[(int(w), int(d))] = c / corpus.total_tokens
        rng = np.random.default_rng(99)
        n = 100_000
        freq = {}
        for _ in range(n):
            key = sample_token(corpus, rng)
            freq[key] = freq.get(key, 0) + 1
        for key, p in exact.items():
            sigma = np.sqrt(p * (1 - p) / n)
            assert abs(freq.get(key, 0) / n - p) <= 3 * sigma + 1e-12


class TestSyntheticCorpus:
    def test_deterministic(self):
        a, phi_a, theta_a = synthetic_corpus(8, 12, 3, 15, seed=9)
        b, phi_b, theta_b = synthetic_corpus(8, 12, 3, 15, seed=9)
        assert np.array_equal(phi_a, phi_b)
        assert np.array_equal(theta_a, theta_b)
        for (w1, c1), (w2, c2) in zip(a.docs, b.docs):
            assert np.array_equal(w1, w2) and np.array_equal(c1, c2)

    def test_shapes_and_tokens(self):
        c, phi, theta = synthetic_corpus(5, 9, 3, 11, seed=1)
        assert phi.shape == (3, 9)
        assert theta.shape == (5, 3)
        np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
        assert c.total_tokens == 5 * 11
