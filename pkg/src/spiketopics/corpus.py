"""Bag-of-words corpora: UCI-format ingestion, fold-in splits, token sampling.

A corpus stores each document as a pair of aligned arrays (word ids,
multiplicities).  Token-level views (one entry per token instance) are
expanded lazily and cached, since the per-token Gibbs sweeps need them
but parsing and splitting do not.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConsistencyError, CorpusFormatError

logger = logging.getLogger(__name__)


class Corpus:
    """Immutable bag-of-words corpus with 0-based word and document ids.

    Parameters
    ----------
    docs : sequence of (words, counts)
        One pair of integer arrays per document.  ``words`` holds distinct
        word ids, ``counts`` the positive multiplicities.
    vocab : sequence of str, optional
        Word id to surface-form mapping.  Synthetic corpora get generated
        names ``w000..``.
    vocab_size : int, optional
        Explicit vocabulary size; required when ``vocab`` is omitted and
        some words never occur.
    """

    def __init__(self, docs, vocab=None, vocab_size=None):
        norm_docs = []
        max_word = -1
        for words, counts in docs:
            words = np.asarray(words, dtype=np.int64)
            counts = np.asarray(counts, dtype=np.int64)
            if words.shape != counts.shape:
                raise ConsistencyError("word/count arrays differ in length")
            if words.size and words.min() < 0:
                raise ConsistencyError("negative word id")
            if counts.size and counts.min() < 1:
                raise ConsistencyError("non-positive multiplicity")
            order = np.argsort(words, kind="stable")
            words, counts = words[order], counts[order]
            # merge duplicate word ids
            if words.size and np.any(np.diff(words) == 0):
                uniq, inverse = np.unique(words, return_inverse=True)
                merged = np.zeros(uniq.size, dtype=np.int64)
                np.add.at(merged, inverse, counts)
                words, counts = uniq, merged
            if words.size:
                max_word = max(max_word, int(words[-1]))
            norm_docs.append((words, counts))

        if vocab is not None:
            self.vocab = list(vocab)
        else:
            size = vocab_size if vocab_size is not None else max_word + 1
            self.vocab = [f"w{i:04d}" for i in range(size)]
        if vocab_size is not None and vocab_size != len(self.vocab):
            raise ConsistencyError(
                f"vocab_size {vocab_size} != len(vocab) {len(self.vocab)}"
            )
        if max_word >= len(self.vocab):
            raise ConsistencyError(
                f"word id {max_word} outside vocabulary of size {len(self.vocab)}"
            )

        self.docs = norm_docs
        self.num_docs = len(norm_docs)
        self.vocab_size = len(self.vocab)
        self.doc_lengths = np.array(
            [int(c.sum()) for _, c in norm_docs], dtype=np.int64
        )
        self.total_tokens = int(self.doc_lengths.sum())
        self._token_words = None
        self._token_docs = None

    # short aliases used throughout the numeric code
    @property
    def D(self):
        return self.num_docs

    @property
    def V(self):
        return self.vocab_size

    @property
    def N(self):
        return self.total_tokens

    @property
    def nnz(self):
        """Number of distinct (word, document) pairs."""
        return sum(words.size for words, _ in self.docs)

    def _expand(self):
        if self._token_words is None:
            tw = np.empty(self.total_tokens, dtype=np.int64)
            td = np.empty(self.total_tokens, dtype=np.int64)
            pos = 0
            for d, (words, counts) in enumerate(self.docs):
                n = int(counts.sum())
                tw[pos : pos + n] = np.repeat(words, counts)
                td[pos : pos + n] = d
                pos += n
            self._token_words, self._token_docs = tw, td
        return self._token_words, self._token_docs

    @property
    def token_words(self):
        """Word id of every token instance, document-major order."""
        return self._expand()[0]

    @property
    def token_docs(self):
        """Document id of every token instance, document-major order."""
        return self._expand()[1]

    def pairs(self):
        """Distinct (word, doc, count) triples as three aligned arrays."""
        ws = np.concatenate([w for w, _ in self.docs]) if self.docs else np.empty(0, np.int64)
        cs = np.concatenate([c for _, c in self.docs]) if self.docs else np.empty(0, np.int64)
        ds = np.concatenate(
            [np.full(w.size, d, dtype=np.int64) for d, (w, _) in enumerate(self.docs)]
        ) if self.docs else np.empty(0, np.int64)
        return ws, ds, cs

    def doc_tokens(self, d):
        """Expanded word ids of document ``d`` (one entry per token)."""
        words, counts = self.docs[d]
        return np.repeat(words, counts)

    def count_matrix(self):
        """Dense (V, D) matrix of word multiplicities."""
        m = np.zeros((self.vocab_size, self.num_docs), dtype=np.int64)
        ws, ds, cs = self.pairs()
        m[ws, ds] = cs
        return m


@dataclass
class FoldInSplit:
    """Train/test partition with each test document halved into an observed
    part (used to infer the document mixture) and a holdout part (scored)."""

    train: Corpus
    test_observed: Corpus
    test_holdout: Corpus
    train_doc_ids: tuple = ()
    test_doc_ids: tuple = ()
    excluded_test_docs: tuple = field(default_factory=tuple)


def _open_maybe_gzip(source):
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if path.endswith(".gz"):
            return gzip.open(path, "rt")
        return open(path, "rt")
    return source


def parse_uci(docword_stream, vocab_stream=None):
    """Parse the UCI bag-of-words format into a :class:`Corpus`.

    The docword file is three integer header lines ``D``, ``W``, ``NNZ``
    followed by ``NNZ`` lines ``docID wordID count`` with 1-based ids.
    Ids are normalized to 0-based.  Documents that end up empty are kept;
    filtering happens downstream where the 1/N_d terms require it.

    Raises
    ------
    CorpusFormatError
        Malformed header or entry line (reports the line number).
    ConsistencyError
        Id outside the declared range, or entry count != NNZ.
    """
    stream = _open_maybe_gzip(docword_stream)
    close = stream is not docword_stream
    try:
        header = []
        line_no = 0
        while len(header) < 3:
            raw = stream.readline()
            line_no += 1
            if raw == "":
                raise CorpusFormatError("unexpected end of header", line_no)
            raw = raw.strip()
            if not raw:
                continue
            try:
                header.append(int(raw))
            except ValueError:
                raise CorpusFormatError(f"expected integer, got {raw!r}", line_no)
        num_docs, num_words, nnz = header
        if num_docs < 0 or num_words < 0 or nnz < 0:
            raise CorpusFormatError("negative header value", line_no)

        per_doc = [dict() for _ in range(num_docs)]
        seen = 0
        for raw in stream:
            line_no += 1
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split()
            if len(parts) != 3:
                raise CorpusFormatError(
                    f"expected 'docID wordID count', got {raw!r}", line_no
                )
            try:
                doc_id, word_id, count = (int(p) for p in parts)
            except ValueError:
                raise CorpusFormatError(f"non-integer field in {raw!r}", line_no)
            if not (1 <= doc_id <= num_docs):
                raise ConsistencyError(
                    f"line {line_no}: doc id {doc_id} outside [1, {num_docs}]"
                )
            if not (1 <= word_id <= num_words):
                raise ConsistencyError(
                    f"line {line_no}: word id {word_id} outside [1, {num_words}]"
                )
            if count < 1:
                raise ConsistencyError(f"line {line_no}: non-positive count {count}")
            bucket = per_doc[doc_id - 1]
            bucket[word_id - 1] = bucket.get(word_id - 1, 0) + count
            seen += 1
        if seen != nnz:
            raise ConsistencyError(f"header declares NNZ={nnz} but found {seen} entries")
    finally:
        if close:
            stream.close()

    vocab = None
    if vocab_stream is not None:
        vstream = _open_maybe_gzip(vocab_stream)
        vclose = vstream is not vocab_stream
        try:
            vocab = [line.strip() for line in vstream if line.strip()]
        finally:
            if vclose:
                vstream.close()
        if len(vocab) != num_words:
            raise ConsistencyError(
                f"vocab file has {len(vocab)} words, header declares {num_words}"
            )

    docs = []
    for bucket in per_doc:
        if bucket:
            words = np.fromiter(bucket.keys(), dtype=np.int64, count=len(bucket))
            counts = np.fromiter(bucket.values(), dtype=np.int64, count=len(bucket))
        else:
            words = np.empty(0, dtype=np.int64)
            counts = np.empty(0, dtype=np.int64)
        docs.append((words, counts))
    return Corpus(docs, vocab=vocab, vocab_size=num_words)


def write_uci(corpus, docword_stream, vocab_stream=None):
    """Serialize a corpus back to UCI format (1-based ids, sorted entries)."""
    ws, ds, cs = corpus.pairs()
    lines = [f"{corpus.num_docs}\n", f"{corpus.vocab_size}\n", f"{ws.size}\n"]
    order = np.lexsort((ws, ds))
    for i in order:
        lines.append(f"{ds[i] + 1} {ws[i] + 1} {cs[i]}\n")
    docword_stream.writelines(lines)
    if vocab_stream is not None:
        vocab_stream.writelines(w + "\n" for w in corpus.vocab)


def split_fold_in(corpus, test_fraction, rng_seed):
    """Deterministic train/test split with per-document test halving.

    Test documents are chosen uniformly at random; each one's token
    multiset is shuffled and split into two halves by token instance,
    with an odd token going to the observed half.  Test documents with
    fewer than 2 tokens are excluded entirely (logged).  Document ids in
    the two test corpora align.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(rng_seed)
    D = corpus.num_docs
    n_test = int(round(D * test_fraction))
    if n_test == 0 or n_test == D:
        raise ConfigError(
            f"test_fraction {test_fraction} yields empty train or test ({D} docs)"
        )
    perm = rng.permutation(D)
    test_ids = np.sort(perm[:n_test])
    train_ids = np.sort(perm[n_test:])

    def pairs_from_tokens(tokens):
        uniq, counts = np.unique(tokens, return_counts=True)
        return uniq, counts

    observed_docs, holdout_docs, kept_ids, excluded = [], [], [], []
    for d in test_ids:
        tokens = corpus.doc_tokens(int(d))
        if tokens.size < 2:
            excluded.append(int(d))
            continue
        rng.shuffle(tokens)
        n_obs = (tokens.size + 1) // 2
        observed_docs.append(pairs_from_tokens(tokens[:n_obs]))
        holdout_docs.append(pairs_from_tokens(tokens[n_obs:]))
        kept_ids.append(int(d))
    if excluded:
        logger.warning(
            "excluded %d test document(s) with < 2 tokens: %s",
            len(excluded), excluded,
        )
    if not kept_ids:
        raise ConfigError("all selected test documents had < 2 tokens")

    train_docs = [corpus.docs[int(d)] for d in train_ids]
    mk = lambda docs: Corpus(docs, vocab=corpus.vocab)
    return FoldInSplit(
        train=mk(train_docs),
        test_observed=mk(observed_docs),
        test_holdout=mk(holdout_docs),
        train_doc_ids=tuple(int(d) for d in train_ids),
        test_doc_ids=tuple(kept_ids),
        excluded_test_docs=tuple(excluded),
    )


def drop_empty_docs(corpus):
    """Return a corpus without zero-token documents (reindexes doc ids)."""
    keep = [i for i in range(corpus.num_docs) if corpus.doc_lengths[i] > 0]
    if len(keep) == corpus.num_docs:
        return corpus
    logger.warning("dropping %d empty document(s)", corpus.num_docs - len(keep))
    return Corpus([corpus.docs[i] for i in keep], vocab=corpus.vocab)


def sample_token(corpus, rng):
    """Draw one token instance uniformly; returns (word_id, doc_id)."""
    if corpus.total_tokens < 1:
        raise ConfigError("cannot sample from an empty corpus")
    i = int(rng.integers(corpus.total_tokens))
    return int(corpus.token_words[i]), int(corpus.token_docs[i])


def synthetic_corpus(num_docs, vocab_size, num_topics, doc_length, seed,
                     phi=None, doc_topic_conc=0.3):
    """Forward-sample a corpus from a mixed-membership generative model.

    Each document draws a topic mixture from a symmetric Dirichlet with
    concentration ``doc_topic_conc``, then ``doc_length`` tokens.  When
    ``phi`` is omitted a well-separated block structure is planted: topic
    k owns an exclusive slice of the vocabulary.

    Returns ``(corpus, phi, theta)`` with the planted parameters.
    """
    rng = np.random.default_rng(seed)
    K = num_topics
    if phi is None:
        phi = blocked_topics(K, vocab_size)
    else:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (K, vocab_size):
            raise ConfigError(f"phi must be ({K}, {vocab_size}), got {phi.shape}")
    theta = rng.dirichlet(np.full(K, doc_topic_conc), size=num_docs)
    docs = []
    for d in range(num_docs):
        z = rng.choice(K, size=doc_length, p=theta[d])
        words = np.empty(doc_length, dtype=np.int64)
        for k in range(K):
            mask = z == k
            n = int(mask.sum())
            if n:
                words[mask] = rng.choice(vocab_size, size=n, p=phi[k])
        uniq, counts = np.unique(words, return_counts=True)
        docs.append((uniq, counts))
    return Corpus(docs, vocab_size=vocab_size), phi, theta


def blocked_topics(num_topics, vocab_size, leak=0.0):
    """Row-stochastic (K, V) matrix with topic k supported on block k.

    ``leak`` spreads that fraction of each topic's mass uniformly over
    the rest of the vocabulary (0 gives disjoint supports).
    """
    phi = np.zeros((num_topics, vocab_size))
    bounds = np.linspace(0, vocab_size, num_topics + 1).astype(int)
    for k in range(num_topics):
        lo, hi = bounds[k], bounds[k + 1]
        phi[k, lo:hi] = (1.0 - leak) / (hi - lo)
        if leak:
            outside = vocab_size - (hi - lo)
            phi[k, :lo] = leak / outside
            phi[k, hi:] = leak / outside
    return phi


def load_toy_corpus():
    """Small bundled corpus (20 docs, 50 words, 3 planted topics)."""
    here = os.path.dirname(__file__)
    doc = os.path.join(here, "data", "docword.toy.txt")
    voc = os.path.join(here, "data", "vocab.toy.txt")
    return parse_uci(doc, voc)
