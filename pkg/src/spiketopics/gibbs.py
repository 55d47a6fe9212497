"""Gibbs samplers: baseline collapsed sampler, its spiking twin, and the
per-document semi-collapsed sweeps used by the minibatch learner.

The spiking variant keeps the counts in log space (exp(weight) = count +
prior) and replaces the decrement/increment bookkeeping with the tau1 /
tau2 maps on exactly the three synapses touched by a token.  Both
samplers draw from the same conditional distribution, so they are one
transition kernel in two representations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _fast
from .errors import ConfigError, DomainError, InvariantError
from .network import (NetworkWeights, categorical, potentials, race_sample,
                      softmax, tau1, tau2)


@dataclass
class CountTables:
    """Topic-assignment tabulations: ``c_wz`` (V, K), ``c_zd`` (K, D),
    ``c_dot_z`` (K,) and the per-token assignments ``z`` themselves."""

    c_wz: np.ndarray
    c_zd: np.ndarray
    c_dot_z: np.ndarray
    z: np.ndarray

    @property
    def K(self):
        return self.c_wz.shape[1]

    def copy(self):
        return CountTables(self.c_wz.copy(), self.c_zd.copy(),
                           self.c_dot_z.copy(), self.z.copy())

    @classmethod
    def from_assignments(cls, corpus, z, num_topics):
        z = np.asarray(z, dtype=np.int64)
        if z.shape != (corpus.total_tokens,):
            raise InvariantError("assignment vector length != token count")
        c_wz = np.zeros((corpus.vocab_size, num_topics), dtype=np.int64)
        c_zd = np.zeros((num_topics, corpus.num_docs), dtype=np.int64)
        np.add.at(c_wz, (corpus.token_words, z), 1)
        np.add.at(c_zd, (z, corpus.token_docs), 1)
        return cls(c_wz, c_zd, c_wz.sum(axis=0), z)

    @classmethod
    def random_init(cls, corpus, num_topics, rng):
        """Uniform random topic per token, then tabulate."""
        z = rng.integers(num_topics, size=corpus.total_tokens)
        return cls.from_assignments(corpus, z, num_topics)

    def check(self, corpus=None):
        """Verify the summation identities; raises on violation."""
        if np.any(self.c_wz < 0) or np.any(self.c_zd < 0):
            raise InvariantError("negative count")
        if not np.array_equal(self.c_wz.sum(axis=0), self.c_dot_z):
            raise InvariantError("c_dot_z != column sums of c_wz")
        if corpus is not None:
            if not np.array_equal(self.c_zd.sum(axis=0), corpus.doc_lengths):
                raise InvariantError("per-document counts != document lengths")
            ref = CountTables.from_assignments(corpus, self.z, self.K)
            if not (np.array_equal(ref.c_wz, self.c_wz)
                    and np.array_equal(ref.c_zd, self.c_zd)):
                raise InvariantError("tables disagree with assignments")


def cgs_conditional(counts, hp, w, d):
    """Collapsed conditional for one token, with that token already
    removed from the tables:

        p(z) ~ (c_wz[w,z] + phi_w) / (c_dot_z[z] + phi_bar) * (c_zd[z,d] + lam_z)
    """
    cw = counts.c_wz[w]
    if np.any(cw < 0) or np.any(counts.c_zd[:, d] < 0) or np.any(counts.c_dot_z < 0):
        raise InvariantError("conditional evaluated on negative excluded counts")
    p = (cw + hp.phi[w]) / (counts.c_dot_z + hp.phi_bar) * (counts.c_zd[:, d] + hp.lam)
    return p / p.sum()


def _scan_order(corpus, rng, num_tokens, scan):
    if scan == "systematic":
        reps = int(np.ceil(num_tokens / max(corpus.total_tokens, 1)))
        order = np.concatenate([np.arange(corpus.total_tokens)] * reps)
        return order[:num_tokens]
    if scan == "uniform":
        return rng.integers(corpus.total_tokens, size=num_tokens)
    raise ConfigError(f"unknown scan order {scan!r}")


def cgs_sweep(corpus, counts, hp, rng, num_tokens=None, scan="systematic",
              use_fast=True):
    """Run ``num_tokens`` collapsed resampling steps in place.

    ``scan='systematic'`` visits token positions in order (the fast
    default for whole sweeps), ``scan='uniform'`` draws the position
    uniformly each step, matching the token-sampling view used in the
    kernel-equivalence tests.  The jitted inner loop consumes the RNG in
    the same order as the Python one.
    """
    if num_tokens is None:
        num_tokens = corpus.total_tokens
    tw, td = corpus.token_words, corpus.token_docs
    order = _scan_order(corpus, rng, num_tokens, scan)
    if use_fast and _fast.HAVE_NUMBA:
        _fast.cgs_loop(counts.c_wz, counts.c_zd, counts.c_dot_z, counts.z,
                       tw, td, hp.phi, hp.phi_bar, hp.lam,
                       np.ascontiguousarray(order, dtype=np.int64), rng)
        return counts
    for i in order:
        w, d, zo = int(tw[i]), int(td[i]), int(counts.z[i])
        counts.c_wz[w, zo] -= 1
        counts.c_zd[zo, d] -= 1
        counts.c_dot_z[zo] -= 1
        p = cgs_conditional(counts, hp, w, d)
        zn = categorical(p, rng)
        counts.c_wz[w, zn] += 1
        counts.c_zd[zn, d] += 1
        counts.c_dot_z[zn] += 1
        counts.z[i] = zn
    return counts


def cgs_train(corpus, hp, sweeps, rng, counts=None, scan="systematic",
              callback=None):
    """Initialize (if needed) and run full collapsed-Gibbs sweeps."""
    if counts is None:
        counts = CountTables.random_init(corpus, hp.K, rng)
    for s in range(sweeps):
        cgs_sweep(corpus, counts, hp, rng, scan=scan)
        if callback is not None:
            callback(s, counts)
    return counts


# ---------------------------------------------------------------------------
# Spiking twin of the collapsed sampler
# ---------------------------------------------------------------------------


def spikecgs_init(counts, hp):
    """Encode count tables into log-space weights:

        m_alpha[z,w] = log(c_wz[w,z] + phi_w)
        m_beta[z,d]  = log(c_zd[z,d] + lam_z)
        b[z]         = log(c_dot_z[z] + phi_bar)
    """
    with np.errstate(divide="ignore"):
        m_alpha = np.log(counts.c_wz.T + hp.phi[None, :])
        m_beta = np.log(counts.c_zd + hp.lam[:, None])
        b = np.log(counts.c_dot_z + hp.phi_bar)
    if (np.isneginf(m_alpha).any() or np.isneginf(m_beta).any()
            or np.isneginf(b).any()):
        raise DomainError("zero count with zero prior gives log(0); "
                          "use a positive prior or nonzero counts")
    return NetworkWeights(m_alpha, m_beta, b)


def spikecgs_decode(weights, hp):
    """Invert :func:`spikecgs_init`, recovering real-valued count tables."""
    c_wz = np.exp(weights.m_alpha).T - hp.phi[:, None]
    c_zd = np.exp(weights.m_beta) - hp.lam[:, None]
    c_dot_z = np.exp(weights.b) - hp.phi_bar
    return c_wz, c_zd, c_dot_z


def spikecgs_conditional(weights, w, d):
    """Resampling distribution read off the weights:
    p(z) ~ exp(m_alpha[z,w] + m_beta[z,d] - b[z])."""
    return softmax(potentials(weights, w, d, use_self_excitation=True))


def spikecgs_step(weights, corpus, z, hp, rng, position=None):
    """One token event: negative phase (tau1 on the old topic's three
    synapses), race resample with self-excitation, positive phase (tau2
    on the winner's synapses).  Returns the resampled topic."""
    if position is None:
        position = int(rng.integers(corpus.total_tokens))
    w = int(corpus.token_words[position])
    d = int(corpus.token_docs[position])
    zo = int(z[position])
    weights.m_alpha[zo, w] = tau1(weights.m_alpha[zo, w])
    weights.m_beta[zo, d] = tau1(weights.m_beta[zo, d])
    weights.b[zo] = tau1(weights.b[zo])
    zn = race_sample(potentials(weights, w, d, use_self_excitation=True), rng)
    weights.m_alpha[zn, w] = tau2(weights.m_alpha[zn, w])
    weights.m_beta[zn, d] = tau2(weights.m_beta[zn, d])
    weights.b[zn] = tau2(weights.b[zn])
    z[position] = zn
    return zn


def spikecgs_train(corpus, hp, sweeps, rng, scan="systematic", callback=None,
                   use_fast=True):
    """Full training loop: random assignments, weight encoding, then
    ``sweeps`` passes of token events.  Returns (weights, assignments)."""
    counts = CountTables.random_init(corpus, hp.K, rng)
    weights = spikecgs_init(counts, hp)
    z = counts.z
    n = corpus.total_tokens
    fast = use_fast and _fast.HAVE_NUMBA
    for s in range(sweeps):
        order = _scan_order(corpus, rng, n, scan)
        if fast:
            _fast.spikecgs_loop(weights.m_alpha, weights.m_beta, weights.b, z,
                                corpus.token_words, corpus.token_docs,
                                np.ascontiguousarray(order, dtype=np.int64),
                                rng)
        else:
            for i in order:
                spikecgs_step(weights, corpus, z, hp, rng, position=int(i))
        if callback is not None:
            callback(s, weights, z)
    return weights, z


# ---------------------------------------------------------------------------
# Semi-collapsed sweeps over a document minibatch (fixed word-side weights)
# ---------------------------------------------------------------------------


@dataclass
class MinibatchStats:
    """Topic/word co-occurrence statistics harvested from the second half
    of the semi-collapsed sweeps: ``n_zw`` (K, V) and its row sums
    ``n_z``, over ``sweeps`` kept passes and ``batch_size`` documents."""

    n_zw: np.ndarray
    n_z: np.ndarray
    batch_size: int
    sweeps: int

    def check(self):
        if not np.array_equal(self.n_zw.sum(axis=1), self.n_z):
            raise InvariantError("n_z != row sums of n_zw")


def semi_cgs_document(m_alpha, tokens, lam, T, rng, n_zw, use_fast=True):
    """2T semi-collapsed sweeps over one document, accumulating the last
    T sweeps' assignments into ``n_zw``.  The document column weights
    encode log(count + lam) and are updated via tau1/tau2 around a race
    draw on m_alpha[:, w] + m_beta column."""
    K = m_alpha.shape[0]
    z = rng.integers(K, size=tokens.size)
    counts = np.bincount(z, minlength=K)
    m_col = np.log(counts + lam)
    if use_fast and _fast.HAVE_NUMBA:
        _fast.semi_doc_loop(np.ascontiguousarray(m_alpha), tokens, z, m_col,
                            T, n_zw, rng)
        return m_col
    for s in range(2 * T):
        keep = s >= T
        for i in range(tokens.size):
            w = int(tokens[i])
            zo = int(z[i])
            m_col[zo] = tau1(m_col[zo])
            u = m_alpha[:, w] + m_col
            zn = race_sample(u, rng)
            m_col[zn] = tau2(m_col[zn])
            z[i] = zn
            if keep:
                n_zw[zn, w] += 1
    return m_col


def semi_cgs_minibatch(m_alpha, corpus, doc_ids, lam, T, rng):
    """Run independent semi-collapsed chains over a document minibatch.

    ``m_alpha`` is a frozen snapshot of the word-side weights; it is not
    required to be normalized (the sampler only reads the potentials).
    Each document owns its column state and its own child RNG stream, so
    the documents could be processed in any order or in parallel.
    """
    if T < 1:
        raise ConfigError(f"semi-collapsed sweep count T must be >= 1, got {T}")
    K, V = m_alpha.shape
    n_zw = np.zeros((K, V), dtype=np.int64)
    streams = rng.spawn(len(doc_ids))
    for d, sub in zip(doc_ids, streams):
        tokens = corpus.doc_tokens(int(d))
        if tokens.size == 0:
            continue
        semi_cgs_document(m_alpha, tokens, lam, T, sub, n_zw)
    return MinibatchStats(n_zw, n_zw.sum(axis=1), len(doc_ids), T)
