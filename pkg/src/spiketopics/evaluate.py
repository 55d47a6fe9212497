"""Decoding weights into topic-model parameters and scoring them.

Evaluation contract shared by every algorithm: decode a row-stochastic
topic/word matrix, infer each test document's mixture on the observed
half of its tokens with the topic/word matrix frozen (fold-in), then
report exp of the negative mean log predictive probability of the
holdout half.  Lower is better; a uniform model scores exactly V.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConsistencyError
from .network import categorical

logger = logging.getLogger(__name__)


@dataclass
class DenseTopicModel:
    """Row-stochastic parameters: ``phi`` (K, V) topics over words,
    ``theta`` (D, K) documents over topics."""

    phi: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        for name, m, axis in (("phi", self.phi, 1), ("theta", self.theta, 1)):
            if m.size and (np.any(m < 0)
                           or np.abs(m.sum(axis=axis) - 1.0).max() > 1e-9):
                raise ConsistencyError(f"{name} rows must be nonnegative and sum to 1")


def _normalize_log_rows(m):
    m = m - m.max(axis=1, keepdims=True)
    e = np.exp(m)
    return e / e.sum(axis=1, keepdims=True)


def weights_to_model(weights, hp=None, mode="table1c"):
    """Decode log-space weights into (phi, theta).

    All decode modes normalize exp of the stored matrices; they differ
    only in what the weights encode (smoothed counts for the sampler
    modes, parameters directly for the optimizer modes), and that
    encoding already carries the smoothing, so a single normalization
    covers table1b, table1c and table1d.
    """
    if mode not in ("table1b", "table1c", "table1d"):
        raise ConfigError(f"unknown decode mode {mode!r}")
    if not weights.all_finite():
        raise ConfigError("cannot decode non-finite weights")
    phi = _normalize_log_rows(weights.m_alpha)
    if weights.m_beta.shape[1]:
        theta = _normalize_log_rows(weights.m_beta.T)
    else:
        theta = np.zeros((0, weights.K))
    return DenseTopicModel(phi, theta)


def counts_to_model(counts, hp):
    """Smoothed-count decode for the plain collapsed sampler:
    phi[z,w] ~ c_wz[w,z] + phi_w, theta[d,z] ~ c_zd[z,d] + lam_z."""
    phi = counts.c_wz.T + hp.phi[None, :]
    phi = phi / phi.sum(axis=1, keepdims=True)
    theta = counts.c_zd.T + hp.lam[None, :]
    theta = theta / theta.sum(axis=1, keepdims=True)
    return DenseTopicModel(phi, theta)


def fold_in_theta(phi, observed_doc, lam, sweeps=200, rng=None, average=False):
    """Infer one document's topic mixture from its observed tokens.

    Runs semi-collapsed Gibbs with ``phi`` frozen: each token's topic is
    resampled from p(z) ~ phi[z, w] * (c_d[z] + lam_z) with the token
    removed from the document counts.  The returned estimate is
    (c_d + lam) / (N_d + lam_bar) from the final sweep (one-sample
    contract); ``average=True`` averages the estimate over the second
    half of the sweeps instead.

    ``observed_doc`` is a (words, counts) pair; empty documents raise.
    """
    phi = np.asarray(phi, dtype=float)
    K = phi.shape[0]
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (K,):
        raise ConsistencyError("lam must have one entry per topic")
    words, mults = observed_doc
    tokens = np.repeat(np.asarray(words, dtype=np.int64),
                       np.asarray(mults, dtype=np.int64))
    if tokens.size == 0:
        raise ConfigError("cannot fold in an empty observed half")
    if rng is None:
        rng = np.random.default_rng()
    if K == 1:
        return np.ones(1)
    z = rng.integers(K, size=tokens.size)
    c = np.bincount(z, minlength=K).astype(float)
    lam_bar = lam.sum()
    n = tokens.size
    acc = np.zeros(K)
    kept = 0
    burn = sweeps // 2
    for s in range(sweeps):
        for i in range(n):
            w = int(tokens[i])
            c[z[i]] -= 1.0
            p = phi[:, w] * (c + lam)
            total = p.sum()
            if total <= 0:
                # the observed word has zero mass under every topic;
                # fall back to the prior weights alone
                p = c + lam
                total = p.sum()
            zn = categorical(p / total, rng)
            c[zn] += 1.0
            z[i] = zn
        if average and s >= burn:
            acc += (c + lam) / (n + lam_bar)
            kept += 1
    if average and kept:
        return acc / kept
    return (c + lam) / (n + lam_bar)


def fold_in_corpus(phi, observed, lam, sweeps=200, rng=None, average=False):
    """Fold in every document of an observed-half corpus; returns (D, K)."""
    thetas = np.zeros((observed.num_docs, phi.shape[0]))
    for d in range(observed.num_docs):
        thetas[d] = fold_in_theta(phi, observed.docs[d], lam,
                                  sweeps=sweeps, rng=rng, average=average)
    return thetas


def perplexity(phi, thetas, holdout):
    """exp of the negative mean log predictive probability of the holdout
    tokens, p(w | d) = theta_d . phi[:, w].

    A holdout token with zero predictive probability yields +inf and a
    logged diagnostic naming the (doc, word) pair.
    """
    phi = np.asarray(phi, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if thetas.shape[0] != holdout.num_docs:
        raise ConsistencyError("theta row count != holdout document count")
    total = 0.0
    n = 0
    for d in range(holdout.num_docs):
        words, counts = holdout.docs[d]
        if words.size == 0:
            continue
        p = thetas[d] @ phi[:, words]
        if np.any(p <= 0.0):
            bad = words[p <= 0.0]
            logger.warning("zero predictive probability for doc %d word(s) %s",
                           d, bad.tolist())
            return float("inf")
        total += float(np.dot(counts, np.log(p)))
        n += int(counts.sum())
    if n == 0:
        raise ConfigError("holdout corpus has no tokens")
    return float(np.exp(-total / n))


def export_features(thetas, out, labels=None):
    """Write sparse 'label idx:val ...' lines (1-based indices, zeros
    omitted, deterministic order)."""
    thetas = np.asarray(thetas, dtype=float)
    if labels is None:
        labels = np.zeros(thetas.shape[0], dtype=int)
    labels = np.asarray(labels)
    if labels.shape[0] != thetas.shape[0]:
        raise ConsistencyError(
            f"{labels.shape[0]} labels for {thetas.shape[0]} documents")
    for d in range(thetas.shape[0]):
        cells = [f"{k + 1}:{thetas[d, k]:.6g}"
                 for k in range(thetas.shape[1]) if thetas[d, k] != 0.0]
        out.write(f"{labels[d]} " + " ".join(cells) + "\n")


def read_features(stream, num_topics):
    """Parse the sparse feature format back into (labels, thetas)."""
    labels, rows = [], []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        labels.append(parts[0])
        row = np.zeros(num_topics)
        for cell in parts[1:]:
            idx, _, val = cell.partition(":")
            row[int(idx) - 1] = float(val)
        rows.append(row)
    return labels, np.array(rows)


def best_permutation_cosine(phi_est, phi_true):
    """Mean cosine similarity between estimated and planted topics under
    the best topic permutation (exhaustive over K! for small K)."""
    from itertools import permutations

    a = np.asarray(phi_est, dtype=float)
    b = np.asarray(phi_true, dtype=float)
    if a.shape != b.shape:
        raise ConsistencyError("topic matrices differ in shape")
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    sim = an @ bn.T
    best = -np.inf
    for perm in permutations(range(a.shape[0])):
        best = max(best, float(np.mean(sim[list(perm), range(a.shape[0])])))
    return best
