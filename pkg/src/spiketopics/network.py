"""Network state and the shared sampling/arithmetic primitives.

All weights live in log space.  The topic layer input for a token (w, d)
is ``u_z = m_alpha[z, w] + m_beta[z, d]`` (minus ``b[z]`` when the
self-excitation terms are active), and topics are drawn with probability
proportional to ``exp(u_z)``: the first arrival among K independent
exponential clocks with those rates.  We draw the equivalent categorical
directly; a literal clock simulation is kept for equivalence testing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConsistencyError, DomainError

CHECKPOINT_MAGIC = b"SPKT"
CHECKPOINT_VERSION = 1


@dataclass
class Hyperparams:
    """Dirichlet hyperparameters: ``lam`` on the topic side (length K),
    ``phi`` on the word side (length V)."""

    lam: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.lam.ndim != 1 or self.phi.ndim != 1:
            raise ConsistencyError("hyperparameter vectors must be 1-D")
        if np.any(self.lam < 0) or np.any(self.phi < 0):
            raise ConsistencyError("hyperparameters must be nonnegative")

    @classmethod
    def symmetric(cls, num_topics, vocab_size, lam, phi):
        return cls(np.full(num_topics, float(lam)), np.full(vocab_size, float(phi)))

    @property
    def K(self):
        return self.lam.size

    @property
    def lam_bar(self):
        return float(self.lam.sum())

    @property
    def phi_bar(self):
        return float(self.phi.sum())

    @property
    def kappa(self):
        """Normalization constant for the document columns: sum_z (lam_z - 1)."""
        return float(np.sum(self.lam - 1.0))


class NetworkWeights:
    """Log-space weight matrices: ``m_alpha`` (K, V) word side, ``m_beta``
    (K, D) document side, optional self-excitation vector ``b`` (K,)."""

    def __init__(self, m_alpha, m_beta, b=None):
        self.m_alpha = np.asarray(m_alpha, dtype=float)
        self.m_beta = np.asarray(m_beta, dtype=float)
        self.b = None if b is None else np.asarray(b, dtype=float)
        if self.m_alpha.ndim != 2 or self.m_beta.ndim != 2:
            raise ConsistencyError("weight matrices must be 2-D")
        if self.m_alpha.shape[0] != self.m_beta.shape[0]:
            raise ConsistencyError("m_alpha and m_beta disagree on K")
        if self.b is not None and self.b.shape != (self.m_alpha.shape[0],):
            raise ConsistencyError("b must have shape (K,)")

    @property
    def K(self):
        return self.m_alpha.shape[0]

    @property
    def V(self):
        return self.m_alpha.shape[1]

    @property
    def D(self):
        return self.m_beta.shape[1]

    def copy(self):
        return NetworkWeights(
            self.m_alpha.copy(),
            self.m_beta.copy(),
            None if self.b is None else self.b.copy(),
        )

    def all_finite(self):
        ok = np.isfinite(self.m_alpha).all() and np.isfinite(self.m_beta).all()
        if self.b is not None:
            ok = ok and np.isfinite(self.b).all()
        return bool(ok)


def random_init(num_topics, vocab_size, num_docs, rng, plsi=False):
    """Fresh weights with every synapse drawn from Normal(1, 1); in pLSI
    mode the document columns start at log(1/K) instead."""
    m_alpha = rng.normal(1.0, 1.0, size=(num_topics, vocab_size))
    if plsi:
        m_beta = np.full((num_topics, num_docs), -np.log(num_topics))
    else:
        m_beta = rng.normal(1.0, 1.0, size=(num_topics, num_docs))
    return NetworkWeights(m_alpha, m_beta)


def potentials(weights, w, d, use_self_excitation=False):
    """Topic-layer inputs for a clamped token: one-hot dot products reduce
    to column indexing."""
    u = weights.m_alpha[:, w] + weights.m_beta[:, d]
    if use_self_excitation:
        if weights.b is None:
            raise DomainError("weights carry no self-excitation vector")
        u = u - weights.b
    return u


def softmax(u):
    """Normalized exp(u) with max subtraction; the shift leaves the
    distribution unchanged and prevents overflow."""
    u = np.asarray(u, dtype=float)
    p = np.exp(u - u.max())
    return p / p.sum()


def categorical(p, rng, size=None):
    """Inverse-CDF draw(s) from a normalized probability vector."""
    cdf = np.cumsum(p)
    if size is None:
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(idx, p.size - 1)
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return np.minimum(idx, p.size - 1)


def race_sample(u, rng, size=None):
    """Winner of the spiking race over rates exp(u): a draw from the
    softmax of ``u``.  ``size`` asks for a batch of independent draws."""
    u = np.asarray(u, dtype=float)
    if not np.isfinite(u).all():
        if np.isnan(u).any() or np.isposinf(u).any():
            raise DomainError("race potentials must be finite or -inf")
    return categorical(softmax(u), rng, size=size)


def race_sample_clocks(u, rng, size=None):
    """Literal first-arrival simulation of the race: K exponential clocks
    with rates exp(u - max u) (the common rescaling does not change which
    clock rings first).  Kept for distributional-equivalence tests only."""
    u = np.asarray(u, dtype=float)
    rates = np.exp(u - u.max())
    n = 1 if size is None else int(size)
    waits = rng.exponential(1.0, size=(n, u.size)) / rates
    winners = np.argmin(waits, axis=1)
    return int(winners[0]) if size is None else winners


def tau1(x):
    """Log-space decrement: log(exp(x) - 1).  Requires x > 0; violating
    this means eliminating a token whose stored count is already zero."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError(f"tau1 requires x > 0, got {x[x <= 0.0] if x.ndim else x}")
    # expm1 keeps precision near 0; the large-x branch avoids overflow.
    small = x < 30.0
    out = np.where(small, np.log(np.expm1(np.where(small, x, 1.0))),
                   x + np.log1p(-np.exp(-x)))
    return float(out) if out.ndim == 0 else out


def tau2(x):
    """Log-space increment: log(exp(x) + 1), stable for any real x."""
    x = np.asarray(x, dtype=float)
    out = np.logaddexp(0.0, x)
    return float(out) if out.ndim == 0 else out


def joint_density(weights, w, d, z):
    """Probability that word w and topic z co-activate given document d:
    exp(m_alpha[z,w] + m_beta[z,d] - A) where A is the log partition
    log(sum_w' exp m_alpha[z,w']) + log(sum_z' exp m_beta[z',d]).
    Sums to 1 over (w, z) for fixed d."""
    a = logsumexp(weights.m_alpha[z, :]) + logsumexp(weights.m_beta[:, d])
    return float(np.exp(weights.m_alpha[z, w] + weights.m_beta[z, d] - a))


def constraint_deviation(weights, kappa=1.0):
    """Deviation from the normalization targets: per-topic row sums of
    exp(m_alpha) minus 1, per-document column sums of exp(m_beta) minus
    ``kappa`` (1 in the no-prior mode)."""
    zeta_alpha = np.exp(weights.m_alpha).sum(axis=1) - 1.0
    zeta_beta = np.exp(weights.m_beta).sum(axis=0) - float(kappa)
    return zeta_alpha, zeta_beta


# ---------------------------------------------------------------------------
# Checkpoint container: versioned binary, byte-deterministic, bit-exact.
# Layout: magic, u32 version, u32 header length, JSON header, raw C-order
# float64 buffers in the order listed in the header.
# ---------------------------------------------------------------------------


def save_checkpoint(path, weights, hyperparams, mode, extra=None):
    """Write weights + hyperparameters to a binary container.

    The byte stream depends only on the arguments, so identical runs
    produce identical files (hashable determinism contract).
    """
    arrays = {"m_alpha": weights.m_alpha, "m_beta": weights.m_beta,
              "lam": hyperparams.lam, "phi": hyperparams.phi}
    if weights.b is not None:
        arrays["b"] = weights.b
    header = {
        "mode": mode,
        "K": weights.K,
        "V": weights.V,
        "D": weights.D,
        "arrays": {k: list(v.shape) for k, v in arrays.items()},
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (weights, hyperparams, mode, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ConsistencyError(f"not a checkpoint file: {path}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ConsistencyError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for name in sorted(header["arrays"]):
            shape = tuple(header["arrays"][name])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ConsistencyError("truncated checkpoint payload")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    weights = NetworkWeights(arrays["m_alpha"], arrays["m_beta"], arrays.get("b"))
    hp = Hyperparams(arrays["lam"], arrays["phi"])
    return weights, hp, header["mode"], header.get("extra", {})
