"""Fan-in-bounded network transform and training on the pruned structure.

Hardware with per-neuron fan-in limits (256 synapses) cannot hold one
synapse per vocabulary word and document.  The transform keeps an
individually adaptive synapse for each topic's strongest words, ties the
rest of the row to a single frozen synapse holding their pooled average
probability, keeps the busiest documents' columns resident, and parks
all other columns in a fixed-record file fetched per token.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantError, StoreError
from .evaluate import weights_to_model
from .network import race_sample
from .online import beta_col_delta_map, mode_kappa
from .schedules import VarianceTracking

logger = logging.getLogger(__name__)

FAN_IN_LIMIT = 256

STORE_MAGIC = b"SPKB"
STORE_VERSION = 1
_STORE_HEADER = struct.Struct("<4sIII")


class ExternalBetaStore:
    """Random-access file of per-document weight columns.

    Layout: magic, u32 version, u32 K, u32 D, then D records of K
    little-endian float64 values.  Header fields are validated on open.
    """

    def __init__(self, path, mode="r+b"):
        self._fh = open(path, mode)
        raw = self._fh.read(_STORE_HEADER.size)
        magic, version, self.K, self.D = _STORE_HEADER.unpack(raw)
        if magic != STORE_MAGIC or version != STORE_VERSION:
            raise StoreError(f"not a document store: {path}")
        self.path = path

    @classmethod
    def create(cls, path, m_beta):
        """Write all columns of ``m_beta`` (K, D) into a new store file."""
        K, D = m_beta.shape
        with open(path, "wb") as fh:
            fh.write(_STORE_HEADER.pack(STORE_MAGIC, STORE_VERSION, K, D))
            fh.write(np.ascontiguousarray(m_beta.T, dtype="<f8").tobytes())
        return cls(path)

    def _offset(self, d):
        if not (0 <= d < self.D):
            raise StoreError("document id outside store range", doc_id=d)
        return _STORE_HEADER.size + d * self.K * 8

    def read_col(self, d):
        try:
            self._fh.seek(self._offset(d))
            buf = self._fh.read(self.K * 8)
            if len(buf) != self.K * 8:
                raise StoreError("truncated record", doc_id=d)
            return np.frombuffer(buf, dtype="<f8").copy()
        except OSError as exc:
            raise StoreError(f"read failed: {exc}", doc_id=d) from exc

    def write_col(self, d, col):
        try:
            self._fh.seek(self._offset(d))
            self._fh.write(np.ascontiguousarray(col, dtype="<f8").tobytes())
        except OSError as exc:
            raise StoreError(f"write failed: {exc}", doc_id=d) from exc

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class PrunedNetwork:
    """Fan-in-bounded state: per topic, ``top_ids`` (K, n_top) word ids
    with adaptive weights ``top_weights`` (K, n_top) on the normalized
    log-probability scale, one frozen ``tied_weight`` per topic for the
    remaining words, resident document columns, and the store handle for
    the rest."""

    top_ids: np.ndarray
    top_weights: np.ndarray
    tied_weight: np.ndarray
    resident_ids: np.ndarray
    resident_cols: np.ndarray  # (K, n_resident)
    store: ExternalBetaStore | None
    vocab_size: int
    num_docs: int
    _resident_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._resident_index = {int(d): i for i, d in enumerate(self.resident_ids)}
        self._word_slots = {}
        for z in range(self.top_ids.shape[0]):
            for slot, w in enumerate(self.top_ids[z]):
                self._word_slots.setdefault(int(w), []).append((z, slot))
        self.check_fan_in()

    @property
    def K(self):
        return self.top_ids.shape[0]

    @property
    def n_top(self):
        return self.top_ids.shape[1]

    def fan_in(self):
        """Synapse count per topic neuron: adaptive words + tied + resident."""
        return self.n_top + 1 + self.resident_ids.size

    def check_fan_in(self):
        if self.fan_in() > FAN_IN_LIMIT:
            raise InvariantError(
                f"fan-in {self.fan_in()} exceeds the hardware limit {FAN_IN_LIMIT}")

    def word_potentials(self, w):
        """Per-topic weight of word w (adaptive synapse or tied)."""
        u = self.tied_weight.copy()
        for z, slot in self._word_slots.get(int(w), ()):
            u[z] = self.top_weights[z, slot]
        return u

    def word_slot(self, z, w):
        """Adaptive-synapse slot of word w in topic z's row, or None."""
        for zz, slot in self._word_slots.get(int(w), ()):
            if zz == z:
                return slot
        return None

    def beta_col(self, d):
        i = self._resident_index.get(int(d))
        if i is not None:
            return self.resident_cols[:, i], True
        if self.store is None:
            raise StoreError("no store attached for non-resident document",
                             doc_id=d)
        return self.store.read_col(int(d)), False

    def put_beta_col(self, d, col):
        i = self._resident_index.get(int(d))
        if i is not None:
            self.resident_cols[:, i] = col
        else:
            self.store.write_col(int(d), col)

    def dense_phi(self):
        """Decode the pruned topic/word matrix; rows sum to 1 because the
        tied synapse holds exactly the pooled leftover mass."""
        phi = np.tile(np.exp(self.tied_weight)[:, None], (1, self.vocab_size))
        for z in range(self.K):
            phi[z, self.top_ids[z]] = np.exp(self.top_weights[z])
        return phi


def prune(weights, corpus, top_words=200, resident_docs=50, store_path=None):
    """Tie low-relevance word synapses and evict infrequent documents.

    Selection: per topic, the ``top_words`` words with the largest
    decoded probability (ties broken by ascending word id) keep adaptive
    synapses holding log of that probability; the rest share one frozen
    synapse at log(p / (V - top_words)) where p is their pooled
    probability mass.  The ``resident_docs`` longest documents (ties by
    ascending id) stay resident; every column is also written to the
    external store so non-resident ones can be fetched per token.

    With ``V <= top_words`` pruning is a no-op: the input weights are
    returned unchanged with a warning.
    """
    V = weights.V
    if V <= top_words:
        logger.warning("vocabulary size %d <= top_words %d; pruning skipped",
                       V, top_words)
        return weights
    if top_words + 1 + resident_docs > FAN_IN_LIMIT:
        raise ConfigError(
            f"top_words + 1 + resident_docs = {top_words + 1 + resident_docs} "
            f"exceeds the fan-in limit {FAN_IN_LIMIT}")
    if resident_docs > weights.D:
        resident_docs = weights.D

    phi = weights_to_model(weights).phi
    K = weights.K
    top_ids = np.zeros((K, top_words), dtype=np.int64)
    top_w = np.zeros((K, top_words))
    tied = np.zeros(K)
    for z in range(K):
        order = np.lexsort((np.arange(V), -phi[z]))
        chosen = order[:top_words]
        top_ids[z] = chosen
        top_w[z] = np.log(phi[z, chosen])
        p = float(phi[z].sum() - phi[z, chosen].sum())
        p = max(p, 0.0)
        tied[z] = np.log(p / (V - top_words)) if p > 0 else -np.inf

    lengths = corpus.doc_lengths
    order = np.lexsort((np.arange(weights.D), -lengths))
    resident = np.sort(order[:resident_docs])
    store = None
    if store_path is not None:
        store = ExternalBetaStore.create(store_path, weights.m_beta)
    elif weights.D > resident_docs:
        raise ConfigError("store_path required when some documents are "
                          "non-resident")
    return PrunedNetwork(
        top_ids=top_ids,
        top_weights=top_w,
        tied_weight=tied,
        resident_ids=resident,
        resident_cols=weights.m_beta[:, resident].copy(),
        store=store,
        vocab_size=V,
        num_docs=weights.D,
    )


def continue_training_pruned(pruned, corpus, hp, schedule, iterations, rng,
                             report_every=0):
    """Event-driven training on the pruned structure.

    Tied synapses never move; each winning topic's adaptive word synapses
    take the usual row update restricted to their indices, and the
    observed document's column takes the full prior-regularized update,
    written back through the store when non-resident.
    """
    if isinstance(pruned, np.ndarray) or not isinstance(pruned, PrunedNetwork):
        raise ConfigError("continue_training_pruned needs a PrunedNetwork")
    kappa = mode_kappa("map", hp)
    tw, td = corpus.token_words, corpus.token_docs
    n = corpus.total_tokens
    lengths = corpus.doc_lengths
    tied_before = pruned.tied_weight.copy()
    shape_a = (pruned.K, pruned.n_top)
    shape_b = (pruned.K, pruned.num_docs)
    for t in range(iterations):
        i = int(rng.integers(n))
        w, d = int(tw[i]), int(td[i])
        col, resident = pruned.beta_col(d)
        u = pruned.word_potentials(w) + col
        z = race_sample(u, rng)

        row = pruned.top_weights[z]
        slot = pruned.word_slot(z, w)
        g_row = np.full(pruned.n_top, -1.0)
        if slot is not None:
            g_row[slot] += np.exp(-row[slot])
        eta_row = schedule.rate("alpha_top", shape_a, (z, slice(None)), g_row)
        pruned.top_weights[z] = row + eta_row * g_row
        if isinstance(schedule, VarianceTracking):
            schedule.observe("alpha_top", (z, slice(None)), pruned.top_weights[z])

        g_col = beta_col_delta_map(col, z, hp.lam, kappa, int(lengths[d]))
        eta_col = schedule.rate("beta", shape_b, (slice(None), d), g_col)
        new_col = col + eta_col * g_col
        pruned.put_beta_col(d, new_col)
        if isinstance(schedule, VarianceTracking):
            schedule.observe("beta", (slice(None), d), new_col)

        schedule.advance()
        if (t + 1) % n == 0:
            schedule.end_iteration()
        pruned.check_fan_in()
    if not np.array_equal(tied_before, pruned.tied_weight):
        raise InvariantError("tied synapses moved during pruned training")
    return pruned
