"""Online stochastic optimization of the log-space weights.

Three modes share one word-side rule and differ on the document side:

* ``plsi``  - no prior; both sides drift to their normalization targets
              (row sums of exp(m_alpha) to 1, column sums of exp(m_beta)
              to kappa = 1).
* ``map``   - a per-column product-of-Gammas prior with parameters lam;
              the column target becomes kappa = sum_z (lam_z - 1) > 0.
* ``semi``  - only the word side is optimized; the document side is
              handled by the semi-collapsed sampler and enters through
              harvested minibatch statistics.

For every stochastic rule the module also provides its exact mean
direction field under the empirical token distribution and the softmax
posterior, plus a forward-Euler integrator on that field.  The
deterministic limit is the testable object: deviations from the
normalization manifold shrink monotonically, the field equals the
natural gradient of the matching objective once on the manifold, and
closed-form stationary points zero it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _fast
from .errors import ConfigError, TrainingDiverged
from .gibbs import MinibatchStats, semi_cgs_minibatch
from .network import NetworkWeights, constraint_deviation, race_sample, random_init
from .schedules import (AdaGrad, Constant, RobbinsMonro, StepSchedule,
                        VarianceTracking)

MODES = ("plsi", "map", "semi")

# exact objectives are recorded only below this work bound (pairs * K)
OBJECTIVE_WORK_LIMIT = 500_000


def _check_mode(mode):
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")


def mode_kappa(mode, hp):
    """Column normalization target: 1 without a prior, sum(lam - 1) with."""
    if mode == "plsi":
        return 1.0
    kappa = hp.kappa
    if mode == "map" and kappa <= 0:
        raise ConfigError(
            f"document prior needs sum(lam - 1) > 0, got {kappa:.4g}; "
            "raise lam above 1 (the usual +1 offset)"
        )
    return kappa


# ---------------------------------------------------------------------------
# Single-token update rules
# ---------------------------------------------------------------------------


_EXP_ARG_MAX = 700.0  # exp saturates rather than overflowing to inf


def _exp_neg(m):
    return np.exp(np.minimum(-np.asarray(m, dtype=float), _EXP_ARG_MAX))


def alpha_row_delta(m_alpha_row, w):
    """Word-side direction for the winning topic row: the observed word's
    synapse moves by exp(-m) - 1, every other synapse in the row by -1."""
    d = np.full(m_alpha_row.shape, -1.0)
    d[w] += _exp_neg(m_alpha_row[w])
    return d


def beta_col_delta_map(m_beta_col, z, lam, kappa, n_d):
    """Document-side direction under the Gamma prior, applied to the whole
    column of the observed document:

        (1[z'=z] + (lam_z' - 1)/N_d) * exp(-m) - 1/kappa - 1/N_d
    """
    h = np.zeros(m_beta_col.shape)
    h[z] = 1.0
    return (h + (lam - 1.0) / n_d) * _exp_neg(m_beta_col) - 1.0 / kappa - 1.0 / n_d


def beta_col_delta_plsi(m_beta_col, z):
    """Document-side direction without a prior: winner moves by
    exp(-m) - 1, the rest of the column by -1."""
    h = np.zeros(m_beta_col.shape)
    h[z] = 1.0
    return h * _exp_neg(m_beta_col) - 1.0


def spikelda_update(weights, w, d, z, hp, eta, n_d, kappa=None):
    """Apply one event-driven step of the prior-regularized rule in place.

    ``eta`` is a scalar or a pair (eta_alpha, eta_beta); each element may
    itself be an array matching the touched row/column.
    """
    if kappa is None:
        kappa = mode_kappa("map", hp)
    if n_d < 1:
        raise ConfigError("document length must be >= 1")
    eta_a, eta_b = eta if isinstance(eta, tuple) else (eta, eta)
    weights.m_alpha[z] += eta_a * alpha_row_delta(weights.m_alpha[z], w)
    weights.m_beta[:, d] += eta_b * beta_col_delta_map(
        weights.m_beta[:, d], z, hp.lam, kappa, n_d)
    return weights


def spikeplsi_update(weights, w, d, z, eta):
    """Apply one event-driven step of the prior-free rule in place."""
    eta_a, eta_b = eta if isinstance(eta, tuple) else (eta, eta)
    weights.m_alpha[z] += eta_a * alpha_row_delta(weights.m_alpha[z], w)
    weights.m_beta[:, d] += eta_b * beta_col_delta_plsi(weights.m_beta[:, d], z)
    return weights


def du_update(weights, batch, hp, eta, mode="map"):
    """Delayed update: average the per-token directions of ``batch``
    (a list of (w, d, z, n_d) tuples), all evaluated at the incoming
    weights, then apply the mean once."""
    _check_mode(mode)
    if mode == "semi":
        raise ConfigError("delayed updates use mode 'map' or 'plsi'")
    if not batch:
        raise ConfigError("empty minibatch")
    kappa = mode_kappa(mode, hp)
    g_alpha = np.zeros_like(weights.m_alpha)
    g_beta = np.zeros_like(weights.m_beta)
    for w, d, z, n_d in batch:
        g_alpha[z] += alpha_row_delta(weights.m_alpha[z], w)
        if mode == "map":
            g_beta[:, d] += beta_col_delta_map(
                weights.m_beta[:, d], z, hp.lam, kappa, n_d)
        else:
            g_beta[:, d] += beta_col_delta_plsi(weights.m_beta[:, d], z)
    scale = 1.0 / len(batch)
    eta_a, eta_b = eta if isinstance(eta, tuple) else (eta, eta)
    weights.m_alpha += eta_a * scale * g_alpha
    weights.m_beta += eta_b * scale * g_beta
    return weights


def semi_update(m_alpha, stats: MinibatchStats, eta):
    """Word-side update from harvested minibatch statistics:

        m += eta / (batch * T) * (n_zw * exp(-m) - n_z)
    """
    scale = 1.0 / (stats.batch_size * stats.sweeps)
    g = scale * (stats.n_zw * np.exp(-m_alpha) - stats.n_z[:, None])
    m_alpha += eta * g
    return m_alpha


def gamma_prior_logdensity(m_beta_col, lam):
    """Unnormalized log density of one document column under independent
    Gammas on exp(m): sum_z (lam_z - 1) m_z - exp(m_z).  On the column
    manifold this matches the Dirichlet log density of the decoded
    mixture up to a constant."""
    m = np.asarray(m_beta_col, dtype=float)
    return float(np.sum((np.asarray(lam) - 1.0) * m - np.exp(m)))


def gamma_prior_grad(m_beta_col, lam):
    """Gradient of :func:`gamma_prior_logdensity` wrt the column."""
    m = np.asarray(m_beta_col, dtype=float)
    return np.asarray(lam) - 1.0 - np.exp(m)


# ---------------------------------------------------------------------------
# Exact mean direction fields and objectives
# ---------------------------------------------------------------------------


@dataclass
class UpdateField:
    """Direction field over the weight space; ``g_beta`` is None in the
    semi mode (document side not optimized)."""

    g_alpha: np.ndarray
    g_beta: np.ndarray | None


def posterior_token_q(weights, corpus):
    """Softmax posterior over topics for every distinct (word, doc) pair,
    shape (K, nnz), aligned with ``corpus.pairs()``."""
    ws, ds, _ = corpus.pairs()
    u = weights.m_alpha[:, ws] + weights.m_beta[:, ds]
    u -= u.max(axis=0, keepdims=True)
    q = np.exp(u)
    q /= q.sum(axis=0, keepdims=True)
    return q


def expected_update(weights, corpus, hp, mode, q=None):
    """Exact expectation of the stochastic update direction under the
    empirical token distribution and topic posterior ``q`` (defaults to
    the softmax posterior at the current weights).

    Intended for testing and integration on instances small enough for
    the nnz * K sweep.
    """
    _check_mode(mode)
    ws, ds, cs = corpus.pairs()
    n = corpus.total_tokens
    pi = cs / n
    if q is None:
        q = posterior_token_q(weights, corpus)
    qw = q * pi  # joint over (z, pair)

    K, V = weights.m_alpha.shape
    D = weights.m_beta.shape[1]
    joint_zw = np.zeros((K, V))
    np.add.at(joint_zw.T, ws, qw.T)
    p_z = joint_zw.sum(axis=1)
    g_alpha = np.exp(-weights.m_alpha) * joint_zw - p_z[:, None]

    if mode == "semi":
        return UpdateField(g_alpha, None)

    joint_zd = np.zeros((K, D))
    np.add.at(joint_zd.T, ds, qw.T)
    p_d = np.zeros(D)
    np.add.at(p_d, ds, pi)

    if mode == "plsi":
        g_beta = np.exp(-weights.m_beta) * joint_zd - p_d[None, :]
    else:
        kappa = mode_kappa("map", hp)
        n_d = np.maximum(corpus.doc_lengths, 1)
        boosted = joint_zd + p_d[None, :] * (hp.lam[:, None] - 1.0) / n_d[None, :]
        g_beta = (np.exp(-weights.m_beta) * boosted
                  - p_d[None, :] * (1.0 / kappa + 1.0 / n_d[None, :]))
    return UpdateField(g_alpha, g_beta)


def stationary_point(corpus, hp, mode, q):
    """Closed-form zero of the direction field for a fixed posterior ``q``
    (the field treats the topic-assignment distribution as stationary, so
    holding it fixed makes the stationary weights explicit).  The result
    lies exactly on the normalization manifold."""
    _check_mode(mode)
    ws, ds, cs = corpus.pairs()
    pi = cs / corpus.total_tokens
    qw = q * pi
    K = q.shape[0]
    V, D = corpus.vocab_size, corpus.num_docs

    joint_zw = np.zeros((K, V))
    np.add.at(joint_zw.T, ws, qw.T)
    p_z = joint_zw.sum(axis=1)
    if np.any(joint_zw <= 0):
        raise ConfigError("closed-form stationary point needs strictly "
                          "positive joint mass on every (z, w)")
    m_alpha = np.log(joint_zw / p_z[:, None])

    joint_zd = np.zeros((K, D))
    np.add.at(joint_zd.T, ds, qw.T)
    p_d = np.zeros(D)
    np.add.at(p_d, ds, pi)

    if mode == "semi":
        m_beta = np.zeros((K, D))
    elif mode == "plsi":
        if np.any(joint_zd <= 0):
            raise ConfigError("need positive joint mass on every (z, d)")
        m_beta = np.log(joint_zd / p_d[None, :])
    else:
        kappa = mode_kappa("map", hp)
        n_d = np.maximum(corpus.doc_lengths, 1)
        num = joint_zd + p_d[None, :] * (hp.lam[:, None] - 1.0) / n_d[None, :]
        den = p_d[None, :] * (1.0 / kappa + 1.0 / n_d[None, :])
        if np.any(num <= 0):
            raise ConfigError("need positive numerator mass on every (z, d)")
        m_beta = np.log(num / den)
    return NetworkWeights(m_alpha, m_beta)


def exact_objective(weights, corpus, hp, mode):
    """Exact value of the conceived objective.

    All modes share the marginal log-probability of the observed word
    given its document,
        E log sum_z exp(m_alpha[z,w] + m_beta[z,d] - A(z, d)),
    with the full log-partition A; ``map`` adds the per-document prior
    term weighted by 1/N_d.  In ``semi`` mode the document side is a
    frozen input, so the same expression serves with m_beta fixed.
    """
    _check_mode(mode)
    ws, ds, cs = corpus.pairs()
    pi = cs / corpus.total_tokens
    log_zeta_alpha = logsumexp(weights.m_alpha, axis=1)
    log_zeta_beta = logsumexp(weights.m_beta, axis=0)
    scores = (weights.m_alpha[:, ws] + weights.m_beta[:, ds]
              - log_zeta_alpha[:, None] - log_zeta_beta[ds][None, :])
    obj = float(np.dot(pi, logsumexp(scores, axis=0)))
    if mode == "map":
        p_d = np.zeros(corpus.num_docs)
        np.add.at(p_d, ds, pi)
        n_d = np.maximum(corpus.doc_lengths, 1)
        prior = np.array([gamma_prior_logdensity(weights.m_beta[:, d], hp.lam)
                          for d in range(corpus.num_docs)])
        obj += float(np.sum(p_d / n_d * prior))
    return obj


@dataclass
class OdeRecord:
    step: int
    max_zeta_alpha: float
    max_zeta_beta: float
    objective: float


def ode_integrate(weights0, corpus, hp, mode, dt=1e-2, steps=100,
                  record_every=1, blowup=1e8):
    """Forward-Euler integration of the mean direction field.

    Returns (weights, records); each record holds the largest constraint
    deviations and the exact objective.  Raises TrainingDiverged with the
    step index if the state leaves the finite range.
    """
    _check_mode(mode)
    w = weights0.copy()
    kappa = mode_kappa(mode, hp)
    records = []

    def snapshot(step):
        za, zb = constraint_deviation(w, kappa)
        records.append(OdeRecord(step, float(np.abs(za).max()),
                                 float(np.abs(zb).max()),
                                 exact_objective(w, corpus, hp, mode)))

    snapshot(0)
    for s in range(1, steps + 1):
        g = expected_update(w, corpus, hp, mode)
        w.m_alpha += dt * g.g_alpha
        if g.g_beta is not None:
            w.m_beta += dt * g.g_beta
        if (not np.isfinite(w.m_alpha).all()
                or not np.isfinite(w.m_beta).all()
                or np.abs(w.m_alpha).max() > blowup
                or np.abs(w.m_beta).max() > blowup):
            raise TrainingDiverged("integration blew up", step=s)
        if s % record_every == 0 or s == steps:
            snapshot(s)
    return w, records


# ---------------------------------------------------------------------------
# Stochastic trainers
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    iteration: int
    eta: float
    max_zeta_alpha: float
    max_zeta_beta: float
    objective: float | None
    wall_clock: float


@dataclass
class TrainResult:
    weights: NetworkWeights
    records: list = field(default_factory=list)


def _objective_if_small(weights, corpus, hp, mode):
    if corpus.nnz * weights.K <= OBJECTIVE_WORK_LIMIT:
        return exact_objective(weights, corpus, hp, mode)
    return None


def _record(records, weights, corpus, hp, mode, kappa, iteration, eta, t0):
    if not weights.all_finite():
        raise TrainingDiverged("non-finite weights", step=iteration)
    za, zb = constraint_deviation(weights, kappa)
    records.append(TrajectoryRecord(
        iteration, float(np.mean(eta)),
        float(np.abs(za).max()), float(np.abs(zb).max()),
        _objective_if_small(weights, corpus, hp, mode),
        time.perf_counter() - t0))


def _fast_schedule_spec(sched, key, shape):
    """Map a schedule object onto the jitted kinds; None when there is no
    jitted equivalent (falls back to the Python loop)."""
    inf = float("inf")
    if isinstance(sched, Constant):
        cap = inf if sched.max_step is None else sched.max_step
        return _fast.KIND_CONST, np.array([sched.eta0, cap]), np.zeros((1, 1))
    if isinstance(sched, RobbinsMonro):
        cap = inf if sched.max_step is None else sched.max_step
        return (_fast.KIND_POWER,
                np.array([sched.a, sched.b, sched.c, cap]), np.zeros((1, 1)))
    if isinstance(sched, AdaGrad):
        acc = sched._acc.get(key)
        if acc is None or acc.shape != tuple(shape):
            acc = np.zeros(shape, dtype=float)
            sched._acc[key] = acc
        return _fast.KIND_ACCUM, np.array([sched.eta, sched.amplify_c,
                                           sched.eps]), acc
    return None


def _ed_train_fast(corpus, hp, sched_a, sched_b, iterations, rng, mode,
                   weights, report_every, kappa):
    spec_a = _fast_schedule_spec(sched_a, "alpha", weights.m_alpha.shape)
    spec_b = _fast_schedule_spec(sched_b, "beta", weights.m_beta.shape)
    if spec_a is None or spec_b is None:
        return None
    kind_a, params_a, acc_a = spec_a
    kind_b, params_b, acc_b = spec_b
    tw, td = corpus.token_words, corpus.token_docs
    n = corpus.total_tokens
    records = []
    t0 = time.perf_counter()
    done = 0
    t_global = getattr(sched_a, "t", 0)
    while done < iterations:
        chunk = iterations - done
        if report_every:
            chunk = min(chunk, report_every)
        amp_a, amp_b, t_global = _fast.ed_loop(
            weights.m_alpha, weights.m_beta, tw, td, corpus.doc_lengths,
            hp.lam, kappa, mode == "plsi", chunk, t_global, n, rng,
            kind_a, params_a, acc_a, sched_a.amp if kind_a == _fast.KIND_ACCUM else 1.0,
            kind_b, params_b, acc_b, sched_b.amp if kind_b == _fast.KIND_ACCUM else 1.0)
        if kind_a == _fast.KIND_ACCUM:
            sched_a.amp = amp_a
        if kind_b == _fast.KIND_ACCUM:
            sched_b.amp = amp_b
        done += chunk
        for s in (sched_a, sched_b):
            if hasattr(s, "t"):
                s.t = t_global
        eta = sched_a.current() if isinstance(sched_a, RobbinsMonro) else (
            sched_a.eta0 if isinstance(sched_a, Constant) else sched_a.eta)
        if report_every or done == iterations:
            _record(records, weights, corpus, hp, mode, kappa, done, eta, t0)
    if not records:
        _record(records, weights, corpus, hp, mode, kappa, iterations, 0.0, t0)
    return TrainResult(weights, records)


def ed_train(corpus, hp, schedule, iterations, rng, mode="map",
             weights=None, report_every=0, schedule_beta=None,
             use_fast=True):
    """Event-driven training: one token, one race draw, one weight update.

    ``iterations`` counts token events.  Snapshots (constraint deviations
    and, on small instances, the exact objective) are appended every
    ``report_every`` events when positive, plus once at the end.  With
    numba available and a jit-supported schedule the inner loop runs
    compiled, drawing from ``rng`` in the same order as the Python loop.
    """
    _check_mode(mode)
    if mode == "semi":
        raise ConfigError("use semi_train for the minibatch learner")
    kappa = mode_kappa(mode, hp)
    if weights is None:
        weights = random_init(hp.K, corpus.vocab_size, corpus.num_docs, rng,
                              plsi=(mode == "plsi"))
    sched_a = schedule
    sched_b = schedule_beta if schedule_beta is not None else schedule
    if use_fast and _fast.HAVE_NUMBA and iterations:
        result = _ed_train_fast(corpus, hp, sched_a, sched_b, iterations, rng,
                                mode, weights, report_every, kappa)
        if result is not None:
            return result
    tw, td = corpus.token_words, corpus.token_docs
    n = corpus.total_tokens
    lengths = corpus.doc_lengths
    records = []
    t0 = time.perf_counter()
    last_eta = 0.0
    for t in range(iterations):
        i = int(rng.integers(n))
        w, d = int(tw[i]), int(td[i])
        u = weights.m_alpha[:, w] + weights.m_beta[:, d]
        z = race_sample(u, rng)

        row = weights.m_alpha[z]
        g_row = alpha_row_delta(row, w)
        eta_row = sched_a.rate("alpha", weights.m_alpha.shape, (z, slice(None)), g_row)
        row += eta_row * g_row
        if isinstance(sched_a, VarianceTracking):
            sched_a.observe("alpha", (z, slice(None)), row)

        col = weights.m_beta[:, d]
        if mode == "map":
            g_col = beta_col_delta_map(col, z, hp.lam, kappa, int(lengths[d]))
        else:
            g_col = beta_col_delta_plsi(col, z)
        eta_col = sched_b.rate("beta", weights.m_beta.shape, (slice(None), d), g_col)
        col += eta_col * g_col
        if isinstance(sched_b, VarianceTracking):
            sched_b.observe("beta", (slice(None), d), col)

        sched_a.advance()
        if sched_b is not sched_a:
            sched_b.advance()
        last_eta = float(np.mean(eta_row))
        if (t + 1) % n == 0:
            sched_a.end_iteration()
            if sched_b is not sched_a:
                sched_b.end_iteration()
        if report_every and (t + 1) % report_every == 0:
            _record(records, weights, corpus, hp, mode, kappa, t + 1, last_eta, t0)
    if not records or records[-1].iteration != iterations:
        _record(records, weights, corpus, hp, mode, kappa, iterations, last_eta, t0)
    return TrainResult(weights, records)


def du_train(corpus, hp, schedule, batches, batch_size, rng, mode="map",
             weights=None, report_every=0, schedule_beta=None):
    """Delayed-update training: infer a minibatch of token assignments
    against frozen weights, then apply the averaged direction once."""
    _check_mode(mode)
    if mode == "semi":
        raise ConfigError("use semi_train for the minibatch learner")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    kappa = mode_kappa(mode, hp)
    if weights is None:
        weights = random_init(hp.K, corpus.vocab_size, corpus.num_docs, rng,
                              plsi=(mode == "plsi"))
    sched_a = schedule
    sched_b = schedule_beta if schedule_beta is not None else schedule
    tw, td = corpus.token_words, corpus.token_docs
    n = corpus.total_tokens
    lengths = corpus.doc_lengths
    records = []
    t0 = time.perf_counter()
    last_eta = 0.0
    for t in range(batches):
        idx = rng.integers(n, size=batch_size)
        g_alpha = np.zeros_like(weights.m_alpha)
        g_beta = np.zeros_like(weights.m_beta)
        for i in idx:
            w, d = int(tw[i]), int(td[i])
            z = race_sample(weights.m_alpha[:, w] + weights.m_beta[:, d], rng)
            g_alpha[z] += alpha_row_delta(weights.m_alpha[z], w)
            if mode == "map":
                g_beta[:, d] += beta_col_delta_map(
                    weights.m_beta[:, d], z, hp.lam, kappa, int(lengths[d]))
            else:
                g_beta[:, d] += beta_col_delta_plsi(weights.m_beta[:, d], z)
        g_alpha /= batch_size
        g_beta /= batch_size
        all_idx = (slice(None), slice(None))
        eta_a = sched_a.rate("alpha", g_alpha.shape, all_idx, g_alpha)
        eta_b = sched_b.rate("beta", g_beta.shape, all_idx, g_beta)
        weights.m_alpha += eta_a * g_alpha
        weights.m_beta += eta_b * g_beta
        sched_a.advance()
        if sched_b is not sched_a:
            sched_b.advance()
        sched_a.end_iteration()
        if sched_b is not sched_a:
            sched_b.end_iteration()
        last_eta = float(np.mean(eta_a))
        if report_every and (t + 1) % report_every == 0:
            _record(records, weights, corpus, hp, mode, kappa, t + 1, last_eta, t0)
    if not records or records[-1].iteration != batches:
        _record(records, weights, corpus, hp, mode, kappa, batches, last_eta, t0)
    return TrainResult(weights, records)


def semi_train(corpus, hp, schedule, global_iters, batch_size, T, rng,
               m_alpha=None, report_every=0):
    """Minibatch training of the word-side weights: semi-collapsed sweeps
    harvest assignment statistics per document batch, then one averaged
    update is applied.  Returns a TrainResult whose weights carry an
    empty document side."""
    if batch_size < 1 or batch_size > corpus.num_docs:
        raise ConfigError(
            f"batch_size must be in [1, {corpus.num_docs}], got {batch_size}")
    if T < 1:
        raise ConfigError("T must be >= 1")
    if m_alpha is None:
        m_alpha = rng.normal(1.0, 1.0, size=(hp.K, corpus.vocab_size))
    records = []
    t0 = time.perf_counter()
    weights_view = NetworkWeights(m_alpha, np.zeros((hp.K, 0)))
    last_eta = 0.0
    for t in range(global_iters):
        docs = rng.choice(corpus.num_docs, size=batch_size, replace=False)
        stats = semi_cgs_minibatch(m_alpha, corpus, docs, hp.lam, T, rng)
        scale = 1.0 / (stats.batch_size * stats.sweeps)
        g = scale * (stats.n_zw * np.exp(-m_alpha) - stats.n_z[:, None])
        eta = schedule.rate("alpha", m_alpha.shape, (slice(None), slice(None)), g)
        m_alpha += eta * g
        schedule.advance()
        schedule.end_iteration()
        last_eta = float(np.mean(eta))
        if report_every and (t + 1) % report_every == 0:
            _semi_record(records, weights_view, t + 1, last_eta, t0)
    if not records or records[-1].iteration != global_iters:
        _semi_record(records, weights_view, global_iters, last_eta, t0)
    return TrainResult(weights_view, records)


def _semi_record(records, weights, iteration, eta, t0):
    if not np.isfinite(weights.m_alpha).all():
        raise TrainingDiverged("non-finite weights", step=iteration)
    za = np.abs(np.exp(weights.m_alpha).sum(axis=1) - 1.0).max()
    records.append(TrajectoryRecord(iteration, eta, float(za), 0.0, None,
                                    time.perf_counter() - t0))
