"""Step-size schedules for the online learning rules.

Every policy answers ``rate(key, shape, idx, g)``: the step size(s) to
apply to the update direction ``g`` about to be added at ``idx`` within
the parameter group ``key`` of full shape ``shape``.  Scalar policies
ignore the group; per-synapse policies keep state arrays per group.

``advance()`` marks one token/minibatch event, ``end_iteration()`` marks
one full pass over the data (the hook the step-amplification trick uses).
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError


class StepSchedule:
    """Base class; concrete policies override :meth:`rate`."""

    def rate(self, key, shape, idx, g):
        raise NotImplementedError

    def advance(self):
        pass

    def end_iteration(self):
        pass


class RobbinsMonro(StepSchedule):
    """eta_t = a * (1 + t/b) ** (-c).

    With 0.5 < c <= 1 the sequence sums to infinity while its squares
    sum finitely, which is what the stochastic-approximation convergence
    argument needs.  ``max_step`` optionally rescales the whole incoming
    direction so no single entry moves further than that bound; the
    rescaling is a positive scalar per event, so the update direction
    and the fixed points are untouched while the log-space rule's rare
    exp(-M)-sized spikes cannot poison a synapse.
    """

    def __init__(self, a=0.5, b=1000.0, c=0.7, max_step=None):
        if a <= 0 or b <= 0 or c < 0:
            raise ConfigError("robbins_monro requires a > 0, b > 0, c >= 0")
        self.a, self.b, self.c = float(a), float(b), float(c)
        self.max_step = None if max_step is None else float(max_step)
        self.t = 0

    def current(self):
        return self.a * (1.0 + self.t / self.b) ** (-self.c)

    def rate(self, key, shape, idx, g):
        eta = self.current()
        if self.max_step is not None:
            peak = float(np.abs(g).max())
            if peak * eta > self.max_step:
                eta = self.max_step / peak
        return eta

    def advance(self):
        self.t += 1


class Constant(StepSchedule):
    def __init__(self, eta0=0.1, max_step=None):
        if eta0 <= 0:
            raise ConfigError("constant step size must be positive")
        self.eta0 = float(eta0)
        self.max_step = None if max_step is None else float(max_step)

    def rate(self, key, shape, idx, g):
        eta = self.eta0
        if self.max_step is not None:
            peak = float(np.abs(g).max())
            if peak * eta > self.max_step:
                eta = self.max_step / peak
        return eta


class RmsProp(StepSchedule):
    """Root-mean-square scaling: eta / (sqrt(ms) + eps) with ms an
    exponential moving average of g**2 per synapse."""

    def __init__(self, eta=0.5, decay=0.9, eps=1e-8):
        if eta <= 0 or not (0.0 < decay < 1.0) or eps <= 0:
            raise ConfigError("rmsprop requires eta > 0, 0 < decay < 1, eps > 0")
        self.eta, self.decay, self.eps = float(eta), float(decay), float(eps)
        self._ms = {}

    def rate(self, key, shape, idx, g):
        ms = self._ms.get(key)
        if ms is None:
            ms = np.zeros(shape, dtype=float)
            self._ms[key] = ms
        ms[idx] = self.decay * ms[idx] + (1.0 - self.decay) * np.square(g)
        return self.eta / (np.sqrt(ms[idx]) + self.eps)


class AdaGrad(StepSchedule):
    """Accumulated-square scaling with an end-of-pass amplification:
    the effective step is multiplied by ``amplify_c`` after every full
    pass to counter the usual annealing of the accumulated denominator."""

    def __init__(self, eta=0.1, amplify_c=1.0, eps=1e-8):
        if eta <= 0 or amplify_c <= 0 or eps <= 0:
            raise ConfigError("adagrad requires eta > 0, amplify_c > 0, eps > 0")
        self.eta, self.amplify_c, self.eps = float(eta), float(amplify_c), float(eps)
        self.amp = 1.0
        self._acc = {}

    def rate(self, key, shape, idx, g):
        acc = self._acc.get(key)
        if acc is None:
            acc = np.zeros(shape, dtype=float)
            self._acc[key] = acc
        acc[idx] = acc[idx] + np.square(g)
        return self.amp * self.eta / (np.sqrt(acc[idx]) + self.eps)

    def end_iteration(self):
        self.amp *= self.amplify_c


class VarianceTracking(StepSchedule):
    """Per-synapse eta = clip(Var[M] / (E[g^2] + eps), eta_min, eta_max).

    One concrete reading of variance-based step control: both statistics
    are exponentially weighted with decay 1 - 1/window; Var[M] tracks the
    wandering of the parameter itself (drifting synapses keep learning),
    E[g^2] tracks the raw squared update direction (spiky directions get
    damped).  The direction statistic is refreshed with the incoming g
    *before* the rate is computed, so a single huge direction cannot
    produce a huge step.  The prior variance starts at 1, matching the
    unit-variance random initialization of the weights.
    """

    def __init__(self, window=200.0, eps=1e-8, eta_min=1e-4, eta_max=0.1):
        if window <= 1 or eps <= 0 or not (0 < eta_min <= eta_max):
            raise ConfigError("variance_tracking misconfigured")
        self.decay = 1.0 - 1.0 / float(window)
        self.eps = float(eps)
        self.eta_min, self.eta_max = float(eta_min), float(eta_max)
        self._mean = {}
        self._sq = {}
        self._dsq = {}

    def rate(self, key, shape, idx, g):
        d = self.decay
        for store, fill in ((self._mean, 0.0), (self._sq, 1.0), (self._dsq, 1.0)):
            if key not in store or store[key].shape != tuple(shape):
                store[key] = np.full(shape, fill, dtype=float)
        self._dsq[key][idx] = d * self._dsq[key][idx] + (1 - d) * np.square(g)
        var = np.maximum(self._sq[key][idx] - np.square(self._mean[key][idx]),
                         0.0)
        eta = np.clip(var / (self._dsq[key][idx] + self.eps),
                      self.eta_min, self.eta_max)
        return eta

    def observe(self, key, idx, m_values):
        """Feed the post-update parameter values backing Var[M]."""
        d = self.decay
        self._mean[key][idx] = d * self._mean[key][idx] + (1 - d) * m_values
        self._sq[key][idx] = d * self._sq[key][idx] + (1 - d) * np.square(m_values)


_SPEC_RE = re.compile(r"^(?P<name>[a-z_]+)(?::(?P<args>.*))?$")


def make_schedule(spec):
    """Build a schedule from a compact string, e.g. ``rm:a=0.5,b=1000,c=0.7``,
    ``rmsprop:eta=0.5``, ``adagrad:eta=0.1,amplify_c=2``, ``const:eta0=0.05``,
    ``vt:window=200``."""
    if isinstance(spec, StepSchedule):
        return spec
    m = _SPEC_RE.match(spec.strip())
    if not m:
        raise ConfigError(f"cannot parse schedule spec {spec!r}")
    name = m.group("name")
    kwargs = {}
    if m.group("args"):
        for part in m.group("args").split(","):
            if not part.strip():
                continue
            k, _, v = part.partition("=")
            kwargs[k.strip()] = float(v)
    table = {
        "rm": RobbinsMonro, "robbins_monro": RobbinsMonro,
        "rmsprop": RmsProp, "rmsp": RmsProp,
        "adagrad": AdaGrad,
        "const": Constant, "constant": Constant,
        "vt": VarianceTracking, "variance_tracking": VarianceTracking,
    }
    if name not in table:
        raise ConfigError(f"unknown schedule policy {name!r}")
    try:
        return table[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad arguments for schedule {name!r}: {exc}") from exc
