"""Exact transient analysis of small reaction networks.

The reachable state space is enumerated breadth-first, the generator is
assembled as a sparse matrix and the master equation is solved by
uniformisation. For until properties the target and false states are made
absorbing and their probability masses are tracked separately.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.stats import poisson

from .errors import StateSpaceError
from .model import ReactionNetwork
from .properties import And, Not, PathFormula, evaluate, rewrite_to_until

STATE_CAP = 100_000
LEAK_WARN = 1e-9


class TruncationWarning(UserWarning):
    """Probability mass left the truncated state space."""


@dataclass(frozen=True)
class CmeOracle:
    """Enumerated CTMC.

    Attributes
    ----------
    states : ndarray of int, shape (n_states, n_species)
    Q : scipy.sparse.csr_matrix
        Generator restricted to the enumerated states. Rows of absorbing
        states are zero; rows of boundary states lose their outflow past the
        bound (so they may sum to a negative number).
    absorbing : ndarray of bool
    target, false_region : ndarray of bool
    n_transitions : int
        Distinct positive-rate transitions plus one self-loop per deadlock
        state, the convention of explicit-state model checkers.
    """

    states: np.ndarray
    Q: sp.csr_matrix
    absorbing: np.ndarray
    target: np.ndarray
    false_region: np.ndarray
    n_transitions: int

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def index(self, state) -> int:
        hits = np.flatnonzero(np.all(self.states == np.asarray(state), axis=1))
        if hits.size == 0:
            raise KeyError(f"state {tuple(state)} not enumerated")
        return int(hits[0])

    def initial_distribution(self, x0) -> np.ndarray:
        p = np.zeros(self.n_states)
        p[self.index(x0)] = 1.0
        return p

    def mean(self, p) -> np.ndarray:
        return p @ self.states

    def covariance(self, p) -> np.ndarray:
        m = self.mean(p)
        d = self.states - m
        return (d * p[:, None]).T @ d


def build_oracle(network: ReactionNetwork, *, target=None, false_region=None,
                 state_bound=None, cap: int = STATE_CAP) -> CmeOracle:
    """Enumerate states reachable from the initial state.

    ``target`` and ``false_region`` are state formulae (or ``None``); their
    states are absorbing and are not expanded. ``state_bound`` caps every
    species count (scalar or per species); transitions past it are dropped.
    """
    n = network.n_species
    x0 = tuple(int(v) for v in network.x0)
    stoich = [np.asarray(r.change_vector, dtype=np.int64) for r in network.reactions]
    props = [r.propensity for r in network.reactions]
    bound = None
    if state_bound is not None:
        bound = np.broadcast_to(np.asarray(state_bound, dtype=np.int64), (n,))

    def classify(s):
        t = target is not None and evaluate(target, s)
        f = (not t) and false_region is not None and evaluate(false_region, s)
        return t, f

    index = {x0: 0}
    states = [x0]
    flags = [classify(x0)]
    rows, cols, vals = [], [], []
    exit_rate = []
    pairs = 0
    deadlocks = 0
    queue = deque([0])
    while queue:
        i = queue.popleft()
        s = states[i]
        if flags[i][0] or flags[i][1]:
            exit_rate.append(0.0)
            continue
        sv = np.array(s, dtype=np.int64)
        out = {}
        total = 0.0
        for v, a in zip(stoich, props):
            rate = a(sv)
            if rate <= 0.0:
                continue
            nxt = sv + v
            if np.any(nxt < 0):
                raise StateSpaceError(f"reaction drives state {s} negative")
            total += rate
            if bound is not None and np.any(nxt > bound):
                continue
            key = tuple(int(c) for c in nxt)
            if key == s:
                total -= rate
                continue
            j = index.get(key)
            if j is None:
                if len(states) >= cap:
                    raise StateSpaceError(f"state space exceeds the cap of {cap} states")
                j = len(states)
                index[key] = j
                states.append(key)
                flags.append(classify(key))
                queue.append(j)
            out[j] = out.get(j, 0.0) + rate
        pairs += len(out)
        if not out:
            deadlocks += 1
        for j, rate in out.items():
            rows.append(i)
            cols.append(j)
            vals.append(rate)
        exit_rate.append(total)
    m = len(states)
    # exit rates are recorded in queue order, which matches index order
    diag = np.array(exit_rate)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(m, m)) - sp.diags(diag, format="csr")
    fl = np.array(flags, dtype=bool).reshape(m, 2)
    return CmeOracle(
        states=np.array(states, dtype=np.int64).reshape(m, n),
        Q=Q.tocsr(),
        absorbing=fl[:, 0] | fl[:, 1],
        target=fl[:, 0],
        false_region=fl[:, 1],
        n_transitions=pairs + deadlocks,
    )


def _uniformised_step(P_T, rate, p, dt, eps=1e-14):
    """``p exp(Q dt)`` with ``P = I + Q / rate``; ``P_T`` is its transpose."""
    lam = rate * dt
    if lam == 0.0:
        return p.copy()
    lo = int(poisson.ppf(eps / 2, lam))
    hi = int(poisson.isf(eps / 2, lam)) + 1
    weights = poisson.pmf(np.arange(lo, hi + 1), lam)
    v = p.copy()
    for _ in range(lo):
        v = P_T @ v
    acc = weights[0] * v
    for w in weights[1:]:
        v = P_T @ v
        acc += w * v
    return acc


def transient(oracle: CmeOracle, p0, times, method: str = "uniformisation") -> np.ndarray:
    """Distributions at increasing ``times`` (first row for ``times[0]`` from time 0)."""
    times = np.asarray(times, dtype=float)
    out = np.zeros((times.size, oracle.n_states))
    p = np.asarray(p0, dtype=float).copy()
    QT = oracle.Q.T.tocsr()
    rate = float(max(-oracle.Q.diagonal().min(), 0.0)) * 1.02
    if method == "uniformisation" and rate > 0:
        P_T = (sp.identity(oracle.n_states, format="csr") + QT / rate).tocsr()
    t_prev = 0.0
    for k, t in enumerate(times):
        dt = t - t_prev
        if dt < 0:
            raise ValueError("times must be non-decreasing and start at or after 0")
        if dt > 0 and rate > 0:
            if method == "uniformisation":
                p = _uniformised_step(P_T, rate, p, dt)
            elif method == "expm":
                p = expm_multiply(QT * dt, p)
            else:
                raise ValueError(f"unknown transient method {method!r}")
        out[k] = p
        t_prev = t
    return out


@dataclass
class ExactCdf:
    """Exact first-passage CDF of an until property.

    ``cdf`` is the mass absorbed in target states, ``false_cdf`` the mass in
    false states, ``undetermined`` the mass still in ``C`` and ``leak`` the
    mass lost through the truncation bound.
    """

    times: np.ndarray
    cdf: np.ndarray
    false_cdf: np.ndarray
    undetermined: np.ndarray
    leak: np.ndarray
    n_states: int
    n_transitions: int
    negated: bool = False

    @property
    def absorb_cdf(self) -> np.ndarray:
        return self.cdf + self.false_cdf

    @property
    def satisfaction(self) -> np.ndarray:
        return 1.0 - self.cdf if self.negated else self.cdf


def exact_cme_cdf(network: ReactionNetwork, formula: PathFormula, times, *, state_bound=None,
                  cap: int = STATE_CAP, method: str = "uniformisation") -> ExactCdf:
    """Exact CDF of the first time ``formula`` is satisfied, at ``times``.

    Integer semantics throughout. ``times`` may be a ``Grid`` or an array.
    """
    formula = rewrite_to_until(formula)
    times = np.asarray(getattr(times, "points", times), dtype=float)
    phi1, phi2 = formula.left, formula.right
    oracle = build_oracle(network, target=phi2, false_region=And(Not(phi1), Not(phi2)),
                          state_bound=state_bound, cap=cap)
    dists = transient(oracle, oracle.initial_distribution(network.x0), times, method)
    cdf = dists[:, oracle.target].sum(axis=1)
    false_cdf = dists[:, oracle.false_region].sum(axis=1)
    undetermined = dists[:, ~oracle.absorbing].sum(axis=1)
    leak = np.maximum(1.0 - dists.sum(axis=1), 0.0)
    if leak.max() > LEAK_WARN:
        warnings.warn(f"{leak.max():.3g} probability mass left the truncated state space",
                      TruncationWarning, stacklevel=2)
    return ExactCdf(times, np.minimum(cdf, 1.0), false_cdf, undetermined, leak,
                    oracle.n_states, oracle.n_transitions, formula.negated)


def state_space_size(network: ReactionNetwork, *, state_bound=None, cap: int = STATE_CAP):
    """``(n_states, n_transitions)`` of the full reachable chain, nothing absorbing."""
    o = build_oracle(network, state_bound=state_bound, cap=cap)
    return o.n_states, o.n_transitions


def poisson_truncation(lam: float, eps: float = 1e-14) -> tuple[int, int]:
    """Left and right truncation points holding all but ``eps`` of Poisson(lam)."""
    if lam <= 0:
        return 0, 0
    return int(poisson.ppf(eps / 2, lam)), int(math.ceil(poisson.isf(eps / 2, lam))) + 1
