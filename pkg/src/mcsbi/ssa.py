"""Gillespie simulation and statistical checking of until properties.

Trajectories are sampled with the direct method in a numba kernel. Each
trajectory ``k`` of a run with master seed ``s`` draws from its own PCG64
generator seeded by child ``k`` of ``SeedSequence(s)``, so results do not depend on the order in
which trajectories are produced.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.stats import norm

from .errors import PropensityError
from .model import ReactionNetwork
from .properties import PathFormula, RegionSet, evaluate, integer_dnf, rewrite_to_until

SEED_ENV = "MCSBI_SEED"

UNDETERMINED, SATISFIED, FALSIFIED = 0, 1, 2
_OUTCOME_NAMES = {UNDETERMINED: "undetermined", SATISFIED: "satisfied", FALSIFIED: "falsified"}


def resolve_seed(seed: int | None = None) -> int:
    """Explicit seed, else the ``MCSBI_SEED`` environment variable, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def trajectory_rng(master: int, index: int) -> np.random.Generator:
    """Generator for trajectory ``index``: child ``index`` of ``SeedSequence(master)``."""
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=(int(index),)))


# -- array encodings for the kernels ------------------------------------------


def _poly_src(poly) -> str:
    terms = []
    for key, c in sorted(poly.items()):
        terms.append("*".join([repr(float(c))] + [f"x[{v}]" for v, p in key for _ in range(p)]))
    return " + ".join(terms) if terms else "0.0"


def _network_key(network: ReactionNetwork):
    return tuple((r.propensity, tuple(int(v) for v in r.change_vector)) for r in network.reactions)


@lru_cache(maxsize=32)
def _kernels(key):
    """Compile ``init(x, a)`` and ``fire(r, x, a)`` for one network.

    ``fire`` applies reaction ``r`` and recomputes only the propensities that
    read a species it changed. Both return False when a recomputed
    propensity is negative or not finite.
    """
    reads = [set(poly.variables()) for poly, _ in key]
    lines = ["def init(x, a):"]
    for q, (poly, _) in enumerate(key):
        lines.append(f"    a[{q}] = {_poly_src(poly)}")
    checks = " and ".join(f"(0.0 <= a[{q}] < inf)" for q in range(len(key))) or "True"
    lines.append(f"    return {checks}")
    lines.append("def fire(r, x, a):")
    for r, (_, change) in enumerate(key):
        lines.append(f"    {'if' if r == 0 else 'elif'} r == {r}:")
        changed = {i for i, v in enumerate(change) if v}
        body = [f"x[{i}] += {v}" for i, v in enumerate(change) if v]
        deps = [q for q, used in enumerate(reads) if used & changed]
        body += [f"a[{q}] = {_poly_src(key[q][0])}" for q in deps]
        cond = " and ".join(f"(0.0 <= a[{q}] < inf)" for q in deps) or "True"
        body.append(f"return {cond}")
        lines.extend("        " + line for line in body)
    lines.append("    return True")
    namespace = {"inf": math.inf}
    exec(compile("\n".join(lines), "<ssa-kernels>", "exec"), namespace)
    return numba.njit(namespace["init"]), numba.njit(namespace["fire"])


def _dnf_args(formula, n):
    d = integer_dnf(formula, n)
    return d.coefficients, d.comparators, d.bounds, d.clauses


def _touches(stoich, *dnfs):
    """Per reaction: does firing it change a species read by the formulae?"""
    read = np.zeros(stoich.shape[1], dtype=bool)
    for coef, _, _, clauses in dnfs:
        used = np.unique(np.abs(clauses[clauses != 0])) - 1
        if used.size:
            read |= np.any(coef[used] != 0.0, axis=0)
    return np.any((stoich != 0) & read, axis=1)


@numba.njit(cache=True)
def _dnf_holds(x, coef, cmp, bound, clauses):
    for k in range(clauses.shape[0]):
        ok = True
        for j in range(clauses.shape[1]):
            lit = clauses[k, j]
            if lit == 0:
                continue
            a = abs(lit) - 1
            val = 0.0
            for i in range(x.size):
                val += coef[a, i] * x[i]
            c = cmp[a]
            b = bound[a]
            if c == 0:
                truth = val < b
            elif c == 1:
                truth = val <= b
            elif c == 2:
                truth = val > b
            elif c == 3:
                truth = val >= b
            else:
                truth = val == b
            if truth != (lit > 0):
                ok = False
                break
        if ok:
            return True
    return False


@numba.njit(cache=True)
def _classify(x, c1, m1, b1, k1, c2, m2, b2, k2):
    if _dnf_holds(x, c2, m2, b2, k2):
        return 1
    if not _dnf_holds(x, c1, m1, b1, k1):
        return 2
    return 0


@numba.njit(cache=True)
def _pick(rng, a, total):
    u = rng.random() * total
    n_r = a.size
    r = 0
    acc = a[0]
    while acc <= u and r < n_r - 1:
        r += 1
        acc += a[r]
    while a[r] == 0.0:
        r -= 1
    return r


@numba.njit
def _until_one(rng, x0, n_r, init, fire, touches, t_end, c1, m1, b1, k1, c2, m2, b2, k2, bad_state):
    """One trajectory, stopped once the property is decided or at ``t_end``.

    Returns ``(status, time, events, ok)``; ``ok`` is False when a propensity
    became negative or non-finite (the state is written to ``bad_state``).
    """
    a = np.empty(n_r)
    x = x0.copy()
    t = 0.0
    n_ev = 0
    status = _classify(x, c1, m1, b1, k1, c2, m2, b2, k2)
    if status == 0 and not init(x, a):
        bad_state[:] = x
        return status, t, n_ev, False
    while status == 0:
        total = 0.0
        for r in range(n_r):
            total += a[r]
        if total <= 0.0:
            break
        t += rng.standard_exponential() / total
        if t > t_end:
            break
        r = _pick(rng, a, total)
        ok = fire(r, x, a)
        n_ev += 1
        if not ok:
            bad_state[:] = x
            return status, t, n_ev, False
        if touches[r]:
            status = _classify(x, c1, m1, b1, k1, c2, m2, b2, k2)
    return status, (t if status != 0 else np.inf), n_ev, True


@numba.njit
def _state_at(rng, x0, n_r, init, fire, t_end, bad_state):
    a = np.empty(n_r)
    x = x0.copy()
    t = 0.0
    if not init(x, a):
        bad_state[:] = x
        return x, False
    while True:
        total = 0.0
        for r in range(n_r):
            total += a[r]
        if total <= 0.0:
            break
        t += rng.standard_exponential() / total
        if t > t_end:
            break
        r = _pick(rng, a, total)
        if not fire(r, x, a):
            bad_state[:] = x
            return x, False
    return x, True


@numba.njit
def _path(rng, x0, n_r, init, fire, t_end, max_events, bad_state):
    a = np.empty(n_r)
    cap = 1024
    times = np.empty(cap)
    states = np.empty((cap, x0.size), dtype=np.int64)
    times[0] = 0.0
    states[0] = x0
    count = 1
    x = x0.copy()
    t = 0.0
    if not init(x, a):
        bad_state[:] = x
        return times[:count], states[:count], -1
    while count <= max_events:
        total = 0.0
        for r in range(n_r):
            total += a[r]
        if total <= 0.0:
            break
        t += rng.standard_exponential() / total
        if t > t_end:
            break
        r = _pick(rng, a, total)
        ok = fire(r, x, a)
        if count == cap:
            cap *= 2
            nt = np.empty(cap)
            ns = np.empty((cap, x0.size), dtype=np.int64)
            nt[:count] = times[:count]
            ns[:count] = states[:count]
            times, states = nt, ns
        times[count] = t
        states[count] = x
        count += 1
        if not ok:
            bad_state[:] = x
            return times[:count], states[:count], -1
    return times[:count], states[:count], 0 if count <= max_events else 1


# -- public API ----------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant sample path: ``states[k]`` holds on ``[times[k], times[k+1])``.

    ``t_end`` closes the last segment.
    """

    times: np.ndarray
    states: np.ndarray
    t_end: float
    species: tuple = ()

    def state_at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[max(k, 0)]

    def time_average(self, t0: float, t1: float) -> np.ndarray:
        """Time-weighted mean state over ``[t0, t1]`` (within ``[0, t_end]``)."""
        if not 0.0 <= t0 < t1 <= self.t_end:
            raise ValueError("need 0 <= t0 < t1 <= t_end")
        edges = np.append(self.times, self.t_end)
        lo = np.clip(edges[:-1], t0, t1)
        hi = np.clip(edges[1:], t0, t1)
        return (hi - lo) @ self.states / (t1 - t0)


def simulate(network: ReactionNetwork, t_end: float, seed: int | None = None, *,
             max_events: int = 50_000_000) -> Trajectory:
    """Exact CTMC sample path on ``[0, t_end]`` (direct method).

    The path for ``seed`` uses the same random stream as trajectory 0 of
    :func:`estimate_cdf` with the same master seed.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    x0 = np.asarray(network.x0, dtype=np.int64)
    init, fire = _kernels(_network_key(network))
    bad = np.zeros_like(x0)
    times, states, code = _path(trajectory_rng(resolve_seed(seed), 0), x0, network.n_reactions,
                                init, fire, float(t_end), max_events, bad)
    if code == -1:
        raise PropensityError(f"propensity negative or non-finite in state {tuple(bad)}")
    if code == 1:
        raise RuntimeError(f"trajectory exceeded {max_events} events before t={t_end}")
    return Trajectory(times.copy(), states.copy(), float(t_end), tuple(network.species))


def sample_states(network: ReactionNetwork, t: float, n_samples: int, seed: int | None = None) -> np.ndarray:
    """States at time ``t`` of ``n_samples`` independent paths, shape ``(n_samples, n_species)``.

    Path ``k`` uses the same random stream as trajectory ``k`` elsewhere.
    """
    if not t >= 0:
        raise ValueError("t must be non-negative")
    x0 = np.asarray(network.x0, dtype=np.int64)
    init, fire = _kernels(_network_key(network))
    master = resolve_seed(seed)
    bad = np.zeros_like(x0)
    out = np.empty((n_samples, x0.size), dtype=np.int64)
    for k in range(n_samples):
        x, ok = _state_at(trajectory_rng(master, k), x0, network.n_reactions, init, fire, float(t), bad)
        if not ok:
            raise PropensityError(f"trajectory {k}: propensity negative or non-finite in state {tuple(bad)}")
        out[k] = x
    return out


@dataclass(frozen=True)
class Outcome:
    """Result of monitoring one path: ``kind`` is satisfied, falsified or undetermined."""

    kind: str
    time: float

    @property
    def satisfied(self) -> bool:
        return self.kind == "satisfied"


def _phis(spec):
    if isinstance(spec, RegionSet):
        return spec.phi1, spec.phi2
    if isinstance(spec, PathFormula):
        f = rewrite_to_until(spec)
        return f.left, f.right
    phi1, phi2 = spec
    return phi1, phi2


def monitor_until(trajectory: Trajectory, regions) -> Outcome:
    """Decide ``phi1 U phi2`` on a sampled path with integer semantics.

    ``regions`` is a :class:`RegionSet`, a :class:`PathFormula` or a pair
    ``(phi1, phi2)`` of state formulae. Only the state sequence and jump
    times are used; the path's own horizon bounds the check.
    """
    phi1, phi2 = _phis(regions)
    for t, x in zip(trajectory.times, trajectory.states):
        if t > trajectory.t_end:
            break
        if evaluate(phi2, x):
            return Outcome("satisfied", float(t))
        if not evaluate(phi1, x):
            return Outcome("falsified", float(t))
    return Outcome("undetermined", float(trajectory.t_end))


@dataclass(frozen=True)
class UntilSamples:
    """Raw per-trajectory outcomes of a statistical check."""

    outcome: np.ndarray
    time: np.ndarray
    events: np.ndarray
    horizon: float
    seed: int


def sample_until(network: ReactionNetwork, formula: PathFormula, n_samples: int,
                 seed: int | None = None, *, horizon: float | None = None) -> UntilSamples:
    """Simulate ``n_samples`` paths, each stopped once the until formula is decided."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    f = rewrite_to_until(formula)
    horizon = f.horizon if horizon is None else float(horizon)
    n = network.n_species
    x0 = np.asarray(network.x0, dtype=np.int64)
    stoich = np.array([r.change_vector for r in network.reactions], dtype=np.int64).reshape(-1, n)
    init, fire = _kernels(_network_key(network))
    master = resolve_seed(seed)
    outcome = np.zeros(n_samples, dtype=np.int64)
    when = np.full(n_samples, np.inf)
    events = np.zeros(n_samples, dtype=np.int64)
    bad = np.zeros(n, dtype=np.int64)
    phi1, phi2 = _dnf_args(f.left, n), _dnf_args(f.right, n)
    touches = _touches(stoich, phi1, phi2)
    for k in range(n_samples):
        status, t, n_ev, ok = _until_one(trajectory_rng(master, k), x0, network.n_reactions, init, fire,
                                         touches, horizon, *phi1, *phi2, bad)
        if not ok:
            raise PropensityError(f"trajectory {k}: propensity negative or non-finite in state {tuple(bad)}")
        outcome[k], when[k], events[k] = status, t, n_ev
    return UntilSamples(outcome, when, events, horizon, master)


@dataclass(frozen=True)
class EmpiricalCdf:
    """Monte Carlo first-passage CDF with a normal-approximation interval.

    ``half_width`` is ``z * sqrt(p (1 - p) / n)`` maximised over the grid,
    with ``p`` kept at least ``1 / (2n)`` away from 0 and 1 so the width
    stays positive. ``absorb_fraction`` counts paths decided either way.
    """

    times: np.ndarray
    fraction: np.ndarray
    half_width: float
    level: float
    n_samples: int
    absorb_fraction: np.ndarray
    absorb_half_width: float
    negated: bool = False

    @property
    def cdf(self) -> np.ndarray:
        return self.fraction

    @property
    def satisfaction(self) -> np.ndarray:
        return 1.0 - self.fraction if self.negated else self.fraction

    @property
    def lower(self) -> np.ndarray:
        return np.clip(self.fraction - self.half_width, 0.0, 1.0)

    @property
    def upper(self) -> np.ndarray:
        return np.clip(self.fraction + self.half_width, 0.0, 1.0)


def ci_half_width(p, n: int, level: float) -> float:
    """Largest normal-approximation half-width over the proportions ``p``."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    z = float(norm.ppf(0.5 + level / 2.0))
    p = np.clip(np.asarray(p, dtype=float), 0.5 / n, 1.0 - 0.5 / n)
    return float(z * np.sqrt(p * (1.0 - p) / n).max())


def empirical_cdf(samples: UntilSamples, times, level: float = 0.99, negated: bool = False) -> EmpiricalCdf:
    times = np.asarray(getattr(times, "points", times), dtype=float)
    n = samples.outcome.size
    sat = np.sort(samples.time[samples.outcome == SATISFIED])
    dec = np.sort(samples.time[samples.outcome != UNDETERMINED])
    frac = np.searchsorted(sat, times, side="right") / n
    absorb = np.searchsorted(dec, times, side="right") / n
    return EmpiricalCdf(times, frac, ci_half_width(frac, n, level), level, n, absorb,
                        ci_half_width(absorb, n, level), negated)


def estimate_cdf(network: ReactionNetwork, formula: PathFormula, grid, n_samples: int = 1000,
                 level: float = 0.99, seed: int | None = None) -> EmpiricalCdf:
    """Fraction of sampled paths satisfying the until formula by each grid time."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    times = np.asarray(getattr(grid, "points", grid), dtype=float)
    f = rewrite_to_until(formula)
    samples = sample_until(network, f, n_samples, seed, horizon=float(times.max()))
    return empirical_cdf(samples, times, level, f.negated)


def outcome_name(code: int) -> str:
    return _OUTCOME_NAMES[int(code)]


def expected_half_width(p: float, n: int, level: float = 0.99) -> float:
    """``z * sqrt(p (1 - p) / n)`` for a single proportion."""
    return float(norm.ppf(0.5 + level / 2.0)) * math.sqrt(p * (1.0 - p) / n)
