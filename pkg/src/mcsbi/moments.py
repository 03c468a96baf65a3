"""Normal moment closure of the chemical master equation.

The raw-moment identity ``d E[x^m]/dt = sum_r E[a_r(x) ((x + v_r)^m - x^m)]``
is expanded symbolically; raw moments of order three are then replaced by
their Gaussian values (third cumulants set to zero) and the result is
rewritten in mean/covariance coordinates. The closed field is compiled to a
numba kernel and integrated with an adaptive Dormand-Prince 5(4) pair.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .errors import IntegrationError, StiffnessError
from .gaussian import psd_repair
from .polynomial import Polynomial

INITIAL_VARIANCE = 1e-6


# -- moment symbols ----------------------------------------------------------


def cov_index(i: int, j: int, n: int) -> int:
    """Position of ``Sigma_ij`` in the packed state ``[mu, upper(Sigma)]``."""
    if i > j:
        i, j = j, i
    return n + i * n - i * (i - 1) // 2 + (j - i)


def packed_size(n: int) -> int:
    return n + n * (n + 1) // 2


def pack(mu, sigma) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = mu.size
    iu = np.triu_indices(n)
    return np.concatenate([mu, sigma[iu]])


def unpack(y, n: int):
    y = np.asarray(y, dtype=float)
    mu = y[:n].copy()
    sigma = np.zeros((n, n))
    iu = np.triu_indices(n)
    sigma[iu] = y[n:]
    sigma = sigma + sigma.T - np.diag(np.diag(sigma))
    return mu, sigma


def moment_symbol_names(species) -> list[str]:
    n = len(species)
    names = [f"mu_{s}" for s in species]
    for i in range(n):
        for j in range(i, n):
            names.append(f"Sigma_{species[i]}_{species[j]}")
    return names


# -- raw moment equations ----------------------------------------------------


@dataclass(frozen=True)
class RawMomentEquations:
    """``d E[x^m]/dt`` as linear combinations of raw moments ``E[x^k]``.

    ``equations[m]`` maps each multi-index ``k`` to its coefficient; the zero
    multi-index stands for the constant ``E[1] = 1``.
    """

    n_species: int
    equations: dict
    species: tuple = ()

    @property
    def max_moment_order(self) -> int:
        return max((sum(k) for eq in self.equations.values() for k in eq), default=0)

    def to_text(self) -> str:
        names = self.species or tuple(f"x{i}" for i in range(self.n_species))
        lines = []
        for m, eq in self.equations.items():
            lhs = _moment_str(m, names)
            terms = [f"{c!r}*{_moment_str(k, names)}" if any(k) else repr(c) for k, c in eq.items()]
            lines.append(f"d {lhs}/dt = " + (" + ".join(terms) if terms else "0"))
        return "\n".join(lines).replace("+ -", "- ")


def _moment_str(k, names):
    factors = []
    for i, p in enumerate(k):
        if p:
            factors.append(names[i] if p == 1 else f"{names[i]}^{p}")
    return "E[" + "*".join(factors) + "]" if factors else "1"


def _multi_indices(n: int, max_order: int):
    out = []
    for order in range(1, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(n), order):
            m = [0] * n
            for i in combo:
                m[i] += 1
            out.append(tuple(m))
    return out


def raw_moment_equations(network, max_order: int = 2) -> RawMomentEquations:
    n = network.n_species
    xs = [Polynomial.variable(i) for i in range(n)]
    equations = {}
    for m in _multi_indices(n, max_order):
        xm = Polynomial.constant(1.0)
        for i, p in enumerate(m):
            xm = xm * xs[i] ** p
        total = Polynomial()
        for r in network.reactions:
            v = r.change_vector
            shifted = Polynomial.constant(1.0)
            for i, p in enumerate(m):
                if p:
                    shifted = shifted * (xs[i] + v[i]) ** p
            total = total + r.propensity * (shifted - xm)
        eq = {}
        for coef, exps in ((c, k) for k, c in total.items()):
            k = [0] * n
            for var, p in exps:
                k[var] = p
            eq[tuple(k)] = coef
        equations[m] = dict(sorted(eq.items(), key=lambda kv: (sum(kv[0]), kv[0])))
    return RawMomentEquations(n, equations, tuple(network.species))


# -- Gaussian closure ----------------------------------------------------------


@lru_cache(maxsize=None)
def _isserlis(indices: tuple, n: int) -> Polynomial:
    """``E[x_{i1} ... x_{ik}]`` for a Gaussian, as a polynomial in (mu, Sigma).

    Uses ``E[x_a f(x)] = mu_a E[f] + sum_b Sigma_ab E[d f / d x_b]``.
    """
    if not indices:
        return Polynomial.constant(1.0)
    a, rest = indices[0], indices[1:]
    result = Polynomial.variable(a) * _isserlis(rest, n)
    for j, b in enumerate(rest):
        reduced = rest[:j] + rest[j + 1:]
        result = result + Polynomial.variable(cov_index(a, b, n)) * _isserlis(reduced, n)
    return result


def gaussian_raw_moment(k, n: int) -> Polynomial:
    """Gaussian raw moment ``E[x^k]`` in packed (mu, Sigma) variables."""
    indices = tuple(i for i, p in enumerate(k) for _ in range(p))
    return _isserlis(indices, n)


@dataclass(frozen=True)
class MomentField:
    """Closed right-hand side for the mean vector and covariance matrix.

    Variables are the packed moments: index ``i < n`` is ``mu_i`` and
    ``cov_index(i, j, n)`` is ``Sigma_ij``.
    """

    n_species: int
    mean_rhs: tuple
    cov_rhs: dict
    species: tuple = ()
    _compiled: list = field(default_factory=list, repr=False, compare=False)

    @property
    def packed(self) -> list[Polynomial]:
        n = self.n_species
        out = list(self.mean_rhs)
        for i in range(n):
            for j in range(i, n):
                out.append(self.cov_rhs[(i, j)])
        return out

    def to_text(self) -> str:
        names = moment_symbol_names(self.species or tuple(f"x{i}" for i in range(self.n_species)))
        return "\n".join(f"d {name}/dt = {poly.to_str(names)}" for name, poly in zip(names, self.packed))

    def kernel(self):
        if not self._compiled:
            self._compiled.append(_compile_field(tuple(self.packed)))
        return self._compiled[0]


def normal_closure(raw: RawMomentEquations) -> MomentField:
    n = raw.n_species
    if raw.max_moment_order > 3:
        raise NotImplementedError(
            "normal closure is implemented for propensities of degree at most 2 "
            f"(equations reference moments of order {raw.max_moment_order})"
        )

    def closed(eq) -> Polynomial:
        out = Polynomial()
        for k, c in eq.items():
            out = out + c * gaussian_raw_moment(k, n)
        return out

    zero = Polynomial()
    unit = [tuple(1 if j == i else 0 for j in range(n)) for i in range(n)]
    mean_rhs = tuple(closed(raw.equations[e]) if e in raw.equations else zero for e in unit)
    mu = [Polynomial.variable(i) for i in range(n)]
    cov_rhs = {}
    for i in range(n):
        for j in range(i, n):
            m = [0] * n
            m[i] += 1
            m[j] += 1
            second = closed(raw.equations[tuple(m)])
            # d Sigma_ij = d E[x_i x_j] - mu_i d mu_j - mu_j d mu_i
            cov_rhs[(i, j)] = second - mu[i] * mean_rhs[j] - mu[j] * mean_rhs[i]
    return MomentField(n, mean_rhs, cov_rhs, raw.species)


def moment_field(network) -> MomentField:
    """Closed mean/covariance field of a network (normal closure, order 2)."""
    for r in network.reactions:
        if r.propensity.degree > 2:
            raise NotImplementedError(
                f"reaction {r.name!r} has a propensity of degree {r.propensity.degree}; "
                "normal closure supports degree at most 2"
            )
    return normal_closure(raw_moment_equations(network, 2))


# -- compiled evaluation -------------------------------------------------------


def _term_src(coef, exps):
    factors = [repr(coef)]
    for v, p in exps:
        factors.extend([f"y[{v}]"] * p)
    return "*".join(factors)


@lru_cache(maxsize=32)
def _compile_field(polys):
    lines = ["def rhs(y, out):"]
    for idx, poly in enumerate(polys):
        terms = [_term_src(c, k) for k, c in sorted(poly.items())]
        lines.append(f"    out[{idx}] = " + (" + ".join(terms) if terms else "0.0"))
    if len(lines) == 1:
        lines.append("    pass")
    namespace = {}
    exec(compile("\n".join(lines), "<moment-field>", "exec"), namespace)
    return numba.njit(cache=False)(namespace["rhs"])


# -- state and right-hand side -------------------------------------------------


@dataclass(frozen=True)
class MomentState:
    mu: np.ndarray
    sigma: np.ndarray
    time: float = 0.0

    @classmethod
    def deterministic(cls, x0, variance: float = INITIAL_VARIANCE, time: float = 0.0) -> "MomentState":
        x0 = np.asarray(x0, dtype=float)
        return cls(x0.copy(), variance * np.eye(x0.size), time)


def ode_rhs(field: MomentField, state: MomentState):
    n = field.n_species
    y = pack(state.mu, state.sigma)
    out = np.zeros_like(y)
    if y.size:
        field.kernel()(y, out)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite moment derivative at t={state.time} (mu={state.mu})")
    dmu, dsigma = unpack(out, n)
    return dmu, dsigma


# Dormand-Prince 5(4) coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@numba.njit(cache=False)
def _dopri(rhs, y0, t0, t1, rtol, atol, h0, hmin, max_step, max_steps, A, C, B5, E):
    n = y0.size
    y = y0.copy()
    t = t0
    k = np.zeros((7, n))
    ynew = np.empty(n)
    tmp = np.empty(n)
    span = t1 - t0
    if span <= 0.0:
        return y, h0, 0, 0
    h = min(h0, span, max_step)
    rhs(y, k[0])
    for i in range(n):
        if not np.isfinite(k[0, i]):
            return y, h, 0, 2
    steps = 0
    while t < t1:
        if steps >= max_steps:
            return y, h, steps, 3
        last = False
        if t + h >= t1 or t1 - (t + h) < 1e-12 * span:
            h = t1 - t
            last = True
        for s in range(1, 7):
            for i in range(n):
                acc = y[i]
                for j in range(s):
                    acc += h * A[s, j] * k[j, i]
                tmp[i] = acc
            rhs(tmp, k[s])
        for i in range(n):
            acc = y[i]
            for j in range(6):
                acc += h * B5[j] * k[j, i]
            ynew[i] = acc
        err = 0.0
        finite = True
        for i in range(n):
            e = 0.0
            for j in range(7):
                e += h * E[j] * k[j, i]
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e / sc) ** 2
            if not np.isfinite(ynew[i]):
                finite = False
        err = np.sqrt(err / max(n, 1))
        if finite and err <= 1.0:
            t = t1 if last else t + h
            for i in range(n):
                y[i] = ynew[i]
                k[0, i] = k[6, i]
            steps += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not last:
                h = min(h * fac, max_step)
            else:
                h = min(h0 if h0 > h else h * fac, max_step)
        else:
            if not finite:
                h *= 0.2
            else:
                h *= max(0.2, 0.9 * err ** -0.2)
            if h < hmin:
                return y, h, steps, 1
    return y, h, steps, 0


@dataclass
class Integrator:
    """Adaptive Dormand-Prince integration of a closed moment field.

    Keeps the last accepted step size between calls so a filter that
    integrates over many short intervals does not restart from scratch.
    """

    field: MomentField
    rtol: float = 1e-6
    atol: float = 1e-8
    max_step: float = math.inf
    max_steps: int = 10_000_000
    psd_floor: float = 1e-10
    _h: float = 0.0

    def __call__(self, state: MomentState, t_target: float) -> MomentState:
        return integrate(self.field, state, t_target, self.rtol, self.atol,
                         max_step=self.max_step, max_steps=self.max_steps,
                         psd_floor=self.psd_floor, _stepper=self)


def integrate(field: MomentField, state: MomentState, t_target: float, rtol: float = 1e-6,
              atol: float = 1e-8, *, max_step: float = math.inf, max_steps: int = 10_000_000,
              psd_floor: float = 1e-10, _stepper=None) -> MomentState:
    """Integrate the closed moments from ``state.time`` to ``t_target``."""
    t0 = float(state.time)
    if t_target < t0:
        raise ValueError("t_target must not precede the state time")
    if t_target == t0:
        return state
    n = field.n_species
    if n == 0:
        return MomentState(state.mu, state.sigma, t_target)
    span = t_target - t0
    h0 = _stepper._h if _stepper is not None and _stepper._h > 0 else span / 100.0
    y0 = pack(state.mu, state.sigma)
    y, h, steps, status = _dopri(
        field.kernel(), y0, t0, float(t_target), rtol, atol, h0, 1e-12 * span,
        max_step, max_steps, _A, _C, _B5, _E,
    )
    if status == 1:
        raise StiffnessError(
            f"step size fell below {1e-12 * span:.3g} between t={t0} and t={t_target}; "
            "the system looks stiff: loosen rtol/atol or cap the step with max_step"
        )
    if status == 2 or not np.all(np.isfinite(y)):
        raise IntegrationError(f"non-finite moments while integrating from t={t0} to t={t_target}")
    if status == 3:
        raise IntegrationError(f"more than {max_steps} steps between t={t0} and t={t_target}")
    if _stepper is not None:
        _stepper._h = h
    mu, sigma = unpack(y, n)
    return MomentState(mu, psd_repair(sigma, psd_floor), float(t_target))


def moment_trajectory(field: MomentField, state: MomentState, times, rtol: float = 1e-6,
                      atol: float = 1e-8, *, max_step: float = math.inf):
    """Unconditioned moments at each of ``times`` (non-decreasing, from ``state.time``).

    Returns ``(mu, sigma)`` with shapes ``(T, n)`` and ``(T, n, n)``.
    """
    times = np.asarray(times, dtype=float)
    n = field.n_species
    mus = np.zeros((times.size, n))
    sigmas = np.zeros((times.size, n, n))
    integ = Integrator(field, rtol=rtol, atol=atol, max_step=max_step)
    for k, t in enumerate(times):
        state = integ(state, float(t))
        mus[k], sigmas[k] = state.mu, state.sigma
    return mus, sigmas
