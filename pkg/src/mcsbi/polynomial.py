"""Sparse multivariate polynomials with real coefficients.

Variables are referred to by integer index. The same type carries reaction
propensities (variables are species) and closed moment equations (variables
are mean and covariance entries).
"""
from __future__ import annotations

import math
from typing import Iterable, Mapping, NamedTuple, Sequence

Exponents = tuple  # tuple[tuple[int, int], ...], sorted by variable index


class Monomial(NamedTuple):
    coefficient: float
    exponents: Exponents

    @property
    def degree(self) -> int:
        return sum(p for _, p in self.exponents)

    def as_dict(self) -> dict[int, int]:
        return dict(self.exponents)


def _key(exponents: Mapping[int, int] | Iterable[tuple[int, int]]) -> Exponents:
    items = exponents.items() if isinstance(exponents, Mapping) else exponents
    merged: dict[int, int] = {}
    for var, power in items:
        if power < 0:
            raise ValueError(f"negative exponent {power} for variable {var}")
        if power:
            merged[int(var)] = merged.get(int(var), 0) + int(power)
    return tuple(sorted(merged.items()))


def _mul_keys(a: Exponents, b: Exponents) -> Exponents:
    if not a:
        return b
    if not b:
        return a
    merged = dict(a)
    for var, power in b:
        merged[var] = merged.get(var, 0) + power
    return tuple(sorted(merged.items()))


class Polynomial:
    """Immutable sparse polynomial.

    Terms are normalized on construction: equal exponent maps are merged and
    zero coefficients are dropped.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Exponents, float] | None = None):
        clean: dict[Exponents, float] = {}
        for key, coef in (terms or {}).items():
            coef = float(coef)
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient {coef}")
            key = _key(key)
            clean[key] = clean.get(key, 0.0) + coef
        self._terms = {k: c for k, c in clean.items() if c != 0.0}

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls({(): value})

    @classmethod
    def variable(cls, index: int, coefficient: float = 1.0) -> "Polynomial":
        return cls({((index, 1),): coefficient})

    @classmethod
    def from_monomials(cls, monomials: Iterable[Monomial]) -> "Polynomial":
        out: dict[Exponents, float] = {}
        for m in monomials:
            key = _key(m.exponents)
            out[key] = out.get(key, 0.0) + m.coefficient
        return cls(out)

    @property
    def terms(self) -> list[Monomial]:
        return [Monomial(c, k) for k, c in sorted(self._terms.items())]

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        return max((sum(p for _, p in k) for k in self._terms), default=0)

    def variables(self) -> set[int]:
        return {v for k in self._terms for v, _ in k}

    def coefficient(self, exponents: Mapping[int, int] | Exponents = ()) -> float:
        return self._terms.get(_key(exponents), 0.0)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other) -> "Polynomial":
        other = _coerce(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return _coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = _coerce(other)
        out: dict[Exponents, float] = {}
        for ka, ca in self._terms.items():
            for kb, cb in other._terms.items():
                k = _mul_keys(ka, kb)
                out[k] = out.get(k, 0.0) + ca * cb
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError("polynomial powers must be non-negative integers")
        result = Polynomial.constant(1.0)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def isclose(self, other: "Polynomial", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(
            math.isclose(self._terms.get(k, 0.0), other._terms.get(k, 0.0), rel_tol=rtol, abs_tol=atol)
            for k in keys
        )

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x: Sequence[float]) -> float:
        total = 0.0
        for k, c in self._terms.items():
            term = c
            for v, p in k:
                term *= x[v] ** p
            total += term
        return total

    def derivative(self, index: int) -> "Polynomial":
        out: dict[Exponents, float] = {}
        for k, c in self._terms.items():
            d = dict(k)
            p = d.get(index, 0)
            if p == 0:
                continue
            d[index] = p - 1
            kk = _key(d)
            out[kk] = out.get(kk, 0.0) + c * p
        return Polynomial(out)

    def substitute(self, mapping: Mapping[int, "Polynomial"]) -> "Polynomial":
        """Replace variables by polynomials; unmapped variables are kept."""
        result = Polynomial()
        for k, c in self._terms.items():
            term = Polynomial.constant(c)
            for v, p in k:
                factor = mapping.get(v)
                if factor is None:
                    factor = Polynomial.variable(v)
                term = term * factor ** p
            result = result + term
        return result

    def to_str(self, names: Sequence[str] | None = None) -> str:
        if not self._terms:
            return "0"
        parts = []
        for k, c in sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0])):
            factors = []
            for v, p in k:
                name = names[v] if names is not None else f"x{v}"
                factors.append(name if p == 1 else f"{name}^{p}")
            if not factors:
                parts.append(repr(c))
            elif c == 1.0:
                parts.append("*".join(factors))
            elif c == -1.0:
                parts.append("-" + "*".join(factors))
            else:
                parts.append(repr(c) + "*" + "*".join(factors))
        text = " + ".join(parts)
        return text.replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"Polynomial({self.to_str()})"


def _coerce(value) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    if isinstance(value, (int, float)):
        return Polynomial.constant(float(value))
    raise TypeError(f"cannot combine Polynomial with {type(value).__name__}")
