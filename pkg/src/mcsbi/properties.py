"""Time-bounded CSL path formulae and their region compilation.

State formulae are boolean trees over linear atomic propositions
``a . x <cmp> c``. For the Gaussian filter each formula is compiled into a
*signed polytope list*: a sequence of ``(sign, polytope)`` pairs whose signed
indicator sum equals the formula's indicator pointwise. Integer thresholds
are mapped to half-integer boundaries so that every integer state sits in
the middle of its unit cell.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import PropertySyntaxError, RegionLimitError

COMPARATORS = ("<", "<=", ">", ">=", "=")
_NEGATED_CMP = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}


# -- state formula AST -------------------------------------------------------


class StateFormula:
    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class TT(StateFormula):
    def __repr__(self):
        return "tt"


@dataclass(frozen=True)
class FF(StateFormula):
    def __repr__(self):
        return "ff"


@dataclass(frozen=True)
class AtomicProp(StateFormula):
    coefficients: tuple[float, ...]
    comparator: str
    bound: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if not any(self.coefficients):
            raise ValueError("atomic proposition needs a nonzero coefficient")
        if not math.isfinite(self.bound):
            raise ValueError("atomic proposition bound must be finite")

    def holds(self, state) -> bool:
        value = float(np.dot(self.coefficients, state))
        c = self.bound
        return {
            "<": value < c,
            "<=": value <= c,
            ">": value > c,
            ">=": value >= c,
            "=": value == c,
        }[self.comparator]

    def __repr__(self):
        return f"({_linexpr_str(self.coefficients)} {self.comparator} {self.bound:g})"


@dataclass(frozen=True)
class Not(StateFormula):
    child: StateFormula

    def __repr__(self):
        return f"!{self.child!r}"


@dataclass(frozen=True)
class And(StateFormula):
    left: StateFormula
    right: StateFormula

    def __repr__(self):
        return f"({self.left!r} & {self.right!r})"


@dataclass(frozen=True)
class Or(StateFormula):
    left: StateFormula
    right: StateFormula

    def __repr__(self):
        return f"({self.left!r} | {self.right!r})"


def _linexpr_str(coefficients, names=None):
    parts = []
    for i, a in enumerate(coefficients):
        if a == 0:
            continue
        name = names[i] if names else f"x{i}"
        mag = abs(a)
        term = name if mag == 1 else f"{mag:g}*{name}"
        parts.append(("- " if a < 0 else "+ ") + term)
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def evaluate(formula: StateFormula, state) -> bool:
    """Exact integer-state semantics of a state formula."""
    if isinstance(formula, TT):
        return True
    if isinstance(formula, FF):
        return False
    if isinstance(formula, AtomicProp):
        return formula.holds(state)
    if isinstance(formula, Not):
        return not evaluate(formula.child, state)
    if isinstance(formula, And):
        return evaluate(formula.left, state) and evaluate(formula.right, state)
    if isinstance(formula, Or):
        return evaluate(formula.left, state) or evaluate(formula.right, state)
    raise TypeError(f"not a state formula: {formula!r}")


# -- path formulae -----------------------------------------------------------


@dataclass(frozen=True)
class PathFormula:
    """``left U[0,horizon] right``, ``F[0,horizon] right`` or ``G[0,horizon] right``.

    ``negated`` marks the until form of a globally formula: the reported
    probability is one minus the reach probability.
    """

    kind: str
    left: StateFormula
    right: StateFormula
    horizon: float
    negated: bool = False

    def __post_init__(self):
        if self.kind not in ("until", "eventually", "globally"):
            raise ValueError(f"unknown path operator {self.kind!r}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("time horizon must be positive and finite")


def rewrite_to_until(formula: PathFormula) -> PathFormula:
    if formula.kind == "until":
        return formula
    if formula.kind == "eventually":
        return PathFormula("until", TT(), formula.right, formula.horizon)
    return PathFormula("until", TT(), Not(formula.right), formula.horizon, negated=True)


# -- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|==|!=|=\?|[-+*<>=!&|()\[\],]))"
)


def species_resolver(species: Sequence[str]) -> Callable[[str], int]:
    """Map identifiers to species indices.

    ``name`` and ``X_name`` both refer to species ``name``; ``X_7`` also
    resolves to a species called ``X7``.
    """
    index = {s: i for i, s in enumerate(species)}

    def resolve(ident: str) -> int:
        if ident in index:
            return index[ident]
        if ident.startswith("X_"):
            rest = ident[2:]
            if rest in index:
                return index[rest]
            if "X" + rest in index:
                return index["X" + rest]
        raise KeyError(ident)

    return resolve


class _UnknownSpecies(PropertySyntaxError):
    pass


class _PropertyParser:
    def __init__(self, text: str, resolve: Callable[[str], int], n_species: int):
        self.text = text
        self.resolve = resolve
        self.n = n_species
        self.tokens = []
        pos = 0
        while pos < len(text) and text[pos:].strip():
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                raise PropertySyntaxError(f"unexpected character at position {pos}: {text[pos:].strip()[:10]!r}")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def fail(self, msg):
        pos = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text)
        raise PropertySyntaxError(f"{msg} at position {pos} in {self.text!r}")

    def peek(self, offset=0):
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else (None, None, len(self.text))

    def take(self, value=None, kind=None):
        tok = self.peek()
        if tok[0] is None:
            self.fail("unexpected end of input" + (f", expected {value!r}" if value else ""))
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            self.fail(f"expected {value or kind!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def number(self) -> float:
        sign = 1.0
        if self.peek()[1] in ("-", "+"):
            sign = -1.0 if self.take()[1] == "-" else 1.0
        return sign * float(self.take(kind="num")[1])

    def path(self) -> PathFormula:
        self.take("P")
        self.take("=?")
        self.take("[")
        kind, value, _ = self.peek()
        if kind == "name" and value in ("F", "G") and self.peek(1)[1] == "[":
            self.take()
            horizon = self.interval()
            right = self.state()
            op = "eventually" if value == "F" else "globally"
            formula = PathFormula(op, TT(), right, horizon)
        else:
            left = self.state()
            self.take("U")
            horizon = self.interval()
            right = self.state()
            formula = PathFormula("until", left, right, horizon)
        self.take("]")
        if self.i != len(self.tokens):
            self.fail("trailing input")
        return formula

    def interval(self) -> float:
        self.take("[")
        lower = self.number()
        self.take(",")
        upper = self.number()
        self.take("]")
        if lower != 0.0:
            raise PropertySyntaxError(f"nonzero lower time bound {lower:g} is unsupported; use [0,t]")
        if not upper > 0:
            raise PropertySyntaxError("upper time bound must be positive")
        return upper

    def state(self) -> StateFormula:
        node = self.conj()
        while self.peek()[1] == "|":
            self.take()
            node = Or(node, self.conj())
        return node

    def conj(self) -> StateFormula:
        node = self.unary()
        while self.peek()[1] == "&":
            self.take()
            node = And(node, self.unary())
        return node

    def unary(self) -> StateFormula:
        if self.peek()[1] == "!":
            self.take()
            return Not(self.unary())
        return self.primary()

    def primary(self) -> StateFormula:
        kind, value, _ = self.peek()
        if value == "(":
            save = self.i
            self.take()
            try:
                node = self.state()
                self.take(")")
                return node
            except _UnknownSpecies:
                raise
            except PropertySyntaxError:
                self.i = save
        if kind == "name" and value in ("tt", "true"):
            self.take()
            return TT()
        if kind == "name" and value in ("ff", "false"):
            self.take()
            return FF()
        return self.comparison()

    def comparison(self) -> StateFormula:
        lhs, lconst = self.linexpr()
        kind, cmp, _ = self.peek()
        if cmp not in ("<", "<=", ">", ">=", "=", "==", "!="):
            self.fail("expected comparison operator")
        self.take()
        rhs, rconst = self.linexpr()
        coeffs = tuple(float(a - b) for a, b in zip(lhs, rhs))
        bound = rconst - lconst
        if not any(coeffs):
            self.fail("comparison does not involve any species")
        if cmp == "==":
            cmp = "="
        if cmp == "!=":
            return Not(AtomicProp(coeffs, "=", bound))
        return AtomicProp(coeffs, cmp, bound)

    def linexpr(self):
        coeffs = [0.0] * self.n
        const = 0.0
        sign = 1.0
        if self.peek()[1] in ("-", "+"):
            sign = -1.0 if self.take()[1] == "-" else 1.0
        while True:
            kind, value, _ = self.peek()
            factor = sign
            if kind == "num":
                factor *= float(self.take()[1])
                if self.peek()[1] == "*":
                    self.take()
                    kind, value, _ = self.peek()
                    if kind != "name":
                        self.fail("expected species name after '*'")
                else:
                    const += factor
                    kind = None
            if kind == "name":
                self.take()
                try:
                    idx = self.resolve(value)
                except KeyError:
                    raise _UnknownSpecies(f"unknown species {value!r} in {self.text!r}") from None
                coeffs[idx] += factor
            elif kind is not None:
                self.fail("expected number or species name")
            if self.peek()[1] in ("+", "-"):
                sign = -1.0 if self.take()[1] == "-" else 1.0
            else:
                return coeffs, const


def parse_property(text: str, species: Sequence[str]) -> PathFormula:
    """Parse ``P=? [ sf U[0,t] sf ]``, ``P=? [ F[0,t] sf ]`` or ``P=? [ G[0,t] sf ]``."""
    return _PropertyParser(text, species_resolver(species), len(species)).path()


def parse_state_formula(text: str, species: Sequence[str]) -> StateFormula:
    parser = _PropertyParser(text, species_resolver(species), len(species))
    node = parser.state()
    if parser.i != len(parser.tokens):
        parser.fail("trailing input")
    return node


def formula_str(formula, species: Sequence[str]) -> str:
    if isinstance(formula, PathFormula):
        bound = f"[0,{formula.horizon:g}]"
        if formula.kind == "until":
            body = f"{formula_str(formula.left, species)} U{bound} {formula_str(formula.right, species)}"
        else:
            op = "F" if formula.kind == "eventually" else "G"
            body = f"{op}{bound} {formula_str(formula.right, species)}"
        return f"P=? [ {body} ]"
    if isinstance(formula, TT):
        return "tt"
    if isinstance(formula, FF):
        return "ff"
    if isinstance(formula, AtomicProp):
        names = [f"X_{s}" for s in species]
        return f"({_linexpr_str(formula.coefficients, names)} {formula.comparator} {formula.bound:g})"
    if isinstance(formula, Not):
        return "!" + formula_str(formula.child, species)
    op = " & " if isinstance(formula, And) else " | "
    return "(" + formula_str(formula.left, species) + op + formula_str(formula.right, species) + ")"


# -- continuous regions ------------------------------------------------------


@dataclass(frozen=True, order=True)
class HalfSpace:
    """``a . x <= b``."""

    a: tuple[float, ...]
    b: float

    def contains(self, x) -> bool:
        return float(np.dot(self.a, x)) <= self.b


Polytope = tuple  # tuple[HalfSpace, ...]; the empty tuple is the whole space
SignedRegion = tuple  # tuple[tuple[int, Polytope], ...]

WHOLE_SPACE: SignedRegion = ((1, ()),)
EMPTY: SignedRegion = ()


def _is_integral(values) -> bool:
    return all(float(v).is_integer() for v in values)


def continuity_correct(atom: AtomicProp) -> list[HalfSpace]:
    """Half-integer continuity correction of one atomic proposition.

    ``< c`` becomes ``<= c - 1/2``, ``<= c`` becomes ``<= c + 1/2``, ``>`` and
    ``>=`` mirror these, and ``= c`` becomes the slab ``c - 1/2 <= a.x <= c + 1/2``.
    With integer coefficients the threshold is first rounded to the
    equivalent integer threshold.
    """
    a = tuple(float(v) for v in atom.coefficients)
    neg = tuple(-v for v in a)
    c = float(atom.bound)
    cmp = atom.comparator
    if _is_integral(a):
        if cmp == "<":
            return [HalfSpace(a, math.ceil(c) - 0.5)]
        if cmp == "<=":
            return [HalfSpace(a, math.floor(c) + 0.5)]
        if cmp == ">":
            return [HalfSpace(neg, -(math.floor(c) + 0.5))]
        if cmp == ">=":
            return [HalfSpace(neg, -(math.ceil(c) - 0.5))]
        if c.is_integer():
            return [HalfSpace(neg, -(c - 0.5)), HalfSpace(a, c + 0.5)]
        # no integer point satisfies a.x = c: an empty slab
        return [HalfSpace(neg, -(c + 0.5)), HalfSpace(a, c - 0.5)]
    if cmp == "<":
        return [HalfSpace(a, c - 0.5)]
    if cmp == "<=":
        return [HalfSpace(a, c + 0.5)]
    if cmp == ">":
        return [HalfSpace(neg, -(c + 0.5))]
    if cmp == ">=":
        return [HalfSpace(neg, -(c - 0.5))]
    return [HalfSpace(neg, -(c - 0.5)), HalfSpace(a, c + 0.5)]


def _domain_simplify(atom: AtomicProp) -> StateFormula:
    """Use non-negativity of populations to simplify an atom.

    Only applies when all coefficients share a sign; the integer semantics on
    the non-negative orthant is unchanged.
    """
    a = np.asarray(atom.coefficients)
    if not _is_integral(a):
        return atom
    if np.all(a >= 0):
        lo_sign = 1.0
    elif np.all(a <= 0):
        lo_sign = -1.0
    else:
        return atom
    # normalise to s = lo_sign * a.x >= 0
    coeffs = tuple(float(v) * lo_sign for v in a)
    c = atom.bound * lo_sign
    cmp = atom.comparator
    if lo_sign < 0 and cmp != "=":
        cmp = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}[cmp]
    if cmp == "=":
        if c < 0:
            return FF()
        if c == 0:
            return AtomicProp(coeffs, "<=", 0.0)
    elif cmp == "<" and c <= 0 or cmp == "<=" and c < 0:
        return FF()
    elif cmp == ">" and c < 0 or cmp == ">=" and c <= 0:
        return TT()
    return AtomicProp(coeffs, cmp, c)


def _nnf(formula: StateFormula, negate: bool, domain_aware: bool) -> StateFormula:
    """Negation normal form over atoms; negations are absorbed into comparators."""
    if isinstance(formula, TT):
        return FF() if negate else TT()
    if isinstance(formula, FF):
        return TT() if negate else FF()
    if isinstance(formula, AtomicProp):
        atom = _domain_simplify(formula) if domain_aware else formula
        if not isinstance(atom, AtomicProp):
            return _nnf(atom, negate, False)
        if not negate:
            return atom
        if atom.comparator == "=":
            return Or(
                AtomicProp(atom.coefficients, "<", atom.bound),
                AtomicProp(atom.coefficients, ">", atom.bound),
            )
        return AtomicProp(atom.coefficients, _NEGATED_CMP[atom.comparator], atom.bound)
    if isinstance(formula, Not):
        return _nnf(formula.child, not negate, domain_aware)
    left = _nnf(formula.left, negate, domain_aware)
    right = _nnf(formula.right, negate, domain_aware)
    is_and = isinstance(formula, And) != negate
    return And(left, right) if is_and else Or(left, right)


def _dnf(formula: StateFormula, limit: int) -> list[frozenset]:
    """DNF as a list of clauses; each clause is a frozenset of atoms."""
    if isinstance(formula, TT):
        return [frozenset()]
    if isinstance(formula, FF):
        return []
    if isinstance(formula, AtomicProp):
        return [frozenset([formula])]
    left = _dnf(formula.left, limit)
    right = _dnf(formula.right, limit)
    if isinstance(formula, Or):
        clauses = left + [c for c in right if c not in left]
    else:
        clauses = []
        for l, r in itertools.product(left, right):
            c = l | r
            if c not in clauses:
                clauses.append(c)
    if len(clauses) > limit:
        raise RegionLimitError(f"DNF has {len(clauses)} clauses, more than the limit of {limit}")
    return clauses


def _unit(a):
    a = np.asarray(a, dtype=float)
    return a / np.max(np.abs(a))


def simplify_polytope(halfspaces) -> Polytope | None:
    """Drop redundant parallel half-spaces; ``None`` if trivially infeasible."""
    best: dict[tuple, float] = {}
    for h in halfspaces:
        scale = float(np.max(np.abs(h.a)))
        key = tuple(np.round(np.asarray(h.a) / scale, 12) + 0.0)
        b = h.b / scale
        best[key] = min(best.get(key, math.inf), b)
    for key, b in best.items():
        opposite = tuple(-v + 0.0 for v in key)
        if opposite in best and b + best[opposite] < 0:
            return None
    return tuple(HalfSpace(tuple(float(v) for v in k), best[k]) for k in sorted(best))


def _clause_polytope(clause: frozenset) -> Polytope | None:
    halfspaces = []
    for atom in clause:
        halfspaces.extend(continuity_correct(atom))
    return simplify_polytope(halfspaces)


def compile_signed(formula: StateFormula, *, domain_aware: bool = True, limit: int = 64) -> SignedRegion:
    """Signed polytope list whose indicator sum equals the formula's indicator.

    The formula goes to DNF over corrected half-spaces; the union of clauses
    is then written out by inclusion-exclusion, dropping empty intersections
    and merging duplicate polytopes.
    """
    clauses = _dnf(_nnf(formula, False, domain_aware), limit)
    polys = []
    for clause in clauses:
        p = _clause_polytope(clause)
        if p is not None and p not in polys:
            polys.append(p)
    signed: dict[Polytope, int] = {}
    # Inclusion-exclusion, built incrementally: U_k = U_{k-1} + P_k - (U_{k-1} & P_k)
    for p in polys:
        update: dict[Polytope, int] = {p: 1}
        for q, s in signed.items():
            inter = simplify_polytope(q + p)
            if inter is not None:
                update[inter] = update.get(inter, 0) - s
        for q, s in update.items():
            signed[q] = signed.get(q, 0) + s
        signed = {q: s for q, s in signed.items() if s != 0}
        if len(signed) > limit:
            raise RegionLimitError(f"signed region needs {len(signed)} polytopes, more than the limit of {limit}")
    return tuple(sorted(((s, q) for q, s in signed.items()), key=lambda sq: (len(sq[1]), sq[1], sq[0])))


def signed_indicator(region: SignedRegion, x) -> int:
    """Signed sum of polytope indicators at a real point."""
    return sum(s for s, poly in region if all(h.contains(x) for h in poly))


def polytope_arrays(poly: Polytope, n: int) -> tuple[np.ndarray, np.ndarray]:
    if not poly:
        return np.zeros((0, n)), np.zeros(0)
    return np.array([h.a for h in poly], dtype=float), np.array([h.b for h in poly], dtype=float)


@dataclass(frozen=True)
class RegionSet:
    """Undetermined set C, target set and false set of an until formula."""

    C: SignedRegion
    target: SignedRegion
    false_region: SignedRegion
    phi1: StateFormula
    phi2: StateFormula

    def component(self, name: str) -> SignedRegion:
        return {"C": self.C, "target": self.target, "false": self.false_region}[name]

    def indicator(self, name: str, state) -> int:
        return region_indicator(self, name, state)


def compile_regions(formula: PathFormula, network=None, *, domain_aware: bool = True, limit: int = 64) -> RegionSet:
    """Compile the three regions of ``phi1 U phi2``.

    ``C = phi1 & !phi2``, ``target = phi2`` and ``false = !phi1 & !phi2``.
    Eventually and globally formulae are rewritten to until first.
    """
    formula = rewrite_to_until(formula)
    phi1, phi2 = formula.left, formula.right
    if network is not None:
        for atom in _atoms(phi1) + _atoms(phi2):
            if len(atom.coefficients) != network.n_species:
                raise ValueError("atomic proposition dimension does not match the network")
    opts = dict(domain_aware=domain_aware, limit=limit)
    return RegionSet(
        C=compile_signed(And(phi1, Not(phi2)), **opts),
        target=compile_signed(phi2, **opts),
        false_region=compile_signed(And(Not(phi1), Not(phi2)), **opts),
        phi1=phi1,
        phi2=phi2,
    )


def region_indicator(regions: RegionSet, name: str, state) -> int:
    """0/1 membership of an integer state, using exact integer semantics."""
    in2 = evaluate(regions.phi2, state)
    if name == "target":
        return int(in2)
    in1 = evaluate(regions.phi1, state)
    if name == "C":
        return int(in1 and not in2)
    if name == "false":
        return int(not in1 and not in2)
    raise KeyError(f"unknown region {name!r}")


def _atoms(formula) -> list[AtomicProp]:
    if isinstance(formula, AtomicProp):
        return [formula]
    if isinstance(formula, Not):
        return _atoms(formula.child)
    if isinstance(formula, (And, Or)):
        return _atoms(formula.left) + _atoms(formula.right)
    return []


# -- integer DNF for compiled simulation monitors ----------------------------

_CMP_CODE = {"<": 0, "<=": 1, ">": 2, ">=": 3, "=": 4}


@dataclass(frozen=True)
class IntegerDnf:
    """Array form of a state formula for use inside compiled kernels.

    ``clauses[k, j]`` is ``+(atom+1)`` for a positive literal, ``-(atom+1)``
    for a negated one and 0 for padding. An empty ``clauses`` is false; a
    clause with only padding is true.
    """

    coefficients: np.ndarray
    comparators: np.ndarray
    bounds: np.ndarray
    clauses: np.ndarray


def integer_dnf(formula: StateFormula, n_species: int, limit: int = 64) -> IntegerDnf:
    atoms: list[AtomicProp] = []

    def lit(atom, negated):
        if atom not in atoms:
            atoms.append(atom)
        code = atoms.index(atom) + 1
        return -code if negated else code

    def nnf(f, neg):
        if isinstance(f, TT):
            return FF() if neg else TT()
        if isinstance(f, FF):
            return TT() if neg else FF()
        if isinstance(f, AtomicProp):
            return ("lit", lit(f, neg))
        if isinstance(f, Not):
            return nnf(f.child, not neg)
        l, r = nnf(f.left, neg), nnf(f.right, neg)
        return ("and" if isinstance(f, And) != neg else "or", l, r)

    def dnf(node):
        if isinstance(node, TT):
            return [frozenset()]
        if isinstance(node, FF):
            return []
        if node[0] == "lit":
            return [frozenset([node[1]])]
        l, r = dnf(node[1]), dnf(node[2])
        if node[0] == "or":
            out = l + [c for c in r if c not in l]
        else:
            out = []
            for a, b in itertools.product(l, r):
                c = a | b
                if not any(-v in c for v in c) and c not in out:
                    out.append(c)
        if len(out) > limit:
            raise RegionLimitError(f"DNF has {len(out)} clauses, more than the limit of {limit}")
        return out

    clauses = dnf(nnf(formula, False))
    width = max((len(c) for c in clauses), default=0)
    mat = np.zeros((len(clauses), max(width, 1)), dtype=np.int64)
    for k, c in enumerate(clauses):
        for j, v in enumerate(sorted(c)):
            mat[k, j] = v
    coeffs = np.array([a.coefficients for a in atoms], dtype=float).reshape(len(atoms), n_species)
    return IntegerDnf(
        coefficients=coeffs,
        comparators=np.array([_CMP_CODE[a.comparator] for a in atoms], dtype=np.int64),
        bounds=np.array([a.bound for a in atoms], dtype=float),
        clauses=mat,
    )
