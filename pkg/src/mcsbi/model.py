"""Population CTMC models: reaction networks with polynomial propensities.

A model file is line oriented::

    # SIR epidemic
    param k_i = 0.1
    species S = 40
    reaction infection: S + I -> 2*I @ k_i*S*I

Parameters are substituted into the propensity coefficients at parse time,
so a parsed network only holds numbers.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .errors import ModelSyntaxError, PropensityError
from .polynomial import Polynomial

BUILTIN_MODELS = ("sir", "lacz", "viral", "genosc")

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NAME_RE = re.compile(_IDENT + r"$")


@dataclass(frozen=True)
class Reaction:
    name: str
    reactants: tuple[int, ...]
    products: tuple[int, ...]
    propensity: Polynomial

    @property
    def change_vector(self) -> tuple[int, ...]:
        return tuple(p - r for p, r in zip(self.products, self.reactants))


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    initial: tuple[int, ...]
    reactions: tuple[Reaction, ...] = ()
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.species)) != len(self.species):
            raise ValueError("species names must be unique")
        if len(self.initial) != len(self.species):
            raise ValueError("one initial count per species required")
        if any(c < 0 for c in self.initial):
            raise ValueError("initial counts must be non-negative")
        n = len(self.species)
        for r in self.reactions:
            if len(r.reactants) != n or len(r.products) != n:
                raise ValueError(f"reaction {r.name!r} has wrong stoichiometry length")
            if any(v >= n for v in r.propensity.variables()):
                raise ValueError(f"reaction {r.name!r} references an unknown species index")

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    def index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.initial, dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (
            self.species == other.species
            and self.initial == other.initial
            and self.reactions == other.reactions
            and dict(self.parameters) == dict(other.parameters)
        )

    __hash__ = None


def stoichiometry_matrix(network: ReactionNetwork) -> np.ndarray:
    """Species x reactions matrix whose columns are the change vectors."""
    mat = np.zeros((network.n_species, network.n_reactions), dtype=np.int64)
    for j, r in enumerate(network.reactions):
        mat[:, j] = r.change_vector
    return mat


def propensity_eval(network: ReactionNetwork, reaction_index: int, state) -> float:
    state = np.asarray(state)
    if state.shape != (network.n_species,):
        raise ValueError(f"state must have {network.n_species} entries")
    if np.any(state < 0):
        raise ValueError("state entries must be non-negative")
    r = network.reactions[reaction_index]
    value = r.propensity([float(s) for s in state])
    if not (value >= 0.0 and math.isfinite(value)):
        raise PropensityError(
            f"propensity of reaction {r.name!r} is {value} at state {tuple(int(s) for s in state)}"
        )
    return value


def mass_action_propensity(stoichiometry: Sequence[int], k: float) -> Polynomial:
    """Mass-action propensity ``k * prod_s X_s (X_s - 1) ... (X_s - n_s + 1)``.

    This counts ordered reactant tuples (falling factorials). For the usual
    combinatorial rate ``k * prod_s C(X_s, n_s)`` divide ``k`` by ``prod n_s!``
    before calling.
    """
    poly = Polynomial.constant(k)
    for s, n in enumerate(stoichiometry):
        if n < 0:
            raise ValueError("stoichiometry must be non-negative")
        for j in range(n):
            poly = poly * (Polynomial.variable(s) - j)
    return poly


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>" + _IDENT + r")|(?P<op>[-+*/^()]))"
)


class _ExprParser:
    """Recursive-descent parser for polynomial propensity expressions."""

    def __init__(self, text, species, params, line, col0):
        self.text = text
        self.species = species
        self.params = params
        self.line = line
        self.col0 = col0
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                self._fail("unexpected character " + repr(text[pos:].lstrip()[:1]), pos)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def _fail(self, msg, pos=None):
        if pos is None:
            pos = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text)
        raise ModelSyntaxError(msg, self.line, self.col0 + pos + 1)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            self._fail(f"expected {value!r}" if value else "unexpected end of expression")
        self.i += 1
        return tok

    def parse(self) -> Polynomial:
        if not self.tokens:
            self._fail("empty propensity expression")
        poly = self.sum()
        if self.i != len(self.tokens):
            self._fail(f"unexpected token {self.peek()[1]!r}")
        return poly

    def sum(self):
        poly = self.product()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.product()
            poly = poly + rhs if op == "+" else poly - rhs
        return poly

    def product(self):
        poly = self.unary()
        while self.peek()[1] in ("*", "/"):
            op, pos = self.take()[1], self.peek()[2]
            rhs = self.unary()
            if op == "*":
                poly = poly * rhs
            else:
                if rhs.degree != 0 or rhs.coefficient() == 0.0:
                    self._fail("division only by non-zero constants", pos)
                poly = poly * (1.0 / rhs.coefficient())
        return poly

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            kind, value, pos = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", value):
                self._fail("exponent must be a non-negative integer", pos)
            base = base ** int(value)
        return base

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Polynomial.constant(float(value))
        if kind == "name":
            if value in self.species:
                return Polynomial.variable(self.species[value])
            if value in self.params:
                return Polynomial.constant(self.params[value])
            self._fail(f"unknown species or parameter {value!r}", pos)
        if value == "(":
            poly = self.sum()
            self.take(")")
            return poly
        self._fail(f"unexpected token {value!r}", pos)


def _parse_side(text, species, n, line, col0):
    counts = [0] * n
    stripped = text.strip()
    if stripped in ("0", "", "∅"):
        if stripped == "":
            raise ModelSyntaxError("empty reaction side (use 0)", line, col0 + 1)
        return tuple(counts)
    offset = 0
    for part in text.split("+"):
        term = part.strip()
        col = col0 + offset + (len(part) - len(part.lstrip())) + 1
        offset += len(part) + 1
        m = re.fullmatch(r"(?:(\d+)\s*\*?\s*)?(" + _IDENT + r")", term)
        if not m:
            raise ModelSyntaxError(f"bad stoichiometric term {term!r}", line, col)
        coeff = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        if name not in species:
            raise ModelSyntaxError(f"unknown species {name!r}", line, col)
        counts[species[name]] += coeff
    return tuple(counts)


def parse_model(text: str, overrides: Mapping[str, float] | None = None) -> ReactionNetwork:
    """Parse a model file.

    ``overrides`` replaces the values of declared parameters before they are
    substituted into the propensities.
    """
    overrides = dict(overrides or {})
    params: dict[str, float] = {}
    species: dict[str, int] = {}
    initial: list[int] = []
    pending: list[tuple[int, str, str, int, str, int, str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        keyword = body.split(None, 1)[0]
        if keyword in ("param", "species"):
            m = re.fullmatch(keyword + r"\s+(\S+)\s*=\s*(\S+)", body)
            if not m:
                raise ModelSyntaxError(f"expected '{keyword} <name> = <value>'", lineno, indent + 1)
            name, value = m.group(1), m.group(2)
            col = indent + body.index(name, len(keyword)) + 1
            if not _NAME_RE.match(name):
                raise ModelSyntaxError(f"invalid name {name!r}", lineno, col)
            if name in params or name in species:
                raise ModelSyntaxError(f"duplicate declaration of {name!r}", lineno, col)
            vcol = indent + body.rindex(value) + 1
            if keyword == "param":
                try:
                    params[name] = float(value)
                except ValueError:
                    raise ModelSyntaxError(f"bad parameter value {value!r}", lineno, vcol) from None
                if not math.isfinite(params[name]):
                    raise ModelSyntaxError(f"non-finite parameter {name!r}", lineno, vcol)
            else:
                if not re.fullmatch(r"[-+]?\d+", value):
                    raise ModelSyntaxError(f"initial count must be an integer, got {value!r}", lineno, vcol)
                count = int(value)
                if count < 0:
                    raise ModelSyntaxError(f"negative initial count for {name!r}", lineno, vcol)
                species[name] = len(initial)
                initial.append(count)
        elif keyword == "reaction":
            m = re.fullmatch(r"reaction\s+(" + _IDENT + r")\s*:(.*?)->(.*?)@(.*)", body)
            if not m:
                raise ModelSyntaxError(
                    "expected 'reaction <name>: <reactants> -> <products> @ <propensity>'", lineno, indent + 1
                )
            pending.append(
                (lineno, m.group(1),
                 m.group(2), indent + m.start(2),
                 m.group(3), indent + m.start(3),
                 m.group(4), indent + m.start(4))
            )
        else:
            raise ModelSyntaxError(f"unknown keyword {keyword!r}", lineno, indent + 1)

    unknown = set(overrides) - set(params)
    if unknown:
        raise ModelSyntaxError(f"override of undeclared parameter(s): {', '.join(sorted(unknown))}")
    params.update({k: float(v) for k, v in overrides.items()})

    reactions = []
    names_seen = set()
    n = len(species)
    for lineno, name, lhs, lcol, rhs, rcol, expr, ecol in pending:
        if name in names_seen:
            raise ModelSyntaxError(f"duplicate reaction name {name!r}", lineno, 1)
        names_seen.add(name)
        reactants = _parse_side(lhs, species, n, lineno, lcol)
        products = _parse_side(rhs, species, n, lineno, rcol)
        propensity = _ExprParser(expr, species, params, lineno, ecol).parse()
        reactions.append(Reaction(name, reactants, products, propensity))

    return ReactionNetwork(
        species=tuple(species),
        initial=tuple(initial),
        reactions=tuple(reactions),
        parameters=params,
    )


def _side_str(counts, names):
    terms = [(f"{c}*{names[i]}" if c != 1 else names[i]) for i, c in enumerate(counts) if c]
    return " + ".join(terms) if terms else "0"


def render_model(network: ReactionNetwork) -> str:
    """Serialize a network; ``parse_model(render_model(n)) == n``."""
    lines = [f"param {k} = {v!r}" for k, v in network.parameters.items()]
    lines += [f"species {s} = {c}" for s, c in zip(network.species, network.initial)]
    for r in network.reactions:
        lines.append(
            f"reaction {r.name}: {_side_str(r.reactants, network.species)} -> "
            f"{_side_str(r.products, network.species)} @ {r.propensity.to_str(network.species)}"
        )
    return "\n".join(lines) + "\n"


def builtin_model_text(name: str) -> str:
    if name not in BUILTIN_MODELS:
        raise KeyError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTIN_MODELS)}")
    return resources.files("mcsbi.models").joinpath(f"{name}.crn").read_text(encoding="utf-8")


def builtin_model(name: str, **params: float) -> ReactionNetwork:
    """One of the bundled benchmark networks, with optional parameter overrides."""
    return parse_model(builtin_model_text(name), overrides=params)


def load_model(spec: str, **params: float) -> ReactionNetwork:
    """Builtin name or path to a model file."""
    if spec in BUILTIN_MODELS:
        return builtin_model(spec, **params)
    with open(spec, encoding="utf-8") as fh:
        return parse_model(fh.read(), overrides=params)
