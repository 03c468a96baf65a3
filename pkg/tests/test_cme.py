import math

import numpy as np
import pytest

from mcsbi.cme import (
    TruncationWarning,
    build_oracle,
    exact_cme_cdf,
    poisson_truncation,
    state_space_size,
    transient,
)
from mcsbi.engine import Grid
from mcsbi.errors import StateSpaceError
from mcsbi.model import parse_model
from mcsbi.properties import parse_property, parse_state_formula

PHI1 = "P=? [ (X_I < 30) U[0,10] (X_I = 0) ]"


class TestEnumeration:
    def test_sir_size(self, sir):
        assert state_space_size(sir) == (1271, 2451)

    def test_generator_structure(self, sir):
        o = build_oracle(sir)
        Q = o.Q.toarray()
        off = Q - np.diag(np.diag(Q))
        assert np.all(off >= 0)
        np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-10)
        assert not o.absorbing.any()

    def test_absorbing_rows_zero(self, sir):
        o = build_oracle(sir, target=parse_state_formula("X_I = 0", sir.species))
        assert o.absorbing.sum() > 0
        assert o.Q[np.flatnonzero(o.absorbing)].nnz == 0

    def test_cap(self, birth_death):
        with pytest.raises(StateSpaceError, match="cap"):
            build_oracle(birth_death, cap=10)

    def test_state_bound(self, birth_death):
        o = build_oracle(birth_death, state_bound=20)
        assert o.n_states == 21
        assert o.states.max() == 20


class TestTransient:
    def test_pure_death(self, birth_death):
        net = parse_model("param k = 0\nparam d = 1\nspecies X = 1\n"
                          "reaction b: 0 -> X @ k\nreaction d: X -> 0 @ d*X\n")
        f = parse_property("P=? [ F[0,5] X = 0 ]", net.species)
        grid = Grid(5.0, 50)
        r = exact_cme_cdf(net, f, grid, state_bound=200)
        np.testing.assert_allclose(r.cdf, 1 - np.exp(-grid.points), atol=1e-12)
        assert r.cdf[0] == 0.0

    def test_conservation(self, sir):
        grid = Grid(10.0, 40)
        r = exact_cme_cdf(sir, parse_property(PHI1, sir.species), grid)
        np.testing.assert_allclose(r.cdf + r.false_cdf + r.undetermined, 1.0, atol=1e-9)
        np.testing.assert_array_equal(r.leak, np.maximum(r.leak, 0))
        assert r.n_states < 1271

    def test_methods_agree(self, sir):
        o = build_oracle(sir)
        p0 = o.initial_distribution(sir.x0)
        t = [0.0, 0.5, 2.0]
        np.testing.assert_allclose(transient(o, p0, t), transient(o, p0, t, method="expm"), atol=1e-10)

    def test_unknown_method(self, sir):
        o = build_oracle(sir)
        with pytest.raises(ValueError):
            transient(o, o.initial_distribution(sir.x0), [1.0], method="rk4")

    def test_leak_warning(self, birth_death):
        f = parse_property("P=? [ F[0,5] X > 1000 ]", birth_death.species)
        with pytest.warns(TruncationWarning):
            r = exact_cme_cdf(birth_death, f, Grid(5.0, 5), state_bound=4)
        assert r.leak[-1] > 1e-3

    def test_globally_satisfaction(self, sir):
        g = exact_cme_cdf(sir, parse_property("P=? [ G[0,4] X_I > 0 ]", sir.species), Grid(4.0, 8))
        f = exact_cme_cdf(sir, parse_property("P=? [ F[0,4] X_I = 0 ]", sir.species), Grid(4.0, 8))
        np.testing.assert_allclose(g.satisfaction, 1 - f.cdf, atol=1e-14)

    def test_poisson_truncation(self):
        lo, hi = poisson_truncation(100.0)
        assert 0 < lo < 100 < hi
        assert poisson_truncation(0.0) == (0, 0)
