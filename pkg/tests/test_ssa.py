import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcsbi.cme import exact_cme_cdf
from mcsbi.engine import Grid
from mcsbi.errors import PropensityError
from mcsbi.model import parse_model, stoichiometry_matrix
from mcsbi.properties import parse_property
from mcsbi.ssa import (
    FALSIFIED,
    SATISFIED,
    UNDETERMINED,
    Trajectory,
    ci_half_width,
    estimate_cdf,
    expected_half_width,
    monitor_until,
    outcome_name,
    resolve_seed,
    sample_until,
    simulate,
)

PHI1 = "P=? [ (X_I < 30) U[0,10] (X_I = 0) ]"


def _hand_path(times, infected, t_end=10.0):
    states = np.array([[40 - i, i, 0] for i in infected])
    return Trajectory(np.asarray(times, float), states, t_end, ("S", "I", "R"))


class TestSimulate:
    def test_no_propensity(self):
        net = parse_model("param d = 1\nspecies X = 0\nreaction r: X -> 0 @ d*X\n")
        traj = simulate(net, 5.0, seed=3)
        np.testing.assert_array_equal(traj.times, [0.0])
        np.testing.assert_array_equal(traj.states, [[0]])

    def test_jumps_follow_stoichiometry(self, sir):
        traj = simulate(sir, 5.0, seed=9)
        assert np.all(np.diff(traj.times) > 0) and traj.times[0] == 0.0
        cols = stoichiometry_matrix(sir).T
        for d in np.diff(traj.states, axis=0):
            assert any(np.array_equal(d, c) for c in cols)

    def test_pure_death_exponential(self, pure_death):
        times = np.array([simulate(pure_death, 100.0, seed=s).times[1] for s in range(10_000)])
        assert abs(times.mean() - 1.0) < 3 / math.sqrt(times.size)

    def test_birth_death_time_average(self, birth_death):
        # the sd of the time average over [50, 100] is about sqrt(2 * 5 / 50)
        avg = simulate(birth_death, 100.0, seed=17).time_average(50.0, 100.0)
        assert abs(avg[0] - 5.0) < 3 * math.sqrt(2 * 5.0 / 50.0)

    def test_reproducible(self, sir):
        a, b = simulate(sir, 5.0, seed=42), simulate(sir, 5.0, seed=42)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.states, b.states)
        assert not np.array_equal(simulate(sir, 5.0, seed=43).times, a.times)

    def test_negative_propensity(self):
        net = parse_model("species X = 3\nreaction r: X -> 0 @ 1 - X\n")
        with pytest.raises(PropensityError):
            simulate(net, 1.0, seed=0)

    def test_env_seed(self, monkeypatch):
        monkeypatch.setenv("MCSBI_SEED", "77")
        assert resolve_seed(None) == 77
        assert resolve_seed(5) == 5
        monkeypatch.delenv("MCSBI_SEED")
        assert resolve_seed(None) == 0


class TestMonitor:
    def test_satisfied(self, sir):
        f = parse_property(PHI1, sir.species)
        out = monitor_until(_hand_path([0, 1.0, 3.2], [10, 1, 0]), f)
        assert out.kind == "satisfied" and out.time == 3.2

    def test_falsified(self, sir):
        f = parse_property(PHI1, sir.species)
        out = monitor_until(_hand_path([0, 1.0, 2.0, 5.0], [10, 29, 30, 0]), f)
        assert out.kind == "falsified" and out.time == 2.0

    def test_undetermined(self, sir):
        f = parse_property(PHI1, sir.species)
        out = monitor_until(_hand_path([0, 1.0], [10, 12]), f)
        assert out.kind == "undetermined" and out.time == 10.0

    @settings(max_examples=50, deadline=None)
    @given(path=st.lists(st.integers(0, 35), min_size=1, max_size=15), data=st.data())
    def test_split_invariance(self, path, data):
        f = parse_property(PHI1, ("S", "I", "R"))
        times = np.cumsum([0.0] + [0.5] * (len(path) - 1))
        base = monitor_until(_hand_path(times, path), f)
        k = data.draw(st.integers(0, len(path) - 1))
        t_split = times[k] + 0.25
        times2 = np.insert(times, k + 1, t_split)
        path2 = path[:k + 1] + [path[k]] + path[k + 1:]
        assert monitor_until(_hand_path(times2, path2), f) == base


class TestEstimate:
    def test_pure_death_cdf(self, pure_death):
        f = parse_property("P=? [ F[0,1] X = 0 ]", pure_death.species)
        est = estimate_cdf(pure_death, f, Grid(1.0, 10), n_samples=2000, seed=1)
        assert abs(est.cdf[-1] - (1 - math.exp(-1))) <= est.half_width
        assert est.cdf[0] == 0.0

    def test_half_width_at_half(self):
        np.testing.assert_allclose(expected_half_width(0.5, 1000), 0.0407, atol=5e-5)
        assert ci_half_width([0.1, 0.5, 0.3], 1000, 0.99) == pytest.approx(expected_half_width(0.5, 1000))

    def test_half_width_positive(self):
        assert ci_half_width([0.0, 0.0], 100, 0.99) > 0
        with pytest.raises(ValueError):
            ci_half_width([0.5], 100, 1.0)

    def test_empty_target(self, sir):
        f = parse_property("P=? [ F[0,2] X_I > 100 ]", sir.species)
        est = estimate_cdf(sir, f, Grid(2.0, 20), n_samples=50, seed=0)
        np.testing.assert_array_equal(est.cdf, 0.0)

    def test_monotone(self, sir):
        est = estimate_cdf(sir, parse_property(PHI1, sir.species), Grid(10.0, 50), n_samples=300, seed=4)
        assert np.all(np.diff(est.cdf) >= 0) and np.all(np.diff(est.absorb_fraction) >= 0)
        assert np.all(est.absorb_fraction >= est.cdf)

    def test_too_few_samples(self, sir):
        with pytest.raises(ValueError):
            estimate_cdf(sir, parse_property(PHI1, sir.species), Grid(10.0, 5), n_samples=1)

    def test_per_index_streams(self, sir):
        """Trajectory k does not depend on how many trajectories are drawn."""
        f = parse_property(PHI1, sir.species)
        small = sample_until(sir, f, 50, seed=8)
        large = sample_until(sir, f, 200, seed=8)
        np.testing.assert_array_equal(small.time, large.time[:50])
        np.testing.assert_array_equal(small.outcome, large.outcome[:50])

    def test_outcome_codes(self):
        assert {outcome_name(c) for c in (SATISFIED, FALSIFIED, UNDETERMINED)} == {
            "satisfied", "falsified", "undetermined"}

    def test_convergence_rate(self, pure_death):
        """Max error against the analytic CDF shrinks with n, roughly as 1/sqrt(n)."""
        f = parse_property("P=? [ F[0,3] X = 0 ]", pure_death.species)
        grid = Grid(3.0, 30)
        exact = 1 - np.exp(-grid.points)
        errs = []
        for n in (100, 1000, 10_000):
            errs.append(np.mean([np.abs(estimate_cdf(pure_death, f, grid, n, seed=s).cdf - exact).max()
                                 for s in range(3)]))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 3.0 / math.sqrt(10_000)

    def test_matches_exact_oracle(self, sir):
        f = parse_property(PHI1, sir.species)
        grid = Grid(10.0, 20)
        est = estimate_cdf(sir, f, grid, n_samples=5000, seed=123)
        exact = exact_cme_cdf(sir, f, grid)
        assert np.all(np.abs(est.cdf - exact.cdf) <= est.half_width)
