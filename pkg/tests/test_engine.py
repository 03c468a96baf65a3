import numpy as np
import pytest

from mcsbi.engine import EngineConfig, Grid, check_path_formula, check_until, with_gaussian
from mcsbi.model import parse_model
from mcsbi.properties import TT, PathFormula, parse_property, parse_state_formula

PHI1 = "P=? [ (X_I < 30) U[0,10] (X_I = 0) ]"
PHI2 = "P=? [ (X_S > 1) U[0,4] (X_I < X_R) ]"


@pytest.fixture(scope="module")
def sir_phi1(sir):
    return check_path_formula(sir, parse_property(PHI1, sir.species))


class TestGrid:
    def test_points(self):
        g = Grid(10.0, 200)
        assert g.points.size == 201
        assert g.points[0] == 0.0 and g.points[-1] == 10.0
        np.testing.assert_allclose(np.diff(g.points), g.spacing)

    @pytest.mark.parametrize("t_end,n", [(0.0, 10), (-1.0, 10), (np.inf, 10), (1.0, 0), (1.0, 2.5)])
    def test_invalid(self, t_end, n):
        with pytest.raises(ValueError):
            Grid(t_end, n)

    def test_horizon_mismatch(self, sir):
        with pytest.raises(ValueError, match="horizon"):
            check_path_formula(sir, parse_property(PHI1, sir.species), Grid(5.0, 10))


class TestDegenerateTargets:
    def test_tt_target(self, sir):
        f = PathFormula("until", parse_state_formula("X_I < 30", sir.species), TT(), 3.0)
        r = check_until(sir, f, Grid(3.0, 20))
        assert r.pi[0] == 1.0
        np.testing.assert_array_equal(r.cdf, 1.0)
        assert r.absorbed and r.absorbed_step == 0

    def test_unreachable_target(self, sir):
        r = check_path_formula(sir, parse_property("P=? [ F[0,5] X_I > 100 ]", sir.species), n_steps=50)
        assert r.cdf.max() <= 1e-6

    def test_globally_tt(self, sir):
        r = check_path_formula(sir, parse_property("P=? [ G[0,5] tt ]", sir.species), n_steps=20)
        np.testing.assert_array_equal(r.satisfaction, 1.0)
        assert r.negated

    def test_globally_duality(self, sir):
        g = check_path_formula(sir, parse_property("P=? [ G[0,5] X_I <= 100 ]", sir.species), n_steps=50)
        np.testing.assert_allclose(g.satisfaction, 1.0, atol=1e-6)
        f = check_path_formula(sir, parse_property("P=? [ G[0,4] X_I < X_R ]", sir.species), n_steps=40)
        e = check_path_formula(sir, parse_property("P=? [ F[0,4] !(X_I < X_R) ]", sir.species), n_steps=40)
        np.testing.assert_array_equal(f.satisfaction, 1.0 - e.cdf)

    def test_absorbed_early_exit(self):
        net = parse_model("param k = 100\nspecies X = 0\nreaction b: 0 -> X @ k\n")
        r = check_path_formula(net, parse_property("P=? [ F[0,10] X >= 5 ]", net.species), n_steps=10)
        assert r.absorbed
        k = r.absorbed_step
        np.testing.assert_array_equal(r.pi[k + 1:], 0.0)
        assert np.all(r.cdf[k:] == r.cdf[k])
        assert np.all(np.isnan(r.mu[k + 1:]))
        np.testing.assert_allclose(r.cdf[-1], 1.0, atol=1e-9)


class TestInvariants:
    def test_monotone_and_bounded(self, sir_phi1):
        assert np.all(np.diff(sir_phi1.cdf) >= 0)
        assert sir_phi1.cdf[0] >= 0 and sir_phi1.cdf[-1] <= 1

    def test_bookkeeping(self, sir_phi1):
        r = sir_phi1
        total = r.pi / r.undetermined[:-1] + r.evidence + r.false_mass
        np.testing.assert_allclose(total, 1.0, atol=1e-6)
        np.testing.assert_allclose(r.absorb_cdf, 1.0 - r.undetermined[1:], atol=1e-9)
        assert np.all(r.cdf + r.undetermined[1:] <= 1 + 1e-6)

    def test_prior_trace(self, sir_phi1, sir):
        np.testing.assert_allclose(sir_phi1.mu[0], sir.x0)
        np.testing.assert_allclose(sir_phi1.sigma[0], 1e-6 * np.eye(3))
        assert sir_phi1.species == ("S", "I", "R")
        assert sir_phi1.variances.shape == (201, 3)

    def test_eventually_equals_tt_until(self, sir):
        f = parse_property("P=? [ F[0,4] X_I < X_R ]", sir.species)
        u = PathFormula("until", TT(), f.right, 4.0)
        a = check_path_formula(sir, f, n_steps=80)
        b = check_until(sir, u, Grid(4.0, 80))
        np.testing.assert_array_equal(a.cdf, b.cdf)
        np.testing.assert_array_equal(a.evidence, b.evidence)

    def test_eventually_complement_of_evidence(self, sir):
        r = check_path_formula(sir, parse_property("P=? [ F[0,4] X_I < X_R ]", sir.species), n_steps=80)
        np.testing.assert_allclose(r.cdf, 1.0 - r.undetermined[1:], atol=1e-9)

    def test_deterministic(self, sir):
        f = parse_property(PHI2, sir.species)
        a = check_path_formula(sir, f, n_steps=50)
        b = check_path_formula(sir, f, n_steps=50)
        np.testing.assert_array_equal(a.cdf, b.cdf)
        np.testing.assert_array_equal(a.mu, b.mu)

    def test_domain_awareness_does_not_change_sir(self, sir, sir_phi1):
        cfg = EngineConfig(domain_aware=False)
        plain = check_path_formula(sir, parse_property(PHI1, sir.species), config=cfg)
        np.testing.assert_allclose(plain.cdf, sir_phi1.cdf, atol=5e-3)

    def test_fd_hessian_diagonal_close(self, sir):
        f = parse_property(PHI2, sir.species)
        a = check_path_formula(sir, f, n_steps=50)
        b = check_path_formula(sir, f, config=with_gaussian(EngineConfig(), hess_diag="fd"), n_steps=50)
        np.testing.assert_allclose(a.cdf, b.cdf, atol=1e-4)

    def test_grid_refinement(self, sir):
        f = parse_property(PHI2, sir.species)
        finals = [check_path_formula(sir, f, n_steps=n).cdf[-1] for n in (25, 50, 100, 200)]
        steps = np.abs(np.diff(finals))
        assert np.all(np.diff(steps) < 0)
