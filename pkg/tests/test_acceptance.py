"""Acceptance criteria, each checked at its stated tolerance.

Every test prints (and records for the terminal summary) one line of the form
``[PASS] criterion N: ...`` or ``[FAIL] criterion N: ...``.
"""
import io
import math
import time

import numpy as np
import pytest

from mcsbi.cli import main as cli_main
from mcsbi.cme import exact_cme_cdf, state_space_size
from mcsbi.engine import check_path_formula
from mcsbi.gaussian import GaussianDist, adf_update, cdf_grad_mu, cdf_hess_mu, polytope_prob
from mcsbi.model import builtin_model, parse_model
from mcsbi.moments import MomentState, moment_field, moment_trajectory
from mcsbi.presets import PRESETS
from mcsbi.properties import HalfSpace, parse_property
from mcsbi.ssa import empirical_cdf, sample_until

from conftest import BIRTH_DEATH
from oracles import random_spd, truncated_moments_1d, truncated_moments_2d

SSA_SEED = 0


@pytest.fixture(scope="module")
def sbi_runs():
    """Engine results for every preset, computed once (with wall-clock time)."""
    cache = {}

    def get(name):
        if name not in cache:
            preset = PRESETS[name]
            net = builtin_model(preset.model)
            f = parse_property(preset.property, net.species)
            check_path_formula(net, f, n_steps=1)  # compile kernels outside the timing
            t0 = time.perf_counter()
            r = check_path_formula(net, f, n_steps=preset.n_steps)
            cache[name] = (net, f, r, time.perf_counter() - t0)
        return cache[name]

    return get


@pytest.fixture(scope="module")
def viral_ssa():
    """10^4 viral trajectories; the first 1000 equal a 1000-sample run with the same seed."""
    net = builtin_model("viral")
    f = parse_property(PRESETS["viral"].property, net.species)
    sample_until(net, f, 2, SSA_SEED)  # compile kernels outside the timing
    t0 = time.perf_counter()
    samples = sample_until(net, f, 10_000, SSA_SEED)
    return samples, time.perf_counter() - t0


def _first(samples, n):
    return type(samples)(samples.outcome[:n], samples.time[:n], samples.events[:n], samples.horizon, samples.seed)


class TestCriterion1SirExactness:
    def test_sir(self, sbi_runs, acceptance_report):
        net = builtin_model("sir")
        t0 = time.perf_counter()
        size = state_space_size(net)
        t_exact = time.perf_counter() - t0
        dists, worst_sbi = {}, 0.0
        for name in ("sir", "sir2"):
            _, f, r, t_sbi = sbi_runs(name)
            worst_sbi = max(worst_sbi, t_sbi)
            t1 = time.perf_counter()
            e = exact_cme_cdf(net, f, r.times)
            t_exact += time.perf_counter() - t1
            dists[name] = float(np.abs(r.cdf - e.cdf).max())
        ok = (all(d <= 0.05 for d in dists.values()) and size == (1271, 2451)
              and t_exact < 60 and worst_sbi < 30)
        acceptance_report(1, ok, f"sup|sbi-exact| phi1={dists['sir']:.4f} phi2={dists['sir2']:.4f} (<=0.05); "
                                 f"states/transitions={size[0]}/{size[1]}; "
                                 f"oracle {t_exact:.2f}s, sbi {worst_sbi:.2f}s")
        assert ok


class TestCriterion2SsaConsistency:
    def test_large_models(self, sbi_runs, viral_ssa, acceptance_report):
        parts, ok = [], True
        for name in ("lacz", "genosc"):
            net, f, r, _ = sbi_runs(name)
            samples = sample_until(net, f, 1000, SSA_SEED)
            est = empirical_cdf(samples, r.times, 0.99)
            frac = float(np.mean(np.abs(r.cdf - est.cdf) <= est.half_width + 0.05))
            ok &= frac >= 0.9
            parts.append(f"{name} {100 * frac:.1f}% within hw({est.half_width:.3f})+0.05")
        _, f, r, _ = sbi_runs("viral")
        est = empirical_cdf(_first(viral_ssa[0], 1000), r.times, 0.99)
        frac = float(np.mean(np.abs(r.absorb_cdf - est.absorb_fraction) <= est.absorb_half_width + 0.1))
        ok &= frac >= 0.8
        parts.append(f"viral absorbing {100 * frac:.1f}% within hw({est.absorb_half_width:.3f})+0.1")
        acceptance_report(2, ok, "; ".join(parts) + " (1000 samples)")
        assert ok


@pytest.mark.slow
class TestCriterion3Speedup:
    def test_viral(self, sbi_runs, viral_ssa, acceptance_report):
        t_sbi = sbi_runs("viral")[3]
        t_ssa = viral_ssa[1]
        ratio = t_ssa / t_sbi
        ok = ratio >= 10
        acceptance_report(3, ok, f"viral sbi {t_sbi:.2f}s vs ssa(10^4) {t_ssa:.1f}s, speedup {ratio:.0f}x (>=10)")
        assert ok


def _random_polytope(rng, dist):
    """Random polytope with mass >= 1e-3 and at most ``dim`` distinct directions."""
    n = dist.dim
    while True:
        k = rng.integers(1, n + 1)
        rows = []
        for _ in range(k):
            a = rng.normal(size=n)
            a /= np.max(np.abs(a))
            sd = math.sqrt(a @ dist.sigma @ a)
            rows.append(HalfSpace(tuple(a), float(a @ dist.mu + sd * rng.uniform(-1.0, 1.5))))
            if rng.uniform() < 0.3:
                width = sd * rng.uniform(1.0, 3.0)
                rows.append(HalfSpace(tuple(-a), float(-(rows[-1].b - width))))
        poly = tuple(rows)
        if polytope_prob(dist, poly) >= 1e-3:
            return poly


class TestCriterion4Derivatives:
    def test_gradient_and_hessian(self, acceptance_report):
        rng = np.random.default_rng(4)
        worst_g = worst_h = 0.0
        for case in range(100):
            n = case % 3 + 1
            dist = GaussianDist(rng.normal(size=n), random_spd(rng, n))
            poly = _random_polytope(rng, dist)
            g = cdf_grad_mu(dist, poly)
            H = cdf_hess_mu(dist, poly)
            h = 1e-5
            fd_g = np.zeros(n)
            fd_h = np.zeros((n, n))
            for k, e in enumerate(np.eye(n)):
                up, dn = GaussianDist(dist.mu + h * e, dist.sigma), GaussianDist(dist.mu - h * e, dist.sigma)
                fd_g[k] = (polytope_prob(up, poly, 1e-11) - polytope_prob(dn, poly, 1e-11)) / (2 * h)
                fd_h[k] = (cdf_grad_mu(up, poly) - cdf_grad_mu(dn, poly)) / (2 * h)
            worst_g = max(worst_g, np.abs(g - fd_g).max() / np.abs(fd_g).max())
            worst_h = max(worst_h, np.abs(H - fd_h).max() / np.abs(fd_h).max())
        ok = worst_g <= 1e-4 and worst_h <= 1e-3
        acceptance_report(4, ok, f"100 cases dims 1-3: max rel err gradient {worst_g:.2e} (<=1e-4), "
                                 f"Hessian {worst_h:.2e} (<=1e-3)")
        assert ok


def _rel(a, b, scale):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(b), scale)))


class TestCriterion5Adf:
    def test_moment_matching(self, acceptance_report):
        rng = np.random.default_rng(5)
        worst = 0.0
        for case in range(100):
            if case % 2 == 0:
                mu, var = rng.normal(), rng.uniform(0.2, 3.0)
                s = math.sqrt(var)
                lo = mu + s * rng.uniform(-3, 0.5) if rng.uniform() < 0.7 else -np.inf
                hi = max(lo, mu - s) + s * rng.uniform(0.5, 3) if rng.uniform() < 0.7 or lo == -np.inf else np.inf
                rows = []
                if np.isfinite(hi):
                    rows.append(HalfSpace((1.0,), hi))
                if np.isfinite(lo):
                    rows.append(HalfSpace((-1.0,), -lo))
                res = adf_update(GaussianDist([mu], [[var]]), ((1, tuple(rows)),))
                Z, m, v = truncated_moments_1d(mu, var, lo, hi)
                worst = max(worst, _rel(res.evidence, Z, 1e-3), _rel(res.posterior.mu, [m], s),
                            _rel(res.posterior.sigma, [[v]], var))
            else:
                mu, S = rng.normal(size=2), random_spd(rng, 2)
                A = rng.normal(size=(2, 2))
                A /= np.max(np.abs(A), axis=1, keepdims=True)
                my, Sy = A @ mu, A @ S @ A.T
                sy = np.sqrt(np.diag(Sy))
                hi = my + sy * rng.uniform(-0.5, 2.0, size=2)
                lo = np.where(rng.uniform(size=2) < 0.5, hi - sy * rng.uniform(1.0, 3.0, size=2), -np.inf)
                rows = [HalfSpace(tuple(A[k]), float(hi[k])) for k in range(2)]
                rows += [HalfSpace(tuple(-A[k]), float(-lo[k])) for k in range(2) if np.isfinite(lo[k])]
                res = adf_update(GaussianDist(mu, S), ((1, tuple(rows)),))
                Z, m_y, C_y = truncated_moments_2d(my, Sy, lo, hi)
                Ainv = np.linalg.inv(A)
                m, C = Ainv @ m_y, Ainv @ C_y @ Ainv.T
                scale = np.sqrt(np.diag(S))
                worst = max(worst, _rel(res.evidence, Z, 1e-3), _rel(res.posterior.mu, m, scale),
                            _rel(res.posterior.sigma, C, np.outer(scale, scale)))
        closed = adf_update(GaussianDist([0.0], [[1.0]]), ((1, (HalfSpace((1.0,), 0.0),)),))
        err_closed = max(abs(closed.posterior.mu[0] + 0.797885), abs(closed.posterior.sigma[0, 0] - 0.363380))
        ok = worst <= 1e-5 and err_closed <= 1e-6
        acceptance_report(5, ok, f"100 random 1D/2D cases: max rel err {worst:.2e} (<=1e-5); "
                                 f"N(0,1)|x<=0 -> ({closed.posterior.mu[0]:.6f}, {closed.posterior.sigma[0, 0]:.6f})")
        assert ok


class TestCriterion6AffineClosure:
    def test_birth_death(self, acceptance_report):
        net = parse_model(BIRTH_DEATH)
        times = np.linspace(0.5, 10.0, 20)
        mus, sigmas = moment_trajectory(moment_field(net), MomentState([0.0], [[0.0]], 0.0), times)
        exact = 5.0 * (1.0 - np.exp(-times))
        err = max(np.abs(mus[:, 0] - exact).max(), np.abs(sigmas[:, 0, 0] - exact).max())
        ok = err <= 1e-5
        acceptance_report(6, ok, f"birth-death mu and Sigma vs (k/d)(1-exp(-dt)) at 20 points: max err {err:.2e} (<=1e-5)")
        assert ok


class TestCriterion7Structure:
    def test_structural_suite(self, sbi_runs, acceptance_report, tmp_path):
        checks = {}
        worst_partition = 0.0
        monotone = True
        for name in PRESETS:
            _, _, r, _ = sbi_runs(name)
            ok = ~np.isnan(r.evidence)
            monotone &= bool(np.all(np.diff(r.cdf) >= 0) and r.cdf.min() >= 0 and r.cdf.max() <= 1)
            total = r.pi[ok] / r.undetermined[:-1][ok] + r.evidence[ok] + r.false_mass[ok]
            worst_partition = max(worst_partition, float(np.abs(total - 1).max()))
        checks["monotone"] = monotone
        checks["partition"] = worst_partition <= 1e-6

        sir = builtin_model("sir")
        ev = check_path_formula(sir, parse_property("P=? [ F[0,4] X_I < X_R ]", sir.species))
        ev_err = float(np.abs(ev.cdf - (1 - ev.undetermined[1:])).max())
        checks["eventually"] = ev_err <= 1e-9

        steps_ok = True
        for name in ("sir", "sir2"):
            f = parse_property(PRESETS[name].property, sir.species)
            finals = [check_path_formula(sir, f, n_steps=n).cdf[-1] for n in (25, 50, 100, 200, 400)]
            steps_ok &= bool(np.all(np.diff(np.abs(np.diff(finals))) < 0))
        checks["refinement"] = steps_ok

        blobs = []
        for k in range(2):
            prefix = str(tmp_path / f"r{k}")
            code = cli_main(["check", "--model", "sir", "--method", "all", "--samples", "500", "--seed", "7",
                             "--steps", "100", "--output", prefix], io.StringIO())
            blobs.append((code, [open(f"{prefix}_{m}.csv", "rb").read() for m in ("sbi", "ssa", "exact", "comparison")]))
        checks["bytes"] = blobs[0][0] == 0 and blobs[0] == blobs[1]

        ok = all(checks.values())
        acceptance_report(7, ok, f"monotone={checks['monotone']}; partition max dev {worst_partition:.1e} (<=1e-6); "
                                 f"eventually identity {ev_err:.1e} (<=1e-9); refinement shrinking={steps_ok}; "
                                 f"byte-identical reruns={checks['bytes']}")
        assert ok
