"""Sequential Bayesian filtering of a time-bounded until property.

At every grid point the Gaussian prior over the state is split into three
regions: the target set, the undetermined set ``C`` and the false set. The
target mass (scaled by the probability of having stayed in ``C`` so far) is
the increment of the first-passage CDF; the prior is then conditioned on
``C`` by assumed density filtering and pushed to the next grid point with the
closed moment equations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IntegrationError
from .gaussian import GaussianConfig, GaussianDist, adf_update, region_prob
from .model import ReactionNetwork
from .moments import INITIAL_VARIANCE, Integrator, MomentState, moment_field
from .properties import PathFormula, compile_regions, rewrite_to_until

EVIDENCE_FLOOR = 1e-12
DEFAULT_STEPS = 200


@dataclass(frozen=True)
class Grid:
    """Uniform time grid ``t_i = i * t_end / n_steps`` for ``i = 0..n_steps``."""

    t_end: float
    n_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError("grid end time must be positive and finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("number of grid steps must be a positive integer")

    @property
    def spacing(self) -> float:
        return self.t_end / self.n_steps

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.spacing


@dataclass(frozen=True)
class EngineConfig:
    """Numerical settings of the filter.

    Attributes
    ----------
    rtol, atol : float
        Tolerances of the moment integrator.
    max_step : float
        Optional cap on the integrator step.
    gaussian : GaussianConfig
        Settings for region masses and their derivatives.
    evidence_floor : float
        Evidence below which the remaining mass counts as absorbed.
    initial_variance : float
        Diagonal covariance placed on the deterministic initial state.
    domain_aware : bool
        Use non-negativity of counts when compiling regions.
    region_limit : int
        Maximum number of polytopes per region.
    track_false_mass : bool
        Also record the prior mass of the false region at every step.
    """

    rtol: float = 1e-6
    atol: float = 1e-8
    max_step: float = math.inf
    gaussian: GaussianConfig = field(default_factory=GaussianConfig)
    evidence_floor: float = EVIDENCE_FLOOR
    initial_variance: float = INITIAL_VARIANCE
    domain_aware: bool = True
    region_limit: int = 64
    track_false_mass: bool = True


@dataclass
class FptResult:
    """First-passage-time CDF of an until property on a grid.

    ``undetermined`` has one more entry than ``times``: ``undetermined[i]``
    is the probability of having stayed in ``C`` at all grid points before
    ``t_i``, so ``absorb_cdf[i] == 1 - undetermined[i + 1]``. ``mu`` and
    ``sigma`` hold the prior moments at each grid point (NaN after early
    absorption). For globally formulae ``satisfaction`` is ``1 - cdf``.
    """

    times: np.ndarray
    pi: np.ndarray
    cdf: np.ndarray
    absorb_cdf: np.ndarray
    evidence: np.ndarray
    undetermined: np.ndarray
    false_mass: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    species: tuple = ()
    absorbed: bool = False
    absorbed_step: int | None = None
    negated: bool = False

    @property
    def satisfaction(self) -> np.ndarray:
        """Probability of the original path formula at each grid time."""
        return 1.0 - self.cdf if self.negated else self.cdf

    @property
    def variances(self) -> np.ndarray:
        return np.diagonal(self.sigma, axis1=1, axis2=2)


def _initial_state(network: ReactionNetwork, config: EngineConfig) -> MomentState:
    return MomentState.deterministic(network.x0, config.initial_variance)


def check_until(network: ReactionNetwork, formula: PathFormula, grid: Grid,
                config: EngineConfig | None = None, *, regions=None, field=None) -> FptResult:
    """First-passage CDF of ``phi1 U[0,t] phi2`` on ``grid``.

    Parameters
    ----------
    network : ReactionNetwork
    formula : PathFormula
        Until formula (other kinds are rewritten first).
    grid : Grid
    config : EngineConfig, optional
    regions, field : optional
        Precompiled regions and moment field, reused across calls.
    """
    config = config or EngineConfig()
    formula = rewrite_to_until(formula)
    if regions is None:
        regions = compile_regions(formula, network, domain_aware=config.domain_aware,
                                  limit=config.region_limit)
    if field is None:
        field = moment_field(network)
    gcfg = config.gaussian
    integrator = Integrator(field, rtol=config.rtol, atol=config.atol, max_step=config.max_step,
                            psd_floor=gcfg.psd_floor)

    times = grid.points
    n_pts = times.size
    n = network.n_species
    pi = np.zeros(n_pts)
    evidence = np.full(n_pts, np.nan)
    false_mass = np.full(n_pts, np.nan)
    undetermined = np.ones(n_pts + 1)
    mus = np.full((n_pts, n), np.nan)
    sigmas = np.full((n_pts, n, n), np.nan)
    absorbed_step = None

    state = _initial_state(network, config)
    for i in range(n_pts):
        prior = GaussianDist(state.mu, state.sigma)
        mus[i], sigmas[i] = prior.mu, prior.sigma
        pi[i] = undetermined[i] * region_prob(prior, regions.target, gcfg.mvn_tol, gcfg.qmc_seed)
        if config.track_false_mass:
            false_mass[i] = region_prob(prior, regions.false_region, gcfg.mvn_tol, gcfg.qmc_seed)
        post = adf_update(prior, regions.C, gcfg, config.evidence_floor)
        evidence[i] = post.evidence
        undetermined[i + 1] = undetermined[i] * post.evidence
        if post.evidence < config.evidence_floor:
            undetermined[i + 2:] = undetermined[i + 1]
            absorbed_step = i
            break
        if i + 1 < n_pts:
            posterior = MomentState(post.posterior.mu, post.posterior.sigma, float(times[i]))
            try:
                state = integrator(posterior, float(times[i + 1]))
            except IntegrationError as exc:
                raise type(exc)(f"step {i} (t={times[i]:g} -> {times[i + 1]:g}): {exc}") from exc

    cdf = np.minimum(np.cumsum(pi), 1.0)
    absorb_cdf = 1.0 - undetermined[1:]
    return FptResult(
        times=times, pi=pi, cdf=cdf, absorb_cdf=absorb_cdf, evidence=evidence,
        undetermined=undetermined, false_mass=false_mass, mu=mus, sigma=sigmas,
        species=tuple(network.species), absorbed=absorbed_step is not None,
        absorbed_step=absorbed_step, negated=formula.negated,
    )


def check_path_formula(network: ReactionNetwork, formula: PathFormula, grid: Grid | None = None,
                       config: EngineConfig | None = None, *, n_steps: int = DEFAULT_STEPS) -> FptResult:
    """Check an until, eventually or globally formula.

    Eventually runs ``tt U phi``; globally runs ``tt U !phi`` and exposes the
    globally probability as ``FptResult.satisfaction``. Without an explicit
    grid the formula's horizon is split into ``n_steps`` intervals.
    """
    if grid is None:
        grid = Grid(formula.horizon, n_steps)
    elif not math.isclose(grid.t_end, formula.horizon, rel_tol=1e-12):
        raise ValueError(f"grid ends at {grid.t_end} but the formula horizon is {formula.horizon}")
    return check_until(network, rewrite_to_until(formula), grid, config)


def with_gaussian(config: EngineConfig, **changes) -> EngineConfig:
    """Copy of ``config`` with fields of its Gaussian settings replaced."""
    return replace(config, gaussian=replace(config.gaussian, **changes))
