"""Gaussian measure of signed polytope regions and the ADF moment update.

A polytope ``{x : A x <= b}`` is handled in the transformed space ``y = A x``
where it becomes an orthant: its mass under ``N(mu, Sigma)`` is the
multivariate normal CDF of ``y ~ N(A mu, A Sigma A^T)`` at ``b``. Derivatives
with respect to ``mu`` are formed in ``y``-space from conditional Gaussians
and pulled back through ``A^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .errors import NumericAccuracyError

MAX_DIM = 8
DEGENERATE_VAR = 1e-12
TAIL_Z = 8.5
QMC_SEED = 20180917
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GaussianDist:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(f"covariance shape {sigma.shape} does not match mean of size {mu.size}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class AdfResult:
    evidence: float
    posterior: GaussianDist


@dataclass(frozen=True)
class GaussianConfig:
    mvn_tol: float = 1e-6
    hess_diag: str = "analytic"  # or "fd"
    hess_fd_step_scale: float = 1e-4
    psd_floor: float = 1e-10
    qmc_seed: int = QMC_SEED


DEFAULT_CONFIG = GaussianConfig()


def psd_repair(matrix, floor: float = 1e-10) -> np.ndarray:
    """Symmetrize and clip eigenvalues below ``floor * max(trace, 1)``.

    The trace is taken over the non-negative eigenvalues, so a repaired
    matrix is left unchanged by a second call.
    """
    m = np.asarray(matrix, dtype=float)
    m = 0.5 * (m + m.T)
    if m.size == 0:
        return m
    w, v = np.linalg.eigh(m)
    threshold = floor * max(float(np.sum(np.maximum(w, 0.0))), 1.0)
    # slack for the rounding error of eigh on an already repaired matrix
    if w[0] >= threshold * (1.0 - 1e-3):
        return m
    w = np.maximum(w, threshold)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


# -- univariate and bivariate CDFs -------------------------------------------

_GL_W = (
    (0.1713244923791705, 0.3607615730481384, 0.4679139345726904),
    (0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
     0.2031674267230659, 0.2334925365383547, 0.2491470458134029),
    (0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
     0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
     0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
     0.1527533871307259),
)
_GL_X = (
    (0.9324695142031522, 0.6612093864662647, 0.2386191860831970),
    (0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
     0.5873179542866171, 0.3678314989981802, 0.1252334085114692),
    (0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
     0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
     0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
     0.07652652113349733),
)


def _phid(x: float) -> float:
    return float(ndtr(x))


def bvn_upper(h: float, k: float, r: float) -> float:
    """``P(X > h, Y > k)`` for standard bivariate normal with correlation ``r``.

    Drezner-Wesolowsky with Gauss-Legendre quadrature as refined by Genz;
    accurate to about 1e-15.
    """
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return 1.0 if k == -math.inf else _phid(-k)
    if k == -math.inf:
        return _phid(-h)
    ar = abs(r)
    ng = 0 if ar < 0.3 else (1 if ar < 0.75 else 2)
    w, x = _GL_W[ng], _GL_X[ng]
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for wi, xi in zip(w, x):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (1.0 + sgn * xi) / 2.0)
                bvn += wi * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (2.0 * _TWO_PI) + _phid(-h) * _phid(-k)
    else:
        if r < 0:
            k = -k
            hk = -hk
        if ar < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / as_ + hk) / 2.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0)
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(_TWO_PI) * _phid(-b / a)
                bvn -= math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            a = a / 2.0
            for wi, xi in zip(w, x):
                for sgn in (-1.0, 1.0):
                    xs = (a + a * sgn * xi) ** 2
                    rs = math.sqrt(1.0 - xs)
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * xs * (1.0 + d * xs)
                        ep = math.exp(-hk * xs / (2.0 * (1.0 + rs) ** 2)) / rs
                        bvn += a * wi * math.exp(asr) * (ep - sp)
            bvn = -bvn / _TWO_PI
        if r > 0:
            bvn += _phid(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            L = _phid(k) - _phid(h) if h < 0 else _phid(-h) - _phid(-k)
            bvn = L - bvn
    return max(0.0, min(1.0, bvn))


def bvn_cdf(h: float, k: float, r: float) -> float:
    """``P(X <= h, Y <= k)`` for standard bivariate normal with correlation ``r``."""
    return bvn_upper(-h, -k, r)


# -- three dimensions: adaptive quadrature over one coordinate ---------------

def _trivariate(z, R, tol):
    """``P(Y <= z)`` for a standard trivariate normal with correlation ``R``.

    Integrates ``phi(t) P(other two <= z | Y_k = t)`` over the most
    restrictive coordinate ``k`` with adaptive Gauss-Kronrod quadrature; the
    conditional bivariate CDF is exact. Unlike lattice or QMC rules this does
    not miss small, sharply bounded deficits near singular correlations.
    """
    k = int(np.argmin(z))
    j, l = [i for i in range(3) if i != k]
    rj, rl = float(R[j, k]), float(R[l, k])
    sj = math.sqrt(max(1.0 - rj * rj, 0.0))
    sl = math.sqrt(max(1.0 - rl * rl, 0.0))
    rc = 0.0
    if sj > 1e-8 and sl > 1e-8:
        rc = min(max((float(R[j, l]) - rj * rl) / (sj * sl), -1.0), 1.0)
    zj, zl = float(z[j]), float(z[l])

    def cond(t):
        if sj <= 1e-8 or sl <= 1e-8:
            # a degenerate conditional coordinate is a step in t
            ok_j = rj * t <= zj if sj <= 1e-8 else True
            ok_l = rl * t <= zl if sl <= 1e-8 else True
            if not (ok_j and ok_l):
                return 0.0
            if sj <= 1e-8 and sl <= 1e-8:
                return 1.0
            if sj <= 1e-8:
                return _phid((zl - rl * t) / sl)
            return _phid((zj - rj * t) / sj)
        return bvn_cdf((zj - rj * t) / sj, (zl - rl * t) / sl, rc)

    density = 1.0 / math.sqrt(_TWO_PI)
    upper = float(z[k])
    if upper <= -TAIL_Z:
        return 0.0, 0.0
    val, err = quad(lambda t: density * math.exp(-0.5 * t * t) * cond(t), -TAIL_Z, upper,
                    epsabs=0.01 * tol, epsrel=0.0, limit=200)
    return min(max(val, 0.0), 1.0), float(err)


# -- quasi-Monte Carlo for three or more dimensions --------------------------

@lru_cache(maxsize=64)
def _qmc_points(dim: int, log2n: int, n_shifts: int, seed: int) -> np.ndarray:
    """Scrambled Sobol point sets, one per randomisation; fixed by ``seed``."""
    seeds = np.random.SeedSequence([seed, dim, log2n]).spawn(n_shifts)
    sets = [qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(s)).random_base2(log2n) for s in seeds]
    pts = np.stack(sets)
    pts.setflags(write=False)
    return pts


def _sov_order(b, cov):
    """Genz-Bretz variable ordering and semi-definite Cholesky factor."""
    d = b.size
    b = b.copy()
    c = cov.copy()
    perm = np.arange(d)
    L = np.zeros((d, d))
    y = np.zeros(d)
    for i in range(d):
        best, best_j, best_val = math.inf, i, 0.0
        for j in range(i, d):
            var = c[j, j] - L[j, :i] @ L[j, :i]
            if var > DEGENERATE_VAR:
                s = math.sqrt(var)
                val = _phid((b[j] - L[j, :i] @ y[:i]) / s)
            else:
                val = 1.0 if L[j, :i] @ y[:i] <= b[j] else 0.0
            if val < best:
                best, best_j = val, j
        if best_j != i:
            for arr in (b, perm, y):
                arr[[i, best_j]] = arr[[best_j, i]]
            c[[i, best_j], :] = c[[best_j, i], :]
            c[:, [i, best_j]] = c[:, [best_j, i]]
            L[[i, best_j], :] = L[[best_j, i], :]
        var = c[i, i] - L[i, :i] @ L[i, :i]
        if var > DEGENERATE_VAR * max(c[i, i], 1.0):
            L[i, i] = math.sqrt(var)
            for j in range(i + 1, d):
                L[j, i] = (c[j, i] - L[j, :i] @ L[i, :i]) / L[i, i]
            upper = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
            p = _phid(upper)
            # mean of the standard normal truncated above at ``upper``
            y[i] = -math.exp(-0.5 * upper * upper) / math.sqrt(_TWO_PI) / p if p > 1e-300 else upper
        else:
            L[i, i] = 0.0
            y[i] = 0.0
    return b, L


def _sov_qmc(b, cov, tol, seed):
    """Separation-of-variables estimate of ``P(Y <= b)``, ``Y ~ N(0, cov)``."""
    d = b.size
    b, L = _sov_order(b, cov)
    n_shifts = 8
    estimate, error = 0.0, math.inf
    for log2n in range(10, 18):
        u = _qmc_points(d - 1, log2n, n_shifts, seed)
        n = u.shape[1]
        ys = np.zeros((n_shifts, n, d))
        prob = np.ones((n_shifts, n))
        for i in range(d):
            shift = ys[:, :, :i] @ L[i, :i]
            if L[i, i] > 0.0:
                e = ndtr((b[i] - shift) / L[i, i])
            else:
                e = (shift <= b[i]).astype(float)
            prob *= e
            if i < d - 1 and L[i, i] > 0.0:
                w = np.clip(u[:, :, i] * e, 1e-300, 1.0 - 1e-16)
                ys[:, :, i] = ndtri(w)
        per_shift = prob.mean(axis=1)
        estimate = float(per_shift.mean())
        error = 3.0 * float(per_shift.std(ddof=1)) / math.sqrt(n_shifts)
        if error <= tol:
            break
    return estimate, error


# -- orthant probabilities ---------------------------------------------------

def _orthant(b, m, S, tol, seed, with_error=False):
    """``P(Y <= b)`` for ``Y ~ N(m, S)`` (all arrays in y-space)."""
    b = np.asarray(b, dtype=float)
    m = np.asarray(m, dtype=float)
    S = np.asarray(S, dtype=float)
    var = np.diag(S).copy()
    keep = var > DEGENERATE_VAR
    if np.any(~keep & (m > b)):
        return (0.0, 0.0) if with_error else 0.0
    b, m, S, var = b[keep], m[keep], S[np.ix_(keep, keep)], var[keep]
    sd = np.sqrt(var)
    z = (b - m) / sd
    if np.any(z < -TAIL_Z):
        return (0.0, 0.0) if with_error else 0.0
    # a limit this far in the upper tail changes the mass by < 1e-17
    slack = z > TAIL_Z
    if np.any(slack):
        keep = ~slack
        b, m, S, sd, z = b[keep], m[keep], S[np.ix_(keep, keep)], sd[keep], z[keep]
    d = b.size
    err = 0.0
    if d == 0:
        p = 1.0
    else:
        if d == 1:
            p = float(ndtr(z[0]))
        elif d == 2:
            r = float(np.clip(S[0, 1] / (sd[0] * sd[1]), -1.0, 1.0))
            p = bvn_cdf(float(z[0]), float(z[1]), r)
        else:
            if d > MAX_DIM:
                raise ValueError(f"multivariate normal CDF limited to {MAX_DIM} dimensions, got {d}")
            if np.any(z == -np.inf):
                p = 0.0
            else:
                finite = np.isfinite(z)
                R = S / np.outer(sd, sd)
                if not np.all(finite):
                    z, R = z[finite], R[np.ix_(finite, finite)]
                if z.size <= 2:
                    return _orthant(z, np.zeros(z.size), R, tol, seed, with_error)
                if z.size == 3:
                    p, err = _trivariate(z, R, tol)
                else:
                    p, err = _sov_qmc(z, R, tol, seed)
    return (p, err) if with_error else p


def mvn_cdf(upper, dist: GaussianDist, tol: float = 1e-6, *, seed: int = QMC_SEED, return_error: bool = False):
    """``P(X <= upper)`` componentwise for ``X ~ dist``.

    One dimension uses the error function, two dimensions the bivariate
    Gauss-Legendre formula, three dimensions adaptive quadrature of the exact
    conditional bivariate CDF, and four or more a fixed-seed randomised
    quasi-Monte Carlo separation-of-variables integral. The error estimate
    (quadrature error or 3 standard errors) is returned with
    ``return_error=True``.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if upper.size != dist.dim:
        raise ValueError("upper limit dimension does not match the distribution")
    if dist.dim > MAX_DIM:
        raise ValueError(f"multivariate normal CDF limited to {MAX_DIM} dimensions, got {dist.dim}")
    w = np.linalg.eigvalsh(0.5 * (dist.sigma + dist.sigma.T)) if dist.dim else np.zeros(0)
    if w.size and w[0] < -1e-9 * max(float(np.trace(dist.sigma)), 1.0):
        raise ValueError("covariance matrix is not positive semi-definite")
    return _orthant(upper, dist.mu, dist.sigma, tol, seed, with_error=return_error)


# -- polytope mass and derivatives ------------------------------------------

def _transform(dist: GaussianDist, poly):
    if not poly:
        return None
    A = np.array([h.a for h in poly], dtype=float)
    b = np.array([h.b for h in poly], dtype=float)
    m = A @ dist.mu
    S = A @ dist.sigma @ A.T
    return A, b, m, 0.5 * (S + S.T)


def _pieces(dist: GaussianDist, poly):
    """Signed orthants ``(sign, A, b, m, S)`` whose masses sum to the polytope mass.

    A pair of opposite rows ``l <= a.x <= u`` is a slab; it is written as
    ``P(a.x <= u, ...) - P(a.x <= l, ...)`` so that no orthant carries two
    perfectly anti-correlated coordinates. An empty polytope gives ``None``.
    """
    if not poly:
        return None
    A = np.array([h.a for h in poly], dtype=float)
    b = np.array([h.b for h in poly], dtype=float)
    used = np.zeros(len(poly), dtype=bool)
    uppers, lowers, singles = [], [], []
    for i in range(len(poly)):
        if used[i]:
            continue
        used[i] = True
        for j in range(i + 1, len(poly)):
            if not used[j] and np.array_equal(A[j], -A[i]):
                used[j] = True
                uppers.append((A[i], b[i]))
                lowers.append(-b[j])
                break
        else:
            singles.append(i)
    if not uppers:
        return [(1,) + _transform(dist, poly)]
    out = []
    k = len(uppers)
    for mask in range(1 << k):
        rows, bounds, sign = [], [], 1
        for q, (a, u) in enumerate(uppers):
            if mask >> q & 1:
                rows.append(a)
                bounds.append(lowers[q])
                sign = -sign
            else:
                rows.append(a)
                bounds.append(u)
        rows += [A[i] for i in singles]
        bounds += [b[i] for i in singles]
        Ap = np.array(rows)
        bp = np.array(bounds)
        S = Ap @ dist.sigma @ Ap.T
        out.append((sign, Ap, bp, Ap @ dist.mu, 0.5 * (S + S.T)))
    return out


def _conditional(b, m, S, idx):
    """Mean, covariance and limits of the other coordinates given ``y[idx] = b[idx]``."""
    d = b.size
    idx = list(idx)
    rest = [i for i in range(d) if i not in idx]
    Sii = S[np.ix_(idx, idx)]
    Sri = S[np.ix_(rest, idx)]
    K = np.linalg.solve(Sii, Sri.T).T if rest else np.zeros((0, len(idx)))
    cm = m[rest] + K @ (b[idx] - m[idx])
    cS = S[np.ix_(rest, rest)] - K @ Sri.T
    return b[rest], cm, 0.5 * (cS + cS.T)


def _density1(x, m, v):
    return math.exp(-0.5 * (x - m) ** 2 / v) / math.sqrt(_TWO_PI * v)


def _density2(x, m, S):
    det = S[0, 0] * S[1, 1] - S[0, 1] ** 2
    if det <= DEGENERATE_VAR * S[0, 0] * S[1, 1]:
        # singular pair: a line density, zero at a generic point
        return 0.0
    dx = x - m
    q = (S[1, 1] * dx[0] ** 2 - 2 * S[0, 1] * dx[0] * dx[1] + S[0, 0] * dx[1] ** 2) / det
    return math.exp(-0.5 * q) / (_TWO_PI * math.sqrt(det))


def _active(b, m, S):
    """Drop degenerate coordinates; ``None`` if one of them is violated."""
    var = np.diag(S)
    keep = var > DEGENERATE_VAR
    if np.any(~keep & (m > b)):
        return None
    return np.flatnonzero(keep)


def _orthant_grad_m(b, m, S, tol, seed):
    """Gradient of ``P(Y <= b)`` with respect to the mean ``m``."""
    d = b.size
    g = np.zeros(d)
    act = _active(b, m, S)
    if act is None:
        return g
    bb, mm, SS = b[act], m[act], S[np.ix_(act, act)]
    for k in range(act.size):
        fk = _density1(bb[k], mm[k], SS[k, k])
        if fk == 0.0:
            continue
        cb, cm, cS = _conditional(bb, mm, SS, [k])
        g[act[k]] = -fk * _orthant(cb, cm, cS, tol, seed)
    return g


def _orthant_hess_m(b, m, S, tol, seed, diag="analytic", step_scale=1e-4):
    """Hessian of ``P(Y <= b)`` with respect to ``m``.

    Mixed entries are ``f(b_k, b_l) P(rest <= b | y_k = b_k, y_l = b_l)``. The
    diagonal follows from differentiating ``f(b_k) P(rest | y_k = b_k)``
    through the conditional mean, which gives
    ``H_kk = ((b_k - m_k) g_k - sum_{l != k} S_kl H_kl) / S_kk``.
    """
    d = b.size
    H = np.zeros((d, d))
    act = _active(b, m, S)
    if act is None:
        return H
    bb, mm, SS = b[act], m[act], S[np.ix_(act, act)]
    n = act.size
    Ha = np.zeros((n, n))
    for k in range(n):
        for l in range(k + 1, n):
            pair = [k, l]
            f = _density2(bb[pair], mm[pair], SS[np.ix_(pair, pair)])
            if f == 0.0:
                continue
            cb, cm, cS = _conditional(bb, mm, SS, pair)
            Ha[k, l] = Ha[l, k] = f * _orthant(cb, cm, cS, tol, seed)
    if diag == "analytic":
        g = _orthant_grad_m(bb, mm, SS, tol, seed)
        for k in range(n):
            off = sum(SS[k, l] * Ha[k, l] for l in range(n) if l != k)
            Ha[k, k] = ((bb[k] - mm[k]) * g[k] - off) / SS[k, k]
    elif diag == "fd":
        for k in range(n):
            h = step_scale * (1.0 + abs(mm[k]))
            e = np.zeros(n)
            e[k] = h
            gp = _orthant_grad_m(bb, mm + e, SS, tol, seed)[k]
            gm = _orthant_grad_m(bb, mm - e, SS, tol, seed)[k]
            Ha[k, k] = (gp - gm) / (2 * h)
    else:
        raise ValueError(f"unknown Hessian diagonal method {diag!r}")
    H[np.ix_(act, act)] = Ha
    return H


def polytope_prob(dist: GaussianDist, poly, tol: float = 1e-6, seed: int = QMC_SEED) -> float:
    pieces = _pieces(dist, poly)
    if pieces is None:
        return 1.0
    return sum(sign * _orthant(b, m, S, tol, seed) for sign, A, b, m, S in pieces)


def cdf_grad_mu(dist: GaussianDist, poly, tol: float = 1e-6, seed: int = QMC_SEED) -> np.ndarray:
    """Gradient of the polytope mass with respect to the mean."""
    g = np.zeros(dist.dim)
    for sign, A, b, m, S in _pieces(dist, poly) or ():
        g += sign * (A.T @ _orthant_grad_m(b, m, S, tol, seed))
    return g


def cdf_hess_mu(dist: GaussianDist, poly, tol: float = 1e-6, seed: int = QMC_SEED,
                diag: str = "analytic", step_scale: float = 1e-4) -> np.ndarray:
    """Hessian of the polytope mass with respect to the mean (symmetric)."""
    H = np.zeros((dist.dim, dist.dim))
    for sign, A, b, m, S in _pieces(dist, poly) or ():
        H += sign * (A.T @ _orthant_hess_m(b, m, S, tol, seed, diag, step_scale) @ A)
    return 0.5 * (H + H.T)


def region_prob(dist: GaussianDist, region, tol: float = 1e-6, seed: int = QMC_SEED,
                clamp_tol: float = 1e-6) -> float:
    """Signed sum of polytope masses, clamped to [0, 1]."""
    total = 0.0
    for sign, poly in region:
        total += sign * polytope_prob(dist, poly, tol, seed)
    excess = max(-total, total - 1.0, 0.0)
    if excess > clamp_tol:
        raise NumericAccuracyError(f"region probability {total!r} outside [0, 1] by {excess:.3g}")
    return min(max(total, 0.0), 1.0)


def region_derivatives(dist: GaussianDist, region, config: GaussianConfig = DEFAULT_CONFIG):
    """Unclamped mass, gradient and Hessian of a signed region w.r.t. the mean."""
    n = dist.dim
    Z = 0.0
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for sign, poly in region:
        pieces = _pieces(dist, poly)
        if pieces is None:
            Z += sign
            continue
        for s2, A, b, m, S in pieces:
            w = sign * s2
            Z += w * _orthant(b, m, S, config.mvn_tol, config.qmc_seed)
            grad += w * (A.T @ _orthant_grad_m(b, m, S, config.mvn_tol, config.qmc_seed))
            Hy = _orthant_hess_m(b, m, S, config.mvn_tol, config.qmc_seed, config.hess_diag,
                                 config.hess_fd_step_scale)
            hess += w * (A.T @ Hy @ A)
    return Z, grad, 0.5 * (hess + hess.T)


def adf_update(prior: GaussianDist, region, config: GaussianConfig = DEFAULT_CONFIG,
               evidence_floor: float = 0.0) -> AdfResult:
    """Gaussian projection of the prior truncated to ``region``.

    ``mu' = mu + Sigma d log Z`` and ``Sigma' = Sigma + Sigma (d^2 log Z) Sigma``
    with the derivatives taken with respect to the prior mean.
    """
    Z, dZ, d2Z = region_derivatives(prior, region, config)
    if Z > 1.0 + 1e-6 or Z < -1e-6:
        raise NumericAccuracyError(f"evidence {Z!r} outside [0, 1]")
    Z = min(max(Z, 0.0), 1.0)
    if Z <= evidence_floor or Z == 0.0:
        return AdfResult(Z, prior)
    dlog = dZ / Z
    d2log = d2Z / Z - np.outer(dlog, dlog)
    if not (np.all(np.isfinite(dlog)) and np.all(np.isfinite(d2log))):
        raise NumericAccuracyError("non-finite log-evidence derivative")
    S = prior.sigma
    mu = prior.mu + S @ dlog
    sigma = S + S @ d2log @ S
    return AdfResult(Z, GaussianDist(mu, psd_repair(sigma, config.psd_floor)))
