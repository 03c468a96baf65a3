"""
Gaussian polytope masses and their derivatives
==============================================

The filter conditions a Gaussian on a polytope by moment matching, using
derivatives of the polytope mass with respect to the mean. This script
compares those derivatives with finite differences and the resulting
posterior with brute-force sampling.

Run with ``python3 demos/gaussian_derivatives.py``.
"""
import numpy as np

from mcsbi.gaussian import GaussianDist, adf_update, cdf_grad_mu, cdf_hess_mu, polytope_prob
from mcsbi.properties import HalfSpace

rng = np.random.default_rng(0)
dist = GaussianDist([0.3, -0.2, 0.5], [[1.0, 0.4, 0.1], [0.4, 1.5, -0.3], [0.1, -0.3, 0.8]])
poly = (HalfSpace((1.0, 0.0, 0.0), 1.0), HalfSpace((-0.5, 1.0, 0.0), 0.4), HalfSpace((0.0, 0.3, -1.0), 0.2))

print(f"mass {polytope_prob(dist, poly):.8f}")

g = cdf_grad_mu(dist, poly)
H = cdf_hess_mu(dist, poly)
h = 1e-5
fd_g = np.array([(polytope_prob(GaussianDist(dist.mu + h * e, dist.sigma), poly, 1e-11)
                  - polytope_prob(GaussianDist(dist.mu - h * e, dist.sigma), poly, 1e-11)) / (2 * h)
                 for e in np.eye(3)])
fd_h = np.array([(cdf_grad_mu(GaussianDist(dist.mu + h * e, dist.sigma), poly)
                  - cdf_grad_mu(GaussianDist(dist.mu - h * e, dist.sigma), poly)) / (2 * h)
                 for e in np.eye(3)])
print("gradient      ", np.round(g, 8))
print("finite diff.  ", np.round(fd_g, 8))
print("Hessian rel. error vs differenced gradient:", np.abs(H - fd_h).max() / np.abs(fd_h).max())

# %%
# Moment matching: the posterior from the derivatives against the sample
# moments of draws that land in the polytope.
post = adf_update(dist, ((1, poly),))
x = rng.multivariate_normal(dist.mu, dist.sigma, size=2_000_000)
A = np.array([p.a for p in poly])
b = np.array([p.b for p in poly])
inside = x[np.all(x @ A.T <= b, axis=1)]
print(f"\nevidence {post.evidence:.5f}, sampled {inside.shape[0] / x.shape[0]:.5f}")
print("posterior mean", np.round(post.posterior.mu, 4), "sampled", np.round(inside.mean(axis=0), 4))
print("posterior cov\n", np.round(post.posterior.sigma, 4), "\nsampled\n", np.round(np.cov(inside.T), 4))
