"""Differential-entropy and expectation-of-log estimators.

Quadrature is used wherever the density is available in closed form; Monte
Carlo only for the outer amplitude average of the one-step conditional
entropy. All values are in nats.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DomainError
from .mathcore import DEFAULT_QUADRATURE, TWO_PI, digamma

LOG_2PI = float(np.log(TWO_PI))


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo estimate with its standard error.

    Identical (operation, arguments, seed, n_samples) reproduce the value
    bit-for-bit.
    """

    value: float
    std_error: float
    n_samples: int
    seed: int


def sample_circular_gaussian(rng, size):
    """iid CN(0, 1) draws (unit total variance, 1/2 per component)."""
    g = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return (g[0] + 1j * g[1]) * np.sqrt(0.5)


def expect_log_noncentral(xi, m):
    """E[log(|xi + z1|^2 + sum_{j=2}^m |z_j|^2)] with z_j iid CN(0, 1).

    The sum follows a noncentral chi-square law with 2m degrees of freedom
    and noncentrality xi^2; the expectation is computed by quadrature
    against that density. Exact digamma value at xi = 0.
    """
    if xi < 0:
        raise DomainError(f"xi must be >= 0, got {xi}")
    m = int(m)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if xi < 1e-8:
        return digamma(m)

    def integrand(u):
        # t = u^2; density of t times log(t) times dt = 2u du
        logp = (
            -((u - xi) ** 2)
            + (m - 1) * np.log(u / xi)
            + np.log(special.ive(m - 1, 2.0 * xi * u))
        )
        return 4.0 * u * np.log(u) * np.exp(logp)

    lo = max(0.0, xi - 13.0)
    hi = xi + 13.0 + np.sqrt(2.0 * m)
    return DEFAULT_QUADRATURE.integrate(integrand, lo, hi)


def entropy_abs_sq(xi):
    """Differential entropy of t = |xi + z|^2, z ~ CN(0, 1).

    The density is p(t) = exp(-(t + xi^2)) I0(2 xi sqrt(t)); the entropy is
    integrated in u = sqrt(t) which removes the origin singularity.
    """
    if xi < 0:
        raise DomainError(f"xi must be >= 0, got {xi}")

    def integrand(u):
        logp = -((u - xi) ** 2) + np.log(special.ive(0, 2.0 * xi * u))
        return -2.0 * u * logp * np.exp(logp)

    lo = max(0.0, xi - 13.0)
    hi = xi + 13.0
    return DEFAULT_QUADRATURE.integrate(integrand, lo, hi)


def _harmonic_count(sigma):
    # e^{-K^2 sigma^2 / 2} <= 1e-18  =>  K >= sqrt(2 ln 1e18)/sigma
    return int(min(np.ceil(np.sqrt(2.0 * 18.0 * np.log(10.0)) / sigma) + 1, 4096))


@lru_cache(maxsize=8)
def _circle_grid(n_nodes, n_harmonics):
    u = TWO_PI * np.arange(n_nodes) / n_nodes
    k = np.arange(1, n_harmonics + 1)
    return np.cos(k[:, None] * u[None, :])


def _conv_entropies(sigma, kappas):
    """Entropy (nats) of WrappedGaussian(sigma) circularly convolved with a
    von Mises of concentration kappa, for an array of kappas.

    Both factor densities are symmetric, so the convolution has the Fourier
    cosine series f(u) = (1/2pi)(1 + 2 sum_k c_k cos(k u)) with
    c_k = exp(-k^2 sigma^2 / 2) * I_k(kappa)/I_0(kappa).
    """
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    n_harm = _harmonic_count(sigma)
    n_nodes = int(max(2048, 2 ** np.ceil(np.log2(4 * n_harm))))
    cos_mat = _circle_grid(n_nodes, n_harm)
    k = np.arange(1, n_harm + 1)
    rho = np.exp(-0.5 * (k * sigma) ** 2)
    ratio = special.ive(k[None, :], kappas[:, None]) / special.ive(0, kappas)[:, None]
    coeff = rho[None, :] * ratio
    f = (1.0 + 2.0 * coeff @ cos_mat) / TWO_PI
    f = np.maximum(f, 1e-300)
    return -(TWO_PI / n_nodes) * np.sum(f * np.log(f), axis=1)


def entropy_delta_plus_phase(xi, sigma, n_samples=100_000, seed=0):
    """h(Delta + phi0(xi^2) | |xi + z0|) estimated by Monte Carlo over the
    received amplitude.

    For each draw r = |xi + z| the conditional law of phi0 given r is von
    Mises with concentration 2 r xi, so the inner entropy is the exact
    circular convolution of WrappedGaussian(sigma) with that von Mises.
    It depends on the draw only through kappa = 2 r xi and is evaluated on a
    257-node kappa table with monotone interpolation.

    Returns an `McEstimate` in nats; deterministic given the seed.
    """
    if xi < 0:
        raise DomainError(f"xi must be >= 0, got {xi}")
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    if n_samples < 100:
        raise ConfigurationError(f"n_samples must be >= 100, got {n_samples}")

    rng = np.random.default_rng([int(seed), 0x5E1F])
    z = sample_circular_gaussian(rng, n_samples)
    r = np.abs(xi + z)
    kappa = 2.0 * r * xi

    k_lo, k_hi = float(kappa.min()), float(kappa.max())
    if k_hi - k_lo < 1e-9 * max(1.0, k_hi):
        values = np.full(n_samples, _conv_entropies(sigma, 0.5 * (k_lo + k_hi))[0])
    else:
        t_nodes = np.linspace(np.log1p(k_lo), np.log1p(k_hi), 257)
        h_nodes = _conv_entropies(sigma, np.expm1(t_nodes))
        interp = PchipInterpolator(t_nodes, h_nodes, extrapolate=True)
        values = interp(np.log1p(kappa))

    value = float(values.mean())
    std_error = float(values.std(ddof=1) / np.sqrt(n_samples))
    return McEstimate(value, std_error, int(n_samples), int(seed))
