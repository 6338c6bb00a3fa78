"""Quantized-phase forward recursion for finite-state information rates.

Two consumers:
  * `qam_rate` — achievable rates of iid per-antenna constellations, via the
    ratio of a conditional and an input-averaged forward pass.
  * `conditional_phase_entropy` — the full-memory conditional differential
    entropy term of the capacity upper bound, via a pilot-tracking recursion
    to the one-step predictive phase density.

All recursions renormalize the state vector every step and handle the
likelihoods in the log domain with max subtraction.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .channel import simulate
from .entropy import LOG_2PI, McEstimate, sample_circular_gaussian
from .errors import ConfigurationError, DomainError, NumericUnderflowError
from .mathcore import TWO_PI, rician_phase_pdf, wrapped_gaussian_cdf

LOG_PI = float(np.log(np.pi))

# Inputs enumerated exactly up to this mixture size; beyond it a seeded
# subset of this size is used and flagged in the estimate metadata.
MAX_MIXTURE_SIZE = 4096


def _wrap_pm_pi(x):
    return np.mod(x + np.pi, TWO_PI) - np.pi


@dataclass(frozen=True)
class PhaseQuantizer:
    """Uniform Q-level grid on [0, 2pi) with the wrapped-Gaussian transition
    kernel integrated over destination cells. The matrix is circulant and
    row-stochastic by construction."""

    q_levels: int
    sigma_delta: float
    grid: np.ndarray
    transition: np.ndarray

    @classmethod
    def build(cls, sigma_delta, q_levels=200):
        if sigma_delta <= 0:
            raise DomainError(f"sigma_delta must be > 0, got {sigma_delta}")
        q = int(q_levels)
        if q < 8:
            raise ConfigurationError(f"q_levels must be >= 8, got {q_levels}")
        grid = TWO_PI * np.arange(q) / q
        w = TWO_PI / q
        row = wrapped_gaussian_cdf(grid + 0.5 * w, sigma_delta) - wrapped_gaussian_cdf(
            grid - 0.5 * w, sigma_delta
        )
        row = row / row.sum()
        idx = (np.arange(q)[None, :] - np.arange(q)[:, None]) % q
        return cls(q, float(sigma_delta), grid, row[idx])

    @property
    def cell_width(self):
        return TWO_PI / self.q_levels


@dataclass(frozen=True)
class RateEstimate:
    """Information rate in bits per channel use with a block-level std error."""

    rate: float
    std_error: float
    block_length: int
    n_blocks: int
    seed: int
    meta: dict = field(default_factory=dict)


def _forward_loglik(transition, log_rows):
    """Accumulate log-likelihood of an observation block.

    `log_rows` iterates per-step log-likelihood vectors over the state grid.
    The state starts from the stationary uniform distribution (which the
    doubly stochastic transition leaves invariant, so propagating it first
    is harmless).
    """
    q = transition.shape[0]
    alpha = np.full(q, 1.0 / q)
    total = 0.0
    for row in log_rows:
        peak = row.max()
        if not np.isfinite(peak):
            raise NumericUnderflowError("non-finite likelihood row in forward recursion")
        v = (alpha @ transition) * np.exp(row - peak)
        c = v.sum()
        if not np.isfinite(c) or c <= 0.0:
            raise NumericUnderflowError(
                "forward-recursion weight underflowed; the phase quantizer is "
                "too coarse at this SNR"
            )
        total += np.log(c) + peak
        alpha = v / c
    return total


def _logsumexp(a, axis):
    peak = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - peak), axis=axis)) + np.squeeze(peak, axis=axis)
    return out


def _conditional_log_rows(y, x, h, grid, m):
    """log p(y_k | theta_q, x_k) for the transmitted symbols, shape (n, Q).

    Uses ||y - e^{j theta} H x||^2 = ||y||^2 + ||Hx||^2 - 2 Re(e^{j theta} y^H Hx).
    """
    hx = x @ h.T
    ip = np.sum(np.conj(y) * hx, axis=1)
    const = -np.sum(np.abs(y) ** 2, axis=1) - np.sum(np.abs(hx) ** 2, axis=1) - m * LOG_PI
    re = np.cos(grid)[None, :] * ip.real[:, None] - np.sin(grid)[None, :] * ip.imag[:, None]
    return 2.0 * re + const[:, None]


def _mixture_log_rows_separable(y, symbols, h_diag, grid, m):
    """Input-averaged log-likelihood rows when H is diagonal.

    The average over the full |X|^m product set factorizes exactly into a
    product of per-antenna sums.
    """
    n = y.shape[0]
    cos_g, sin_g = np.cos(grid), np.sin(grid)
    rows = np.zeros((n, grid.size))
    for i in range(m):
        hs = h_diag[i] * symbols
        hsq = np.abs(hs) ** 2
        b = np.conj(y[:, i])[:, None] * hs[None, :]
        # (n, Q, S) in chunks
        chunk = max(1, int(4_000_000 // (grid.size * symbols.size)))
        for k0 in range(0, n, chunk):
            k1 = min(n, k0 + chunk)
            re = (
                cos_g[None, :, None] * b.real[k0:k1, None, :]
                - sin_g[None, :, None] * b.imag[k0:k1, None, :]
            )
            rows[k0:k1] += _logsumexp(2.0 * re - hsq[None, None, :], axis=2)
    rows -= m * np.log(symbols.size)
    rows += (-np.sum(np.abs(y) ** 2, axis=1) - m * LOG_PI)[:, None]
    return rows


def _mixture_log_rows_dense(y, vectors, h, grid, m):
    """Input-averaged log-likelihood rows for a general H over an explicit
    input-vector list (exhaustive or subsampled)."""
    n = y.shape[0]
    hv = vectors @ h.T
    hsq = np.sum(np.abs(hv) ** 2, axis=1)
    b = np.conj(y) @ hv.T
    cos_g, sin_g = np.cos(grid), np.sin(grid)
    rows = np.empty((n, grid.size))
    chunk = max(1, int(4_000_000 // (grid.size * hv.shape[0])))
    for k0 in range(0, n, chunk):
        k1 = min(n, k0 + chunk)
        re = (
            cos_g[None, :, None] * b.real[k0:k1, None, :]
            - sin_g[None, :, None] * b.imag[k0:k1, None, :]
        )
        rows[k0:k1] = _logsumexp(2.0 * re - hsq[None, None, :], axis=2)
    rows -= np.log(hv.shape[0])
    rows += (-np.sum(np.abs(y) ** 2, axis=1) - m * LOG_PI)[:, None]
    return rows


def _input_vectors(symbols, m, rng=None):
    """All m-fold symbol combinations, or a seeded subset above MAX_MIXTURE_SIZE."""
    total = symbols.size**m
    if total <= MAX_MIXTURE_SIZE:
        mesh = np.meshgrid(*([symbols] * m), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1), False
    idx = rng.integers(0, symbols.size, size=(MAX_MIXTURE_SIZE, m))
    return symbols[idx], True


def qam_rate(
    params,
    constellation,
    quantizer,
    block_length=2000,
    n_blocks=4,
    seed=0,
    theta0=None,
):
    """Achievable rate (bits/channel use) of iid per-antenna signaling.

    Estimates (1/n)[log p(y^n | x^n) - log p(y^n)] with two forward passes
    over the quantized phase state, averaged over independent blocks.
    """
    if block_length < 100:
        raise ConfigurationError(f"block_length must be >= 100, got {block_length}")
    if n_blocks < 1:
        raise ConfigurationError(f"n_blocks must be >= 1, got {n_blocks}")
    if abs(quantizer.sigma_delta - params.sigma_delta) > 1e-12 * max(1.0, params.sigma_delta):
        raise ConfigurationError(
            "quantizer was built for a different sigma_delta than the channel"
        )
    m = params.m
    h = params.effective_h()
    symbols = constellation.scaled_symbols(params.snr, m)
    diag_h = np.allclose(h, np.diag(np.diagonal(h)), atol=0.0)
    meta = {}

    block_rates = np.empty(n_blocks)
    for b in range(n_blocks):
        rng = np.random.default_rng([int(seed), b, 0xA])
        idx = rng.integers(0, symbols.size, size=(block_length, m))
        x = symbols[idx]
        y, _ = simulate(params, x, seed=[int(seed), b, 0xB], theta0=theta0)
        cond_rows = _conditional_log_rows(y, x, h, quantizer.grid, m)
        ll_cond = _forward_loglik(quantizer.transition, cond_rows)
        if symbols.size == 1:
            # the input average is over a single vector: the two passes
            # coincide bit-for-bit and the rate is identically zero
            rows = cond_rows
        elif diag_h:
            rows = _mixture_log_rows_separable(
                y, symbols, np.diagonal(h), quantizer.grid, m
            )
        else:
            vectors, subsampled = _input_vectors(
                symbols, m, np.random.default_rng([int(seed), b, 0xC])
            )
            if subsampled:
                meta["mixture_subset"] = MAX_MIXTURE_SIZE
            rows = _mixture_log_rows_dense(y, vectors, h, quantizer.grid, m)
        ll_mix = _forward_loglik(quantizer.transition, rows)
        block_rates[b] = (ll_cond - ll_mix) / (block_length * np.log(2.0))

    rate = float(block_rates.mean())
    std_error = (
        float(block_rates.std(ddof=1) / np.sqrt(n_blocks)) if n_blocks > 1 else 0.0
    )
    meta.setdefault("mixture_size", symbols.size**m if symbols.size**m <= MAX_MIXTURE_SIZE else MAX_MIXTURE_SIZE)
    return RateEstimate(rate, std_error, int(block_length), int(n_blocks), int(seed), meta)


@dataclass(frozen=True)
class PredictiveEnsemble:
    """Per-sample predictive phase densities from a pilot-tracking recursion.

    Each sample carries p(theta_l | peak-power pilot past), the true phase
    theta_l, and an independent CN(0,1) draw for the current observation.
    The ensemble is independent of xi, so one build serves every point of
    the amplitude optimization with common random numbers.
    """

    snr: float
    grid: np.ndarray
    predictive: np.ndarray
    theta: np.ndarray
    z_test: np.ndarray
    block_ids: np.ndarray
    past_window: int
    n_blocks: int
    seed: int

    @property
    def n_samples(self):
        return self.theta.size

    def cond_entropy(self, xi):
        """h(theta_0 + phi_0(xi^2) | pilot past, |xi + z_0|) in nats.

        Evaluates -log of the predictive density circularly convolved with
        the von Mises conditional of phi_0 given the realized amplitude, at
        the realized observation, and averages per block.
        """
        if xi < 0:
            raise DomainError(f"xi must be >= 0, got {xi}")
        if xi == 0.0:
            return LOG_2PI, 0.0
        zr = xi + self.z_test
        r = np.abs(zr)
        kappa = 2.0 * r * xi
        u0 = self.theta + np.angle(zr)
        delta = u0[:, None] - self.grid[None, :]
        mix = np.sum(self.predictive * np.exp(kappa[:, None] * (np.cos(delta) - 1.0)), axis=1)
        if np.any(mix <= 0.0) or not np.all(np.isfinite(mix)):
            raise NumericUnderflowError(
                "predictive/von-Mises mixture underflowed; quantizer too coarse"
            )
        values = -np.log(mix) + np.log(TWO_PI * special.ive(0, kappa))
        means = np.array(
            [values[self.block_ids == b].mean() for b in range(self.n_blocks)]
        )
        value = float(means.mean())
        se = float(means.std(ddof=1) / np.sqrt(self.n_blocks)) if self.n_blocks > 1 else 0.0
        return value, se


def build_predictive_ensemble(
    params, quantizer, block_length=2000, n_blocks=4, seed=0, past_window=200
):
    """Run the pilot forward recursion and collect predictive densities.

    Pilots are sent at peak power (s^2 = snr); the recursion uses the exact
    phase likelihood p(u_l | theta_l) = f_phi(u_l - theta_l; snr). Samples
    are accumulated once the past holds at least `past_window` symbols (and
    never fewer than 100, the stationarity burn-in).
    """
    if block_length < 100:
        raise ConfigurationError(f"block_length must be >= 100, got {block_length}")
    if abs(quantizer.sigma_delta - params.sigma_delta) > 1e-12 * max(1.0, params.sigma_delta):
        raise ConfigurationError(
            "quantizer was built for a different sigma_delta than the channel"
        )
    burn = max(100, int(past_window))
    n = max(int(block_length), burn + 64)
    q = quantizer.q_levels
    keep = n - burn

    predictive = np.empty((n_blocks * keep, q))
    theta_out = np.empty(n_blocks * keep)
    z_out = np.empty(n_blocks * keep, dtype=complex)
    block_ids = np.repeat(np.arange(n_blocks), keep)

    for b in range(n_blocks):
        rng = np.random.default_rng([int(seed), b, 0xE])
        theta = np.mod(
            rng.uniform(0.0, TWO_PI)
            + np.concatenate([[0.0], np.cumsum(params.sigma_delta * rng.standard_normal(n - 1))]),
            TWO_PI,
        )
        z_pilot = sample_circular_gaussian(rng, n)
        z_test = sample_circular_gaussian(rng, n)
        u = np.mod(theta + np.angle(1.0 + z_pilot / np.sqrt(params.snr)), TWO_PI)
        lik = rician_phase_pdf(_wrap_pm_pi(u[:, None] - quantizer.grid[None, :]), params.snr)

        alpha = np.full(q, 1.0 / q)
        base = b * keep
        for l in range(n):
            if l >= burn:
                predictive[base + l - burn] = alpha
            v = alpha * lik[l]
            c = v.sum()
            if not np.isfinite(c) or c <= 0.0:
                raise NumericUnderflowError("pilot recursion underflowed")
            alpha = (v / c) @ quantizer.transition
        theta_out[base : base + keep] = theta[burn:]
        z_out[base : base + keep] = z_test[burn:]

    return PredictiveEnsemble(
        float(params.snr),
        quantizer.grid,
        predictive,
        theta_out,
        z_out,
        block_ids,
        int(past_window),
        int(n_blocks),
        int(seed),
    )


def adaptive_predictive_ensemble(
    params,
    quantizer,
    block_length=2000,
    n_blocks=4,
    seed=0,
    past_window=200,
    xi_ref=None,
    max_doublings=3,
):
    """Double the past window until the entropy estimate stabilizes.

    The convergence probe is evaluated at `xi_ref` (default sqrt(snr), the
    most window-sensitive point). Stops once the estimate moves by less than
    half its std error.
    """
    xi_ref = np.sqrt(params.snr) if xi_ref is None else xi_ref
    window = int(past_window)
    ensemble = build_predictive_ensemble(
        params, quantizer, block_length, n_blocks, seed, window
    )
    value, _ = ensemble.cond_entropy(xi_ref)
    for _ in range(max_doublings):
        window *= 2
        if window >= block_length:
            break
        wider = build_predictive_ensemble(
            params, quantizer, block_length, n_blocks, seed, window
        )
        new_value, new_se = wider.cond_entropy(xi_ref)
        moved = abs(new_value - value)
        ensemble, value = wider, new_value
        if moved < 0.5 * max(new_se, 1e-12):
            break
    return ensemble


def conditional_phase_entropy(
    xi,
    params,
    quantizer,
    block_length=2000,
    n_blocks=4,
    seed=0,
    past_window=200,
    adapt_window=True,
):
    """h(theta_0 + phi_0(xi^2) | {theta_l + phi_l(snr)}_{l<0}, |xi + z_0|).

    Monte Carlo over simulated pilot pasts with an exact inner conditional
    density on the quantized grid. Returns nats with a block-level std error.
    """
    if not 0.0 <= xi <= np.sqrt(params.snr) * (1.0 + 1e-12):
        raise DomainError(f"xi must lie in [0, sqrt(snr)], got {xi}")
    if adapt_window:
        ensemble = adaptive_predictive_ensemble(
            params, quantizer, block_length, n_blocks, seed, past_window, xi_ref=xi if xi > 0 else None
        )
    else:
        ensemble = build_predictive_ensemble(
            params, quantizer, block_length, n_blocks, seed, past_window
        )
    value, se = ensemble.cond_entropy(xi)
    return McEstimate(value, se, ensemble.n_samples, int(seed))
