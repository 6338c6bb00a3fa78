"""Capacity bounds and asymptotics for the peak-constrained Wiener
phase-noise MIMO channel with unitary H.

All internal arithmetic is in nats; `BoundRecord` values are in bits per
channel use (the reporting unit).
"""

from dataclasses import dataclass, field

import numpy as np

from .entropy import LOG_2PI, entropy_abs_sq, entropy_delta_plus_phase, expect_log_noncentral
from .errors import DomainError, OptimizationError
from .inforate import PhaseQuantizer, adaptive_predictive_ensemble
from .mathcore import log_gamma, wrapped_gaussian_entropy

LN2 = float(np.log(2.0))

BOUND_KINDS = (
    "U",
    "U_s",
    "asymptotic",
    "memoryless_plus_corr",
    "qam_lower",
    "nonunitary_upper",
    "nonunitary_lower",
)


def d_alpha(alpha, m):
    """Duality constant log Gamma(alpha) - log Gamma(m) - m + 1."""
    if alpha <= 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    return log_gamma(alpha) - log_gamma(m) - m + 1.0


@dataclass(frozen=True)
class DualityParams:
    """Gamma output-distribution parameters of the duality step."""

    alpha: float
    m: int
    snr: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")

    @property
    def beta(self):
        return (self.snr + self.m) / self.alpha

    @property
    def d_alpha(self):
        return d_alpha(self.alpha, self.m)


@dataclass(frozen=True)
class BoundRecord:
    """One (SNR, bound kind) result row."""

    snr_db: float
    kind: str
    value_bits: float
    std_error_bits: float = 0.0
    opt_alpha: float | None = None
    opt_xi: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise DomainError(f"unknown bound kind {self.kind!r}")
        if not np.isfinite(self.value_bits):
            raise DomainError(f"non-finite bound value for kind {self.kind!r}")
        if self.std_error_bits < 0:
            raise DomainError("std_error_bits must be >= 0")


def g_alpha(alpha, xi, params, cond_entropy, expect_log=None, entropy_abs=None):
    """The amplitude-dependent part of the duality bound, in nats.

    cond_entropy(xi) must return (value_nats, std_error_nats) for the
    conditional-entropy term; its std error propagates linearly. The two
    deterministic backends default to the entropy-module quadratures and
    can be swapped for cross-checking.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    if not 0.0 <= xi <= np.sqrt(params.snr) * (1.0 + 1e-12):
        raise DomainError(f"xi must lie in [0, sqrt(snr)], got {xi}")
    expect_log = expect_log_noncentral if expect_log is None else expect_log
    entropy_abs = entropy_abs_sq if entropy_abs is None else entropy_abs
    m, rho = params.m, params.snr
    h_cond, se = cond_entropy(xi)
    value = (
        (m - alpha) * expect_log(xi, m)
        + alpha * (xi**2 + m) / (rho + m)
        - entropy_abs(xi)
        - h_cond
    )
    return value, se


def _golden_min(f, lo, hi, abs_tol, max_iter=400):
    """Deterministic golden-section minimizer on [lo, hi]."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    for _ in range(max_iter):
        if (b - a) <= abs_tol:
            return best_x, best_f
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
        if f1 < best_f:
            best_x, best_f = x1, f1
        if f2 < best_f:
            best_x, best_f = x2, f2
    raise OptimizationError(
        f"golden section did not reach tol {abs_tol} in {max_iter} iterations",
        best_x=best_x,
        best_value=best_f,
    )


class _DualityOptimizer:
    """min over alpha of the duality prefix plus max over xi of g_alpha.

    All xi-dependent terms (two quadratures and the conditional entropy) are
    cached per xi, so the Monte Carlo noise is frozen over the whole search
    (common random numbers) and the inner max is a well-defined function.
    """

    def __init__(self, params, cond_entropy, xi_points=64, xi_tol_rel=1e-6):
        self.params = params
        self.cond_entropy = cond_entropy
        self.rho = params.snr
        self.m = params.m
        self.root = np.sqrt(self.rho)
        self.grid = np.linspace(0.0, self.root, xi_points)
        self.xi_tol = max(self.root * xi_tol_rel, 1e-12)
        self._terms = {}

    def terms(self, xi):
        xi = float(xi)
        hit = self._terms.get(xi)
        if hit is None:
            h_cond, se = self.cond_entropy(xi)
            hit = (
                expect_log_noncentral(xi, self.m),
                entropy_abs_sq(xi),
                h_cond,
                se,
            )
            self._terms[xi] = hit
        return hit

    def g(self, alpha, xi):
        e1, e2, hc, _ = self.terms(xi)
        return (
            (self.m - alpha) * e1
            + alpha * (xi * xi + self.m) / (self.rho + self.m)
            - e2
            - hc
        )

    def inner_max(self, alpha):
        vals = np.array([self.g(alpha, x) for x in self.grid])
        i = int(np.argmax(vals))
        lo = self.grid[max(i - 1, 0)]
        hi = self.grid[min(i + 1, self.grid.size - 1)]
        x_ref, neg = _golden_min(lambda x: -self.g(alpha, x), lo, hi, self.xi_tol)
        if -neg >= vals[i]:
            return -neg, x_ref
        return float(vals[i]), float(self.grid[i])

    def objective(self, alpha):
        prefix = alpha * np.log((self.rho + self.m) / alpha) + d_alpha(alpha, self.m)
        g_max, _ = self.inner_max(alpha)
        return prefix + LOG_2PI + g_max

    def minimize(self, alpha_bracket=None, alpha_tol=1e-11, scan_points=33):
        lo, hi = alpha_bracket if alpha_bracket is not None else (1e-3, 10.0 * self.m)
        if not 0 < lo < hi:
            raise DomainError(f"bad alpha bracket ({lo}, {hi})")
        ts = np.linspace(np.log(lo), np.log(hi), scan_points)
        scan = np.array([self.objective(np.exp(t)) for t in ts])
        j = int(np.argmin(scan))
        t_lo = ts[max(j - 1, 0)]
        t_hi = ts[min(j + 1, scan_points - 1)]
        t_star, f_star = _golden_min(
            lambda t: self.objective(np.exp(t)), t_lo, t_hi, alpha_tol
        )
        if scan[j] < f_star:
            t_star, f_star = ts[j], scan[j]
        alpha_star = float(np.exp(t_star))
        g_star, xi_star = self.inner_max(alpha_star)
        se = self.terms(xi_star)[3]
        return {
            "value_nats": float(f_star),
            "std_error_nats": float(se),
            "alpha": alpha_star,
            "xi": float(xi_star),
        }


def _require_unitary(params):
    if not params.is_unitary():
        raise DomainError(
            "this bound assumes a unitary channel matrix; use nonunitary_bounds "
            "for general full-rank H"
        )


def upper_bound_U(
    params,
    quantizer=None,
    q_levels=200,
    block_length=2000,
    n_blocks=4,
    past_window=200,
    seed=0,
    xi_points=64,
    alpha_bracket=None,
    alpha_tol=1e-11,
):
    """The capacity upper bound with the full-memory conditional entropy.

    The predictive-phase ensemble is built once per call (adaptive past
    window) and shared across the whole (alpha, xi) search.
    """
    _require_unitary(params)
    if params.sigma_delta <= 0:
        raise DomainError("upper_bound_U requires sigma_delta > 0")
    if quantizer is None:
        quantizer = PhaseQuantizer.build(params.sigma_delta, q_levels)
    ensemble = adaptive_predictive_ensemble(
        params, quantizer, block_length, n_blocks, seed, past_window
    )
    opt = _DualityOptimizer(params, ensemble.cond_entropy, xi_points)
    res = opt.minimize(alpha_bracket, alpha_tol)
    return BoundRecord(
        snr_db=params.snr_db,
        kind="U",
        value_bits=res["value_nats"] / LN2,
        std_error_bits=res["std_error_nats"] / LN2,
        opt_alpha=res["alpha"],
        opt_xi=res["xi"],
        meta={
            "past_window": ensemble.past_window,
            "n_samples": ensemble.n_samples,
            "q_levels": quantizer.q_levels,
            "seed": int(seed),
        },
    )


def upper_bound_Us(
    params,
    n_samples=100_000,
    seed=0,
    xi_points=64,
    alpha_bracket=None,
    alpha_tol=1e-11,
):
    """Simplified upper bound: the memory term is the one-step entropy
    h(Delta + phi_0(xi^2) | |xi + z_0|), no forward recursion involved."""
    _require_unitary(params)
    if params.sigma_delta <= 0:
        raise DomainError("upper_bound_Us requires sigma_delta > 0")

    def cond(xi):
        est = entropy_delta_plus_phase(xi, params.sigma_delta, n_samples, seed)
        return est.value, est.std_error

    opt = _DualityOptimizer(params, cond, xi_points)
    res = opt.minimize(alpha_bracket, alpha_tol)
    return BoundRecord(
        snr_db=params.snr_db,
        kind="U_s",
        value_bits=res["value_nats"] / LN2,
        std_error_bits=res["std_error_nats"] / LN2,
        opt_alpha=res["alpha"],
        opt_xi=res["xi"],
        meta={"n_samples": int(n_samples), "seed": int(seed)},
    )


def memoryless_plus_correction(
    params, xi_points=64, alpha_bracket=None, alpha_tol=1e-11
):
    """Memoryless uniform-phase duality bound plus the SNR-independent
    memory correction log(2pi) - h(Delta). Fully deterministic."""
    _require_unitary(params)
    if params.sigma_delta <= 0:
        raise DomainError("memoryless_plus_correction requires sigma_delta > 0")
    h_delta = wrapped_gaussian_entropy(params.sigma_delta)
    opt = _DualityOptimizer(params, lambda xi: (h_delta, 0.0), xi_points)
    res = opt.minimize(alpha_bracket, alpha_tol)
    return BoundRecord(
        snr_db=params.snr_db,
        kind="memoryless_plus_corr",
        value_bits=res["value_nats"] / LN2,
        std_error_bits=0.0,
        opt_alpha=res["alpha"],
        opt_xi=res["xi"],
        meta={"h_delta_nats": h_delta},
    )


def asymptotic_capacity_nats(m, sigma_delta, snr):
    """High-SNR capacity expansion, in nats."""
    if snr <= 0:
        raise DomainError(f"snr must be > 0, got {snr}")
    if sigma_delta <= 0:
        raise DomainError("asymptotic capacity requires sigma_delta > 0")
    half = m - 0.5
    return (
        half * np.log(snr)
        - np.log(half)
        - log_gamma(m)
        + 0.5 * np.log(np.pi)
        - half
        - wrapped_gaussian_entropy(sigma_delta)
    )


def asymptotic_capacity(params):
    """High-SNR closed-form capacity expression as a BoundRecord (bits)."""
    value = asymptotic_capacity_nats(params.m, params.sigma_delta, params.snr)
    return BoundRecord(
        snr_db=params.snr_db,
        kind="asymptotic",
        value_bits=float(value) / LN2,
        std_error_bits=0.0,
    )


def avg_peak_gap(m):
    """High-SNR capacity loss (nats) of the peak constraint relative to an
    average-power constraint with the same SNR."""
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    half = m - 0.5
    return float(log_gamma(half) - (m - 1.5) * np.log(1.0 / half) + half)


def nonunitary_bounds(curve, lambda_min, lambda_max, snr):
    """Bounds for full-rank non-unitary H from the unitary-case curve.

    `curve` maps a linear SNR to bits/channel-use for the unitary channel;
    the result is the pure SNR-axis shift pair
    (curve(lambda_min * snr), curve(lambda_max * snr)).
    """
    if lambda_min <= 0:
        raise DomainError(f"lambda_min must be > 0, got {lambda_min}")
    if lambda_max < lambda_min:
        raise DomainError("lambda_max must be >= lambda_min")
    return float(curve(lambda_min * snr)), float(curve(lambda_max * snr))
