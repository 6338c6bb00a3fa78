import numpy as np
import pytest
from scipy import special
from scipy.interpolate import PchipInterpolator

from phasecap.channel import ChannelParams, Constellation, psk_constellation, qam_constellation
from phasecap.entropy import LOG_2PI, entropy_delta_plus_phase, sample_circular_gaussian
from phasecap.errors import ConfigurationError, DomainError, NumericUnderflowError
from phasecap.inforate import (
    PhaseQuantizer,
    _forward_loglik,
    _input_vectors,
    _mixture_log_rows_dense,
    _mixture_log_rows_separable,
    build_predictive_ensemble,
    conditional_phase_entropy,
    qam_rate,
)
from phasecap.mathcore import TWO_PI, rician_phase_pdf, wrapped_gaussian_entropy

SIGMA_6DEG = np.deg2rad(6.0)


class TestPhaseQuantizer:
    def test_rows_stochastic(self):
        q = PhaseQuantizer.build(SIGMA_6DEG, 200)
        assert np.max(np.abs(q.transition.sum(axis=1) - 1.0)) < 1e-12

    def test_circulant(self):
        q = PhaseQuantizer.build(0.4, 64)
        for i in [1, 17, 63]:
            assert np.allclose(q.transition[i], np.roll(q.transition[0], i), atol=1e-15)

    def test_grid(self):
        q = PhaseQuantizer.build(0.4, 100)
        assert q.grid[0] == 0.0
        assert q.grid.size == 100
        assert np.allclose(np.diff(q.grid), TWO_PI / 100)

    def test_transition_mass_matches_wrapped_increment(self):
        # cell mass around zero should match the wrapped-Gaussian CDF over
        # one cell, by construction
        q = PhaseQuantizer.build(0.25, 128)
        from phasecap.mathcore import wrapped_gaussian_cdf

        w = TWO_PI / 128
        expected = wrapped_gaussian_cdf(w / 2, 0.25) - wrapped_gaussian_cdf(-w / 2, 0.25)
        assert q.transition[0, 0] == pytest.approx(expected, rel=1e-10)

    def test_requires_positive_sigma(self):
        with pytest.raises(DomainError):
            PhaseQuantizer.build(0.0, 64)


class TestForwardRecursion:
    def test_constant_rows_accumulate_exactly(self):
        q = PhaseQuantizer.build(0.3, 32)
        consts = [0.5, -1.25, 3.0]
        rows = [np.full(32, c) for c in consts]
        assert _forward_loglik(q.transition, rows) == pytest.approx(sum(consts), abs=1e-12)

    def test_underflow_error(self):
        q = PhaseQuantizer.build(0.3, 16)
        with pytest.raises(NumericUnderflowError):
            _forward_loglik(q.transition, [np.full(16, -np.inf)])


class TestQamRate:
    def test_psk_under_uniform_phase_is_zero(self):
        p = ChannelParams(1, 10.0, 10.0)
        q = PhaseQuantizer.build(10.0, 64)
        est = qam_rate(p, psk_constellation(8), q, block_length=400, n_blocks=2, seed=5)
        assert abs(est.rate) <= 3 * est.std_error + 1e-9

    def test_single_symbol_constellation_exactly_zero(self):
        p = ChannelParams(1, 0.3, 10.0)
        q = PhaseQuantizer.build(0.3, 32)
        one = Constellation("single", np.array([1.0 + 0.5j]))
        est = qam_rate(p, one, q, block_length=200, n_blocks=2, seed=1)
        assert est.rate == 0.0
        assert est.std_error == 0.0

    def test_coherent_awgn_degenerate_vs_mc_oracle(self):
        snr = 10**1.5
        p = ChannelParams(1, 1e-6, snr)
        q = PhaseQuantizer.build(1e-6, 200)
        est = qam_rate(
            p, qam_constellation(64), q, block_length=2000, n_blocks=2, seed=11, theta0=0.0
        )
        symbols = qam_constellation(64).scaled_symbols(snr, 1)
        rng = np.random.default_rng(123)
        n = 200_000
        x = symbols[rng.integers(0, 64, n)]
        w = sample_circular_gaussian(rng, n)
        y = x + w
        d2 = np.abs(y[:, None] - symbols[None, :]) ** 2
        peak = (-d2).max(axis=1)
        lmix = np.log(np.exp(-d2 - peak[:, None]).mean(axis=1)) + peak
        vals = (-np.abs(w) ** 2 - lmix) / np.log(2.0)
        combined = 3 * np.hypot(est.std_error, vals.std() / np.sqrt(n))
        assert est.rate == pytest.approx(vals.mean(), abs=combined)

    def test_monotone_in_snr(self):
        q = PhaseQuantizer.build(SIGMA_6DEG, 128)
        rates = []
        for snr_db in [10.0, 14.0, 18.0]:
            p = ChannelParams(1, SIGMA_6DEG, 10 ** (snr_db / 10))
            rates.append(
                qam_rate(p, qam_constellation(16), q, block_length=500, n_blocks=2, seed=3)
            )
        for lo, hi in zip(rates, rates[1:]):
            slack = 3 * np.hypot(lo.std_error, hi.std_error)
            assert hi.rate >= lo.rate - slack

    def test_rate_within_signaling_limits(self):
        p = ChannelParams(2, SIGMA_6DEG, 100.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 64)
        est = qam_rate(p, qam_constellation(16), q, block_length=300, n_blocks=2, seed=8)
        assert est.rate >= -3 * est.std_error
        assert est.rate <= 2 * 4.0 + 3 * est.std_error

    def test_quantizer_doubling_stability(self):
        for snr_db in [15.0, 25.0]:
            p = ChannelParams(1, SIGMA_6DEG, 10 ** (snr_db / 10))
            vals = []
            for levels in (200, 400):
                q = PhaseQuantizer.build(SIGMA_6DEG, levels)
                vals.append(
                    qam_rate(
                        p, qam_constellation(64), q, block_length=2000, n_blocks=2, seed=7
                    ).rate
                )
            assert abs(vals[1] - vals[0]) < 0.02

    def test_separable_equals_dense_enumeration(self):
        q = PhaseQuantizer.build(SIGMA_6DEG, 48)
        symbols = qam_constellation(16).scaled_symbols(30.0, 2)
        rng = np.random.default_rng(0)
        y = rng.standard_normal((9, 2)) + 1j * rng.standard_normal((9, 2))
        h = np.eye(2, dtype=complex)
        sep = _mixture_log_rows_separable(y, symbols, np.diagonal(h), q.grid, 2)
        vectors, sub = _input_vectors(symbols, 2)
        assert not sub
        dense = _mixture_log_rows_dense(y, vectors, h, q.grid, 2)
        assert np.max(np.abs(sep - dense)) < 1e-10

    def test_sigma_mismatch_rejected(self):
        p = ChannelParams(1, SIGMA_6DEG, 10.0)
        q = PhaseQuantizer.build(0.2, 64)
        with pytest.raises(ConfigurationError):
            qam_rate(p, qam_constellation(16), q, block_length=200, n_blocks=1, seed=0)

    def test_short_block_rejected(self):
        p = ChannelParams(1, SIGMA_6DEG, 10.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 64)
        with pytest.raises(ConfigurationError):
            qam_rate(p, qam_constellation(16), q, block_length=50, n_blocks=1, seed=0)


def single_pilot_entropy_oracle(xi, rho, sigma, n_mc=30_000, seed=17):
    """Exact h(Delta + phi0(xi^2) - phi_{-1}(rho) | r): the conditional
    entropy given exactly one past pilot, computed by Fourier convolution of
    the three circular densities (MC only over the Rician amplitude).

    Upper-bounds the full-past conditional entropy and is tight at high SNR.
    """
    n_harm = 300
    nodes = 16384
    u = TWO_PI * np.arange(nodes) / nodes - np.pi
    f_rice = rician_phase_pdf(u, rho)
    k = np.arange(1, n_harm + 1)
    rice_coeff = (f_rice[None, :] * np.cos(k[:, None] * u[None, :])).sum(axis=1) * (
        TWO_PI / nodes
    )
    wg_coeff = np.exp(-0.5 * (k * sigma) ** 2)
    rng = np.random.default_rng(seed)
    z = sample_circular_gaussian(rng, n_mc)
    kappa = 2.0 * np.abs(xi + z) * xi
    t = np.linspace(np.log1p(kappa.min()), np.log1p(kappa.max()), 129)
    kk = np.expm1(t)
    vm_coeff = special.ive(k[None, :], kk[:, None]) / special.ive(0, kk)[:, None]
    coeff = vm_coeff * (wg_coeff * rice_coeff)[None, :]
    grid_n = 8192
    ug = TWO_PI * np.arange(grid_n) / grid_n
    cos_mat = np.cos(k[:, None] * ug[None, :])
    f = (1.0 + 2.0 * coeff @ cos_mat) / TWO_PI
    f = np.maximum(f, 1e-300)
    h = -(TWO_PI / grid_n) * np.sum(f * np.log(f), axis=1)
    vals = PchipInterpolator(t, h)(np.log1p(kappa))
    return float(vals.mean())


class TestConditionalPhaseEntropy:
    def test_zero_amplitude_uniform(self):
        p = ChannelParams(1, SIGMA_6DEG, 100.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 100)
        est = conditional_phase_entropy(
            0.0, p, q, block_length=300, n_blocks=2, seed=1, adapt_window=False, past_window=100
        )
        assert est.value == pytest.approx(LOG_2PI, abs=1e-12)

    def test_uniform_increment_limit(self):
        p = ChannelParams(1, 10.0, 100.0)
        q = PhaseQuantizer.build(10.0, 100)
        est = conditional_phase_entropy(
            5.0, p, q, block_length=300, n_blocks=2, seed=1, adapt_window=False, past_window=100
        )
        # the unconditional sum with uniform theta0 is uniform: log(2 pi)
        assert est.value == pytest.approx(LOG_2PI, abs=3 * est.std_error + 1e-9)

    def test_full_past_at_most_one_step_entropy(self):
        # conditioning on the noisy past cannot be more informative than
        # perfect knowledge of theta_{-1}: value >= h(Delta + phi0 | r)
        p = ChannelParams(1, SIGMA_6DEG, 100.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 200)
        ens = build_predictive_ensemble(p, q, block_length=1200, n_blocks=4, seed=3)
        for xi in [3.0, 10.0]:
            value, se = ens.cond_entropy(xi)
            simple = entropy_delta_plus_phase(xi, SIGMA_6DEG, 50_000, seed=3)
            slack = 3 * np.hypot(se, simple.std_error)
            assert value >= simple.value - slack

    def test_single_pilot_fourier_oracle(self):
        rho = 100.0
        p = ChannelParams(1, SIGMA_6DEG, rho)
        q = PhaseQuantizer.build(SIGMA_6DEG, 200)
        ens = build_predictive_ensemble(p, q, block_length=2000, n_blocks=4, seed=3)
        xi = np.sqrt(rho)
        value, se = ens.cond_entropy(xi)
        oracle = single_pilot_entropy_oracle(xi, rho, SIGMA_6DEG)
        # full past conditions on more than one pilot: value <= oracle up to
        # Monte Carlo error and the documented quantization slack
        assert value <= oracle + 3 * se + 0.02
        assert value == pytest.approx(oracle, abs=0.06)

    def test_monotone_nonincreasing_in_xi(self):
        p = ChannelParams(1, SIGMA_6DEG, 100.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 200)
        ens = build_predictive_ensemble(p, q, block_length=1000, n_blocks=4, seed=5)
        results = [ens.cond_entropy(xi) for xi in [0.0, 1.0, 3.0, 10.0]]
        for (lo_v, lo_se), (hi_v, hi_se) in zip(results[1:], results[:-1]):
            assert lo_v <= hi_v + 3 * np.hypot(lo_se, hi_se) + 1e-12

    def test_bounded_by_increment_entropy_and_uniform(self):
        p = ChannelParams(1, SIGMA_6DEG, 100.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 200)
        ens = build_predictive_ensemble(p, q, block_length=800, n_blocks=2, seed=6)
        h_delta = wrapped_gaussian_entropy(SIGMA_6DEG)
        for xi in [0.0, 2.0, 10.0]:
            value, se = ens.cond_entropy(xi)
            assert value <= LOG_2PI + 1e-9
            assert value >= h_delta - 0.05 - 3 * se  # 0.05 = quantization slack

    def test_bitwise_reproducible(self):
        p = ChannelParams(1, SIGMA_6DEG, 50.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 100)
        a = conditional_phase_entropy(3.0, p, q, block_length=400, n_blocks=2, seed=9)
        b = conditional_phase_entropy(3.0, p, q, block_length=400, n_blocks=2, seed=9)
        assert a == b

    def test_xi_domain(self):
        p = ChannelParams(1, SIGMA_6DEG, 4.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 64)
        with pytest.raises(DomainError):
            conditional_phase_entropy(3.0, p, q, block_length=200, n_blocks=1, seed=0)

    def test_short_block_rejected(self):
        p = ChannelParams(1, SIGMA_6DEG, 4.0)
        q = PhaseQuantizer.build(SIGMA_6DEG, 64)
        with pytest.raises(ConfigurationError):
            build_predictive_ensemble(p, q, block_length=50, n_blocks=1, seed=0)
