"""MIMO Wiener phase-noise channel: parameters, samplers, constellations,
LoS geometry, and the truncated isotropic input used for diagnostics.

Model: y_k = e^{j theta_k} H x_k + w_k with w_k ~ CN(0, I_M) and theta a
Wiener phase process with increment std `sigma_delta`, under the per-symbol
peak constraint ||x_k||^2 <= snr.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, PeakPowerError, RankError, SchemaError
from .entropy import sample_circular_gaussian
from .mathcore import TWO_PI

SPEED_OF_LIGHT = 2.99792458e8  # m/s


@dataclass(frozen=True)
class ChannelParams:
    """Channel parameterization.

    `h_matrix=None` means a unitary channel, taken as the identity without
    loss of generality. `snr` is the peak power rho in linear scale.
    """

    m: int
    sigma_delta: float
    snr: float
    h_matrix: np.ndarray | None = None

    def __post_init__(self):
        if int(self.m) < 1:
            raise DomainError(f"antenna count must be >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        if self.sigma_delta < 0:
            raise DomainError(f"sigma_delta must be >= 0, got {self.sigma_delta}")
        if self.snr <= 0:
            raise DomainError(f"snr must be > 0, got {self.snr}")
        if self.h_matrix is not None:
            h = np.asarray(self.h_matrix, dtype=complex)
            if h.shape != (self.m, self.m):
                raise DomainError(f"h_matrix must be {self.m}x{self.m}, got {h.shape}")
            s = np.linalg.svd(h, compute_uv=False)
            if s[-1] <= 1e-12 * s[0]:
                raise RankError("h_matrix is numerically rank deficient")
            object.__setattr__(self, "h_matrix", h)

    def effective_h(self):
        if self.h_matrix is None:
            return np.eye(self.m, dtype=complex)
        return self.h_matrix

    def is_unitary(self):
        if self.h_matrix is None:
            return True
        h = self.h_matrix
        return bool(np.max(np.abs(h.conj().T @ h - np.eye(self.m))) < 1e-9)

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.snr)


@dataclass(frozen=True)
class PhaseTrajectory:
    """A realization of the wrapped Wiener phase process, in [0, 2pi)."""

    theta: np.ndarray

    def increments(self):
        return np.mod(np.diff(self.theta), TWO_PI)


def sample_phase_trajectories(sigma_delta, length, count, seed, theta0=None):
    """Draw `count` stationary trajectories of given length.

    theta0 defaults to uniform on [0, 2pi) (stationary start); passing a
    float forces a deterministic initial phase (degenerate tests only).
    """
    if length < 1:
        raise ConfigurationError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    if theta0 is None:
        start = rng.uniform(0.0, TWO_PI, size=count)
    else:
        start = np.full(count, float(theta0))
    steps = sigma_delta * rng.standard_normal((count, length - 1)) if length > 1 else np.empty((count, 0))
    theta = np.concatenate([start[:, None], start[:, None] + np.cumsum(steps, axis=1)], axis=1)
    return np.mod(theta, TWO_PI)


def simulate(params, inputs, seed, theta0=None, noise_scale=1.0):
    """Run the channel over a block of input vectors.

    Parameters
    ----------
    params : ChannelParams
    inputs : (n, m) complex array; every row must satisfy ||x||^2 <= snr.
    seed : int or sequence of ints for the noise/phase generator.
    theta0 : optional float to force the initial phase (tests only).
    noise_scale : multiplies the additive noise (0 disables it; tests only).

    Returns
    -------
    (outputs, trajectory) : ((n, m) complex array, PhaseTrajectory)
    """
    x = np.asarray(inputs, dtype=complex)
    if x.ndim != 2 or x.shape[1] != params.m:
        raise DomainError(f"inputs must have shape (n, {params.m}), got {x.shape}")
    power = np.sum(np.abs(x) ** 2, axis=1)
    bad = np.flatnonzero(power > params.snr * (1.0 + 1e-12))
    if bad.size:
        k = int(bad[0])
        raise PeakPowerError(k, float(power[k]), float(params.snr))
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    if theta0 is None:
        start = rng.uniform(0.0, TWO_PI)
    else:
        start = float(theta0)
    steps = params.sigma_delta * rng.standard_normal(n - 1) if n > 1 else np.empty(0)
    theta = np.mod(np.concatenate([[start], start + np.cumsum(steps)]), TWO_PI)
    w = sample_circular_gaussian(rng, (n, params.m)) * noise_scale
    hx = x @ params.effective_h().T
    y = np.exp(1j * theta)[:, None] * hx + w
    return y, PhaseTrajectory(theta)


@dataclass(frozen=True)
class Constellation:
    """A finite complex symbol set, one independent symbol per antenna.

    With `normalization="peak"` (default) the per-antenna scale is chosen so
    the worst-case M-antenna vector meets the peak constraint with equality;
    "average" instead makes the mean vector power equal to snr, for
    sensitivity checks.
    """

    name: str
    symbols: np.ndarray
    normalization: str = "peak"

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=complex).ravel()
        if s.size < 1:
            raise ConfigurationError("constellation must contain at least one symbol")
        if np.unique(s).size != s.size:
            raise ConfigurationError("constellation symbols must be distinct")
        if self.normalization not in ("peak", "average"):
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "symbols", s)

    @property
    def order(self):
        return self.symbols.size

    @property
    def bits_per_symbol(self):
        return float(np.log2(self.order))

    def scaled_symbols(self, snr, m):
        """Per-antenna symbols scaled for an m-antenna vector at peak power snr."""
        if self.normalization == "peak":
            ref = np.max(np.abs(self.symbols))
        else:
            ref = np.sqrt(np.mean(np.abs(self.symbols) ** 2))
        return self.symbols * (np.sqrt(snr / m) / ref)


def qam_constellation(order, normalization="peak"):
    """Square QAM with Gray-agnostic natural ordering of the lattice."""
    side = int(round(np.sqrt(order)))
    if side * side != order or order < 4:
        raise ConfigurationError(f"QAM order must be a square >= 4, got {order}")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    re, im = np.meshgrid(levels, levels)
    return Constellation(f"QAM-{order}", (re + 1j * im).ravel(), normalization)


def psk_constellation(order, normalization="peak"):
    if order < 2:
        raise ConfigurationError(f"PSK order must be >= 2, got {order}")
    return Constellation(
        f"PSK-{order}", np.exp(2j * np.pi * np.arange(order) / order), normalization
    )


def constellation_by_name(name, normalization="peak"):
    """Parse labels like "qam64" or "psk8"."""
    label = name.strip().lower().replace("-", "")
    if label.startswith("qam"):
        return qam_constellation(int(label[3:]), normalization)
    if label.startswith("psk"):
        return psk_constellation(int(label[3:]), normalization)
    raise ConfigurationError(f"unknown constellation {name!r}")


def los_antenna_spacing(wavelength, range_m, m):
    """Antenna spacing d = sqrt(lambda R / M) that makes the LoS channel
    matrix unitary."""
    if wavelength <= 0 or range_m <= 0 or m < 1:
        raise DomainError("wavelength, range and antenna count must be positive")
    return float(np.sqrt(wavelength * range_m / m))


def wavelength_from_ghz(freq_ghz):
    if freq_ghz <= 0:
        raise DomainError(f"frequency must be > 0, got {freq_ghz}")
    return SPEED_OF_LIGHT / (freq_ghz * 1e9)


def singular_value_bounds(h_matrix):
    """Extreme eigenvalues (lambda_min, lambda_max) of H^H H."""
    h = np.asarray(h_matrix, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DomainError(f"h_matrix must be square, got {h.shape}")
    eigs = np.linalg.eigvalsh(h.conj().T @ h)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    if lam_min <= (1e-12) ** 2 * lam_max or lam_min <= 0:
        raise RankError("h_matrix is numerically rank deficient")
    return lam_min, lam_max


def sample_lb_input(m, snr, snr0, seed, size=None):
    """Draw inputs x = sqrt(snr) z from the truncated isotropic density with
    radial law proportional to r^(2m-2) on [sqrt(snr0/snr), 1].

    Guarantees snr0 <= ||x||^2 <= snr for every draw.
    """
    if not 0 < snr0 < snr:
        raise ConfigurationError(f"need 0 < snr0 < snr, got snr0={snr0}, snr={snr}")
    n = 1 if size is None else int(size)
    rng = np.random.default_rng(seed)
    r_lo = np.sqrt(snr0 / snr)
    p = 2 * m - 1
    u = rng.uniform(size=n)
    radius = (r_lo**p + u * (1.0 - r_lo**p)) ** (1.0 / p)
    g = sample_circular_gaussian(rng, (n, m))
    direction = g / np.linalg.norm(g, axis=1, keepdims=True)
    x = np.sqrt(snr) * radius[:, None] * direction
    return x[0] if size is None else x


def load_channel_matrix(path):
    """Read a complex matrix from text: one row per line, entries like
    "0.3-0.1j" separated by whitespace."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                rows.append([complex(tok) for tok in stripped.split()])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: bad complex entry ({exc})") from exc
    if not rows:
        raise SchemaError(f"{path}: no matrix rows found")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise SchemaError(f"{path}: ragged rows")
    h = np.array(rows, dtype=complex)
    if h.shape[0] != h.shape[1]:
        raise SchemaError(f"{path}: matrix must be square, got {h.shape}")
    return h
