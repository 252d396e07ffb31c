"""Pupil functions, unit-disk quadrature and Noll-indexed Zernike polynomials.

All pupil coordinates are normalized so the aperture is the closed unit disk.
A :class:`Pupil` carries its quadrature nodes together with the complex
amplitude sampled on them, normalized so that ``sum(w * |P|**2) == 1``.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError

MIN_RADIAL = 4
MIN_ANGULAR = 8
RESCALE_WARN = 1e-6


class AperturePoint(NamedTuple):
    u_x: float
    u_y: float


@dataclass(frozen=True)
class QuadratureSpec:
    """Orders of the polar product rule on the unit disk.

    Radial nodes are Gauss-Legendre on [0, 1] (with the ``r`` Jacobian folded
    into the weights); angular nodes are equispaced trapezoid points.
    """

    n_radial: int = 80
    n_angular: int = 160
    refinement_factor: int = 2

    def __post_init__(self):
        if int(self.n_radial) != self.n_radial or self.n_radial < MIN_RADIAL:
            raise ConfigError(f"n_radial must be an integer >= {MIN_RADIAL}, got {self.n_radial}")
        if int(self.n_angular) != self.n_angular or self.n_angular < MIN_ANGULAR:
            raise ConfigError(f"n_angular must be an integer >= {MIN_ANGULAR}, got {self.n_angular}")
        if int(self.refinement_factor) != self.refinement_factor or self.refinement_factor < 2:
            raise ConfigError(f"refinement_factor must be an integer >= 2, got {self.refinement_factor}")

    def refined(self, factor=None):
        f = self.refinement_factor if factor is None else factor
        return QuadratureSpec(self.n_radial * f, self.n_angular * f, self.refinement_factor)


def disk_nodes(spec):
    """Return ``(u_x, u_y, weights)`` for the polar product rule on the unit disk.

    The weights integrate ``d^2u``, so ``weights.sum()`` equals pi.
    """
    x, w = np.polynomial.legendre.leggauss(spec.n_radial)
    r = 0.5 * (x + 1.0)
    w_r = 0.5 * w * r
    theta = 2.0 * np.pi * np.arange(spec.n_angular) / spec.n_angular
    w_t = 2.0 * np.pi / spec.n_angular
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    weights = np.broadcast_to(w_r[:, None] * w_t, rr.shape)
    return (rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel(), weights.ravel().copy()


def _clear_amplitude(ux, uy):
    return np.full(np.shape(ux), 1.0 / math.sqrt(math.pi), dtype=complex)


@dataclass(frozen=True, eq=False)
class Pupil:
    """A normalized complex pupil sampled on a disk quadrature.

    ``values`` holds ``P(u)`` at the nodes after normalization; ``amplitude``
    is the raw callable, kept so the pupil can be rebuilt at other orders.
    """

    amplitude: Callable
    spec: QuadratureSpec
    kind: str
    ux: np.ndarray = field(repr=False)
    uy: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    scale: float = 1.0

    @property
    def u2(self):
        return self.ux**2 + self.uy**2

    @property
    def intensity_weights(self):
        """Quadrature weights times ``|P|**2``; these sum to one."""
        return self.weights * np.abs(self.values) ** 2

    def average(self, values):
        """|P|^2-weighted aperture average of node values."""
        return np.dot(self.intensity_weights, values)

    def with_spec(self, spec):
        return build_pupil(self.amplitude, spec, kind=self.kind, warn=False)

    def refined(self, factor=None):
        return self.with_spec(self.spec.refined(factor))


def build_pupil(amplitude, spec=None, kind="user-supplied", warn=True):
    """Sample ``amplitude(u_x, u_y)`` on the disk quadrature and normalize it.

    ``amplitude`` must accept numpy arrays of coordinates. A warning is issued
    when the normalizing rescale differs from one by more than 1e-6.
    """
    spec = spec or QuadratureSpec()
    ux, uy, w = disk_nodes(spec)
    raw = np.asarray(amplitude(ux, uy), dtype=complex)
    if raw.shape != ux.shape:
        raw = np.broadcast_to(raw, ux.shape).astype(complex)
    if not np.all(np.isfinite(raw)):
        raise ConfigError("pupil amplitude is not finite on every quadrature node")
    norm = float(np.dot(w, np.abs(raw) ** 2))
    if norm <= 0.0:
        raise ConfigError("pupil amplitude vanishes on the aperture")
    scale = 1.0 / math.sqrt(norm)
    if warn and abs(scale - 1.0) > RESCALE_WARN:
        warnings.warn(f"pupil amplitude rescaled by {scale:.6g} to satisfy normalization", stacklevel=2)
    return Pupil(amplitude, spec, kind, ux, uy, w, raw * scale, scale)


def build_clear_circular_pupil(spec=None):
    """Clear unit-radius pupil, ``P = 1/sqrt(pi)`` on the disk."""
    return build_pupil(_clear_amplitude, spec, kind="clear-circular", warn=False)


def gaussian_apodized_amplitude(sigma):
    """Amplitude ``exp(-u^2 / (2 sigma^2))`` truncated by the unit disk."""
    if not sigma > 0:
        raise ConfigError(f"apodization width must be positive, got {sigma}")

    def amplitude(ux, uy):
        return np.exp(-(ux**2 + uy**2) / (2.0 * sigma**2)).astype(complex)

    return amplitude


def _node_values(pupil, f):
    if callable(f):
        vals = f(pupil.ux, pupil.uy)
    else:
        vals = f
    vals = np.asarray(vals)
    if vals.shape != pupil.ux.shape:
        vals = np.broadcast_to(vals, pupil.ux.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite at every quadrature node")
    return vals


def aperture_average(pupil, f):
    """Return ``sum(w |P|^2 f)`` for a callable ``f(u_x, u_y)`` or node values."""
    return complex(pupil.average(_node_values(pupil, f)))


def check_convergence(pupil, integrand, factor=None):
    """Average ``integrand`` at the pupil's orders and at refined orders.

    Returns ``(value, est_error)`` where ``est_error`` is the absolute change
    under refinement. The caller decides what error is acceptable.
    """
    value = aperture_average(pupil, integrand)
    fine = aperture_average(pupil.refined(factor), integrand)
    return value, abs(fine - value)


# --- Zernike polynomials, Noll indexing -----------------------------------


def noll_to_nm(j):
    """Map a Noll index ``j >= 1`` to radial order ``n`` and signed frequency ``m``."""
    if j < 1:
        raise ConfigError(f"Noll index must be >= 1, got {j}")
    n = 0
    while (n + 1) * (n + 2) // 2 < j:
        n += 1
    k = j - n * (n + 1) // 2 - 1  # position within order n
    if n % 2 == 0:
        m = 2 * ((k + 1) // 2)
    else:
        m = 2 * (k // 2) + 1
    if m != 0 and j % 2 == 1:
        m = -m
    return n, m


def zernike_radial(n, m, r):
    m = abs(m)
    out = np.zeros_like(r, dtype=float)
    for k in range((n - m) // 2 + 1):
        c = (-1) ** k * math.factorial(n - k) / (
            math.factorial(k) * math.factorial((n + m) // 2 - k) * math.factorial((n - m) // 2 - k)
        )
        out = out + c * r ** (n - 2 * k)
    return out


def zernike_noll(j, ux, uy):
    """Noll-normalized ``Z_j``: the disk average of ``Z_j**2`` is one."""
    n, m = noll_to_nm(j)
    ux = np.asarray(ux, dtype=float)
    uy = np.asarray(uy, dtype=float)
    r = np.hypot(ux, uy)
    theta = np.arctan2(uy, ux)
    rad = zernike_radial(n, m, r)
    if m == 0:
        return math.sqrt(n + 1) * rad
    norm = math.sqrt(2 * (n + 1))
    if m > 0:
        return norm * rad * np.cos(m * theta)
    return norm * rad * np.sin(-m * theta)


@dataclass(frozen=True)
class ZernikeBasis:
    """The first ``n_modes`` Noll-indexed Zernike polynomials."""

    n_modes: int = 4

    def __post_init__(self):
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ConfigError(f"n_modes must be a positive integer, got {self.n_modes}")

    def evaluate(self, n, ux, uy):
        if not 1 <= n <= self.n_modes:
            raise ConfigError(f"Zernike index {n} outside 1..{self.n_modes}")
        return zernike_noll(n, ux, uy)

    def matrix(self, ux, uy):
        """Stack of ``Z_1..Z_N`` evaluated on the given points, shape ``(N, len(ux))``."""
        return np.stack([zernike_noll(j, ux, uy) for j in range(1, self.n_modes + 1)])


def zernike_eval(basis, n, point):
    ux, uy = point
    if ux * ux + uy * uy > 1.0 + 1e-12:
        raise ConfigError(f"point {tuple(point)} lies outside the unit disk")
    return float(basis.evaluate(n, ux, uy))


def zernike_gram(basis, spec=None):
    """Disk-averaged Gram matrix ``(1/pi) int Z_n Z_m`` by quadrature."""
    ux, uy, w = disk_nodes(spec or QuadratureSpec())
    z = basis.matrix(ux, uy)
    return (z * w) @ z.T / math.pi
