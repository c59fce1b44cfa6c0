"""Single-cluster ray channel with pattern-weighted transmit side.

Each channel use draws ``K`` rays with complex gain ``beta_k ~ CN(0, 1)``,
angles of departure ``(theta_t, phi_t)`` and angles of arrival
``(theta_r, phi_r)``.  Entry ``(n, p)`` of the ``N_r x P`` channel matrix is::

    H[n, p] = K**-0.5 * sum_k beta_k * exp(1j*|k|*d*n*sin(theta_r)*sin(phi_r))
                                     * g_p(theta_t, phi_t)

with ``n`` counted from 0 and ``g_p`` the complex gain of pattern ``p``.  The
receiver is a ULA of unit-gain omnidirectional elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.special import erf, i0e

from ._kernels import assemble_channel, quantile_lookup, ray_channel
from .patterns import GRID_EPS, Codebook
from .quadrature import gauss_legendre

__all__ = [
    "AngularDistribution",
    "TruncatedLaplacian",
    "VonMises",
    "TruncatedGaussian",
    "Uniform",
    "Fixed",
    "pdf",
    "sample",
    "wavevector_norm",
    "ChannelModel",
    "Rays",
    "draw_rays",
    "channel_from_rays",
    "draw_channel",
    "draw_channels",
]

CDF_POINTS = 4096
QUANTILE_POINTS = 16385
SQRT2 = math.sqrt(2.0)


class AngularDistribution:
    """Base class for the angle laws.

    Subclasses define ``support``, ``breakpoints`` and ``_density``.  Sampling
    is by inverse transform on a tabulated numerical CDF, shared by all laws.
    """

    support: tuple[float, float] = (-math.pi, math.pi)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def _density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, angle):
        x = np.asarray(angle, dtype=float)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        if type(self).support_open_low:
            inside &= x > lo
        out = np.where(inside, self._density(np.where(inside, x, 0.5 * (lo + hi))), 0.0)
        return out if out.ndim else float(out)

    support_open_low = True

    @cached_property
    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        """``(x, F(x))`` on ``CDF_POINTS`` equispaced abscissae over the support."""
        lo, hi = self.support
        x = np.linspace(lo, hi, CDF_POINTS)
        gx, gw = gauss_legendre(0.0, 1.0, 6)
        h = np.diff(x)
        pts = x[:-1, None] + h[:, None] * gx[None, :]
        cell = (self._density(pts) * gw[None, :]).sum(axis=1) * h
        F = np.concatenate([[0.0], np.cumsum(cell)])
        F /= F[-1]
        return x, F

    def cdf(self, angle):
        x, F = self.cdf_table
        out = np.interp(angle, x, F, left=0.0, right=1.0)
        return out if np.ndim(out) else float(out)

    @cached_property
    def quantile_table(self) -> np.ndarray:
        """Inverse CDF tabulated at ``QUANTILE_POINTS`` equispaced probabilities."""
        x, F = self.cdf_table
        F_u, idx = np.unique(F, return_index=True)
        u = np.linspace(0.0, 1.0, QUANTILE_POINTS)
        q = np.interp(u, F_u, x[idx])
        q.setflags(write=False)
        return q

    def quantile(self, u):
        out = quantile_lookup(np.asarray(u, dtype=float), self.quantile_table)
        return out if np.ndim(out) else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        return self.quantile(rng.random(size))


@dataclass(frozen=True)
class TruncatedLaplacian(AngularDistribution):
    """Elevation law ``C_L exp(-sqrt(2)|theta - theta0|/sigma) sin(theta)`` on ``(0, pi]``."""

    theta0: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("truncated Laplacian needs sigma > 0")
        if not 0.0 <= self.theta0 <= math.pi:
            raise ValueError("theta0 must lie in [0, pi]")

    support = (0.0, math.pi)

    @property
    def breakpoints(self):
        s = self.sigma / SQRT2
        return tuple(self.theta0 + k * s for k in (-8, -3, -1, 0, 1, 3, 8))

    @cached_property
    def norm(self) -> float:
        """Closed-form normalisation constant ``C_L``."""
        s, t0 = self.sigma, self.theta0
        b = SQRT2 / s
        # cosh term written with exponentials to stay finite for tiny sigma
        tail = s * s * (math.exp(-b * t0) + math.exp(-b * (math.pi - t0)))
        return (2.0 + s * s) / (2.0 * SQRT2 * s * math.sin(t0) + tail)

    def _density(self, x):
        return self.norm * np.exp(-SQRT2 * np.abs(x - self.theta0) / self.sigma) * np.sin(x)


@dataclass(frozen=True)
class VonMises(AngularDistribution):
    """Azimuth law ``exp(kappa cos(phi - mu)) / (2 pi I0(kappa))`` on ``(-pi, pi]``."""

    mu: float
    kappa: float

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("von Mises needs kappa >= 0")

    @property
    def breakpoints(self):
        mu = math.remainder(self.mu, 2 * math.pi)
        cuts = [mu, math.remainder(mu + math.pi, 2 * math.pi)]
        if self.kappa > 1:
            s = 1.0 / math.sqrt(self.kappa)
            cuts += [mu + k * s for k in (-8, -3, -1, 1, 3, 8)]
        return tuple(cuts)

    def _density(self, x):
        # exp(kappa*(cos - 1)) / (2 pi i0e(kappa)) avoids overflow for large kappa
        return np.exp(self.kappa * (np.cos(x - self.mu) - 1.0)) / (2.0 * math.pi * i0e(self.kappa))


@dataclass(frozen=True)
class TruncatedGaussian(AngularDistribution):
    """Gaussian of mean ``phi0`` and scale ``sigma`` truncated to ``(-pi, pi]``."""

    phi0: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("truncated Gaussian needs sigma > 0")

    @property
    def breakpoints(self):
        return tuple(self.phi0 + k * self.sigma for k in (-8, -3, -1, 0, 1, 3, 8))

    @cached_property
    def norm(self) -> float:
        """``C_G`` such that the density integrates to one on ``(-pi, pi]``."""
        s = self.sigma * SQRT2
        mass = 0.5 * (erf((math.pi - self.phi0) / s) - erf((-math.pi - self.phi0) / s))
        return 1.0 / (math.sqrt(2.0 * math.pi) * self.sigma * mass)

    def _density(self, x):
        return self.norm * np.exp(-(((x - self.phi0) / (SQRT2 * self.sigma)) ** 2))


@dataclass(frozen=True)
class Uniform(AngularDistribution):
    """Uniform law on ``[a, b]`` inside ``(-pi, pi]``."""

    a: float = -math.pi
    b: float = math.pi

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("uniform law needs a < b")
        if self.a < -math.pi - 1e-12 or self.b > math.pi + 1e-12:
            raise ValueError("uniform support must lie inside [-pi, pi]")

    support_open_low = False

    @property
    def support(self):
        return (self.a, self.b)

    def _density(self, x):
        return np.full(np.shape(x), 1.0 / (self.b - self.a))


@dataclass(frozen=True)
class Fixed(AngularDistribution):
    """Degenerate law: every ray arrives at the same angle."""

    value: float

    support_open_low = False

    @property
    def support(self):
        return (self.value, self.value)

    def pdf(self, angle):
        raise TypeError("a fixed angle has no density")

    @cached_property
    def cdf_table(self):
        return np.array([self.value, self.value]), np.array([0.0, 1.0])

    def quantile(self, u):
        out = np.full(np.shape(u), float(self.value))
        return out if out.ndim else float(out)


def pdf(dist: AngularDistribution, angle):
    """Density of ``dist`` at ``angle`` (zero outside the support)."""
    return dist.pdf(angle)


def sample(dist: AngularDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


def wavevector_norm(wavelength: float) -> float:
    """Magnitude ``2 pi / lambda`` of the wavevector."""
    if not wavelength > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength!r}")
    return 2.0 * math.pi / wavelength


@dataclass(frozen=True)
class ChannelModel:
    """Ray count, carrier wavelength, receive spacing and the four angle laws.

    ``rx_spacing`` defaults to half a wavelength.
    """

    K: int
    wavelength: float
    aod_theta: AngularDistribution
    aod_phi: AngularDistribution
    aoa_theta: AngularDistribution
    aoa_phi: AngularDistribution
    rx_spacing: float | None = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"ray count K must be a positive integer, got {self.K!r}")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.rx_spacing is None:
            object.__setattr__(self, "rx_spacing", 0.5 * self.wavelength)
        elif not self.rx_spacing >= 0:
            raise ValueError("rx_spacing must be non-negative")
        object.__setattr__(self, "K", int(self.K))

    @property
    def kd(self) -> float:
        """``|k| d``, the inter-element phase scale of the receive array."""
        return wavevector_norm(self.wavelength) * self.rx_spacing

    def with_(self, **changes) -> "ChannelModel":
        from dataclasses import replace

        return replace(self, **changes)


class Rays(NamedTuple):
    beta: np.ndarray
    theta_t: np.ndarray
    phi_t: np.ndarray
    theta_r: np.ndarray
    phi_r: np.ndarray


def draw_rays(model: ChannelModel, rng: np.random.Generator, size: int | None = None) -> Rays:
    """Draw ``K`` rays (or ``size`` independent sets of ``K`` rays)."""
    shape = (model.K,) if size is None else (size, model.K)
    beta = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)
    return Rays(
        beta,
        model.aod_theta.sample(rng, shape),
        model.aod_phi.sample(rng, shape),
        model.aoa_theta.sample(rng, shape),
        model.aoa_phi.sample(rng, shape),
    )


def channel_from_rays(model: ChannelModel, codebook: Codebook, n_r: int, rays: Rays, tx=None) -> np.ndarray:
    """Assemble ``H`` from drawn rays; shape ``(..., n_r, P)``.

    ``tx`` may carry precomputed transmit gains ``codebook.evaluate(theta_t, phi_t)``.
    """
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    lead = rays.beta.shape[:-1]
    K = rays.beta.shape[-1]

    def flat(a):
        return np.ascontiguousarray(np.broadcast_to(a, rays.beta.shape).reshape(-1, K), dtype=float)

    beta = np.ascontiguousarray(rays.beta.reshape(-1, K))
    shared = codebook.shared_grid
    if tx is None and shared is not None:
        H, bad = ray_channel(
            beta, flat(rays.theta_t), flat(rays.phi_t), flat(rays.theta_r), flat(rays.phi_r),
            model.kd, int(n_r), GRID_EPS, *shared,
        )
        if not np.isnan(bad):
            codebook[0]._check_query(bad, 0.0)  # raises the domain error
    else:
        if tx is None:
            tx = codebook.evaluate(rays.theta_t, rays.phi_t)  # (..., K, P)
        tx = np.broadcast_to(tx, lead + tx.shape[-2:]).reshape(-1, K, tx.shape[-1])
        s = np.sin(flat(rays.theta_r)) * np.sin(flat(rays.phi_r))
        H = assemble_channel(beta, np.ascontiguousarray(tx), s, model.kd, int(n_r))
    return H.reshape(lead + H.shape[1:])


def draw_channel(model: ChannelModel, codebook: Codebook, n_r: int, rng: np.random.Generator) -> np.ndarray:
    """One ``n_r x P`` channel matrix; the same rays feed every entry."""
    return channel_from_rays(model, codebook, n_r, draw_rays(model, rng))


def draw_channels(model: ChannelModel, codebook: Codebook, n_r: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent channel matrices, shape ``(size, n_r, P)``."""
    return channel_from_rays(model, codebook, n_r, draw_rays(model, rng, size))
