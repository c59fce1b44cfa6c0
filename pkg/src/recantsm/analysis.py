"""Analytical pairwise and bit error probability bounds.

For a hypothesis pair ``(p, x_m) -> (q, x_n)`` the conditional PEP is
``Q(sqrt(rho |nu|^2 / 2))`` where, given the ray angles, ``|nu|^2`` is
exponential with mean ``(1/K) sum_k psi_k``.  Averaging with Craig's formula
and writing ``1/(1 + a) = int_0^inf exp(-z (1 + a)) dz`` gives::

    APEP = (1/pi) int_0^{pi/2} int_0^inf exp(-z) g(z rho / (4 K sin^2 t))^K dz dt

with ``g(s) = E[exp(-s psi)]`` the moment generating function of ``psi`` under
the angle-of-departure law.  ``g`` is tabulated once per pair on a tensor
Gauss-Legendre rule over the AoD laws and interpolated by a cubic spline of
``log g`` against ``log s``.  The large-``K`` and high-SNR forms only need
``Theta = E[psi]`` and the receive-array moments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property, lru_cache
from math import comb

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from .channel import ChannelModel
from .modem import Constellation, WordTable
from .patterns import Codebook, RadiationPattern
from .quadrature import angular_rule, composite_rule, gauss_legendre, graded_breaks

__all__ = [
    "AnalysisSettings",
    "ApepQuery",
    "ReceiverMoments",
    "DegenerateHypothesisError",
    "DegenerateArrayError",
    "QuadratureWarning",
    "BOUND_KINDS",
    "theta_integral",
    "apep_exact_nr1",
    "apep_hsnr_nr1",
    "apep_asym_nr1",
    "apep_asym_hsnr_nr1",
    "receiver_moments",
    "receive_factor",
    "apep_nr2",
    "alpha_coeff",
    "alpha_coeff_sum",
    "apep_generic",
    "apep",
    "pairwise_apeps",
    "abep_union_bound",
    "craig_reference",
]

BOUND_KINDS = ("exact", "high_snr", "asymptotic", "asymptotic_high_snr")
# receive-factor values at or below this are treated as a rank-deficient array
ARRAY_TOL = 1e-9
# Theta at or below this (relative to the largest psi) means indistinguishable hypotheses
THETA_TOL = 1e-12


class DegenerateHypothesisError(ValueError):
    """The two hypotheses are indistinguishable (``Theta = 0``)."""


class DegenerateArrayError(ValueError):
    """Receive branches fully correlated; the high-SNR bound is infinite."""


class QuadratureWarning(RuntimeWarning):
    """Doubling the quadrature nodes moved a result by more than ``rel_tol``."""


@dataclass(frozen=True)
class AnalysisSettings:
    """Quadrature controls.

    ``quad_z_nodes`` is the Gauss-Legendre order of each geometric panel of the
    auxiliary ``z`` integral and ``z_cutoff`` its truncation point (the
    integrand is bounded by ``exp(-z)``).  With ``check_convergence`` set,
    every evaluator is repeated with doubled node counts and a
    :class:`QuadratureWarning` is raised when the two disagree by more than
    ``rel_tol``.
    """

    quad_theta_nodes: int = 96
    quad_phi_nodes: int = 192
    quad_craig_nodes: int = 64
    quad_z_nodes: int = 16
    z_cutoff: float = 60.0
    rel_tol: float = 1e-3
    check_convergence: bool = False

    def __post_init__(self):
        for name in ("quad_theta_nodes", "quad_phi_nodes", "quad_craig_nodes", "quad_z_nodes"):
            if getattr(self, name) < 8:
                raise ValueError(f"{name} must be >= 8")
        if not 0 < self.rel_tol < 0.1:
            raise ValueError("rel_tol must lie in (0, 0.1)")
        if not self.z_cutoff > 1:
            raise ValueError("z_cutoff must exceed 1")

    def refined(self) -> "AnalysisSettings":
        return replace(
            self,
            quad_theta_nodes=2 * self.quad_theta_nodes,
            quad_phi_nodes=2 * self.quad_phi_nodes,
            quad_craig_nodes=2 * self.quad_craig_nodes,
            quad_z_nodes=2 * self.quad_z_nodes,
            check_convergence=False,
        )


DEFAULT_SETTINGS = AnalysisSettings()


@dataclass(frozen=True, eq=False)
class ApepQuery:
    """Hypothesis pair ``(p, x_m) -> (q, x_n)`` with its channel and SNR."""

    p: int
    q: int
    x_m: complex
    x_n: complex
    codebook: Codebook
    model: ChannelModel
    n_r: int = 1
    rho: float = 1.0

    def __post_init__(self):
        P = self.codebook.P
        if not (0 <= self.p < P and 0 <= self.q < P):
            raise ValueError(f"pattern indices ({self.p}, {self.q}) out of range for P={P}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")

    def with_rho(self, rho: float) -> "ApepQuery":
        return replace(self, rho=rho)

    def swapped(self) -> "ApepQuery":
        return replace(self, p=self.q, q=self.p, x_m=self.x_n, x_n=self.x_m)


@dataclass(frozen=True)
class ReceiverMoments:
    """Angle-of-arrival averages of ``cos``/``sin`` of the inter-element phase.

    ``E1, E2`` use one element spacing, ``E3, E4`` two.
    """

    E1: float
    E2: float
    E3: float
    E4: float

    @property
    def psi_factor(self) -> float:
        """``1 - E1^2 - E2^2``, the two-branch receive factor."""
        return 1.0 - self.E1**2 - self.E2**2


# -- per-pair moment generating function ----------------------------------------


class _PairKernel:
    """``psi`` on the AoD quadrature rule and a spline of ``log g(s)``."""

    DECADES_PER_NODE = 1.0 / 16.0

    def __init__(self, rp_p, rp_q, x_m, x_n, theta_law, phi_law, n_theta, n_phi):
        th, ph, w = angular_rule(theta_law, phi_law, n_theta, n_phi)
        vals = np.abs(rp_q(th[:, None], ph[None, :]) * x_n - rp_p(th[:, None], ph[None, :]) * x_m) ** 2
        w = w.ravel()
        vals = vals.ravel()
        keep = w > 0
        self.w = w[keep] / w[keep].sum()
        self.psi = vals[keep]
        self.theta = float(self.w @ self.psi)
        self.second = float(self.w @ self.psi**2)
        self.degenerate = self.theta <= THETA_TOL * max(1.0, float(self.psi.max(initial=0.0)))

    @cached_property
    def _spline(self):
        psi_max = float(self.psi.max())
        s_lo = 1e-3 / psi_max
        s_hi = 1e4 / self.theta
        n = max(8, int(math.ceil(math.log10(s_hi / s_lo) / self.DECADES_PER_NODE)) + 1)
        x = np.linspace(math.log(s_lo), math.log(s_hi), n)
        logw = np.log(self.w)
        y = np.array([logsumexp(logw - math.exp(xi) * self.psi) for xi in x])
        spline = CubicSpline(x, y)
        end_slope = min(float(spline(x[-1], 1)), 0.0)
        return spline, s_lo, s_hi, float(y[-1]), end_slope

    def log_mgf(self, s) -> np.ndarray:
        """``log E[exp(-s psi)]`` for ``s >= 0``."""
        s = np.asarray(s, dtype=float)
        if self.degenerate:
            return np.zeros_like(s)
        spline, s_lo, s_hi, y_hi, slope = self._spline
        out = np.empty_like(s)
        low = s < s_lo
        high = s > s_hi
        mid = ~(low | high)
        sl = s[low]
        out[low] = -sl * self.theta + 0.5 * sl * sl * (self.second - self.theta**2)
        out[mid] = spline(np.log(s[mid]))
        out[high] = y_hi + slope * (np.log(s[high]) - math.log(s_hi))
        return out

    @property
    def tail_exponent(self) -> float:
        """Power ``a`` with ``g(s) ~ s^-a`` beyond the tabulated range."""
        return -self._spline[4]


@lru_cache(maxsize=512)
def _pair_kernel(rp_p, rp_q, x_m, x_n, theta_law, phi_law, n_theta, n_phi) -> _PairKernel:
    return _PairKernel(rp_p, rp_q, x_m, x_n, theta_law, phi_law, n_theta, n_phi)


def _kernel(query: ApepQuery, settings: AnalysisSettings) -> _PairKernel:
    cb = query.codebook
    return _pair_kernel(
        cb[query.p],
        cb[query.q],
        complex(query.x_m),
        complex(query.x_n),
        query.model.aod_theta,
        query.model.aod_phi,
        settings.quad_theta_nodes,
        settings.quad_phi_nodes,
    )


def _checked(fn, query, settings):
    value = fn(query, settings)
    if settings.check_convergence:
        fine = fn(query, settings.refined())
        scale = max(abs(value), abs(fine))
        if math.isfinite(scale) and scale > 0 and abs(fine - value) > settings.rel_tol * scale:
            warnings.warn(
                f"{fn.__name__.lstrip('_')}: doubling the nodes changed the result from "
                f"{value:.6g} to {fine:.6g}",
                QuadratureWarning,
                stacklevel=3,
            )
    return value


# -- effective distance ----------------------------------------------------------


def _theta(query, settings):
    return _kernel(query, settings).theta


def theta_integral(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """``Theta = E[psi]`` over the angle-of-departure laws."""
    return _checked(_theta, query, settings)


def _require_distinct(query, settings) -> float:
    kern = _kernel(query, settings)
    if kern.degenerate:
        raise DegenerateHypothesisError(
            f"hypotheses (p={query.p}, x={query.x_m}) and (q={query.q}, x={query.x_n}) are indistinguishable"
        )
    return kern.theta


# -- single receive antenna ------------------------------------------------------


def _craig_rule(n_nodes: int):
    """Nodes/weights on ``(0, pi/2)`` graded toward 0, weights include ``1/pi``."""
    per = 8
    levels = max(1, n_nodes // per - 1)
    x, w = composite_rule(graded_breaks(0.0, 0.5 * math.pi, levels, toward="a"), per)
    return x, w / math.pi


def _geometric_z_rule(lo, hi, n_panels: int, order: int):
    """Panels ``[0, lo]`` plus ``n_panels`` geometric panels from ``lo`` to ``hi``.

    ``lo`` and ``hi`` are arrays (one rule per entry); returns ``(z, w)`` with
    a trailing node axis.
    """
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    k = np.arange(n_panels + 1)
    edges = lo * (hi / lo) ** (k / n_panels)
    edges = np.concatenate([np.zeros_like(lo), edges], axis=-1)
    x, w = gauss_legendre(0.0, 1.0, order)
    a = edges[..., :-1, None]
    h = np.diff(edges, axis=-1)[..., None]
    z = (a + h * x).reshape(lo.shape[:-1] + (-1,))
    wz = (h * w).reshape(z.shape)
    return z, wz


def _apep_exact_nr1(query, settings):
    kern = _kernel(query, settings)
    K = query.model.K
    if kern.degenerate:
        return 0.5
    t, wt = _craig_rule(settings.quad_craig_nodes)
    c = query.rho / (4.0 * np.sin(t) ** 2)
    # z where the small-s expansion reaches one e-fold
    knee = np.minimum(1.0, K / (c * kern.theta))
    zc = settings.z_cutoff
    lo = 1e-6 * knee
    n_panels = int(math.ceil(math.log2(zc / lo.min())))
    z, wz = _geometric_z_rule(lo, np.full_like(lo, zc), n_panels, settings.quad_z_nodes)
    f = np.exp(-z + K * kern.log_mgf(z * (c / K)[:, None]))
    inner = np.sum(f * wz, axis=1)
    return float(min(0.5, np.sum(inner * wt)))


def apep_exact_nr1(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Finite-``K`` APEP for one receive antenna (Craig angle, ``z`` and AoD integrals)."""
    if query.n_r != 1:
        raise ValueError("the exact evaluator covers n_r = 1 only")
    return _checked(_apep_exact_nr1, query, settings)


def _apep_hsnr_nr1(query, settings):
    theta = _require_distinct(query, settings)
    kern = _kernel(query, settings)
    K = query.model.K
    # E[1/mu] = int_0^inf g(z/K)^K dz; the last panel ends where the spline does
    s_hi = kern._spline[2]
    lo = 1e-6 * K / theta
    hi = K * s_hi
    n_panels = int(math.ceil(math.log2(hi / lo)))
    z, wz = _geometric_z_rule(lo, hi, n_panels, settings.quad_z_nodes)
    f = np.exp(K * kern.log_mgf(z / K))
    body = float(np.sum(f * wz))
    a = K * kern.tail_exponent
    if a <= 1.0:
        return math.inf
    tail = hi * math.exp(K * float(kern.log_mgf(np.array([s_hi]))[0])) / (a - 1.0)
    return (body + tail) / query.rho


def apep_hsnr_nr1(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """High-SNR finite-``K`` bound ``E[1/mu] / rho`` for one receive antenna."""
    if query.n_r != 1:
        raise ValueError("this evaluator covers n_r = 1 only")
    return _checked(_apep_hsnr_nr1, query, settings)


def _asym_closed(c: float) -> float:
    """``(1/2)(1 - sqrt(c/(1+c)))`` written to avoid cancellation for large ``c``."""
    if c <= 0:
        return 0.5
    r = math.sqrt(c / (1.0 + c))
    return 0.5 * (1.0 - r) if c < 1 else 0.5 / ((1.0 + c) * (1.0 + r))


def apep_asym_nr1(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Large-``K`` APEP ``(1/2)(1 - sqrt(rho Theta / (rho Theta + 4)))``."""
    if query.n_r != 1:
        raise ValueError("this evaluator covers n_r = 1 only")
    theta = theta_integral(query, settings)
    if _kernel(query, settings).degenerate:
        return 0.5
    return _asym_closed(query.rho * theta / 4.0)


def apep_asym_hsnr_nr1(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Large-``K``, high-SNR bound ``1 / (rho Theta)``."""
    if query.n_r != 1:
        raise ValueError("this evaluator covers n_r = 1 only")
    theta_integral(query, settings)
    return 1.0 / (query.rho * _require_distinct(query, settings))


# -- receive array -------------------------------------------------------------


@lru_cache(maxsize=64)
def _receiver_moments(model_laws, kd, n_theta, n_phi) -> ReceiverMoments:
    theta_law, phi_law = model_laws
    th, ph, w = angular_rule(theta_law, phi_law, n_theta, n_phi)
    arg = kd * np.sin(th)[:, None] * np.sin(ph)[None, :]
    w = w / w.sum()
    return ReceiverMoments(
        float(np.sum(w * np.cos(arg))),
        float(np.sum(w * np.sin(arg))),
        float(np.sum(w * np.cos(2 * arg))),
        float(np.sum(w * np.sin(2 * arg))),
    )


def receiver_moments(model: ChannelModel, settings: AnalysisSettings = DEFAULT_SETTINGS) -> ReceiverMoments:
    """``E1..E4`` by quadrature over the angle-of-arrival laws."""
    return _receiver_moments(
        (model.aoa_theta, model.aoa_phi), model.kd, settings.quad_theta_nodes, settings.quad_phi_nodes
    )


def receive_factor(moments: ReceiverMoments, n_r: int) -> float:
    """Expected receive-array factor for ``n_r`` in {1, 2, 3}."""
    E1, E2, E3, E4 = moments.E1, moments.E2, moments.E3, moments.E4
    if n_r == 1:
        return 1.0
    if n_r == 2:
        return moments.psi_factor
    if n_r == 3:
        return 1 + 2 * E1**2 * E3 - 2 * E2**2 * E3 + 4 * E1 * E2 * E4 - E3**2 - E4**2 - 2 * E1**2 - 2 * E2**2
    raise NotImplementedError(f"no closed-form receive factor for n_r={n_r} (supported: 1, 2, 3)")


def _sin_pi(k: int) -> float:
    # sin(pi k) is exactly zero for integer k
    return 0.0 if float(k).is_integer() else math.sin(math.pi * k)


def alpha_coeff(n_r: int) -> int:
    """High-SNR coefficient ``(1/2) C(2 n_r, n_r)``."""
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    return comb(2 * n_r, n_r) // 2


def alpha_coeff_sum(n_r: int) -> Fraction:
    """The same coefficient from its trigonometric-sum form, in exact arithmetic."""
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    total = Fraction(comb(2 * n_r, n_r), 2)
    for k in range(n_r):
        s = _sin_pi(n_r - k)
        total += (-1) ** (n_r - k) * 2 * comb(2 * n_r, k) * Fraction(s) / Fraction(2 * (n_r - k)) / Fraction(math.pi)
    return total


def _apep_generic(query, settings):
    n_r = query.n_r
    if n_r > 3:
        raise NotImplementedError(f"no closed-form receive factor for n_r={n_r} (supported: 1, 2, 3)")
    theta = _require_distinct(query, settings)
    factor = receive_factor(receiver_moments(query.model, settings), n_r)
    if factor <= ARRAY_TOL:
        raise DegenerateArrayError(f"receive factor {factor:.3g} for n_r={n_r}: branches fully correlated")
    return alpha_coeff(n_r) / ((query.rho * theta) ** n_r * factor)


def apep_generic(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Large-``K`` high-SNR bound ``alpha / ((rho Theta)^n_r E{F})`` for ``n_r <= 3``."""
    return _checked(_apep_generic, query, settings)


def apep_nr2(query: ApepQuery, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Two receive antennas: ``3 / (rho^2 Theta^2 (1 - E1^2 - E2^2))``."""
    if query.n_r != 2:
        raise ValueError("apep_nr2 needs n_r = 2")
    return apep_generic(query, settings)


# -- union bound -----------------------------------------------------------------


def apep(query: ApepQuery, kind: str, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Dispatch on bound kind.

    With one receive antenna the four kinds are the exact finite-``K``
    integral, its high-SNR form, the large-``K`` closed form and its high-SNR
    form.  With two or three antennas only the large-``K`` high-SNR bound
    exists, so every kind except ``exact`` maps to it.
    """
    if kind not in BOUND_KINDS:
        raise ValueError(f"unknown bound kind {kind!r}; choose from {BOUND_KINDS}")
    if query.n_r == 1:
        return {
            "exact": apep_exact_nr1,
            "high_snr": apep_hsnr_nr1,
            "asymptotic": apep_asym_nr1,
            "asymptotic_high_snr": apep_asym_hsnr_nr1,
        }[kind](query, settings)
    if kind == "exact":
        raise ValueError("the exact evaluator covers n_r = 1 only")
    return apep_generic(query, settings)


def pairwise_apeps(cfg, kind: str, rho: float, settings: AnalysisSettings = DEFAULT_SETTINGS):
    """``(p, m, q, n, hamming, apep)`` for every ordered pair of distinct words.

    ``cfg`` needs ``codebook``, ``model``, ``n_r`` and ``constellation``
    attributes (an :class:`~recantsm.montecarlo.SmConfig` works).
    """
    codebook: Codebook = cfg.codebook
    const: Constellation = cfg.constellation
    table = WordTable(codebook.P, const)
    M = const.M
    n_words = codebook.P * M
    if n_words < 2:
        raise ValueError("need P * M >= 2")
    rows = []
    cache = {}
    for a in range(n_words):
        for b in range(n_words):
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            if key not in cache:
                p, m = divmod(key[0], M)
                q, n = divmod(key[1], M)
                query = ApepQuery(p, q, const.points[m], const.points[n], codebook, cfg.model, cfg.n_r, rho)
                cache[key] = apep(query, kind, settings)
            p, m = divmod(a, M)
            q, n = divmod(b, M)
            rows.append((p, m, q, n, int(table.hamming[a, b]), cache[key]))
    return rows


def abep_union_bound(cfg, kind: str, rho: float, settings: AnalysisSettings = DEFAULT_SETTINGS) -> float:
    """Union bound ``sum N_H APEP / (P M log2(P M))`` over ordered word pairs."""
    rows = pairwise_apeps(cfg, kind, rho, settings)
    n_words = cfg.codebook.P * cfg.constellation.M
    total = math.fsum(h * v for *_, h, v in rows)
    return total / (n_words * math.log2(n_words))


# -- Craig self-test -------------------------------------------------------------


def craig_reference(c: float, n_nodes: int = 64) -> tuple[float, float]:
    """``(quadrature, closed form)`` of ``(1/pi) int_0^{pi/2} (1 + c/sin^2 t)^-1 dt``."""
    if not c > 0:
        raise ValueError("c must be positive")
    t, w = _craig_rule(n_nodes)
    s2 = np.sin(t) ** 2
    quad = float(np.sum(w * s2 / (s2 + c)))
    return quad, _asym_closed(c)
