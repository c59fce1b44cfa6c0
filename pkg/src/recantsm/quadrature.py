"""Gauss-Legendre rules: composite panels and tensor products over angular laws."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["gauss_legendre", "composite_rule", "angular_rule", "graded_breaks"]


@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a: float, b: float, n: int):
    """``n``-point Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def composite_rule(breaks, n_per_panel: int):
    """Gauss-Legendre on each interval ``[breaks[i], breaks[i+1]]``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _leggauss(n_per_panel)
    a = breaks[:-1, None]
    b = breaks[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x[None, :]
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def graded_breaks(a: float, b: float, levels: int, toward: str = "a"):
    """Panel edges refined geometrically (factor 2) toward one end of ``[a, b]``."""
    t = np.concatenate([[0.0], 0.5 ** np.arange(levels, -1, -1)])
    if toward == "a":
        return a + (b - a) * t
    return b - (b - a) * t[::-1]


def _segment_rule(lo: float, hi: float, cuts, n_nodes: int, panel: int = 8):
    """Composite rule over ``[lo, hi]`` with panel edges at ``cuts`` and about
    ``n_nodes`` nodes in total."""
    edges = sorted({lo, hi, *[c for c in cuts if lo < c < hi]})
    length = hi - lo
    n_panels_total = max(len(edges) - 1, int(np.ceil(n_nodes / panel)))
    breaks = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(round(n_panels_total * (b - a) / length)))
        breaks.extend(np.linspace(a, b, k + 1)[1:])
    return composite_rule(np.array(breaks), panel)


def angular_rule(theta_dist, phi_dist, n_theta: int, n_phi: int):
    """Tensor-product rule for ``E[f(theta, phi)]`` under independent laws.

    Returns ``(theta_nodes, phi_nodes, weights)`` where ``weights`` has shape
    ``(len(theta_nodes), len(phi_nodes))`` and already includes both pdfs, so
    ``sum(weights * f(theta[:, None], phi[None, :]))`` is the expectation.
    """
    th, wth = _dist_rule(theta_dist, n_theta)
    ph, wph = _dist_rule(phi_dist, n_phi)
    return th, ph, np.outer(wth, wph)


def _dist_rule(dist, n: int):
    lo, hi = dist.support
    if lo == hi:  # point mass
        return np.array([lo]), np.array([1.0])
    x, w = _segment_rule(lo, hi, dist.breakpoints, n)
    return x, w * dist.pdf(x)
