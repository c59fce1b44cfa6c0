"""Reconfigurable-antenna radiation patterns.

A pattern is a tabulated complex far-field gain ``sqrt(G) * exp(j*Omega)`` on an
(elevation, azimuth) grid.  Gain and phase are interpolated bilinearly and
independently; the phase is unwrapped per grid cell before interpolation so
that cells straddling the +-pi branch cut are handled correctly.

Angles are radians throughout; elevation ``theta`` is in ``[0, pi]`` and
azimuth ``phi`` is wrapped into ``(-pi, pi]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import bilinear_gain_phase, build_guide, cell_complex_multi

__all__ = [
    "PatternDomainError",
    "PatternFormatError",
    "RadiationPattern",
    "ExcitationMatrix",
    "Codebook",
    "EXCITATIONS",
    "isotropic",
    "eval_pattern",
    "synth_array_pattern",
    "load_pattern",
    "save_pattern",
    "psi",
    "wrap_angle",
]

TWO_PI = 2.0 * np.pi
# Tolerance used when checking that a grid reaches the poles.
GRID_EPS = 1e-6


class PatternDomainError(ValueError):
    """Query angle outside the interpolable region of a pattern."""


class PatternFormatError(ValueError):
    """Malformed pattern file."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


def wrap_angle(phi):
    """Wrap angles into ``(-pi, pi]``."""
    phi = np.asarray(phi, dtype=float)
    out = np.pi - np.mod(np.pi - phi, TWO_PI)
    return out if out.ndim else float(out)


def _wrap_diff(d):
    # principal value in [-pi, pi)
    return np.mod(d + np.pi, TWO_PI) - np.pi


@dataclass(frozen=True, eq=False)
class RadiationPattern:
    """Tabulated radiation pattern.

    Parameters
    ----------
    theta_grid : array_like
        Strictly increasing elevation samples in ``[0, pi]``.
    phi_grid : array_like
        Strictly increasing azimuth samples in ``(-pi, pi]``.  The grid is
        treated as periodic, the last column wraps onto the first.
    gain : array_like
        Linear power gain, shape ``(len(theta_grid), len(phi_grid))``.
    phase : array_like
        Phase in radians, same shape as ``gain``.
    label : str
        Free-form identifier.
    """

    theta_grid: np.ndarray
    phi_grid: np.ndarray
    gain: np.ndarray
    phase: np.ndarray
    label: str = ""

    def __post_init__(self):
        theta = np.array(self.theta_grid, dtype=float).ravel()
        phi = np.array(self.phi_grid, dtype=float).ravel()
        gain = np.array(self.gain, dtype=float)
        phase = np.array(self.phase, dtype=float)
        if theta.size < 2 or phi.size < 2:
            raise ValueError("pattern grids need at least two samples per axis")
        if np.any(np.diff(theta) <= 0) or np.any(np.diff(phi) <= 0):
            raise ValueError("pattern grids must be strictly increasing")
        if theta[0] > GRID_EPS or theta[-1] < np.pi - GRID_EPS:
            raise ValueError("theta grid must cover [0, pi]")
        if theta[0] < -GRID_EPS or theta[-1] > np.pi + GRID_EPS:
            raise ValueError("theta grid must lie inside [0, pi]")
        if phi[0] <= -np.pi - GRID_EPS or phi[-1] > np.pi + GRID_EPS:
            raise ValueError("phi grid must lie inside (-pi, pi]")
        shape = (theta.size, phi.size)
        if gain.shape != shape or phase.shape != shape:
            raise ValueError(
                f"gain/phase shapes {gain.shape}/{phase.shape} do not match grid {shape}"
            )
        if not np.all(np.isfinite(gain)) or np.any(gain < 0):
            raise ValueError("gain must be finite and non-negative")
        if not np.all(np.isfinite(phase)):
            raise ValueError("phase must be finite")
        for name, arr in (("theta_grid", theta), ("phi_grid", phi), ("gain", gain), ("phase", phase)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.gain.shape

    @cached_property
    def _tables(self):
        # Periodic extension in phi: append the first column at phi0 + 2pi.
        phi_ext = np.append(self.phi_grid, self.phi_grid[0] + TWO_PI)
        gain_ext = np.concatenate([self.gain, self.gain[:, :1]], axis=1)
        ph = np.concatenate([self.phase, self.phase[:, :1]], axis=1)
        # Per-cell unwrapped corner phases relative to the lower-left corner.
        p00 = ph[:-1, :-1]
        p01 = p00 + _wrap_diff(ph[:-1, 1:] - p00)
        p10 = p00 + _wrap_diff(ph[1:, :-1] - p00)
        p11 = p00 + _wrap_diff(ph[1:, 1:] - p00)
        corners = tuple(np.ascontiguousarray(c) for c in (p00, p01, p10, p11))
        locators = (*build_guide(self.theta_grid), phi_ext, *build_guide(phi_ext))
        return phi_ext, np.ascontiguousarray(gain_ext), corners, locators

    def _check_query(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        theta, phi = np.broadcast_arrays(theta, phi)
        tg = self.theta_grid
        bad = ~((theta >= tg[0] - GRID_EPS) & (theta <= tg[-1] + GRID_EPS))
        if np.any(bad):
            raise PatternDomainError(
                f"elevation {float(theta[bad].flat[0])!r} outside interpolable range "
                f"[{tg[0]:.6g}, {tg[-1]:.6g}] of pattern {self.label!r}"
            )
        if not np.all(np.isfinite(phi)):
            raise PatternDomainError(f"non-finite azimuth for pattern {self.label!r}")
        theta = np.ascontiguousarray(np.clip(theta, tg[0], tg[-1]))
        # shift azimuth into [phi0, phi0 + 2pi)
        phi0 = self.phi_grid[0]
        phi = np.ascontiguousarray(phi0 + np.mod(phi - phi0, TWO_PI))
        return theta, phi

    def gain_phase(self, theta, phi):
        """Interpolated ``(G, Omega)`` at the given angles (broadcast)."""
        theta, phi = self._check_query(theta, phi)
        tg = self.theta_grid
        phi_ext, gain_ext, (p00, p01, p10, p11), (tguide, tscale, _, pguide, pscale) = self._tables
        g, om = bilinear_gain_phase(
            theta,
            phi,
            tg,
            tguide,
            tscale,
            phi_ext,
            pguide,
            pscale,
            gain_ext,
            p00,
            p01,
            p10,
            p11,
        )
        return g, om

    def __call__(self, theta, phi):
        g, om = self.gain_phase(theta, phi)
        out = np.sqrt(g) * np.exp(1j * om)
        return out if out.ndim else complex(out)

    def mean_gain(self, theta_dist=None, phi_dist=None, n_theta: int = 181, n_phi: int = 360) -> float:
        """Mean power gain, over the sphere or weighted by an AoD law."""
        if theta_dist is None and phi_dist is None:
            th = np.linspace(0, np.pi, n_theta)
            ph = np.linspace(-np.pi, np.pi, n_phi, endpoint=False)
            g, _ = self.gain_phase(th[:, None], ph[None, :])
            w = np.sin(th)[:, None] * np.ones_like(ph)[None, :]
            return float(np.sum(g * w) / np.sum(w))
        from .quadrature import angular_rule

        th, ph, w = angular_rule(theta_dist, phi_dist, n_theta, n_phi)
        g, _ = self.gain_phase(th[:, None], ph[None, :])
        return float(np.sum(g * w))

    def scaled(self, gain_db: float) -> "RadiationPattern":
        """Copy with the gain offset by ``gain_db`` decibels."""
        if gain_db == 0:
            return self
        return RadiationPattern(
            self.theta_grid, self.phi_grid, self.gain * 10.0 ** (gain_db / 10.0), self.phase, self.label
        )


def isotropic(label: str = "iso", n_theta: int = 3, n_phi: int = 4) -> RadiationPattern:
    """Unit-gain, zero-phase pattern."""
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = np.linspace(-np.pi, np.pi, n_phi + 1)[1:]
    return RadiationPattern(theta, phi, np.ones((n_theta, n_phi)), np.zeros((n_theta, n_phi)), label)


def eval_pattern(rp: RadiationPattern, theta, phi):
    """Complex amplitude gain ``sqrt(G) exp(j Omega)`` of ``rp`` at ``(theta, phi)``."""
    return rp(theta, phi)


@dataclass(frozen=True, eq=False)
class ExcitationMatrix:
    """4x4 feed of a planar array: +1 (0 deg), -1 (180 deg) or 0 (off)."""

    entries: np.ndarray
    name: str = ""

    def __post_init__(self):
        e = np.array(self.entries, dtype=int)
        if e.shape != (4, 4):
            raise ValueError(f"excitation matrix must be 4x4, got {e.shape}")
        if not np.all(np.isin(e, (-1, 0, 1))):
            raise ValueError("excitation entries must be +1, -1 or 0")
        if not np.any(e):
            raise ValueError("excitation matrix has no active element")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.entries))

    def rotated(self, quarter_turns: int = 1) -> "ExcitationMatrix":
        k = quarter_turns % 4
        return ExcitationMatrix(np.rot90(self.entries, k), f"{self.name}r{90 * k}" if k else self.name)

    def __eq__(self, other):
        if not isinstance(other, ExcitationMatrix):
            return NotImplemented
        return bool(np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash(self.entries.tobytes())


def _parse_matrix(rows: str) -> np.ndarray:
    sym = {"+": 1, "-": -1, "0": 0}
    return np.array([[sym[c] for c in r.split()] for r in rows.strip().splitlines()])


EXCITATIONS: dict[str, ExcitationMatrix] = {
    name: ExcitationMatrix(_parse_matrix(rows), name)
    for name, rows in {
        "A": "0 + + 0\n0 + + 0\n0 - - 0\n0 - - 0",
        "B": "0 0 + +\n0 0 + +\n- - 0 0\n- - 0 0",
        "C": "0 0 0 0\n- - + +\n- - + +\n0 0 0 0",
        "D": "- - 0 0\n- - 0 0\n0 0 + +\n0 0 + +",
        "E": "0 - - 0\n0 - - 0\n0 + + 0\n0 + + 0",
    }.items()
}


def array_factor(ex: ExcitationMatrix, spacing: float, theta, phi):
    """Complex array factor of the 4x4 planar array in the x-y plane.

    Element ``(r, c)`` sits at ``x = (c - 1.5) d``, ``y = (1.5 - r) d`` so row 0
    is the top row of the matrix; boresight is the +z axis (``theta = 0``).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ux = np.sin(theta) * np.cos(phi)
    uy = np.sin(theta) * np.sin(phi)
    af = np.zeros(np.broadcast(ux, uy).shape, dtype=complex)
    for r, c in zip(*np.nonzero(ex.entries)):
        x = (c - 1.5) * spacing
        y = (1.5 - r) * spacing
        af += ex.entries[r, c] * np.exp(1j * TWO_PI * (x * ux + y * uy))
    return af


def synth_array_pattern(
    ex: ExcitationMatrix, spacing: float = 0.5, resolution_deg: float = 1.0, label: str | None = None
) -> RadiationPattern:
    """Far-field pattern of a 4x4 isotropic-element array fed by ``ex``.

    ``spacing`` is the element pitch in wavelengths.  The power gain is
    ``|AF|^2 / n_active`` so a single active element gives a unit isotropic
    pattern.
    """
    if not spacing > 0:
        raise ValueError("element spacing must be positive")
    if not isinstance(ex, ExcitationMatrix):
        ex = ExcitationMatrix(ex)
    n_theta = int(round(180.0 / resolution_deg)) + 1
    n_phi = int(round(360.0 / resolution_deg))
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = np.linspace(-np.pi, np.pi, n_phi + 1)[1:]
    af = array_factor(ex, spacing, theta[:, None], phi[None, :])
    gain = np.abs(af) ** 2 / ex.n_active
    phase = np.angle(af)
    return RadiationPattern(theta, phi, gain, phase, label if label is not None else ex.name)


def _uniform_scale(grid: np.ndarray, guide_scale: float):
    """``(True, 1/spacing)`` for an equispaced grid, else ``(False, guide_scale)``."""
    h = np.diff(grid)
    if np.all(np.abs(h - h.mean()) <= 1e-12 * h.mean()):
        return True, (grid.size - 1) / (grid[-1] - grid[0])
    return False, guide_scale


@dataclass(frozen=True, eq=False)
class Codebook:
    """Ordered set of ``P`` patterns; index ``p`` is 0-based."""

    patterns: tuple[RadiationPattern, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pats = tuple(self.patterns)
        if not pats:
            raise ValueError("codebook needs at least one pattern")
        object.__setattr__(self, "patterns", pats)

    def __len__(self):
        return len(self.patterns)

    def __getitem__(self, i):
        return self.patterns[i]

    def __iter__(self):
        return iter(self.patterns)

    @property
    def P(self) -> int:
        return len(self.patterns)

    def subset(self, indices: Sequence[int]) -> "Codebook":
        return Codebook(tuple(self.patterns[i] for i in indices))

    @cached_property
    def shared_grid(self):
        """Packed cell tables when every pattern uses the same grid, else ``None``.

        Returns ``(theta_grid, tguide, tscale, tuniform, phi_ext, pguide,
        pscale, puniform, cells)`` with ``cells`` of shape
        ``(n_theta - 1, n_phi, P, 8)``.
        """
        first = self.patterns[0]
        if not all(
            np.array_equal(rp.theta_grid, first.theta_grid) and np.array_equal(rp.phi_grid, first.phi_grid)
            for rp in self.patterns[1:]
        ):
            return None
        blocks = []
        for rp in self.patterns:
            _, g, corners, _ = rp._tables
            blocks.append(np.stack([g[:-1, :-1], g[:-1, 1:], g[1:, :-1], g[1:, 1:], *corners], axis=-1))
        cells = np.ascontiguousarray(np.stack(blocks, axis=2))
        phi_ext, _, _, (tguide, tscale, _, pguide, pscale) = first._tables
        tuni, tscale = _uniform_scale(first.theta_grid, tscale)
        puni, pscale = _uniform_scale(phi_ext, pscale)
        return first.theta_grid, tguide, tscale, tuni, phi_ext, pguide, pscale, puni, cells

    def evaluate(self, theta, phi) -> np.ndarray:
        """Complex gains of every pattern, stacked on a trailing axis."""
        shared = self.shared_grid
        if shared is None:
            return np.stack([rp(theta, phi) for rp in self.patterns], axis=-1)
        theta, phi = self.patterns[0]._check_query(theta, phi)
        out = cell_complex_multi(theta, phi, *shared)
        return out.reshape(theta.shape + (self.P,))


def psi(rp_p: RadiationPattern, rp_q: RadiationPattern, x_m: complex, x_n: complex, theta, phi):
    """Squared distance ``|g_q(theta,phi) x_n - g_p(theta,phi) x_m|^2`` between two hypotheses."""
    val = np.abs(rp_q(theta, phi) * x_n - rp_p(theta, phi) * x_m) ** 2
    return val if np.ndim(val) else float(val)


# -- file format -------------------------------------------------------------

_HEADER = re.compile(r"^RP\s+v1\s+(\d+)\s+(\d+)$")


def _tokens(path: Path):
    """Yield (line_number, [tokens]) for non-empty, comment-stripped lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text


def _floats(text: str, n: int, lineno: int, path, what: str) -> np.ndarray:
    parts = text.split()
    if len(parts) != n:
        raise PatternFormatError(f"expected {n} {what} values, found {len(parts)}", lineno, path)
    try:
        vals = np.array([float(t) for t in parts])
    except ValueError as exc:
        raise PatternFormatError(f"bad number in {what}: {exc}", lineno, path) from None
    if np.any(np.isnan(vals)):
        raise PatternFormatError(f"NaN in {what}", lineno, path)
    return vals


def load_pattern(path, label: str | None = None) -> RadiationPattern:
    """Read a text pattern file.

    Format::

        RP v1 <n_theta> <n_phi>
        <theta grid, degrees>
        <phi grid, degrees>
        <n_theta rows of n_phi gains, dB>
        <n_theta rows of n_phi phases, degrees>

    ``#`` starts a comment.  ``-inf`` dB is accepted as zero gain.
    """
    path = Path(path)
    lines = list(_tokens(path))
    if not lines:
        raise PatternFormatError("empty pattern file", None, path)
    lineno, head = lines[0]
    m = _HEADER.match(" ".join(head.split()))
    if not m:
        raise PatternFormatError(f"bad header {head!r}, expected 'RP v1 <n_theta> <n_phi>'", lineno, path)
    nt, npf = int(m.group(1)), int(m.group(2))
    if nt < 2 or npf < 2:
        raise PatternFormatError("grid needs at least 2 samples per axis", lineno, path)
    need = 3 + 2 * nt
    if len(lines) != need:
        raise PatternFormatError(f"expected {need} data lines, found {len(lines)}", lines[-1][0], path)

    ln, text = lines[1]
    theta_deg = _floats(text, nt, ln, path, "theta grid")
    if np.any(~np.isfinite(theta_deg)) or np.any(np.diff(theta_deg) <= 0):
        raise PatternFormatError("theta grid must be finite and strictly increasing", ln, path)
    if theta_deg[0] > 0 + 1e-6 or theta_deg[-1] < 180 - 1e-6 or theta_deg[0] < -1e-6 or theta_deg[-1] > 180 + 1e-6:
        raise PatternFormatError("theta grid must span [0, 180] degrees", ln, path)
    ln, text = lines[2]
    phi_deg = _floats(text, npf, ln, path, "phi grid")
    if np.any(~np.isfinite(phi_deg)) or np.any(np.diff(phi_deg) <= 0):
        raise PatternFormatError("phi grid must be finite and strictly increasing", ln, path)
    if phi_deg[0] <= -180 - 1e-6 or phi_deg[-1] > 180 + 1e-6:
        raise PatternFormatError("phi grid must lie inside (-180, 180] degrees", ln, path)

    gain_db = np.empty((nt, npf))
    phase_deg = np.empty((nt, npf))
    for r in range(nt):
        ln, text = lines[3 + r]
        row = _floats(text, npf, ln, path, "gain")
        if np.any(row == np.inf):
            raise PatternFormatError("infinite gain", ln, path)
        gain_db[r] = row
    for r in range(nt):
        ln, text = lines[3 + nt + r]
        row = _floats(text, npf, ln, path, "phase")
        if np.any(~np.isfinite(row)):
            raise PatternFormatError("non-finite phase", ln, path)
        phase_deg[r] = row

    with np.errstate(over="ignore"):
        gain = 10.0 ** (gain_db / 10.0)
    return RadiationPattern(
        np.deg2rad(theta_deg),
        np.deg2rad(phi_deg),
        gain,
        np.deg2rad(phase_deg),
        label if label is not None else path.stem,
    )


def save_pattern(rp: RadiationPattern, path) -> None:
    """Write ``rp`` in the text format read by :func:`load_pattern`."""
    nt, npf = rp.shape
    fmt = "{:.17g}".format
    with np.errstate(divide="ignore"):
        gain_db = 10.0 * np.log10(rp.gain)
    out = [f"# {rp.label}" if rp.label else "# radiation pattern", f"RP v1 {nt} {npf}"]
    out.append(" ".join(fmt(v) for v in np.rad2deg(rp.theta_grid)))
    out.append(" ".join(fmt(v) for v in np.rad2deg(rp.phi_grid)))
    out.extend(" ".join(fmt(v) for v in row) for row in gain_db)
    out.extend(" ".join(fmt(v) for v in row) for row in np.rad2deg(rp.phase))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
