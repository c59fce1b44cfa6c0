"""Bit mapping, transmit synthesis and ML detection for pattern-index modulation.

A transmit word selects one of ``P`` radiation patterns and one of ``M``
constellation points.  The first ``log2(P)`` bits pick the pattern in natural
binary order, the remaining ``log2(M)`` bits pick the point by label.  Indices
are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Constellation",
    "TxWord",
    "bpsk",
    "qpsk",
    "ssk",
    "constellation_by_name",
    "bits_per_word",
    "map_bits",
    "demap",
    "transmit",
    "ml_metric",
    "ml_detect",
    "ml_detect_batch",
    "WordTable",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Constellation:
    """``M`` unit-average-energy points with distinct bit labels."""

    points: np.ndarray
    labels: tuple[str, ...]
    name: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=complex).ravel()
        labels = tuple(self.labels)
        M = pts.size
        if not _is_pow2(M):
            raise ValueError(f"constellation size must be a power of 2, got {M}")
        if len(labels) != M or len(set(labels)) != M:
            raise ValueError("need one distinct label per point")
        nb = int(math.log2(M))
        if any(len(lab) != nb or set(lab) - {"0", "1"} for lab in labels):
            raise ValueError(f"labels must be {nb}-bit strings")
        if not math.isclose(float(np.mean(np.abs(pts) ** 2)), 1.0, rel_tol=1e-9):
            raise ValueError("constellation must have unit average energy")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def M(self) -> int:
        return self.points.size

    @property
    def bits(self) -> int:
        return int(math.log2(self.M))

    def index_of_label(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"no constellation point labelled {label!r}") from None


def bpsk() -> Constellation:
    return Constellation(np.array([1.0, -1.0]), ("0", "1"), "bpsk")


def qpsk(gray: bool = False) -> Constellation:
    """Points ``(+-1 +- j)/sqrt(2)`` counter-clockwise from the first quadrant."""
    pts = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    labels = ("00", "01", "11", "10") if gray else ("00", "01", "10", "11")
    return Constellation(pts, labels, "qpsk_gray" if gray else "qpsk")


def ssk() -> Constellation:
    """Single unmodulated symbol: all bits ride on the pattern index."""
    return Constellation(np.array([1.0]), ("",), "ssk")


def constellation_by_name(name: str) -> Constellation:
    table = {"bpsk": bpsk, "qpsk": qpsk, "qpsk_gray": lambda: qpsk(gray=True), "ssk": ssk}
    try:
        return table[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}; choose from {sorted(table)}") from None


@dataclass(frozen=True)
class TxWord:
    """Pattern index ``p`` and symbol index ``m`` (both 0-based)."""

    p: int
    m: int


def _check_P(P: int) -> int:
    if not _is_pow2(P):
        raise ValueError(f"number of patterns must be a power of 2, got {P}")
    return int(math.log2(P))


def bits_per_word(P: int, constellation: Constellation) -> int:
    return _check_P(P) + constellation.bits


def map_bits(bits: str, P: int, constellation: Constellation) -> TxWord:
    nb_p = _check_P(P)
    if len(bits) != nb_p + constellation.bits or set(bits) - {"0", "1"}:
        raise ValueError(f"expected {nb_p + constellation.bits} bits, got {bits!r}")
    p = int(bits[:nb_p], 2) if nb_p else 0
    return TxWord(p, constellation.index_of_label(bits[nb_p:]))


def demap(word: TxWord, P: int, constellation: Constellation) -> str:
    nb_p = _check_P(P)
    if not (0 <= word.p < P and 0 <= word.m < constellation.M):
        raise ValueError(f"word {word} out of range for P={P}, M={constellation.M}")
    head = format(word.p, f"0{nb_p}b") if nb_p else ""
    return head + constellation.labels[word.m]


def transmit(H, word: TxWord, rho: float, noise, constellation: Constellation) -> np.ndarray:
    """``y = sqrt(rho) H[:, p] x_m + noise``."""
    H = np.asarray(H)
    if not (0 <= word.p < H.shape[-1] and 0 <= word.m < constellation.M):
        raise ValueError(f"word {word} out of range")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return math.sqrt(rho) * H[:, word.p] * constellation.points[word.m] + np.asarray(noise)


def ml_metric(y, H, rho: float, constellation: Constellation) -> np.ndarray:
    """Decision metric for every hypothesis, shape ``(P, M)``.

    ``D(q, n) = sum_r Re{conj(y_r) s_r} - |s|^2 / 2`` with
    ``s = sqrt(rho) H[:, q] x_n``; larger is more likely.
    """
    s = math.sqrt(rho) * np.asarray(H)[:, :, None] * constellation.points[None, None, :]
    y = np.asarray(y)[:, None, None]
    return np.sum((np.conj(y) * s).real - 0.5 * np.abs(s) ** 2, axis=0)


def ml_detect(y, H, rho: float, constellation: Constellation) -> TxWord:
    """Maximum-likelihood word; ties go to the lowest pattern, then symbol."""
    D = ml_metric(y, H, rho, constellation)
    k = int(np.argmax(D.ravel()))
    return TxWord(*divmod(k, constellation.M))


def ml_detect_batch(y, H, rho: float, constellation: Constellation) -> np.ndarray:
    """Vectorised detector over a leading trial axis.

    ``y`` is ``(T, N_r)``, ``H`` is ``(T, N_r, P)``; returns flat word indices
    ``p * M + m`` (same tie-break as :func:`ml_detect`).
    """
    x = constellation.points
    # candidate noiseless observations, (T, N_r, P*M) in (q, n) order
    s = (math.sqrt(rho) * H[:, :, :, None] * x).reshape(H.shape[0], H.shape[1], -1)
    D = np.einsum("tr,trk->tk", np.conj(y), s).real - 0.5 * np.einsum("trk,trk->tk", s.real, s.real)
    D -= 0.5 * np.einsum("trk,trk->tk", s.imag, s.imag)
    return np.argmax(D, axis=1)


class WordTable:
    """Bit labels of every ``(p, m)`` word, indexed by ``p * M + m``."""

    def __init__(self, P: int, constellation: Constellation):
        self.P = P
        self.constellation = constellation
        self.n_bits = bits_per_word(P, constellation)
        M = constellation.M
        words = [demap(TxWord(p, m), P, constellation) for p in range(P) for m in range(M)]
        self.labels = tuple(words)
        self.bits = np.array([[int(b) for b in w] for w in words], dtype=np.uint8).reshape(P * M, self.n_bits)

    @cached_property
    def hamming(self) -> np.ndarray:
        """``N_H`` between every pair of words."""
        return np.sum(self.bits[:, None, :] != self.bits[None, :, :], axis=2)

    def word(self, k: int) -> TxWord:
        return TxWord(*divmod(int(k), self.constellation.M))
