"""Conversion of bivariate Fourier coefficients of a doubled sphere function
to spherical harmonic coefficients.

Pipeline: ``C[j, k]`` (``j = -p..p``, ``k = -p..p-1``) is widened to an odd
number of longitude modes, folded into the cosine/sine form used by fast
spherical harmonic transforms (``g`` array), and projected per order onto
normalized associated Legendre functions with Gauss-Legendre quadrature.
The projection is a dense ``O(p^3)`` reference for the change of basis; it
is exact for band-limited input.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sphgrid import SphCoeffTriangle, plm_column

__all__ = [
    "BivariateFourier",
    "GCoefficients",
    "Fourier2SphPlan",
    "expand_to_odd",
    "to_g_coefficients",
    "g_to_alm",
    "parity_defect",
    "g_column_index",
]

SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class BivariateFourier:
    """``f~(lam, theta) = sum_{j,k} C[j+p, k+p] exp(i j theta) exp(i k lam)``."""

    C: np.ndarray  # (2p+1, 2p)

    @property
    def p(self) -> int:
        return (self.C.shape[0] - 1) // 2

    def __post_init__(self):
        r, c = self.C.shape
        if r % 2 == 0 or c != r - 1:
            raise ValueError(f"expected shape (2p+1, 2p), got {self.C.shape}")

    def evaluate(self, lam, theta) -> np.ndarray:
        p = self.p
        j = np.arange(-p, p + 1)
        k = np.arange(-p, p)
        Et = np.exp(1j * np.multiply.outer(np.asarray(theta), j))
        El = np.exp(1j * np.multiply.outer(np.asarray(lam), k))
        return np.einsum("...j,jk,...k->...", Et, self.C, El)


def g_column_index(k: int) -> int:
    """Column of ``g_j^k`` in the layout ``(0, -1, +1, -2, +2, ...)``."""
    return 0 if k == 0 else (2 * abs(k) - 1 if k < 0 else 2 * k)


@dataclass(frozen=True)
class GCoefficients:
    """``f~ = sum_{j=0}^{p} sum_k g_j^k exp(i k lam) / sqrt(2 pi) * B_j^k(theta)``
    with ``B = cos(j theta)`` for even ``k`` and ``sin((j+1) theta)`` for odd ``k``."""

    g: np.ndarray  # (p+1, 2p+1)

    @property
    def p(self) -> int:
        return self.g.shape[0] - 1

    def column(self, k: int) -> np.ndarray:
        return self.g[:, g_column_index(k)]

    def evaluate(self, lam, theta) -> np.ndarray:
        p = self.p
        lam = np.asarray(lam, dtype=float)
        theta = np.asarray(theta, dtype=float)
        j = np.arange(p + 1)
        cos_b = np.cos(np.multiply.outer(theta, j))
        sin_b = np.sin(np.multiply.outer(theta, j + 1))
        out = np.zeros(np.broadcast(lam, theta).shape, dtype=complex)
        for k in range(-p, p + 1):
            basis = cos_b if k % 2 == 0 else sin_b
            out = out + (basis @ self.column(k)) * np.exp(1j * k * lam)
        return out / SQRT_2PI


def expand_to_odd(C) -> np.ndarray:
    """Split the unpaired ``k = -p`` column evenly over ``k = +-p``.

    Returns ``X`` of shape ``(2p+1, 2p+1)`` indexed ``[j+p, k+p]``.
    """
    C = C.C if isinstance(C, BivariateFourier) else np.asarray(C)
    X = np.zeros((C.shape[0], C.shape[0]), dtype=complex)
    X[:, 1:-1] = C[:, 1:]
    X[:, 0] = X[:, -1] = 0.5 * C[:, 0]
    return X


def parity_defect(X: np.ndarray) -> float:
    """Size of the part of ``X`` violating ``X[-j, k] = (-1)^k X[j, k]``,
    relative to ``max |X|``."""
    p = (X.shape[0] - 1) // 2
    sign = (-1.0) ** np.abs(np.arange(-p, p + 1))
    bad = X[::-1, :] - sign[None, :] * X
    scale = np.max(np.abs(X), initial=0.0)
    return float(np.max(np.abs(bad), initial=0.0) / scale) if scale else 0.0


def to_g_coefficients(X: np.ndarray) -> GCoefficients:
    """Fold ``X`` into cosine (even ``k``) and sine (odd ``k``) colatitude series.

    Uses ``X_j e^{ij t} + X_{-j} e^{-ij t} = (X_j + X_{-j}) cos jt + i (X_j - X_{-j}) sin jt``
    and keeps the branch allowed for a function on the sphere.
    """
    X = np.asarray(X)
    p = (X.shape[0] - 1) // 2
    pos = X[p:, :]           # j = 0..p
    neg = X[p::-1, :]        # j = 0..-p
    cos_part = pos + neg
    cos_part[0] = X[p]       # j = 0 appears once
    sin_part = 1j * (pos - neg)  # row j: coefficient of sin(j theta)
    g = np.zeros((p + 1, 2 * p + 1), dtype=complex)
    for k in range(-p, p + 1):
        col = g_column_index(k)
        if k % 2 == 0:
            g[:, col] = cos_part[:, k + p]
        else:
            g[:p, col] = sin_part[1:, k + p]
    return GCoefficients(SQRT_2PI * g)


class Fourier2SphPlan:
    """Quadrature nodes and Legendre tables for band limit ``p``.

    With ``p + 1`` Gauss-Legendre nodes in ``cos theta`` the projection of a
    degree-``p`` colatitude series onto ``P~_l^m``, ``l <= p``, is exact.
    """

    def __init__(self, p: int):
        self.p = p
        x, w = np.polynomial.legendre.leggauss(p + 1)
        theta = np.arccos(x)
        j = np.arange(p + 1)
        self.cos_w = w[:, None] * np.cos(np.outer(theta, j))
        self.sin_w = w[:, None] * np.sin(np.outer(theta, j + 1))
        self.legendre = [plm_column(p, m, x) for m in range(p + 1)]

    def convert(self, g: GCoefficients) -> SphCoeffTriangle:
        p = self.p
        if g.p != p:
            raise ValueError(f"plan is for p={p}, got g with p={g.p}")
        even = np.array([g_column_index(k) for k in range(-p, p + 1) if k % 2 == 0])
        odd = np.array([g_column_index(k) for k in range(-p, p + 1) if k % 2])
        H = np.zeros((p + 1, 2 * p + 1), dtype=complex)  # weighted profiles at nodes
        H[:, even] = self.cos_w @ g.g[:, even]
        if odd.size:
            H[:, odd] = self.sin_w @ g.g[:, odd]
        # a = 2 pi / sqrt(2 pi) * s_m * sum_i w_i h_m(theta_i) P~_l^|m|(x_i)
        out = SphCoeffTriangle.zeros(p)
        for m in range(p + 1):
            cols = [g_column_index(m), g_column_index(-m)] if m else [0]
            # real matmul on interleaved (re, im) keeps the table uncast
            prof = np.ascontiguousarray(H[:, cols]).view(float)
            vals = (self.legendre[m] @ prof).view(complex)
            out.data[m:, m + p] = SQRT_2PI * vals[:, 0]
            if m:
                out.data[m:, p - m] = ((-1.0) ** m * SQRT_2PI) * vals[:, 1]
        return out


@lru_cache(maxsize=4)
def _plan(p: int) -> Fourier2SphPlan:
    return Fourier2SphPlan(p)


def g_to_alm(g: GCoefficients, p: int | None = None) -> SphCoeffTriangle:
    """Spherical harmonic coefficients (``ell_max = p``) of the ``g`` expansion."""
    p = g.p if p is None else p
    return _plan(p).convert(g)
