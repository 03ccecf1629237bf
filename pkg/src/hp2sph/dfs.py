"""Pole reconstruction and double Fourier sphere (DFS) extension.

The doubled field is ``f~(lam, theta) = f(lam + pi, 2 pi - theta)`` for
``theta in (pi, 2 pi)``. In longitudinal Fourier space the half-turn shift
multiplies wavenumber ``n`` by ``(-1)^n``, so the reflected rows are the
original rows in reverse order with odd wavenumbers negated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ringstep import AlignedRingCoeffs
from .sphgrid import build_grid

__all__ = ["DoubledCoeffMatrix", "fit_pole_values", "dfs_double", "dfs_double_values"]


@dataclass(frozen=True)
class DoubledCoeffMatrix:
    n_side: int
    entries: np.ndarray  # (8 n_side, 4 n_side)
    thetas: np.ndarray   # (8 n_side,), ascending in [0, 2 pi)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-2 * self.n_side, 2 * self.n_side)


def _weighted_quadratic_at_zero(s: np.ndarray, y: np.ndarray, w: np.ndarray) -> complex:
    # weighted LSQ fit y ~ a + b s + c s^2, return a
    V = np.vander(s, 3, increasing=True) * np.sqrt(w)[:, None]
    sol, *_ = np.linalg.lstsq(V, y * np.sqrt(w), rcond=None)
    return sol[0]


def fit_pole_values(
    coeffs: AlignedRingCoeffs,
    which: str,
    *,
    n_rings: int = 3,
    variable: str = "z",
) -> np.ndarray:
    """Longitudinal coefficient row for the north or south pole.

    The ring means (wavenumber 0) of the ``n_rings`` rings nearest the pole
    are fitted by a weighted quadratic and extrapolated to the pole; weights
    are ``1 / d^2`` with ``d`` the colatitude distance from the pole. All
    other wavenumbers are zero.

    ``variable`` selects the abscissa of the quadratic: ``"z"`` uses
    ``1 - |cos theta|`` (ring means of smooth fields are smooth in ``cos
    theta``), ``"theta"`` uses the colatitude distance itself.
    """
    grid = build_grid(coeffs.n_side)
    thetas = grid.thetas
    if which == "north":
        idx = np.arange(n_rings)
        d = thetas[idx]
    elif which == "south":
        idx = np.arange(grid.n_rings - 1, grid.n_rings - 1 - n_rings, -1)
        d = np.pi - thetas[idx]
    else:
        raise ValueError(f"which must be 'north' or 'south', got {which!r}")

    if variable == "z":
        s = 1.0 - np.cos(d)
    elif variable == "theta":
        s = d
    else:
        raise ValueError(f"variable must be 'z' or 'theta', got {variable!r}")

    zero = 2 * coeffs.n_side
    row = np.zeros(4 * coeffs.n_side, dtype=complex)
    row[zero] = _weighted_quadratic_at_zero(s, coeffs.rows[idx, zero], 1.0 / d**2)
    return row


def _odd_sign(width: int) -> np.ndarray:
    n = np.arange(-width // 2, width // 2)
    return np.where(n % 2 == 0, 1.0, -1.0)


def dfs_double(coeffs: AlignedRingCoeffs, north_pole, south_pole) -> DoubledCoeffMatrix:
    """Stack ``[north; rings; south; reflected rings]`` over ``theta in [0, 2 pi)``."""
    ns = coeffs.n_side
    thetas = build_grid(ns).thetas
    rows = coeffs.rows
    reflected = rows[::-1] * _odd_sign(rows.shape[1])[None, :]
    entries = np.vstack([np.asarray(north_pole)[None, :], rows,
                         np.asarray(south_pole)[None, :], reflected])
    nodes = np.concatenate([[0.0], thetas, [np.pi], 2.0 * np.pi - thetas[::-1]])
    return DoubledCoeffMatrix(ns, entries, nodes)


def dfs_double_values(values: np.ndarray) -> np.ndarray:
    """Value-space doubling of a tensor grid ``values[theta_i, lam_k]``
    (``lam_k = 2 pi k / n_lam``, ``n_lam`` even): appends the rows
    ``f(lam + pi, theta)`` in reverse colatitude order."""
    n_lam = values.shape[1]
    if n_lam % 2:
        raise ValueError("longitude count must be even")
    return np.vstack([values, np.roll(values[::-1], -n_lam // 2, axis=1)])
