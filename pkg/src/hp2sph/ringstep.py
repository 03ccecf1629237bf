"""Per-ring longitudinal Fourier analysis and alignment onto a common
longitude grid.

Every ring of a HEALPix map is replaced by the coefficients of its
trigonometric interpolant, expressed in the unshifted frame and zero padded
to ``4 n_side`` wavenumbers ``n = -2 n_side .. 2 n_side - 1``. Row ``r`` of
the result is therefore the interpolant of ring ``r`` evaluated (implicitly)
on the longitudes ``lam_k = pi k / (2 n_side)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baseline import MapValues

__all__ = ["AlignedRingCoeffs", "ring_to_aligned_coeffs", "upsample_map", "phase_powers"]


@dataclass(frozen=True)
class AlignedRingCoeffs:
    n_side: int
    rows: np.ndarray  # (4 n_side - 1, 4 n_side), column = n + 2 n_side

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-2 * self.n_side, 2 * self.n_side)

    def values_on_tensor_grid(self) -> np.ndarray:
        """Interpolated values at ``lam_k = pi k / (2 n_side)``, shape
        ``(4 n_side - 1, 4 n_side)``."""
        width = 4 * self.n_side
        return width * np.fft.ifft(np.fft.ifftshift(self.rows, axes=1), axis=1)


def phase_powers(w: complex, n_max: int) -> np.ndarray:
    """``w**n`` for ``n = 0 .. n_max`` by a running product."""
    out = np.empty(n_max + 1, dtype=complex)
    out[0] = 1.0
    out[1:] = np.cumprod(np.full(n_max, w, dtype=complex))
    return out


def _ring_shift(j: int, kind: str, n_side: int) -> tuple[int, bool]:
    if kind == "polar":
        if not 1 <= j < max(n_side, 2):
            raise ValueError(f"polar ring index must be in 1..{n_side - 1}, got {j}")
        return 4 * j, True
    if kind == "equatorial":
        if not n_side <= j <= 3 * n_side:
            raise ValueError(f"equatorial ring index must be in {n_side}..{3 * n_side}, got {j}")
        return 4 * n_side, (j + 1) % 2 == 1
    raise ValueError(f"kind must be 'polar' or 'equatorial', got {kind!r}")


def ring_to_aligned_coeffs(
    ring_values,
    ring_index_j: int,
    kind: str,
    n_side: int,
    *,
    split_nyquist: bool = True,
) -> np.ndarray:
    """Fourier coefficients of one ring's trigonometric interpolant.

    Parameters
    ----------
    ring_values : array_like
        Samples on the ring, ``4 j`` of them for polar rings and ``4 n_side``
        for equatorial rings.
    ring_index_j : int
        Polar ring distance from the pole, or the equatorial ring index
        ``n_side .. 3 n_side`` (even indices are half-step shifted).
    kind : {"polar", "equatorial"}
    n_side : int
    split_nyquist : bool
        For polar rings, spread the Nyquist coefficient evenly over
        ``n = -2j`` and ``n = +2j`` so that the interpolant of real data is
        real. The equatorial Nyquist ``n = -2 n_side`` has no partner slot and
        is always kept as a single coefficient.

    Returns
    -------
    ndarray
        Complex vector of length ``4 n_side`` indexed by ``n + 2 n_side``.
    """
    f = np.asarray(ring_values)
    length, shifted = _ring_shift(ring_index_j, kind, n_side)
    if f.shape != (length,):
        raise ValueError(f"{kind} ring j={ring_index_j} needs {length} samples, got shape {f.shape}")

    half = length // 2
    ct = np.fft.fft(f) / length  # c~_n, numpy order
    n = np.fft.fftfreq(length, 1.0 / length).astype(int)  # 0..half-1, -half..-1

    if shifted:
        # c_n = c~_n exp(-i n pi / length), accumulated by running product
        pw = phase_powers(np.exp(-1j * np.pi / length), half)
        phase = np.where(n >= 0, pw[np.abs(n)], np.conj(pw[np.abs(n)]))
        c = ct * phase
    else:
        c = ct.astype(complex)

    width = 4 * n_side
    out = np.zeros(width, dtype=complex)
    out[n + 2 * n_side] = c
    if kind == "polar" and split_nyquist:
        nyq = ct[half] / 2.0  # n = -half sits at numpy index half
        out[-half + 2 * n_side] = nyq * np.conj(pw[half]) if shifted else nyq
        out[half + 2 * n_side] = nyq * pw[half] if shifted else nyq
    return out


def upsample_map(map: MapValues, *, split_nyquist: bool = True) -> AlignedRingCoeffs:
    """Apply :func:`ring_to_aligned_coeffs` to every ring of ``map``."""
    grid = map.grid
    ns = grid.n_side
    rows = np.empty((grid.n_rings, 4 * ns), dtype=complex)
    for r, ring in enumerate(grid.rings):
        rows[r] = ring_to_aligned_coeffs(
            map.values[ring.first_index: ring.first_index + ring.count],
            ring.j, ring.kind, ns, split_nyquist=split_nyquist,
        )
    return AlignedRingCoeffs(ns, rows)
