"""HEALPix point sets, normalized associated Legendre functions and
spherical harmonics.

Conventions
-----------
* ``theta`` is colatitude in ``[0, pi]``, ``lam`` is azimuth in ``[0, 2 pi)``.
* ``P_l^m`` carries the Condon-Shortley phase ``(-1)^m``.
* ``Y_l^m(lam, theta) = N_lm P_l^m(cos theta) exp(i m lam)`` for ``m >= 0`` and
  ``Y_l^{-m} = (-1)^m conj(Y_l^m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "RingSpec",
    "HealpixGrid",
    "SphCoeffTriangle",
    "build_grid",
    "eval_plm_normalized",
    "plm_column",
    "eval_ylm",
    "is_power_of_two",
]

FOUR_PI = 4.0 * np.pi


def is_power_of_two(n) -> bool:
    return isinstance(n, (int, np.integer)) and not isinstance(n, bool) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RingSpec:
    """One isolatitude ring.

    ``kind`` is ``"polar"`` or ``"equatorial"``; ``j`` is the ring index used
    by the closed-form point formulas (distance from the nearer pole for
    polar rings, ``n_side .. 3 n_side`` for equatorial rings).
    """

    theta: float
    count: int
    phi_offset: float
    first_index: int
    kind: str
    j: int

    @property
    def shifted(self) -> bool:
        return self.phi_offset != 0.0

    def longitudes(self) -> np.ndarray:
        return self.phi_offset + 2.0 * np.pi * np.arange(self.count) / self.count


@dataclass(frozen=True)
class HealpixGrid:
    n_side: int
    rings: tuple[RingSpec, ...]
    n_points: int

    @property
    def n_rings(self) -> int:
        return len(self.rings)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.rings])

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.count for r in self.rings])

    def ring_slice(self, i: int) -> slice:
        r = self.rings[i]
        return slice(r.first_index, r.first_index + r.count)

    def split(self, values: np.ndarray) -> list[np.ndarray]:
        """Split a RING-ordered value array into per-ring views."""
        return [values[self.ring_slice(i)] for i in range(self.n_rings)]

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(lam, theta)`` arrays of all points in RING order."""
        lam = np.concatenate([r.longitudes() for r in self.rings])
        theta = np.concatenate([np.full(r.count, r.theta) for r in self.rings])
        return lam, theta


@lru_cache(maxsize=32)
def build_grid(n_side: int) -> HealpixGrid:
    """Build the HEALPix point set for ``n_side`` (a power of two) in RING order.

    Rings are listed north to south, points within a ring by increasing
    longitude.
    """
    if not is_power_of_two(n_side):
        raise ValueError(f"n_side must be a positive power of two, got {n_side!r}")
    ns = int(n_side)
    specs = []

    # (theta, count, offset, kind, j) north to south
    for j in range(1, ns):
        z = 1.0 - j * j / (3.0 * ns * ns)
        specs.append((np.arccos(z), 4 * j, np.pi / (4 * j), "polar", j))
    for j in range(ns, 3 * ns + 1):
        z = 2.0 * (2 * ns - j) / (3.0 * ns)
        shift = ((j + 1) % 2) / 2.0
        specs.append((np.arccos(z), 4 * ns, np.pi * shift / (2 * ns), "equatorial", j))
    for j in range(ns - 1, 0, -1):
        z = -(1.0 - j * j / (3.0 * ns * ns))
        specs.append((np.arccos(z), 4 * j, np.pi / (4 * j), "polar", j))

    rings = []
    first = 0
    for theta, count, offset, kind, j in specs:
        rings.append(RingSpec(float(theta), count, float(offset), first, kind, j))
        first += count
    return HealpixGrid(ns, tuple(rings), first)


def _plm_seed(m: int, sin_t: np.ndarray) -> np.ndarray:
    # P~_m^m = (-1)^m sqrt(1/4pi) prod_{k=1}^m sqrt((2k+1)/(2k)) sin^m
    p = np.full_like(sin_t, 1.0 / np.sqrt(FOUR_PI))
    for k in range(1, m + 1):
        p = -np.sqrt((2 * k + 1) / (2.0 * k)) * sin_t * p
    return p


def plm_column(ell_max: int, m: int, x) -> np.ndarray:
    """Normalized ``P~_l^m(x)`` for ``l = m .. ell_max`` at all ``x``.

    Returns an array of shape ``(ell_max - m + 1,) + x.shape``. Uses the
    three-term recurrence in degree seeded at ``P~_m^m``.
    """
    x = np.asarray(x, dtype=float)
    if m < 0 or m > ell_max:
        raise ValueError(f"need 0 <= m <= ell_max, got m={m}, ell_max={ell_max}")
    sin_t = np.sqrt(np.maximum(0.0, (1.0 - x) * (1.0 + x)))
    out = np.empty((ell_max - m + 1,) + x.shape)
    out[0] = _plm_seed(m, sin_t)
    if ell_max > m:
        out[1] = np.sqrt(2 * m + 3.0) * x * out[0]
    for ell in range(m + 2, ell_max + 1):
        a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
        b = np.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
        out[ell - m] = a * (x * out[ell - m - 1] - b * out[ell - m - 2])
    return out


def eval_plm_normalized(ell: int, m: int, x):
    """``sqrt((2l+1)/4pi) sqrt((l-m)!/(l+m)!) P_l^m(x)`` with Condon-Shortley phase."""
    if m < 0 or m > ell:
        raise ValueError(f"need 0 <= m <= ell, got ell={ell}, m={m}")
    val = plm_column(ell, m, x)[-1]
    return float(val) if np.ndim(val) == 0 else val


def eval_ylm(ell: int, m: int, lam, theta):
    if abs(m) > ell:
        raise ValueError(f"need |m| <= ell, got ell={ell}, m={m}")
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    y = eval_plm_normalized(ell, abs(m), np.cos(theta)) * np.exp(1j * abs(m) * lam)
    if m < 0:
        y = (-1) ** m * np.conj(y)
    return complex(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class SphCoeffTriangle:
    """Complex coefficients ``a_l^m`` for ``0 <= l <= ell_max``, ``|m| <= l``.

    Stored densely as ``data[l, m + ell_max]``; entries with ``|m| > l`` are
    zero.
    """

    ell_max: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.ell_max + 1, 2 * self.ell_max + 1)
        if self.data.shape != shape:
            raise ValueError(f"coefficient array must have shape {shape}, got {self.data.shape}")

    @classmethod
    def zeros(cls, ell_max: int) -> SphCoeffTriangle:
        return cls(ell_max, np.zeros((ell_max + 1, 2 * ell_max + 1), dtype=complex))

    @classmethod
    def from_dict(cls, ell_max: int, entries: dict) -> SphCoeffTriangle:
        out = cls.zeros(ell_max)
        for (ell, m), v in entries.items():
            out.data[ell, m + ell_max] = v
        return out

    def __getitem__(self, key) -> complex:
        ell, m = key
        if not (0 <= ell <= self.ell_max and abs(m) <= ell):
            raise IndexError(f"(l, m) = {key} outside triangle of ell_max={self.ell_max}")
        return complex(self.data[ell, m + self.ell_max])

    def order(self, m: int) -> np.ndarray:
        """Coefficients of order ``m`` for ``l = |m| .. ell_max``."""
        return self.data[abs(m):, m + self.ell_max]

    def mask(self) -> np.ndarray:
        ell = np.arange(self.ell_max + 1)[:, None]
        m = np.arange(-self.ell_max, self.ell_max + 1)[None, :]
        return np.abs(m) <= ell

    def truncate(self, ell_max: int) -> SphCoeffTriangle:
        """Restrict (or zero-extend) to a different band limit."""
        out = SphCoeffTriangle.zeros(ell_max)
        L = min(ell_max, self.ell_max)
        out.data[: L + 1, ell_max - L: ell_max + L + 1] = self.data[: L + 1, self.ell_max - L: self.ell_max + L + 1]
        return out

    def items(self):
        """Yield ``(l, m, value)`` sorted by ``l`` then ``m``."""
        for ell in range(self.ell_max + 1):
            for m in range(-ell, ell + 1):
                yield ell, m, complex(self.data[ell, m + self.ell_max])

    def conjugate_symmetry_defect(self) -> float:
        """``max |a_l^{-m} - (-1)^m conj(a_l^m)|``; zero for real maps."""
        m = np.arange(-self.ell_max, self.ell_max + 1)
        flipped = ((-1.0) ** np.abs(m)) * np.conj(self.data[:, ::-1])
        return float(np.max(np.abs(self.data - flipped), initial=0.0))

    def real_part(self) -> SphCoeffTriangle:
        """Coefficients of the real part of the field (nearest conjugate-symmetric triangle)."""
        m = np.arange(-self.ell_max, self.ell_max + 1)
        flipped = ((-1.0) ** np.abs(m)) * np.conj(self.data[:, ::-1])
        return SphCoeffTriangle(self.ell_max, 0.5 * (self.data + flipped))

    def to_packed_layout(self) -> np.ndarray:
        """Column-pair layout: column 0 holds ``a_l^0``, columns ``2m-1, 2m``
        hold ``a_{m+i}^{-m}, a_{m+i}^{m}`` in row ``i``."""
        L = self.ell_max
        out = np.zeros((L + 1, 2 * L + 1), dtype=complex)
        out[:, 0] = self.order(0)
        for m in range(1, L + 1):
            out[: L - m + 1, 2 * m - 1] = self.order(-m)
            out[: L - m + 1, 2 * m] = self.order(m)
        return out

    @classmethod
    def from_packed_layout(cls, arr: np.ndarray) -> SphCoeffTriangle:
        L = arr.shape[0] - 1
        out = cls.zeros(L)
        out.data[:, L] = arr[:, 0]
        for m in range(1, L + 1):
            out.data[m:, L - m] = arr[: L - m + 1, 2 * m - 1]
            out.data[m:, L + m] = arr[: L - m + 1, 2 * m]
        return out

    def __add__(self, other: SphCoeffTriangle) -> SphCoeffTriangle:
        L = max(self.ell_max, other.ell_max)
        return SphCoeffTriangle(L, self.truncate(L).data + other.truncate(L).data)

    def __sub__(self, other: SphCoeffTriangle) -> SphCoeffTriangle:
        L = max(self.ell_max, other.ell_max)
        return SphCoeffTriangle(L, self.truncate(L).data - other.truncate(L).data)

    def scaled(self, factor) -> SphCoeffTriangle:
        return SphCoeffTriangle(self.ell_max, self.data * factor)

    def max_abs_diff(self, other: SphCoeffTriangle, ell_max: int | None = None) -> float:
        """Max-abs difference over the shared triangle ``l <= ell_max``."""
        L = min(self.ell_max, other.ell_max) if ell_max is None else ell_max
        return float(np.max(np.abs(self.truncate(L).data - other.truncate(L).data)))
