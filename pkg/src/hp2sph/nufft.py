"""One-dimensional type-II nonuniform FFT and its least-squares inverse.

The forward transform is ``f_j = sum_k c_k exp(-2 pi i x_j k)`` with
``x_j in [0, 1)`` and integer ``k = 0 .. n-1``. Writing ``n x_j = s_j + u_j``
with ``s_j`` the nearest integer and ``|u_j| <= 1/2``, the kernel factors as
a DFT row times ``exp(-2 pi i u_j k / n)``. The second factor is smooth in
``k / n`` and is expanded in Chebyshev polynomials with Bessel-function
coefficients (Jacobi-Anger), so the transform costs ``K`` FFTs.

The inverse solves the (optionally truncated) normal equations, whose matrix
is Hermitian Toeplitz, by conjugate gradients with FFT-based Toeplitz
products.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy.special import jv

__all__ = [
    "NonuniformNodes",
    "ToeplitzGram",
    "NUFFT2Plan",
    "CGInfo",
    "CGNonConvergence",
    "nudft2_direct",
    "nufft2_apply",
    "nufft2_adjoint",
    "gram_toeplitz_column",
    "toeplitz_apply",
    "cg_toeplitz",
    "cg_toeplitz_rows",
    "inufft2_lsq",
    "rank_for_tolerance",
]

log = logging.getLogger(__name__)

DEFAULT_RANK = 14


@dataclass(frozen=True)
class NonuniformNodes:
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("nodes must be a non-empty 1-D array")
        if np.any(x < 0.0) or np.any(x >= 1.0):
            raise ValueError("nodes must lie in [0, 1)")
        if np.any(np.diff(x) < 0):
            raise ValueError("nodes must be sorted ascending")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def gamma(self) -> float:
        """``n max_j |x_j - j/n|``: distance from the equispaced grid."""
        n = self.n
        return float(n * np.max(np.abs(self.x - np.arange(n) / n)))

    @property
    def offset_gamma(self) -> float:
        """``max_j |n x_j - round(n x_j)|`` (always ``<= 1/2``)."""
        nx = self.n * self.x
        return float(np.max(np.abs(nx - np.round(nx))))


def nudft2_direct(c, nodes: NonuniformNodes) -> np.ndarray:
    """Direct ``O(n m)`` evaluation of ``sum_k c_k exp(-2 pi i x_j k)``.

    The phase ``x_j k`` is reduced modulo 1 in extended precision before the
    exponential is taken.
    """
    c = np.asarray(c, dtype=complex)
    k = np.arange(c.shape[0], dtype=np.longdouble)
    prod = nodes.x.astype(np.longdouble)[:, None] * k[None, :]
    frac = (prod - np.floor(prod)).astype(float)
    return np.exp(-2j * np.pi * frac) @ c


def rank_for_tolerance(offset_gamma: float, eps: float = 1e-16, k_max: int = 64) -> int:
    """Smallest Chebyshev rank whose discarded Bessel tail is below ``eps``."""
    z = np.pi * max(offset_gamma, 0.0)
    r = np.arange(k_max + 2)
    tail = np.cumsum((2.0 * np.abs(jv(r, z)))[::-1])[::-1]
    ok = np.nonzero(tail < eps)[0]
    return int(max(ok[0], 1)) if ok.size else k_max


@dataclass(frozen=True)
class _Factors:
    alpha: np.ndarray       # (K, n) node factors
    alpha_conj: np.ndarray
    alpha_perm: np.ndarray | None  # alpha_conj reordered by bin when bins are unique
    cheb: np.ndarray        # (K, m) Chebyshev factors over k = 0 .. m-1

    @property
    def rank(self) -> int:
        return self.cheb.shape[0]


class NUFFT2Plan:
    """Low-rank factors for one node set; immutable after construction.

    For ``m < n`` modes the Chebyshev expansion only has to cover
    ``k < m``, which shrinks the Bessel argument by ``m / n``; the factors
    for each ``m`` use the smaller of ``rank`` and the rank that reaches
    double precision on that range.

    Parameters
    ----------
    nodes : NonuniformNodes
    rank : int
        Number of Chebyshev terms ``K`` (number of FFTs per transform).
    """

    def __init__(self, nodes: NonuniformNodes, rank: int = DEFAULT_RANK):
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        n = nodes.n
        nx = n * nodes.x
        s = np.round(nx)
        self._u = nx - s
        self.nodes = nodes
        self.rank = int(rank)
        self.n = n
        self.bins = s.astype(int) % n
        self._unique_bins = np.unique(self.bins).size == n
        # split nodes into layers with distinct bins so scatters need no np.add.at
        order = np.argsort(self.bins, kind="stable")
        sorted_bins = self.bins[order]
        starts = np.r_[0, np.flatnonzero(np.diff(sorted_bins)) + 1]
        occurrence = np.arange(n) - np.repeat(starts, np.diff(np.r_[starts, n]))
        self._layers = [(order[occurrence == k], sorted_bins[occurrence == k])
                        for k in range(int(occurrence.max()) + 1)]
        self._cache: dict[int, _Factors] = {}
        self._factors(n)

    def _factors(self, m: int) -> _Factors:
        f = self._cache.get(m)
        if f is not None:
            return f
        n, u = self.n, self._u
        scale = m / n
        rank = self.rank
        if m < n:
            rank = min(rank, rank_for_tolerance(float(np.max(np.abs(u), initial=0.0)) * scale))
        r = np.arange(rank)[:, None]
        eps_r = np.where(r == 0, 1.0, 2.0)
        # exp(-2 pi i u k / n) with k = m (t + 1) / 2 and z = pi u m / n:
        # alpha[r, j] = exp(-i z_j) eps_r (-i)^r J_r(z_j)
        z = np.pi * u * scale
        alpha = np.exp(-1j * z)[None, :] * eps_r * (-1j) ** r * jv(r, z[None, :])
        t = 2.0 * np.arange(m) / m - 1.0
        cheb = np.polynomial.chebyshev.chebvander(t, rank - 1).T
        alpha_conj = np.conj(alpha)
        alpha_perm = None
        if self._unique_bins:
            alpha_perm = np.empty_like(alpha_conj)
            alpha_perm[:, self.bins] = alpha_conj
        f = self._cache[m] = _Factors(alpha, alpha_conj, alpha_perm, cheb)
        return f

    def forward_rows(self, c: np.ndarray) -> np.ndarray:
        """``F2`` applied along the last axis of ``c`` (shape ``(..., m)``)."""
        c = np.asarray(c, dtype=complex)
        m = c.shape[-1]
        if m > self.n:
            raise ValueError(f"at most {self.n} coefficients, got {m}")
        fac = self._factors(m)
        out = np.zeros(c.shape[:-1] + (self.n,), dtype=complex)
        for r in range(fac.rank):
            spec = sfft.fft(fac.cheb[r] * c, n=self.n, axis=-1)
            out += fac.alpha[r] * spec[..., self.bins]
        return out

    def adjoint_rows(self, f: np.ndarray, m: int | None = None) -> np.ndarray:
        """``(F2^* f)[:m]`` along the last axis of ``f`` (shape ``(..., n)``)."""
        f = np.asarray(f, dtype=complex)
        m = self.n if m is None else m
        if not 1 <= m <= self.n:
            raise ValueError(f"need 1 <= m <= {self.n}, got {m}")
        fac = self._factors(m)
        out = np.zeros(f.shape[:-1] + (m,), dtype=complex)
        if fac.alpha_perm is not None:
            # bins are a permutation: reorder once instead of scattering per term
            fp = np.empty_like(f)
            fp[..., self.bins] = f
            for r in range(fac.rank):
                spec = sfft.ifft(fac.alpha_perm[r] * fp, axis=-1, norm="forward", overwrite_x=True)
                out += fac.cheb[r] * spec[..., :m]
            return out
        scattered = np.empty(f.shape[:-1] + (self.n,), dtype=complex)
        (idx0, bins0), *rest = self._layers
        for r in range(fac.rank):
            vals = fac.alpha_conj[r] * f
            scattered[...] = 0.0
            scattered[..., bins0] = vals[..., idx0]
            for idx, bins in rest:
                scattered[..., bins] += vals[..., idx]
            spec = sfft.ifft(scattered, axis=-1, norm="forward")
            out += fac.cheb[r] * spec[..., :m]
        return out

    def forward(self, c: np.ndarray) -> np.ndarray:
        """``F2 c``; ``c`` has shape ``(m,)`` or ``(m, B)`` with ``m <= n``."""
        c = np.asarray(c, dtype=complex)
        if c.ndim == 1:
            return self.forward_rows(c)
        return self.forward_rows(c.T).T

    def adjoint(self, f: np.ndarray, m: int | None = None) -> np.ndarray:
        """``(F2^* f)[:m]``; ``f`` has shape ``(n,)`` or ``(n, B)``."""
        f = np.asarray(f, dtype=complex)
        if f.ndim == 1:
            return self.adjoint_rows(f, m)
        return self.adjoint_rows(f.T, m).T


def nufft2_apply(c, nodes: NonuniformNodes, rank: int = DEFAULT_RANK) -> np.ndarray:
    """Fast approximation of :func:`nudft2_direct`."""
    return NUFFT2Plan(nodes, rank).forward(c)


def nufft2_adjoint(f, nodes: NonuniformNodes, rank: int = DEFAULT_RANK, m: int | None = None) -> np.ndarray:
    """``sum_j exp(+2 pi i x_j k) f_j`` for ``k = 0 .. m-1``."""
    return NUFFT2Plan(nodes, rank).adjoint(f, m)


@dataclass(frozen=True)
class ToeplitzGram:
    """Hermitian Toeplitz matrix ``T[k, l] = t[k - l]``, ``t[-d] = conj(t[d])``."""

    first_column: np.ndarray

    @property
    def m(self) -> int:
        return self.first_column.size

    @cached_property
    def _embedding(self) -> tuple[int, np.ndarray, complex]:
        """Circulant size, its spectrum and the lag ``m - 1`` fix-up.

        A size of ``2m - 2`` folds lags ``+-(m - 1)`` into one slot; the slot
        keeps ``t[m - 1]`` and the single wrong entry ``T[0, m - 1]`` is
        repaired after the product. This allows a power-of-two size when
        ``m = 2^k + 1``.
        """
        m = self.m
        t = self.first_column
        size = sfft.next_fast_len(2 * m - 1)
        folded = 2 * m - 2
        if m > 2 and folded & (folded - 1) == 0 and folded < size:
            size = folded
        col = np.zeros(size, dtype=complex)
        col[:m] = t
        if m > 1:
            tail = np.conj(t[1:][::-1])
            if size == 2 * m - 2:
                col[m:] = tail[1:]
            else:
                col[size - m + 1:] = tail
        fix = complex(np.conj(t[-1]) - t[-1]) if size == 2 * m - 2 else 0j
        return size, sfft.fft(col), fix

    def dense(self) -> np.ndarray:
        t = self.first_column
        k = np.arange(self.m)
        d = k[:, None] - k[None, :]
        return np.where(d >= 0, t[np.abs(d)], np.conj(t[np.abs(d)]))


def gram_toeplitz_column(
    nodes: NonuniformNodes,
    n: int | None = None,
    m: int | None = None,
    *,
    rank: int | None = None,
    plan: NUFFT2Plan | None = None,
) -> ToeplitzGram:
    """First ``m`` entries of the first column of ``F2^* F2``:
    ``t_k = sum_j exp(2 pi i x_j k)``, computed as ``F2^* 1``."""
    n = nodes.n if n is None else n
    if n != nodes.n:
        raise ValueError(f"n={n} does not match {nodes.n} nodes")
    m = n if m is None else m
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if plan is None:
        plan = NUFFT2Plan(nodes, rank or rank_for_tolerance(nodes.offset_gamma))
    col = plan.adjoint(np.ones(n), m)
    col[0] = float(n)
    return ToeplitzGram(col)


def _toeplitz_rows(gram: ToeplitzGram, v: np.ndarray) -> np.ndarray:
    size, eig, fix = gram._embedding
    out = sfft.ifft(eig * sfft.fft(v, n=size, axis=-1), axis=-1)[..., : gram.m]
    if fix:
        out[..., 0] += fix * v[..., -1]
    return out


def toeplitz_apply(gram: ToeplitzGram, v) -> np.ndarray:
    """Toeplitz product by circulant embedding; ``v`` is ``(m,)`` or ``(m, B)``."""
    v = np.asarray(v, dtype=complex)
    if v.shape[0] != gram.m:
        raise ValueError(f"vector length {v.shape[0]} does not match Gram size {gram.m}")
    return _toeplitz_rows(gram, v) if v.ndim == 1 else _toeplitz_rows(gram, v.T).T


@dataclass(frozen=True)
class CGInfo:
    iterations: int
    residual: float  # max over columns of ||b - G c|| / ||b||


class CGNonConvergence(RuntimeError):
    """Conjugate gradients hit ``max_iter``; carries the best iterate."""

    def __init__(self, msg, best, residual, columns=None):
        super().__init__(msg)
        self.best = best
        self.residual = residual
        self.columns = columns


def _rownorm2(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a.conj(), a).real


def cg_toeplitz_rows(gram: ToeplitzGram, b, tol: float = 1e-12, max_iter: int = 200):
    """Row-batched form of :func:`cg_toeplitz`: ``b`` has shape ``(B, m)``.

    Converged rows are dropped from the working set, so late iterations only
    touch the slow rows.
    """
    b = np.asarray(b, dtype=complex)
    x = np.zeros_like(b)
    bnorm = np.sqrt(_rownorm2(b))
    bnorm = np.where(bnorm == 0, 1.0, bnorm)
    final = _rownorm2(b)
    idx = np.flatnonzero(np.sqrt(final) / bnorm > tol)
    xa = np.zeros((idx.size, b.shape[1]), dtype=complex)
    r = b[idx].copy()
    p = r.copy()
    rr = final[idx].copy()
    it = 0
    while idx.size:
        if it >= max_iter:
            x[idx] = xa
            final[idx] = rr
            rel = np.sqrt(final) / bnorm
            raise CGNonConvergence(
                f"CG did not converge in {max_iter} iterations "
                f"(relative residual {rel.max():.3e}, columns {idx.tolist()})",
                x, float(rel.max()), idx,
            )
        it += 1
        Ap = _toeplitz_rows(gram, p)
        alpha = rr / np.einsum("ij,ij->i", p.conj(), Ap).real
        xa += alpha[:, None] * p
        r -= alpha[:, None] * Ap
        rr_new = _rownorm2(r)
        p = r + (rr_new / rr)[:, None] * p
        rr = rr_new
        done = np.sqrt(rr) / bnorm[idx] <= tol
        if done.any():
            x[idx[done]] = xa[done]
            final[idx[done]] = rr[done]
            keep = ~done
            idx, xa, r, p, rr = idx[keep], xa[keep], r[keep], p[keep], rr[keep]
    return x, CGInfo(it, float(np.max(np.sqrt(final) / bnorm)))


def cg_toeplitz(gram: ToeplitzGram, b, tol: float = 1e-12, max_iter: int = 200):
    """Solve ``G c = b`` for Hermitian positive definite Toeplitz ``G``.

    ``b`` may hold several right-hand sides as columns; each column has its
    own step lengths and stops once its relative residual is ``<= tol``.

    Returns
    -------
    c : ndarray
    info : CGInfo
    """
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != gram.m:
        raise ValueError(f"right-hand side length {b.shape[0]} does not match Gram size {gram.m}")
    one_d = b.ndim == 1
    try:
        x, info = cg_toeplitz_rows(gram, b[None, :] if one_d else b.T, tol, max_iter)
    except CGNonConvergence as exc:
        best = exc.best[0] if one_d else exc.best.T
        raise CGNonConvergence(str(exc), best, exc.residual, exc.columns) from None
    return (x[0] if one_d else x.T), info


def inufft2_lsq(
    f,
    nodes: NonuniformNodes,
    m: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 200,
    *,
    rank: int | None = None,
    plan: NUFFT2Plan | None = None,
    gram: ToeplitzGram | None = None,
    full_output: bool = False,
):
    """Least-squares inverse NUFFT-II with ``m <= n`` unknowns.

    Minimizes ``||F2[:, :m] c - f||`` through the truncated normal equations
    ``T c = (F2^* f)[:m]``. ``f`` may be ``(n,)`` or ``(n, B)``.

    Raises
    ------
    CGNonConvergence
        If ``max_iter`` is exceeded.
    """
    m = nodes.n if m is None else m
    if not 1 <= m <= nodes.n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={nodes.n}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if plan is None:
        plan = NUFFT2Plan(nodes, rank or rank_for_tolerance(nodes.offset_gamma))
    if gram is None:
        gram = gram_toeplitz_column(nodes, m=m, plan=plan)
    rhs = plan.adjoint(f, m)
    c, info = cg_toeplitz(gram, rhs, tol, max_iter)
    log.debug("inverse NUFFT: n=%d m=%d gamma=%.3f CG iterations=%d residual=%.2e",
              nodes.n, m, nodes.gamma, info.iterations, info.residual)
    return (c, info) if full_output else c
