"""End-to-end HEALPix -> spherical harmonic analysis, power spectra,
analytic test fields and convergence studies."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from importlib import resources
from pathlib import Path
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Iterable, Sequence

import numpy as np

from .baseline import MapValues, analyze_equal_weight, default_ell_max, richardson_refine
from .dfs import dfs_double, fit_pole_values
from .fourier2sph import BivariateFourier, Fourier2SphPlan, expand_to_odd, parity_defect, to_g_coefficients
from .nufft import (
    CGNonConvergence,
    NonuniformNodes,
    NUFFT2Plan,
    cg_toeplitz_rows,
    gram_toeplitz_column,
    rank_for_tolerance,
)
from .ringstep import upsample_map
from .sphgrid import HealpixGrid, SphCoeffTriangle, build_grid, plm_column

__all__ = [
    "HP2SPHPlan",
    "LatitudeSolveError",
    "hp2sph_analyze",
    "get_plan",
    "PowerSpectrum",
    "power_spectrum",
    "SplineSpec",
    "REFERENCE_SPLINE",
    "REFERENCE_HARMONICS",
    "REFERENCE_HARMONICS_HIGH",
    "load_spline",
    "load_terms",
    "potential_spline_values",
    "potential_spline_eval",
    "potential_spline_exact_alm",
    "harmonic_terms_alm",
    "add_harmonics",
    "StudyResult",
    "convergence_study",
    "run_method",
]

log = logging.getLogger(__name__)


class LatitudeSolveError(RuntimeError):
    """The latitude least-squares solve did not converge for some wavenumbers."""

    def __init__(self, msg, wavenumbers, residual):
        super().__init__(msg)
        self.wavenumbers = wavenumbers
        self.residual = residual


class HP2SPHPlan:
    """Everything about the HEALPix -> spherical harmonic analysis that
    depends only on ``n_side``: doubled colatitude nodes, NUFFT factors, the
    truncated Toeplitz Gram column and the Legendre tables of the final
    conversion. Immutable once built and reusable across maps.

    Parameters
    ----------
    n_side : int
    tol, max_iter : float, int
        Conjugate-gradient stopping rule for the latitude solves.
    rank : int, optional
        NUFFT rank; by default the smallest rank that is exact to double
        precision for the node offsets.
    pole_variable : {"z", "theta"}
        Abscissa for the quadratic pole extrapolation.
    """

    def __init__(self, n_side: int, *, tol: float = 1e-12, max_iter: int = 200,
                 rank: int | None = None, pole_variable: str = "z"):
        t0 = time.perf_counter()
        self.grid: HealpixGrid = build_grid(n_side)
        self.n_side = n_side
        self.p = 2 * n_side
        self.m = 4 * n_side + 1
        self.tol = tol
        self.max_iter = max_iter
        self.pole_variable = pole_variable
        thetas = self.grid.thetas
        self.doubled_thetas = np.concatenate([[0.0], thetas, [np.pi], 2.0 * np.pi - thetas[::-1]])
        self.nodes = NonuniformNodes(self.doubled_thetas / (2.0 * np.pi))
        self.rank = rank or rank_for_tolerance(self.nodes.offset_gamma)
        self.nufft = NUFFT2Plan(self.nodes, self.rank)
        self.gram = gram_toeplitz_column(self.nodes, m=self.m, plan=self.nufft)
        self.gram._embedding  # noqa: B018 - build the circulant spectrum now
        # exp(-i p theta) turns the centered band -p..p into 0..2p
        self.modulation = np.exp(-1j * self.p * self.doubled_thetas)
        self.block_rows = max(4, 2**14 // self.nodes.n)
        self.converter = Fourier2SphPlan(self.p)
        self.setup_time = time.perf_counter() - t0
        log.info("plan n_side=%d: gamma=%.3f offset_gamma=%.3f rank=%d setup %.3fs",
                 n_side, self.nodes.gamma, self.nodes.offset_gamma, self.rank, self.setup_time)

    def bivariate_fourier(self, map: MapValues, timings: dict | None = None) -> tuple[BivariateFourier, dict]:
        """Steps 1-2: ring coefficients, poles, doubling and latitude solves."""
        timings = {} if timings is None else timings
        t = time.perf_counter()
        coeffs = upsample_map(map)
        timings["rings"] = time.perf_counter() - t

        t = time.perf_counter()
        north = fit_pole_values(coeffs, "north", variable=self.pole_variable)
        south = fit_pole_values(coeffs, "south", variable=self.pole_variable)
        doubled = dfs_double(coeffs, north, south)
        timings["dfs"] = time.perf_counter() - t

        t = time.perf_counter()
        # one latitude problem per longitudinal wavenumber, batched as rows;
        # row blocks keep the working set cache-sized
        data = doubled.entries.T * self.modulation
        c = np.empty((data.shape[0], self.m), dtype=complex)
        iterations, residual = 0, 0.0
        for start in range(0, data.shape[0], self.block_rows):
            rows = slice(start, start + self.block_rows)
            rhs = self.nufft.adjoint_rows(data[rows], self.m)
            try:
                c[rows], info = cg_toeplitz_rows(self.gram, rhs, self.tol, self.max_iter)
            except CGNonConvergence as exc:
                waves = doubled.wavenumbers[start + exc.columns].tolist()
                raise LatitudeSolveError(
                    f"latitude solve did not converge for wavenumbers {waves} "
                    f"(relative residual {exc.residual:.3e})", waves, exc.residual) from exc
            iterations = max(iterations, info.iterations)
            residual = max(residual, info.residual)
        timings["latitude"] = time.perf_counter() - t
        # c[k, q] multiplies exp(i (p - q) theta) exp(i k lam)
        diag = {"cg_iterations": iterations, "cg_residual": residual,
                "gamma": self.nodes.gamma}
        return BivariateFourier(c.T[::-1]), diag

    def analyze(self, map: MapValues, *, return_info: bool = False):
        if map.grid.n_side != self.n_side:
            raise ValueError(f"plan is for n_side={self.n_side}, map has {map.grid.n_side}")
        timings: dict = {}
        C, diag = self.bivariate_fourier(map, timings)
        t = time.perf_counter()
        X = expand_to_odd(C)
        diag["parity_defect"] = parity_defect(X)
        alm = self.converter.convert(to_g_coefficients(X))
        # the even Nyquist split breaks real symmetry at (p, +-p) only
        diag["symmetry_defect"] = alm.conjugate_symmetry_defect()
        alm = alm.real_part()
        timings["convert"] = time.perf_counter() - t
        diag["timings"] = timings
        log.info("hp2sph n_side=%d: CG iterations=%d residual=%.2e parity defect=%.2e",
                 self.n_side, diag["cg_iterations"], diag["cg_residual"], diag["parity_defect"])
        log.debug("stage timings: %s", {k: round(v, 4) for k, v in timings.items()})
        return (alm, diag) if return_info else alm


@lru_cache(maxsize=8)
def get_plan(n_side: int, **kw) -> HP2SPHPlan:
    return HP2SPHPlan(n_side, **kw)


def hp2sph_analyze(map: MapValues, *, plan: HP2SPHPlan | None = None,
                   return_info: bool = False):
    """Spherical harmonic coefficients (``ell_max = 2 n_side``) of a HEALPix map.

    Raises
    ------
    LatitudeSolveError
        With the offending longitudinal wavenumbers if CG fails.
    """
    plan = plan or get_plan(map.grid.n_side)
    return plan.analyze(map, return_info=return_info)


@dataclass(frozen=True)
class PowerSpectrum:
    ell_max: int
    C: np.ndarray

    @property
    def ells(self) -> np.ndarray:
        return np.arange(self.ell_max + 1)

    def scaled(self) -> np.ndarray:
        """``l (l + 1) C_l / 2 pi``."""
        ell = self.ells
        return ell * (ell + 1) * self.C / (2.0 * np.pi)


def power_spectrum(coeffs: SphCoeffTriangle) -> PowerSpectrum:
    """``C_l = sum_m |a_l^m|^2 / (2 l + 1)``."""
    ell = np.arange(coeffs.ell_max + 1)
    C = np.sum(np.abs(coeffs.data) ** 2, axis=1) / (2 * ell + 1)
    return PowerSpectrum(coeffs.ell_max, C)


@dataclass(frozen=True)
class SplineSpec:
    """Weighted sum of order-3/2 potential splines centred at ``(lam, theta)``."""

    centers: tuple[tuple[float, float], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.centers:
            raise ValueError("need at least one center")
        if len(self.centers) != len(self.weights):
            raise ValueError("centers and weights differ in length")
        for lam, theta in self.centers:
            if not (0.0 <= theta <= np.pi and 0.0 <= lam <= 2.0 * np.pi):
                raise ValueError(f"center ({lam}, {theta}) out of range")

    @classmethod
    def from_dict(cls, d: dict) -> SplineSpec:
        return cls(tuple(zip(map(float, d["lambda"]), map(float, d["theta"]))),
                   tuple(map(float, d["weights"])))

    def to_dict(self) -> dict:
        return {"weights": list(self.weights),
                "lambda": [c[0] for c in self.centers],
                "theta": [c[1] for c in self.centers]}


def load_spline(path=None) -> SplineSpec:
    """Read a spline spec from JSON; by default the bundled 3-center fixture."""
    if path is None:
        text = resources.files(__package__).joinpath("data/spline3.json").read_text()
    else:
        text = Path(path).read_text()
    return SplineSpec.from_dict(json.loads(text))


def load_terms(path=None, *, high: bool = False) -> tuple[tuple[int, int], ...]:
    """Read ``{"ell": [...], "m": [...]}``; by default a bundled 15-term table."""
    if path is None:
        name = "data/harmonics15_high.json" if high else "data/harmonics15.json"
        text = resources.files(__package__).joinpath(name).read_text()
    else:
        text = Path(path).read_text()
    d = json.loads(text)
    if len(d["ell"]) != len(d["m"]):
        raise ValueError("ell and m lists differ in length")
    return tuple((int(l), int(m)) for l, m in zip(d["ell"], d["m"]))


REFERENCE_SPLINE = load_spline()
REFERENCE_HARMONICS = load_terms()
REFERENCE_HARMONICS_HIGH = load_terms(high=True)


def _unit_vectors(lam, theta) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    st = np.sin(theta)
    return np.stack([np.cos(lam) * st, np.sin(lam) * st, np.cos(theta)], axis=-1)


def potential_spline_values(spec: SplineSpec, lam, theta) -> np.ndarray:
    x = _unit_vectors(lam, theta)
    out = np.zeros(x.shape[:-1])
    for (lc, tc), c in zip(spec.centers, spec.weights):
        d = 2.0 - 2.0 * (x @ _unit_vectors(lc, tc))
        out += c * np.maximum(d, 0.0) ** 1.5
    return out


def potential_spline_eval(spec: SplineSpec, grid: HealpixGrid) -> MapValues:
    lam, theta = grid.points()
    return MapValues(grid, potential_spline_values(spec, lam, theta))


def _spline_kernel(ell: np.ndarray) -> np.ndarray:
    ell = ell.astype(float)
    return 18.0 * np.pi / ((ell + 2.5) * (ell + 1.5) * (ell + 0.5) * (ell - 0.5) * (ell - 1.5))


def potential_spline_exact_alm(spec: SplineSpec, ell_max: int) -> SphCoeffTriangle:
    """Exact coefficients: ``kernel(l) * conj(Y_l^m(center))`` summed over centers."""
    if ell_max < 0:
        raise ValueError("ell_max must be >= 0")
    out = SphCoeffTriangle.zeros(ell_max)
    kern = _spline_kernel(np.arange(ell_max + 1))
    for (lc, tc), c in zip(spec.centers, spec.weights):
        for m in range(-ell_max, ell_max + 1):
            y = _ylm_column(ell_max, m, lc, tc)
            out.data[abs(m):, m + ell_max] += c * kern[abs(m):] * np.conj(y)
    return out


def _ylm_column(ell_max: int, m: int, lam: float, theta: float) -> np.ndarray:
    """``Y_l^m(lam, theta)`` for ``l = |m| .. ell_max``."""
    col = plm_column(ell_max, abs(m), np.cos(theta)) * np.exp(1j * abs(m) * lam)
    return ((-1) ** m) * np.conj(col) if m < 0 else col


def harmonic_terms_alm(terms: Iterable[tuple[int, int]], ell_max: int) -> SphCoeffTriangle:
    """Coefficients of the real field added by :func:`add_harmonics`.

    Each ``(l, m)`` with ``m != 0`` contributes ``a_l^m = 1/sqrt 2`` and
    ``a_l^{-m} = (-1)^m / sqrt 2`` (that is ``sqrt 2 Re Y_l^m``); ``m = 0``
    contributes ``a_l^0 = 1``. Either way ``sum_m |a_l^m|^2`` grows by one.
    """
    out = SphCoeffTriangle.zeros(ell_max)
    for ell, m in terms:
        ell, m = int(ell), abs(int(m))
        if ell > ell_max:
            continue
        if m == 0:
            out.data[ell, ell_max] += 1.0
        else:
            out.data[ell, ell_max + m] += 1.0 / np.sqrt(2.0)
            out.data[ell, ell_max - m] += (-1.0) ** m / np.sqrt(2.0)
    return out


def add_harmonics(map: MapValues, terms: Sequence[tuple[int, int]]) -> MapValues:
    """Add ``sqrt 2 Re Y_l^m`` (``Y_l^0`` for ``m = 0``) for each listed term."""
    grid = map.grid
    lam, theta = grid.points()
    x = np.cos(theta)
    values = map.values.copy()
    for ell, m in terms:
        ell, m = int(ell), int(m)
        if abs(m) > ell:
            raise ValueError(f"invalid term (l={ell}, m={m})")
        if ell > 2 * grid.n_side:
            log.warning("harmonic l=%d exceeds the analysis band 2*n_side=%d; it will alias",
                        ell, 2 * grid.n_side)
        p = plm_column(ell, abs(m), x)[-1]
        if m == 0:
            values += p
        else:
            values += np.sqrt(2.0) * p * np.cos(abs(m) * lam)
    return MapValues(grid, values)


def run_method(method: str, map: MapValues) -> SphCoeffTriangle:
    """``"hp2sph"``, ``"equal"`` or ``"richardson[:K]"`` (default ``K = 3``).

    Baselines use the HEALPix default band ``3 n_side - 1``.
    """
    ns = map.grid.n_side
    if method == "hp2sph":
        return hp2sph_analyze(map)
    if method == "equal":
        return analyze_equal_weight(map, default_ell_max(ns))
    if method.startswith("richardson"):
        _, _, k = method.partition(":")
        return richardson_refine(map, default_ell_max(ns), int(k) if k else 3)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class StudyResult:
    rows: list[tuple[int, str, float]] = field(default_factory=list)
    slopes: dict[str, float] = field(default_factory=dict)

    def errors(self, method: str) -> np.ndarray:
        return np.array([e for _, m, e in self.rows if m == method])

    def ts(self, method: str) -> np.ndarray:
        return np.array([t for t, m, _ in self.rows if m == method])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "method", "max_abs_error"])
        for t, m, e in self.rows:
            w.writerow([t, m, repr(float(e))])
        for m, s in self.slopes.items():
            w.writerow(["slope", m, repr(float(s))])
        return buf.getvalue()


def fit_slope(t: np.ndarray, err: np.ndarray) -> float:
    """Least-squares slope of ``log2(error)`` against ``t`` (algebraic order in ``n_side``)."""
    return float(np.polyfit(np.asarray(t, dtype=float), np.log2(err), 1)[0])


def _study_point(t: int, spec: SplineSpec, methods, terms) -> list[tuple[int, str, float]]:
    ns = 2 ** t
    grid = build_grid(ns)
    field_ = potential_spline_eval(spec, grid)
    L = 2 * ns
    exact = potential_spline_exact_alm(spec, L)
    if terms:
        field_ = add_harmonics(field_, terms)
        exact = exact + harmonic_terms_alm(terms, L)
    out = []
    for method in methods:
        err = run_method(method, field_).max_abs_diff(exact, L)
        log.info("study t=%d %s: max error %.3e", t, method, err)
        out.append((t, method, err))
    return out


def convergence_study(
    spec: SplineSpec = REFERENCE_SPLINE,
    t_range: Iterable[int] = range(2, 7),
    methods: Sequence[str] = ("hp2sph", "equal", "richardson:3"),
    *,
    terms: Sequence[tuple[int, int]] = (),
    executor=None,
) -> StudyResult:
    """Max-abs coefficient error against the exact spline coefficients over
    ``l <= 2 n_side`` for ``n_side = 2^t``, plus fitted slopes per method."""
    t_values = list(t_range)
    one = partial(_study_point, spec=spec, methods=tuple(methods), terms=tuple(terms))
    results = list(executor.map(one, t_values)) if executor else [one(t) for t in t_values]
    res = StudyResult([row for rows in results for row in rows])
    if len(t_values) >= 2:
        for method in methods:
            res.slopes[method] = fit_slope(res.ts(method), res.errors(method))
    return res
