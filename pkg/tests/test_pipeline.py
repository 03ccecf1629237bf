import json
import logging
from functools import lru_cache

import mpmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_legendre

from conftest import random_real_coeffs
from hp2sph.baseline import MapValues, synthesize_direct
from hp2sph.fourier2sph import expand_to_odd, to_g_coefficients
from hp2sph.pipeline import (
    REFERENCE_HARMONICS,
    REFERENCE_HARMONICS_HIGH,
    REFERENCE_SPLINE,
    HP2SPHPlan,
    LatitudeSolveError,
    SplineSpec,
    add_harmonics,
    convergence_study,
    get_plan,
    harmonic_terms_alm,
    hp2sph_analyze,
    load_spline,
    load_terms,
    potential_spline_eval,
    potential_spline_exact_alm,
    potential_spline_values,
    power_spectrum,
    run_method,
)
from hp2sph.sphgrid import SphCoeffTriangle, build_grid, eval_ylm


def unit_vec(lam, theta):
    return np.array([np.cos(lam) * np.sin(theta), np.sin(lam) * np.sin(theta), np.cos(theta)])


@lru_cache(maxsize=None)
def funk_hecke_kernel(ell):
    """2 pi int_{-1}^{1} (2 - 2t)^{3/2} P_l(t) dt in 40-digit arithmetic."""
    mpmath.mp.dps = 40
    f = lambda t: (2 - 2 * t) ** 1.5 * mpmath.legendre(ell, t)
    return float(2 * mpmath.pi * mpmath.quad(f, mpmath.linspace(-1, 1, ell // 4 + 2)))


def rotate_quarter(map_):
    g = map_.grid
    out = map_.values.copy()
    for r, ring in enumerate(g.rings):
        s = g.ring_slice(r)
        out[s] = np.roll(map_.values[s], ring.count // 4)
    return MapValues(g, out)


class TestAnalyze:
    def test_constant(self):
        g = build_grid(8)
        a = hp2sph_analyze(MapValues(g, np.ones(g.n_points)))
        assert a.ell_max == 16
        assert abs(a[0, 0] - 2 * np.sqrt(np.pi)) < 1e-10
        a.data[0, a.ell_max] = 0
        assert np.max(np.abs(a.data)) < 1e-9

    def test_real_y53(self):
        g = build_grid(16)
        lam, theta = g.points()
        a = hp2sph_analyze(MapValues(g, 2 * np.real(eval_ylm(5, 3, lam, theta))))
        ref = SphCoeffTriangle.zeros(32)
        ref.data[5, 32 + 3] = 1
        ref.data[5, 32 - 3] = -1
        assert a.max_abs_diff(ref) <= 1e-6

    def test_low_order_harmonic_exact(self):
        # orders |m| <= 1 are resolved on every ring, so only the pole fit matters
        g = build_grid(16)
        lam, theta = g.points()
        a = hp2sph_analyze(MapValues(g, 2 * np.real(eval_ylm(7, 1, lam, theta))))
        ref = SphCoeffTriangle.zeros(32)
        ref.data[7, 32 + 1] = 1
        ref.data[7, 32 - 1] = -1
        assert a.max_abs_diff(ref) < 1e-10

    def test_spline_cross_check(self):
        g = build_grid(64)
        a = hp2sph_analyze(potential_spline_eval(REFERENCE_SPLINE, g))
        assert a.max_abs_diff(potential_spline_exact_alm(REFERENCE_SPLINE, 128), 10) <= 1e-5

    def test_linear(self, rng):
        g = build_grid(8)
        f1, f2 = rng.standard_normal(g.n_points), rng.standard_normal(g.n_points)
        a1 = hp2sph_analyze(MapValues(g, f1))
        a2 = hp2sph_analyze(MapValues(g, f2))
        a12 = hp2sph_analyze(MapValues(g, 2 * f1 - 0.5 * f2))
        assert np.max(np.abs(a12.data - 2 * a1.data + 0.5 * a2.data)) < 1e-9

    def test_quarter_rotation(self, rng):
        g = build_grid(8)
        f = MapValues(g, rng.standard_normal(g.n_points))
        a = hp2sph_analyze(f)
        b = hp2sph_analyze(rotate_quarter(f))
        m = np.arange(-a.ell_max, a.ell_max + 1)
        np.testing.assert_allclose(b.data, a.data * np.exp(-1j * m * np.pi / 2)[None, :], atol=1e-10)

    def test_real_map_conjugate_symmetry(self, rng):
        g = build_grid(8)
        a = hp2sph_analyze(MapValues(g, rng.standard_normal(g.n_points)))
        assert a.conjugate_symmetry_defect() < 1e-14

    def test_symmetrization_only_touches_nyquist_pair(self, rng):
        g = build_grid(8)
        a, info = hp2sph_analyze(MapValues(g, rng.standard_normal(g.n_points)), return_info=True)
        assert info["symmetry_defect"] > 1e-6
        # rebuild without the projection and compare away from (p, +-p)
        C, _ = get_plan(8).bivariate_fourier(MapValues(g, rng.standard_normal(g.n_points)))
        raw = get_plan(8).converter.convert(to_g_coefficients(expand_to_odd(C)))
        proj = raw.real_part()
        diff = np.abs(raw.data - proj.data)
        diff[16, [0, 32]] = 0
        assert np.max(diff) < 1e-14

    def test_band_limited_reconstruction(self, rng):
        g = build_grid(16)
        m = synthesize_direct(random_real_coeffs(16, rng), g)
        r = synthesize_direct(hp2sph_analyze(m), g).values
        assert np.max(np.abs(r - m.values)) / np.max(np.abs(m.values)) <= 1e-6

    def test_info_and_plan_reuse(self):
        g = build_grid(8)
        plan = get_plan(8)
        assert get_plan(8) is plan
        a, info = hp2sph_analyze(potential_spline_eval(REFERENCE_SPLINE, g), plan=plan, return_info=True)
        assert set(info["timings"]) == {"rings", "dfs", "latitude", "convert"}
        assert info["cg_residual"] <= 1e-12
        assert 0 < info["cg_iterations"] < 50
        assert info["parity_defect"] < 1e-10
        with pytest.raises(ValueError):
            plan.analyze(MapValues(build_grid(4), np.ones(192)))

    def test_latitude_failure_reports_wavenumbers(self, rng):
        plan = HP2SPHPlan(8, max_iter=1)
        g = build_grid(8)
        with pytest.raises(LatitudeSolveError) as exc:
            plan.analyze(MapValues(g, rng.standard_normal(g.n_points)))
        assert exc.value.wavenumbers
        assert all(-16 <= k < 16 for k in exc.value.wavenumbers)


class TestSpectrum:
    def test_two_unit_terms(self):
        a = SphCoeffTriangle.zeros(3)
        a.data[2, 3 + 1] = a.data[2, 3 - 1] = 1
        assert power_spectrum(a).C[2] == pytest.approx(2 / 5, abs=1e-15)

    def test_monopole(self):
        a = SphCoeffTriangle.zeros(2)
        a.data[0, 2] = 2 * np.sqrt(np.pi)
        assert power_spectrum(a).C[0] == pytest.approx(4 * np.pi, rel=1e-15)

    def test_unit_pair(self):
        a = SphCoeffTriangle.zeros(9)
        a.data[7, 9 + 4] = 1
        a.data[7, 9 - 4] = 1
        assert power_spectrum(a).C[7] == pytest.approx(2 / 15)

    @given(st.integers(0, 2**31))
    def test_recompute_and_phase_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a = random_real_coeffs(10, rng)
        ps = power_spectrum(a)
        for ell in range(11):
            ref = sum(abs(a[ell, m]) ** 2 for m in range(-ell, ell + 1)) / (2 * ell + 1)
            assert ps.C[ell] == pytest.approx(ref, rel=1e-12, abs=1e-300)
        phi = rng.uniform(0, 2 * np.pi, 11)
        m = np.arange(-10, 11)
        rot = SphCoeffTriangle(10, a.data * np.exp(1j * np.sign(m) * phi[np.abs(m)])[None, :])
        np.testing.assert_allclose(power_spectrum(rot).C, ps.C, rtol=1e-12)
        assert np.all(ps.C >= 0)

    def test_scaled(self):
        a = SphCoeffTriangle.zeros(2)
        a.data[2, 2] = 1
        ps = power_spectrum(a)
        assert ps.scaled()[2] == pytest.approx(6 * ps.C[2] / (2 * np.pi))
        np.testing.assert_array_equal(ps.ells, [0, 1, 2])


class TestSpline:
    def test_zero_at_center_and_eight_at_antipode(self):
        spec = SplineSpec(((1.0, 0.7),), (1.0,))
        assert potential_spline_values(spec, 1.0, 0.7) == pytest.approx(0.0, abs=1e-12)
        assert potential_spline_values(spec, 1.0 + np.pi, np.pi - 0.7) == pytest.approx(8.0, abs=1e-12)

    def test_fixture(self):
        assert REFERENCE_SPLINE.weights == (5.0, -3.0, 8.0)
        assert len(REFERENCE_SPLINE.centers) == 3
        assert SplineSpec.from_dict(REFERENCE_SPLINE.to_dict()) == REFERENCE_SPLINE

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplineSpec((), ())
        with pytest.raises(ValueError):
            SplineSpec(((0.0, 0.0),), (1.0, 2.0))
        with pytest.raises(ValueError):
            SplineSpec(((0.0, 4.0),), (1.0,))

    def test_eval_matches_formula(self, rng):
        g = build_grid(4)
        m = potential_spline_eval(REFERENCE_SPLINE, g)
        lam, theta = g.points()
        for i in rng.choice(g.n_points, 10):
            x = unit_vec(lam[i], theta[i])
            ref = sum(c * (2 - 2 * x @ unit_vec(*ctr)) ** 1.5
                      for ctr, c in zip(REFERENCE_SPLINE.centers, REFERENCE_SPLINE.weights))
            assert m.values[i] == pytest.approx(ref, abs=1e-12)

    def test_monopole_value(self):
        a = potential_spline_exact_alm(SplineSpec(((0.3, 1.1),), (1.0,)), 0)
        assert a[0, 0] == pytest.approx(6.4 * np.sqrt(np.pi), rel=1e-14)

    @pytest.mark.parametrize("ell", [0, 1, 2, 3, 7, 20, 51])
    def test_kernel_funk_hecke(self, ell):
        spec = SplineSpec(((0.0, 0.0),), (1.0,))  # north pole center: only m = 0 survives
        a = potential_spline_exact_alm(spec, ell)
        y0 = np.sqrt((2 * ell + 1) / (4 * np.pi))
        assert a[ell, 0].real == pytest.approx(funk_hecke_kernel(ell) * y0, rel=1e-11, abs=1e-15)

    def test_addition_theorem(self, rng):
        # sum_m a_l^m Y_l^m(x) = kernel(l) (2l+1)/(4 pi) P_l(c . x) checks the conjugation
        lc, tc = 2.2, 0.9
        spec = SplineSpec(((lc, tc),), (1.0,))
        L = 8
        a = potential_spline_exact_alm(spec, L)
        lam, theta = rng.uniform(0, 2 * np.pi, 5), rng.uniform(0, np.pi, 5)
        cosg = unit_vec(lam, theta).T @ unit_vec(lc, tc)
        for ell in range(L + 1):
            s = sum(a[ell, m] * eval_ylm(ell, m, lam, theta) for m in range(-ell, ell + 1))
            ref = funk_hecke_kernel(ell) * (2 * ell + 1) / (4 * np.pi) * eval_legendre(ell, cosg)
            np.testing.assert_allclose(s, ref, atol=1e-12)

    def test_decay(self):
        spec = SplineSpec(((0.5, 1.0),), (1.0,))
        a = potential_spline_exact_alm(spec, 400)
        ell = np.arange(50, 401)
        amax = np.max(np.abs(a.data[50:]), axis=1)
        bound = np.sqrt((2 * ell + 1) / (4 * np.pi))
        assert np.all(amax <= 20 * np.pi * ell**-5.0 * bound)
        assert np.all(amax * ell**4.5 <= 40 * np.pi)

    def test_negative_lmax(self):
        with pytest.raises(ValueError):
            potential_spline_exact_alm(REFERENCE_SPLINE, -1)

    def test_load_from_path(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"weights": [2.0], "lambda": [0.1], "theta": [0.2]}))
        assert load_spline(p) == SplineSpec(((0.1, 0.2),), (2.0,))


class TestHarmonics:
    def test_empty_is_identity(self, rng):
        g = build_grid(4)
        m = MapValues(g, rng.standard_normal(g.n_points))
        np.testing.assert_array_equal(add_harmonics(m, []).values, m.values)

    @pytest.mark.parametrize("ell,m", [(5, 0), (5, 3), (12, 12), (9, -4)])
    def test_spectrum_shift(self, ell, m):
        ps = power_spectrum(harmonic_terms_alm([(ell, m)], 12))
        assert ps.C[ell] == pytest.approx(1 / (2 * ell + 1), rel=1e-14)
        assert ps.C.sum() == pytest.approx(1 / (2 * ell + 1), rel=1e-14)

    def test_samples_match_coefficients(self, rng):
        g = build_grid(4)
        lam, theta = g.points()
        terms = [(3, 0), (4, 2), (6, 5)]
        added = add_harmonics(MapValues(g, np.zeros(g.n_points)), terms).values
        ref = synthesize_direct(harmonic_terms_alm(terms, 6), g).values
        np.testing.assert_allclose(added, ref, atol=1e-13)

    def test_warning_above_band(self, caplog):
        g = build_grid(2)
        with caplog.at_level(logging.WARNING, logger="hp2sph"):
            add_harmonics(MapValues(g, np.zeros(g.n_points)), [(5, 1)])
        assert "alias" in caplog.text

    def test_invalid_order(self):
        g = build_grid(2)
        with pytest.raises(ValueError):
            add_harmonics(MapValues(g, np.zeros(g.n_points)), [(2, 3)])

    def test_fixtures(self):
        assert len(REFERENCE_HARMONICS) == 15
        assert len(REFERENCE_HARMONICS_HIGH) == 15
        assert min(l for l, _ in REFERENCE_HARMONICS) == 176
        assert max(l for l, _ in REFERENCE_HARMONICS) == 448
        assert min(l for l, _ in REFERENCE_HARMONICS_HIGH) > 448
        assert all(abs(m) <= l for l, m in REFERENCE_HARMONICS + REFERENCE_HARMONICS_HIGH)
        assert load_terms() == REFERENCE_HARMONICS


class TestStudy:
    def test_small_study(self):
        res = convergence_study(REFERENCE_SPLINE, range(2, 5), ("hp2sph", "equal"))
        assert list(res.ts("hp2sph")) == [2, 3, 4]
        e = res.errors("hp2sph")
        assert np.all(np.diff(e) < 0)
        assert res.slopes["hp2sph"] < res.slopes["equal"] < 0
        lines = res.to_csv().splitlines()
        assert lines[0] == "t,method,max_abs_error"
        assert len(lines) == 1 + 6 + 2
        assert lines[-1].startswith("slope,equal,")

    def test_run_method(self):
        g = build_grid(2)
        m = MapValues(g, np.ones(g.n_points))
        assert run_method("equal", m).ell_max == 5
        assert run_method("richardson:2", m).ell_max == 5
        assert run_method("hp2sph", m).ell_max == 4
        with pytest.raises(ValueError):
            run_method("fancy", m)
