import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hp2sph.baseline import MapValues
from hp2sph.ringstep import phase_powers, ring_to_aligned_coeffs, upsample_map
from hp2sph.sphgrid import build_grid


def eval_expansion(c, n_side, lam):
    n = np.arange(-2 * n_side, 2 * n_side)
    return np.exp(1j * np.outer(lam, n)) @ c


def ring_nodes(ring_j, kind, ns):
    if kind == "polar":
        L = 4 * ring_j
        return np.pi / (2 * ring_j) * (np.arange(L) + 0.5)
    return np.pi / (2 * ns) * (np.arange(4 * ns) + ((ring_j + 1) % 2) / 2)


class TestRingCoeffs:
    @pytest.mark.parametrize("kind,j,ns", [("polar", 1, 4), ("polar", 3, 4), ("equatorial", 4, 4), ("equatorial", 5, 4)])
    def test_constant_ring(self, kind, j, ns):
        L = 4 * j if kind == "polar" else 4 * ns
        c = ring_to_aligned_coeffs(np.full(L, 2.5), j, kind, ns)
        assert c[2 * ns] == pytest.approx(2.5, abs=1e-15)
        c[2 * ns] = 0
        assert np.max(np.abs(c)) < 1e-15

    def test_polar_cos(self):
        lam = np.pi * (np.arange(4) + 0.5) / 2
        c = ring_to_aligned_coeffs(np.cos(lam), 1, "polar", 2)
        assert abs(c[2 * 2 + 1] - 0.5) < 1e-15
        assert abs(c[2 * 2 - 1] - 0.5) < 1e-15

    def test_equatorial_shifted_pure_mode(self):
        ns = 4
        lam = ring_nodes(4, "equatorial", ns)  # j = 4 is shifted
        assert lam[0] > 0
        c = ring_to_aligned_coeffs(np.exp(2j * lam), 4, "equatorial", ns)
        # direct NUDFT oracle: least squares on the shifted nodes
        n = np.arange(-2 * ns, 2 * ns)
        ref = np.linalg.solve(np.exp(1j * np.outer(lam, n)), np.exp(2j * lam))
        np.testing.assert_allclose(c, ref, atol=1e-14)
        assert abs(c[2 * ns + 2] - 1) < 1e-14
        c[2 * ns + 2] = 0
        assert np.max(np.abs(c)) < 1e-14

    @given(st.integers(0, 2**31), st.sampled_from([("polar", 1), ("polar", 2), ("polar", 7), ("equatorial", 8), ("equatorial", 9)]),
           st.booleans())
    def test_interpolates_samples(self, seed, ring, split):
        kind, j = ring
        ns = 8
        rng = np.random.default_rng(seed)
        lam = ring_nodes(j, kind, ns)
        f = rng.standard_normal(lam.size)
        c = ring_to_aligned_coeffs(f, j, kind, ns, split_nyquist=split)
        np.testing.assert_allclose(eval_expansion(c, ns, lam), f, atol=1e-12)

    @pytest.mark.parametrize("j", [1, 2, 3, 5])
    def test_polar_padding_unsplit(self, j, rng):
        ns = 8
        c = ring_to_aligned_coeffs(rng.standard_normal(4 * j), j, "polar", ns, split_nyquist=False)
        n = np.arange(-2 * ns, 2 * ns)
        assert np.all(c[(n < -2 * j) | (n >= 2 * j)] == 0)
        assert np.count_nonzero(c) <= 4 * j
        assert np.sum(c == 0) >= 4 * ns - 4 * j

    @pytest.mark.parametrize("j", [1, 2, 3, 5])
    def test_polar_padding_split(self, j, rng):
        ns = 8
        c = ring_to_aligned_coeffs(rng.standard_normal(4 * j), j, "polar", ns)
        n = np.arange(-2 * ns, 2 * ns)
        assert np.all(c[(n < -2 * j) | (n > 2 * j)] == 0)
        assert np.sum(c == 0) >= 4 * ns - 4 * j - 1

    @pytest.mark.parametrize("j", [1, 2, 6])
    def test_real_input_symmetry(self, j, rng):
        ns = 8
        f = rng.standard_normal(4 * j)
        c = ring_to_aligned_coeffs(f, j, "polar", ns)
        np.testing.assert_allclose(c, np.conj(c[::-1][np.r_[-1, : 4 * ns - 1]]), atol=1e-12)
        cu = ring_to_aligned_coeffs(f, j, "polar", ns, split_nyquist=False)
        k = np.arange(1, 2 * j)
        np.testing.assert_allclose(cu[2 * ns + k], np.conj(cu[2 * ns - k]), atol=1e-12)

    @pytest.mark.parametrize("kind,j", [("polar", 3), ("equatorial", 8), ("equatorial", 9)])
    def test_parseval(self, kind, j, rng):
        ns = 8
        L = 4 * j if kind == "polar" else 4 * ns
        f = rng.standard_normal(L)
        c = ring_to_aligned_coeffs(f, j, kind, ns, split_nyquist=False)
        assert np.sum(np.abs(c) ** 2) == pytest.approx(np.mean(f**2), rel=1e-12)

    def test_parseval_split_counts_nyquist_once(self, rng):
        ns, j = 8, 3
        f = rng.standard_normal(4 * j)
        c = ring_to_aligned_coeffs(f, j, "polar", ns)
        nyq = np.fft.fft(f)[2 * j] / (4 * j)
        assert np.sum(np.abs(c) ** 2) == pytest.approx(np.mean(f**2) - abs(nyq) ** 2 / 2, rel=1e-12)

    def test_shift_pad_commute(self, rng):
        ns, j = 8, 3
        f = rng.standard_normal(4 * j)
        got = ring_to_aligned_coeffs(f, j, "polar", ns, split_nyquist=False)
        # pad first in the shifted frame, then apply the phase on the full width
        ct = np.fft.fft(f) / (4 * j)
        n_small = np.fft.fftfreq(4 * j, 1 / (4 * j)).astype(int)
        padded = np.zeros(4 * ns, dtype=complex)
        padded[n_small + 2 * ns] = ct
        n = np.arange(-2 * ns, 2 * ns)
        ref = padded * np.exp(-1j * n * np.pi / (4 * j))
        np.testing.assert_allclose(got, ref, atol=1e-15)

    def test_phase_powers(self):
        w = np.exp(-1j * np.pi / 64)
        np.testing.assert_allclose(phase_powers(w, 200), w ** np.arange(201), atol=1e-13)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ring_to_aligned_coeffs(np.ones(5), 1, "polar", 4)
        with pytest.raises(ValueError):
            ring_to_aligned_coeffs(np.ones(16), 2, "equatorial", 4)
        with pytest.raises(ValueError):
            ring_to_aligned_coeffs(np.ones(16), 4, "tropical", 4)


class TestUpsample:
    def test_constant(self):
        g = build_grid(4)
        rows = upsample_map(MapValues(g, np.ones(g.n_points))).rows
        assert rows.shape == (15, 16)
        np.testing.assert_allclose(rows[:, 8], 1.0, atol=1e-15)
        rows[:, 8] = 0
        assert np.max(np.abs(rows)) < 1e-15

    def test_cos_lambda_on_tensor_grid(self):
        ns = 2
        g = build_grid(ns)
        lam, _ = g.points()
        coeffs = upsample_map(MapValues(g, np.cos(lam)))
        vals = coeffs.values_on_tensor_grid()
        lam_k = np.pi * np.arange(4 * ns) / (2 * ns)
        np.testing.assert_allclose(vals, np.broadcast_to(np.cos(lam_k), vals.shape), atol=1e-13)

    def test_rows_match_per_ring(self, rng):
        g = build_grid(4)
        f = rng.standard_normal(g.n_points)
        coeffs = upsample_map(MapValues(g, f))
        for r, ring in enumerate(g.rings):
            ref = ring_to_aligned_coeffs(f[g.ring_slice(r)], ring.j, ring.kind, 4)
            np.testing.assert_array_equal(coeffs.rows[r], ref)
