"""Tests for mollifier profiles and the spectral field sampler.

Oracles: lattice-mode brute sums for variances, a full complex transform
for the Hermitian-symmetry route, plane waves for interpolation, and 2-d
quadrature for the covariance reduction.
"""

import math

import numpy as np
import pytest
import scipy.fft as sfft
from scipy.integrate import dblquad, quad

from curldrift import (
    GridSpec,
    ModelParams,
    SpectralField,
    derive_grid,
    empirical_covariance,
    eval_field,
    load_field,
    make_mollifier,
    sample_field,
    save_field,
    theoretical_covariance,
)
from curldrift.rng import field_stream_id


class TestMollifier:
    def test_bump_profile_values(self):
        m = make_mollifier("compact_bump", 0.2)
        assert float(m.rho_hat(0.0)) == 1.0
        assert float(m.rho_hat(1.0)) == 0.0
        assert float(m.rho_hat(2.5)) == 0.0
        assert float(m.rho_hat(0.5)) == pytest.approx(math.exp(1 - 4 / 3), rel=1e-14)
        r = np.linspace(0, 2, 201)
        assert np.all((m.rho_hat(r) >= 0) & (m.rho_hat(r) <= 1))

    def test_spectrum_is_squared_profile(self):
        m = make_mollifier("compact_bump", 0.3)
        r = np.linspace(0, 1.2, 50)
        assert np.allclose(m.v_hat(r), m.rho_hat(r) ** 2, rtol=0, atol=0)
        # rescaling: V_eps(p) = V(eps p)
        pn = np.linspace(0, 4.0, 50)
        assert np.allclose(m.v_hat_eps(pn), m.v_hat(0.3 * pn), rtol=0, atol=0)
        assert np.all(m.v_hat_eps(np.linspace(1 / 0.3, 10, 20)) == 0.0)

    def test_gaussian_reference_flagged(self):
        m = make_mollifier("gaussian_reference", 0.2)
        assert m.support_warning
        assert not make_mollifier("compact_bump", 0.2).support_warning

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            make_mollifier("compact_bump", 0.0)
        with pytest.raises(ValueError):
            make_mollifier("compact_bump", 1.5)
        with pytest.raises(ValueError):
            make_mollifier("triangle", 0.2)

    def test_point_variance_quadrature(self):
        m = make_mollifier("compact_bump", 0.2)
        val, _ = quad(lambda s: math.exp(2 - 2 / (1 - s * s)) * s, 0, 1, limit=200)
        assert m.point_variance() == pytest.approx(math.pi / 0.04 * val, rel=1e-9)


class TestGrid:
    def test_power_of_two_enforced(self):
        with pytest.raises(ValueError):
            GridSpec(box_length=4.0, grid_n=100)
        with pytest.raises(ValueError):
            GridSpec(box_length=-1.0, grid_n=64)

    def test_derive_grid_resolves_mollifier(self):
        spec = derive_grid(0.2, 12.8)
        assert spec.grid_n == 512
        assert spec.h <= 0.2 / 8


def _small_field(seed=42, eps=0.25, box=4.0):
    m = make_mollifier("compact_bump", eps)
    spec = derive_grid(eps, box)
    return sample_field(spec, m, seed), spec, m


class TestSampleField:
    def test_deterministic(self):
        f1, _, _ = _small_field()
        f2, _, _ = _small_field()
        assert np.array_equal(f1.values, f2.values)
        f3, _, _ = _small_field(seed=43)
        assert not np.array_equal(f1.values, f3.values)

    def test_rejects_coarse_grid(self):
        m = make_mollifier("compact_bump", 0.25)
        with pytest.raises(ValueError, match="too coarse"):
            sample_field(GridSpec(box_length=4.0, grid_n=64), m, 1)

    def test_divergence_free_in_fourier(self):
        f, _, _ = _small_field()
        assert f.fourier_divergence_max <= 1e-12

    def test_zero_spatial_mean(self):
        f, _, _ = _small_field()
        rms = float(np.sqrt(np.mean(f.values**2)))
        assert abs(f.values[:, :, 0].mean()) < 1e-13 * rms
        assert abs(f.values[:, :, 1].mean()) < 1e-13 * rms

    def test_spectral_support(self):
        f, spec, m = _small_field()
        n, L = spec.grid_n, spec.box_length
        k = np.fft.fftfreq(n, d=1.0 / n)
        for c in (0, 1):
            spec_c = sfft.rfft2(np.ascontiguousarray(f.values[:, :, c]))
            p1 = 2 * math.pi * k[:, None] / L
            p2 = 2 * math.pi * np.arange(n // 2 + 1)[None, :] / L
            outside = np.sqrt(p1**2 + p2**2) >= 1.0 / m.eps
            rms = np.sqrt(np.mean(np.abs(spec_c) ** 2))
            assert np.max(np.abs(spec_c[outside])) < 1e-12 * rms

    def test_real_route_matches_full_complex_transform(self):
        # rebuild the full Hermitian spectrum from the half transform and
        # invert with the complex FFT: output must be real and identical
        f, spec, _ = _small_field()
        n = spec.grid_n
        for c in (0, 1):
            half = sfft.rfft2(np.ascontiguousarray(f.values[:, :, c]))
            full = np.zeros((n, n), dtype=complex)
            full[:, : n // 2 + 1] = half
            kx = (-np.arange(n)) % n
            for ky in range(n // 2 + 1, n):
                full[:, ky] = np.conj(full[kx, n - ky])
            w = sfft.ifft2(full)
            rms = np.sqrt(np.mean(f.values[:, :, c] ** 2))
            assert np.max(np.abs(w.imag)) < 1e-12 * rms
            assert np.allclose(w.real, f.values[:, :, c], atol=1e-10 * rms)

    def test_variance_matches_lattice_sum(self):
        # brute-force lattice oracle for the one-point covariance
        eps, box, seed = 0.25, 4.0, 99
        m = make_mollifier("compact_bump", eps)
        spec = derive_grid(eps, box)
        L = spec.box_length
        kmax = int(math.ceil(L / (2 * math.pi * eps))) + 1
        k = np.arange(-kmax, kmax + 1)
        p1, p2 = np.meshgrid(2 * math.pi * k / L, 2 * math.pi * k / L, indexing="ij")
        pn2 = p1**2 + p2**2
        vv = np.where(pn2 > 0, m.v_hat(eps * np.sqrt(pn2)), 0.0)
        lat11 = float(np.sum((2 * math.pi / L) ** 2 * vv
                             * np.divide(p2**2, pn2, out=np.zeros_like(pn2),
                                         where=pn2 > 0)))
        n_draws = 1200
        acc = np.zeros(3)
        for d in range(n_draws):
            g = sample_field(spec, m, seed, stream_id=field_stream_id(d))
            v = g.values[3, 11]
            acc += (v[0] ** 2, v[1] ** 2, v[0] * v[1])
        acc /= n_draws
        sem = lat11 * math.sqrt(2.0 / n_draws)
        assert abs(acc[0] - lat11) < 3 * sem
        assert abs(acc[1] - lat11) < 3 * sem
        assert abs(acc[2]) < 3 * sem


class TestEvalField:
    def test_exact_at_nodes(self):
        f, spec, _ = _small_field()
        x = np.array([7 * spec.h, 3 * spec.h])
        assert np.array_equal(eval_field(f, x), f.values[7, 3])

    def test_cell_center_average(self):
        f, spec, _ = _small_field()
        x = np.array([7.5 * spec.h, 3.5 * spec.h])
        avg = (f.values[7, 3] + f.values[8, 3] + f.values[7, 4] + f.values[8, 4]) / 4
        assert np.allclose(eval_field(f, x), avg, rtol=1e-12)

    def test_periodic_wrap(self):
        f, spec, _ = _small_field()
        x = np.array([0.25, 0.5])
        assert np.allclose(eval_field(f, x), eval_field(f, x + spec.box_length),
                           rtol=0, atol=1e-12)

    def test_plane_wave_oracle(self):
        # synthetic single-mode field: bilinear error is O(h^2)
        spec = GridSpec(box_length=4.0, grid_n=256)
        m = make_mollifier("compact_bump", 0.25)
        L, n, h = spec.box_length, spec.grid_n, spec.h
        kvec = np.array([3, 5])
        p = 2 * math.pi * kvec / L
        u = np.array([p[1], -p[0]]) / np.hypot(*p)
        xs = np.arange(n) * h
        phase = np.add.outer(p[0] * xs, p[1] * xs)
        values = np.cos(phase)[:, :, None] * u[None, None, :]
        f = SpectralField(spec=spec, mollifier=m, values=values, seed=0,
                          fourier_divergence_max=0.0)
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, L, size=(200, 2))
        exact = np.cos(pts @ p)[:, None] * u[None, :]
        err = np.max(np.abs(eval_field(f, pts) - exact))
        # curvature bound: |f''| h^2 / 4 per axis
        assert err < (p @ p) * h**2 / 4


class TestTheoreticalCovariance:
    def test_lag_zero(self):
        m = make_mollifier("compact_bump", 0.2)
        c = theoretical_covariance(m, (0.0, 0.0))
        assert c[0, 0] == pytest.approx(m.point_variance(), rel=1e-9)
        assert c[1, 1] == pytest.approx(m.point_variance(), rel=1e-9)
        assert c[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_against_2d_quadrature(self):
        eps = 0.2
        m = make_mollifier("compact_bump", eps)
        lag = (0.5, 0.3)

        def integrand(py, px, i, j):
            p2 = px * px + py * py
            if p2 == 0:
                return 0.0
            s = eps * math.sqrt(p2)
            if s >= 1:
                return 0.0
            v = math.exp(2 - 2 / (1 - s * s))
            perp = (py, -px)
            return v * perp[i] * perp[j] / p2 * math.cos(px * lag[0] + py * lag[1])

        c = theoretical_covariance(m, lag)
        for i, j in ((0, 0), (0, 1), (1, 1)):
            val, _ = dblquad(integrand, -5, 5, -5, 5, args=(i, j), epsabs=1e-9)
            assert c[i, j] == pytest.approx(val, abs=2e-7)

    def test_symmetry_and_trace(self):
        m = make_mollifier("compact_bump", 0.25)
        lag = np.array([0.7, -0.2])
        c_plus = theoretical_covariance(m, lag)
        c_minus = theoretical_covariance(m, -lag)
        assert np.allclose(c_plus, c_minus.T, atol=1e-10)
        c0 = theoretical_covariance(m, (0.0, 0.0))
        assert np.trace(c_plus) <= np.trace(c0) + 1e-10


class TestEmpiricalCovariance:
    def test_matches_oracle_at_lag_zero(self):
        m = make_mollifier("compact_bump", 0.25)
        spec = GridSpec(box_length=25.6, grid_n=1024)
        est = empirical_covariance(600, spec, m, [(0.0, 0.0)], seed=7,
                                   n_base_points=8, threads=2)
        theo = theoretical_covariance(m, (0.0, 0.0))
        pulls = np.abs(est["mean"][0] - theo) / np.maximum(est["sem"][0], 1e-300)
        assert float(pulls.max()) < 3.5
        assert est["divergence_max"] <= 1e-12

    def test_threads_do_not_change_results(self):
        m = make_mollifier("compact_bump", 0.25)
        spec = derive_grid(0.25, 4.0)
        a = empirical_covariance(32, spec, m, [(0.0, 0.0)], seed=3, threads=1)
        b = empirical_covariance(32, spec, m, [(0.0, 0.0)], seed=3, threads=2)
        assert np.array_equal(a["mean"], b["mean"])
        assert np.array_equal(a["sem"], b["sem"])

    def test_stationarity_between_base_points(self):
        # estimates anchored at two distinct points agree within 3 SEM
        m = make_mollifier("compact_bump", 0.25)
        spec = derive_grid(0.25, 4.0)
        n_draws = 400
        pts = np.array([[5, 9], [61, 40]])
        prods = np.empty((n_draws, 2))
        for d in range(n_draws):
            f = sample_field(spec, m, 11, stream_id=field_stream_id(d))
            prods[d] = [f.values[i, j, 0] ** 2 for i, j in pts]
        diff = prods[:, 0] - prods[:, 1]
        pull = abs(diff.mean()) / (diff.std(ddof=1) / math.sqrt(n_draws))
        assert pull < 3.0

    def test_requires_two_fields(self):
        m = make_mollifier("compact_bump", 0.25)
        with pytest.raises(ValueError):
            empirical_covariance(1, derive_grid(0.25, 4.0), m, [(0, 0)], seed=1)


class TestSnapshotIO:
    def test_roundtrip(self, tmp_path):
        f, _, _ = _small_field()
        path = tmp_path / "field.bin"
        save_field(f, path)
        g = load_field(path)
        assert np.array_equal(f.values, g.values)
        assert g.spec == f.spec
        assert g.mollifier.kind == f.mollifier.kind
        assert g.mollifier.eps == f.mollifier.eps
        assert g.seed == f.seed
        assert g.fourier_divergence_max == f.fourier_divergence_max

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTAFLD0" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_field(path)
