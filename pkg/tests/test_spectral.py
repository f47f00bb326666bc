import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stochschro.spectral import (
    CovarianceSpec,
    DivergentCovarianceError,
    SpectralField,
    duhamel_forced_solution,
    eigenpair,
    energy,
    hs_norm_squared,
    semigroup_apply,
)


def random_field(seed, n=32):
    rng = np.random.default_rng(seed)
    return SpectralField(rng.standard_normal(n), rng.standard_normal(n))


def mode_field(j, c1, c2, n=8):
    a, b = np.zeros(n), np.zeros(n)
    a[j - 1], b[j - 1] = c1, c2
    return SpectralField(a, b)


class TestEigenpair:
    def test_first(self):
        lam, _ = eigenpair(1)
        assert lam == pytest.approx(9.869604401, abs=1e-9)

    @pytest.mark.parametrize("j", range(1, 11))
    def test_normalized(self, j):
        _, e = eigenpair(j)
        assert quad(lambda x: e(x) ** 2, 0, 1, limit=200)[0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        e1, e2 = eigenpair(1)[1], eigenpair(2)[1]
        assert abs(quad(lambda x: e1(x) * e2(x), 0, 1)[0]) < 1e-14

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            eigenpair(0)


class TestSemigroup:
    def test_identity_at_zero(self):
        x = random_field(0)
        y = semigroup_apply(0.0, x)
        assert np.array_equal(y.coeffs1, x.coeffs1) and np.array_equal(y.coeffs2, x.coeffs2)

    @pytest.mark.parametrize("t", [0.1, 0.37, -2.0])
    def test_single_mode_rotation(self, t):
        y = semigroup_apply(t, mode_field(1, 1.0, 0.0))
        assert y.coeffs1[0] == pytest.approx(math.cos(t * math.pi**2), abs=1e-14)
        assert y.coeffs2[0] == pytest.approx(math.sin(t * math.pi**2), abs=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-1, 1), st.floats(-1, 1))
    def test_group_property(self, seed, s, t):
        x = random_field(seed, 16)
        a = semigroup_apply(t, semigroup_apply(s, x))
        b = semigroup_apply(t + s, x)
        # angles reach ~2500 rad for mode 16, so compare at that scale
        np.testing.assert_allclose(a.coeffs1, b.coeffs1, atol=1e-12 * 2600)
        np.testing.assert_allclose(a.coeffs2, b.coeffs2, atol=1e-12 * 2600)

    def test_generator(self):
        # d/dt X = A X with A = [[0, -Lambda], [Lambda, 0]]
        x = random_field(4, 6)
        lam = (np.arange(1, 7) * np.pi) ** 2
        d = 1e-5
        xp, xm = semigroup_apply(d, x), semigroup_apply(-d, x)
        np.testing.assert_allclose((xp.coeffs1 - xm.coeffs1) / (2 * d), -lam * x.coeffs2, rtol=1e-5)
        np.testing.assert_allclose((xp.coeffs2 - xm.coeffs2) / (2 * d), lam * x.coeffs1, rtol=1e-5)


class TestEnergy:
    def test_zero_and_unit(self):
        assert energy(SpectralField(np.zeros(4), np.zeros(4))) == 0.0
        assert energy(mode_field(1, 1.0, 0.0), 0, 0.0) == 1.0

    def test_weights(self):
        x = mode_field(2, 0.5, 0.0)
        assert energy(x, 1, 0.5) == pytest.approx((2 * math.pi) ** 5 * 0.25)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-10, 10), st.integers(0, 1), st.sampled_from([0.0, 1.0, -1.0]))
    def test_invariance(self, seed, t, r, alpha):
        x = random_field(seed)
        e0 = energy(x, r, alpha)
        assert abs(energy(semigroup_apply(t, x), r, alpha) - e0) <= 1e-12 * e0


class TestDuhamel:
    def test_no_forcing_is_semigroup(self):
        x = random_field(1, 8)
        a = duhamel_forced_solution(0.4, x, None)
        b = semigroup_apply(0.4, x)
        assert np.array_equal(a.coeffs1, b.coeffs1)
        assert np.array_equal(
            duhamel_forced_solution(0.4, x, lambda t: (np.zeros(8), np.zeros(8))).coeffs2, b.coeffs2
        )

    @pytest.mark.parametrize("j,g", [(1, 1.0 + 0.0j), (3, 0.3 - 2.0j)])
    def test_constant_forcing_closed_form(self, j, g):
        n, t = 6, 0.7
        f1, f2 = np.zeros(n), np.zeros(n)
        f1[j - 1], f2[j - 1] = g.real, g.imag
        out = duhamel_forced_solution(t, SpectralField(np.zeros(n), np.zeros(n)), lambda tau: (f1, f2))
        lam = (j * math.pi) ** 2
        z = g * (np.exp(1j * lam * t) - 1) / (1j * lam)  # int_0^t exp(i lam (t - tau)) g dtau
        assert out.coeffs1[j - 1] == pytest.approx(z.real, abs=1e-10)
        assert out.coeffs2[j - 1] == pytest.approx(z.imag, abs=1e-10)
        assert np.count_nonzero(np.delete(out.coeffs1, j - 1)) == 0

    def test_manufactured_solution(self):
        # u(t) = (1 + t) exp(i pi^2 t) e_1 solves u' = i Lambda u + exp(i pi^2 t) e_1
        n = 4
        x0 = mode_field(1, 1.0, 0.0, n)

        def forcing(tau):
            f1, f2 = np.zeros(n), np.zeros(n)
            f1[0], f2[0] = math.cos(math.pi**2 * tau), math.sin(math.pi**2 * tau)
            return f1, f2

        for t in (0.25, 1.0):
            out = duhamel_forced_solution(t, x0, forcing)
            u = (1 + t) * np.exp(1j * math.pi**2 * t)
            assert out.coeffs1[0] == pytest.approx(u.real, abs=1e-9)
            assert out.coeffs2[0] == pytest.approx(u.imag, abs=1e-9)

    def test_residual_of_trajectory(self):
        n = 3
        x0 = random_field(7, n)

        def forcing(tau):
            return np.array([math.sin(tau), 0.5, 0.0]), np.array([0.0, tau**2, 1.0])

        t = 0.3
        lam = (np.arange(1, n + 1) * np.pi) ** 2
        f1, f2 = forcing(t)
        x = duhamel_forced_solution(t, x0, forcing)
        res = []
        for d in (1e-2, 5e-3):
            xp = duhamel_forced_solution(t + d, x0, forcing)
            xm = duhamel_forced_solution(t - d, x0, forcing)
            r1 = (xp.coeffs1 - xm.coeffs1) / (2 * d) - (-lam * x.coeffs2 + f1)
            r2 = (xp.coeffs2 - xm.coeffs2) / (2 * d) - (lam * x.coeffs1 + f2)
            res.append(np.abs(np.r_[r1, r2]).max())
        # centred differences: error shrinks like d^2
        assert 3.5 < res[0] / res[1] < 4.5


class TestHilbertSchmidt:
    def test_zeta4(self):
        val, tail = hs_norm_squared(CovarianceSpec(4.0), 2.0, 100_000)
        assert val <= 1 / 90 <= val + tail
        assert tail <= 1e-6

    def test_same_exponent_same_value(self):
        a = hs_norm_squared(CovarianceSpec(2.0), 0.0, 1000)
        b = hs_norm_squared(CovarianceSpec(4.0), 2.0, 1000)
        assert a == b
        assert a[0] <= 1 / 90 <= a[0] + a[1]

    def test_target_exponent_monotone_and_enclosing(self):
        spec = CovarianceSpec(2.501)
        prev_val, prev_tail = -1.0, math.inf
        for j_max in (10, 100, 1000, 10_000):
            val, tail = hs_norm_squared(spec, 2.0, j_max)
            assert val > prev_val and tail < prev_tail
            finer, _ = hs_norm_squared(spec, 2.0, 10 * j_max)
            assert val <= finer <= val + tail
            prev_val, prev_tail = val, tail

    @pytest.mark.parametrize("beta,s", [(2.0, 2.0), (2.0, 2.5), (0.0, 0.5)])
    def test_divergent(self, beta, s):
        with pytest.raises(DivergentCovarianceError, match=r"beta < s - 1/2"):
            hs_norm_squared(CovarianceSpec(s), beta, 10)
