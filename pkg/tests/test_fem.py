import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stochschro.fem import (
    FemOperators,
    Mesh1D,
    Profile,
    StateVector,
    assemble_mass,
    assemble_stiffness,
    discrete_norm,
    l2_project,
    load_vector,
    matrix_to_csv,
    prolong,
    ritz_project,
    sine_load_matrix,
)

from conftest import l2_distance, piecewise_linear


def analytic_discrete_eigenvalues(level):
    # eigenvalues of the (S, M) pencil on a uniform mesh, independent of any solver
    h = 2.0**-level
    c = np.cos(np.arange(1, 2**level) * np.pi * h)
    return 6.0 / h**2 * (1.0 - c) / (2.0 + c)


class TestMesh:
    @pytest.mark.parametrize("level", range(1, 11))
    def test_invariants(self, level):
        m = Mesh1D(level)
        assert m.h * (m.n_interior + 1) == 1.0
        x = m.nodes
        assert len(x) == m.n_interior
        assert np.all(np.diff(x) > 0) and x[0] > 0 and x[-1] < 1

    @pytest.mark.parametrize("bad", [0, -1, 1.5])
    def test_rejects_bad_level(self, bad):
        with pytest.raises(ValueError):
            Mesh1D(bad)


class TestAssembly:
    def test_mass_level1(self):
        np.testing.assert_allclose(assemble_mass(Mesh1D(1)).toarray(), [[1 / 3]], rtol=0, atol=1e-15)

    def test_mass_level2(self):
        m = assemble_mass(Mesh1D(2)).toarray()
        np.testing.assert_allclose(np.diag(m), 1 / 6, atol=1e-15)
        np.testing.assert_allclose(np.diag(m, 1), 1 / 24, atol=1e-15)
        np.testing.assert_allclose(np.diag(m, -1), 1 / 24, atol=1e-15)

    @pytest.mark.parametrize("level", [3, 5, 7])
    def test_mass_interior_row_sums(self, level):
        mesh = Mesh1D(level)
        rows = np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()
        np.testing.assert_allclose(rows[1:-1], mesh.h, rtol=1e-14)

    def test_stiffness_small_levels(self):
        assert assemble_stiffness(Mesh1D(1)).toarray().tolist() == [[4.0]]
        s = assemble_stiffness(Mesh1D(2)).toarray()
        assert np.all(np.diag(s) == 8.0) and np.all(np.diag(s, 1) == -4.0) and np.all(np.diag(s, -1) == -4.0)

    @pytest.mark.parametrize("level", [2, 4, 6])
    def test_linear_function_discretely_harmonic(self, level):
        mesh = Mesh1D(level)
        r = assemble_stiffness(mesh) @ mesh.nodes
        np.testing.assert_allclose(r[:-1], 0.0, atol=1e-10)
        assert r[-1] != 0

    @pytest.mark.parametrize("level", range(1, 9))
    def test_spd(self, level):
        ops = FemOperators.build(level)
        for a in (ops.mass.toarray(), ops.stiffness.toarray()):
            np.testing.assert_array_equal(a, a.T)
            np.linalg.cholesky(a)
            assert np.linalg.eigvalsh(a).min() > 0

    def test_csv_dump(self, tmp_path):
        path = tmp_path / "m.csv"
        matrix_to_csv(assemble_mass(Mesh1D(2)), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "row,col,value"
        assert len(lines) == 1 + 7
        r, c, v = lines[2].split(",")
        assert (int(r), int(c)) == (0, 1) and float(v) == pytest.approx(1 / 24)


class TestLoads:
    @pytest.mark.parametrize("j", [1, 2, 5, 17])
    def test_sine_load_closed_form_against_quadrature(self, j):
        mesh = Mesh1D(4)
        b = sine_load_matrix(mesh, j)[j - 1]
        for k in range(1, mesh.n_interior + 1):
            hat = mesh.hat(k)
            ref = quad(lambda x: math.sqrt(2) * math.sin(j * math.pi * x) * hat(x),
                       (k - 1) * mesh.h, (k + 1) * mesh.h, points=[k * mesh.h], epsabs=1e-15)[0]
            assert b[k - 1] == pytest.approx(ref, abs=1e-12)

    def test_profile_loads_match_gauss(self):
        mesh = Mesh1D(5)
        quad2 = Profile.quadratic(0.3, -1.0, 2.0)
        # 3-point Gauss is exact for a quadratic against a hat
        np.testing.assert_allclose(load_vector(mesh, quad2), load_vector(mesh, lambda x: quad2(x)), atol=1e-15)

    @pytest.mark.parametrize("profile", [Profile.quadratic(0, 1, -1), Profile.sine(3, 0.5) + Profile.quadratic(1, 0, 0)])
    def test_modal_coefficients(self, profile):
        c = profile.modal_coefficients(6)
        for j in range(1, 7):
            ref = quad(lambda x: profile(x) * math.sqrt(2) * math.sin(j * math.pi * x), 0, 1, epsabs=1e-13, limit=200)[0]
            assert c[j - 1] == pytest.approx(ref, abs=1e-12)


class TestProjections:
    def test_zero(self):
        assert np.all(l2_project(Mesh1D(4), lambda x: 0 * x) == 0)

    @pytest.mark.parametrize("k", [1, 4, 7])
    def test_l2_of_hat_is_unit_vector(self, k):
        mesh = Mesh1D(3)
        c = l2_project(mesh, mesh.hat(k))
        e = np.zeros(mesh.n_interior)
        e[k - 1] = 1
        np.testing.assert_allclose(c, e, atol=1e-13)

    def test_ritz_of_quadratic_is_interpolant(self):
        f = Profile.quadratic(0, 1, -1)
        for level in (1, 3, 6):
            mesh = Mesh1D(level)
            np.testing.assert_allclose(ritz_project(mesh, f), f(mesh.nodes), atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**31))
    def test_idempotent_on_hat_space(self, level, seed):
        mesh = Mesh1D(level)
        c = np.random.default_rng(seed).standard_normal(mesh.n_interior)
        v = piecewise_linear(mesh, c)
        np.testing.assert_allclose(l2_project(mesh, v), c, atol=1e-11)
        np.testing.assert_allclose(ritz_project(mesh, v), c, atol=1e-11)

    @pytest.mark.parametrize("project", [l2_project, ritz_project])
    def test_order_two(self, project):
        f = Profile.sine(1)
        errs = []
        for level in range(3, 8):
            mesh = Mesh1D(level)
            errs.append(l2_distance(piecewise_linear(mesh, project(mesh, f)), f, n_cells=2**level))
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all((orders >= 1.8) & (orders <= 2.2)), orders


class TestEigenpairs:
    def test_level1(self):
        lam, phi = FemOperators.build(1).eigenpairs
        assert lam[0] == pytest.approx(12.0, rel=1e-14)
        assert lam[0] > math.pi**2

    @pytest.mark.parametrize("level", range(1, 9))
    def test_invariants(self, level, ops_cache):
        ops = ops_cache(level)
        lam, phi = ops.eigenpairs
        assert len(lam) == ops.mesh.n_interior
        assert np.all(np.diff(lam) > 0)
        res = ops.stiffness @ phi - (ops.mass @ phi) * lam
        assert np.abs(res).max() <= 1e-10
        np.testing.assert_allclose(phi.T @ (ops.mass @ phi), np.eye(len(lam)), atol=1e-10)
        np.testing.assert_allclose(lam, analytic_discrete_eigenvalues(level), rtol=1e-11)
        assert np.all(lam >= (np.arange(1, len(lam) + 1) * np.pi) ** 2)

    @pytest.mark.parametrize("level", [3, 6])
    def test_sign_convention(self, level, ops_cache):
        _, phi = ops_cache(level).eigenpairs
        for j in range(phi.shape[1]):
            col = phi[:, j]
            first = col[np.abs(col) > 1e-8 * np.abs(col).max()][0]
            assert first > 0
        # eigenvectors are sampled sines
        x = ops_cache(level).mesh.nodes
        np.testing.assert_allclose(phi[:, 2] / np.linalg.norm(phi[:, 2]),
                                   np.sin(3 * np.pi * x) / np.linalg.norm(np.sin(3 * np.pi * x)), atol=1e-10)

    def test_first_eigenvalue_converges_at_order_two(self, ops_cache):
        gaps = [ops_cache(level).eigenpairs[0][0] - math.pi**2 for level in (4, 5, 6)]
        ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
        assert all(3.8 <= r <= 4.2 for r in ratios), ratios


class TestDiscreteNorm:
    def test_eigenvector(self, ops_cache):
        ops = ops_cache(5)
        lam, phi = ops.eigenpairs
        assert discrete_norm(ops, phi[:, 0], 2.0) == pytest.approx(lam[0], rel=1e-12)

    def test_zero(self, ops_cache):
        assert discrete_norm(ops_cache(3), np.zeros(7), 1.5) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_alpha_zero_is_mass_norm(self, seed, ops_cache):
        ops = ops_cache(6)
        v = np.random.default_rng(seed).standard_normal(ops.mesh.n_interior)
        assert discrete_norm(ops, v, 0.0) == pytest.approx(math.sqrt(v @ ops.mass @ v), rel=1e-10)


class TestProlongAndState:
    def test_prolong_is_exact_interpolation(self):
        coarse = Mesh1D(3)
        c = np.random.default_rng(1).standard_normal(coarse.n_interior)
        fine = prolong(c, 3, 6)
        np.testing.assert_allclose(fine, piecewise_linear(coarse, c)(Mesh1D(6).nodes), atol=1e-15)
        # shared nodes are copied bit for bit
        assert np.array_equal(fine[2**3 - 1 :: 2**3], c)

    def test_prolong_rejects_coarsening(self):
        with pytest.raises(ValueError):
            prolong(np.zeros(7), 3, 2)

    def test_state_length_checked(self):
        with pytest.raises(ValueError):
            StateVector(np.zeros(3), np.zeros(4), 2)
