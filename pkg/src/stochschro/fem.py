"""Piecewise-linear finite elements on uniform partitions of (0, 1).

Meshes are nested (``h = 2**-level``), so every coarse finite element
function is exactly representable on any finer mesh.  All matrices are
assembled in closed form; load vectors of sine modes and quadratics are
integrated exactly, anything else with 3-point Gauss-Legendre per element.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (sp.linalg.norm)

__all__ = [
    "Mesh1D",
    "Profile",
    "FemOperators",
    "StateVector",
    "assemble_mass",
    "assemble_stiffness",
    "load_vector",
    "sine_load_matrix",
    "l2_project",
    "ritz_project",
    "discrete_eigenpairs",
    "discrete_norm",
    "prolong",
    "matrix_to_csv",
    "FemError",
]

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


class FemError(RuntimeError):
    """Internal numerical failure (solver or eigensolver)."""


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of (0, 1) with ``2**level`` elements."""

    level: int

    def __post_init__(self):
        if int(self.level) != self.level or self.level < 1:
            raise ValueError(f"mesh level must be an integer >= 1, got {self.level!r}")

    @property
    def h(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def n_interior(self) -> int:
        return 2**self.level - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates ``k*h``, ``k = 1..n_interior``."""
        return np.arange(1, self.n_interior + 1) * self.h

    def hat(self, k: int):
        """The ``k``-th interior hat function (1-based) as a callable."""
        if not 1 <= k <= self.n_interior:
            raise IndexError(k)
        xk, h = k * self.h, self.h
        return lambda x: np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float) - xk) / h)


@dataclass(frozen=True)
class Profile:
    """A spatial profile ``a0 + a1 x + a2 x^2 + sum_j b_j sin(j pi x)``.

    This covers every input the experiments need, and all its integrals
    against hats and sine modes are available in closed form.
    """

    poly: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sines: tuple[tuple[int, float], ...] = ()

    @classmethod
    def sine(cls, j: int, amplitude: float = 1.0) -> Profile:
        return cls(sines=((j, amplitude),))

    @classmethod
    def quadratic(cls, a0: float = 0.0, a1: float = 0.0, a2: float = 0.0) -> Profile:
        return cls(poly=(a0, a1, a2))

    def __add__(self, other: Profile) -> Profile:
        poly = tuple(a + b for a, b in zip(self.poly, other.poly))
        return Profile(poly=poly, sines=self.sines + other.sines)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a0, a1, a2 = self.poly
        out = a0 + x * (a1 + a2 * x)
        for j, b in self.sines:
            out = out + b * np.sin(j * np.pi * x)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        _, a1, a2 = self.poly
        out = a1 + 2.0 * a2 * x + 0.0 * x
        for j, b in self.sines:
            out = out + b * j * np.pi * np.cos(j * np.pi * x)
        return out

    def modal_coefficients(self, n_modes: int) -> np.ndarray:
        """Exact coefficients ``(f, e_j)`` for ``e_j = sqrt(2) sin(j pi x)``, ``j = 1..n_modes``."""
        j = np.arange(1, n_modes + 1)
        w = j * np.pi
        c = np.where(j % 2 == 0, 1.0, -1.0)  # cos(j pi)
        a0, a1, a2 = self.poly
        # int_0^1 x^m sin(w x) dx with sin(w) = 0
        m0 = (1.0 - c) / w
        m1 = -c / w
        m2 = -c / w + 2.0 * (c - 1.0) / w**3
        out = math.sqrt(2.0) * (a0 * m0 + a1 * m1 + a2 * m2)
        for jj, b in self.sines:
            if jj <= n_modes:
                out[jj - 1] += b / math.sqrt(2.0)
        return out


# u0 = sin(2 pi x) + i x(1 - x), the standard example data (preset name "paper")
DEFAULT_INITIAL = (Profile.sine(2), Profile.quadratic(0.0, 1.0, -1.0))


def assemble_mass(mesh: Mesh1D) -> sp.csr_matrix:
    """Consistent mass matrix of the interior hats: ``2h/3`` on, ``h/6`` off the diagonal."""
    n, h = mesh.n_interior, mesh.h
    return sp.diags(
        [np.full(n - 1, h / 6.0), np.full(n, 2.0 * h / 3.0), np.full(n - 1, h / 6.0)],
        [-1, 0, 1],
        format="csr",
    )


def assemble_stiffness(mesh: Mesh1D) -> sp.csr_matrix:
    n, h = mesh.n_interior, mesh.h
    return sp.diags(
        [np.full(n - 1, -1.0 / h), np.full(n, 2.0 / h), np.full(n - 1, -1.0 / h)],
        [-1, 0, 1],
        format="csr",
    )


def sine_load_matrix(mesh: Mesh1D, n_modes: int) -> np.ndarray:
    """Matrix ``B[j-1, k-1] = (e_j, phi_k)`` with ``e_j = sqrt(2) sin(j pi x)``.

    Uses ``int phi_k sin(w x) = sin(w x_k) * 4 sin^2(w h / 2) / (w^2 h)``.
    """
    h = mesh.h
    w = np.arange(1, n_modes + 1)[:, None] * np.pi
    factor = 4.0 * np.sin(0.5 * w * h) ** 2 / (w**2 * h)
    return math.sqrt(2.0) * factor * np.sin(w * mesh.nodes[None, :])


def _gauss_load(mesh: Mesh1D, f) -> np.ndarray:
    h = mesh.h
    n_el = mesh.n_interior + 1
    left = np.arange(n_el) * h
    xq = left[:, None] + 0.5 * h * (_GAUSS_X[None, :] + 1.0)
    wq = 0.5 * h * _GAUSS_W[None, :]
    fq = np.asarray(f(xq), dtype=float) * wq
    t = (xq - left[:, None]) / h
    rising = (fq * t).sum(axis=1)  # element e against the hat at its right node
    falling = (fq * (1.0 - t)).sum(axis=1)  # element e against the hat at its left node
    return rising[:-1] + falling[1:]


def load_vector(mesh: Mesh1D, f) -> np.ndarray:
    """Vector ``b_k = (f, phi_k)``; exact for :class:`Profile`, Gauss quadrature otherwise."""
    if not isinstance(f, Profile):
        return _gauss_load(mesh, f)
    h, x = mesh.h, mesh.nodes
    a0, a1, a2 = f.poly
    b = h * (a0 + a1 * x + a2 * (x * x + h * h / 6.0))
    for j, amp in f.sines:
        w = j * np.pi
        b = b + amp * np.sin(w * x) * 4.0 * math.sin(0.5 * w * h) ** 2 / (w * w * h)
    return b


@dataclass(frozen=True)
class StateVector:
    """Real and imaginary FEM coefficient vectors on one mesh level."""

    u1: np.ndarray
    u2: np.ndarray
    mesh_level: int

    def __post_init__(self):
        n = 2**self.mesh_level - 1
        if np.shape(self.u1) != (n,) or np.shape(self.u2) != (n,):
            raise ValueError(f"state vectors must have length {n} for level {self.mesh_level}")

    @classmethod
    def from_complex(cls, z: np.ndarray, level: int) -> StateVector:
        z = np.asarray(z)
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), level)

    @classmethod
    def zeros(cls, level: int) -> StateVector:
        n = 2**level - 1
        return cls(np.zeros(n), np.zeros(n), level)

    def as_complex(self) -> np.ndarray:
        return self.u1 + 1j * self.u2


@dataclass(frozen=True, eq=False)
class FemOperators:
    """Mass and stiffness matrices of one mesh, with lazily computed eigenpairs."""

    mesh: Mesh1D
    mass: sp.csr_matrix = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)

    @classmethod
    def build(cls, mesh: Mesh1D | int) -> FemOperators:
        if not isinstance(mesh, Mesh1D):
            mesh = Mesh1D(mesh)
        return cls(mesh, assemble_mass(mesh), assemble_stiffness(mesh))

    @cached_property
    def eigenpairs(self) -> tuple[np.ndarray, np.ndarray]:
        """``(lam, phi)``; ``phi[:, j]`` is the mass-orthonormal eigenvector of ``lam[j]``."""
        return discrete_eigenpairs(self)

    def mass_norm(self, v: np.ndarray) -> float:
        return math.sqrt(max(float(v @ (self.mass @ v)), 0.0))


def l2_project(mesh: Mesh1D, f, ops: FemOperators | None = None) -> np.ndarray:
    """Coefficients of the L2 projection onto the hat space: solves ``M c = (f, phi)``."""
    ops = ops or FemOperators.build(mesh)
    b = load_vector(mesh, f)
    return _solve_tridiag_spd(ops.mass, b)


def ritz_project(mesh: Mesh1D, f, ops: FemOperators | None = None) -> np.ndarray:
    """Coefficients of the Ritz (energy) projection: solves ``S c = (f', phi')``.

    For hats ``(f', phi_k') = (2 f(x_k) - f(x_k - h) - f(x_k + h)) / h``
    exactly, so ``f`` only needs to be evaluable at the nodes and the ends.
    """
    ops = ops or FemOperators.build(mesh)
    h = mesh.h
    x = np.arange(0, mesh.n_interior + 2) * h
    fx = np.asarray(f(x), dtype=float)
    b = (2.0 * fx[1:-1] - fx[:-2] - fx[2:]) / h
    # boundary values are outside the hat space and enter only through b
    return _solve_tridiag_spd(ops.stiffness, b)


def _solve_tridiag_spd(a: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    ab = np.zeros((2, a.shape[0]))
    ab[0, 1:] = a.diagonal(1)
    ab[1, :] = a.diagonal(0)
    try:
        if a.shape[0] == 1:  # LAPACK band wrapper rejects the 1x1 case
            c = b / ab[1]
        else:
            c = scipy.linalg.solveh_banded(ab, b)
    except np.linalg.LinAlgError as exc:
        raise FemError(f"banded SPD solve failed: {exc}") from exc
    resid = np.linalg.norm(a @ c - b)
    scale = sp.linalg.norm(a) * np.linalg.norm(c) + np.linalg.norm(b)
    if resid > 1e-12 * scale:
        raise FemError(f"projection solve residual {resid:.3e} exceeds 1e-12 relative")
    return c


def discrete_eigenpairs(ops: FemOperators) -> tuple[np.ndarray, np.ndarray]:
    """All generalized eigenpairs of ``S phi = lam M phi``, ascending.

    Reduced to standard form through the Cholesky factor of ``M`` (LAPACK
    ``sygvd``).  Vectors are ``M``-orthonormal, and each is signed so its
    first entry that is not negligible is positive.
    """
    m = ops.mass.toarray()
    s = ops.stiffness.toarray()
    try:
        lam, phi = scipy.linalg.eigh(s, m, driver="gvd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FemError(f"generalized eigensolve failed for level {ops.mesh.level}: {exc}") from exc
    tol = 1e-8 * np.max(np.abs(phi), axis=0)
    for j in range(phi.shape[1]):
        first = np.flatnonzero(np.abs(phi[:, j]) > tol[j])[0]
        if phi[first, j] < 0:
            phi[:, j] = -phi[:, j]
    if np.any(lam <= 0):
        raise FemError(f"non-positive discrete eigenvalue {lam.min():.3e} at level {ops.mesh.level}")
    return lam, phi


def discrete_norm(ops: FemOperators, v: np.ndarray, alpha: float) -> float:
    """Spectral norm ``(sum_j lam_j^alpha (v, phi_j)^2)^(1/2)`` of a hat-space function."""
    lam, phi = ops.eigenpairs
    coef = phi.T @ (ops.mass @ v)
    return math.sqrt(float(np.sum(lam**alpha * coef**2)))


def prolong(v: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
    """Exact injection of a coarse hat-space function into a finer nested mesh."""
    if to_level < from_level:
        raise ValueError(f"cannot prolong from level {from_level} to coarser level {to_level}")
    v = np.asarray(v)
    for _ in range(to_level - from_level):
        padded = np.concatenate([np.zeros((1,) + v.shape[1:], v.dtype), v, np.zeros((1,) + v.shape[1:], v.dtype)])
        fine = np.empty((2 * padded.shape[0] - 1,) + v.shape[1:], dtype=v.dtype)
        fine[0::2] = padded
        fine[1::2] = 0.5 * (padded[:-1] + padded[1:])
        v = fine[1:-1]
    return v


def matrix_to_csv(a: sp.spmatrix, path: str | Path) -> None:
    """Write the nonzeros of ``a`` as ``row,col,value`` (0-based, row-major)."""
    coo = sp.coo_matrix(a)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for i in order:
            w.writerow([int(coo.row[i]), int(coo.col[i]), repr(float(coo.data[i]))])
