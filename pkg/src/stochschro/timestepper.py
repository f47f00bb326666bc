"""Time integration of the semidiscrete system.

With ``Z = U1 + i U2`` the semidiscrete equations ``M U1' + S U2 = b1`` and
``M U2' - S U1 = b2`` become ``M Z' = i S Z + b``.  Backward Euler then
solves the complex tridiagonal system ``(M - i k S) Z^n = M Z^(n-1) + B^n``
each step, which is the block system ``[[M, kS], [-kS, M]]`` in real form.
``exact_semidiscrete`` mode instead rotates every discrete eigenmode by
``t * lambda_h_j``, removing the time discretization error entirely.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import quad, quad_vec

from .fem import FemError, FemOperators, StateVector, discrete_norm
from .spectral import QuadratureError
from .tridiag import TridiagonalFactor


class Mode(str, Enum):
    BACKWARD_EULER = "backward_euler"
    EXACT_SEMIDISCRETE = "exact_semidiscrete"

    @classmethod
    def parse(cls, value) -> Mode:
        aliases = {"be": cls.BACKWARD_EULER, "exact": cls.EXACT_SEMIDISCRETE}
        if isinstance(value, Mode):
            return value
        return aliases.get(value) or cls(value)


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    n_steps: int
    mode: Mode = Mode.BACKWARD_EULER

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        object.__setattr__(self, "mode", Mode.parse(self.mode))

    @classmethod
    def from_final_time(cls, T: float, dt: float, mode=Mode.BACKWARD_EULER) -> SchemeConfig:
        n = round(T / dt)
        if not math.isclose(n * dt, T, rel_tol=1e-12, abs_tol=1e-14):
            raise ValueError(f"final time {T} is not a multiple of dt={dt}")
        return cls(dt, n, mode)

    @property
    def T(self) -> float:
        return self.dt * self.n_steps


class BackwardEulerSystem:
    """Factored ``M - i k S`` for one mesh and step; reusable across steps and samples."""

    def __init__(self, ops: FemOperators, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.ops = ops
        self.dt = dt
        m, s = ops.mass, ops.stiffness
        self.factor = TridiagonalFactor(
            m.diagonal(-1) - 1j * dt * s.diagonal(-1),
            m.diagonal(0) - 1j * dt * s.diagonal(0),
            m.diagonal(1) - 1j * dt * s.diagonal(1),
        )
        self._m = (m.diagonal(-1), m.diagonal(0), m.diagonal(1))

    def mass_apply(self, z: np.ndarray) -> np.ndarray:
        """``M z`` along axis 0 (trailing batch axes allowed)."""
        lo, d, up = self._m
        shape = (-1,) + (1,) * (z.ndim - 1)
        out = d.reshape(shape) * z
        out[1:] += lo.reshape(shape) * z[:-1]
        out[:-1] += up.reshape(shape) * z[1:]
        return out

    def step(self, z: np.ndarray, load=None) -> np.ndarray:
        rhs = self.mass_apply(z)
        if load is not None:
            rhs = rhs + load
        return self.factor.solve(rhs)

    def march(self, z0: np.ndarray, loads=None, n_steps: int | None = None) -> np.ndarray:
        """Advance ``z0`` (shape ``(N,)`` or ``(N, batch)``) through all steps.

        ``loads`` is indexed by step (``loads[n]`` matches ``z0``'s shape);
        ``None`` means homogeneous.
        """
        if loads is None and n_steps is None:
            raise ValueError("need loads or n_steps")
        n = len(loads) if n_steps is None else n_steps
        z = np.asarray(z0, dtype=complex)
        for i in range(n):
            z = self.step(z, None if loads is None else loads[i])
        return z


@lru_cache(maxsize=32)
def _cached_system(level: int, dt: float) -> BackwardEulerSystem:
    return BackwardEulerSystem(FemOperators.build(level), dt)


def backward_euler_system(ops: FemOperators, dt: float) -> BackwardEulerSystem:
    """Shared factored system for ``(mesh level, dt)``; immutable once built."""
    return _cached_system(ops.mesh.level, float(dt))


def _as_load(load) -> np.ndarray | None:
    if load is None:
        return None
    if isinstance(load, tuple):
        b1, b2 = load
        return np.asarray(b1) + 1j * np.asarray(b2)
    return np.asarray(load)


def be_step(ops: FemOperators, state: StateVector, dt: float, load=None) -> StateVector:
    """One backward Euler step; ``load`` is ``(b1, b2)`` or a complex vector ``b1 + i b2``."""
    system = backward_euler_system(ops, dt)
    z_old = state.as_complex()
    b = _as_load(load)
    rhs = system.mass_apply(z_old) if b is None else system.mass_apply(z_old) + b
    z = system.factor.solve(rhs)
    mat = ops.mass - 1j * dt * ops.stiffness
    resid = np.linalg.norm(mat @ z - rhs)
    scale = np.abs(mat).sum(axis=1).max() * np.linalg.norm(z) + np.linalg.norm(rhs)
    if resid > 1e-12 * scale:
        raise FemError(f"backward Euler residual {resid:.3e} exceeds 1e-12 relative")
    return StateVector.from_complex(z, ops.mesh.level)


def exact_semidiscrete_apply(ops: FemOperators, t: float, initial: StateVector) -> StateVector:
    """``E_h(t)``: rotate each discrete eigenmode by ``t * lambda_h_j``."""
    lam, phi = ops.eigenpairs
    a = phi.T @ (ops.mass @ initial.as_complex())
    return StateVector.from_complex(phi @ (np.exp(1j * t * lam) * a), ops.mesh.level)


def _modal_duhamel(ops: FemOperators, t: float, a0: np.ndarray, forcing, tol: float = 1e-10) -> np.ndarray:
    """Discrete modal amplitudes at ``t`` with forcing ``(g1, g2)`` given as hat-space coefficients."""
    lam, phi = ops.eigenpairs
    proj = phi.T @ ops.mass
    hom = np.exp(1j * t * lam) * a0
    if forcing is None or t == 0:
        return hom

    def integrand(tau):
        g1, g2 = forcing(tau)
        g = proj @ (np.asarray(g1) + 1j * np.asarray(g2))
        z = np.exp(1j * (t - tau) * lam) * g
        return np.concatenate([z.real, z.imag])

    val, err, info = quad_vec(integrand, 0.0, t, epsabs=0.1 * tol, epsrel=tol, norm="max", full_output=True)
    if not info.success:
        raise QuadratureError(f"discrete Duhamel quadrature failed (error estimate {err:.2e})")
    n = len(lam)
    return hom + val[:n] + 1j * val[n:]


def evolve(ops: FemOperators, scheme: SchemeConfig, initial: StateVector, forcing=None, noise=None, record=False):
    """March ``initial`` to ``T = dt * n_steps``.

    ``forcing(t)`` returns the hat-space coefficients ``(g1, g2)`` of the
    projected forcing ``P_h f``; backward Euler uses the load
    ``dt * M g(t_n)``.  ``noise`` is an array of complex step loads
    ``(n_steps, N_h)`` (see :func:`stochschro.noise.noise_loads`) and is only
    supported with backward Euler.  Returns the final state, or
    ``(final, trajectory)`` with ``record=True``.
    """
    if initial.mesh_level != ops.mesh.level:
        raise ValueError("initial state and operators live on different meshes")
    level = ops.mesh.level
    if scheme.mode is Mode.EXACT_SEMIDISCRETE:
        if noise is not None:
            raise ValueError("exact_semidiscrete mode does not take stochastic loads")
        lam, phi = ops.eigenpairs
        a0 = phi.T @ (ops.mass @ initial.as_complex())
        times = [scheme.dt * n for n in range(1, scheme.n_steps + 1)] if record else [scheme.T]
        states = [StateVector.from_complex(phi @ _modal_duhamel(ops, t, a0, forcing), level) for t in times]
        final = states[-1] if states else initial
        return (final, [initial] + states) if record else final

    system = backward_euler_system(ops, scheme.dt)
    if noise is not None and len(noise) != scheme.n_steps:
        raise ValueError(f"noise has {len(noise)} steps, scheme has {scheme.n_steps}")
    z = initial.as_complex()
    trajectory = [initial]
    for n in range(1, scheme.n_steps + 1):
        load = None
        if forcing is not None:
            g1, g2 = forcing(n * scheme.dt)
            load = scheme.dt * system.mass_apply(np.asarray(g1) + 1j * np.asarray(g2))
        if noise is not None:
            load = noise[n - 1] if load is None else load + noise[n - 1]
        z = system.step(z, load)
        if record:
            trajectory.append(StateVector.from_complex(z, level))
    final = StateVector.from_complex(z, level)
    return (final, trajectory) if record else final


def write_trajectory_csv(trajectory, dt: float, path: str | Path) -> None:
    """Columns ``step,time,node_index,u1,u2``; ``node_index`` is 1-based."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "node_index", "u1", "u2"])
        for n, st in enumerate(trajectory):
            for k, (a, b) in enumerate(zip(st.u1, st.u2), start=1):
                w.writerow([n, repr(n * dt), k, repr(float(a)), repr(float(b))])


@dataclass(frozen=True)
class StabilityReport:
    lhs: float
    rhs: float
    t: float
    alpha: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else math.inf)


def stability_check(ops: FemOperators, forcing, alpha: float, t: float, initial: StateVector | None = None) -> StabilityReport:
    """Both sides of the a priori bound for the semidiscrete solution at time ``t``.

    ``lhs = ||u_h1(t)||_{h,alpha} + ||u_h2(t)||_{h,alpha}`` with the solution
    computed by exact modal evolution, and ``rhs`` the initial norms plus the
    time integral of the forcing norms.
    """
    level = ops.mesh.level
    initial = initial or StateVector.zeros(level)
    lam, phi = ops.eigenpairs
    a0 = phi.T @ (ops.mass @ initial.as_complex())
    final = StateVector.from_complex(phi @ _modal_duhamel(ops, t, a0, forcing), level)
    lhs = discrete_norm(ops, final.u1, alpha) + discrete_norm(ops, final.u2, alpha)
    rhs = discrete_norm(ops, initial.u1, alpha) + discrete_norm(ops, initial.u2, alpha)
    if forcing is not None and t > 0:
        def forcing_norm(s):
            g1, g2 = forcing(s)
            return discrete_norm(ops, np.asarray(g1), alpha) + discrete_norm(ops, np.asarray(g2), alpha)

        integral, _ = quad(forcing_norm, 0.0, t, epsabs=1e-12, epsrel=1e-10, limit=200)
        rhs += integral
    return StabilityReport(lhs, rhs, t, alpha)
