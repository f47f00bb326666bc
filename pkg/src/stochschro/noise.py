"""Truncated Karhunen-Loeve sampling of the two Q-Wiener processes.

Every Monte Carlo sample owns a counter-based stream: a Philox4x64 bit
generator keyed by ``(seed, sample_index)``.  Standard normals are drawn
with NumPy's ziggurat sampler (``Generator.standard_normal``) in the fixed
order mode -> component -> step, so the increments of mode ``j`` do not
depend on how many modes follow it, and a sample can be regenerated on any
worker in any order.  The normal sampler is tied to the NumPy release;
bit-reproducibility is guaranteed for a given environment only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fem import Mesh1D, sine_load_matrix
from .spectral import CovarianceSpec

_MASK64 = (1 << 64) - 1


class TruncationWarning(UserWarning):
    """The KL truncation level is below the finest mesh dimension."""


@dataclass(frozen=True)
class NoiseModel:
    spec1: CovarianceSpec
    spec2: CovarianceSpec
    J: int
    seed: int
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.J < 1:
            raise ValueError(f"truncation level J must be >= 1, got {self.J}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @classmethod
    def symmetric(cls, s: float, J: int, seed: int, dt: float, n_steps: int) -> NoiseModel:
        """Both components with ``Q = Lambda^(-s)``."""
        return cls(CovarianceSpec(s, 1), CovarianceSpec(s, 2), J, seed, dt, n_steps)

    @property
    def gammas(self) -> np.ndarray:
        """Covariance eigenvalues, shape ``(J, 2)``."""
        return np.stack([self.spec1.eigenvalues(self.J), self.spec2.eigenvalues(self.J)], axis=1)

    @property
    def is_degenerate(self) -> bool:
        return not np.any(self.gammas)

    @property
    def final_time(self) -> float:
        return self.n_steps * self.dt


@dataclass(frozen=True)
class IncrementBlock:
    """Brownian increments ``d beta^n_{j,i}``, shape ``(n_steps, J, 2)``."""

    data: np.ndarray
    sample_index: int

    @property
    def n_steps(self) -> int:
        return self.data.shape[0]


def sample_stream(seed: int, sample_index: int) -> np.random.Generator:
    key = ((int(sample_index) & _MASK64) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_increments(model: NoiseModel, sample_index: int) -> IncrementBlock:
    rng = sample_stream(model.seed, sample_index)
    z = rng.standard_normal((model.J, 2, model.n_steps))
    data = np.ascontiguousarray(z.transpose(2, 0, 1)) * math.sqrt(model.dt)
    return IncrementBlock(data, sample_index)


def scaled_increments(model: NoiseModel, block: IncrementBlock) -> np.ndarray:
    """``gamma_{j,i}^(1/2) d beta^n_{j,i}`` as a complex array ``(n_steps, J)``: component 1 real, 2 imaginary."""
    w = block.data * np.sqrt(model.gammas)[None, :, :]
    return w[:, :, 0] + 1j * w[:, :, 1]


def noise_load(mesh: Mesh1D, model: NoiseModel, increments: np.ndarray, load_matrix: np.ndarray | None = None):
    """Load vectors ``b_i[k] = sum_j gamma_{j,i}^(1/2) d beta_{j,i} (e_j, phi_k)`` for one step.

    ``increments`` has shape ``(J, 2)`` (one row of an :class:`IncrementBlock`).
    """
    if load_matrix is None:
        load_matrix = sine_load_matrix(mesh, model.J)
    w = np.asarray(increments) * np.sqrt(model.gammas)
    return w[:, 0] @ load_matrix, w[:, 1] @ load_matrix


def noise_loads(load_matrix: np.ndarray, model: NoiseModel, block: IncrementBlock) -> np.ndarray:
    """Complex loads ``b1 + i b2`` of every step, shape ``(n_steps, N_h)``."""
    w = block.data * np.sqrt(model.gammas)[None, :, :]
    return (w[:, :, 0] @ load_matrix) + 1j * (w[:, :, 1] @ load_matrix)


def truncation_level(mesh_finest: Mesh1D, policy: int | str = "auto") -> int:
    """KL truncation ``J``: ``N_h`` of the finest mesh unless overridden."""
    n_h = mesh_finest.n_interior
    if policy == "auto":
        return n_h
    j = int(policy)
    if j < 1:
        raise ValueError(f"truncation level must be >= 1, got {j}")
    if j < n_h:
        warnings.warn(
            f"J={j} is below N_h={n_h} of the finest mesh; the noise truncation may limit the rate",
            TruncationWarning,
            stacklevel=2,
        )
    return j


@dataclass(frozen=True)
class IsometryReport:
    empirical: float
    exact: float
    stderr: float
    n_samples: int
    t: float

    @property
    def deviation_sigma(self) -> float:
        diff = self.empirical - self.exact
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.inf
        return abs(diff) / self.stderr

    @property
    def relative_deviation(self) -> float:
        return 0.0 if self.exact == 0 else abs(self.empirical - self.exact) / self.exact

    @property
    def within_3sigma(self) -> bool:
        return self.deviation_sigma <= 3.0


def ito_isometry_check(model: NoiseModel, n_samples: int) -> IsometryReport:
    """Compare the sample mean of ``||W_J(t)||^2`` with ``t sum_j (gamma_j1 + gamma_j2)``.

    ``t = n_steps * dt``.  Per-sample values are reduced with exact
    (``fsum``) summation, so the report does not depend on sample order.
    """
    g = model.gammas
    values = np.empty(n_samples)
    for i in range(n_samples):
        w = sample_increments(model, i).data.sum(axis=0)
        values[i] = float(np.sum(g * w * w))
    mean = math.fsum(values) / n_samples
    if n_samples > 1:
        var = math.fsum((values - mean) ** 2) / (n_samples - 1)
        stderr = math.sqrt(var / n_samples)
    else:
        stderr = math.inf
    t = model.final_time
    return IsometryReport(mean, t * math.fsum(g.ravel()), stderr, n_samples, t)
