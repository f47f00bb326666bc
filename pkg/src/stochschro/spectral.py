"""Exact modal solution of the Dirichlet problem on (0, 1).

Fields are stored through their coefficients in the orthonormal sine basis
``e_j(x) = sqrt(2) sin(j pi x)`` with eigenvalues ``lambda_j = (j pi)^2``.
In that basis the Schroedinger group acts on each mode as a plane rotation
by the angle ``t * lambda_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

DEFAULT_MODES = 4096


class DivergentCovarianceError(ValueError):
    """Raised when the Hilbert-Schmidt norm of ``Lambda^(beta/2) Q^(1/2)`` is infinite."""


class QuadratureError(RuntimeError):
    pass


def eigenvalues(n_modes: int) -> np.ndarray:
    return (np.arange(1, n_modes + 1) * np.pi) ** 2


def eigenpair(j: int):
    """Return ``(lambda_j, e_j)`` for the Dirichlet Laplacian on (0, 1)."""
    if j < 1:
        raise ValueError(f"mode index must be >= 1, got {j}")
    w = j * math.pi
    return w * w, lambda x: math.sqrt(2.0) * np.sin(w * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SpectralField:
    """Modal coefficients of the pair ``(u1, u2)``."""

    coeffs1: np.ndarray
    coeffs2: np.ndarray

    def __post_init__(self):
        if np.shape(self.coeffs1) != np.shape(self.coeffs2) or np.ndim(self.coeffs1) != 1:
            raise ValueError("coefficient sequences must be 1-D and of equal length")

    @property
    def n_modes(self) -> int:
        return len(self.coeffs1)

    @classmethod
    def from_profiles(cls, f1, f2, n_modes: int = DEFAULT_MODES) -> SpectralField:
        return cls(f1.modal_coefficients(n_modes), f2.modal_coefficients(n_modes))

    @classmethod
    def from_complex(cls, z: np.ndarray) -> SpectralField:
        return cls(np.real(z).copy(), np.imag(z).copy())

    def as_complex(self) -> np.ndarray:
        return self.coeffs1 + 1j * self.coeffs2

    def norm(self, alpha: float = 0.0) -> tuple[float, float]:
        """``(||u1||_alpha, ||u2||_alpha)``."""
        w = eigenvalues(self.n_modes) ** alpha
        return (
            math.sqrt(float(np.sum(w * self.coeffs1**2))),
            math.sqrt(float(np.sum(w * self.coeffs2**2))),
        )

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        basis = math.sqrt(2.0) * np.sin(np.multiply.outer(x, np.arange(1, self.n_modes + 1) * np.pi))
        return basis @ self.coeffs1, basis @ self.coeffs2


@dataclass(frozen=True)
class CovarianceSpec:
    """``Q = Lambda^(-s)`` for one noise component."""

    s: float
    component: int = 1

    def eigenvalues(self, n_modes: int) -> np.ndarray:
        """``gamma_j = lambda_j^(-s)``; an infinite ``s`` gives the zero covariance."""
        if math.isinf(self.s) and self.s > 0:
            return np.zeros(n_modes)
        return eigenvalues(n_modes) ** (-self.s)


def _rotate(t: float, z: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.exp(1j * t * lam) * z


def semigroup_apply(t: float, x0: SpectralField) -> SpectralField:
    """Apply ``E(t) = [[C(t), -S(t)], [S(t), C(t)]]`` mode by mode (any real ``t``)."""
    lam = eigenvalues(x0.n_modes)
    c, s = np.cos(t * lam), np.sin(t * lam)
    return SpectralField(c * x0.coeffs1 - s * x0.coeffs2, s * x0.coeffs1 + c * x0.coeffs2)


def energy(x: SpectralField, r: int = 0, alpha: float = 0.0) -> float:
    """``||D^r u1||_alpha^2 + ||D^r u2||_alpha^2 = sum_j lambda_j^(2r + alpha) (c1_j^2 + c2_j^2)``."""
    w = eigenvalues(x.n_modes) ** (2 * r + alpha)
    return float(np.sum(w * (x.coeffs1**2 + x.coeffs2**2)))


def duhamel_forced_solution(t: float, x0: SpectralField, forcing=None, *, tol: float = 1e-10) -> SpectralField:
    """Variation-of-constants solution ``E(t) X0 + int_0^t E(t - tau) F(tau) dtau``.

    ``forcing(tau)`` returns the modal coefficient arrays ``(f1, f2)`` of
    the forcing at time ``tau``.  The integral is computed by adaptive
    vector quadrature; a failure to reach ``tol`` raises
    :class:`QuadratureError`.
    """
    hom = semigroup_apply(t, x0)
    if forcing is None or t == 0:
        return hom
    lam = eigenvalues(x0.n_modes)

    def integrand(tau):
        f1, f2 = forcing(tau)
        g = np.asarray(f1) + 1j * np.asarray(f2)
        z = _rotate(t - tau, g, lam)
        return np.concatenate([z.real, z.imag])

    val, err, info = quad_vec(integrand, 0.0, t, epsabs=0.1 * tol, epsrel=tol, norm="max", full_output=True)
    if not info.success or err > tol * max(1.0, float(np.max(np.abs(val)))):
        raise QuadratureError(f"Duhamel quadrature did not converge (error estimate {err:.2e}, status {info.status})")
    n = x0.n_modes
    return SpectralField(hom.coeffs1 + val[:n], hom.coeffs2 + val[n:])


def hs_norm_squared(spec: CovarianceSpec, beta: float, j_max: int) -> tuple[float, float]:
    """Enclosure of ``||Lambda^(beta/2) Q^(1/2)||_HS^2 = sum_j lambda_j^(beta - s)``.

    Returns ``(value, tail_bound)`` such that the true sum lies in
    ``[value, value + tail_bound]``.  ``value`` is the partial sum up to
    ``j_max`` shrunk by a floating-point allowance, and ``tail_bound`` is
    the integral-test bound ``pi^(2(beta-s)) j_max^(1-p) / (p - 1)`` with
    ``p = 2(s - beta)``, widened by twice that allowance.
    """
    p = 2.0 * (spec.s - beta)
    if not beta < spec.s - 0.5:
        raise DivergentCovarianceError(
            f"Hilbert-Schmidt norm diverges: requires beta < s - 1/2 (beta={beta}, s={spec.s})"
        )
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    j = np.arange(1, j_max + 1, dtype=float)
    partial = math.fsum((j * np.pi) ** (-p))
    # each term carries a few ulps of relative error, fsum adds one rounding
    slack = 16.0 * np.finfo(float).eps * partial
    tail = math.pi ** (-p) * j_max ** (1.0 - p) / (p - 1.0)
    return partial - slack, tail + 2.0 * slack
