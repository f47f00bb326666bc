"""Fast invariant checks of every module, for ``stochschro selftest``."""
from __future__ import annotations

import math

import numpy as np

from . import fem, lab, noise, spectral, timestepper


def _fem_spd_and_eigen():
    worst = 0.0
    for level in range(1, 7):
        ops = fem.FemOperators.build(level)
        np.linalg.cholesky(ops.mass.toarray())
        np.linalg.cholesky(ops.stiffness.toarray())
        lam, phi = ops.eigenpairs
        res = ops.stiffness @ phi - (ops.mass @ phi) * lam
        orth = phi.T @ ops.mass @ phi - np.eye(len(lam))
        worst = max(worst, np.abs(res).max(), np.abs(orth).max())
    return worst <= 1e-10, f"max residual {worst:.1e}"


def _fem_projection_order():
    f = fem.Profile.sine(1)
    x = np.linspace(0, 1, 20001)
    errs = []
    for level in (4, 5):
        mesh = fem.Mesh1D(level)
        c = fem.l2_project(mesh, f)
        v = np.interp(x, np.r_[0, mesh.nodes, 1], np.r_[0, c, 0])
        errs.append(math.sqrt(np.trapezoid((v - f(x)) ** 2, x)))
    ratio = errs[0] / errs[1]
    return 3.5 <= ratio <= 4.5, f"error ratio {ratio:.3f}"


def _spectral_group_energy():
    rng = np.random.default_rng(0)
    x = spectral.SpectralField(rng.standard_normal(64), rng.standard_normal(64))
    a = spectral.semigroup_apply(0.3, spectral.semigroup_apply(0.4, x))
    b = spectral.semigroup_apply(0.7, x)
    gap = max(np.abs(a.coeffs1 - b.coeffs1).max(), np.abs(a.coeffs2 - b.coeffs2).max())
    de = abs(spectral.energy(b) - spectral.energy(x)) / spectral.energy(x)
    return gap <= 1e-10 and de <= 1e-12, f"group gap {gap:.1e}, energy drift {de:.1e}"


def _spectral_hs():
    val, tail = spectral.hs_norm_squared(spectral.CovarianceSpec(4.0), 2.0, 1000)
    return val <= 1 / 90 <= val + tail, f"[{val:.12f}, {val + tail:.12f}]"


def _noise_determinism():
    model = noise.NoiseModel.symmetric(1.0, 8, 1234, 0.01, 10)
    a = noise.sample_increments(model, 3).data
    b = noise.sample_increments(model, 3).data
    return np.array_equal(a, b), "identical blocks" if np.array_equal(a, b) else "blocks differ"


def _noise_isometry():
    rep = noise.ito_isometry_check(noise.NoiseModel.symmetric(1.0, 8, 7, 0.1, 10), 2000)
    return rep.within_3sigma, f"{rep.deviation_sigma:.2f} sigma"


def _be_amplification():
    worst = 0.0
    for level in range(1, 5):
        ops = fem.FemOperators.build(level)
        lam, phi = ops.eigenpairs
        dt = 0.05
        for j in range(len(lam)):
            st = fem.StateVector(phi[:, j].copy(), np.zeros(len(lam)), level)
            new = timestepper.be_step(ops, st, dt)
            amp = (phi[:, j] @ (ops.mass @ new.as_complex()))
            worst = max(worst, abs(abs(amp) - 1 / math.sqrt(1 + dt**2 * lam[j] ** 2)))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def _lab_fit():
    fit = lab.fit_rate([(h, h**2) for h in (0.5, 0.25, 0.125)])
    return abs(fit.rate - 2) < 1e-12 and fit.residual < 1e-12, f"rate {fit.rate:.6f}"


CHECKS = [
    ("fem", "SPD operators and eigenpairs", _fem_spd_and_eigen),
    ("fem", "L2 projection order", _fem_projection_order),
    ("spectral_oracle", "group property and energy", _spectral_group_energy),
    ("spectral_oracle", "Hilbert-Schmidt enclosure", _spectral_hs),
    ("noise", "stream determinism", _noise_determinism),
    ("noise", "Ito isometry (3 sigma)", _noise_isometry),
    ("timestepper", "backward Euler amplification", _be_amplification),
    ("convergence_lab", "rate fit", _lab_fit),
]


def run(out=print) -> bool:
    ok = True
    out(f"{'module':<16} {'check':<32} {'result':<6} detail")
    for module, name, check in CHECKS:
        try:
            passed, detail = check()
        except Exception as exc:  # report and continue
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        ok &= bool(passed)
        out(f"{module:<16} {name:<32} {'PASS' if passed else 'FAIL':<6} {detail}")
    return ok
