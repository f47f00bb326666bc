"""Strong-convergence studies across nested mesh hierarchies.

Errors are exact L2 norms of piecewise-linear differences: coarse states are
injected into the reference mesh and measured with its mass matrix, or,
against the spectral oracle, expanded with Parseval's identity.  Stochastic
studies drive every level and the reference with the same increment block
per sample so the mean-square difference measures discretization error only.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .fem import DEFAULT_INITIAL, FemOperators, Mesh1D, StateVector, l2_project, prolong, ritz_project, sine_load_matrix
from .noise import NoiseModel, noise_loads, sample_increments, truncation_level
from .spectral import DEFAULT_MODES, CovarianceSpec, SpectralField, hs_norm_squared, semigroup_apply
from .timestepper import Mode, SchemeConfig, backward_euler_system, evolve

log = logging.getLogger(__name__)

REPORT_SCHEMA = "stochschro.report/1"
CHUNK_SIZE = 16

INITIAL_PRESETS = {"paper": DEFAULT_INITIAL}


class ConfigError(ValueError):
    """The experiment configuration is inconsistent."""


def parse_reference(value) -> int | None:
    """``"oracle"`` -> ``None``; ``"fine:9"`` or ``"fine_mesh(9)"`` -> ``9``."""
    if value is None or value in ("oracle", "spectral_oracle", "spectral"):
        return None
    if isinstance(value, int):
        return value
    m = re.fullmatch(r"fine(?::|_mesh\()(\d+)\)?", str(value).strip())
    if not m:
        raise ConfigError(f"reference must be 'oracle' or 'fine:<level>', got {value!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class NoiseSettings:
    s1: float
    s2: float
    J: int | str = "auto"
    beta: float = 2.0
    allow_divergent: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    levels: tuple[int, ...]
    reference: str = "oracle"
    dt: float = 0.01
    T: float = 1.0
    mode: str = "exact_semidiscrete"
    initial: str = "paper"
    projection: str = "l2"
    noise: NoiseSettings | None = None
    n_samples: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(sorted(int(v) for v in self.levels)))
        if len(self.levels) < 2:
            raise ConfigError("a convergence study needs at least two mesh levels")
        if min(self.levels) < 1:
            raise ConfigError("mesh levels must be >= 1")
        ref = parse_reference(self.reference)
        if ref is not None and max(self.levels) >= ref:
            raise ConfigError(f"all levels must be below the reference level {ref}")
        if self.initial not in INITIAL_PRESETS:
            raise ConfigError(f"unknown initial data preset {self.initial!r}; known: {sorted(INITIAL_PRESETS)}")
        if self.projection not in ("l2", "ritz"):
            raise ConfigError("projection must be 'l2' or 'ritz'")
        try:
            object.__setattr__(self, "mode", Mode.parse(self.mode).value)
            SchemeConfig.from_final_time(self.T, self.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.noise is not None and self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1 when noise is on")

    @property
    def reference_level(self) -> int | None:
        return parse_reference(self.reference)

    @property
    def scheme(self) -> SchemeConfig:
        return SchemeConfig.from_final_time(self.T, self.dt, self.mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        del d["workers"]  # results do not depend on it
        return d


@dataclass(frozen=True)
class LevelRecord:
    level: int
    h: float
    error_u1: float
    error_u2: float
    stderr_u1: float | None = None
    stderr_u2: float | None = None
    n_samples: int | None = None


class RateFit(NamedTuple):
    rate: float
    intercept: float
    residual: float


@dataclass
class ConvergenceReport:
    kind: str
    records: list[LevelRecord]
    fit_u1: RateFit
    fit_u2: RateFit
    config: dict
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def fitted_rate_u1(self) -> float:
        return self.fit_u1.rate

    @property
    def fitted_rate_u2(self) -> float:
        return self.fit_u2.rate

    @property
    def fit_residual(self) -> float:
        return max(self.fit_u1.residual, self.fit_u2.residual)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": self.kind,
            "config": self.config,
            "seed": self.seed,
            "levels": [asdict(r) for r in self.records],
            "fits": {"u1": self.fit_u1._asdict(), "u2": self.fit_u2._asdict()},
            "fitted_rate_u1": self.fitted_rate_u1,
            "fitted_rate_u2": self.fitted_rate_u2,
            "fit_residual": self.fit_residual,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def table_rows(self):
        yield ["level", "h", "error_u1", "stderr_u1", "error_u2", "stderr_u2"]
        for r in self.records:
            yield [r.level, repr(r.h), repr(r.error_u1), _fmt(r.stderr_u1), repr(r.error_u2), _fmt(r.stderr_u2)]


def _fmt(v):
    return "" if v is None else repr(v)


def fit_rate(points) -> RateFit:
    """Least-squares slope of ``log2(error)`` against ``log2(h)``.

    ``residual`` is the largest absolute deviation of the data from the
    fitted line, in log2 units.
    """
    pts = [(float(h), float(e)) for h, e in points]
    if len(pts) < 2:
        raise ValueError("need at least two (h, error) points")
    if any(h <= 0 or e <= 0 for h, e in pts):
        raise ValueError("mesh widths and errors must be positive")
    x = np.log2([h for h, _ in pts])
    y = np.log2([e for _, e in pts])
    if np.ptp(x) == 0:
        raise ValueError("degenerate fit: all mesh widths are equal")
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return RateFit(float(slope), float(intercept), resid)


def _sq_mass_norm(mass, d: np.ndarray) -> float:
    return math.fsum(d * (mass @ d))


def error_l2(fine_ops: FemOperators, coarse_state: StateVector, reference_state: StateVector) -> tuple[float, float]:
    """Exact L2 norms of ``u_i(coarse) - u_i(reference)`` on the reference mesh."""
    fine_level = fine_ops.mesh.level
    if reference_state.mesh_level != fine_level:
        raise ValueError("reference state does not live on the fine mesh")
    if coarse_state.mesh_level > fine_level:
        raise ValueError(f"coarse level {coarse_state.mesh_level} exceeds reference level {fine_level}")
    out = []
    for c, r in ((coarse_state.u1, reference_state.u1), (coarse_state.u2, reference_state.u2)):
        d = prolong(c, coarse_state.mesh_level, fine_level) - r
        out.append(math.sqrt(max(_sq_mass_norm(fine_ops.mass, d), 0.0)))
    return out[0], out[1]


def error_l2_spectral(ops: FemOperators, state: StateVector, field_: SpectralField) -> tuple[float, float]:
    """Exact L2 distance between a hat-space state and a modal field (Parseval)."""
    b = sine_load_matrix(ops.mesh, field_.n_modes)
    out = []
    for v, c in ((state.u1, field_.coeffs1), (state.u2, field_.coeffs2)):
        e2 = _sq_mass_norm(ops.mass, v) - 2.0 * math.fsum(c * (b @ v)) + math.fsum(c * c)
        out.append(math.sqrt(max(e2, 0.0)))
    return out[0], out[1]


def initial_state(config: ExperimentConfig, ops: FemOperators) -> StateVector:
    p1, p2 = INITIAL_PRESETS[config.initial]
    project = l2_project if config.projection == "l2" else ritz_project
    return StateVector(project(ops.mesh, p1, ops), project(ops.mesh, p2, ops), ops.mesh.level)


def _fits(records) -> tuple[RateFit, RateFit]:
    return (
        fit_rate([(r.h, r.error_u1) for r in records]),
        fit_rate([(r.h, r.error_u2) for r in records]),
    )


def run_deterministic_study(config: ExperimentConfig) -> ConvergenceReport:
    """Final-time errors of the homogeneous evolution of the preset initial data."""
    if config.noise is not None:
        raise ConfigError("deterministic study requires noise = off")
    scheme = config.scheme
    ref_level = config.reference_level
    if ref_level is None:
        p1, p2 = INITIAL_PRESETS[config.initial]
        exact = semigroup_apply(config.T, SpectralField.from_profiles(p1, p2, DEFAULT_MODES))
    else:
        ref_ops = FemOperators.build(ref_level)
        ref_state = evolve(ref_ops, scheme, initial_state(config, ref_ops))

    records = []
    for level in config.levels:
        ops = FemOperators.build(level)
        final = evolve(ops, scheme, initial_state(config, ops))
        if ref_level is None:
            e1, e2 = error_l2_spectral(ops, final, exact)
        else:
            e1, e2 = error_l2(ref_ops, final, ref_state)
        records.append(LevelRecord(level, ops.mesh.h, e1, e2))
        log.info("level %d: error_u1=%.6e error_u2=%.6e", level, e1, e2)
    fit1, fit2 = _fits(records)
    return ConvergenceReport("deterministic", records, fit1, fit2, config.to_dict(), None)


def noise_model_for(config: ExperimentConfig) -> NoiseModel:
    """Validated noise model of a stochastic study (``J`` resolved, HS condition checked)."""
    ns = config.noise
    if ns is None:
        raise ConfigError("stochastic study requires noise settings")
    ref_level = config.reference_level
    if ref_level is None:
        raise ConfigError("stochastic study requires reference = fine:<level>")
    if Mode.parse(config.mode) is not Mode.BACKWARD_EULER:
        raise ConfigError("stochastic study supports backward_euler mode only")
    specs = (CovarianceSpec(float(ns.s1), 1), CovarianceSpec(float(ns.s2), 2))
    if not ns.allow_divergent:
        for spec in specs:
            if not math.isinf(spec.s):
                hs_norm_squared(spec, ns.beta, 1)  # raises when divergent
    J = truncation_level(Mesh1D(ref_level), ns.J)
    scheme = config.scheme
    return NoiseModel(specs[0], specs[1], J, int(config.seed), scheme.dt, scheme.n_steps)


@dataclass(frozen=True)
class _LevelSetup:
    level: int
    load_matrix: np.ndarray
    z0: np.ndarray


def _setup(config: ExperimentConfig, model: NoiseModel) -> list[_LevelSetup]:
    out = []
    for level in list(config.levels) + [config.reference_level]:
        ops = FemOperators.build(level)
        out.append(_LevelSetup(level, sine_load_matrix(ops.mesh, model.J), initial_state(config, ops).as_complex()))
    return out


def _run_chunk(config: ExperimentConfig, model: NoiseModel, samples: range, audit: bool = False):
    """Squared errors ``(len(samples), n_levels, 2)`` for a contiguous range of samples."""
    setups = _setup(config, model)
    ref = setups[-1]
    ref_ops = FemOperators.build(ref.level)
    n_b = len(samples)
    blocks = [sample_increments(model, i) for i in samples]
    finals = []
    digests = []
    for st in setups:
        system = backward_euler_system(FemOperators.build(st.level), model.dt)
        loads = np.stack([noise_loads(st.load_matrix, model, b) for b in blocks], axis=-1)
        z0 = np.repeat(st.z0[:, None], n_b, axis=1)
        finals.append(system.march(z0, loads))
        if audit:
            digests.append([(b.sample_index, st.level, hashlib.sha256(b.data.tobytes()).hexdigest()) for b in blocks])
    out = np.empty((n_b, len(config.levels), 2))
    for li, st in enumerate(setups[:-1]):
        d = prolong(finals[li], st.level, ref.level) - finals[-1]
        for b in range(n_b):
            out[b, li, 0] = _sq_mass_norm(ref_ops.mass, np.ascontiguousarray(d[:, b].real))
            out[b, li, 1] = _sq_mass_norm(ref_ops.mass, np.ascontiguousarray(d[:, b].imag))
    return out, digests


def _chunk_task(args):
    config, model, start, stop, audit = args
    return _run_chunk(config, model, range(start, stop), audit)


def _mean_and_stderr(x: np.ndarray) -> tuple[float, float | None]:
    # shifted exact summation: order-insensitive and exact for constant data
    n = len(x)
    x0 = float(x[0])
    mean = x0 + math.fsum(x - x0) / n
    if n < 2:
        return mean, None
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def run_stochastic_study(config: ExperimentConfig, audit_log: list | None = None) -> ConvergenceReport:
    """Root-mean-square strong errors with coupled noise against a fine-mesh reference.

    Samples run in fixed chunks of ``CHUNK_SIZE``; ``config.workers`` only
    decides how many chunks run at once, so the report is identical for any
    worker count.  With ``audit_log`` a list, one
    ``(sample_index, level, sha256 of increments)`` entry per sample and
    level is appended to it.
    """
    model = noise_model_for(config)
    n = config.n_samples
    tasks = [(config, model, a, min(a + CHUNK_SIZE, n), audit_log is not None) for a in range(0, n, CHUNK_SIZE)]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_chunk_task, tasks))
    else:
        results = []
        for task in tasks:
            results.append(_chunk_task(task))
            log.info("samples %d-%d of %d done", task[2], task[3] - 1, n)
    sq = np.concatenate([r[0] for r in results], axis=0)
    if audit_log is not None:
        for _, digests in results:
            for per_level in digests:
                audit_log.extend(per_level)

    records = []
    for li, level in enumerate(config.levels):
        m1, s1 = _mean_and_stderr(sq[:, li, 0])
        m2, s2 = _mean_and_stderr(sq[:, li, 1])
        e1, e2 = math.sqrt(m1), math.sqrt(m2)
        # delta method: se(sqrt(m)) = se(m) / (2 sqrt(m))
        se1 = None if s1 is None or e1 == 0 else s1 / (2.0 * e1)
        se2 = None if s2 is None or e2 == 0 else s2 / (2.0 * e2)
        records.append(LevelRecord(level, Mesh1D(level).h, e1, e2, se1, se2, n))
        log.info("level %d: rms_u1=%.6e (+-%s) rms_u2=%.6e (+-%s)", level, e1, se1, e2, se2)
    fit1, fit2 = _fits(records)
    extra = {"truncation_J": model.J}
    return ConvergenceReport("stochastic", records, fit1, fit2, config.to_dict(), int(config.seed), extra)
