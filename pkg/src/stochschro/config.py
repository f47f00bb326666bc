"""Flat ``key = value`` experiment configuration files.

Lines are ``key = value``; ``#`` starts a comment.  Keys not listed in
:data:`KEYS` are rejected.  Values from later sources override earlier ones
(defaults < file < command-line overrides).
"""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

from .lab import ConfigError, ExperimentConfig, NoiseSettings


class ConfigParseError(ConfigError):
    """Malformed configuration text, unknown key, or unparsable value."""


KEYS = {
    "levels": "mesh levels, e.g. '2-6' or '2,3,4'",
    "reference": "'oracle' or 'fine:<level>'",
    "dt": "time step k",
    "T": "final time",
    "mode": "'be' (backward Euler) or 'exact' (exact semidiscrete)",
    "initial": "initial data preset ('paper')",
    "projection": "initial data projection, 'l2' or 'ritz'",
    "noise": "'on' or 'off'",
    "s": "sets both s1 and s2",
    "s1": "covariance exponent of W1 (Q1 = Lambda^-s1); 'inf' for zero noise",
    "s2": "covariance exponent of W2",
    "J": "KL truncation level, integer or 'auto' (N_h of the reference mesh)",
    "beta": "target spatial rate checked against beta < s - 1/2",
    "allow_divergent": "'true' to skip the Hilbert-Schmidt finiteness check",
    "samples": "Monte Carlo sample count",
    "seed": "integer seed",
    "workers": "worker processes (results do not depend on it)",
    "output_dir": "directory for report.json, table.csv, rate.svg, run.log",
}

DEFAULTS = {
    "levels": "2-6",
    "reference": "oracle",
    "dt": "0.01",
    "T": "1",
    "mode": "exact",
    "initial": "paper",
    "projection": "l2",
    "noise": "off",
    "s1": "2.501",
    "s2": "2.501",
    "J": "auto",
    "beta": "2",
    "allow_divergent": "false",
    "samples": "200",
    "workers": "1",
    "output_dir": "results",
}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        _check_key(key)
        out[key] = value
    return out


def parse_overrides(pairs) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigParseError(f"override must be key=value, got {pair!r}")
        key, value = (p.strip() for p in pair.split("=", 1))
        _check_key(key)
        out[key] = value
    return out


def _check_key(key: str) -> None:
    if key not in KEYS:
        raise ConfigParseError(f"unknown config key {key!r}; valid keys: {', '.join(sorted(KEYS))}")


def preset_names() -> list[str]:
    return sorted(p.name for p in resources.files("stochschro.presets").iterdir() if p.name.endswith(".cfg"))


def load_file(path: str) -> dict[str, str]:
    """Read a config file; bare preset names (``paper_fig2.cfg``) resolve to the shipped presets."""
    p = Path(path)
    if p.exists():
        return parse_text(p.read_text(), str(p))
    name = path if path.endswith(".cfg") else path + ".cfg"
    res = resources.files("stochschro.presets") / name
    if res.is_file():
        return parse_text(res.read_text(), name)
    raise ConfigParseError(f"config file {path!r} not found (shipped presets: {', '.join(preset_names())})")


def effective(*layers: dict[str, str]) -> dict[str, str]:
    merged = dict(DEFAULTS)
    for layer in layers:
        layer = dict(layer)
        # 's' expands within its own layer so later s1/s2 overrides still win
        if "s" in layer:
            s = layer.pop("s")
            layer = {"s1": s, "s2": s, **layer}
        merged.update(layer)
    return dict(sorted(merged.items()))


def parse_levels(text: str) -> tuple[int, ...]:
    text = text.strip()
    try:
        if "-" in text:
            a, b = text.split("-", 1)
            return tuple(range(int(a), int(b) + 1))
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise ConfigParseError(f"cannot parse levels {text!r}") from exc


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigParseError(f"{key}: expected a boolean, got {text!r}")


def _float(text: str, key: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise ConfigParseError(f"{key}: expected a number, got {text!r}") from exc
    if math.isnan(v):
        raise ConfigParseError(f"{key}: NaN is not allowed")
    return v


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigParseError(f"{key}: expected an integer, got {text!r}") from exc


def to_experiment(flat: dict[str, str]) -> ExperimentConfig:
    noise_on = _bool(flat["noise"], "noise")
    noise = None
    if noise_on:
        j = flat["J"].strip()
        noise = NoiseSettings(
            s1=_float(flat["s1"], "s1"),
            s2=_float(flat["s2"], "s2"),
            J=j if j == "auto" else _int(j, "J"),
            beta=_float(flat["beta"], "beta"),
            allow_divergent=_bool(flat["allow_divergent"], "allow_divergent"),
        )
    return ExperimentConfig(
        levels=parse_levels(flat["levels"]),
        reference=flat["reference"],
        dt=_float(flat["dt"], "dt"),
        T=_float(flat["T"], "T"),
        mode=flat["mode"],
        initial=flat["initial"],
        projection=flat["projection"],
        noise=noise,
        n_samples=_int(flat["samples"], "samples"),
        seed=_int(flat.get("seed", "0"), "seed"),
        workers=_int(flat["workers"], "workers"),
    )


# execution details that must not change report bytes
RUN_ONLY_KEYS = ("output_dir", "workers")


def report_echo(flat: dict[str, str]) -> dict[str, str]:
    return {k: v for k, v in flat.items() if k not in RUN_ONLY_KEYS}


def dump(flat: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(flat.items()))
