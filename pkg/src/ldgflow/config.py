"""Strict sectioned key-value configuration for experiment runs.

The file format is INI-style with five sections: [mesh], [model], [scheme],
[time], [output].  Parsing is strict: unknown sections or keys are errors,
all missing mandatory keys are reported together, and out-of-range values
are named with the constraint they violate.  Naming a preset under
[scheme] initial fills every unset key with that experiment's values, so a
two-line file is a complete run description.

Derived defaults: eta comes from the initial data's Frobenius sup norm,
C* from the closed-form bulk lower bound, and kappa from the minimal
stabilization constant rounded up to two significant figures.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass

from .harness import (
    PRESETS,
    AdaptiveSpec,
    ExperimentConfig,
    finalize_params,
    initial_tensor_field,
)
from .mesh import build_mesh
from .qtensor import ModelParams, frobenius_sup_norm, kappa_min
from .sesav import STEPPERS


class ConfigError(ValueError):
    """Malformed, unknown, missing, or out-of-range configuration input."""


class ConfigWarning(UserWarning):
    pass


_SCHEMA = {
    "mesh": {"dim": int, "M": int, "domain_length": float},
    "model": {"a": float, "b": float, "c": float, "L1": float, "L2": float,
              "L3": float, "kappa": float, "c_star": float, "eta": float},
    "scheme": {"name": str, "initial": str},
    "time": {"T": float, "tau": float, "adaptive": bool, "tau_min": float,
             "tau_max": float, "alpha": float},
    "output": {"every": int, "format": str},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class _RawConfig:
    values: dict[tuple[str, str], str]
    text: str

    def get(self, section: str, key: str) -> str | None:
        return self.values.get((section, key))

    def line_of(self, section: str, key: str) -> int | None:
        in_section = False
        for lineno, line in enumerate(self.text.splitlines(), start=1):
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                in_section = stripped[1:-1].strip() == section
            elif in_section:
                name = stripped.split("=", 1)[0].split(":", 1)[0].strip()
                if name == key:
                    return lineno
        return None


def _read_raw(text: str) -> _RawConfig:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    # keep keys case-sensitive (M vs m, L1 etc.)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    problems = []
    values: dict[tuple[str, str], str] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                problems.append(f"unknown key {section}.{key}")
            else:
                values[(section, key)] = value
    if problems:
        raise ConfigError("; ".join(problems))
    return _RawConfig(values=values, text=text)


def _convert(raw: _RawConfig, section: str, key: str):
    value = raw.get(section, key)
    if value is None:
        return None
    kind = _SCHEMA[section][key]
    if kind is str:
        return value.strip()
    if kind is bool:
        lowered = value.strip().lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        line = raw.line_of(section, key)
        raise ConfigError(f"line {line}: {section}.{key}: "
                          f"expected a boolean, got {value!r}")
    try:
        return kind(value.strip())
    except ValueError:
        line = raw.line_of(section, key)
        raise ConfigError(
            f"line {line}: {section}.{key}: malformed number {value!r}"
        ) from None


def apply_overrides(raw: _RawConfig, overrides: list[str]) -> None:
    """Apply command-line 'section.key=value' pairs onto the raw values."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"override names unknown key {section}.{key}")
        raw.values[(section, key)] = value


def _round_up_2sig(x: float) -> float:
    if x <= 0.0:
        return 0.0
    exponent = math.floor(math.log10(x))
    scale = 10.0 ** (exponent - 1)
    return math.ceil(x / scale - 1e-9) * scale


def parse_config(text: str, overrides: list[str] | None = None) -> ExperimentConfig:
    """Validate the config text and materialize a full ExperimentConfig."""
    raw = _read_raw(text)
    if overrides:
        apply_overrides(raw, overrides)

    def get(section, key):
        return _convert(raw, section, key)

    initial = get("scheme", "initial")
    preset = PRESETS.get(initial) if initial else None

    def fallback(section, key, preset_value, default=None):
        value = get(section, key)
        if value is not None:
            return value
        if preset is not None and preset_value is not None:
            return preset_value
        return default

    missing = []

    def require(section, key, preset_value=None):
        value = fallback(section, key, preset_value)
        if value is None:
            missing.append(f"{section}.{key}")
        return value

    if initial is None and preset is None:
        missing.append("scheme.initial")

    dim = require("mesh", "dim", preset.dim if preset else None)
    M = require("mesh", "M", preset.M if preset else None)
    length = require("mesh", "domain_length",
                     preset.domain_length if preset else None)
    a = require("model", "a", preset.a if preset else None)
    c = require("model", "c", preset.c if preset else None)
    L1 = require("model", "L1", preset.L1 if preset else None)
    scheme = require("scheme", "name", preset.scheme if preset else None)
    T = require("time", "T", preset.T if preset else None)

    b = fallback("model", "b", preset.b if preset else None, 0.0)
    L2 = fallback("model", "L2", preset.L2 if preset else None, 0.0)
    L3 = fallback("model", "L3", preset.L3 if preset else None, 0.0)

    adaptive_flag = get("time", "adaptive")
    tau = get("time", "tau")
    adaptive = None
    if adaptive_flag:
        if tau is not None:
            raise ConfigError("time.tau and time.adaptive=true are mutually exclusive")
        tau_min = require("time", "tau_min",
                          preset.adaptive.tau_min if preset and preset.adaptive else None)
        tau_max = require("time", "tau_max",
                          preset.adaptive.tau_max if preset and preset.adaptive else None)
        alpha = require("time", "alpha",
                        preset.adaptive.alpha if preset and preset.adaptive else None)
        if not missing:
            adaptive = AdaptiveSpec(tau_min=tau_min, tau_max=tau_max, alpha=alpha)
    elif tau is None:
        if preset is not None and preset.tau is not None:
            tau = preset.tau
        elif preset is not None and preset.adaptive is not None:
            adaptive = preset.adaptive
        else:
            missing.append("time.tau (or time.adaptive)")

    if missing:
        raise ConfigError("missing mandatory keys: " + ", ".join(missing))

    problems = []
    if dim not in (2, 3):
        problems.append("mesh.dim: must be 2 or 3")
    if M < 4:
        problems.append("mesh.M: must be at least 4")
    if length <= 0:
        problems.append("mesh.domain_length: must be > 0")
    if c <= 0:
        problems.append("model.c: must be > 0")
    if b < 0:
        problems.append("model.b: must be >= 0")
    if L1 <= 0:
        problems.append("model.L1: must be > 0")
    if T <= 0:
        problems.append("time.T: must be > 0")
    if tau is not None and tau <= 0:
        problems.append("time.tau: must be > 0")
    if scheme not in STEPPERS:
        problems.append(f"scheme.name: must be one of {sorted(STEPPERS)}")
    every = fallback("output", "every", None, 0)
    if every < 0:
        problems.append("output.every: must be >= 0")
    out_format = fallback("output", "format", None, "vtk")
    if out_format not in ("vtk", "csv"):
        problems.append("output.format: must be 'vtk' or 'csv'")
    if problems:
        raise ConfigError("; ".join(problems))

    mesh = build_mesh(dim, M, length)
    base = ModelParams(a=a, b=b, c=c, L1=L1, L2=L2, L3=L3, kappa=0.0)
    try:
        Q0 = initial_tensor_field(initial, mesh)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    q0_sup = frobenius_sup_norm(Q0)

    eta = get("model", "eta")
    c_star = get("model", "c_star")
    if c_star is None and preset is not None:
        c_star = preset.c_star  # may still be None -> computed bound
    params = finalize_params(base, mesh, q0_sup, c_star=c_star, eta=eta)

    kappa = get("model", "kappa")
    k_min = kappa_min(params, params.eta) if params.eta > 0 else 0.0
    if kappa is None:
        kappa = preset.kappa if preset is not None else _round_up_2sig(k_min)
    if kappa < 0:
        raise ConfigError("model.kappa: must be >= 0")
    if scheme.startswith("mbp_") and kappa < k_min:
        warnings.warn(
            f"kappa = {kappa:g} is below the maximum-principle threshold "
            f"{k_min:g}; energy decay still holds but the Frobenius bound "
            "is not guaranteed",
            ConfigWarning,
            stacklevel=2,
        )
    params = params.with_(kappa=kappa)

    try:
        return ExperimentConfig(
            dim=dim, M=M, domain_length=length, params=params, scheme=scheme,
            T=T, tau=tau, adaptive=adaptive, initial=initial,
            snapshot_every=every, out_format=out_format,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
