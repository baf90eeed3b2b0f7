"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys are rejected. See ``SCHEMA`` for the recognised keys and their
defaults.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from gksm.solver import ConfigError, SolverConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _str(text: str) -> str:
    return text.strip()


def _optional_int(text: str):
    t = text.strip().lower()
    return None if t in ("", "none", "max_iter") else int(t)


# key: (parser, default)
SCHEMA = {
    "problem.height": (_int, 64),
    "problem.width": (_int, 64),
    "problem.operator": (_str, "masked_fourier"),
    "problem.phantom": (_str, "shepp_logan"),
    "problem.mask": (_str, "cartesian_vd"),
    "problem.acceleration": (_float, 4.0),
    "problem.num_coils": (_int, 4),
    "problem.noise_snr_db": (_float, 21.0),
    "problem.blur_sigma": (_float, 1.0),
    "problem.seed": (_int, 0),
    "regularizer.kind": (_str, "tikhonov"),
    "regularizer.lambda": (_float, 0.05),
    "regularizer.mu": (_float, 0.01),
    "regularizer.eps": (_float, 0.01),
    "regularizer.sigma": (_float, 1.0),
    "metric.delta": (_float, 1e-8),
    "metric.nu1": (_float, 2e-6),
    "metric.nu2": (_float, 200.0),
    "solver.mode": (_str, "gksm"),
    "solver.alpha": (_float, 1.0),
    "solver.K": (_optional_int, None),
    "solver.max_iter": (_int, 150),
    "solver.constrained": (_bool, False),
    "solver.inner_tol": (_float, 1e-8),
    "solver.inner_max_iter": (_int, 500),
    "solver.restart_period": (_int, 0),
    "output.log_path": (_str, "iterations.csv"),
    "output.image_path": (_str, "recon.cimg"),
    "output.summary_path": (_str, "summary.json"),
    "output.fstar_protocol": (_bool, True),
    "diagnostics.fstar_iters": (_int, 500),
    "diagnostics.fstar_eps": (_float, math.nan),
}

OPERATORS = ("masked_fourier", "convolution", "dense")
PHANTOMS = ("shepp_logan", "smooth_bumps")
MASKS = ("cartesian_vd", "pseudo_radial", "full")
REGULARIZERS = ("tikhonov", "huber_tv", "log_smooth", "denoiser_driven")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    name: str = "experiment"

    def __post_init__(self):
        merged = {k: default for k, (_, default) in SCHEMA.items()}
        merged.update(self.values)
        self.values = merged
        self.validate()

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_text(cls, text: str, name: str = "experiment", overrides=None) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", "expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            values[key] = _parse(key, value)
        for item in overrides or ():
            key, value = (p.strip() for p in item.split("=", 1))
            values[key] = _parse(key, value)
        return cls(values, name)

    @classmethod
    def from_file(cls, path, overrides=None) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            bundled = bundled_config_path(str(path))
            if bundled is None:
                raise ConfigError("config", f"no such file or bundled config: {path}")
            path = bundled
        return cls.from_text(path.read_text(), path.stem, overrides)

    def validate(self):
        v = self.values
        for key in ("problem.height", "problem.width"):
            if v[key] < 1:
                raise ConfigError(key, "must be positive")
        _choice(v, "problem.operator", OPERATORS)
        _choice(v, "problem.phantom", PHANTOMS)
        _choice(v, "problem.mask", MASKS)
        _choice(v, "regularizer.kind", REGULARIZERS)
        if v["problem.num_coils"] < 1:
            raise ConfigError("problem.num_coils", "must be >= 1")
        if not v["problem.acceleration"] >= 1:
            raise ConfigError("problem.acceleration", "must be >= 1")
        if math.isnan(v["problem.noise_snr_db"]) or v["problem.noise_snr_db"] == -math.inf:
            raise ConfigError("problem.noise_snr_db", "must be a number or inf")
        for key in ("regularizer.lambda", "regularizer.mu", "regularizer.eps", "regularizer.sigma"):
            if not v[key] > 0:
                raise ConfigError(key, "must be positive")
        if v["diagnostics.fstar_iters"] < 1:
            raise ConfigError("diagnostics.fstar_iters", "must be >= 1")
        self.solver_config()

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(
            alpha=v["solver.alpha"],
            K=v["solver.K"],
            max_iter=v["solver.max_iter"],
            mode=v["solver.mode"],
            constrained=v["solver.constrained"],
            inner_tol=v["solver.inner_tol"],
            inner_max_iter=v["solver.inner_max_iter"],
            restart_period=v["solver.restart_period"],
            seed=v["problem.seed"],
            delta=v["metric.delta"],
            nu1=v["metric.nu1"],
            nu2=v["metric.nu2"],
        )

    def with_overrides(self, **kv) -> "ExperimentConfig":
        """Copy with keys given as ``solver__mode="apg"`` style keyword arguments."""
        values = dict(self.values)
        values.update({k.replace("__", "."): val for k, val in kv.items()})
        return ExperimentConfig(values, self.name)

    def to_text(self) -> str:
        lines = []
        for key in SCHEMA:
            val = self.values[key]
            if isinstance(val, bool):
                val = "on" if val else "off"
            elif val is None:
                val = "max_iter"
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


def _parse(key, value):
    if key not in SCHEMA:
        raise ConfigError(key, "unknown key")
    parser = SCHEMA[key][0]
    try:
        return parser(value)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None


def _choice(values, key, allowed):
    if values[key] not in allowed:
        raise ConfigError(key, f"must be one of {', '.join(allowed)}")


def bundled_config_names() -> list[str]:
    root = resources.files("gksm.harness") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def bundled_config_path(name: str):
    name = name[:-4] if name.endswith(".cfg") else name
    path = resources.files("gksm.harness") / "configs" / f"{name}.cfg"
    return Path(str(path)) if path.is_file() else None


def load_bundled(name: str, overrides=None) -> ExperimentConfig:
    path = bundled_config_path(name)
    if path is None:
        raise ConfigError("config", f"no bundled config named {name!r}")
    return ExperimentConfig.from_text(path.read_text(), name, overrides)
