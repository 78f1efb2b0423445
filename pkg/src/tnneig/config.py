"""Run configuration: presets, config files, CLI overrides.

A run is described by a preset (problem + desk-scale training defaults),
optionally patched by a JSON config file and then by CLI flags.  The
schema (version 1) accepts the keys of RunConfig plus a "quadrature"
object whose preset-specific knobs are listed in PRESETS below.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import forms, tnn
from .errors import ConfigError

CONFIG_VERSION = 1

# coefficients of the coupled-oscillator benchmarks, rounded values used as exact
COUPLED_2D_MATRIX = np.array([
    [0.8851, -0.1382],
    [-0.1382, 1.1933],
])

COUPLED_5D_MATRIX = np.array([
    [1.05886042, 0.01365034, 0.09163945, 0.11975290, 0.05625013],
    [0.01365034, 1.09613742, 0.10887930, 0.07448974, 0.07407652],
    [0.09163945, 0.10887930, 1.00935913, 0.05588543, 0.08968956],
    [0.11975290, 0.07448974, 0.05588543, 1.17627129, 0.06049045],
    [0.05625013, 0.07407652, 0.08968956, 0.06049045, 0.94969417],
])

PRESETS = {
    "ho2d": dict(k=16, p=10, depth=3, width=20, adam_lr=1e-3,
                 adam_steps=20000, lbfgs_steps=500,
                 quadrature={"hermite_n": 40}),
    "ho2d-coupled": dict(k=16, p=10, depth=3, width=20, adam_lr=1e-3,
                         adam_steps=20000, lbfgs_steps=500,
                         quadrature={"hermite_n": 40}),
    "ho5d-coupled": dict(k=4, p=20, depth=3, width=40, adam_lr=1e-3,
                         adam_steps=10000, lbfgs_steps=0,
                         quadrature={"hermite_n": 40}),
    "hydrogen": dict(k=1, p=20, depth=3, width=50, adam_lr=3e-4,
                     adam_steps=20000, lbfgs_steps=0,
                     quadrature={"laguerre_n": 99, "theta_m": 64, "theta_n": 16,
                                 "phi_m": 128, "phi_n": 16}),
    "box-laplace": dict(k=4, p=10, depth=3, width=20, adam_lr=1e-3,
                        adam_steps=3000, lbfgs_steps=100,
                        quadrature={"m_sub": 8, "n_quad": 16}),
}


@dataclass
class RunConfig:
    preset: str = "ho2d"
    k: int = 16
    p: int = 10
    depth: int = 3
    width: int = 20
    activation: str = "sin"
    adam_lr: float = 1e-3
    adam_steps: int = 20000
    lbfgs_steps: int = 500
    seed: int = 0
    out: str = "results"
    checkpoint_interval: int = 0      # 0: final checkpoint only
    beta_init: float = 1.0
    resume: str | None = None
    quadrature: dict = field(default_factory=dict)
    log_interval: int = 1             # record loss every this many steps

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.k < 1 or self.p < 1:
            raise ConfigError("k and p must be >= 1")
        if self.depth < 0 or (self.depth > 0 and self.width < 1):
            raise ConfigError("depth must be >= 0 and width >= 1 for deep nets")
        if self.adam_steps < 0 or self.lbfgs_steps < 0:
            raise ConfigError("step counts must be >= 0")
        if self.adam_lr <= 0:
            raise ConfigError("adam_lr must be positive")
        if self.beta_init <= 0:
            raise ConfigError("beta_init must be positive")
        if self.activation not in ("sin", "tanh"):
            raise ConfigError("activation must be 'sin' or 'tanh'")
        if self.log_interval < 1 or self.checkpoint_interval < 0:
            raise ConfigError("bad logging/checkpoint interval")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def default_config(preset: str) -> RunConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[preset]
    cfg = RunConfig(preset=preset)
    for key, value in base.items():
        setattr(cfg, key, dict(value) if isinstance(value, dict) else value)
    return cfg


def load_config(path: str | None = None, preset: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Merge preset defaults, an optional JSON file, and CLI overrides."""
    data = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r}")
    chosen = preset or data.get("preset") or "ho2d"
    cfg = default_config(chosen)
    merged_quad = dict(cfg.quadrature)
    for source in (data, overrides or {}):
        for key, value in source.items():
            if value is None or key == "preset":
                continue
            if key == "quadrature":
                if not isinstance(value, dict):
                    raise ConfigError("'quadrature' must be an object")
                merged_quad.update(value)
                continue
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    cfg.quadrature = merged_quad
    return cfg.validate()


def build_problem(cfg: RunConfig):
    """(dimension specs, problem forms) for the configured preset."""
    quad = cfg.quadrature
    if cfg.preset in ("ho2d", "ho2d-coupled", "ho5d-coupled"):
        n = int(quad.get("hermite_n", 40))
        if cfg.preset == "ho2d":
            matrix = np.eye(2)
        elif cfg.preset == "ho2d-coupled":
            matrix = COUPLED_2D_MATRIX
        else:
            matrix = COUPLED_5D_MATRIX
        d = matrix.shape[0]
        specs = [tnn.whole_line(n) for _ in range(d)]
        return specs, forms.harmonic_oscillator(matrix)
    if cfg.preset == "hydrogen":
        specs = [
            tnn.half_line(int(quad.get("laguerre_n", 99))),
            tnn.bounded_natural(0.0, np.pi, int(quad.get("theta_m", 64)),
                                int(quad.get("theta_n", 16))),
            tnn.periodic_angle(2.0 * np.pi, int(quad.get("phi_m", 128)),
                               int(quad.get("phi_n", 16))),
        ]
        return specs, forms.hydrogen_spherical()
    if cfg.preset == "box-laplace":
        m_sub = int(quad.get("m_sub", 8))
        n_quad = int(quad.get("n_quad", 16))
        specs = [tnn.bounded_dirichlet(0.0, 1.0, m_sub, n_quad) for _ in range(2)]
        return specs, forms.laplace_plus_potential(2, 1.0, [])
    raise ConfigError(f"unknown preset {cfg.preset!r}")


def oscillator_matrix(preset: str) -> np.ndarray | None:
    return {"ho2d": np.eye(2), "ho2d-coupled": COUPLED_2D_MATRIX,
            "ho5d-coupled": COUPLED_5D_MATRIX}.get(preset)
