"""Run configuration shared by the CLI and the batch runner.

Values are resolved in order: command-line flags, then a JSON config file,
then the built-in defaults below.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

from .detect import DetectConfig
from .prox import PriorKind, PriorSpec
from .solver import SolverConfig

__all__ = ["RunConfig", "DEFAULT_LAMBDA", "load_config_file", "seed_from_env"]

# Regularization scale per prior for standardized M=128 tiles, chosen by
# held-out accuracy on a synthetic suite seed that no test uses.
DEFAULT_LAMBDA = {
    PriorKind.GMC: 120.0,
    PriorKind.L1: 120.0,
    PriorKind.LP: 80.0,
    PriorKind.TV: 40.0,
    PriorKind.NUCLEAR: 120.0,
}

SEED_ENV = "WAKESCAN_SEED"


def seed_from_env(default: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{SEED_ENV}={raw!r} is not an integer") from exc


@dataclass(frozen=True)
class RunConfig:
    prior: str = "gmc"
    lam: float | None = None
    p: float | None = None
    gamma: float | None = None
    mu: float = 1.0
    alpha: float = 1.96
    tol: float = 1e-3
    max_iter: int = 1000
    A: float | None = None
    tn_window: float = 4.0
    tn_min_sep: float = 1.0
    kelvin_window: float = 10.0
    kelvin_offset: float = 10.0
    f_margin: float = 0.1
    turbulent_margin: float = 0.0
    mask_radius: float = 8.0
    halfline_cone: float = 45.0
    n_angles: int = 180
    seed: int = 0

    def __post_init__(self):
        # build both derived configs once so bad values fail at parse time
        self.prior_spec()
        self.solver_config()
        self.detect_config()
        if self.n_angles < 1:
            raise ValueError("n_angles must be positive")

    def prior_spec(self) -> PriorSpec:
        kind = PriorKind(self.prior)
        lam = DEFAULT_LAMBDA[kind] if self.lam is None else self.lam
        p = self.p
        if kind is PriorKind.LP and p is None:
            p = 0.5
        if kind is not PriorKind.LP:
            p = None
        gamma = self.gamma if kind is PriorKind.GMC else None
        return PriorSpec(kind, lam, p=p, gamma=gamma)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.prior_spec(), self.mu, self.alpha, self.tol, self.max_iter)

    def detect_config(self) -> DetectConfig:
        return DetectConfig(
            A=self.A,
            tn_window=self.tn_window,
            tn_min_sep=self.tn_min_sep,
            kelvin_window=self.kelvin_window,
            kelvin_offset=self.kelvin_offset,
            f_margin=self.f_margin,
            turbulent_margin=self.turbulent_margin,
            mask_radius=self.mask_radius,
            halfline_cone=self.halfline_cone,
        )

    def snapshot(self) -> dict:
        d = asdict(self)
        spec = self.prior_spec()
        d["lam"] = spec.lam
        d["p"] = spec.p
        d["gamma"] = spec.gamma
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def merged(cls, file_values: dict | None = None, flag_values: dict | None = None) -> "RunConfig":
        """Defaults, overridden by ``file_values``, overridden by non-``None`` flags."""
        names = set(cls.field_names())
        values = {}
        for src in (file_values or {}, {k: v for k, v in (flag_values or {}).items() if v is not None}):
            unknown = set(src) - names
            if unknown:
                raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
            values.update(src)
        # switching prior in a flag drops prior-specific settings from the file
        flags = flag_values or {}
        if flags.get("prior") is not None and file_values and file_values.get("prior") != flags["prior"]:
            for key in ("lam", "p", "gamma"):
                if flags.get(key) is None:
                    values.pop(key, None)
        return cls(**values)


def load_config_file(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data
