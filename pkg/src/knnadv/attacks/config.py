"""Attack configuration, loadable from a plain key=value text file."""

from dataclasses import dataclass, replace, fields

import numpy as np


@dataclass(frozen=True)
class AttackConfig:
    norm: str = "l2"                 # "l2" or "linf"
    eps: float = 0.0                 # l2 default: eps=0 with c_init=1
    c_init: float = 1.0
    alpha: float = 4.0               # sigmoid steepness
    m: int | None = None             # candidate-set size; None -> model k
    max_iterations: int = 400
    check_iterations: tuple = (320, 360, 400)
    binary_search_steps: int = 5
    learning_rate: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.norm not in ("l2", "linf"):
            raise ValueError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.c_init <= 0 or self.alpha <= 0:
            raise ValueError("c_init and alpha must be positive")
        checks = tuple(sorted(int(t) for t in self.check_iterations))
        if checks and not (1 <= checks[0] and checks[-1] <= self.max_iterations):
            raise ValueError("check_iterations must lie in [1, max_iterations]")
        object.__setattr__(self, "check_iterations", checks)

    def with_overrides(self, **kw) -> "AttackConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


_PARSERS = {
    "norm": str,
    "eps": float,
    "c_init": float,
    "alpha": float,
    "m": int,
    "max_iterations": int,
    "check_iterations": lambda s: tuple(int(t) for t in s.replace(",", " ").split()),
    "binary_search_steps": int,
    "learning_rate": float,
    "seed": int,
}


def load_config(path) -> AttackConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys are errors."""
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _PARSERS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _PARSERS[key](raw)
    return AttackConfig(**values)


def save_config(cfg: AttackConfig, path) -> None:
    with open(path, "w") as f:
        for fld in fields(cfg):
            value = getattr(cfg, fld.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = " ".join(str(v) for v in value)
            f.write(f"{fld.name} = {value}\n")
