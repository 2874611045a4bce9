"""
Line-oriented experiment configuration.

One ``key = value`` per line, ``#`` starts a comment. Geometry is written as
a kind followed by named fields, e.g.::

    experiment = CapVsPerimeter
    delta = 0.5
    spacing = 0.05
    domain = box lo=-1,-1 hi=1,1
    shape.disk = ball center=0,0 radius=0.5
    shape.flake = koch level=3 anchor=0,0 scale=0.5
    kernel.k = 4
    kernel.m = 3
    kernel.R = inf

Shapes keep the order in which they appear.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

from .grid import Annulus, Ball, Box, KochPrefractal, Shape
from .kernel import KernelParams


class Experiment(enum.Enum):
    PERIMETER = "Perimeter"
    SEMINORM = "Seminorm"
    CAPACITY = "Capacity"
    COAREA_CHECK = "CoareaCheck"
    CAP_VS_PERIMETER = "CapVsPerimeter"
    ISOPERIMETRIC_SCAN = "IsoperimetricScan"
    MOLLIFY_SCAN = "MollifyScan"
    EQUIVALENCE_CHECK = "EquivalenceCheck"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    delta: float
    spacing: float
    domain: Shape
    shapes: dict[str, Shape] = field(default_factory=dict)
    q: float | None = None
    margin: float = 0.0
    kernel: KernelParams | None = None
    output: str = "report.csv"
    seed: int = 0
    zero_width: int = 1
    random_fields: int = 4
    mollify_j: tuple[int, ...] = (4, 8, 16, 32)
    scales: tuple[float, ...] = (1.0, 2.0)
    source_lines: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kernel is None:
            object.__setattr__(self, "kernel", KernelParams(self.delta))
        if self.kernel.delta != self.delta:
            raise ConfigError("kernel delta differs from experiment delta")
        if self.q is None:
            n = self.dim
            object.__setattr__(self, "q", n / (n - self.delta))
        if self.q < 1:
            raise ConfigError(f"q must be >= 1, got {self.q}")
        if self.spacing <= 0:
            raise ConfigError("spacing must be positive")
        for sid, s in self.shapes.items():
            if s.dim != self.dim:
                raise ConfigError(f"shape {sid} has dimension {s.dim}, domain has {self.dim}")

    @property
    def dim(self) -> int:
        return self.domain.dim


def _vector(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


_SHAPE_FIELDS = {
    "ball": (Ball, {"center": _vector, "radius": float}),
    "box": (Box, {"lo": _vector, "hi": _vector}),
    "annulus": (Annulus, {"center": _vector, "r_in": float, "r_out": float}),
    "koch": (KochPrefractal, {"level": int, "anchor": _vector, "scale": float}),
}


def parse_shape(text: str) -> Shape:
    kind, *parts = text.split()
    if kind not in _SHAPE_FIELDS:
        raise ConfigError(f"unknown shape kind {kind!r} (expected one of {sorted(_SHAPE_FIELDS)})")
    cls, fields = _SHAPE_FIELDS[kind]
    kwargs = {}
    for part in parts:
        name, eq, raw = part.partition("=")
        if not eq or name not in fields:
            raise ConfigError(f"bad field {part!r} for {kind}; expected {sorted(fields)}")
        try:
            kwargs[name] = fields[name](raw)
        except ValueError as exc:
            raise ConfigError(f"{kind}.{name}: {exc}") from None
    missing = set(fields) - set(kwargs)
    if kind == "koch":
        missing -= {"anchor", "scale"}
    if missing:
        raise ConfigError(f"{kind} is missing {sorted(missing)}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{kind}: {exc}") from None


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


_SCALARS = {
    "delta": float, "q": float, "spacing": float, "margin": float, "seed": int,
    "output": str, "zero_width": int, "random_fields": int,
    "mollify.j": _ints, "scales": _floats,
}
_KERNEL = {"kernel.k": ("near_field_radius_cells", int),
           "kernel.m": ("subdivision_depth", int),
           "kernel.R": ("truncation_radius", float)}


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    kernel: dict = {}
    shapes: dict[str, Shape] = {}
    echo = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        echo.append(line)
        key, eq, value = (s.strip() for s in line.partition("="))
        if not eq or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        try:
            if key == "experiment":
                values["experiment"] = Experiment(value)
            elif key == "domain":
                values["domain"] = parse_shape(value)
            elif key.startswith("shape."):
                sid = key[len("shape."):]
                if not sid or sid in shapes:
                    raise ConfigError(f"duplicate or empty shape id {sid!r}")
                shapes[sid] = parse_shape(value)
            elif key in _KERNEL:
                name, conv = _KERNEL[key]
                kernel[name] = conv(value)
            elif key in _SCALARS:
                values[key.replace(".", "_")] = _SCALARS[key](value)
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    for req in ("experiment", "delta", "spacing", "domain"):
        if req not in values:
            raise ConfigError(f"missing required key {req!r}")
    try:
        kp = KernelParams(values["delta"], **kernel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if math.isnan(values.get("q", 1.0)):
        raise ConfigError("q is NaN")
    return ExperimentConfig(kernel=kp, shapes=shapes, source_lines=tuple(echo), **values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
