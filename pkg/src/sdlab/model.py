"""Problem parameters, uniform grid, solution fields, and initial-data presets.

The model problem lives on the unit interval with a no-flux wall at x = 0 and
a nonlinear outflow condition at x = 1.  All value types here are immutable
after construction and safe to share between parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import BoundViolation, EmptyMass, RangeViolation

__all__ = [
    "ProblemParams",
    "Grid",
    "Field",
    "InitialSpec",
    "validate_params",
    "make_initial",
    "mass",
]

# Admissible ranges, checked in this fixed order; the first failure wins.
_CONSTRAINTS = (
    ("m", "-1 < m < 0", lambda r: -1.0 < r["m"] < 0.0),
    ("p", "0 < p < 1", lambda r: 0.0 < r["p"] < 1.0),
    ("alpha", "alpha > 2 - m", lambda r: r["alpha"] > 2.0 - r["m"]),
    ("M", "M > 0", lambda r: r["M"] > 0.0),
    ("T", "T > 0", lambda r: r["T"] > 0.0),
)

_PARAM_FIELDS = ("m", "p", "alpha", "M", "T")


@dataclass(frozen=True)
class ProblemParams:
    """Validated model exponents and bounds.

    m     : diffusion exponent in (-1, 0); diffusivity u^(m-1) blows up as u -> 0
    p     : source exponent in (0, 1)
    alpha : outflow exponent, alpha > 2 - m
    M     : upper bound of the initial data, M > 0
    T     : time horizon, T > 0
    """

    m: float
    p: float
    alpha: float
    M: float
    T: float

    def __post_init__(self):
        raw = {k: float(getattr(self, k)) for k in _PARAM_FIELDS}
        for field_name, constraint, ok in _CONSTRAINTS:
            value = raw[field_name]
            if not np.isfinite(value) or not ok(raw):
                raise RangeViolation(field_name, constraint)
        for k, v in raw.items():
            object.__setattr__(self, k, v)

    def with_horizon(self, T: float) -> "ProblemParams":
        return replace(self, T=T)


def validate_params(raw: Mapping[str, float]) -> ProblemParams:
    """Build ProblemParams from a mapping, rejecting the first violated range.

    Raises RangeViolation naming the offending field and its constraint; a
    missing key is reported the same way.
    """
    values = {}
    for field_name, constraint, _ in _CONSTRAINTS:
        if field_name not in raw:
            raise RangeViolation(field_name, f"missing (required: {constraint})")
        values[field_name] = float(raw[field_name])
    return ProblemParams(**values)


@dataclass(frozen=True)
class Grid:
    """Uniform nodes x_i = i*dx covering [0, 1], endpoints included."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs at least 3 nodes, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dx(self) -> float:
        return 1.0 / (self.n - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n)
        x.setflags(write=False)
        return x

    def refine(self) -> "Grid":
        """Nested refinement: every node of this grid is a node of the result."""
        return Grid(2 * self.n - 1)


@dataclass(frozen=True, eq=False)
class Field:
    """Nonnegative solution samples on a grid at one instant."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"field has {vals.size} samples for a grid of {self.grid.n} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite samples")
        if vals.min() < 0.0:
            raise ValueError("field contains negative samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values: np.ndarray, time: float | None = None) -> "Field":
        return Field(self.grid, values, self.time if time is None else time)


def mass(f: Field) -> float:
    """Trapezoid approximation of the integral of f over [0, 1].

    Exact for piecewise-linear data on the grid nodes; linear and monotone
    in the samples.
    """
    return float(np.trapezoid(f.values, dx=f.grid.dx))


@dataclass(frozen=True)
class InitialSpec:
    """Initial-data preset.

    kind is one of "constant", "bump", "plateau", "table"; the remaining
    fields are interpreted per kind.  With clip=True samples are capped at M,
    otherwise a sample above M is an error.
    """

    kind: str
    c: float | None = None
    center: float | None = None
    width: float | None = None
    height: float | None = None
    a: float | None = None
    b: float | None = None
    samples: tuple[float, ...] | None = None
    clip: bool = False

    @staticmethod
    def constant(c: float, clip: bool = False) -> "InitialSpec":
        return InitialSpec(kind="constant", c=c, clip=clip)

    @staticmethod
    def bump(center: float, width: float, height: float, clip: bool = False) -> "InitialSpec":
        return InitialSpec(kind="bump", center=center, width=width, height=height, clip=clip)

    @staticmethod
    def plateau(a: float, b: float, height: float, clip: bool = False) -> "InitialSpec":
        return InitialSpec(kind="plateau", a=a, b=b, height=height, clip=clip)

    @staticmethod
    def table(samples: Sequence[float], clip: bool = False) -> "InitialSpec":
        return InitialSpec(kind="table", samples=tuple(float(s) for s in samples), clip=clip)

    def sample(self, grid: Grid) -> np.ndarray:
        x = grid.nodes
        if self.kind == "constant":
            return np.full(grid.n, float(self.c))
        if self.kind == "bump":
            # classic smooth bump, peak value `height` at the center
            s = (x - self.center) / self.width
            vals = np.zeros(grid.n)
            inside = np.abs(s) < 1.0
            vals[inside] = self.height * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
            return vals
        if self.kind == "plateau":
            return np.where((x >= self.a) & (x <= self.b), float(self.height), 0.0)
        if self.kind == "table":
            ys = np.asarray(self.samples, dtype=float)
            xs = np.linspace(0.0, 1.0, ys.size)
            return np.interp(x, xs, ys)
        raise ValueError(f"unknown initial kind {self.kind!r}")


def make_initial(spec: InitialSpec, grid: Grid, params: ProblemParams) -> Field:
    """Sample an initial preset onto the grid and enforce 0 <= u0 <= M, mass > 0."""
    vals = spec.sample(grid)
    if vals.min() < 0.0:
        raise BoundViolation("initial data has a negative sample")
    if spec.clip:
        vals = np.minimum(vals, params.M)
    elif vals.max() > params.M:
        raise BoundViolation(
            f"initial sample {vals.max():.6g} exceeds M={params.M:.6g} and clipping is disabled"
        )
    f = Field(grid, vals, 0.0)
    if mass(f) <= 0.0:
        raise EmptyMass("initial data has zero mass")
    return f
