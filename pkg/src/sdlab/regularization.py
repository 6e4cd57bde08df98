"""Cutoff coefficients, mollified initial data, and the corridor schedule.

The singular power laws r^(m-1) and r^(m-2) are kept exactly on a corridor
[delta, m_bar] and replaced outside it by bounded, monotone, continuously
differentiable extensions.  As long as the solution stays inside the corridor
the regularized equation coincides with the original one; the corridor
schedule widens the corridor whenever the solution exits it.

The mollifier lifts merely nonnegative initial data to strictly positive,
smooth data compatible with the boundary closure, at an L1 cost that vanishes
with the width delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bounds
from .errors import DeltaOutOfRange, InvalidCorridor, NonpositiveData, ScheduleDiverged
from .model import Field, ProblemParams

__all__ = [
    "RegularizationSpec",
    "CutoffFn",
    "BreachInfo",
    "build_diffusion_cutoff",
    "build_gradient_cutoff",
    "mollify_initial",
    "corridor_schedule",
    "default_delta_schedule",
]

#: default geometric mollification schedule delta_k = 0.08 * 2^-k
DEFAULT_DELTA_INIT = 0.08

#: corridor lower edge below which a run is declared lost
SCHEDULE_FLOOR = 1e-10


def default_delta_schedule(k: int = 4, delta_init: float = DEFAULT_DELTA_INIT) -> list[float]:
    return [delta_init * 2.0**-i for i in range(k)]


@dataclass(frozen=True)
class RegularizationSpec:
    """Corridor edges plus cutoff-transition and mollifier settings."""

    delta: float
    m_bar: float
    transition_kind: str = "hermite"
    mollifier_width: float | None = None

    def __post_init__(self):
        if not (0.0 < self.delta < self.m_bar):
            raise InvalidCorridor(
                f"corridor needs 0 < delta < m_bar, got delta={self.delta:.6g}, m_bar={self.m_bar:.6g}"
            )


def _smoothstep(s: np.ndarray) -> np.ndarray:
    return s * s * (3.0 - 2.0 * s)


def _smoothstep_d(s: np.ndarray) -> np.ndarray:
    return 6.0 * s * (1.0 - s)


def _plateau_bump(r: np.ndarray) -> np.ndarray:
    """C1 plateau bump: 1 on |r| <= 1, 0 on |r| >= 2, monotone between."""
    a = np.clip(2.0 - np.abs(r), 0.0, 1.0)
    return _smoothstep(a)


def _plateau_bump_d(r: np.ndarray) -> np.ndarray:
    a = 2.0 - np.abs(r)
    inside = (a > 0.0) & (a < 1.0)
    out = np.zeros_like(np.asarray(r, dtype=float))
    out[inside] = -np.sign(np.asarray(r)[inside]) * _smoothstep_d(a[inside])
    return out


@dataclass(frozen=True, eq=False)
class CutoffFn:
    """Five-branch bounded replacement for the power law r^exponent.

    Branches (low to high): constant 2*delta^exponent below 0, a monotone C1
    bridge on [0, delta), the exact power law on [delta, m_bar], a monotone C1
    blend on (m_bar, 2*m_bar), and the constant (2*m_bar)^exponent / 2 beyond.
    With with_bump=True the negative branch is multiplied by a compactly
    supported plateau bump (used for the gradient-term coefficient, which may
    vanish below zero; the diffusion coefficient must not).
    """

    exponent: float
    delta: float
    m_bar: float
    with_bump: bool = False

    def __post_init__(self):
        if not (0.0 < self.delta < self.m_bar):
            raise InvalidCorridor(
                f"cutoff needs 0 < delta < m_bar, got delta={self.delta:.6g}, m_bar={self.m_bar:.6g}"
            )

    @property
    def breakpoints(self) -> tuple[float, float, float, float]:
        return (0.0, self.delta, self.m_bar, 2.0 * self.m_bar)

    @property
    def lower_value(self) -> float:
        return 2.0 * self.delta**self.exponent

    @property
    def upper_value(self) -> float:
        return 0.5 * (2.0 * self.m_bar) ** self.exponent

    # Hermite bridge on [0, delta]: value 2*d^e with zero slope at 0, value and
    # slope of the power law at delta.  Monotone for every exponent in (-3, 0).
    def _bridge(self, r: np.ndarray) -> np.ndarray:
        d, e = self.delta, self.exponent
        t = r / d
        y0, y1 = 2.0 * d**e, d**e
        d1 = e * d ** (e - 1.0)
        h00 = 2.0 * t**3 - 3.0 * t**2 + 1.0
        h01 = -2.0 * t**3 + 3.0 * t**2
        h11 = t**3 - t**2
        return y0 * h00 + y1 * h01 + d * d1 * h11

    def _bridge_d(self, r: np.ndarray) -> np.ndarray:
        d, e = self.delta, self.exponent
        t = r / d
        y0, y1 = 2.0 * d**e, d**e
        d1 = e * d ** (e - 1.0)
        dh00 = 6.0 * t**2 - 6.0 * t
        dh01 = -dh00
        dh11 = 3.0 * t**2 - 2.0 * t
        return (y0 * dh00 + y1 * dh01 + d * d1 * dh11) / d

    # Blend on [m_bar, 2*m_bar]: power law faded into the upper constant by a
    # smoothstep; matches value and slope at m_bar, flat at 2*m_bar, and is
    # decreasing because the power law stays above the constant on the segment.
    def _blend(self, r: np.ndarray) -> np.ndarray:
        s = (r - self.m_bar) / self.m_bar
        S = _smoothstep(s)
        return (1.0 - S) * r**self.exponent + S * self.upper_value

    def _blend_d(self, r: np.ndarray) -> np.ndarray:
        e = self.exponent
        s = (r - self.m_bar) / self.m_bar
        S = _smoothstep(s)
        dS = _smoothstep_d(s) / self.m_bar
        return (1.0 - S) * e * r ** (e - 1.0) + dS * (self.upper_value - r**e)

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        scalar = r_arr.ndim == 0
        r_arr = np.atleast_1d(r_arr)
        out = np.empty_like(r_arr)

        neg = r_arr <= 0.0
        low = (r_arr > 0.0) & (r_arr < self.delta)
        mid = (r_arr >= self.delta) & (r_arr <= self.m_bar)
        high = (r_arr > self.m_bar) & (r_arr < 2.0 * self.m_bar)
        top = r_arr >= 2.0 * self.m_bar

        if self.with_bump:
            out[neg] = self.lower_value * _plateau_bump(r_arr[neg])
        else:
            out[neg] = self.lower_value
        out[low] = self._bridge(r_arr[low])
        out[mid] = r_arr[mid] ** self.exponent
        out[high] = self._blend(r_arr[high])
        out[top] = self.upper_value
        return float(out[0]) if scalar else out

    def derivative(self, r):
        r_arr = np.asarray(r, dtype=float)
        scalar = r_arr.ndim == 0
        r_arr = np.atleast_1d(r_arr)
        out = np.zeros_like(r_arr)

        low = (r_arr > 0.0) & (r_arr < self.delta)
        mid = (r_arr >= self.delta) & (r_arr <= self.m_bar)
        high = (r_arr > self.m_bar) & (r_arr < 2.0 * self.m_bar)

        if self.with_bump:
            neg = r_arr <= 0.0
            out[neg] = self.lower_value * _plateau_bump_d(r_arr[neg])
        out[low] = self._bridge_d(r_arr[low])
        out[mid] = self.exponent * r_arr[mid] ** (self.exponent - 1.0)
        out[high] = self._blend_d(r_arr[high])
        return float(out[0]) if scalar else out

    def sample(self, rs) -> np.ndarray:
        return np.asarray(self(np.asarray(rs, dtype=float)))


def build_diffusion_cutoff(params: ProblemParams, spec: RegularizationSpec) -> CutoffFn:
    """Bounded replacement for the diffusivity r^(m-1); strictly positive everywhere."""
    return CutoffFn(exponent=params.m - 1.0, delta=spec.delta, m_bar=spec.m_bar)


def build_gradient_cutoff(params: ProblemParams, spec: RegularizationSpec) -> CutoffFn:
    """Bounded replacement for the gradient-term coefficient r^(m-2).

    The negative branch carries a compactly supported bump, so the
    coefficient vanishes for arguments below -2.
    """
    return CutoffFn(
        exponent=params.m - 2.0, delta=spec.delta, m_bar=spec.m_bar, with_bump=True
    )


def _kernel_profile(z: np.ndarray) -> np.ndarray:
    """Smooth averaging kernel profile supported on [-1, 1] (unnormalized)."""
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


def mollify_initial(u0: Field, params: ProblemParams, delta: float) -> Field:
    """Strictly positive smooth replacement for merely nonnegative data.

    Returns delta + delta^alpha x^2 (1-x) + (u0* conv K_delta)(x), where u0*
    is u0 truncated to zero outside [2*delta, 1-2*delta] and K_delta is a
    smooth kernel of support radius delta, discretely normalized so constants
    are reproduced away from the boundary layer.  The polynomial term makes
    the result compatible with both boundary conditions up to O(delta^alpha).
    """
    if not (0.0 < delta < 1.0 / 12.0):
        raise DeltaOutOfRange(f"mollifier width must lie in (0, 1/12), got {delta:.6g}")
    grid = u0.grid
    x = grid.nodes
    ustar = np.where((x >= 2.0 * delta) & (x <= 1.0 - 2.0 * delta), u0.values, 0.0)

    # trapezoid weights; dx cancels in the row normalization
    tw = np.ones(grid.n)
    tw[0] = tw[-1] = 0.5
    kernel = _kernel_profile((x[:, None] - x[None, :]) / delta) * tw[None, :]
    row_mass = kernel.sum(axis=1)
    conv = (kernel @ ustar) / row_mass

    vals = delta + delta**params.alpha * x**2 * (1.0 - x) + conv
    return Field(grid, vals, u0.time)


@dataclass(frozen=True)
class BreachInfo:
    """Exit diagnostics of a corridor breach, consumed by the schedule."""

    prev: RegularizationSpec
    t_exit: float
    c_hat: float  # empirical gradient constant observed so far
    edge: str  # "lower" or "upper"


def corridor_schedule(
    params: ProblemParams,
    u0d: Field,
    observed: BreachInfo | None = None,
    floor: float = SCHEDULE_FLOOR,
) -> RegularizationSpec:
    """Initial corridor, or the widened corridor after a breach.

    First call (observed None): delta = min(u0d)/2, m_bar = 2M.  After a
    breach: m_bar = 2*max(2M, sup envelope at the horizon) and delta is halved
    against the empirical pointwise floor built from the mass floor at the
    horizon and the observed gradient constant at the exit time.
    """
    if observed is None:
        lo = float(u0d.values.min())
        if lo <= 0.0:
            raise NonpositiveData("corridor schedule needs strictly positive data")
        return RegularizationSpec(delta=0.5 * lo, m_bar=2.0 * params.M)

    eta = bounds.horizon_floor(params, u0d)
    mq = bounds.transform_power(params.m)  # negative
    t_exit = max(observed.t_exit, 1e-300)
    pointwise_floor = (eta**mq + observed.c_hat * (1.0 + t_exit**-0.5)) ** (1.0 / mq)
    new_delta = 0.5 * min(pointwise_floor, observed.prev.delta)
    new_m_bar = 2.0 * max(2.0 * params.M, bounds.sup_bound(params, params.T))
    if new_delta < floor:
        raise ScheduleDiverged(
            f"corridor lower edge underflowed the floor {floor:g} (delta={new_delta:.3g})"
        )
    return RegularizationSpec(
        delta=new_delta,
        m_bar=new_m_bar,
        transition_kind=observed.prev.transition_kind,
        mollifier_width=observed.prev.mollifier_width,
    )
