"""Closed-form bound curves used as runtime oracles for computed trajectories.

Every bound here is an explicit function of the model parameters and of
integrals of the initial data; nothing is fitted.  The growth envelope is the
exact solution of the source-only comparison problem, the mass floor follows
from the outflow energy budget, and the gradient exponent carries the sign
conditions the gradient-scaling estimate needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveData
from .model import Field, ProblemParams

__all__ = [
    "BoundCurve",
    "sup_bound",
    "norm_bound",
    "gradient_exponent",
    "transform_power",
    "mass_lower_bound",
    "horizon_floor",
    "sup_curve",
    "mass_lower_curve",
]

#: labels a BoundCurve may carry
CURVE_LABELS = ("sup_envelope", "norm_envelope", "mass_floor", "horizon_floor")


def sup_bound(params: ProblemParams, t: float) -> float:
    """Envelope [(1-p) t + M^(1-p)]^(1/(1-p)) dominating the solution maximum.

    Nondecreasing in t and equal to M at t = 0.
    """
    one_mp = 1.0 - params.p
    return float((one_mp * t + params.M**one_mp) ** (1.0 / one_mp))


def norm_bound(params: ProblemParams, u0_norm: float, t: float) -> float:
    """Same envelope seeded by a Lebesgue norm of the initial data.

    For u0_norm <= M this never exceeds sup_bound at the same time.
    """
    one_mp = 1.0 - params.p
    return float((one_mp * t + u0_norm**one_mp) ** (1.0 / one_mp))


def gradient_exponent(m: float) -> float:
    """Exponent q = (3m-1)/(2(m-1)) used by the gradient transform u^(m/q).

    Maps (-1, 0) into (0.5, 1) and keeps both sign expressions
    (1-q)(q-1-q/m) and 2m/q + 1 - m strictly positive there.
    """
    return (3.0 * m - 1.0) / (2.0 * (m - 1.0))


def transform_power(m: float) -> float:
    """Power m/q applied to the solution before taking gradients."""
    return m / gradient_exponent(m)


def _floor_base(params: ProblemParams, u0: Field) -> float:
    e = 2.0 - params.m - params.alpha  # negative exponent
    vals = u0.values
    if vals.min() <= 0.0:
        raise NonpositiveData(
            "mass lower bound needs strictly positive data; mollify first"
        )
    return float(np.trapezoid(vals**e, dx=u0.grid.dx))


def mass_lower_bound(params: ProblemParams, u0: Field, t: float) -> float:
    """Lower bound [(alpha+m-2) t + integral(u0^(2-m-alpha))]^(1/(2-m-alpha)) on the mass.

    Strictly positive and nonincreasing in t; equals the constant for
    constant data at t = 0.
    """
    e = 2.0 - params.m - params.alpha
    base = (params.alpha + params.m - 2.0) * t + _floor_base(params, u0)
    return float(base ** (1.0 / e))


def horizon_floor(params: ProblemParams, u0: Field) -> float:
    """Mass floor evaluated at the full horizon T; feeds the corridor schedule."""
    return mass_lower_bound(params, u0, params.T)


@dataclass(frozen=True)
class BoundCurve:
    """A labelled scalar bound curve t -> value with its data constants baked in."""

    label: str
    params: ProblemParams
    data_constant: float | None = None

    def __post_init__(self):
        if self.label not in CURVE_LABELS:
            raise ValueError(f"unknown bound label {self.label!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        m, p, alpha = self.params.m, self.params.p, self.params.alpha
        if self.label == "sup_envelope":
            one_mp = 1.0 - p
            out = (one_mp * t + self.params.M**one_mp) ** (1.0 / one_mp)
        elif self.label == "norm_envelope":
            one_mp = 1.0 - p
            out = (one_mp * t + self.data_constant**one_mp) ** (1.0 / one_mp)
        elif self.label == "mass_floor":
            e = 2.0 - m - alpha
            out = ((alpha + m - 2.0) * t + self.data_constant) ** (1.0 / e)
        else:  # horizon_floor: constant in t
            e = 2.0 - m - alpha
            val = ((alpha + m - 2.0) * self.params.T + self.data_constant) ** (1.0 / e)
            out = np.full_like(t, val)
        return float(out) if out.ndim == 0 else out

    def sample(self, times) -> np.ndarray:
        return np.asarray(self(np.asarray(times, dtype=float)))


def sup_curve(params: ProblemParams) -> BoundCurve:
    return BoundCurve("sup_envelope", params)


def mass_lower_curve(params: ProblemParams, u0: Field) -> BoundCurve:
    return BoundCurve("mass_floor", params, data_constant=_floor_base(params, u0))
