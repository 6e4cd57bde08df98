"""Implicit time integration of the regularized problem with corridor monitoring.

The equation integrated is

    w_t = h(w) w_xx + (m-1) g(w) (w_x)^2 + w^p

on the unit interval, with a no-flux ghost closure at x = 0 and the outflow
closure w_x = -|w|^(alpha-1) w at x = 1, both second order.  Within the
corridor where h and g coincide with the exact power laws this is the
original singular equation in non-divergence form.

Each step is a theta-weighted implicit update solved by damped Newton with
tridiagonal Jacobian solves.  The corridor is checked after every accepted
step; on a breach the schedule widens it and the run continues from the
breach state.  Merely nonnegative data is handled by the mollified
continuation driver, which solves a shrinking-width family on a leading time
window and restarts from the strictly positive limit candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import bounds
from .errors import (
    InvalidCorridor,
    MassCollapse,
    NewtonDiverged,
    NonFiniteState,
    NonpositiveData,
    StabilityViolation,
)
from .model import Field, ProblemParams, mass
from .regularization import (
    BreachInfo,
    CutoffFn,
    RegularizationSpec,
    build_diffusion_cutoff,
    build_gradient_cutoff,
    corridor_schedule,
    default_delta_schedule,
    mollify_initial,
)

__all__ = [
    "StepConfig",
    "Trajectory",
    "DeltaContinuationRecord",
    "step_regularized",
    "solve_regularized",
    "solve_singular",
    "explicit_oracle",
    "reaction_exact",
]

_TIME_SNAP = 1e-12


@dataclass(frozen=True)
class StepConfig:
    """Time stepping and Newton tolerances."""

    dt_init: float = 1e-4
    dt_min: float = 1e-8
    dt_max: float | None = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    theta: float = 1.0

    def __post_init__(self):
        if self.dt_max is None:
            object.__setattr__(self, "dt_max", self.dt_init)
        if not (0.0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError(
                f"need 0 < dt_min <= dt_init <= dt_max, got "
                f"{self.dt_min:g}, {self.dt_init:g}, {self.dt_max:g}"
            )
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if not (0.5 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0.5, 1], got {self.theta}")


def reaction_exact(u0_const: float, p: float, t: float) -> float:
    """Exact solution [(1-p) t + c^(1-p)]^(1/(1-p)) of u' = u^p from u(0) = c."""
    one_mp = 1.0 - p
    return float((one_mp * t + u0_const**one_mp) ** (1.0 / one_mp))


@dataclass(frozen=True)
class _Problem:
    """Frozen per-solve context shared by the rate and Jacobian kernels."""

    dx: float
    h: Callable
    g: Callable
    hd: Callable
    gd: Callable
    m: float
    p: float
    alpha: float
    diffusion: bool = True


def _power_law_problem(params: ProblemParams, dx: float, diffusion: bool) -> _Problem:
    m = params.m
    return _Problem(
        dx=dx,
        h=lambda w: w ** (m - 1.0),
        g=lambda w: w ** (m - 2.0),
        hd=lambda w: (m - 1.0) * w ** (m - 2.0),
        gd=lambda w: (m - 2.0) * w ** (m - 3.0),
        m=m,
        p=params.p,
        alpha=params.alpha,
        diffusion=diffusion,
    )


def _cutoff_problem(
    params: ProblemParams, dx: float, h: CutoffFn, g: CutoffFn, diffusion: bool
) -> _Problem:
    return _Problem(
        dx=dx,
        h=h,
        g=g,
        hd=h.derivative,
        gd=g.derivative,
        m=params.m,
        p=params.p,
        alpha=params.alpha,
        diffusion=diffusion,
    )


def _signed_power(v: float, a: float) -> float:
    return float(np.sign(v) * np.abs(v) ** a)


def _rate(w: np.ndarray, pb: _Problem) -> np.ndarray:
    """Spatial rate with ghost-node boundary closures."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        wp = w**pb.p
        if not pb.diffusion:
            return wp
        dx = pb.dx
        inv_dx2 = 1.0 / (dx * dx)
        lap = np.empty_like(w)
        grad = np.empty_like(w)
        lap[1:-1] = (w[:-2] - 2.0 * w[1:-1] + w[2:]) * inv_dx2
        grad[1:-1] = (w[2:] - w[:-2]) / (2.0 * dx)
        lap[0] = 2.0 * (w[1] - w[0]) * inv_dx2  # ghost: w[-1] = w[1]
        grad[0] = 0.0
        phi = _signed_power(w[-1], pb.alpha)  # outflow ghost: w[n] = w[n-2] - 2 dx phi
        lap[-1] = (2.0 * w[-2] - 2.0 * w[-1] - 2.0 * dx * phi) * inv_dx2
        grad[-1] = -phi
        return pb.h(w) * lap + (pb.m - 1.0) * pb.g(w) * grad * grad + wp


def _rate_jacobian_bands(w: np.ndarray, pb: _Problem) -> np.ndarray:
    """Tridiagonal Jacobian of the rate, as (upper, diag, lower) bands."""
    n = w.size
    bands = np.zeros((3, n))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        dreac = pb.p * w ** (pb.p - 1.0)
        if not pb.diffusion:
            bands[1, :] = dreac
            return bands
        dx = pb.dx
        inv_dx2 = 1.0 / (dx * dx)
        h, hd = pb.h(w), pb.hd(w)
        g, gd = pb.g(w), pb.gd(w)
        lap = np.empty_like(w)
        grad = np.empty_like(w)
        lap[1:-1] = (w[:-2] - 2.0 * w[1:-1] + w[2:]) * inv_dx2
        grad[1:-1] = (w[2:] - w[:-2]) / (2.0 * dx)
        lap[0] = 2.0 * (w[1] - w[0]) * inv_dx2
        grad[0] = 0.0
        phi = _signed_power(w[-1], pb.alpha)
        phid = pb.alpha * np.abs(w[-1]) ** (pb.alpha - 1.0)
        lap[-1] = (2.0 * w[-2] - 2.0 * w[-1] - 2.0 * dx * phi) * inv_dx2
        grad[-1] = -phi

        mm1 = pb.m - 1.0
        diag = hd * lap - 2.0 * h * inv_dx2 + mm1 * gd * grad * grad + dreac
        lower = h * inv_dx2 - mm1 * g * grad / dx  # dR_i/dw_{i-1}
        upper = h * inv_dx2 + mm1 * g * grad / dx  # dR_i/dw_{i+1}

        upper[0] = 2.0 * h[0] * inv_dx2
        lower[-1] = 2.0 * h[-1] * inv_dx2
        diag[-1] = (
            hd[-1] * lap[-1]
            - h[-1] * (2.0 * inv_dx2 + 2.0 * phid / dx)
            + mm1 * (gd[-1] * phi * phi + 2.0 * g[-1] * phi * phid)
            + dreac[-1]
        )

        # solve_banded layout: bands[0, j] = J[j-1, j], bands[1, j] = J[j, j],
        # bands[2, j] = J[j+1, j]
        bands[0, 1:] = upper[:-1]
        bands[1, :] = diag
        bands[2, :-1] = lower[1:]
    return bands


def _newton_step(
    w_old: np.ndarray,
    r_old: np.ndarray,
    dt: float,
    pb: _Problem,
    cfg: StepConfig,
) -> tuple[np.ndarray, int, np.ndarray]:
    """One theta-weighted implicit step; returns (state, iterations, rate at state)."""
    theta = cfg.theta
    base = w_old if theta == 1.0 else w_old + dt * (1.0 - theta) * r_old

    pred = w_old + dt * r_old  # explicit predictor, kept only if positive
    v = pred if pred.min() > 0.0 and np.all(np.isfinite(pred)) else w_old.copy()
    r = _rate(v, pb)
    res = v - base - dt * theta * r
    if not np.all(np.isfinite(res)):
        v, r = w_old.copy(), r_old
        res = v - base - dt * theta * r
    fnorm = float(np.abs(res).max())

    for it in range(cfg.newton_max_iter):
        if fnorm <= cfg.newton_tol:
            return v, it, r
        bands = -dt * theta * _rate_jacobian_bands(v, pb)
        bands[1, :] += 1.0
        if not np.all(np.isfinite(bands)):
            raise NonFiniteState("Jacobian contains non-finite entries")
        dv = solve_banded((1, 1), bands, -res, check_finite=False)

        lam = 1.0
        accepted = False
        for _ in range(8):  # damp back into the positive cone / decrease residual
            vt = v + lam * dv
            if vt.min() > 0.0:
                rt = _rate(vt, pb)
                rest = vt - base - dt * theta * rt
                if np.all(np.isfinite(rest)):
                    ft = float(np.abs(rest).max())
                    if ft < fnorm or ft <= cfg.newton_tol:
                        v, r, res, fnorm = vt, rt, rest, ft
                        accepted = True
                        break
            lam *= 0.5
        if not accepted:
            raise NewtonDiverged(
                f"no damped step reduced the residual (|F|={fnorm:.3e})"
            )

    if fnorm <= cfg.newton_tol:
        return v, cfg.newton_max_iter, r
    raise NewtonDiverged(
        f"residual {fnorm:.3e} above tol {cfg.newton_tol:g} "
        f"after {cfg.newton_max_iter} iterations"
    )


def step_regularized(
    state: Field,
    dt: float,
    h: CutoffFn,
    g: CutoffFn,
    params: ProblemParams,
    cfg: StepConfig | None = None,
    diffusion: bool = True,
) -> Field:
    """Advance a strictly positive field by one implicit step of size dt."""
    if state.values.min() <= 0.0:
        raise NonpositiveData("step requires a strictly positive state")
    cfg = cfg or StepConfig(dt_init=dt)
    pb = _cutoff_problem(params, state.grid.dx, h, g, diffusion)
    r_old = _rate(state.values, pb)
    v, _, _ = _newton_step(state.values, r_old, dt, pb, cfg)
    return Field(state.grid, v, state.time + dt)


@dataclass
class Trajectory:
    """Time-ordered snapshots plus per-step diagnostics and corridor events."""

    snapshots: list[Field]
    times: np.ndarray
    mass: np.ndarray
    w_max: np.ndarray
    w_min: np.ndarray
    grad_sup: np.ndarray
    boundary_flux: np.ndarray
    newton_iters: np.ndarray
    events: list[dict]
    dt_nominal: float

    @property
    def grid(self):
        return self.snapshots[0].grid

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([f.time for f in self.snapshots])

    def field_at(self, t: float) -> Field:
        """Snapshot at exactly time t (must have been recorded)."""
        for f in self.snapshots:
            if abs(f.time - t) <= _TIME_SNAP * max(1.0, abs(t)):
                return f
        raise KeyError(f"no snapshot at t={t!r}")

    def diagnostics_dict(self) -> dict:
        return {
            "t": self.times.tolist(),
            "mass": self.mass.tolist(),
            "max": self.w_max.tolist(),
            "min": self.w_min.tolist(),
            "grad_sup": self.grad_sup.tolist(),
            "boundary_flux": self.boundary_flux.tolist(),
            "newton_iters": self.newton_iters.tolist(),
        }


class _Accumulator:
    def __init__(self, grid, dt_nominal: float, mq: float):
        self.grid = grid
        self.dt_nominal = dt_nominal
        self.mq = mq
        self.snapshots: list[Field] = []
        self.events: list[dict] = []
        self.rows: list[tuple] = []
        self._tw = np.ones(grid.n)
        self._tw[0] = self._tw[-1] = 0.5
        self._tw *= grid.dx

    def diag(self, t: float, w: np.ndarray, iters: int, m: float, alpha: float):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            tv = w**self.mq
            gsup = float(np.abs(tv[2:] - tv[:-2]).max() / (2.0 * self.grid.dx))
            flux = float(w[-1] ** (m - 1.0 + alpha))
        self.rows.append(
            (t, float(self._tw @ w), float(w.max()), float(w.min()), gsup, flux, iters)
        )

    def snapshot(self, t: float, w: np.ndarray):
        if self.snapshots and abs(self.snapshots[-1].time - t) <= _TIME_SNAP:
            return
        self.snapshots.append(Field(self.grid, w.copy(), t))

    def event(self, kind: str, t: float, **detail):
        self.events.append({"kind": kind, "time": t, **detail})

    def finish(self) -> Trajectory:
        cols = list(zip(*self.rows))
        return Trajectory(
            snapshots=self.snapshots,
            times=np.array(cols[0]),
            mass=np.array(cols[1]),
            w_max=np.array(cols[2]),
            w_min=np.array(cols[3]),
            grad_sup=np.array(cols[4]),
            boundary_flux=np.array(cols[5]),
            newton_iters=np.array(cols[6], dtype=int),
            events=self.events,
            dt_nominal=self.dt_nominal,
        )


def _normalize_record_times(
    record_times: Sequence[float], t_start: float, t_end: float
) -> list[float]:
    out = [t for t in sorted(set(float(t) for t in record_times)) if t_start < t < t_end]
    out.append(t_end)
    return out


def solve_regularized(
    u0d: Field,
    params: ProblemParams,
    spec: RegularizationSpec,
    step: StepConfig | None = None,
    t_end: float | None = None,
    *,
    record_times: Sequence[float] = (),
    snapshot_stride: int = 1,
    diffusion: bool = True,
) -> Trajectory:
    """Integrate from u0d to t_end, widening the corridor on every breach.

    Snapshots are stored every `snapshot_stride` accepted steps, at each
    requested record time (hit exactly by shortening steps), and at t_end.
    Raises NewtonDiverged once dt has been halved down to dt_min, and
    ScheduleDiverged if the corridor lower edge underflows.
    """
    step = step or StepConfig()
    if t_end is None:
        t_end = u0d.time + params.T
    w = u0d.values.copy()
    if w.min() <= 0.0:
        raise NonpositiveData("regularized solve needs strictly positive data")
    if not (spec.delta <= w.min() and w.max() <= spec.m_bar):
        raise InvalidCorridor(
            f"initial data not inside the corridor [{spec.delta:.6g}, {spec.m_bar:.6g}]"
        )

    mq = bounds.transform_power(params.m)
    acc = _Accumulator(u0d.grid, step.dt_init, mq)
    acc.snapshot(u0d.time, w)
    acc.diag(u0d.time, w, 0, params.m, params.alpha)

    h = build_diffusion_cutoff(params, spec)
    g = build_gradient_cutoff(params, spec)
    pb = _cutoff_problem(params, u0d.grid.dx, h, g, diffusion)
    r_cur = _rate(w, pb)

    pending = _normalize_record_times(record_times, u0d.time, t_end)
    t = u0d.time
    cur_dt = step.dt_init
    nstep = 0

    while t < t_end - _TIME_SNAP:
        target = pending[0]
        dt_try = min(cur_dt, target - t)
        landing = dt_try >= target - t - _TIME_SNAP
        try:
            v, iters, r_new = _newton_step(w, r_cur, dt_try, pb, step)
        except (NewtonDiverged, NonFiniteState):
            cur_dt = 0.5 * dt_try
            if cur_dt < step.dt_min:
                raise
            acc.event("dt_reduced", t, dt=cur_dt)
            continue

        t = target if landing else t + dt_try
        w, r_cur = v, r_new
        nstep += 1
        acc.diag(t, w, iters, params.m, params.alpha)
        if landing:
            pending.pop(0)
            acc.snapshot(t, w)
        elif nstep % snapshot_stride == 0:
            acc.snapshot(t, w)

        # corridor monitoring: widen until the state is contained again
        guard = 0
        while not (spec.delta <= w.min() and w.max() <= spec.m_bar):
            edge = "lower" if w.min() < spec.delta else "upper"
            breached_value = float(w.min() if edge == "lower" else w.max())
            acc.event("corridor_breach", t, edge=edge, value=breached_value,
                      delta=spec.delta, m_bar=spec.m_bar)
            c_hat = _empirical_gradient_constant(acc)
            new_spec = corridor_schedule(
                params, u0d, BreachInfo(prev=spec, t_exit=t, c_hat=c_hat, edge=edge)
            )
            if edge == "upper" and new_spec.m_bar <= spec.m_bar:
                # schedule formula cannot widen further; double past the state
                new_spec = replace(new_spec, m_bar=2.0 * max(spec.m_bar, w.max()))
                acc.event("corridor_guard", t, m_bar=new_spec.m_bar)
            spec = new_spec
            acc.event("corridor_schedule", t, delta=spec.delta, m_bar=spec.m_bar)
            h = build_diffusion_cutoff(params, spec)
            g = build_gradient_cutoff(params, spec)
            pb = _cutoff_problem(params, u0d.grid.dx, h, g, diffusion)
            r_cur = _rate(w, pb)
            guard += 1
            if guard > 200:
                raise InvalidCorridor("corridor schedule failed to contain the state")

        cur_dt = min(cur_dt * 2.0, step.dt_max)

    acc.snapshot(t, w)
    return acc.finish()


def _empirical_gradient_constant(acc: _Accumulator) -> float:
    rows = acc.rows
    best = 0.0
    for t, _, _, _, gsup, _, _ in rows:
        if t > 0.0:
            best = max(best, gsup / (1.0 + t**-0.5))
    return best


@dataclass
class DeltaContinuationRecord:
    """Cauchy record of the shrinking-width family on the leading window."""

    deltas: list[float]
    t0: float
    compare_times: np.ndarray
    l1_consecutive: np.ndarray  # shape (len(deltas)-1, len(compare_times))
    l1_at_t0: np.ndarray
    sup_at_t0: np.ndarray
    t0_retries: int

    def to_dict(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "t0": self.t0,
            "compare_times": self.compare_times.tolist(),
            "l1_consecutive": self.l1_consecutive.tolist(),
            "l1_at_t0": self.l1_at_t0.tolist(),
            "sup_at_t0": self.sup_at_t0.tolist(),
            "t0_retries": self.t0_retries,
        }


def _l1(grid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.trapezoid(np.abs(a - b), dx=grid.dx))


def solve_singular(
    u0: Field,
    params: ProblemParams,
    delta_schedule: Sequence[float] | None = None,
    step: StepConfig | None = None,
    t_end: float | None = None,
    *,
    t0: float | None = None,
    snapshot_stride: int = 1,
    record_times: Sequence[float] = (),
    max_t0_retries: int = 12,
    n_compare: int = 32,
) -> tuple[Trajectory, DeltaContinuationRecord]:
    """Continuation solve for merely nonnegative data with positive mass.

    For each width in the schedule the data is mollified and solved on the
    leading window [0, t0]; pairwise L1 distances at a fixed comparison grid
    record the Cauchy behaviour.  The finest-width solution at t0, strictly
    positive and smooth, restarts the integration to t_end.  If the mass of
    any member falls below half the initial mass before t0, t0 is halved and
    the window re-solved.
    """
    step = step or StepConfig()
    if t_end is None:
        t_end = params.T
    schedule = list(delta_schedule) if delta_schedule else default_delta_schedule()
    if sorted(schedule, reverse=True) != schedule:
        raise ValueError("delta schedule must be decreasing")
    ubar0 = mass(u0)
    if ubar0 <= 0.0:
        raise NonpositiveData("continuation needs initial data with positive mass")

    t0 = 0.1 * t_end if t0 is None else t0
    retries = 0
    while True:
        compare_times = np.geomspace(max(step.dt_init, t0 / 1024.0), t0, n_compare)
        legs: list[Trajectory] = []
        collapsed = False
        for d in schedule:
            u0d = mollify_initial(u0, params, d)
            spec = corridor_schedule(params, u0d)
            leg = solve_regularized(
                u0d, params, spec, step, t0,
                record_times=compare_times, snapshot_stride=snapshot_stride,
            )
            if leg.mass.min() < 0.5 * ubar0:
                collapsed = True
                break
            legs.append(leg)
        if not collapsed:
            break
        retries += 1
        if retries > max_t0_retries:
            raise MassCollapse(
                f"mass fell below half its initial value even at t0={t0:.3g}"
            )
        t0 *= 0.5

    # Cauchy record between consecutive widths
    k = len(schedule)
    l1_mat = np.zeros((max(k - 1, 0), compare_times.size))
    for i in range(k - 1):
        for j, tc in enumerate(compare_times):
            a = legs[i].field_at(tc).values
            b = legs[i + 1].field_at(tc).values
            l1_mat[i, j] = _l1(u0.grid, a, b)
    l1_t0 = l1_mat[:, -1].copy() if k > 1 else np.zeros(0)
    sup_t0 = np.array(
        [
            float(np.abs(legs[i].field_at(t0).values - legs[i + 1].field_at(t0).values).max())
            for i in range(k - 1)
        ]
    )
    record = DeltaContinuationRecord(
        deltas=schedule,
        t0=t0,
        compare_times=compare_times,
        l1_consecutive=l1_mat,
        l1_at_t0=l1_t0,
        sup_at_t0=sup_t0,
        t0_retries=retries,
    )

    # restart from the finest-width state, which is strictly positive and smooth
    u_star = legs[-1].field_at(t0)
    params_restart = replace(params, M=max(params.M, float(u_star.values.max())))
    spec_restart = corridor_schedule(params_restart, u_star)
    tail = solve_regularized(
        u_star, params_restart, spec_restart, step, t_end,
        record_times=[t for t in record_times if t > t0],
        snapshot_stride=snapshot_stride,
    )

    head = legs[-1]
    stitched = Trajectory(
        snapshots=head.snapshots + tail.snapshots[1:],
        times=np.concatenate([head.times, tail.times[1:]]),
        mass=np.concatenate([head.mass, tail.mass[1:]]),
        w_max=np.concatenate([head.w_max, tail.w_max[1:]]),
        w_min=np.concatenate([head.w_min, tail.w_min[1:]]),
        grad_sup=np.concatenate([head.grad_sup, tail.grad_sup[1:]]),
        boundary_flux=np.concatenate([head.boundary_flux, tail.boundary_flux[1:]]),
        newton_iters=np.concatenate([head.newton_iters, tail.newton_iters[1:]]),
        events=head.events
        + [{"kind": "restart", "time": t0, "delta_finest": schedule[-1],
            "t0_retries": retries}]
        + tail.events,
        dt_nominal=step.dt_init,
    )
    return stitched, record


def explicit_oracle(
    u0: Field,
    params: ProblemParams,
    tiny_dt: float,
    t_end: float,
    *,
    h: CutoffFn | None = None,
    g: CutoffFn | None = None,
    diffusion: bool = True,
    record_times: Sequence[float] = (),
    snapshot_stride: int | None = None,
    collect_diagnostics: bool = True,
) -> Trajectory:
    """Forward-Euler integration of the same spatial discretization.

    Used only as an independent verification oracle.  Without explicit
    cutoffs the exact power-law coefficients are applied, which requires
    strictly positive data.  The parabolic stability bound
    tiny_dt <= 0.4 dx^2 / max h(w) is enforced every step.
    """
    w = u0.values.copy()
    if diffusion and h is None and w.min() <= 0.0:
        raise NonpositiveData("power-law oracle needs strictly positive data")
    if h is not None and g is None:
        raise ValueError("supply both cutoffs or neither")
    pb = (
        _power_law_problem(params, u0.grid.dx, diffusion)
        if h is None
        else _cutoff_problem(params, u0.grid.dx, h, g, diffusion)
    )

    total = int(np.ceil((t_end - u0.time) / tiny_dt))
    if snapshot_stride is None:
        snapshot_stride = max(1, total // 128)
    mq = bounds.transform_power(params.m)
    acc = _Accumulator(u0.grid, tiny_dt, mq)
    acc.snapshot(u0.time, w)
    acc.diag(u0.time, w, 0, params.m, params.alpha)

    pending = _normalize_record_times(record_times, u0.time, t_end)
    dx2_cap = 0.4 * u0.grid.dx**2
    t = u0.time
    nstep = 0
    while t < t_end - _TIME_SNAP:
        target = pending[0]
        dt_eff = min(tiny_dt, target - t)
        landing = dt_eff >= target - t - _TIME_SNAP
        if diffusion:
            hmax = float(np.max(pb.h(w)))
            if tiny_dt > dx2_cap / hmax:
                raise StabilityViolation(
                    f"tiny_dt={tiny_dt:g} above stability bound {dx2_cap / hmax:.3g}"
                )
        w = w + dt_eff * _rate(w, pb)
        if not np.all(np.isfinite(w)) or w.min() <= 0.0:
            raise NonFiniteState("explicit oracle left the positive cone")
        t = target if landing else t + dt_eff
        nstep += 1
        if landing:
            pending.pop(0)
        if collect_diagnostics:
            acc.diag(t, w, 0, params.m, params.alpha)
        if landing or nstep % snapshot_stride == 0:
            if not collect_diagnostics:
                acc.diag(t, w, 0, params.m, params.alpha)
            acc.snapshot(t, w)
    acc.snapshot(t, w)
    return acc.finish()
