"""Turn trajectories into per-estimate reports and comparative experiments.

Each check compares an observed curve extracted from a computed trajectory
against a closed-form bound curve, at the discretization tolerance

    eps_grid = C_tol (dx^2 + dt) max(1, sup envelope at the horizon)

reflecting the second-order-in-space, first-order-in-time scheme.  Checks are
pure functions of stored trajectories; the comparative experiments
(contraction pairs, dependence families, width and grid refinement studies)
orchestrate their own solves.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from . import bounds
from .errors import GridMismatch, NonpositiveData, XiNonpositive
from .model import Field, Grid, InitialSpec, ProblemParams, make_initial, mass
from .regularization import corridor_schedule, mollify_initial
from .solver import StepConfig, Trajectory, solve_regularized

__all__ = [
    "EstimateReport",
    "DependenceRecord",
    "grid_tolerance",
    "l1_distance",
    "transformed_gradient_sup",
    "check_linfty",
    "check_energy",
    "check_mass",
    "check_gradient",
    "check_contraction",
    "check_dependence",
    "dependence_estimate",
    "delta_convergence_study",
    "grid_convergence_study",
    "standard_suite",
    "DeltaStudy",
    "GridStudy",
]

#: labels of the six estimate checks a full report carries
CHECKS = (
    "sup_bound",
    "gradient_scaling",
    "mass_lower",
    "contraction",
    "dependence",
    "energy_budget",
)

DEFAULT_C_TOL = 5.0


def grid_tolerance(
    params: ProblemParams,
    dx: float,
    dt: float,
    t_end: float | None = None,
    c_tol: float = DEFAULT_C_TOL,
) -> float:
    """Discretization tolerance C_tol (dx^2 + dt) max(1, sup envelope)."""
    horizon = params.T if t_end is None else t_end
    return c_tol * (dx * dx + dt) * max(1.0, bounds.sup_bound(params, horizon))


@dataclass
class EstimateReport:
    """Observed curve against a bound curve with the resulting margin.

    margin is the minimum signed slack over the sampled times (positive the
    bound holds with room); the check passes iff margin >= -tolerance.
    """

    check: str
    times: np.ndarray
    observed: np.ndarray
    bound: np.ndarray
    margin: float
    tolerance: float
    passed: bool
    notes: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "pass": bool(self.passed),
            "margin": float(self.margin),
            "tolerance": float(self.tolerance),
            "times": self.times.tolist(),
            "observed": self.observed.tolist(),
            "bound": self.bound.tolist(),
            "notes": self.notes,
        }


def _report(check, times, observed, bound, slack, tolerance, notes=None) -> EstimateReport:
    margin = float(np.min(slack))
    return EstimateReport(
        check=check,
        times=np.asarray(times, dtype=float),
        observed=np.asarray(observed, dtype=float),
        bound=np.asarray(bound, dtype=float),
        margin=margin,
        tolerance=float(tolerance),
        passed=bool(margin >= -tolerance),
        notes=notes or {},
    )


def l1_distance(f: Field, g: Field) -> float:
    """Trapezoid integral of |f - g|; zero iff the samples agree pointwise."""
    if f.grid != g.grid:
        raise GridMismatch(f"fields live on different grids ({f.grid.n} vs {g.grid.n})")
    return float(np.trapezoid(np.abs(f.values - g.values), dx=f.grid.dx))


def transformed_gradient_sup(f: Field, m: float) -> float:
    """Max over interior nodes of the centered difference of f^(m/q)."""
    if f.values.min() <= 0.0:
        raise NonpositiveData("gradient transform needs strictly positive samples")
    tv = f.values ** bounds.transform_power(m)
    return float(np.abs(tv[2:] - tv[:-2]).max() / (2.0 * f.grid.dx))


def _default_tol(traj: Trajectory, params: ProblemParams) -> float:
    return grid_tolerance(params, traj.grid.dx, traj.dt_nominal, traj.t_end)


def check_linfty(
    traj: Trajectory, params: ProblemParams, tolerance: float | None = None
) -> EstimateReport:
    """Running max of the solution against the sup envelope."""
    tol = _default_tol(traj, params) if tolerance is None else tolerance
    observed = np.maximum.accumulate(traj.w_max)
    bound = bounds.sup_curve(params).sample(traj.times)
    return _report("sup_bound", traj.times, observed, bound, bound - observed, tol)


def check_energy(
    traj: Trajectory,
    params: ProblemParams,
    u0: Field,
    tolerance: float | None = None,
    exclude_below: float = 0.0,
) -> EstimateReport:
    """Outflow energy budget: integral of u^(2-m-alpha) against its linear cap.

    The integrand blows up as u -> 0, so the raw tolerance is scaled by its
    sensitivity |2-m-alpha| (min u)^(1-m-alpha) and snapshots with
    min u < exclude_below are skipped; both facts are recorded in the notes.
    """
    e = 2.0 - params.m - params.alpha
    snaps = [f for f in traj.snapshots if f.values.min() >= exclude_below]
    excluded = len(traj.snapshots) - len(snaps)
    times = np.array([f.time for f in snaps])
    observed = np.array([np.trapezoid(f.values**e, dx=f.grid.dx) for f in snaps])
    i0 = float(np.trapezoid(u0.values**e, dx=u0.grid.dx))
    bound = i0 + (params.alpha + params.m - 2.0) * times
    umin = min(f.values.min() for f in snaps)
    sensitivity = abs(e) * umin ** (e - 1.0)
    raw = _default_tol(traj, params) if tolerance is None else tolerance
    tol = raw * max(1.0, sensitivity)
    notes = {
        "sensitivity": sensitivity,
        "raw_tolerance": raw,
        "excluded_snapshots": excluded,
        "exclude_below": exclude_below,
    }
    return _report("energy_budget", times, observed, bound, bound - observed, tol, notes)


def check_mass(
    traj: Trajectory,
    params: ProblemParams,
    u0d: Field,
    tolerance: float | None = None,
) -> EstimateReport:
    """Mass curve against the closed-form lower bound (direction reversed)."""
    tol = _default_tol(traj, params) if tolerance is None else tolerance
    bound = bounds.mass_lower_curve(params, u0d).sample(traj.times)
    return _report("mass_lower", traj.times, traj.mass, bound, traj.mass - bound, tol)


def check_gradient(
    traj: Trajectory,
    params: ProblemParams,
    horizons: Sequence[float] | None = None,
    jump_factor: float = 10.0,
) -> EstimateReport:
    """Gradient scaling: sup |(u^(m/q))_x| * min(1, sqrt(t)) under 2 C_hat.

    C_hat is the empirical constant max_t grad_sup / (1 + t^(-1/2)).  The
    report records C_hat per nested horizon (monotone by construction) and
    flags, without failing, any jump above jump_factor between neighbours.
    """
    sel = traj.times > 0.0
    ts = traj.times[sel]
    gs = traj.grad_sup[sel]
    ratio = gs / (1.0 + ts**-0.5)
    c_hat = float(ratio.max())

    t_end = traj.t_end
    if horizons is None:
        horizons = [t_end / 8.0, t_end / 4.0, t_end / 2.0, t_end]
    c_per_horizon = []
    for hzn in horizons:
        mask = ts <= hzn + 1e-15
        c_per_horizon.append(float(ratio[mask].max()) if mask.any() else 0.0)
    flags = [
        f"C_hat jump {a:.3g} -> {b:.3g} between horizons {h1:.3g} and {h2:.3g}"
        for (h1, a), (h2, b) in itertools.pairwise(zip(horizons, c_per_horizon))
        if a > 0 and b > jump_factor * a
    ]

    observed = gs * np.minimum(1.0, np.sqrt(ts))
    bound = np.full_like(observed, 2.0 * c_hat)
    notes = {
        "c_hat": c_hat,
        "horizons": list(map(float, horizons)),
        "c_hat_per_horizon": c_per_horizon,
        "flags": flags,
    }
    return _report("gradient_scaling", ts, observed, bound, bound - observed, 0.0, notes)


def _shared_snapshots(trajA: Trajectory, trajB: Trajectory) -> list[tuple[Field, Field]]:
    if trajA.grid != trajB.grid:
        raise GridMismatch("contraction pair must share a grid")
    tb = {round(f.time, 12): f for f in trajB.snapshots}
    pairs = [(f, tb[round(f.time, 12)]) for f in trajA.snapshots if round(f.time, 12) in tb]
    if len(pairs) < 2:
        raise GridMismatch("trajectories share fewer than two snapshot times")
    return pairs


def check_contraction(
    trajA: Trajectory,
    trajB: Trajectory,
    params: ProblemParams,
    tolerance: float | None = None,
) -> EstimateReport:
    """L1 distance curve against initial distance plus accumulated source gap."""
    pairs = _shared_snapshots(trajA, trajB)
    times = np.array([a.time for a, _ in pairs])
    dx = trajA.grid.dx
    dist = np.array([l1_distance(a, b) for a, b in pairs])
    source_gap = np.array(
        [
            np.trapezoid(np.abs(a.values**params.p - b.values**params.p), dx=dx)
            for a, b in pairs
        ]
    )
    cumulative = np.concatenate(
        [[0.0], np.cumsum(0.5 * (source_gap[1:] + source_gap[:-1]) * np.diff(times))]
    )
    bound = dist[0] + cumulative
    tol = _default_tol(trajA, params) if tolerance is None else tolerance
    return _report("contraction", times, dist, bound, bound - dist, tol)


@dataclass
class DependenceRecord:
    """Continuous-dependence experiment over a family of initial pairs."""

    pairs: list[dict]
    t_star: float
    t_end: float
    empirical_c: float
    factor2_ok: bool
    gronwall_ok: bool
    binding: str
    worst_pair: int

    def to_dict(self) -> dict:
        return {
            "pairs": self.pairs,
            "t_star": self.t_star,
            "t_end": self.t_end,
            "empirical_C": self.empirical_c,
            "factor2_ok": self.factor2_ok,
            "gronwall_ok": self.gronwall_ok,
            "binding": self.binding,
            "worst_pair": self.worst_pair,
        }


def check_dependence(
    pair_specs: Sequence[tuple[InitialSpec, InitialSpec]],
    params: ProblemParams,
    grid: Grid,
    step: StepConfig,
    t_star: float,
    t_end: float,
    tolerance: float | None = None,
    n_times: int = 64,
) -> DependenceRecord:
    """Solve each pair and compare L1 drift to the two-phase bound.

    On [0, t_star] the distance must stay within a factor 2 of the initial
    distance; beyond, within 2 * initial * exp(p xi^(p-1) t) where xi is the
    minimum of both solutions on the late window.  Identical pairs count as
    passing.  Solutions are cached per initial spec, so families sharing a
    base member cost one solve each.
    """
    tol = grid_tolerance(params, grid.dx, step.dt_init, t_end) if tolerance is None else tolerance
    times = np.unique(
        np.concatenate(
            [
                np.linspace(t_end / n_times, t_end, n_times),
                np.geomspace(max(step.dt_init, t_end / 1024.0), t_end, 16),
                [t_star],
            ]
        )
    )
    cache: dict[InitialSpec, Trajectory] = {}

    def solve(spec0: InitialSpec) -> Trajectory:
        if spec0 not in cache:
            u0 = make_initial(spec0, grid, params)
            cspec = corridor_schedule(params, u0)
            cache[spec0] = solve_regularized(
                u0, params, cspec, step, t_end,
                record_times=times, snapshot_stride=10**9,
            )
        return cache[spec0]

    rows = []
    empirical = 0.0
    factor2_ok = True
    gronwall_ok = True
    worst = 0
    for idx, (sa, sb) in enumerate(pair_specs):
        ta, tb = solve(sa), solve(sb)
        ua0, ub0 = ta.snapshots[0], tb.snapshots[0]
        init = l1_distance(ua0, ub0)
        dist = np.array(
            [l1_distance(ta.field_at(t), tb.field_at(t)) for t in times]
        )
        max_dist = float(max(dist.max(), init))
        late = times >= t_star - 1e-15
        xi = min(
            min(ta.field_at(t).values.min() for t in times[late]),
            min(tb.field_at(t).values.min() for t in times[late]),
        )
        if xi <= 0.0:
            raise XiNonpositive(f"solution minimum {xi:.3g} on the late window")
        rate = params.p * xi ** (params.p - 1.0)

        if init <= 1e-15:
            row_ratio = 0.0
            early_ok = late_ok = True
        else:
            row_ratio = max_dist / init
            early_ok = bool(np.all(dist[~late] <= 2.0 * init + tol))
            late_ok = bool(
                np.all(dist[late] <= 2.0 * init * np.exp(rate * times[late]) + tol)
            )
        factor2_ok &= early_ok
        gronwall_ok &= late_ok
        if row_ratio > empirical:
            empirical, worst = row_ratio, idx
        rows.append(
            {
                "initial_distance": init,
                "max_distance": max_dist,
                "ratio": row_ratio,
                "xi": float(xi),
                "gronwall_factor": float(np.exp(rate * t_end)),
                "factor2_ok": early_ok,
                "gronwall_ok": late_ok,
            }
        )
    gron_global = max((r["gronwall_factor"] for r in rows), default=1.0)
    binding = "factor2" if empirical <= 2.0 else "gronwall"
    return DependenceRecord(
        pairs=rows,
        t_star=t_star,
        t_end=t_end,
        empirical_c=empirical,
        factor2_ok=factor2_ok,
        gronwall_ok=gronwall_ok,
        binding=binding,
        worst_pair=worst,
    )


def dependence_estimate(record: DependenceRecord, params: ProblemParams) -> EstimateReport:
    """Summarize a dependence record as a report entry (ratio vs global bound)."""
    ratios = np.array([r["ratio"] for r in record.pairs])
    caps = np.array(
        [2.0 * max(1.0, r["gronwall_factor"]) for r in record.pairs]
    )
    notes = record.to_dict()
    ok = record.factor2_ok and record.gronwall_ok
    rep = _report(
        "dependence",
        np.arange(len(record.pairs), dtype=float),
        ratios,
        caps,
        caps - ratios,
        0.0,
        notes,
    )
    rep.passed = bool(ok and rep.margin >= 0.0)
    return rep


@dataclass
class DeltaStudy:
    """Distances between consecutive mollification widths at a probe time."""

    deltas: list[float]
    t_probe: float
    l1: np.ndarray
    sup: np.ndarray

    @property
    def cauchy_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.l1) < 0.0)) if self.l1.size > 1 else True

    def to_dict(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "t_probe": self.t_probe,
            "l1": self.l1.tolist(),
            "sup": self.sup.tolist(),
            "cauchy_decreasing": self.cauchy_decreasing,
        }


def delta_convergence_study(
    u0: Field,
    params: ProblemParams,
    schedule: Sequence[float],
    t_probe: float,
    step: StepConfig | None = None,
) -> DeltaStudy:
    """Solve each mollification width to t_probe and tabulate consecutive gaps."""
    step = step or StepConfig()
    finals = []
    for d in schedule:
        u0d = mollify_initial(u0, params, d)
        spec = corridor_schedule(params, u0d)
        traj = solve_regularized(
            u0d, params, spec, step, t_probe,
            record_times=[t_probe], snapshot_stride=10**9,
        )
        finals.append(traj.field_at(t_probe))
    l1 = np.array([l1_distance(a, b) for a, b in zip(finals, finals[1:])])
    sup = np.array(
        [float(np.abs(a.values - b.values).max()) for a, b in zip(finals, finals[1:])]
    )
    return DeltaStudy(deltas=list(schedule), t_probe=t_probe, l1=l1, sup=sup)


@dataclass
class GridStudy:
    """Richardson-style observed orders from nested grids."""

    n_list: list[int]
    t_probe: float
    errors: np.ndarray  # consecutive-grid L1 differences on the coarser grid
    orders: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n_list": list(self.n_list),
            "t_probe": self.t_probe,
            "errors": self.errors.tolist(),
            "orders": self.orders.tolist(),
        }


def grid_convergence_study(
    u0: InitialSpec,
    params: ProblemParams,
    n_list: Sequence[int],
    t_probe: float,
    step: StepConfig | None = None,
    mollify_width: float | None = None,
) -> GridStudy:
    """Solve the same problem on nested grids and estimate the observed order.

    Grids must nest (each n is 2n-1 of its predecessor, or equal).  Data with
    zeros must be given a mollification width.  A Crank-Nicolson step config
    keeps the time error from masking the spatial order.
    """
    step = step or StepConfig(theta=0.5)
    finals: list[Field] = []
    for n in n_list:
        grid = Grid(n)
        u0f = make_initial(u0, grid, params)
        if mollify_width is not None:
            u0f = mollify_initial(u0f, params, mollify_width)
        elif u0f.values.min() <= 0.0:
            raise NonpositiveData("data with zeros needs a mollification width")
        spec = corridor_schedule(params, u0f)
        traj = solve_regularized(
            u0f, params, spec, step, t_probe,
            record_times=[t_probe], snapshot_stride=10**9,
        )
        finals.append(traj.field_at(t_probe))

    errors = []
    for fc, ff in zip(finals, finals[1:]):
        nc, nf = fc.grid.n, ff.grid.n
        if (nf - 1) % (nc - 1) != 0:
            raise ValueError(f"grids {nc} and {nf} do not nest")
        ratio = (nf - 1) // (nc - 1)
        restricted = ff.values[::ratio]
        errors.append(float(np.trapezoid(np.abs(restricted - fc.values), dx=fc.grid.dx)))
    errors = np.array(errors)
    orders = []
    for e0, e1, (n0, n1) in zip(errors, errors[1:], zip(n_list, n_list[1:])):
        r = (n1 - 1) / (n0 - 1)
        orders.append(np.log(e0 / e1) / np.log(r) if e1 > 0 and e0 > 0 else np.inf)
    return GridStudy(
        n_list=list(n_list), t_probe=t_probe, errors=errors, orders=np.array(orders)
    )


def standard_suite(M: float = 1.0, T: float = 1.0) -> list[ProblemParams]:
    """The 3x3x2 parameter grid every estimate check must pass on."""
    cells = []
    for m in (-0.8, -0.5, -0.2):
        for p in (0.25, 0.5, 0.75):
            for alpha in (2.0 - m + 0.5, 4.0):
                cells.append(ProblemParams(m=m, p=p, alpha=alpha, M=M, T=T))
    return cells
