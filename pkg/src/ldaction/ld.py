"""Action-based Lagrangian descriptor evaluation.

The descriptor of a trajectory is the Maupertuis action, accumulated as
the trapezoidal sum of 2T over the integration nodes.  Forward integration
carries information about stable manifolds, backward integration about
unstable ones; both components are non-negative because the integrand is.
Evaluation over a grid of initial conditions produces a triplet of scalar
fields (forward, backward, total) sharing one validity mask.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import PhaseState, System
from .integrate import (
    BatchResult,
    IntegratorConfig,
    WienerPath,
    integrate_batch,
    sample_wiener_path,
)
from .sections import Axis, SectionGrid

# Fixed chunk sizes keep results identical for any worker count.
CHUNK = 4096
STOCH_CHUNK = 512


@dataclass(frozen=True)
class EnsembleSpec:
    n_realizations: int
    seed: int

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")


@dataclass(frozen=True)
class LDParams:
    tau_f: float
    tau_b: float
    dt: float
    t0: float = 0.0
    mode: str = "fixed"
    stop_region: Optional[tuple] = None
    method: str = "rk4"
    ensemble: Optional[EnsembleSpec] = None
    backward_noise: str = "independent"  # or "mirrored"

    def __post_init__(self):
        if self.tau_f < 0 or self.tau_b < 0:
            raise ValueError("integration horizons must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.mode not in ("fixed", "variable"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "variable" and self.stop_region is None:
            raise ValueError("variable mode requires a stop_region")
        if self.backward_noise not in ("independent", "mirrored"):
            raise ValueError(f"unknown backward_noise {self.backward_noise!r}")

    def integrator_config(self, direction: str) -> IntegratorConfig:
        tau = self.tau_f if direction == "forward" else self.tau_b
        return IntegratorConfig(
            dt=self.dt,
            tau=tau,
            method=self.method,
            direction=direction,
            t0=self.t0,
            stop_region=self.stop_region if self.mode == "variable" else None,
        )


@dataclass(frozen=True)
class LDValue:
    forward: float
    backward: float
    elapsed_f: float
    elapsed_b: float
    escaped: bool

    @property
    def total(self) -> float:
        return self.forward + self.backward


@dataclass
class ScalarField:
    """2-D grid of LD values, x-major, with axis metadata and validity mask."""

    values: np.ndarray  # (nx, ny)
    x_axis: Axis
    y_axis: Axis
    mask: np.ndarray    # (nx, ny) bool, True = valid
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.x_axis.count, self.y_axis.count):
            raise ValueError("field shape does not match axis counts")
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape does not match values")

    def valid_values(self) -> np.ndarray:
        return self.values[self.mask]


@dataclass
class FieldSet:
    forward: ScalarField
    backward: ScalarField
    total: ScalarField


def _one_direction(system, states, params: LDParams, direction, sigma=0.0, increments=None):
    cfg = params.integrator_config(direction)
    if cfg.tau == 0.0:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        zeros = np.zeros(len(states))
        return BatchResult(
            final=states.copy(),
            accumulated=zeros,
            elapsed=zeros.copy(),
            escaped=np.zeros(len(states), dtype=bool),
            exited=np.zeros(len(states), dtype=bool),
        )
    return integrate_batch(system, states, cfg, sigma=sigma, increments=increments)


def _as_batch(x0) -> np.ndarray:
    if isinstance(x0, PhaseState):
        return x0.as_array()[None, :]
    return np.atleast_2d(np.asarray(x0, dtype=float))


def _path_increments(path: Optional[WienerPath], params: LDParams, direction):
    if path is None:
        return None
    branch = path.increments_forward if direction == "forward" else path.increments_backward
    if direction == "backward" and params.backward_noise == "mirrored":
        branch = path.increments_forward[: branch.shape[0]]
    return branch[:, None]


def ld_forward(system: System, x0, params: LDParams, path: Optional[WienerPath] = None) -> float:
    sigma = getattr(system, "sigma", 0.0) if path is not None else 0.0
    res = _one_direction(system, _as_batch(x0), params, "forward", sigma,
                         _path_increments(path, params, "forward"))
    return float(res.accumulated[0])


def ld_backward(system: System, x0, params: LDParams, path: Optional[WienerPath] = None) -> float:
    sigma = getattr(system, "sigma", 0.0) if path is not None else 0.0
    res = _one_direction(system, _as_batch(x0), params, "backward", sigma,
                         _path_increments(path, params, "backward"))
    return float(res.accumulated[0])


def ld_total(system: System, x0, params: LDParams, path: Optional[WienerPath] = None) -> LDValue:
    states = _as_batch(x0)
    sigma = getattr(system, "sigma", 0.0) if path is not None else 0.0
    rf = _one_direction(system, states, params, "forward", sigma,
                        _path_increments(path, params, "forward"))
    rb = _one_direction(system, states, params, "backward", sigma,
                        _path_increments(path, params, "backward"))
    return LDValue(
        forward=float(rf.accumulated[0]),
        backward=float(rb.accumulated[0]),
        elapsed_f=float(rf.elapsed[0]),
        elapsed_b=float(rb.elapsed[0]),
        escaped=bool(rf.escaped[0] or rb.escaped[0]),
    )


def ld_time_average(system: System, x0, params: LDParams) -> float:
    """Total LD divided by the combined horizon (forward only when tau_b = 0)."""
    if params.mode != "fixed":
        raise ValueError("time averages are defined for fixed integration time")
    span = params.tau_f + params.tau_b
    if span <= 0:
        raise ValueError("need a positive integration horizon")
    return ld_total(system, x0, params).total / span


def _chunks(n: int, size: int):
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def _run_chunked(n_pts, threads, work):
    spans = list(_chunks(n_pts, CHUNK))
    if threads <= 1 or len(spans) <= 1:
        for span in spans:
            work(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))


def ld_field(system: System, grid: SectionGrid, params: LDParams, threads: int = 1) -> FieldSet:
    """Deterministic LD field triplet over a section grid.

    Escaped points keep their partial accumulation but are masked out;
    infeasible lattice points carry NaN.  Results are independent of the
    evaluation order and of the thread count.
    """
    if grid.states is None or grid.feasible is None:
        raise ValueError("grid must be lifted (build it with the system argument)")
    feas_idx = np.nonzero(grid.feasible)[0]
    if grid.points.shape[0] == 0:
        raise ValueError("empty grid")
    if feas_idx.size == 0:
        raise ValueError("empty feasible set")

    n_pts = grid.points.shape[0]
    fwd = np.full(n_pts, np.nan)
    bwd = np.full(n_pts, np.nan)
    escaped = np.zeros(n_pts, dtype=bool)

    states_feas = grid.states[feas_idx]

    def work(span):
        lo, hi = span
        sub = states_feas[lo:hi]
        rf = _one_direction(system, sub, params, "forward")
        rb = _one_direction(system, sub, params, "backward")
        idx = feas_idx[lo:hi]
        fwd[idx] = rf.accumulated
        bwd[idx] = rb.accumulated
        escaped[idx] = rf.escaped | rb.escaped

    _run_chunked(feas_idx.size, threads, work)
    return _assemble(grid, params, system, fwd, bwd, escaped)


def _assemble(grid, params, system, fwd, bwd, escaped) -> FieldSet:
    nx, ny = grid.nx, grid.ny
    mask = (grid.feasible & ~escaped).reshape(nx, ny)
    meta = {"system": repr(system), "params": repr(params)}

    def mk(vals):
        return ScalarField(
            values=vals.reshape(nx, ny).copy(),
            x_axis=grid.spec.x_axis,
            y_axis=grid.spec.y_axis,
            mask=mask.copy(),
            metadata=dict(meta),
        )

    return FieldSet(forward=mk(fwd), backward=mk(bwd), total=mk(fwd + bwd))


def stochastic_ld_field(
    system: System,
    grid: SectionGrid,
    params: LDParams,
    threads: int = 1,
) -> FieldSet:
    """Ensemble mean of per-realization LD fields for the stochastic system.

    Every realization fixes one two-sided Wiener path, shared by all grid
    points, so each realization's field is the descriptor of a single random
    flow map and its abrupt changes trace that realization's invariant
    manifolds.  Paths are seeded by (ensemble_seed, realization_index) with a
    counter-based generator, and realizations are summed in index order, so
    the result does not depend on scheduling or thread count.  With
    sigma = 0 all realizations coincide with the drift-only deterministic
    field, which is returned bit-exactly.
    """
    if params.ensemble is None:
        raise ValueError("stochastic fields require an ensemble block")
    if params.method != "euler_maruyama":
        params = replace(params, method="euler_maruyama")
    sigma = getattr(system, "sigma", 0.0)
    if sigma == 0.0:
        return ld_field(system, grid, params, threads=threads)

    if grid.states is None or grid.feasible is None:
        raise ValueError("grid must be lifted (build it with the system argument)")
    feas_idx = np.nonzero(grid.feasible)[0]
    if feas_idx.size == 0:
        raise ValueError("empty feasible set")

    n_pts = grid.points.shape[0]
    n_real = params.ensemble.n_realizations
    seed = params.ensemble.seed
    sum_f = np.zeros(n_pts)
    sum_b = np.zeros(n_pts)
    escaped = np.zeros(n_pts, dtype=bool)
    states_feas = grid.states[feas_idx]

    def work_realization(r):
        path = sample_wiener_path((seed, int(r)), params.dt, params.tau_f, params.tau_b)
        col_f = _path_increments(path, params, "forward")
        col_b = _path_increments(path, params, "backward")

        def work(span):
            lo, hi = span
            idx = feas_idx[lo:hi]
            m = hi - lo
            inc_f = np.broadcast_to(col_f, (col_f.shape[0], m)) if col_f is not None else None
            inc_b = np.broadcast_to(col_b, (col_b.shape[0], m)) if col_b is not None else None
            sub = states_feas[lo:hi]
            rf = _one_direction(system, sub, params, "forward", sigma, inc_f)
            rb = _one_direction(system, sub, params, "backward", sigma, inc_b)
            sum_f[idx] += rf.accumulated
            sum_b[idx] += rb.accumulated
            escaped[idx] |= rf.escaped | rb.escaped

        spans = list(_chunks(feas_idx.size, STOCH_CHUNK))
        if threads <= 1 or len(spans) <= 1:
            for span in spans:
                work(span)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, spans))

    # Realizations run sequentially so the summation order is fixed.
    for r in range(n_real):
        work_realization(r)

    return _assemble(grid, params, system, sum_f / n_real, sum_b / n_real, escaped)


def time_average_field(fields: FieldSet, params: LDParams) -> ScalarField:
    """Total field divided by the combined horizon."""
    span = params.tau_f + params.tau_b
    if span <= 0:
        raise ValueError("need a positive integration horizon")
    total = fields.total
    return ScalarField(
        values=total.values / span,
        x_axis=total.x_axis,
        y_axis=total.y_axis,
        mask=total.mask.copy(),
        metadata=dict(total.metadata, time_average=True),
    )
