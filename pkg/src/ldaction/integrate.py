"""Fixed-step time integration: RK4 for the deterministic systems and
Euler-Maruyama for the stochastically forced Duffing oscillator.

Both directions of time are supported, together with an optional stop
region (variable integration time: a trajectory stops as soon as it leaves
an axis-aligned box) and an escape sentinel that halts accumulation once a
coordinate grows beyond ESCAPE_THRESHOLD.

The grid front ends in :mod:`ldaction.ld` use the batched entry point
:func:`integrate_batch`, which advances a whole array of states per time
step and accumulates the action integrand 2T with the trapezoidal rule.
The scalar entry points expose the same stepping for single trajectories
with a per-step observer callback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import PhaseState, System

ESCAPE_THRESHOLD = 1.0e10

_METHODS = ("rk4", "euler_maruyama")
_DIRECTIONS = ("forward", "backward")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    tau: float
    method: str = "rk4"
    direction: str = "forward"
    t0: float = 0.0
    stop_region: Optional[Sequence] = None  # sequence of (lo, hi) per phase coordinate

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.tau > 0 and self.dt > self.tau * (1 + 1e-12):
            raise ValueError("dt must not exceed tau")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class IntegrationResult:
    final_state: PhaseState
    elapsed: float
    escaped: bool
    accumulated: float


@dataclass(frozen=True)
class WienerPath:
    """Two-sided discretized Brownian path anchored at W(t0) = 0.

    Forward and backward branches are independent increment sequences from
    one seeded stream; the same seed reproduces the path bit-exactly.
    """

    seed: object
    dt: float
    increments_forward: np.ndarray
    increments_backward: np.ndarray


def sample_wiener_path(seed, dt: float, tau_f: float, tau_b: float) -> WienerPath:
    """Draw a two-sided Wiener path with N(0, dt) increments.

    ``seed`` may be an integer or a tuple of integers (e.g. the
    (ensemble_seed, realization) pair used for grid fields); either way
    the stream is counter-based and scheduling-invariant.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_f = _n_steps_exact(tau_f, dt)
    n_b = _n_steps_exact(tau_b, dt)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    scale = math.sqrt(dt)
    fwd = rng.standard_normal(n_f) * scale
    bwd = rng.standard_normal(n_b) * scale
    return WienerPath(seed=seed, dt=dt, increments_forward=fwd, increments_backward=bwd)


def _n_steps_exact(tau: float, dt: float) -> int:
    """Number of dt steps covering tau; tau must be an integer multiple of dt."""
    n = int(round(tau / dt))
    if abs(n * dt - tau) > 1e-9 * max(1.0, abs(tau)):
        raise ValueError(f"tau={tau} is not an integer multiple of dt={dt}")
    return n


def _split_steps(tau: float, dt: float):
    """Full steps of size dt plus one remainder step (RK4 only)."""
    n = int(math.floor(tau / dt + 1e-9))
    rem = tau - n * dt
    if rem < 1e-12 * max(1.0, tau):
        rem = 0.0
    return n, rem


def rk4_step(system: System, s: np.ndarray, h: float) -> np.ndarray:
    k1 = system.derivative(s)
    k2 = system.derivative(s + (0.5 * h) * k1)
    k3 = system.derivative(s + (0.5 * h) * k2)
    k4 = system.derivative(s + h * k3)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def em_step(system: System, s: np.ndarray, h: float, noise=None) -> np.ndarray:
    """Explicit Euler step of the drift plus optional additive noise on p.

    ``h`` is signed; for backward integration the drift step is negated and
    the noise increment enters with the same sign (time reversal of one
    path realization).
    """
    n = system.dim
    q, p = s[..., :n], s[..., n:]
    q_new = q + h * system.velocity(q, p)
    p_new = p + h * system.force(q, p)
    if noise is not None:
        p_new = p_new + math.copysign(1.0, h) * np.asarray(noise).reshape(p_new.shape)
    return np.concatenate([q_new, p_new], axis=-1)


def _box_bounds(stop_region, width: int):
    bounds = np.asarray(stop_region, dtype=float)
    if bounds.ndim == 1:
        bounds = np.tile(bounds, (width, 1))
    if bounds.shape != (width, 2):
        raise ValueError(f"stop_region must give (lo, hi) for each of {width} phase coordinates")
    return bounds[:, 0], bounds[:, 1]


@dataclass
class BatchResult:
    final: np.ndarray       # (N, 2n) final states
    accumulated: np.ndarray  # (N,) trapezoid of 2T
    elapsed: np.ndarray      # (N,)
    escaped: np.ndarray      # (N,) bool: blew up / non-finite
    exited: np.ndarray       # (N,) bool: left the stop region


def integrate_batch(
    system: System,
    states: np.ndarray,
    cfg: IntegratorConfig,
    sigma: float = 0.0,
    increments: Optional[np.ndarray] = None,
) -> BatchResult:
    """Advance a batch of flat states over the horizon cfg.tau.

    The action integrand 2T is accumulated per point with the trapezoidal
    rule on the step sequence.  ``increments`` is an (n_steps, N) array of
    Wiener increments for the Euler-Maruyama method (one column per point,
    already matching the integration direction's branch).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n_pts, width = states.shape
    if width != 2 * system.dim:
        raise ValueError("state width does not match system dimension")
    if not np.all(np.isfinite(states)):
        raise ValueError("initial states must be finite")

    sign = 1.0 if cfg.direction == "forward" else -1.0
    if cfg.method == "euler_maruyama":
        n_full, rem = _n_steps_exact(cfg.tau, cfg.dt), 0.0
        if sigma != 0.0:
            if increments is None or increments.shape[0] < n_full or increments.shape[1] != n_pts:
                raise ValueError("not enough Wiener increments for the requested horizon")
    else:
        n_full, rem = _split_steps(cfg.tau, cfg.dt)

    lo = hi = None
    if cfg.stop_region is not None:
        lo, hi = _box_bounds(cfg.stop_region, width)

    final = states.copy()
    acc = np.zeros(n_pts)
    elapsed = np.full(n_pts, cfg.tau)
    escaped = np.zeros(n_pts, dtype=bool)
    exited = np.zeros(n_pts, dtype=bool)

    active = np.arange(n_pts)
    s = states.copy()
    nmom = system.dim
    g = 2.0 * system.kinetic(s[..., nmom:])

    schedule = [(k, cfg.dt) for k in range(n_full)]
    if rem > 0.0:
        schedule.append((n_full, rem))

    for k, h_abs in schedule:
        if active.size == 0:
            break
        h = sign * h_abs
        if cfg.method == "rk4":
            s_new = rk4_step(system, s, h)
        else:
            noise = sigma * increments[k, active] if sigma != 0.0 else None
            s_new = em_step(system, s, h, noise=noise)
        with np.errstate(invalid="ignore"):
            bad = ~np.isfinite(s_new).all(axis=-1) | (np.abs(s_new) > ESCAPE_THRESHOLD).any(axis=-1)
        good = ~bad
        g_new = 2.0 * system.kinetic(s_new[..., nmom:])
        acc[active[good]] += (0.5 * h_abs) * (g[good] + g_new[good])

        if bad.any():
            idx = active[bad]
            escaped[idx] = True
            final[idx] = s[bad]
            elapsed[idx] = k * cfg.dt

        keep = good
        if lo is not None:
            out = good & ((s_new < lo) | (s_new > hi)).any(axis=-1)
            if out.any():
                idx = active[out]
                exited[idx] = True
                final[idx] = s_new[out]
                elapsed[idx] = k * cfg.dt + h_abs
            keep = good & ~out

        if keep.all():
            s, g = s_new, g_new
        else:
            active = active[keep]
            s, g = s_new[keep], g_new[keep]

    if active.size:
        final[active] = s
    return BatchResult(final=final, accumulated=acc, elapsed=elapsed, escaped=escaped, exited=exited)


def _single_result(system, x0, cfg, res: BatchResult, observed) -> IntegrationResult:
    sign = 1.0 if cfg.direction == "forward" else -1.0
    t_end = x0.t + sign * res.elapsed[0]
    fq, fp = res.final[0, : system.dim], res.final[0, system.dim:]
    return IntegrationResult(
        final_state=PhaseState(q=fq, p=fp, t=t_end),
        elapsed=float(res.elapsed[0]),
        escaped=bool(res.escaped[0] or res.exited[0]),
        accumulated=observed if observed is not None else float(res.accumulated[0]),
    )


def integrate_deterministic(
    system: System,
    x0: PhaseState,
    cfg: IntegratorConfig,
    observer: Optional[Callable[[np.ndarray, float], object]] = None,
) -> IntegrationResult:
    """Integrate one trajectory with RK4.

    The observer, when given, is called after every accepted step with the
    new flat state and the signed step size; numeric returns are summed
    into IntegrationResult.accumulated (otherwise the built-in 2T
    trapezoid sum is reported).
    """
    if cfg.method != "rk4":
        raise ValueError("integrate_deterministic requires the rk4 method")
    if x0.dim != system.dim:
        raise ValueError("state dimension mismatch")
    if observer is None:
        res = integrate_batch(system, x0.as_array()[None, :], cfg)
        return _single_result(system, x0, cfg, res, None)

    # Observer path: explicit scalar loop so the callback sees every step.
    sign = 1.0 if cfg.direction == "forward" else -1.0
    n_full, rem = _split_steps(cfg.tau, cfg.dt)
    lo = hi = None
    if cfg.stop_region is not None:
        lo, hi = _box_bounds(cfg.stop_region, 2 * system.dim)
    s = x0.as_array()
    total = 0.0
    elapsed = 0.0
    escaped = False
    steps = [cfg.dt] * n_full + ([rem] if rem > 0.0 else [])
    for h_abs in steps:
        h = sign * h_abs
        s_new = rk4_step(system, s, h)
        if not np.all(np.isfinite(s_new)) or np.any(np.abs(s_new) > ESCAPE_THRESHOLD):
            escaped = True
            break
        out = observer(s_new, h)
        if isinstance(out, (int, float)):
            total += out
        s = s_new
        elapsed += h_abs
        if lo is not None and (np.any(s < lo) or np.any(s > hi)):
            escaped = True
            break
    elapsed = cfg.tau if (not escaped and cfg.stop_region is None) else elapsed
    state = PhaseState(q=s[: system.dim], p=s[system.dim:], t=x0.t + sign * elapsed)
    return IntegrationResult(final_state=state, elapsed=elapsed, escaped=escaped, accumulated=total)


def integrate_stochastic_em(
    system: System,
    x0: PhaseState,
    cfg: IntegratorConfig,
    path: WienerPath,
    observer: Optional[Callable[[np.ndarray, float], object]] = None,
) -> IntegrationResult:
    """Euler-Maruyama integration of one trajectory along a Wiener path."""
    if cfg.method != "euler_maruyama":
        raise ValueError("integrate_stochastic_em requires the euler_maruyama method")
    if abs(path.dt - cfg.dt) > 1e-12:
        raise ValueError("path.dt must equal cfg.dt")
    sigma = getattr(system, "sigma", 0.0)
    branch = path.increments_forward if cfg.direction == "forward" else path.increments_backward
    n = _n_steps_exact(cfg.tau, cfg.dt)
    if branch.shape[0] < n:
        raise ValueError("not enough Wiener increments for the requested horizon")
    inc = branch[:n, None].copy()
    res = integrate_batch(system, x0.as_array()[None, :], cfg, sigma=sigma, increments=inc)
    observed = None
    if observer is not None:
        # Replay for the observer on the recorded path (cheap, single point).
        sign = 1.0 if cfg.direction == "forward" else -1.0
        s = x0.as_array()
        total = 0.0
        for k in range(n):
            noise = sigma * inc[k] if sigma != 0.0 else None
            s = em_step(system, s, sign * cfg.dt, noise=noise)
            if not np.all(np.isfinite(s)):
                break
            out = observer(s, sign * cfg.dt)
            if isinstance(out, (int, float)):
                total += out
        observed = total
    return _single_result(system, x0, cfg, res, observed)
