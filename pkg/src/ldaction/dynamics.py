"""Benchmark dynamical systems and their closed-form solutions.

Four systems are provided: a 1-DoF linear saddle, a 1-DoF harmonic
oscillator, a 2-DoF proton-transfer model (double well coupled to a bath
oscillator) and the (stochastically forced) Duffing oscillator.  Each system
exposes the Hamiltonian vector field split into a velocity part dq/dt and a
force part dp/dt, plus kinetic/potential energies.  All methods are
vectorized: q and p are arrays whose last axis has length ``dim``.

The saddle and harmonic closed-form expressions double as independent test
oracles for the numerical action accumulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Saturation value returned by closed forms instead of inf when the
# hyperbolic terms overflow (lambda*tau beyond ~355).
LD_ESCAPE_SENTINEL = np.finfo(np.float64).max

# Numerical Jacobians use central differences with this base step.
_FD_STEP = 1.0e-6


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) in 2n-dimensional phase space at time t."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        if q.shape != p.shape or q.ndim != 1 or q.size < 1:
            raise ValueError(f"q and p must be 1-D arrays of equal length, got {q.shape} / {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and math.isfinite(self.t)):
            raise ValueError("phase state components must be finite")

    @property
    def dim(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        """Flat state vector (q_1..q_n, p_1..p_n)."""
        return np.concatenate([self.q, self.p])


class System:
    """Common interface of the benchmark systems."""

    dim: int = 1

    def velocity(self, q, p):
        """dq/dt as a function of (q, p)."""
        raise NotImplementedError

    def force(self, q, p):
        """dp/dt as a function of (q, p)."""
        raise NotImplementedError

    def kinetic(self, p):
        """Kinetic energy; defined so that p . dq/dt = 2 T."""
        raise NotImplementedError

    def potential(self, q):
        raise NotImplementedError

    def derivative(self, s):
        """Phase velocity for flat states s with last axis (q, p) of length 2n."""
        n = self.dim
        q, p = s[..., :n], s[..., n:]
        return np.concatenate(
            [np.broadcast_to(self.velocity(q, p), q.shape), np.broadcast_to(self.force(q, p), p.shape)],
            axis=-1,
        )

    def energy(self, s):
        n = self.dim
        return self.kinetic(s[..., n:]) + self.potential(s[..., :n])


@dataclass(frozen=True)
class Saddle(System):
    """1-DoF linear saddle, H = (lam/2)(p^2 - q^2).

    The kinetic term is taken as lam*p^2/2 so that the action integrand
    p*dq/dt = lam*p^2 equals 2T, keeping one code path for all systems.
    """

    lam: float = 1.0
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")

    def velocity(self, q, p):
        return self.lam * p

    def force(self, q, p):
        return self.lam * q

    def kinetic(self, p):
        return 0.5 * self.lam * np.sum(p * p, axis=-1)

    def potential(self, q):
        return -0.5 * self.lam * np.sum(q * q, axis=-1)


@dataclass(frozen=True)
class Harmonic(System):
    """1-DoF harmonic oscillator, H = p^2/(2m) + m w^2 q^2 / 2."""

    m: float = 1.0
    omega: float = 1.0
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.m <= 0 or self.omega <= 0:
            raise ValueError("m and omega must be positive")

    def velocity(self, q, p):
        return p / self.m

    def force(self, q, p):
        return -self.m * self.omega**2 * q

    def kinetic(self, p):
        return np.sum(p * p, axis=-1) / (2.0 * self.m)

    def potential(self, q):
        return 0.5 * self.m * self.omega**2 * np.sum(q * q, axis=-1)


@dataclass(frozen=True)
class ProtonTransfer(System):
    """2-DoF double well (y) quadratically coupled to a bath oscillator (x).

    H = px^2/2m + py^2/2m + (barrier/y_well^4) y^2 (y^2 - 2 y_well^2)
        + (m omega^2 / 2)(x - c y^2 / (m omega^2))^2
    """

    m: float = 1.0
    barrier: float = 0.25
    y_well: float = math.sqrt(2.0) / 2.0
    omega: float = 1.0
    coupling: float = 0.5
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if self.m <= 0 or self.barrier <= 0 or self.y_well <= 0 or self.omega <= 0:
            raise ValueError("m, barrier, y_well and omega must be positive")

    def velocity(self, q, p):
        return p / self.m

    def force(self, q, p):
        x, y = q[..., 0], q[..., 1]
        mw2 = self.m * self.omega**2
        c = self.coupling
        y2 = y * y
        fx = -mw2 * x + c * y2
        fy = 2.0 * y * (
            (2.0 * self.barrier / self.y_well**2 + c * x)
            - (2.0 * self.barrier / self.y_well**4 + c * c / mw2) * y2
        )
        return np.stack([fx, fy], axis=-1)

    def kinetic(self, p):
        return np.sum(p * p, axis=-1) / (2.0 * self.m)

    def potential(self, q):
        x, y = q[..., 0], q[..., 1]
        mw2 = self.m * self.omega**2
        y2 = y * y
        well = (self.barrier / self.y_well**4) * y2 * (y2 - 2.0 * self.y_well**2)
        bath = 0.5 * mw2 * (x - self.coupling * y2 / mw2) ** 2
        return well + bath


@dataclass(frozen=True)
class Duffing(System):
    """Duffing oscillator dx = y dt, dy = (x - x^3) dt + sigma dW."""

    sigma: float = 0.0
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def velocity(self, q, p):
        return p

    def force(self, q, p):
        return q - q**3

    def kinetic(self, p):
        return 0.5 * np.sum(p * p, axis=-1)

    def potential(self, q):
        q2 = np.sum(q * q, axis=-1)
        return -0.5 * q2 + 0.25 * q2 * q2


SYSTEM_KINDS = {
    "saddle": Saddle,
    "harmonic": Harmonic,
    "proton_transfer": ProtonTransfer,
    "duffing": Duffing,
}


def _check_dim(sys: System, x: PhaseState):
    if x.dim != sys.dim:
        raise ValueError(f"state dimension {x.dim} does not match system dimension {sys.dim}")


def vector_field(sys: System, x: PhaseState) -> np.ndarray:
    """Phase velocity (dq/dt, dp/dt) at a state."""
    _check_dim(sys, x)
    return sys.derivative(x.as_array())


def kinetic_energy(sys: System, p) -> float:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[-1] != sys.dim:
        raise ValueError("momentum dimension mismatch")
    return float(sys.kinetic(p))


def total_energy(sys: System, x: PhaseState) -> float:
    _check_dim(sys, x)
    return float(sys.kinetic(x.p) + sys.potential(x.q))


# ---------------------------------------------------------------------------
# Closed-form solutions for the linear saddle
# ---------------------------------------------------------------------------

def saddle_analytic_flow(lam: float, q0: float, p0: float, t: float):
    """Exact saddle trajectory: hyperbolic rotation of (q0, p0)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    with np.errstate(over="ignore"):
        ch = np.cosh(lam * t)
        sh = np.sinh(lam * t)
        q = q0 * ch + p0 * sh
        p = p0 * ch + q0 * sh
    return q, p


def _saturate(v):
    """Replace overflowed values by the escape sentinel."""
    if np.isscalar(v) or np.ndim(v) == 0:
        return float(v) if math.isfinite(float(v)) else LD_ESCAPE_SENTINEL
    v = np.asarray(v, dtype=float)
    return np.where(np.isfinite(v), v, LD_ESCAPE_SENTINEL)


def saddle_forward_ld_closed_form(lam: float, q0, p0, tau):
    """Forward action of the saddle:

    (lam/2)(p0^2 - q0^2) tau + (q0^2 + p0^2) sinh(2 lam tau)/4
        + q0 p0 (cosh(2 lam tau) - 1)/2
    """
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be non-negative")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        x = 2.0 * lam * np.asarray(tau, dtype=float)
        val = (
            0.5 * lam * (p0**2 - q0**2) * np.asarray(tau, dtype=float)
            + 0.25 * (q0**2 + p0**2) * np.sinh(x)
            + 0.5 * q0 * p0 * (np.cosh(x) - 1.0)
        )
    return _saturate(val)


def saddle_backward_ld_closed_form(lam: float, q0, p0, tau):
    """Backward action.

    The saddle Hamiltonian is even in p, so the mechanical time reversal
    (q, p) -> (q, -p) maps the backward branch onto the forward one:
    S_b(q0, p0, tau) = S_f(q0, -p0, tau).
    """
    return saddle_forward_ld_closed_form(lam, q0, -np.asarray(p0, dtype=float), tau)


def saddle_total_ld_closed_form(lam: float, q0, p0, tau):
    """Total action: 2 lam tau H0 + (p0^2 + q0^2) sinh(2 lam tau)/2.

    Sum of the forward form and its momentum-reflected backward twin; the
    cross terms cancel, the sinh terms add.
    """
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be non-negative")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    h0 = 0.5 * lam * (p0**2 - q0**2)
    with np.errstate(over="ignore", invalid="ignore"):
        x = 2.0 * lam * np.asarray(tau, dtype=float)
        val = 2.0 * lam * np.asarray(tau, dtype=float) * h0 + 0.5 * (p0**2 + q0**2) * np.sinh(x)
    return _saturate(val)


def saddle_G(tau: float, lam: float) -> float:
    """Slope of the forward-action argmin line q0 = -G(tau; lam) p0.

    Evaluated through the identity G = 1 + (exp(-x) - 1 + x)/(sinh x - x),
    x = 2 lam tau, which stays accurate for large x where the naive ratio
    of hyperbolics loses all precision.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    x = 2.0 * lam * tau
    try:
        denom = math.sinh(x) - x
    except OverflowError:
        return 1.0
    if not math.isfinite(denom):
        return 1.0
    return 1.0 + (math.expm1(-x) + x) / denom


def saddle_convergence_time(lam: float, digits: int) -> float:
    """Integration time for which exp(-2 lam tau) = 10^-digits."""
    if digits < 1 or lam <= 0:
        raise ValueError("need digits >= 1 and lambda > 0")
    return digits * math.log(10.0) / (2.0 * lam)


def harmonic_forward_ld_closed_form(m: float, omega: float, h0: float, tau) -> float:
    """Forward action of the oscillator started at (A, 0): H0 (tau - sin(2 w tau)/(2 w))."""
    if h0 < 0 or omega <= 0 or m <= 0 or np.any(np.asarray(tau) < 0):
        raise ValueError("need h0 >= 0, omega > 0, m > 0, tau >= 0")
    tau = np.asarray(tau, dtype=float)
    val = h0 * (tau - np.sin(2.0 * omega * tau) / (2.0 * omega))
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# Equilibria
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    state: PhaseState
    kind: str  # "saddle" (index-1) or "center"
    eigenvalues: tuple


def jacobian(sys: System, s: np.ndarray) -> np.ndarray:
    """Central finite-difference Jacobian of the phase velocity at a flat state."""
    s = np.asarray(s, dtype=float)
    d = s.size
    jac = np.empty((d, d))
    for i in range(d):
        h = _FD_STEP * max(1.0, abs(s[i]))
        sp, sm = s.copy(), s.copy()
        sp[i] += h
        sm[i] -= h
        jac[:, i] = (sys.derivative(sp) - sys.derivative(sm)) / (2.0 * h)
    return jac


def _classify(eigs: np.ndarray) -> str:
    return "saddle" if np.any(np.abs(eigs.real) > 1e-6) else "center"


def proton_transfer_equilibria(sys: ProtonTransfer) -> list[Equilibrium]:
    """The three equilibria: index-1 saddle at the origin and the two well centers."""
    mw2 = sys.m * sys.omega**2
    x_c = sys.coupling * sys.y_well**2 / mw2
    points = [
        np.zeros(4),
        np.array([x_c, sys.y_well, 0.0, 0.0]),
        np.array([x_c, -sys.y_well, 0.0, 0.0]),
    ]
    out = []
    for s in points:
        eigs = np.linalg.eigvals(jacobian(sys, s))
        # order: descending real part, then descending imaginary part
        eigs = eigs[np.lexsort((-eigs.imag, -eigs.real))]
        state = PhaseState(q=s[:2], p=s[2:])
        out.append(Equilibrium(state=state, kind=_classify(eigs), eigenvalues=tuple(eigs)))
    return out
