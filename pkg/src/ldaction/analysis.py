"""Post-processing of LD fields.

Manifolds show up as near-singular features of the field, so they are
extracted by thresholding the central-difference gradient magnitude at a
percentile of its distribution (scale-free under affine rescaling of the
field).  Unstable periodic orbits sit at local minima of the total field.
Long-time averages are constant on invariant tori, which is checked by
sampling the averaged field along Poincare orbits.  Oscillation
frequencies are recovered from the Fourier spectrum of the windowed
time-average residual, which for a harmonic mode peaks at twice the
oscillator frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Harmonic, PhaseState, System
from .integrate import IntegratorConfig, rk4_step
from .ld import ScalarField
from .sections import CrossingSet


@dataclass
class FeatureSet:
    points: np.ndarray    # (k, 2) section coordinates of feature cells
    indices: np.ndarray   # (k, 2) grid indices (ix, iy)
    source: str           # "forward" -> stable, "backward" -> unstable
    threshold: float      # gradient-magnitude threshold actually used


@dataclass(frozen=True)
class FrequencyEstimate:
    omega: float        # dominant angular frequency (> 0)
    magnitude: float    # spectral peak magnitude
    resolution: float   # angular-frequency bin width


@dataclass(frozen=True)
class TorusReport:
    mean: float
    spread: float       # max - min of the sampled field along the orbit
    ratio: float        # spread / mean
    n_samples: int
    passed: bool


def normalize_field(fld: ScalarField) -> ScalarField:
    """Affine rescale of the unmasked values onto [0, 1]."""
    vals = fld.valid_values()
    if vals.size == 0:
        raise ValueError("field has no unmasked values")
    lo, hi = float(vals.min()), float(vals.max())
    out = fld.values.copy()
    if hi > lo:
        out[fld.mask] = (out[fld.mask] - lo) / (hi - lo)
    else:
        out[fld.mask] = 0.0
    return ScalarField(values=out, x_axis=fld.x_axis, y_axis=fld.y_axis,
                       mask=fld.mask.copy(), metadata=dict(fld.metadata, normalized=True))


def gradient_magnitude(fld: ScalarField):
    """Central-difference gradient magnitude on interior unmasked cells.

    Returns (gradmag, valid): both (nx, ny); valid marks cells where the
    full 5-point stencil is unmasked.
    """
    v = fld.values
    hx, hy = fld.x_axis.step, fld.y_axis.step
    gm = np.zeros_like(v)
    valid = np.zeros(v.shape, dtype=bool)
    m = fld.mask
    c = np.s_[1:-1]
    stencil_ok = m[c, c] & m[:-2, c] & m[2:, c] & m[c, :-2] & m[c, 2:]
    with np.errstate(invalid="ignore"):
        gx = (v[2:, c] - v[:-2, c]) / (2.0 * hx)
        gy = (v[c, 2:] - v[c, :-2]) / (2.0 * hy)
        gm[c, c] = np.where(stencil_ok, np.hypot(gx, gy), 0.0)
    valid[c, c] = stencil_ok
    return gm, valid


def extract_singular_features(fld: ScalarField, percentile: float = 95.0,
                              source: str = "forward") -> FeatureSet:
    """Cells whose gradient magnitude exceeds the given percentile."""
    if fld.values.shape[0] < 3 or fld.values.shape[1] < 3:
        raise ValueError("field must be at least 3x3")
    gm, valid = gradient_magnitude(fld)
    if not valid.any():
        return FeatureSet(points=np.empty((0, 2)), indices=np.empty((0, 2), dtype=int),
                          source=source, threshold=np.nan)
    thr = float(np.percentile(gm[valid], percentile))
    sel = valid & (gm >= thr)
    ii, jj = np.nonzero(sel)
    xv = fld.x_axis.values()
    yv = fld.y_axis.values()
    pts = np.column_stack([xv[ii], yv[jj]])
    return FeatureSet(points=pts, indices=np.column_stack([ii, jj]), source=source, threshold=thr)


def find_local_minima(fld: ScalarField, radius: int = 1) -> list[tuple]:
    """Unmasked cells strictly below all unmasked neighbours within the radius.

    Only cells whose full (2r+1)^2 window lies inside the grid are
    candidates.  Returns (ix, iy, x, y, value) tuples.
    """
    if radius < 1:
        raise ValueError("radius must be at least 1")
    nx, ny = fld.values.shape
    r = radius
    big = np.finfo(float).max
    padded = np.full((nx + 2 * r, ny + 2 * r), big)
    work = np.where(fld.mask, fld.values, big)
    padded[r:-r, r:-r] = work

    neigh_min = np.full((nx, ny), big)
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[r + di: r + di + nx, r + dj: r + dj + ny]
            neigh_min = np.minimum(neigh_min, shifted)

    cand = fld.mask & (work < neigh_min)
    cand[:r, :] = cand[-r:, :] = False
    cand[:, :r] = cand[:, -r:] = False
    xv = fld.x_axis.values()
    yv = fld.y_axis.values()
    out = []
    for i, j in zip(*np.nonzero(cand)):
        out.append((int(i), int(j), float(xv[i]), float(yv[j]), float(fld.values[i, j])))
    return out


def forward_average_series(system: System, x0: PhaseState, tau_max: float,
                           n_samples: int, dt: float = 1e-3) -> np.ndarray:
    """(tau, <S_f>/tau) at n_samples uniform times via one cumulative integration."""
    cfg = IntegratorConfig(dt=dt, tau=tau_max)
    n_steps = int(round(tau_max / dt))
    if abs(n_steps * dt - tau_max) > 1e-9:
        raise ValueError("tau_max must be an integer multiple of dt")
    s = x0.as_array()[None, :]
    nmom = system.dim
    g = np.empty(n_steps + 1)
    g[0] = 2.0 * system.kinetic(s[..., nmom:])[0]
    traj_g = g
    for k in range(n_steps):
        s = rk4_step(system, s, cfg.dt)
        traj_g[k + 1] = 2.0 * system.kinetic(s[..., nmom:])[0]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (traj_g[:-1] + traj_g[1:]))])
    t_nodes = np.arange(n_steps + 1) * dt
    taus = np.linspace(0.0, tau_max, n_samples)
    action = np.interp(taus, t_nodes, cum)
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(taus > 0, action / np.where(taus > 0, taus, 1.0), 0.0)
    return np.column_stack([taus, avg])


def g_series(system: Harmonic, x0: PhaseState, tau_samples: np.ndarray,
             dt: float = 1e-3, s_inf: float | None = None) -> np.ndarray:
    """Windowed residual g(tau) = (<S_f> - S_inf) * tau of the time average.

    When ``s_inf`` is not given it is estimated as the mean of the
    trailing decade of samples (tau >= tau_max / 10); the estimate carries
    an O(1e-4) bias from the slowly decaying oscillatory tail, so tests
    against the closed form pass the exact limit explicitly.
    """
    taus = np.asarray(tau_samples, dtype=float)
    if taus.ndim != 1 or taus.size < 2 or np.any(np.diff(taus) <= 0):
        raise ValueError("tau_samples must be increasing")
    steps = np.diff(taus)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("tau_samples must be uniform")
    tau_max = float(taus[-1])
    n_dt = max(1, int(round(tau_max / dt)))
    # sample the average on the full dt grid so that the interpolation onto
    # the requested taus happens over a step of dt, not of the tau spacing
    series = forward_average_series(system, x0, n_dt * dt, n_dt + 1, dt=dt)
    avg = np.interp(taus, series[:, 0], series[:, 1])
    if s_inf is None:
        tail = taus >= tau_max / 10.0
        s_inf = float(np.mean(avg[tail]))
    g = (avg - s_inf) * taus
    return np.column_stack([taus, g])


def frequency_from_series(series: np.ndarray) -> FrequencyEstimate:
    """Dominant angular frequency of a uniformly sampled real series."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 2 or series.shape[1] != 2 or series.shape[0] < 64:
        raise ValueError("need at least 64 (tau, value) samples")
    taus, vals = series[:, 0], series[:, 1]
    d = np.diff(taus)
    if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
        raise ValueError("samples must be uniform")
    dtau = float(d[0])
    n = vals.size
    spec = np.abs(np.fft.rfft(vals - vals.mean()))
    if spec.size < 3 or not np.any(spec[1:] > 0):
        raise ValueError("flat series: no spectral peak")
    k = int(np.argmax(spec[1:])) + 1
    others = spec.copy()
    others[max(0, k - 1): k + 2] = -np.inf
    if not spec[k] > np.max(others):
        raise ValueError("no dominant spectral peak")
    # parabolic sub-bin interpolation
    delta = 0.0
    if 1 <= k < spec.size - 1:
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            delta = 0.5 * (a - c) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
    d_omega = 2.0 * np.pi / (n * dtau)
    return FrequencyEstimate(omega=(k + delta) * d_omega, magnitude=float(spec[k]),
                             resolution=d_omega)


def average_fields(fields: list[ScalarField]) -> ScalarField:
    """Per-cell arithmetic mean; the mask is the intersection of all masks."""
    if not fields:
        raise ValueError("need at least one field")
    first = fields[0]
    mask = first.mask.copy()
    acc = np.zeros_like(first.values)
    for f in fields:
        if f.values.shape != first.values.shape or f.x_axis != first.x_axis or f.y_axis != first.y_axis:
            raise ValueError("fields must share axes")
        mask &= f.mask
        acc = acc + f.values
    vals = acc / len(fields)
    vals[~mask] = np.nan
    return ScalarField(values=vals, x_axis=first.x_axis, y_axis=first.y_axis,
                       mask=mask, metadata=dict(first.metadata, averaged=len(fields)))


def sample_bilinear(fld: ScalarField, pts: np.ndarray) -> np.ndarray:
    """Bilinear samples at section points; NaN where a corner is masked or outside."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    fx = (pts[:, 0] - fld.x_axis.lo) / fld.x_axis.step
    fy = (pts[:, 1] - fld.y_axis.lo) / fld.y_axis.step
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    nx, ny = fld.values.shape
    inside = (i0 >= 0) & (i0 <= nx - 2) & (j0 >= 0) & (j0 <= ny - 2)
    i0c = np.clip(i0, 0, nx - 2)
    j0c = np.clip(j0, 0, ny - 2)
    tx = fx - i0c
    ty = fy - j0c
    v = fld.values
    m = fld.mask
    corners_ok = m[i0c, j0c] & m[i0c + 1, j0c] & m[i0c, j0c + 1] & m[i0c + 1, j0c + 1]
    out = (
        v[i0c, j0c] * (1 - tx) * (1 - ty)
        + v[i0c + 1, j0c] * tx * (1 - ty)
        + v[i0c, j0c + 1] * (1 - tx) * ty
        + v[i0c + 1, j0c + 1] * tx * ty
    )
    out = np.where(inside & corners_ok, out, np.nan)
    return out


def torus_consistency(avg_field: ScalarField, crossings: CrossingSet,
                      tolerance: float = 0.02) -> TorusReport:
    """Spread of the time-averaged field along one Poincare orbit.

    On a KAM torus the long-time average is constant, so the sampled
    values should collapse; spread/mean below the tolerance passes.
    """
    samples = sample_bilinear(avg_field, crossings.points)
    samples = samples[np.isfinite(samples)]
    if samples.size < 2:
        raise ValueError("not enough valid samples along the orbit")
    mean = float(samples.mean())
    spread = float(samples.max() - samples.min())
    ratio = spread / abs(mean) if mean != 0 else np.inf
    return TorusReport(mean=mean, spread=spread, ratio=ratio,
                       n_samples=int(samples.size), passed=bool(ratio < tolerance))
