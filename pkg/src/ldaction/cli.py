"""Batch command-line front end.

One strict-JSON config per run; unknown keys are rejected.  Every run
writes its outputs plus a ``manifest.json`` echoing the resolved config,
and feeding a manifest back as the config reproduces the outputs
byte-identically.

Exit codes: 0 success, 1 bench failure, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import output as out_io
from .analysis import (
    extract_singular_features,
    forward_average_series,
    frequency_from_series,
    g_series,
)
from .dynamics import (
    Duffing,
    Harmonic,
    PhaseState,
    ProtonTransfer,
    Saddle,
    harmonic_forward_ld_closed_form,
    jacobian,
    proton_transfer_equilibria,
    saddle_G,
    saddle_convergence_time,
    saddle_forward_ld_closed_form,
    saddle_total_ld_closed_form,
    total_energy,
    vector_field,
)
from .ld import EnsembleSpec, LDParams, ld_field, ld_forward, ld_time_average, ld_total, \
    stochastic_ld_field, time_average_field
from .sections import Axis, SectionSpec, build_grid, lift_points, poincare_map_batch


class ConfigError(Exception):
    pass


COMMANDS = ("field", "stochastic-field", "poincare", "time-average", "frequency", "extract", "bench")


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _check_keys(block: dict, allowed: set, required: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _number(block, key, where, default=None):
    if key not in block:
        if default is not None:
            return default
        raise ConfigError(f"{where}: missing key '{key}'")
    v = block[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{where}.{key}: expected a number")
    return float(v)


def parse_system(block):
    _check_keys(block, {"kind", "lambda", "m", "omega", "barrier", "y_well", "coupling", "sigma"},
                {"kind"}, "system")
    kind = block["kind"]
    try:
        if kind == "saddle":
            return Saddle(lam=_number(block, "lambda", "system", 1.0))
        if kind == "harmonic":
            return Harmonic(m=_number(block, "m", "system", 1.0),
                            omega=_number(block, "omega", "system", 1.0))
        if kind == "proton_transfer":
            return ProtonTransfer(
                m=_number(block, "m", "system", 1.0),
                barrier=_number(block, "barrier", "system", 0.25),
                y_well=_number(block, "y_well", "system", math.sqrt(2.0) / 2.0),
                omega=_number(block, "omega", "system", 1.0),
                coupling=_number(block, "coupling", "system", 0.5),
            )
        if kind == "duffing":
            return Duffing(sigma=_number(block, "sigma", "system", 0.0))
    except ValueError as e:
        raise ConfigError(f"system: {e}") from None
    raise ConfigError(f"system.kind: unknown kind {kind!r}")


def _parse_axis(block, where):
    _check_keys(block, {"min", "max", "count"}, {"min", "max", "count"}, where)
    count = block["count"]
    if not isinstance(count, int) or count < 2:
        raise ConfigError(f"{where}.count: expected an integer >= 2")
    try:
        return Axis(_number(block, "min", where), _number(block, "max", where), count)
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def parse_section(block):
    _check_keys(block, {"kind", "x_axis", "y_axis", "axis_names", "fixed", "solved", "energy"},
                {"kind", "x_axis", "y_axis"}, "section")
    kind = block["kind"]
    xa = _parse_axis(block["x_axis"], "section.x_axis")
    ya = _parse_axis(block["y_axis"], "section.y_axis")
    names = tuple(block.get("axis_names", ("q", "p")))
    fixed = solved = None
    energy = None
    if "fixed" in block:
        _check_keys(block["fixed"], {"name", "value"}, {"name", "value"}, "section.fixed")
        fixed = (block["fixed"]["name"], _number(block["fixed"], "value", "section.fixed"))
    if "solved" in block:
        _check_keys(block["solved"], {"name", "sign"}, {"name", "sign"}, "section.solved")
        sign = block["solved"]["sign"]
        if sign not in (1, -1):
            raise ConfigError("section.solved.sign: must be 1 or -1")
        solved = (block["solved"]["name"], sign)
    if "energy" in block:
        energy = _number(block, "energy", "section")
    try:
        return SectionSpec(kind=kind, x_axis=xa, y_axis=ya, axis_names=names,
                           fixed=fixed, solved=solved, energy=energy)
    except ValueError as e:
        raise ConfigError(f"section: {e}") from None


def parse_ld(block, global_seed):
    _check_keys(block, {"tau_f", "tau_b", "dt", "t0", "mode", "stop_region", "method",
                        "ensemble", "backward_noise"}, {"dt"}, "ld")
    ensemble = None
    if "ensemble" in block:
        _check_keys(block["ensemble"], {"n_realizations", "seed"}, {"n_realizations"}, "ld.ensemble")
        n = block["ensemble"]["n_realizations"]
        if not isinstance(n, int) or n < 1:
            raise ConfigError("ld.ensemble.n_realizations: expected an integer >= 1")
        seed = block["ensemble"].get("seed", global_seed)
        if not isinstance(seed, int):
            raise ConfigError("ld.ensemble.seed: expected an integer")
        ensemble = EnsembleSpec(n_realizations=n, seed=seed)
    stop = block.get("stop_region")
    if stop is not None:
        try:
            stop = tuple(tuple(float(b) for b in pair) for pair in stop)
        except (TypeError, ValueError):
            raise ConfigError("ld.stop_region: expected a list of [lo, hi] pairs") from None
    try:
        return LDParams(
            tau_f=_number(block, "tau_f", "ld", 0.0),
            tau_b=_number(block, "tau_b", "ld", 0.0),
            dt=_number(block, "dt", "ld"),
            t0=_number(block, "t0", "ld", 0.0),
            mode=block.get("mode", "fixed"),
            stop_region=stop,
            method=block.get("method", "rk4"),
            ensemble=ensemble,
            backward_noise=block.get("backward_noise", "independent"),
        )
    except ValueError as e:
        raise ConfigError(f"ld: {e}") from None


def parse_output(block):
    _check_keys(block, {"directory", "format"}, {"directory"}, "output")
    fmt = block.get("format", "csv")
    if fmt not in ("csv", "f64bin"):
        raise ConfigError(f"output.format: unknown format {fmt!r}")
    return block["directory"], fmt


def load_config(path, command, out_dir=None, seed=None):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    if set(cfg) >= {"version", "command", "config"}:  # a manifest fed back as config
        if "command" in cfg and cfg["command"] != command:
            raise ConfigError(f"manifest command {cfg['command']!r} does not match {command!r}")
        cfg = cfg["config"]
    cfg = copy.deepcopy(cfg)
    if "command" in cfg and cfg["command"] != command:
        raise ConfigError(f"config command {cfg['command']!r} does not match {command!r}")
    if seed is not None:
        cfg["global_seed"] = seed
    if out_dir is not None:
        cfg.setdefault("output", {})["directory"] = str(out_dir)
    cfg.setdefault("command", command)
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_TOP_KEYS = {"command", "system", "ld", "section", "output", "global_seed",
             "poincare", "frequency", "extract"}


def _common(cfg, need):
    _check_keys(cfg, _TOP_KEYS, set(need) | {"output"}, "config")
    global_seed = cfg.get("global_seed", 0)
    if not isinstance(global_seed, int):
        raise ConfigError("global_seed: expected an integer")
    out_dir, fmt = parse_output(cfg["output"])
    out_dir = Path(out_dir)
    return global_seed, out_dir, fmt


def _write_fields(out_dir, fmt, name, fields, cfg):
    outputs = []
    if fmt == "csv":
        outputs += out_io.write_field_csv(out_dir, name, fields)
    else:
        outputs += out_io.write_field_bin(out_dir, "forward", fields.forward, cfg)
        outputs += out_io.write_field_bin(out_dir, "backward", fields.backward, cfg)
        outputs += out_io.write_field_bin(out_dir, "total", fields.total, cfg)
    return outputs


def cmd_field(cfg, threads):
    global_seed, out_dir, fmt = _common(cfg, {"system", "ld", "section"})
    system = parse_system(cfg["system"])
    params = parse_ld(cfg["ld"], global_seed)
    spec = parse_section(cfg["section"])
    grid = build_grid(spec, system)
    if grid.feasible is not None and not grid.feasible.any():
        raise ConfigError("empty feasible set")
    fields = ld_field(system, grid, params, threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir, _write_fields(out_dir, fmt, "field", fields, cfg)


def cmd_stochastic_field(cfg, threads):
    global_seed, out_dir, fmt = _common(cfg, {"system", "ld", "section"})
    system = parse_system(cfg["system"])
    if not isinstance(system, Duffing):
        raise ConfigError("stochastic-field requires the duffing system")
    params = parse_ld(cfg["ld"], global_seed)
    if params.ensemble is None:
        raise ConfigError("stochastic-field requires an ld.ensemble block")
    spec = parse_section(cfg["section"])
    grid = build_grid(spec, system)
    fields = stochastic_ld_field(system, grid, params, threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir, _write_fields(out_dir, fmt, "field", fields, cfg)


def cmd_time_average(cfg, threads):
    global_seed, out_dir, fmt = _common(cfg, {"system", "ld", "section"})
    system = parse_system(cfg["system"])
    params = parse_ld(cfg["ld"], global_seed)
    spec = parse_section(cfg["section"])
    grid = build_grid(spec, system)
    if grid.feasible is not None and not grid.feasible.any():
        raise ConfigError("empty feasible set")
    fields = ld_field(system, grid, params, threads=threads)
    avg = time_average_field(fields, params)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_fields(out_dir, fmt, "field", fields, cfg)
    if fmt == "csv":
        outputs += out_io.write_scalar_csv(out_dir, "time_average", avg)
    else:
        outputs += out_io.write_field_bin(out_dir, "time_average", avg, cfg)
    return out_dir, outputs


def cmd_poincare(cfg, threads):
    global_seed, out_dir, fmt = _common(cfg, {"system", "section", "poincare"})
    system = parse_system(cfg["system"])
    spec = parse_section(cfg["section"])
    blk = cfg["poincare"]
    _check_keys(blk, {"t_max", "dt", "max_crossings", "points"}, {"t_max", "dt", "points"},
                "poincare")
    t_max = _number(blk, "t_max", "poincare")
    dt = _number(blk, "dt", "poincare")
    max_cross = blk.get("max_crossings", 10**6)
    pts = np.asarray(blk["points"], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError("poincare.points: expected a list of [a, b] section points")
    states, feasible = lift_points(system, spec, pts)
    if not feasible.all():
        raise ConfigError(f"poincare.points: {int((~feasible).sum())} infeasible point(s)")
    orbits = poincare_map_batch(system, states, spec, t_max, dt, max_cross)
    rows = []
    for k, orbit in enumerate(orbits):
        for t, (a, b) in zip(orbit.times, orbit.points):
            rows.append((k, float(t), float(a), float(b)))
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir, out_io.write_points_csv(out_dir, "orbits", "orbit,time,ax1,ax2", rows)


def cmd_frequency(cfg, threads):
    global_seed, out_dir, fmt = _common(cfg, {"system", "frequency"})
    system = parse_system(cfg["system"])
    blk = cfg["frequency"]
    _check_keys(blk, {"tau_max", "n_samples", "dt", "x0"}, {"tau_max", "n_samples", "x0"},
                "frequency")
    tau_max = _number(blk, "tau_max", "frequency")
    n_samples = blk["n_samples"]
    if not isinstance(n_samples, int) or n_samples < 64:
        raise ConfigError("frequency.n_samples: expected an integer >= 64")
    dt = _number(blk, "dt", "frequency", 1e-3)
    x0v = blk["x0"]
    if not isinstance(x0v, list) or len(x0v) != 2 * system.dim:
        raise ConfigError("frequency.x0: expected a flat [q..., p...] state")
    x0 = PhaseState(q=np.asarray(x0v[: system.dim]), p=np.asarray(x0v[system.dim:]))
    taus = np.linspace(0.0, tau_max, n_samples)
    series = g_series(system, x0, taus, dt=dt)
    est = frequency_from_series(series)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = out_io.write_points_csv(out_dir, "g_series", "tau,g",
                                      [(float(t), float(g)) for t, g in series])
    (out_dir / "frequency.json").write_text(json.dumps(
        {"omega": est.omega, "magnitude": est.magnitude, "resolution": est.resolution},
        sort_keys=True, indent=2) + "\n")
    return out_dir, outputs + ["frequency.json"]


def cmd_extract(cfg, threads):
    global_seed, out_dir, fmt = _common(cfg, {"extract"})
    blk = cfg["extract"]
    _check_keys(blk, {"input", "component", "percentile"}, {"input", "component"}, "extract")
    component = blk["component"]
    if component not in ("forward", "backward", "total"):
        raise ConfigError("extract.component: must be forward, backward or total")
    percentile = _number(blk, "percentile", "extract", 95.0)
    src = Path(blk["input"])
    if src.name == "manifest.json" or src.suffix == "" or src.is_dir():
        src = (src if src.is_dir() else src.parent) / f"{component}.meta.json"
    if not src.name.endswith(".meta.json"):
        raise ConfigError("extract.input: expected a .meta.json sidecar or an output directory")
    fld = out_io.read_field_bin(src)
    feats = extract_singular_features(fld, percentile=percentile, source=component)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [(float(x), float(y)) for x, y in feats.points]
    return out_dir, out_io.write_points_csv(out_dir, f"features_{component}", "x,y", rows)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def bench_rows():
    """Analytic oracle suite; each row is (name, computed, expected, tolerance)."""
    rows = []
    tau_c = saddle_convergence_time(1.0, 8)
    rows.append(("saddle convergence-time identity",
                 math.exp(-2.0 * tau_c), 1e-8, 1e-22))
    rows.append(("saddle G-limit |G(9.21,1)-1|",
                 abs(saddle_G(tau_c, 1.0) - 1.0), 0.0, 1e-6))

    saddle = Saddle(lam=1.0)
    params = LDParams(tau_f=1.0, tau_b=0.0, dt=1e-3)
    rows.append(("saddle forward LD vs closed form (q0=0, p0=1, tau=1)",
                 ld_forward(saddle, np.array([0.0, 1.0]), params),
                 saddle_forward_ld_closed_form(1.0, 0.0, 1.0, 1.0), 1e-6))
    p9 = LDParams(tau_f=tau_c, tau_b=0.0, dt=1e-3)
    rows.append(("saddle stable-manifold limit S_f(1,-1) -> 1/2",
                 ld_forward(saddle, np.array([1.0, -1.0]), p9), 0.5, 1e-4))
    q0, p0, tau = 0.7, 0.3, 2.0
    h0 = 0.5 * (p0**2 - q0**2)
    rows.append(("saddle total-LD energy identity",
                 saddle_total_ld_closed_form(1.0, q0, p0, tau)
                 - 0.5 * (q0**2 + p0**2) * math.sinh(2 * tau),
                 2.0 * tau * h0, 1e-10))

    harm = Harmonic(m=1.0, omega=1.0)
    h0 = 0.5
    amp = math.sqrt(2.0 * h0)
    avg = ld_time_average(harm, np.array([amp, 0.0]),
                          LDParams(tau_f=750.0, tau_b=0.0, dt=1e-2))
    rows.append(("harmonic <S_f>(750) vs H0", avg, h0, h0 / (2.0 * 750.0)))
    rows.append(("harmonic forward LD vs closed form (tau=pi)",
                 ld_forward(harm, np.array([amp, 0.0]),
                            LDParams(tau_f=math.pi, tau_b=0.0, dt=1e-3)),
                 harmonic_forward_ld_closed_form(1.0, 1.0, h0, math.pi), 1e-6))

    pt = ProtonTransfer()
    eqs = proton_transfer_equilibria(pt)
    saddle_eq = next(e for e in eqs if e.kind == "saddle")
    lam_formula = 2.0 / pt.y_well * math.sqrt(pt.barrier / pt.m)
    lam_num = max(ev.real for ev in saddle_eq.eigenvalues)
    rows.append(("proton-transfer saddle eigenvalue vs formula", lam_num, lam_formula, 1e-6))
    om_num = max(abs(ev.imag) for ev in saddle_eq.eigenvalues)
    rows.append(("proton-transfer center eigenvalue vs omega", om_num, pt.omega, 1e-6))
    vf_norm = max(float(np.max(np.abs(vector_field(pt, e.state)))) for e in eqs)
    rows.append(("proton-transfer equilibria residual", vf_norm, 0.0, 1e-12))

    worst = 0.0
    for t in np.linspace(0.1, 10.0, 25):
        second = -t + 0.5 * math.sinh(2.0 * t)
        worst = min(worst, second) if worst else second
    rows.append(("saddle forward-LD curvature min over tau grid", worst, abs(worst), 1e-12))
    return rows


def cmd_bench(out_dir):
    rows = bench_rows()
    failures = 0
    lines = ["name,computed,expected,tolerance,pass"]
    print(f"{'row':55s} {'computed':>14s} {'expected':>14s} {'tol':>9s}  result")
    for name, computed, expected, tol in rows:
        ok = abs(computed - expected) <= tol
        failures += 0 if ok else 1
        print(f"{name:55s} {computed:14.8g} {expected:14.8g} {tol:9.1e}  {'pass' if ok else 'FAIL'}")
        lines.append(f"{name},{computed!r},{expected!r},{tol!r},{int(ok)}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "bench.csv").write_text("\n".join(lines) + "\n")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_DISPATCH = {
    "field": cmd_field,
    "stochastic-field": cmd_stochastic_field,
    "time-average": cmd_time_average,
    "poincare": cmd_poincare,
    "frequency": cmd_frequency,
    "extract": cmd_extract,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ldaction",
                                     description="Action-based Lagrangian descriptor runner")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to the JSON run config")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--threads", type=int, default=1, help="worker count")
    args = parser.parse_args(argv)

    if args.command == "bench":
        try:
            return cmd_bench(args.out)
        except Exception as e:  # noqa: BLE001
            print(f"error: {e}", file=sys.stderr)
            return 3

    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.command, out_dir=args.out, seed=args.seed)
        out_dir, outputs = _DISPATCH[args.command](cfg, max(1, args.threads))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {e}", file=sys.stderr)
        return 3
    manifest = out_io.write_manifest(out_dir, args.command, cfg, __version__, outputs)
    for name in outputs + [manifest]:
        print(out_dir / name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
