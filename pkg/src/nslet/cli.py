"""Command-line front end: ``nslet <command> [--config FILE] [flags]``.

Configuration comes from defaults, then a ``key = value`` file, then the
``--nu``, ``--order``, ``--out`` and ``--seed`` flags (later wins).  Every
command writes ``summary.json`` to the output directory with the
tolerances used, estimated errors and a pass/fail entry per check.

Exit codes: 0 success, 2 validation failure, 3 tolerance failure
(flux-check and series-residual), 4 I/O failure.
"""
import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_VALIDATION, EXIT_TOLERANCE, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("flux-check", "kernel-eval", "evolve", "impulse", "pressure", "series-residual")


class ConfigError(ValueError):
    """Invalid configuration; the message carries the file line when known."""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# key: (type, default, check, description of the check)
COMMON = {
    "nu": (float, 1.0, _pos, "positive"),
    "order": (int, None, _pos, "positive"),
    "out": (str, "nslet-out", None, None),
    "seed": (int, 0, _nonneg, "non-negative"),
}
SCHEMA = {
    "flux-check": {
        "order": (int, 32, _pos, "positive"),
        "radius": (float, 1.0, _pos, "positive"),
        "duration": (float, 1.0, _pos, "positive"),
    },
    "kernel-eval": {
        "order": (int, 0, lambda v: v == 0, "0 (order 1 needs a tabulated correction)"),
        "kernel": (str, "stokeslet", lambda v: v in ("stokeslet", "eulerlet", "oseenlet"), "stokeslet|eulerlet|oseenlet"),
        "points": (int, 16, _pos, "positive"),
        "tau": (float, 1.0, _pos, "positive"),
        "radius_max": (float, 3.0, _pos, "positive"),
        "drift": (str, "0,0,0", None, None),
    },
    "evolve": {
        "order": (int, 0, lambda v: v == 0, "0"),
        "grid": (int, 36, _pos, "positive"),
        "extent": (float, 6.0, _pos, "positive"),
        "sigma": (float, 1.0, _pos, "positive"),
        "amplitude": (float, 1.0, None, None),
        "time": (float, 1.0, _pos, "positive"),
        "out_grid": (int, 6, _pos, "positive"),
    },
    "impulse": {
        "order": (int, 8, _pos, "positive"),
        "grid": (int, 24, _pos, "positive"),
        "extent": (float, 4.5, _pos, "positive"),
        "sigma": (float, 1.0, _pos, "positive"),
        "amplitude": (float, 1.0, None, None),
        "radius": (float, 3.0, _pos, "positive"),
        "duration": (float, 0.5, _pos, "positive"),
        "nu": (float, 0.5, _pos, "positive"),
    },
    "pressure": {
        "order": (int, 4, _pos, "positive"),
        "grid": (int, 32, _pos, "positive"),
        "extent": (float, 6.0, _pos, "positive"),
        "sigma": (float, 1.0, _pos, "positive"),
        "amplitude": (float, 1.0, None, None),
        "time": (float, 1.0, _pos, "positive"),
        "nu": (float, 0.01, _pos, "positive"),
        "probes": (int, 8, _pos, "positive"),
        "dt": (float, 1e-3, _pos, "positive"),
    },
    "series-residual": {
        "order": (int, 4, _pos, "positive"),
        "probes": (int, 4, _pos, "positive"),
        "time": (float, 1.0, _pos, "positive"),
        "r_min": (float, 2.0, _pos, "positive"),
        "r_max": (float, 5.0, _pos, "positive"),
        "r_cut": (float, 0.5, _pos, "positive"),
    },
}


def schema(command):
    keys = dict(COMMON)
    keys.update(SCHEMA[command])
    return keys


def _convert(key, raw, spec, where):
    kind, _, check, what = spec
    try:
        value = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {key} = {raw!r} is not a valid {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{where}: {key} must be finite")
    if check is not None and not check(value):
        raise ConfigError(f"{where}: {key} must be {what}, got {raw!r}")
    return value


def parse_config_text(text, command, source="config"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    keys = schema(command)
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected key = value, got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key == "command":
            if raw != command:
                raise ConfigError(f"{where}: config is for command {raw!r}, not {command!r}")
            continue
        if key not in keys:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        out[key] = _convert(key, raw, keys[key], where)
    return out


def resolve_config(command, file_values=None, flags=None):
    """Defaults, then file values, then flag overrides."""
    keys = schema(command)
    cfg = {k: spec[1] for k, spec in keys.items()}
    cfg.update(file_values or {})
    for key, raw in (flags or {}).items():
        if raw is not None:
            cfg[key] = _convert(key, raw, keys[key], f"--{key}")
    cfg["command"] = command
    return cfg


def _check(name, value, target, tol, estimated_error=None):
    value = np.asarray(value, float)
    err = float(np.max(np.abs(value - np.asarray(target, float))))
    return {
        "name": name,
        "value": value.tolist(),
        "target": np.asarray(target, float).tolist(),
        "tolerance": tol,
        "error": err,
        "estimated_error": estimated_error,
        "passed": bool(err <= tol),
    }


def _rng(cfg):
    return np.random.default_rng(cfg["seed"])


def _blob_grid(cfg):
    from nslet.representation import GridSpec

    return GridSpec.cell_centred(-cfg["extent"], cfg["extent"], cfg["grid"])


def cmd_flux_check(cfg, out):
    from nslet.flux import euler_bernoulli_flux, euler_momentum_flux, euler_viscous_flux, stokeslet_total_flux
    from nslet.geometry import SpherinderSurface

    s = SpherinderSurface((0.0, 0.0, 0.0), cfg["radius"], -cfg["duration"], cfg["duration"])
    o = cfg["order"]
    reports = {
        "euler_momentum": euler_momentum_flux(s, o),
        "euler_viscous": euler_viscous_flux(s, o, nu=cfg["nu"]),
        "euler_bernoulli": euler_bernoulli_flux(s, o),
        "stokeslet_total": stokeslet_total_flux(s, o, nu=cfg["nu"]),
    }
    targets = {
        "euler_momentum": (-np.eye(3), 1e-6),
        "euler_viscous": (np.zeros((3, 3)), 1e-8),
        "euler_bernoulli": (np.zeros((3, 3)), 1e-8),
        "stokeslet_total": (-np.eye(3), 1e-4),
    }
    path = out / "flux_reports.json"
    _write_json(path, {k: r.as_dict() for k, r in reports.items()})
    checks = [_check(k, reports[k].matrix, *targets[k], reports[k].estimated_error) for k in reports]
    return checks, [path.name], True


def cmd_kernel_eval(cfg, out):
    from nslet.kernels import eulerlet_tensor, oseenlet_tensor, stokeslet_tensor

    rng = _rng(cfg)
    n = cfg["points"]
    d = rng.normal(size=(n, 3))
    d *= (rng.uniform(0.1, 1.0, size=n) * cfg["radius_max"] / np.linalg.norm(d, axis=1))[:, None]
    tau = np.full(n, cfg["tau"])
    try:
        drift = np.array([float(c) for c in cfg["drift"].split(",")])
    except ValueError:
        raise ConfigError(f"drift must be three comma-separated numbers, got {cfg['drift']!r}") from None
    if drift.shape != (3,):
        raise ConfigError(f"drift must be three comma-separated numbers, got {cfg['drift']!r}")
    kind = cfg["kernel"]
    if kind == "stokeslet":
        u = stokeslet_tensor(d, tau, cfg["nu"])
    elif kind == "oseenlet":
        u = oseenlet_tensor(d, tau, cfg["nu"], drift)
    else:
        u = eulerlet_tensor(d, tau)
    path = out / "kernel.csv"
    cols = ["dx1", "dx2", "dx3", "tau"] + [f"u{k + 1}{i + 1}" for k in range(3) for i in range(3)]
    rows = [[*a, b, *c.ravel()] for a, b, c in zip(d, tau, u)]
    _write_csv(path, cols, rows)
    checks = [_check("finite_values", float(np.all(np.isfinite(u))), 1.0, 0.0)]
    return checks, [path.name], False


def cmd_evolve(cfg, out):
    from nslet.fieldio import emit_field
    from nslet.representation import GridSpec, SampledField, gaussian_blob_velocity, ivp_velocity, make_divfree_field

    grid = _blob_grid(cfg)
    u0 = make_divfree_field("gaussian_blob", grid, sigma=cfg["sigma"], amplitude=cfg["amplitude"])
    half = 0.5 * cfg["extent"]
    out_grid = GridSpec.cell_centred(-half, half, cfg["out_grid"])
    q = out_grid.points()
    t = cfg["time"]
    rows = np.column_stack([np.full(len(q), t), q])
    u = ivp_velocity(u0, rows, cfg["nu"])
    field = SampledField(out_grid, u.reshape(out_grid.dims + (3,)), t, cfg["nu"])
    path = emit_field(field, out / "field.csv", kernel_order=cfg["order"])
    ref = gaussian_blob_velocity(q, cfg["sigma"], cfg["amplitude"], t, cfg["nu"])
    norm = float(np.linalg.norm(ref))
    rel = float(np.linalg.norm(u - ref)) / norm if norm > 0 else float(np.linalg.norm(u))
    checks = [_check("heat_widened_oracle_rel_l2", rel, 0.0, 0.02)]
    return checks, [path.name, path.name + ".meta.json"], False


def cmd_impulse(cfg, out):
    from nslet.representation import SampledField, force_impulse_boundary, force_impulse_initial

    # a solenoidal blob carries no impulse, so the check uses an x1-directed Gaussian
    grid = _blob_grid(cfg)
    x = grid.points()
    vals = np.zeros((len(x), 3))
    vals[:, 0] = cfg["amplitude"] * np.exp(-np.sum(x**2, axis=1) / cfg["sigma"] ** 2)
    u0 = SampledField(grid, vals.reshape(grid.dims + (3,)))
    J0 = force_impulse_initial(u0)
    o = cfg["order"]
    Jb = force_impulse_boundary(u0, cfg["radius"], cfg["duration"], cfg["nu"], orders=(o, max(2, o // 2)))
    scale = float(np.linalg.norm(J0))
    path = out / "impulse.json"
    _write_json(path, {"initial": np.asarray(J0).tolist(), "boundary": np.asarray(Jb).tolist()})
    rel = float(np.linalg.norm(Jb - J0)) / scale if scale > 0 else float(np.linalg.norm(Jb))
    checks = [_check("boundary_vs_initial_rel", rel, 0.0, 0.01)]
    return checks, [path.name], False


def cmd_pressure(cfg, out):
    from nslet.pressure import pressure_at, write_probe_csv
    from nslet.representation import gaussian_blob_velocity

    sigma, amp, nu = cfg["sigma"], cfg["amplitude"], cfg["nu"]

    def provider(p):
        return gaussian_blob_velocity(p[:, 1:], sigma, amp, p[:, 0], nu)

    box = _blob_grid(cfg)
    probes = _rng(cfg).uniform(-1.5 * sigma, 1.5 * sigma, size=(cfg["probes"], 3))
    p, pair = pressure_at(provider, box, probes, cfg["time"], dt=cfg["dt"], orders=cfg["order"])
    path = write_probe_csv(out / "pressure.csv", pair, p)
    checks = [_check("finite_pressure", float(np.all(np.isfinite(p))), 1.0, 0.0)]
    return checks, [path.name], False


def cmd_series_residual(cfg, out):
    from nslet.series import DuhamelRule, curl_residual

    rng = _rng(cfg)
    d = rng.normal(size=(cfg["probes"], 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    if not cfg["r_cut"] < cfg["r_min"] <= cfg["r_max"]:
        raise ConfigError("need r_cut < r_min <= r_max")
    x = d * rng.uniform(cfg["r_min"], cfg["r_max"], size=(len(d), 1))
    o = cfg["order"]
    res = {}
    for level in (o, 2 * o):
        rule = DuhamelRule(level, level, cfg["r_cut"])
        res[level] = float(np.linalg.norm(curl_residual(x, cfg["time"], cfg["nu"], rule)))
    ratio = res[o] / res[2 * o] if res[2 * o] > 0 else math.inf
    path = out / "residual.json"
    _write_json(path, {"probes": x.tolist(), "residual": {str(k): v for k, v in res.items()}, "ratio": ratio})
    check = {
        "name": "residual_drop_on_order_doubling",
        "value": ratio,
        "target": ">= 4",
        "tolerance": 4.0,
        "error": None,
        "estimated_error": abs(res[o] - res[2 * o]),
        "passed": bool(ratio >= 4.0),
    }
    return [check], [path.name], True


HANDLERS = {
    "flux-check": cmd_flux_check,
    "kernel-eval": cmd_kernel_eval,
    "evolve": cmd_evolve,
    "impulse": cmd_impulse,
    "pressure": cmd_pressure,
    "series-residual": cmd_series_residual,
}


def _write_json(path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(format(float(v), ".17g") for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def run(cfg):
    """Execute one resolved config; returns the exit status."""
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        checks, artifacts, gated = HANDLERS[cfg["command"]](cfg, out)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    passed = all(c["passed"] for c in checks)
    summary = {
        "command": cfg["command"],
        # the output directory is left out so summaries compare across locations
        "config": {k: cfg[k] for k in sorted(cfg) if k != "out"},
        "checks": checks,
        "artifacts": artifacts,
        "passed": passed,
    }
    try:
        _write_json(out / "summary.json", summary)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    if gated and not passed:
        return EXIT_TOLERANCE
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nslet", description="Fundamental-solution verification and evolution runs.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--nu", help="kinematic viscosity")
    parser.add_argument("--order", help="quadrature order (kernel order for kernel-eval and evolve)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", help="seed for random probe sets")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        file_values = {}
        if args.config:
            try:
                text = Path(args.config).read_text()
            except (OSError, UnicodeDecodeError) as exc:
                raise ConfigError(f"{args.config}:0: cannot read config ({exc})") from None
            file_values = parse_config_text(text, args.command, args.config)
        flags = {"nu": args.nu, "order": args.order, "out": args.out, "seed": args.seed}
        cfg = resolve_config(args.command, file_values, flags)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
