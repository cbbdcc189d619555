"""Command-line front end.

Every subcommand takes a JSON or YAML config file (optional), ``--set
key=value`` overrides with dotted keys, and ``--seed``. Exit codes: 0 pass,
1 negative verdict, 2 usage or config error, 3 runtime or domain error.
Errors are printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import copy
import io
import json
import math
import sys
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import expr as ex
from . import geometry as geo
from .dynamics import action_equivalence, newton_trajectory, project_geodesic
from .flatmap import (PotentialSpec, build_map_general, map_ho_const, map_ho_timedep,
                      map_linear_galilean, map_linear_mobius, profile_residuals, verify_map)
from .quantum import (FreePacket, crank_nicolson, l2_distance, map_free_to_potential,
                      potential_wavefunction, sample_series, schrodinger_residual)
from .schwarzian import solve_hill

EXIT_OK, EXIT_NEGATIVE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

COMMANDS = ("flatness", "curvature", "hill-solve", "map-build", "map-verify",
            "classical-sim", "quantum-sim", "action-check")

TOLERANCES = {"zero": 1e-9, "riemann": 1e-8, "integrator": 1e-10, "wronskian": 1e-8,
              "map": 1e-6, "projection": 1e-6, "action": 1e-6, "residual": 1e-2,
              "oracle": 1e-3}

TIME_DEFAULTS = {
    "hill-solve": {"t0": -1.0, "t1": 1.0, "steps": 200},
    "classical-sim": {"t0": 0.0, "t1": 1.0, "steps": 200},
    "quantum-sim": {"t0": 0.0, "t1": 0.3, "steps": 4096},
    "action-check": {"t0": 0.0, "t1": 0.7, "steps": 1},
}

CSV_COMMANDS = ("classical-sim", "hill-solve")
FIGURE_COMMANDS = ("classical-sim", "quantum-sim", "hill-solve", "map-build")


class ConfigError(Exception):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("eisenlift").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


# ------------------------------------------------------------------ config

def read_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from err
    try:
        if p.suffix.lower() in (".yaml", ".yml"):
            import yaml
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except Exception as err:  # parser errors differ between JSON and YAML
        raise ConfigError(f"cannot parse config {path}: {err}") from err
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is read as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value: {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [k for k in key.strip().split(".") if k]
    if not parts:
        raise ConfigError(f"empty key in override {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {assignment!r} descends into a non-mapping")
        node = child
    node[parts[-1]] = value


def validate_config(cfg: dict) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {err.message}")


class Run:
    """Config accessors with command-specific defaults."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.seed = int(cfg.get("seed", 0))
        self.tol = {**TOLERANCES, **cfg.get("tolerances", {})}
        self.time = {**TIME_DEFAULTS.get(command, {"t0": 0.0, "t1": 1.0, "steps": 100}),
                     **cfg.get("time", {})}
        self.output = {"format": "json", "figure": False, **cfg.get("output", {})}
        self.params = dict(cfg.get("potential", {}).get("params", {}))

    def expression(self, text: str) -> ex.Expr:
        return ex.parse(text, list(self.params))

    def potential(self) -> tuple:
        """``(V, spec or None)``; ``spec`` only when given through coefficients."""
        pot = self.cfg.get("potential")
        if not pot or not ({"V", "a", "B", "C"} & set(pot)):
            raise ConfigError("this command needs a potential (V or a/B/C)")
        if "V" in pot:
            return self.expression(pot["V"]), None
        spec = PotentialSpec(*(self.expression(pot.get(k, "0")) for k in ("a", "B", "C")),
                             params=self.params)
        return spec.potential(), spec

    def omega(self) -> ex.Expr:
        return self.expression(self.cfg.get("omega", "1"))

    def flattening_map(self):
        section = self.cfg.get("map")
        if not section:
            raise ConfigError("this command needs a map section")
        family = section["family"]
        p = section.get("parameters", {})
        tol = self.tol["integrator"]
        if family == "ho_const":
            w = p.get("omega0", 1.0)
            fmap = map_ho_const(w, p.get("c1", 0.0), p.get("c2", 0.0), p.get("c3", 0.0))
            return fmap, PotentialSpec(ex.as_expr(0.5 * w * w))
        if family == "ho_timedep":
            om = self.expression(p.get("omega", self.cfg.get("omega", "1")))
            fmap = map_ho_timedep(om, p.get("h0"), p.get("h1"), self.params,
                                  tuple(p.get("t_range", (-1.0, 1.0))), tol)
            return fmap, PotentialSpec.oscillator(om, self.params)
        if family == "linear_mobius":
            B = self.expression(p.get("B", "1"))
            fmap = map_linear_mobius(B, p.get("k", 1.0), p.get("c", 1.0), p.get("d", 0.0),
                                     p.get("c1", 0.0), p.get("c2", 0.0), self.params,
                                     p.get("tau_min", 0.1), min(tol, 1e-12))
            return fmap, PotentialSpec(B=B, params=self.params)
        if family == "linear_galilean":
            B = self.expression(p.get("B", "1"))
            fmap = map_linear_galilean(B, self.params, p.get("h0", 0.0), p.get("h1", 0.0),
                                       tuple(p.get("tau_range", (-5.0, 5.0))), min(tol, 1e-12))
            return fmap, PotentialSpec(B=B, params=self.params)
        _, spec = self.potential()
        if spec is None:
            raise ConfigError("the general map needs the potential as coefficients a, B, C")
        fmap = build_map_general(spec, tuple(p.get("t_range", (-1.0, 1.0))),
                                 p.get("h0", 0.0), p.get("h1", 0.0), tol)
        return fmap, spec


# ------------------------------------------------------------------ helpers

def _finite_or_none(v: float):
    return float(v) if math.isfinite(v) else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite_or_none(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _tensor_entries(tensor, pts, params):
    values = tensor.evaluate(pts, params)
    points = [{"t": float(t), "x": float(x)} for t, x in zip(pts["t"], pts["x"])]
    return [{"indices": list(idx), "expression": ex.to_string(tensor[idx]),
             "samples": [{"point": pt, "value": float(v)} for pt, v in zip(points, values[idx])]}
            for idx in tensor.nonzero()]


# ------------------------------------------------------------------ commands

def cmd_flatness(run: Run):
    V, _ = run.potential()
    omega = run.omega()
    n = run.cfg.get("samples", 200)
    if "omega" in run.cfg:
        rep = geo.flatness_report(V, omega, run.params, n, run.tol["zero"], run.tol["riemann"],
                                  seed=run.seed)
    else:
        rep = geo.conformal_flatness_report(V, run.params, n, run.tol["zero"], seed=run.seed,
                                            cross_check=True)
        if rep.conformally_flat:
            # with Omega = 1 the metric is flat only if V_xx vanishes as well
            full = geo.flatness_report(V, omega, run.params, n, run.tol["zero"],
                                       run.tol["riemann"], seed=run.seed)
            extra = [c for c in full.conditions if c.name != "d3V/dx3"]
            full.conditions = rep.conditions + extra
            rep = full
    payload = {
        "command": "flatness", "potential": ex.to_string(V), "omega": ex.to_string(omega),
        "verdict": rep.verdict, "conformally_flat": rep.conformally_flat, "flat": rep.flat,
        "conditions": [{"name": c.name, "max_abs": c.max_abs, "tol": c.tol, "passed": c.passed}
                       for c in rep.conditions],
        "n_samples": rep.n_samples, "box": {k: list(v) for k, v in rep.box.items()},
        "seed": run.seed,
    }
    return payload, EXIT_OK if rep.flat else EXIT_NEGATIVE, None


def cmd_curvature(run: Run):
    V, _ = run.potential()
    omega = run.omega()
    metric = geo.build_metric(V, omega)
    gamma = geo.christoffel(metric)
    riem = geo.riemann(metric, gamma)
    ric = geo.ricci(metric, riem)
    scalar = geo.scalar_curvature(metric, ric)
    cot = geo.cotton(metric)
    rng = np.random.default_rng(run.seed)
    pts = geo.sample_points([V], run.cfg.get("samples", 5), rng, params=run.params,
                            positive=[omega])
    sc = ex.lambdify(scalar, ("t", "x"), run.params)(pts["t"], pts["x"])
    payload = {
        "command": "curvature", "potential": ex.to_string(V), "omega": ex.to_string(omega),
        "seed": run.seed,
        "tensors": {name: _tensor_entries(tensor, pts, run.params)
                    for name, tensor in (("christoffel", gamma), ("riemann", riem),
                                         ("ricci", ric), ("cotton", cot))},
        "scalar": {"expression": ex.to_string(scalar),
                   "samples": [{"point": {"t": float(t), "x": float(x)}, "value": float(v)}
                               for t, x, v in zip(pts["t"], pts["x"],
                                                  np.broadcast_to(sc, pts["t"].shape))]},
    }
    return payload, EXIT_OK, None


def cmd_hill(run: Run):
    omega = run.omega()
    t0, t1, steps = run.time["t0"], run.time["t1"], run.time["steps"]
    hill = solve_hill(omega, (t0, t1), run.tol["integrator"], params=run.params)
    lo, hi = hill.patch
    t = np.linspace(lo, hi, steps + 1)
    if lo != hill.t_lo:
        t = t[1:]
    if hi != hill.t_hi:
        t = t[:-1]
    u1, du1, u2, du2 = hill.state(t)
    wr = u2 * du1 - u1 * du2
    passed = hill.wronskian_drift < run.tol["wronskian"]
    payload = {
        "command": "hill-solve", "omega": ex.to_string(omega), "t_range": [t0, t1],
        "patch": [lo, hi], "wronskian_drift": hill.wronskian_drift,
        "u2_zeros": list(hill.u2_zeros), "passed": passed,
        "samples": [{"t": a, "u1": b, "u2": c, "W": w, "phi": b / c, "omega": 1 / c ** 2}
                    for a, b, c, w in zip(t.tolist(), u1.tolist(), u2.tolist(), wr.tolist())],
    }
    columns = ("t", "u1", "u2", "W", "phi", "omega")
    rows = [[s[c] for c in columns] for s in payload["samples"]]
    table = (columns, rows, {"wronskian_drift": hill.wronskian_drift})

    def figure(path):
        from .plotting import plot_two_panel
        plot_two_panel(path, t, {"u1": u1, "u2": u2}, {"Omega": 1 / u2 ** 2}, "t",
                       "solutions", "Omega")

    return payload, EXIT_OK if passed else EXIT_NEGATIVE, figure, table


def cmd_map_build(run: Run):
    fmap, spec = run.flattening_map()
    report = verify_map(fmap, spec, run.cfg.get("samples", 100), run.seed,
                        tolerance=run.tol["map"])
    payload = {"command": "map-build", **fmap.descriptor(), "verification": report.to_dict()}

    def figure(path):
        from .plotting import plot_lines
        tau = np.linspace(*fmap.tau_sample, 201)
        plot_lines(path, tau, {"h": fmap.h(tau), "p": fmap.p(tau), "Omega": fmap.omega_tau(tau)},
                   "tau", "profile", fmap.family)

    return payload, EXIT_OK if report.passed else EXIT_NEGATIVE, figure


def cmd_map_verify(run: Run):
    fmap, spec = run.flattening_map()
    report = verify_map(fmap, spec, run.cfg.get("samples", 100), run.seed,
                        tolerance=run.tol["map"])
    profiles = profile_residuals(fmap, spec, seed=run.seed)
    passed = report.passed and max(profiles.values()) < run.tol["map"]
    payload = {"command": "map-verify", "family": fmap.family, "parameters": fmap.parameters,
               "verification": report.to_dict(), "profiles": profiles, "passed": passed}
    return payload, EXIT_OK if passed else EXIT_NEGATIVE, None


def cmd_classical(run: Run):
    V, _ = run.potential()
    init = {"x0": 1.0, "v0": 0.0, "m": 1.0, **run.cfg.get("initial", {})}
    t0, t1, steps = run.time["t0"], run.time["t1"], run.time["steps"]
    proj = project_geodesic(V, run.omega(), init["x0"], init["v0"], (t0, t1), init["m"],
                            steps + 1, run.tol["integrator"], run.params)
    passed = proj.max_abs_dx < run.tol["projection"]
    columns = ("t", "x_newton", "x_projected", "null_norm")
    rows = [list(r) for r in zip(proj.t.tolist(), proj.x_newton.tolist(),
                                 proj.x_projected.tolist(), proj.null_norm.tolist())]
    summary = {"max_abs_dx": proj.max_abs_dx, "max_abs_null_norm": proj.max_abs_null_norm}
    payload = {"command": "classical-sim", "columns": list(columns), "rows": rows,
               "summary": summary, "passed": passed}

    def figure(path):
        from .plotting import plot_two_panel
        plot_two_panel(path, proj.t, {"Newton": proj.x_newton, "projected geodesic": proj.x_projected},
                       {"|dx|": np.abs(proj.x_projected - proj.x_newton) + 1e-300},
                       "t", "x", "|difference|")

    return payload, EXIT_OK if passed else EXIT_NEGATIVE, figure, (columns, rows, summary)


def cmd_quantum(run: Run):
    fmap, spec = run.flattening_map()
    g = {"x_min": -20.0, "x_max": 20.0, "n": 2048, **run.cfg.get("grid", {})}
    grid = (g["x_min"], g["x_max"], g["n"])
    pk = FreePacket(**{"x0": 0.0, "p0": 0.0, "s": 1.0, **run.cfg.get("packet", {})})
    t0, t1, steps = run.time["t0"], run.time["t1"], run.time["steps"]
    V = spec.potential()
    phi_v = potential_wavefunction(fmap, pk)
    start = map_free_to_potential(fmap, pk, t0, grid)
    final = map_free_to_potential(fmap, pk, t1, grid)
    dx = final.dx
    residual = schrodinger_residual(sample_series(phi_v, t1, dx, grid), V, spec.params)
    oracle = crank_nicolson(start, V, t0, t1, steps, spec.params)
    err = l2_distance(oracle, final)
    passed = residual < run.tol["residual"] and err < run.tol["oracle"]
    payload = {
        "command": "quantum-sim", "family": fmap.family, "t": float(t1),
        "grid": {"x_min": g["x_min"], "x_max": g["x_max"], "n": g["n"]},
        "values": [[float(z.real), float(z.imag)] for z in final.values],
        "diagnostics": {"residual": residual, "norm": final.norm, "oracle_l2_error": err,
                        "passed": passed},
    }

    def figure(path):
        from .plotting import plot_two_panel
        plot_two_panel(path, final.x, {"mapped": np.abs(final.values) ** 2,
                                       "Crank-Nicolson": np.abs(oracle.values) ** 2},
                       {"|difference|": np.abs(final.values - oracle.values) + 1e-300},
                       "x", "|phi|^2", "|difference|")

    return payload, EXIT_OK if passed else EXIT_NEGATIVE, figure


def cmd_action(run: Run):
    fmap, spec = run.flattening_map()
    init = {"x0": 1.0, "v0": 0.0, **run.cfg.get("initial", {})}
    t0, t1 = run.time["t0"], run.time["t1"]
    path = newton_trajectory(spec.potential(), init["x0"], init["v0"], (t0, t1),
                             run.tol["integrator"], spec.params)
    rep = action_equivalence(spec, fmap, path, t0, t1)
    passed = rep.passed(run.tol["action"])
    payload = {"command": "action-check", "family": fmap.family, **rep.to_dict(), "passed": passed}
    return payload, EXIT_OK if passed else EXIT_NEGATIVE, None


HANDLERS = {
    "flatness": cmd_flatness, "curvature": cmd_curvature, "hill-solve": cmd_hill,
    "map-build": cmd_map_build, "map-verify": cmd_map_verify, "classical-sim": cmd_classical,
    "quantum-sim": cmd_quantum, "action-check": cmd_action,
}


# ------------------------------------------------------------------ output

def render_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def render_csv(columns, rows, summary: dict) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    buf.write("# summary: " + ", ".join(f"{k}={float(v)!r}" for k, v in summary.items()) + "\n")
    return buf.getvalue()


def execute(command: str, cfg: dict) -> tuple:
    """Validate ``cfg`` and run ``command``; returns ``(text, exit_code, run, figure)``."""
    validate_config(cfg)
    run = Run(command, cfg)
    fmt = run.output["format"]
    if fmt == "csv" and command not in CSV_COMMANDS:
        raise ConfigError(f"csv output is only available for {', '.join(CSV_COMMANDS)}")
    if run.output["figure"]:
        if command not in FIGURE_COMMANDS:
            raise ConfigError(f"figures are only available for {', '.join(FIGURE_COMMANDS)}")
        if "path" not in run.output:
            raise ConfigError("output.figure needs output.path")
    result = HANDLERS[command](run)
    payload, code, figure = result[:3]
    text = render_csv(*result[3]) if fmt == "csv" else render_json(payload)
    return text, code, run, figure


def _error(kind: str, message: str, code: int, position=None) -> int:
    obj = {"error": {"type": kind, "message": message, "exit_code": code, "position": position}}
    sys.stderr.write(json.dumps(obj, sort_keys=True) + "\n")
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eisenlift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "").replace("_", " "))
        p.add_argument("config", nargs="?", help="JSON or YAML config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config value (dotted key)")
        p.add_argument("--seed", type=int, help="seed for randomized sample points")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = copy.deepcopy(read_config(args.config))
        for item in args.overrides:
            apply_override(cfg, item)
        if args.seed is not None:
            cfg["seed"] = args.seed
        text, code, run, figure = execute(args.command, cfg)
    except ex.ExprSyntaxError as err:
        return _error(type(err).__name__, f"{err}\n{err.pointer()}", EXIT_CONFIG, err.position)
    except ConfigError as err:
        return _error("ConfigError", str(err), EXIT_CONFIG, err.position)
    except Exception as err:  # every other failure is a runtime/domain error
        return _error(type(err).__name__, str(err), EXIT_RUNTIME)

    path = run.output.get("path")
    try:
        if path:
            Path(path).write_text(text)
            if figure is not None and run.output["figure"]:
                from .plotting import figure_path
                figure(figure_path(path))
        else:
            sys.stdout.write(text)
    except OSError as err:
        return _error("OutputError", str(err), EXIT_RUNTIME)
    return code


if __name__ == "__main__":
    sys.exit(main())
