"""Command-line entry point.

Configuration precedence: command-line flags, then TODABIF_OUTPUT_DIR (for
the output directory only), then a JSON config file, then defaults.  Exit
codes: 0 success, 1 configuration error, 2 solver failure, 3 diagnostics
beyond thresholds.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from todabif import closed_forms as cf
from todabif.continuation import (
    BranchState,
    ContinuationError,
    FieldOverflowError,
    FieldPair,
    detect_bifurcations,
    perturb_cartan,
    trace_branch,
)
from todabif.diagnostics import MassDivergenceError, diagnose_state
from todabif.radial_calculus import WeightConfig, make_grid, planar_laplacian_apply, weighted_norm
from todabif.spectral import kernel_radial, spectrum

ENV_OUTPUT_DIR = "TODABIF_OUTPUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DIAGNOSTIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    grid_size: int | None = None
    stretch: float = 1.0
    alpha: float = 0.5
    mode_n: int = 2
    max_n: int = 5
    eps_max: float = 1e-3
    steps: int = 8
    mu_range: tuple[float, float] = (-1.6, 0.5)
    tol: float = 1e-10
    seed: int = 0
    noise: float = 0.0
    output_dir: str = "."
    family: str = "jostwang"
    mu: float = 0.0
    delta: float = 1.0
    a1: float = 1.0
    a2: float = 1.0
    mu_target: float = -0.95
    fields: str | None = None
    dump_fields: bool = False
    id: str | None = None

    def grid(self):
        # the Cartan system carries O(1) fields whose O(h²) error needs the finer default
        size = self.grid_size or (800 if self.command == "perturb-cartan" else 400)
        return make_grid(size, self.stretch)


def load_schema(name: str) -> dict:
    return json.loads(resources.files("todabif").joinpath("schemas", f"{name}.schema.json").read_text())


# ------------------------------------------------------------ output formatting

def fmt(x) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj, schema: str | None = None) -> None:
    obj = _plain(obj)
    if schema is not None:
        jsonschema.validate(obj, load_schema(schema))
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


# ------------------------------------------------------------ commands

def _report(rep, rid: str, context: dict) -> dict:
    d = rep.as_dict()
    d.update(id=rid, context=context)
    return d


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    write_csv(out / "spectrum.csv", ["n", "mu_n", "multiplicity"], ((m.n, m.mu_n, m.multiplicity) for m in spectrum(cfg.max_n)))
    return EXIT_OK


def cmd_kernel(cfg: RunConfig, out: Path) -> int:
    g = cfg.grid()
    P = kernel_radial(cfg.mode_n, g)
    write_csv(out / f"kernel_{cfg.mode_n}.csv", ["t", "r", "P_n"], zip(g.nodes_t, g.nodes_r, P))
    return EXIT_OK


def cmd_detect(cfg: RunConfig, out: Path) -> int:
    found = detect_bifurcations(tuple(cfg.mu_range), cfg.grid())
    write_csv(out / "detect.csv", ["mu", "n", "gap"], ((c.mu, c.index, c.gap) for c in found))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    g = cfg.grid()
    if cfg.family == "liouville":
        p = cf.LiouvilleParams(cfg.mu, cfg.delta)
        u = cf.liouville_eval(p, g.nodes_r)[0]
        v, mu = u.copy(), cfg.mu
        params = {"mu": mu, "delta": cfg.delta}
    else:
        p = cf.JostWangParams(cfg.a1, cfg.a2)
        u, v = cf.jostwang_eval(p, g.nodes_r)
        mu = -1.0
        params = {"a1": cfg.a1, "a2": cfg.a2}
    # pointwise residual of the planar system with the discrete Laplacian
    res_u = -planar_laplacian_apply(u, g) - 2.0 * np.exp(u) - mu * np.exp(v)
    res_v = -planar_laplacian_apply(v, g) - 2.0 * np.exp(v) - mu * np.exp(u)
    state = BranchState(FieldPair(u + v - 2.0 * _base(g, mu), u - v, 0.0, mu), 0.0, 0.0)
    rep = diagnose_state(state, g, cfg.tol)
    rid = cfg.id or cfg.family
    ctx = {
        "command": "verify-closed-form",
        "family": cfg.family,
        "params": params,
        "grid_size": g.size,
        "h": g.h,
        "pde_residual": float(max(np.max(np.abs(res_u)), np.max(np.abs(res_v)))),
    }
    write_json(out / f"report_{rid}.json", _report(rep, rid, ctx), "report")
    return EXIT_OK if rep.passed else EXIT_DIAGNOSTIC


def _base(g, mu):
    return FieldPair(np.zeros(g.size), np.zeros(g.size), 0.0, mu).base(g)


def _branch_rows(states):
    for s in states:
        d = s.diagnostics
        yield (
            s.arclength, s.fields.mu, s.epsilon, s.fields.L, d.mass_u, d.mass_v, d.mass_defect,
            d.pohozaev_residual, d.slope_defect, s.iterations, d.passed,
        )


BRANCH_HEADER = [
    "arclength", "mu", "epsilon", "L", "mass_u", "mass_v", "mass_defect",
    "pohozaev_residual", "slope_defect", "newton_iterations", "passed",
]


def _dump(states, cfg: RunConfig, family: str) -> dict:
    return {
        "grid": {"size": cfg.grid().size, "stretch": cfg.stretch},
        "family": family,
        "mode_n": cfg.mode_n,
        "states": [
            {
                "epsilon": s.epsilon,
                "arclength": s.arclength,
                "mu": s.fields.mu,
                "L": s.fields.L,
                "phi": s.fields.phi,
                "psi": s.fields.psi,
                "log_coeffs": list(s.log_coeffs),
            }
            for s in states
        ],
    }


def cmd_continue(cfg: RunConfig, out: Path) -> int:
    g = cfg.grid()
    states = trace_branch(cfg.mode_n, cfg.eps_max, cfg.steps, g, tol=cfg.tol)
    write_csv(out / f"branch_{cfg.mode_n}.csv", BRANCH_HEADER, _branch_rows(states))
    if cfg.dump_fields:
        write_json(out / f"fields_{cfg.mode_n}.json", _dump(states, cfg, "branch"), "fields")
    return EXIT_OK if all(s.diagnostics.passed for s in states) else EXIT_DIAGNOSTIC


def cmd_cartan(cfg: RunConfig, out: Path) -> int:
    g = cfg.grid()
    tol = max(cfg.tol, 1e-8)
    states = perturb_cartan(cf.JostWangParams(cfg.a1, cfg.a2), cfg.mu_target, cfg.steps, g, tol=tol)
    header = BRANCH_HEADER + ["sigma_u", "sigma_v", "u_minus_v_sup"]
    rows = (
        row + (s.log_coeffs[0], s.log_coeffs[1], float(np.max(np.abs(s.fields.psi))))
        for row, s in zip(_branch_rows(states), states)
    )
    write_csv(out / "branch_cartan.csv", header, rows)
    if cfg.dump_fields:
        write_json(out / "fields_cartan.json", _dump(states, cfg, "cartan"), "fields")
    return EXIT_OK if all(s.diagnostics.passed for s in states) else EXIT_DIAGNOSTIC


def cmd_diagnose(cfg: RunConfig, out: Path) -> int:
    if cfg.fields is None:
        raise ConfigError("diagnose needs --fields pointing at a field dump")
    try:
        dump = json.loads(Path(cfg.fields).read_text())
        jsonschema.validate(dump, load_schema("fields"))
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise ConfigError(f"unreadable field dump: {exc}") from exc
    g = make_grid(dump["grid"]["size"], dump["grid"]["stretch"])
    family = dump.get("family", "branch")
    rng = np.random.default_rng(cfg.seed)
    wcfg = WeightConfig(cfg.alpha)
    status = EXIT_OK
    prefix = cfg.id or "state"
    for k, s in enumerate(dump["states"]):
        phi, psi = np.asarray(s["phi"], float), np.asarray(s["psi"], float)
        if phi.size != g.size or psi.size != g.size:
            raise ConfigError("field length does not match the grid size")
        if cfg.noise > 0:
            # negative control: perturbed fields should be flagged
            psi = psi + cfg.noise * rng.standard_normal(g.size)
        fp = FieldPair(phi, psi, float(s["L"]), float(s["mu"]))
        st = BranchState(fp, s["epsilon"], s["arclength"], log_coeffs=tuple(s["log_coeffs"]), family=family)
        rep = diagnose_state(st, g, cfg.tol)
        ctx = {"command": "diagnose", "source": Path(cfg.fields).name, "index": k, "noise": cfg.noise, "seed": cfg.seed}
        if family == "branch":
            ctx["norm_star_phi"] = _finite_or_none(weighted_norm(phi, g, wcfg, "star"))
            ctx["norm_star_psi"] = _finite_or_none(weighted_norm(psi, g, wcfg, "star"))
        rid = f"{prefix}_{k}"
        write_json(out / f"report_{rid}.json", _report(rep, rid, ctx), "report")
        if not rep.passed:
            status = EXIT_DIAGNOSTIC
    return status


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


HANDLERS = {
    "spectrum": cmd_spectrum,
    "kernel": cmd_kernel,
    "verify-closed-form": cmd_verify,
    "detect": cmd_detect,
    "continue": cmd_continue,
    "perturb-cartan": cmd_cartan,
    "diagnose": cmd_diagnose,
}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[cfg.command](cfg, out)
    except (ContinuationError, FieldOverflowError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MassDivergenceError as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC


# ------------------------------------------------------------ argument handling

def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--grid-size", dest="grid_size", type=int)
    common.add_argument("--stretch", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--id", help="identifier used in report file names")

    p = argparse.ArgumentParser(prog="todabif", parents=[common], argument_default=S,
                                description="Bifurcating radial solutions of a generalized SU(3) Toda system.")
    sub = p.add_subparsers(dest="command")

    a = sub.add_parser("spectrum", parents=[common], argument_default=S, help="bifurcation values mu_n")
    a.add_argument("--max-n", dest="max_n", type=int)

    a = sub.add_parser("kernel", parents=[common], argument_default=S, help="sampled kernel P_n(t)")
    a.add_argument("--n", dest="mode_n", type=int)

    a = sub.add_parser("verify-closed-form", parents=[common], argument_default=S, help="diagnostics on an exact pair")
    a.add_argument("--family", choices=["liouville", "jostwang"])
    a.add_argument("--mu", type=float)
    a.add_argument("--delta", type=float)
    a.add_argument("--a1", type=float)
    a.add_argument("--a2", type=float)

    a = sub.add_parser("detect", parents=[common], argument_default=S, help="crossings on the trivial branch")
    a.add_argument("--mu-range", dest="mu_range", type=float, nargs=2, metavar=("LO", "HI"))

    a = sub.add_parser("continue", parents=[common], argument_default=S, help="trace the n-th branch")
    a.add_argument("--n", dest="mode_n", type=int)
    a.add_argument("--eps-max", dest="eps_max", type=float)
    a.add_argument("--steps", type=int)
    a.add_argument("--dump-fields", dest="dump_fields", action="store_true", default=S)

    a = sub.add_parser("perturb-cartan", parents=[common], argument_default=S, help="continue a Jost-Wang pair in mu")
    a.add_argument("--a1", type=float)
    a.add_argument("--a2", type=float)
    a.add_argument("--mu-target", dest="mu_target", type=float)
    a.add_argument("--steps", type=int)
    a.add_argument("--dump-fields", dest="dump_fields", action="store_true", default=S)

    a = sub.add_parser("diagnose", parents=[common], argument_default=S, help="diagnostics on a field dump")
    a.add_argument("--fields")
    a.add_argument("--alpha", type=float)
    a.add_argument("--seed", type=int)
    a.add_argument("--noise", type=float, help="negative-control noise added to psi")
    return p


def resolve_config(flags: dict, env: dict | None = None) -> RunConfig:
    """Merge defaults < config file < environment < flags and validate."""
    env = os.environ if env is None else env
    merged: dict = {}
    path = flags.pop("config", None)
    if path is not None:
        try:
            merged.update(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if env.get(ENV_OUTPUT_DIR):
        merged["output_dir"] = env[ENV_OUTPUT_DIR]
    merged.update({k: v for k, v in flags.items() if v is not None})
    if "mu_range" in merged:
        merged["mu_range"] = list(merged["mu_range"])
    try:
        jsonschema.validate(merged, load_schema("run_config"))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.message}") from exc
    if "command" not in merged:
        raise ConfigError("no command given (flag or config 'command')")
    if "mu_range" in merged:
        lo, hi = merged["mu_range"]
        if not lo < hi:
            raise ConfigError("mu_range must be increasing")
        merged["mu_range"] = (lo, hi)
    known = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in merged.items() if k in known})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(vars(ns))
        return run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
