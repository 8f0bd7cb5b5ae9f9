"""Command-line entry point: ``dentlab COMMAND [options]``.

Every report starts with a ``config`` block holding the resolved options and
tolerances, so a report can be reproduced from its own header. Options come
from flags, then from ``--config`` (a JSON object keyed by option name), then
from built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .dcapprox import (
    build_renorm,
    dc_split_check,
    midpoint_drop_check,
    moreau_envelope,
    uniform_error_curve,
)
from .dentability import DEFAULT_CAPACITY, derive_once, dz_index, equi_slice
from .examples import TreeSpec, gen_norm_one_map, gen_standard, gen_tree, martingale_run
from .exceptions import (
    CapacityError,
    DomainError,
    InconclusiveError,
    NotFinitelyDentableError,
    OutputError,
)
from .geometry import Metric, PointCloud, ScoredMap, Tolerances, oscillation
from .io import cloud_to_dict, dumps, load_cloud, rows_to_csv, write_text
from .slicing import ss_density_scan

EXIT_OK, EXIT_INVALID, EXIT_CAPACITY = 0, 2, 3

# built-in defaults per command; flags and config files override them
DEFAULTS = {
    "common": {"seed": 0, "sep_tol": 1e-9, "osc_tol": 1e-9, "budget": 256,
               "capacity_any": DEFAULT_CAPACITY[0], "capacity_planar": DEFAULT_CAPACITY[1],
               "output": None, "input": None},
    "dent-index": {"eps": None, "mode": "exact", "csv": None},
    "derive": {"eps": None, "mode": "exact", "subset": None},
    "ss-scan": {"eps": 0.25, "n_dirs": 64, "n_target": None, "emit": "csv"},
    "dc-approx": {"n_list": "1,2,4,8,16", "grid_mesh": None, "function": None, "dim": 1,
                  "emit": "csv", "trials": 1000},
    "renorm-check": {"K": 3, "eps": 0.5, "trials": 1000, "mode": "exact", "fault_scale": 1.0},
    "gen-example": {"shape": "grid", "d": 1, "n": 21, "tree_depth": 3, "branching": 2,
                    "separation": 1.0, "map": None},
    "martingale": {"tree_depth": 3, "separation": 1.0, "eps": 0.5, "N": 3},
    "equi-slice": {"eps": None},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p):
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with option defaults")
    g.add_argument("--seed", type=int)
    g.add_argument("--sep-tol", type=float)
    g.add_argument("--osc-tol", type=float)
    g.add_argument("--budget", type=int)
    g.add_argument("--capacity-any", type=int, help="exact-mode point cap in any dimension")
    g.add_argument("--capacity-planar", type=int, help="exact-mode point cap for d <= 2")
    g.add_argument("-o", "--output", help="write the report here instead of stdout")


def build_parser():
    parser = _Parser(prog="dentlab", description="Dentability experiments on point clouds.")
    parser.add_argument("--version", action="version", version=f"dentlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                                parser_class=_Parser)

    p = sub.add_parser("dent-index", help="iterate the derivation to Dz or a stall")
    p.add_argument("--input")
    p.add_argument("--eps", type=float)
    p.add_argument("--mode", choices=("exact", "cluster"))
    p.add_argument("--csv", help="also write the per-stage summary CSV here")
    _common(p)

    p = sub.add_parser("derive", help="one derivation stage")
    p.add_argument("--input")
    p.add_argument("--eps", type=float)
    p.add_argument("--mode", choices=("exact", "cluster"))
    p.add_argument("--subset", help="comma-separated labels of the current set")
    _common(p)

    p = sub.add_parser("ss-scan", help="density scan of strongly slicing perturbations")
    p.add_argument("--input")
    p.add_argument("--eps", type=float)
    p.add_argument("--n-dirs", type=int)
    p.add_argument("--n-target", type=float)
    p.add_argument("--emit", choices=("csv", "json"))
    _common(p)

    p = sub.add_parser("dc-approx", help="envelope error curve and split checks")
    p.add_argument("--input")
    p.add_argument("--function", choices=("abs", "square", "norm"),
                   help="built-in function sampled on a grid over [-1, 1]^dim")
    p.add_argument("--dim", type=int)
    p.add_argument("--grid-mesh", type=float)
    p.add_argument("--n-list")
    p.add_argument("--trials", type=int)
    p.add_argument("--emit", choices=("csv", "json"))
    _common(p)

    p = sub.add_parser("renorm-check", help="midpoint-drop inequality of the renorming")
    p.add_argument("--input")
    p.add_argument("--K", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=("exact", "cluster"))
    p.add_argument("--fault-scale", type=float, help="multiply F by this factor")
    _common(p)

    p = sub.add_parser("gen-example", help="emit a generated cloud")
    p.add_argument("--shape", choices=("grid", "simplex", "ball", "square", "tree"))
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--tree-depth", type=int)
    p.add_argument("--branching", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--map", choices=("identity", "tree-dist", "norm-one"))
    _common(p)

    p = sub.add_parser("martingale", help="martingale refinement on a tree")
    p.add_argument("--input", help="cloud whose values are F (default: a generated tree)")
    p.add_argument("--tree-depth", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--N", type=int)
    _common(p)

    p = sub.add_parser("equi-slice", help="one slice small for every value coordinate")
    p.add_argument("--input")
    p.add_argument("--eps", type=float)
    _common(p)
    return parser


def _resolve(args, command):
    """Merge flags over the config file over built-in defaults."""
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as e:
            raise DomainError(f"cannot read config {args.config}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise DomainError(
                f"malformed JSON in config at line {e.lineno}, column {e.colno}: {e.msg}") from None
        if not isinstance(cfg, dict):
            raise DomainError("config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    known = dict(DEFAULTS["common"], **DEFAULTS[command])
    unknown = sorted(set(cfg) - set(known))
    if unknown:
        raise DomainError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, default in known.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, default)
    out["command"] = command
    return out


def _tolerances(opts):
    return Tolerances(sep_tol=float(opts["sep_tol"]), osc_tol=float(opts["osc_tol"]),
                      budget=int(opts["budget"]))


def _header(opts, tol):
    head = {k: v for k, v in sorted(opts.items()) if k not in ("sep_tol", "osc_tol", "budget")}
    head["tolerances"] = tol.as_dict()
    head["version"] = __version__
    return head


def _csv_with_header(head, header, rows):
    return "# config " + json.dumps(head, sort_keys=True) + "\n" + rows_to_csv(header, rows)


def _need(opts, *keys):
    for k in keys:
        if opts.get(k) is None:
            raise DomainError(f"--{k.replace('_', '-')} is required")


def _capacity(opts):
    return (int(opts["capacity_any"]), int(opts["capacity_planar"]))


def _eps(x):
    if not (x > 0 and math.isfinite(x)):
        raise DomainError("eps must be a positive finite number")
    return float(x)


# --------------------------------------------------------------------------
# commands


def cmd_dent_index(opts, tol):
    _need(opts, "input", "eps")
    f = load_cloud(opts["input"])
    tr = dz_index(f, _eps(opts["eps"]), opts["mode"], tol, _capacity(opts))
    head = _header(opts, tol)
    if opts["csv"]:
        write_text(opts["csv"], _csv_with_header(
            head, ("stage", "survivors", "max_witness_osc"), tr.summary_rows(f)))
    return dumps({"config": head, "trace": tr.as_dict(f)})


def cmd_derive(opts, tol):
    _need(opts, "input", "eps")
    f = load_cloud(opts["input"])
    subset = None
    if opts["subset"]:
        subset = [s.strip() for s in str(opts["subset"]).split(",") if s.strip()]
    st = derive_once(f, subset, _eps(opts["eps"]), opts["mode"], tol, _capacity(opts))
    return dumps({"config": _header(opts, tol), "stage": st.as_dict(f)})


def cmd_ss_scan(opts, tol):
    _need(opts, "input")
    f = load_cloud(opts["input"])
    stats = ss_density_scan(f, None, int(opts["n_dirs"]), _eps(opts["eps"]),
                            opts["n_target"], tol, int(opts["seed"]))
    head = _header(opts, tol)
    header = ("direction_index", "success", "perturbation", "oscillation", "depth")
    if opts["emit"] == "csv":
        return _csv_with_header(head, header, stats.rows)
    return dumps({"config": head, "success_fraction": stats.success_fraction,
                  "max_perturbation": stats.max_perturbation,
                  "rows": [dict(zip(header, r)) for r in stats.rows]})


_FUNCTIONS = {
    "abs": lambda X: np.abs(X).sum(axis=1),
    "square": lambda X: (X ** 2).sum(axis=1),
    "norm": lambda X: np.linalg.norm(X, axis=1),
}


def _function_map(name, dim, mesh):
    if dim < 1 or dim > 3:
        raise DomainError("--dim must be 1, 2 or 3")
    mesh = mesh or 1 / 64
    k = int(round(2 / mesh))
    if k < 1 or abs(k * mesh - 2) > 1e-9 or (k + 1) ** dim > 200_000:
        raise DomainError("--grid-mesh must divide 2 and keep the grid below 200000 points")
    axis = np.linspace(-1.0, 1.0, k + 1)
    X = np.array(np.meshgrid(*[axis] * dim, indexing="ij")).reshape(dim, -1).T
    fn = _FUNCTIONS[name]
    return ScoredMap(PointCloud(X), fn(X), func=lambda Y: fn(np.atleast_2d(Y)))


def cmd_dc_approx(opts, tol):
    if opts["function"]:
        f = _function_map(opts["function"], int(opts["dim"]), opts["grid_mesh"])
    else:
        _need(opts, "input")
        f = load_cloud(opts["input"])
    try:
        n_list = [float(s) for s in str(opts["n_list"]).split(",") if s.strip()]
    except ValueError:
        raise DomainError("--n-list must be comma-separated numbers") from None
    if not n_list or any(n <= 0 for n in n_list):
        raise DomainError("--n-list needs positive entries")
    rows = uniform_error_curve(f, n_list)
    head = _header(opts, tol)
    header = ("n", "sup_error", "theory_bound")
    if opts["emit"] == "csv":
        return _csv_with_header(head, header, rows)
    checks = []
    for n in n_list:
        rep = dc_split_check(moreau_envelope(f, n), int(opts["trials"]),
                             np.random.default_rng(int(opts["seed"])), tol)
        checks.append({"n": n, "passed": rep.passed,
                       "identity_violations": len(rep.identity_violations),
                       "midpoint_violations": len(rep.midpoint_violations),
                       "max_identity_error": rep.max_identity_error,
                       "lipschitz_g": rep.lipschitz_g, "lipschitz_h": rep.lipschitz_h})
    return dumps({"config": head, "rows": [dict(zip(header, r)) for r in rows],
                  "split_checks": checks})


def cmd_renorm_check(opts, tol):
    _need(opts, "input")
    f = load_cloud(opts["input"])
    R = build_renorm(f, int(opts["K"]), opts["mode"], tol, _capacity(opts))
    R = R.scaled(float(opts["fault_scale"]))
    rep = midpoint_drop_check(R, f, _eps(opts["eps"]), int(opts["trials"]),
                              np.random.default_rng(int(opts["seed"])), tol, _capacity(opts))
    return dumps({"config": _header(opts, tol), "N": list(R.N), "passed": rep.passed,
                  "checked": rep.checked, "violations": len(rep.violations),
                  "min_margin": rep.min_margin, "drop": rep.drop, "delta": rep.delta,
                  "dz_eps_8": rep.dz, "vacuous": rep.vacuous})


def cmd_gen_example(opts, tol):
    shape = opts["shape"]
    if shape == "tree":
        tc = gen_tree(TreeSpec(int(opts["tree_depth"]), float(opts["separation"]),
                               int(opts["branching"])))
        kind = opts["map"] or "tree-dist"
        if kind == "identity":
            f = tc.identity()
        elif kind == "tree-dist":
            f = tc.fmap
        else:
            f = gen_norm_one_map(tc.cloud, tc.fmap, p=math.inf)
    else:
        if opts["map"] not in (None, "identity"):
            raise DomainError("only the identity map is available for standard shapes")
        f = ScoredMap.identity(gen_standard(shape, int(opts["d"]), int(opts["n"]),
                                            int(opts["seed"])))
    out = cloud_to_dict(f)
    out["config"] = _header(opts, tol)
    return dumps(out)


def cmd_martingale(opts, tol):
    eps = _eps(opts["eps"])
    if opts["input"]:
        F = load_cloud(opts["input"])
        combos = None
    else:
        tc = gen_tree(TreeSpec(int(opts["tree_depth"]), float(opts["separation"])))
        F, combos = tc.identity(), tc.combos()
    run = martingale_run(F, eps, int(opts["N"]), combos=combos, tol=tol)
    return dumps({"config": _header(opts, tol), "run": run.as_dict(F.domain.labels)})


def cmd_equi_slice(opts, tol):
    _need(opts, "input", "eps")
    f = load_cloud(opts["input"])
    if f.values is None:
        fs = [f]
    else:
        fs = [ScoredMap(f.domain, f.values[:, j], Metric.lp(f.metric.p))
              for j in range(f.values.shape[1])]
    out = {"config": _header(opts, tol)}
    try:
        sl = equi_slice(fs, None, _eps(opts["eps"]), tol,
                        np.random.default_rng(int(opts["seed"])), _capacity(opts))
    except InconclusiveError:
        out["outcome"] = "unknown"
        return dumps(out)
    if sl is None:
        out["outcome"] = "none"
    else:
        out["outcome"] = "slice"
        out["slice"] = sl.as_dict(f.domain)
        out["oscillations"] = [oscillation(g, sl.members) for g in fs]
    return dumps(out)


COMMANDS = {
    "dent-index": cmd_dent_index,
    "derive": cmd_derive,
    "ss-scan": cmd_ss_scan,
    "dc-approx": cmd_dc_approx,
    "renorm-check": cmd_renorm_check,
    "gen-example": cmd_gen_example,
    "martingale": cmd_martingale,
    "equi-slice": cmd_equi_slice,
}


def run(argv=None):
    """Execute one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID
    try:
        opts = _resolve(args, args.command)
        tol = _tolerances(opts)
        text = COMMANDS[args.command](opts, tol)
        if opts["output"]:
            write_text(opts["output"], text)
        else:
            sys.stdout.write(text)
    except (CapacityError, OutputError) as e:
        print(f"dentlab: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (DomainError, NotFinitelyDentableError, ValueError) as e:
        print(f"dentlab: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
