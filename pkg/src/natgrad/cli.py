"""Command-line interface.

Every subcommand reads an optional YAML/JSON config, applies flag overrides,
archives the resolved config (with the seed) in the output directory and
writes its results there. Exit codes: 0 pass, 1 semantic failure, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import copy
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analysis as A
from . import expr as E
from . import operators as ops
from . import verify as V
from .io import csv_text, fmt, write_atomic
from .solver import Domain2D, GridProblem, SolverError, solve_with_gradient_term
from .transform import GSpec, RangeError, TransformError, build_table

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULTS = {
    "seed": 0,
    "operator": {"name": "infinity", "n": 2, "params": {}},
    "g": {"expr": "0", "s0": 0.0, "positive_only": False},
    "f": {"expr": "0"},
    "b": {"expr": "0"},
    "domain": {"shape": "rectangle", "params": [0.0, 0.0, 1.0, 1.0]},
    "grid": {"h": 0.0625, "tol": 1e-7, "max_iters": 500000, "scheme": "fd-direct", "check_every": 50},
    "transform": {"t_min": -10.0, "t_max": 10.0, "quad_tol": 1e-10, "phi": [], "phi_inv": []},
    "analysis": {"mode": "nonexistence", "t_max": 50.0, "quad_tol": 1e-10, "f_bar": None,
                 "t_range": [-10.0, 10.0]},
    "verify": {"u": "sin(x1)+x2^2", "phi": "t+t^3/3", "points": 100, "box": [0.1, 1.1], "tol": None},
    "check": {"samples": 1000, "seeds": None},
    "output": {"dir": "natgrad-out", "formats": ["csv", "report"]},
}

FORMATS = {"csv", "pgm", "report"}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: list[str]) -> dict:
    doc = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
            doc = yaml.safe_load(text) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML/JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping at top level")
    cfg = _merge(DEFAULTS, doc)
    for item in overrides:
        key, eq, raw = item.partition("=")
        if not eq:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        node = {}
        cur = node
        parts = key.split(".")
        for p in parts[:-1]:
            cur[p] = {}
            cur = cur[p]
        cur[parts[-1]] = yaml.safe_load(raw)
        cfg = _merge(cfg, node)
    return cfg


def _num(cfg: dict, section: str, key: str, kind=float):
    val = cfg[section][key]
    try:
        out = kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be a number, got {val!r}") from None
    if kind is float and not math.isfinite(out):
        raise ConfigError(f"{section}.{key} must be finite")
    return out


def make_operator(cfg: dict) -> ops.OperatorSpec:
    name = str(cfg["operator"]["name"])
    params = cfg["operator"]["params"] or {}
    if not isinstance(params, dict) or set(params) - {"m", "k"}:
        raise ConfigError("operator.params accepts only m and k")
    if params:
        name = f"{name}:{params.get('m', params.get('k'))}"
    return ops.parse_operator(name, _num(cfg, "operator", "n", int))


def make_gspec(cfg: dict) -> GSpec:
    return GSpec.from_string(str(cfg["g"]["expr"]), _num(cfg, "g", "s0"),
                             positive_only=bool(cfg["g"]["positive_only"]))


def make_domain(cfg: dict) -> Domain2D:
    params = cfg["domain"]["params"]
    if not isinstance(params, (list, tuple)):
        raise ConfigError("domain.params must be a list")
    return Domain2D(str(cfg["domain"]["shape"]), tuple(params))


def _formats(cfg: dict) -> set:
    fm = set(cfg["output"]["formats"])
    if fm - FORMATS:
        raise ConfigError(f"unknown output formats {sorted(fm - FORMATS)}")
    return fm


def _outdir(cfg: dict) -> Path:
    return Path(str(cfg["output"]["dir"]))


def _archive(cfg: dict, command: str) -> None:
    doc = {"command": command, "config": cfg}
    write_atomic(_outdir(cfg) / "config.resolved.yaml", yaml.safe_dump(doc, sort_keys=True))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_check_operator(cfg: dict) -> int:
    op = make_operator(cfg)
    samples = _num(cfg, "check", "samples", int)
    if samples < 1:
        raise ConfigError("check.samples must be >= 1")
    seeds = cfg["check"]["seeds"] or [cfg["seed"]]
    _archive(cfg, "check-operator")
    lines = [f"# check-operator {op.name} n={op.n} alpha={fmt(op.alpha)} beta={op.beta}"]
    ok = True
    for seed in seeds:
        reports = [
            ops.check_h1(op, samples, int(seed)),
            ops.check_h2(op, samples, int(seed)),
            ops.check_h2(op, samples, int(seed), numeric_N=True),
            ops.cross_check_N(op, samples, int(seed)),
        ]
        labels = ["h1", "h2", "h2-numeric-N", "N-cross-check"]
        for label, r in zip(labels, reports):
            ok &= r.passed
            lines.append(f"seed={seed} {label} samples={r.samples} max_rel_error={fmt(r.max_rel_error)} "
                         f"tol={fmt(r.tol)} pass={r.passed}")
    if op.kind == "m_laplace" and op.m == 1:
        lines.append("note: m=1, the natural gradient term N vanishes identically")
    lines.append(f"summary pass={ok}")
    text = "\n".join(lines) + "\n"
    write_atomic(_outdir(cfg) / "check_operator.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(cfg: dict) -> int:
    op = make_operator(cfg)
    gs = make_gspec(cfg)
    u = V.ManufacturedSolution.from_expr(str(cfg["verify"]["u"]), op.n)
    npts = _num(cfg, "verify", "points", int)
    box = cfg["verify"]["box"]
    if npts < 1 or len(box) != 2 or not box[0] < box[1]:
        raise ConfigError("verify.points must be >= 1 and verify.box an increasing pair")
    tol = cfg["verify"]["tol"]
    if tol is None:
        tol = 1e-7 if op.kind == "m_laplace" else V.DEFAULT_TOL
    rng = np.random.default_rng(int(cfg["seed"]))
    pts = rng.uniform(float(box[0]), float(box[1]), (npts, op.n))
    _archive(cfg, "verify")
    try:
        chain = V.chain_rule_check(op, str(cfg["verify"]["phi"]), u, pts)
        fwd = V.theorem1_forward(op, gs, u, pts, tol=tol)
        bwd = V.theorem1_backward(op, gs, u, pts, tol=tol)
    except (V.VerificationError, RangeError, E.EvalError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    chain_ok = chain <= 1e-10
    out = _outdir(cfg)
    write_atomic(out / "chain_rule.txt", f"chain_rule operator={op.name} max_residual={fmt(chain)} pass={chain_ok}\n")
    write_atomic(out / "verify_forward.txt", fwd.to_text())
    write_atomic(out / "verify_backward.txt", bwd.to_text())
    print(f"chain_rule max_residual={fmt(chain)} pass={chain_ok}")
    print(f"forward max_forward={fmt(fwd.max_forward)} max_backward={fmt(fwd.max_backward)} pass={fwd.passed}")
    print(f"backward max_forward={fmt(bwd.max_forward)} max_backward={fmt(bwd.max_backward)} pass={bwd.passed}")
    return EXIT_OK if (chain_ok and fwd.passed and bwd.passed) else EXIT_FAIL


def cmd_solve(cfg: dict) -> int:
    gs = make_gspec(cfg)
    tr = cfg["transform"]
    p = GridProblem(
        domain=make_domain(cfg),
        h_grid=_num(cfg, "grid", "h"),
        b=E.parse(str(cfg["b"]["expr"])),
        f=E.parse(str(cfg["f"]["expr"])),
        g_spec=gs,
        scheme=str(cfg["grid"]["scheme"]),
        tol_solver=_num(cfg, "grid", "tol"),
        max_iters=_num(cfg, "grid", "max_iters", int),
        check_every=_num(cfg, "grid", "check_every", int),
        t_min=None if tr["t_min"] is None else float(tr["t_min"]),
        t_max=None if tr["t_max"] is None else float(tr["t_max"]),
        quad_tol=_num(cfg, "transform", "quad_tol"),
    )
    fm = _formats(cfg)
    _archive(cfg, "solve")
    try:
        res = solve_with_gradient_term(p)
    except (SolverError, RangeError, E.EvalError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = _outdir(cfg)
    summary = (f"residual_inf={fmt(res.residual_inf)} iters={res.iters} converged={res.converged} "
               f"interior_nodes={int(res.grid.mask.sum())}\n")
    if "csv" in fm:
        write_atomic(out / "solution.csv", res.to_csv())
    if "pgm" in fm:
        write_atomic(out / "u.pgm", res.to_pgm("u"))
        write_atomic(out / "v.pgm", res.to_pgm("v"))
    if "report" in fm:
        write_atomic(out / "solve_report.txt", summary)
    sys.stdout.write(summary)
    return EXIT_OK if res.converged else EXIT_FAIL


def _analysis_config(cfg: dict) -> A.AnalysisConfig:
    return A.AnalysisConfig(
        f=E.parse(str(cfg["f"]["expr"])),
        g_spec=make_gspec(cfg),
        domain=make_domain(cfg),
        b=E.parse(str(cfg["b"]["expr"])),
        t_max=_num(cfg, "analysis", "t_max"),
        quad_tol=_num(cfg, "analysis", "quad_tol"),
    )


def cmd_analyze(cfg: dict) -> int:
    mode = cfg["analysis"]["mode"]
    if mode not in ("nonexistence", "existence-hypotheses", "uniqueness"):
        raise ConfigError(f"unknown analysis mode {mode!r}")
    out = _outdir(cfg)
    if mode == "uniqueness":
        f_bar = E.parse(str(cfg["analysis"]["f_bar"] if cfg["analysis"]["f_bar"] is not None else cfg["f"]["expr"]))
        gs = make_gspec(cfg)
        lo, hi = cfg["analysis"]["t_range"]
        _archive(cfg, "analyze")
        rep = A.check_uniqueness_hypothesis(f_bar, gs, (float(lo), float(hi)))
        write_atomic(out / "uniqueness.txt", rep.to_text())
        sys.stdout.write(rep.to_text())
        return EXIT_OK if rep.monotone else EXIT_FAIL
    acfg = _analysis_config(cfg)
    _archive(cfg, "analyze")
    try:
        if mode == "nonexistence":
            rep = A.compute_S_and_verdict(acfg)
            write_atomic(out / "nonexistence.txt", rep.to_text())
            write_atomic(out / "eta.csv", rep.eta_csv())
            write_atomic(out / "zeta.csv", rep.zeta_csv())
            print(f"ell={fmt(rep.ell)} S={fmt(rep.S)} R={fmt(rep.R)} verdict={rep.verdict}")
            return EXIT_OK
        rep = A.check_fg_limits(acfg)
    except (A.AnalysisError, RangeError, E.EvalError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_atomic(out / "fg.txt", rep.to_text())
    write_atomic(out / "fg.csv", rep.csv())
    print(f"nu_hat={fmt(rep.nu_hat)} xi_hat={fmt(rep.xi_hat)} verdict={rep.verdict}")
    return EXIT_FAIL if rep.verdict == "violated" else EXIT_OK


def cmd_transform(cfg: dict) -> int:
    gs = make_gspec(cfg)
    tr = cfg["transform"]
    tbl = build_table(gs, _num(cfg, "transform", "t_min"), _num(cfg, "transform", "t_max"),
                      _num(cfg, "transform", "quad_tol"))
    _archive(cfg, "transform")
    out = _outdir(cfg)
    write_atomic(out / "transform.csv", tbl.to_csv())
    lines = []
    try:
        for t in tr["phi"] or []:
            lines.append(f"phi({fmt(float(t))})={fmt(tbl.phi(float(t)))}")
        for s in tr["phi_inv"] or []:
            lines.append(f"phi_inv({fmt(float(s))})={fmt(tbl.phi_inv(float(s)))}")
    except RangeError as exc:
        print(f"query out of range: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = f"knots={len(tbl.knots)} range=[{fmt(tbl.t_min)}, {fmt(tbl.t_max)}]\n" + "".join(l + "\n" for l in lines)
    write_atomic(out / "transform_queries.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "check-operator": cmd_check_operator,
    "verify": cmd_verify,
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "transform": cmd_transform,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="natgrad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--out", help="output directory (output.dir)")
        p.add_argument("--seed", type=int)
        if name in ("check-operator", "verify"):
            p.add_argument("--op", help="operator name, e.g. infinity or m-laplace:3")
            p.add_argument("--n", type=int, help="ambient dimension")
        if name == "check-operator":
            p.add_argument("--samples", type=int)
        if name in ("verify", "solve", "analyze", "transform"):
            p.add_argument("--g", help="coefficient g(t)")
        if name in ("solve", "analyze"):
            p.add_argument("--f", help="reaction f(x1, x2, t)")
        if name == "solve":
            p.add_argument("--h", type=float, help="grid spacing")
            p.add_argument("--scheme", choices=sorted(["fd-direct", "monotone"]))
        if name == "analyze":
            p.add_argument("--mode", choices=["nonexistence", "existence-hypotheses", "uniqueness"])
        if name == "transform":
            p.add_argument("--phi", type=float, action="append", help="evaluate Phi at this t")
            p.add_argument("--phi-inv", type=float, action="append", help="evaluate Phi^-1 at this s")
    return parser


def _flag_overrides(args) -> dict:
    over: dict = {}

    def put(section, key, val):
        if val is not None:
            over.setdefault(section, {})[key] = val

    put("output", "dir", args.out)
    if args.seed is not None:
        over["seed"] = args.seed
    put("operator", "name", getattr(args, "op", None))
    put("operator", "n", getattr(args, "n", None))
    put("check", "samples", getattr(args, "samples", None))
    put("g", "expr", getattr(args, "g", None))
    put("f", "expr", getattr(args, "f", None))
    put("grid", "h", getattr(args, "h", None))
    put("grid", "scheme", getattr(args, "scheme", None))
    put("analysis", "mode", getattr(args, "mode", None))
    put("transform", "phi", getattr(args, "phi", None))
    put("transform", "phi_inv", getattr(args, "phi_inv", None))
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        cfg = _merge(cfg, _flag_overrides(args))
        return COMMANDS[args.command](cfg)
    except (ConfigError, ValueError, TypeError, KeyError, E.ParseError, TransformError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
