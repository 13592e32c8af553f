"""Command-line front end: ``cefinfer {fit,pte,maxent,sweep}``.

Every run writes plain files into ``--out``: JSON documents and two-column
curve CSVs (17 significant digits, LF line endings). Settings can come from a
JSON ``--config`` file whose keys are the long flag names with dashes as
underscores; flags given on the command line win. The master seed falls back
to the ``CEF_SEED`` environment variable, then 0.

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import effects, inference, sensitivity
from .maxent import InfeasibleConstraintError, MaxEntConvergenceError, solve_covariance_constraints, solve_marginal_constraint
from .models import CASE_LABELS, JOINT, MARGINAL, PARTIAL, SENSITIVITY, TAGS, ModelCase, check_data
from .tables import CountTable, FreqTensor, TableError, fixture_path, normalize, read_table

log = logging.getLogger("cefinfer")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config keys or input files."""


# ---------------------------------------------------------------------------
# file helpers


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def curve_csv(curve: inference.DensityCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "density"])
    for x, y in zip(curve.grid, curve.density):
        w.writerow([fmt(x), fmt(y)])
    return buf.getvalue()


def write_curve_csv(path, curve: inference.DensityCurve) -> None:
    Path(path).write_bytes(curve_csv(curve).encode("ascii"))


def read_curve_csv(path) -> inference.DensityCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "density"]:
        raise TableError(f"{path}: expected header x,density")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return inference.DensityCurve(data[:, 0], data[:, 1])


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, doc) -> None:
    Path(path).write_bytes((json.dumps(_clean(doc), indent=2) + "\n").encode("ascii"))


def slug(name: str) -> str:
    """File-name form of a coordinate name: q_Z|A,notT -> q_Z_A_notT."""
    return name.replace("|", "_").replace(",", "_")


def load_table(path: str):
    p = Path(path)
    if not p.exists() and fixture_path(p.name).exists():
        log.info("using bundled fixture %s", p.name)
        p = fixture_path(p.name)
    return read_table(p)


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    case: ModelCase
    data: FreqTensor | None
    n: float | None
    grid: int
    sampler: inference.SamplerConfig
    out: Path
    seed: int


CONFIG_KEYS = {
    "model", "data", "qbar", "cov", "n", "grid", "steps", "burn", "thin", "proposal_sd",
    "seed", "out", "curves", "coords", "conditioning", "curve_type", "marginal",
    "alphas", "deltas", "starts",
}


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("CEF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"CEF_SEED must be an integer, got {env!r}") from None
    return 0


def _data_and_n(args, case: ModelCase | None):
    if args.data is None:
        raise UsageError("--data is required")
    table = load_table(args.data)
    if isinstance(table, CountTable):
        data, total = normalize(table), table.total
    else:
        data, total = table, None
    n = args.n if args.n is not None else total
    if n is None:
        raise UsageError("--n is required when --data holds frequencies rather than counts")
    if n < 0:
        raise UsageError(f"--n must be non-negative, got {n}")
    if case is not None:
        try:
            check_data(case, data)
        except TableError as exc:
            raise UsageError(f"--data does not fit --model {case.tag}: {exc}") from None
    return data, float(n)


def _case(args) -> ModelCase:
    tag = args.model
    if tag not in TAGS:
        raise UsageError(f"--model must be one of {TAGS}, got {tag!r}")
    if tag == PARTIAL:
        if args.qbar is None:
            raise UsageError("--qbar is required for --model partial")
        qbar = load_table(args.qbar)
        qbar = normalize(qbar) if isinstance(qbar, CountTable) else qbar
        try:
            return ModelCase.partial(qbar)
        except TableError as exc:
            raise UsageError(f"--qbar: {exc}") from None
    if tag == SENSITIVITY:
        if args.cov is None:
            raise UsageError("--cov ALPHA DELTA is required for --model sensitivity")
        alpha, delta = args.cov
        for name, v in (("alpha", alpha), ("delta", delta)):
            if not -1 <= v <= 1:
                raise UsageError(f"--cov {name}={v} outside [-1, 1]")
        return ModelCase.sensitivity(alpha, delta)
    return ModelCase(tag)


def _sampler(args, seed: int) -> inference.SamplerConfig:
    try:
        return inference.SamplerConfig(args.steps, args.burn, args.thin, args.proposal_sd, seed)
    except ValueError as exc:
        raise UsageError(f"sampler settings: {exc}") from None


def run_config(args, need_case: bool = True) -> RunConfig:
    seed = _seed(args)
    case = _case(args) if need_case else None
    data, n = _data_and_n(args, case)
    if args.grid < 64:
        raise UsageError(f"--grid must be >= 64, got {args.grid}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return RunConfig(case, data, n, args.grid, _sampler(args, seed), out, seed)


def _coords(case: ModelCase, requested) -> list[int]:
    if not requested:
        return list(range(case.dim))
    out = []
    for c in requested:
        if str(c).isdigit() and int(c) < case.dim:
            out.append(int(c))
        elif c in case.param_names:
            out.append(case.param_names.index(c))
        else:
            raise UsageError(f"--coords: unknown coordinate {c!r} for {case.tag}; have {case.param_names}")
    return out


def _settings(cfg: RunConfig) -> dict:
    s = cfg.sampler
    doc = {"model": cfg.case.tag, "label": CASE_LABELS[cfg.case.tag], "n": cfg.n, "grid": cfg.grid,
           "steps": s.steps, "burn": s.burn_in, "thin": s.thin, "proposal_sd": s.proposal_sd, "seed": cfg.seed}
    if cfg.case.tag == SENSITIVITY:
        doc["cov"] = [cfg.case.alpha, cfg.case.delta]
    return doc


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    cfg = run_config(args)
    case = cfg.case
    coords = _coords(case, args.coords)
    mp = inference.map_estimate(case, cfg.data, cfg.n, starts=args.starts, seed=cfg.seed)
    write_json(cfg.out / "map.json", {
        "model": case.tag,
        "point": dict(zip(case.param_names, mp.point.tolist())),
        "objective": mp.objective,
        "starts": mp.starts,
    })
    chain = inference.run_chain(case, cfg.data, cfg.n, cfg.sampler)
    summary = {"settings": _settings(cfg), "sampler": chain.diagnostics, "coordinates": {}}
    for k in coords:
        name = case.param_names[k]
        prof = inference.profile_density(case, cfg.data, cfg.n, k, mp.point, cfg.grid)
        marg = inference.curve_from_chain(chain, k, cfg.grid)
        write_curve_csv(cfg.out / f"profile_{slug(name)}.csv", prof)
        write_curve_csv(cfg.out / f"marginal_{slug(name)}.csv", marg)
        summary["coordinates"][name] = {"map": float(mp.point[k]), "profile": prof.summary(),
                                        "marginal": marg.summary()}
    write_json(cfg.out / "summary.json", summary)
    return EXIT_OK


def pte_curve(cfg: RunConfig, curve_type: str, conditioning: str | None, starts: int = 8):
    """The treatment-effect curve requested on the command line, plus a description."""
    case = cfg.case
    if conditioning is not None and case.dim != 7:
        raise UsageError("--conditioning needs a model with a confounder axis")
    if conditioning is not None and conditioning not in sensitivity.STRATUM_COORDS:
        raise UsageError(f"--conditioning must be A or notA, got {conditioning!r}")
    if case.tag == MARGINAL:
        pair = (1, 2)
    elif conditioning is not None:
        pair = sensitivity.STRATUM_COORDS[conditioning]
    else:
        pair = None

    if curve_type == "profile":
        mp = inference.map_estimate(case, cfg.data, cfg.n, starts=starts, seed=cfg.seed)
        if pair is None:
            prof = sensitivity.profile_effects(case, cfg.data, cfg.n, mp.point, cfg.grid)
            return prof["mixture"], {"source": "profile", "functional": "q_A-weighted stratum mixture"}
        treated, untreated = (inference.profile_density(case, cfg.data, cfg.n, k, mp.point, cfg.grid) for k in pair)
    elif curve_type == "marginal":
        chain = inference.run_chain(case, cfg.data, cfg.n, cfg.sampler)
        keys = pair if pair is not None else ("q_Z|T", "q_Z|notT")
        treated, untreated = (inference.curve_from_chain(chain, k, cfg.grid) for k in keys)
    else:
        raise UsageError(f"--curve-type must be profile or marginal, got {curve_type!r}")
    names = [case.param_names[k] for k in pair] if pair is not None else ["q_Z|T", "q_Z|notT"]
    return effects.pte_convolution(treated, untreated), {"source": curve_type, "functional": f"{names[0]} - {names[1]}"}


def cmd_pte(args) -> int:
    cfg = run_config(args)
    curve, how = pte_curve(cfg, args.curve_type, args.conditioning, args.starts)
    write_curve_csv(cfg.out / "pte.csv", curve)
    doc = {"settings": _settings(cfg), **how, "conditioning": args.conditioning, **effects.pte_summary(curve)}
    write_json(cfg.out / "pte_summary.json", doc)
    return EXIT_OK


def cmd_maxent(args) -> int:
    source = args.marginal if args.marginal is not None else args.qbar
    if (source is None) == (args.cov is None):
        raise UsageError("maxent needs exactly one of --marginal PATH or --cov ALPHA DELTA")
    if source is not None:
        qbar = load_table(source)
        qbar = normalize(qbar) if isinstance(qbar, CountTable) else qbar
        sol = solve_marginal_constraint(qbar)
        kind = {"constraint": "marginal", "qbar": qbar.flat().tolist()}
    else:
        sol = solve_covariance_constraints(*args.cov)
        kind = {"constraint": "covariance", "alpha": args.cov[0], "delta": args.cov[1]}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "qhat.json", {**kind, **sol.as_dict()})
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.alphas or not args.deltas:
        raise UsageError("sweep needs non-empty --alphas and --deltas")
    try:
        grid = sensitivity.SweepGrid(tuple(args.alphas), tuple(args.deltas))
    except ValueError as exc:
        raise UsageError(f"sweep grid: {exc}") from None
    cfg = run_config(args, need_case=False)
    if cfg.data.axis_names != ("t", "z"):
        raise UsageError(f"--data must be a (t, z) table for sweep, got {cfg.data.axis_names}")
    scfg = sensitivity.SweepConfig(cfg.sampler, cfg.grid, args.starts)
    results = sensitivity.run_sweep(cfg.data, cfg.n, grid, scfg, cfg.seed)
    sensitivity.write_sweep_csv(cfg.out / "sweep.csv", results)
    if args.curves:
        cdir = cfg.out / "curves"
        cdir.mkdir(exist_ok=True)
        for i, r in enumerate(results):
            for name, c in r.curves.items():
                write_curve_csv(cdir / f"cell{i:03d}_{name}.csv", c)
    failed = [r for r in results if not r.ok and math.isnan(r.pte_mode)]
    for r in failed:
        print(f"cell ({r.alpha:g}, {r.delta:g}) failed: {r.errors}", file=sys.stderr)
    return EXIT_OK if len(failed) < len(results) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# argument parsing


def _add_run_flags(p: argparse.ArgumentParser, with_model: bool = True) -> None:
    if with_model:
        p.add_argument("--model", choices=TAGS, default=MARGINAL)
        p.add_argument("--qbar", help="(a, z) table for --model partial")
        p.add_argument("--cov", nargs=2, type=float, metavar=("ALPHA", "DELTA"))
    p.add_argument("--data", help="count table (.csv or .json)")
    p.add_argument("--n", type=float, help="sample size (default: table total)")
    p.add_argument("--grid", type=int, default=inference.DEFAULT_GRID)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--burn", type=int, default=20_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--proposal-sd", type=float, default=0.05)
    p.add_argument("--starts", type=int, default=8, help="MAP multi-start count")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--config", help="JSON file of settings; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cefinfer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="MAP point, profile and marginal curves")
    _add_run_flags(p)
    p.add_argument("--coords", nargs="*", help="coordinate names or indices (default: all)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pte", help="posterior treatment-effect curve")
    _add_run_flags(p)
    p.add_argument("--conditioning", choices=("A", "notA"), help="confounder stratum (7-parameter models)")
    p.add_argument("--curve-type", choices=("profile", "marginal"), default="profile")
    p.set_defaults(func=cmd_pte)

    p = sub.add_parser("maxent", help="maximum-entropy reference distribution")
    p.add_argument("--marginal", help="(a, z) table to match")
    p.add_argument("--qbar", help="alias of --marginal")
    p.add_argument("--cov", nargs=2, type=float, metavar=("ALPHA", "DELTA"))
    p.add_argument("--out", default=".")
    p.add_argument("--config")
    p.set_defaults(func=cmd_maxent)

    p = sub.add_parser("sweep", help="sensitivity sweep over (alpha, delta)")
    _add_run_flags(p, with_model=False)
    p.add_argument("--alphas", nargs="*", type=float, default=[0.0, 0.35, 0.5])
    p.add_argument("--deltas", nargs="*", type=float, default=[0.0, 0.35, 0.5])
    p.add_argument("--curves", action="store_true", help="also write per-cell curve files")
    p.set_defaults(func=cmd_sweep)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("--config must hold a JSON object")
        unknown = sorted(set(doc) - CONFIG_KEYS)
        if unknown:
            raise UsageError(f"--config: unknown keys {unknown}")
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions}
        # config values become defaults, so anything given on the command line wins
        sp.set_defaults(**{k: v for k, v in doc.items() if k in known})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(f"cefinfer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cefinfer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleConstraintError as exc:
        print(f"cefinfer: infeasible constraints: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MaxEntConvergenceError, inference.EmptyDensityError, ArithmeticError, RuntimeError) as exc:
        print(f"cefinfer: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TableError, ValueError, OSError) as exc:
        print(f"cefinfer: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
