"""Command-line entry point: ``jamgame {capacity,curve,bounds,exact,codes}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .builtins import builtin_family
from .capacity import DEFAULT_TOL, compound_capacity, subset_capacities
from .channels import ChannelFamily, load_family, message_count
from .codes import evaluate_code, feinstein_build, split_build, split_decomposition
from .curves import CSV_SCHEMA, build_curves, eps_capacity_compound
from .errors import InvalidInputError, JamgameError
from .exact import game_values
from .fbl import gap_report

log = logging.getLogger("jamgame")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (frozenset, set)):
        return sorted(o)
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def _family(spec: str) -> ChannelFamily:
    if spec.startswith("builtin:"):
        return builtin_family(spec.split(":", 1)[1])
    return load_family(spec)


def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("blocklengths must be positive")
    return vals


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _rate_grid(text: str) -> list:
    """``a:b:steps`` -> midpoints of ``steps`` equal cells of [a, b], avoiding the endpoints."""
    try:
        a, b, steps = text.split(":")
        a, b, steps = float(a), float(b), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--R-grid expects a:b:steps, got {text!r}") from None
    if steps < 1 or b < a or a < 0:
        raise argparse.ArgumentTypeError("--R-grid needs 0 <= a <= b and steps >= 1")
    h = (b - a) / steps
    return [a + (i + 0.5) * h for i in range(steps)]


def _rates(args) -> list:
    if args.R_grid is not None:
        return args.R_grid
    if args.R is not None:
        return [args.R]
    raise InvalidInputError("give --R or --R-grid")


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    cfg["version"] = __version__
    return cfg


def _emit(args, payload: dict, csv_schema: str, header: list, rows: list) -> None:
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(f"# schema: {csv_schema}\n" if not csv_schema.startswith("#") else csv_schema + "\n")
        buf.write("# config: " + json.dumps(payload["config"], default=_jsonable, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, default=_jsonable) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def cmd_capacity(args) -> None:
    fam = _family(args.family)
    per_state = [compound_capacity(fam, [i], args.tol) for i in range(fam.num_states)]
    low = compound_capacity(fam, None, args.tol)
    out = {
        "config": _config(args),
        "per_state": [{"label": l, "capacity": c.value, "upper": c.upper} for l, c in zip(fam.labels, per_state)],
        "lower_capacity": low.value,
        "upper_capacity": min(c.value for c in per_state),
        "optimal_input": low.optimal_input,
    }
    rows = [[l, c.value, c.upper] for l, c in zip(fam.labels, per_state)]
    if args.subsets:
        caps = subset_capacities(fam, args.tol)
        out["subsets"] = [
            {"subset": [fam.labels[i] for i in sorted(s)], "capacity": c.value, "upper": c.upper}
            for s, c in caps.items()
        ]
        rows = [["+".join(fam.labels[i] for i in sorted(s)), c.value, c.upper] for s, c in caps.items()]
    else:
        rows.append(["all", low.value, low.upper])
    _emit(args, out, "jamgame.capacity/1 columns=subset,capacity,upper", ["subset", "capacity", "upper"], rows)


def cmd_curve(args) -> None:
    fam = _family(args.family)
    pair = build_curves(fam, args.tol)
    out = {"config": _config(args), "curve": pair.to_dict()}
    if args.eps:
        out["eps_capacity"] = [{"eps": e, "C_eps": eps_capacity_compound(pair, e)} for e in args.eps]
    if args.R_grid:
        out["samples"] = [{"R": r, "L": pair.L(r), "U": pair.U(r), "near_breakpoint": pair.near_breakpoint(r)}
                          for r in args.R_grid]
    if args.format == "csv":
        text = pair.to_csv()
        head, _, body = text.partition("\n")
        body = "# config: " + json.dumps(out["config"], default=_jsonable, sort_keys=True) + "\n" + body
        text = head + "\n" + body
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return
    _emit(args, out, CSV_SCHEMA, [], [])


def cmd_bounds(args) -> None:
    fam = _family(args.family)
    if not args.n:
        raise InvalidInputError("give --n (comma-separated for a sweep)")
    caps = subset_capacities(fam, args.tol)
    reports = []
    for R in _rates(args):
        for n in args.n:
            log.info("bounds n=%d R=%.6g", n, R)
            reports.append(gap_report(fam, n, R, tol=args.tol, capacities=caps, n1=args.n1))
    out = {"config": _config(args), "reports": [r.to_dict() for r in reports]}
    rows = [[r.n, r.R, r.achievability_upper, r.converse_lower, r.gap] for r in reports]
    _emit(args, out, "jamgame.bounds/1 columns=n,R,upper,lower,gap", ["n", "R", "upper", "lower", "gap"], rows)


def _message_count(args, n: int) -> int:
    if args.M is not None:
        return args.M
    if args.R is None:
        raise InvalidInputError("give --M or --R")
    return message_count(n, args.R)


def cmd_exact(args) -> None:
    fam = _family(args.family)
    n = (args.n or [1])[0]
    M = _message_count(args, n)
    gv = game_values(fam, n, M, seed=args.seed)
    out = {"config": _config(args), "values": gv.to_dict()}
    d = gv.to_dict()
    header = ["n", "M", "lp_lower", "exact_lower", "det_upper", "heuristic_upper"]
    _emit(args, out, "jamgame.exact/1 columns=" + ",".join(header), header, [[d[h] for h in header]])


def cmd_codes(args) -> None:
    fam = _family(args.family)
    if not args.n:
        raise InvalidInputError("give --n")
    n = args.n[0]
    if args.scheme == "feinstein":
        M = _message_count(args, n)
        res = feinstein_build(fam, n, M)
        report = evaluate_code(res.code, fam, seed=args.seed)
        build = {"scheme": "feinstein", "M": M, "K": res.K, "alpha": res.alpha,
                 "lambda_formula": res.lambda_bound, "lambda_achieved": res.lambda_achieved}
        code = res.code.to_dict()
    else:
        if args.R is None:
            raise InvalidInputError("the split scheme needs --R")
        res = split_build(fam, n, args.n1, args.R, args.tol)
        report = evaluate_code(res.code, fam, seed=args.seed)
        dec = split_decomposition(res.code, fam)
        build = {"scheme": "split", "M": res.code.M, "n1": res.code.n1,
                 "misclassification_value": res.misclassification, "lambda": res.lambda_bound,
                 "bound_U_plus_2lambda": min(1.0, res.misclassification + 2 * res.lambda_bound),
                 "decomposition": dec}
        code = res.code.to_dict(fam.labels)
    out = {"config": _config(args), "build": build, "report": report.to_dict(), "code": code}
    rows = [[t, s, e] for t, row in enumerate(report.per_state_per_message) for s, e in enumerate(row)]
    _emit(args, out, "jamgame.code_errors/1 columns=state,message,error", ["state", "message", "error"], rows)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", required=True, help="family JSON path or builtin:<name>")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="jamgame", description="Finite and limiting values of the coding-jamming game.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("capacity", parents=[common], help="per-state, compound and subset capacities")
    s.add_argument("--subsets", action="store_true", help="list every nonempty subset")
    s.set_defaults(func=cmd_capacity)

    s = sub.add_parser("curve", parents=[common], help="limiting value step functions L and U")
    s.add_argument("--eps", type=_float_list, help="comma-separated eps values for the eps-capacity table")
    s.add_argument("--R-grid", dest="R_grid", type=_rate_grid)
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("bounds", parents=[common], help="finite-blocklength achievability and converse")
    s.add_argument("--n", type=_int_list, required=True)
    s.add_argument("--R", type=float)
    s.add_argument("--R-grid", dest="R_grid", type=_rate_grid)
    s.add_argument("--n1", type=int)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("exact", parents=[common], help="exact values at tiny blocklength")
    s.add_argument("--n", type=_int_list, default=[1])
    s.add_argument("--M", type=int)
    s.add_argument("--R", type=float)
    s.set_defaults(func=cmd_exact)

    s = sub.add_parser("codes", parents=[common], help="build and evaluate an explicit code")
    s.add_argument("--n", type=_int_list, required=True)
    s.add_argument("--M", type=int)
    s.add_argument("--R", type=float)
    s.add_argument("--n1", type=int)
    s.add_argument("--scheme", choices=("feinstein", "split"), default="feinstein")
    s.set_defaults(func=cmd_codes)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.tol <= 0:
        parser.error("--tol must be positive")
    try:
        args.func(args)
    except JamgameError as exc:
        print(f"jamgame: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
