"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 model validation error, 3 runtime
error (e.g. an observation with zero likelihood).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .alignment import hybrid_logR1, hybrid_R1, pmap, viterbi
from .estimation import TRACE_COLUMNS, json_safe, posterior_floor_stats, simulate, summarize
from .inference import ZeroLikelihoodError, forgetting_study, forward_backward, mean_log_slope
from .model import Categorical, ModelValidationError, chain_issues, load_model, sample
from .oracle import InstanceTooLarge, brute_best, enumerate_posterior
from .regeneration import A1Failure, check_a2, detect_cluster
from .risk import evaluate_risks

EXIT_USAGE, EXIT_MODEL, EXIT_RUNTIME = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# -- io --------------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def read_column_csv(path, model=None) -> dict[str, np.ndarray]:
    """Read a headered CSV of numeric columns into arrays."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise UsageError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    data = rows[1:]
    if not data:
        raise UsageError(f"{path}: no data rows")
    cols = {}
    for k, name in enumerate(header):
        try:
            values = [row[k] for row in data]
            if model is not None and name == "x" and not isinstance(model.emission, Categorical):
                cols[name] = np.array([float(v) for v in values])
            else:
                cols[name] = np.array([int(v) for v in values], dtype=np.int64)
        except (IndexError, ValueError) as exc:
            raise UsageError(f"{path}: malformed column {name!r}: {exc}") from exc
    return cols


def _write_text(path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _write_text(path, buf.getvalue())


def _write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _emit_json(args, obj) -> None:
    if args.out:
        _write_json(args.out, obj)
    else:
        sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _load(args, require_ergodic=True):
    if not Path(args.model).is_file():
        raise UsageError(f"model file not found: {args.model}")
    try:
        return load_model(args.model, require_ergodic)
    except json.JSONDecodeError as exc:
        raise ModelValidationError([f"{args.model}: invalid JSON ({exc})"]) from exc


def _observations(args, model):
    cols = read_column_csv(args.input, model)
    if "x" not in cols:
        raise UsageError(f"{args.input}: missing 'x' column")
    return cols


# -- commands ----------------------------------------------------------------

def cmd_sample(args) -> None:
    model = _load(args)
    smp = sample(model, args.n, args.seed)
    if args.with_truth:
        _write_csv(args.out, ["x", "y"], zip(smp.x.tolist(), smp.y.tolist()))
    else:
        _write_csv(args.out, ["x"], ((v,) for v in smp.x.tolist()))


def _paths_for(model, x, post, method, c, loss=None):
    if method == "viterbi":
        return {"viterbi": viterbi(model, x)}
    if method == "pmap":
        return {"pmap": pmap(post, model, x)}
    if method == "hybrid":
        return {"hybrid": hybrid_logR1(model, x, post, c)}
    if method == "hybrid-r1":
        return {"hybrid-r1": hybrid_R1(model, x, post, c, loss)}
    return {
        "viterbi": viterbi(model, x),
        "pmap": pmap(post, model, x),
        "hybrid": hybrid_logR1(model, x, post, c),
        "hybrid-r1": hybrid_R1(model, x, post, c, loss),
    }


def cmd_align(args) -> None:
    model = _load(args)
    cols = _observations(args, model)
    x = cols["x"]
    post = forward_backward(model, x)
    paths = _paths_for(model, x, post, args.method, args.c)
    c_grid = sorted(set(args.c_grid) | {args.c})
    truth = cols.get("y")
    report = {}
    vit = paths.get("viterbi") or viterbi(model, x)
    for name, path in paths.items():
        risks = evaluate_risks(model, x, post, path, c_grid=c_grid, truth=truth)
        entry = risks.to_dict()
        entry["kind"] = path.kind
        entry["log_joint"] = path.log_joint if math.isfinite(path.log_joint) else None
        entry["matches_viterbi"] = bool(np.array_equal(path.states, vit.states))
        report[name] = entry
    report["log_likelihood"] = post.log_likelihood
    if args.paths_out:
        names = list(paths)
        _write_csv(args.paths_out, names, zip(*(paths[k].states.tolist() for k in names)))
    _emit_json(args, report)


def cmd_risk(args) -> None:
    model = _load(args)
    cols = _observations(args, model)
    x = cols["x"]
    path_cols = read_column_csv(args.path)
    name = args.column or next(iter(path_cols))
    if name not in path_cols:
        raise UsageError(f"{args.path}: no column {name!r}")
    states = path_cols[name]
    post = forward_backward(model, x)
    truth = cols.get("y") if args.truth else None
    try:
        risks = evaluate_risks(model, x, post, states, c_grid=args.c_grid, truth=truth)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit_json(args, risks.to_dict())


def cmd_check(args) -> None:
    model = _load(args, require_ergodic=False)
    try:
        info = detect_cluster(model, args.eps)
        a1 = {"holds": True, **info.to_dict()}
    except A1Failure as exc:
        a1 = {"holds": False, "reason": str(exc), "offending": exc.offending}
    holds, witnesses = check_a2(model)
    a2 = {"holds": holds, "witnesses": {str(k): v for k, v in witnesses.items()}}
    if not holds and model.num_states == 2 and any(w is not None for w in witnesses.values()):
        a2["advisory"] = "two-state model: the condition holding for one state suffices for the infinite Viterbi alignment"
    _emit_json(args, {"a1": a1, "a2": a2, "chain_issues": chain_issues(model.transition)})


def cmd_estimate(args) -> None:
    model = _load(args)
    if args.checkpoints and max(args.checkpoints) > args.n:
        raise UsageError("checkpoints exceed --n")
    trace = simulate(
        model, args.n, args.reps, args.seed,
        checkpoints=args.checkpoints or None, m_pad=args.m_pad, probe_step=args.probe_step,
        workers=args.workers,
    )
    report = summarize(model, trace).to_dict()
    if args.floor_grid:
        stats = posterior_floor_stats(model, args.floor_grid, args.seed)
        report["posterior_floor"] = json_safe({
            "rows": [{"n": r.n, "rho_hat": r.rho_hat, "pairs": r.pairs} for r in stats.rows],
            "stability": stats.stability,
            "diagnostic": stats.diagnostic,
        })
    if args.trace_out:
        _write_csv(args.trace_out, TRACE_COLUMNS, ([row[c] for c in TRACE_COLUMNS] for row in trace.rows))
    _emit_json(args, report)


def cmd_forgetting(args) -> None:
    model = _load(args)
    if args.max_gap >= args.n:
        raise UsageError(f"--max-gap {args.max_gap} must be smaller than --n {args.n}")
    smp = sample(model, args.n, args.seed)
    last = args.n - 1 - args.max_gap
    count = min(args.anchors, last + 1)
    anchors = sorted(set(np.linspace(0, last, count).round().astype(int).tolist()))
    gaps = list(range(1, args.max_gap + 1))
    profiles = forgetting_study(model, smp.x, anchors, gaps)
    rows = []
    for p in profiles:
        rows += [(p.t, g, tv) for g, tv in zip(p.gaps, p.tv)]
        rows.append((p.t, "slope", p.fitted_log_slope if math.isfinite(p.fitted_log_slope) else "nan"))
    rows.append(("mean", "slope", mean_log_slope(profiles)))
    _write_csv(args.out, ["t", "gap", "tv"], rows)


def cmd_oracle(args) -> None:
    model = _load(args)
    x = _observations(args, model)["x"]
    try:
        enum = enumerate_posterior(model, x)
        path, value = brute_best(model, x, args.objective, args.c)
    except InstanceTooLarge as exc:
        raise UsageError(str(exc)) from exc
    _emit_json(args, {
        "objective": path.kind,
        "path": path.states.tolist(),
        "value": value,
        "log_evidence": enum.log_evidence,
        "marginals": enum.marginals.tolist(),
    })


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_, out_required=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--out", required=out_required, help="output file (JSON commands default to stdout)")
        p.set_defaults(func=func)
        return p

    p = add("sample", cmd_sample, "sample observations (and optionally states) to CSV", out_required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--with-truth", action="store_true", help="also write the hidden states as column y")

    p = add("align", cmd_align, "decode a sequence and report its risks")
    p.add_argument("--input", required=True, help="CSV with column x (and optionally y)")
    p.add_argument("--method", choices=["viterbi", "pmap", "hybrid", "hybrid-r1", "all"], default="all")
    p.add_argument("--c", type=float, default=1.0, help="hybrid regularization constant")
    p.add_argument("--c-grid", type=_floats, default=[0.0, 1.0])
    p.add_argument("--paths-out", help="CSV with one column per decoded path")

    p = add("risk", cmd_risk, "risks of a given path")
    p.add_argument("--input", required=True, help="CSV with column x (and optionally y)")
    p.add_argument("--path", required=True, help="CSV holding the path to score")
    p.add_argument("--column", help="column of --path to use (default: first)")
    p.add_argument("--truth", action="store_true", help="also report the empirical risk against column y")
    p.add_argument("--c-grid", type=_floats, default=[0.0, 1.0])

    p = add("check", cmd_check, "check the cluster (A1) and A2 assumptions")
    p.add_argument("--eps", type=float, default=None)

    p = add("estimate", cmd_estimate, "Monte Carlo estimates of the asymptotic risks")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--reps", type=_positive_int, default=8)
    p.add_argument("--checkpoints", type=_ints, default=[])
    p.add_argument("--m-pad", type=int, default=20)
    p.add_argument("--probe-step", type=_positive_int, default=100)
    p.add_argument("--floor-grid", type=_ints, default=[], help="n values for the posterior-floor statistic")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--trace-out", help="per-checkpoint trace CSV")

    p = add("forgetting", cmd_forgetting, "right-window forgetting of smoothing probabilities", out_required=True)
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--anchors", type=_positive_int, default=100)
    p.add_argument("--max-gap", type=_positive_int, default=40)

    p = add("oracle", cmd_oracle, "brute-force optimum by path enumeration")
    p.add_argument("--input", required=True)
    p.add_argument("--objective", choices=["viterbi", "pmap", "hybrid_logR1", "hybrid_R1"], default="viterbi")
    p.add_argument("--c", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"segrisk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelValidationError as exc:
        print(f"segrisk: invalid model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ZeroLikelihoodError as exc:
        print(f"segrisk: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"segrisk: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
