"""Command-line driver.

Subcommands:

* ``solve``  -- run brute force, GMAA*, the sequentially rational Q* or the
  k-delay monotonicity check and print a result record;
* ``bounds`` -- per-history maxima of Q_MDP, Q_POMDP, Q_BG and (when
  feasible) Q*, plus a check of their ordering;
* ``export`` -- write a problem in the text problem-file format.

Result records are ``key: value`` lines in a fixed order; timings go to a
separate block so repeated runs give byte-identical records.  Exit status:
0 success, 1 failed verification, 2 usage error, 3 cap exceeded or search
truncated, 4 invalid problem or parse failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .bgames import BgCapExceeded
from .evaluator import CapExceeded, brute_force_solve, simulate
from .gmaa import gmaa
from .heuristics import build_heuristic
from .histories import HistorySpace
from .model import DecPomdp, ModelError
from .policy import dump_policy
from .problem_file import export_problem, load_problem
from .problems import make_builtin

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CAP = 3
EXIT_INVALID = 4
OUT_ENV = "DECPOMDP_OUT"
BOUNDS_SEARCH_TIME = 600.0  # seconds for the GMAA* fallback of `bounds`

HEURISTIC_CHOICES = ("qmdp", "qpomdp", "qbg", "qstar-normative")


def parse_k(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k must be a positive integer or 'inf', got {text!r}")
    if k < 1:
        raise argparse.ArgumentTypeError("k must be >= 1")
    return k


def load_model(spec: str, horizon: int | None) -> DecPomdp:
    """A built-in ``name[:params]`` or a problem-file path."""
    path = Path(spec)
    if path.is_file():
        model = load_problem(path.read_text(encoding="utf-8"))
        if not model.name:
            model = model.replace(name=path.stem)
        return model.with_horizon(horizon) if horizon is not None else model
    if horizon is None:
        raise ValueError("--horizon is required for built-in problems")
    try:
        return make_builtin(spec, horizon)
    except ValueError as e:
        raise ModelError(str(e)) from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if value == math.inf else "-inf" if value == -math.inf else repr(value)
    return str(value)


def format_record(items) -> str:
    return "".join(f"{k}: {_fmt(v)}\n" for k, v in items)


def _out_dir(args) -> Path | None:
    out = args.out or os.environ.get(OUT_ENV)
    if not out:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, record, timing, extra_files=None) -> None:
    text = format_record(record)
    sys.stdout.write(text)
    sys.stdout.write("\n[timing]\n" + format_record(timing))
    out = _out_dir(args)
    if out is not None:
        (out / "result.txt").write_text(text, encoding="utf-8")
        (out / "timing.txt").write_text(format_record(timing), encoding="utf-8")
        for name, content in (extra_files or {}).items():
            (out / name).write_text(content, encoding="utf-8")


def _normative_heuristic(model: DecPomdp, space: HistorySpace):
    from .qstar import extract_policy, qstar_normative, qstar_sequential

    q = qstar_sequential(model, space)
    return qstar_normative(model, extract_policy(model, q), space)


def cmd_solve(args) -> int:
    model = load_model(args.problem, args.horizon)
    record = [
        ("problem", model.name or args.problem),
        ("horizon", model.horizon),
        ("algorithm", args.algorithm),
    ]
    timing = []
    policy = None
    status = EXIT_OK
    t0 = time.perf_counter()
    if args.algorithm == "brute":
        res = brute_force_solve(model, cap=args.policy_cap)
        policy = res.policy
        record += [("value", res.value), ("policies", res.count)]
        timing.append(("search_time", time.perf_counter() - t0))
    elif args.algorithm == "gmaa":
        space = HistorySpace(model)
        if args.heuristic == "qstar-normative":
            heuristic = _normative_heuristic(model, space)
        else:
            heuristic = build_heuristic(args.heuristic, model, space)
        t_heur = time.perf_counter() - t0
        res = gmaa(
            model, heuristic, k=args.k, space=space,
            node_cap=args.node_cap, time_cap=args.time_cap,
        )
        policy = res.policy
        record += [
            ("heuristic", args.heuristic),
            ("k", args.k),
            ("value", res.value),
            ("n_phi", res.stats.n_phi),
            ("expansions", res.stats.expansions),
            ("bgs_solved", res.stats.bgs_solved),
            ("root_bound", res.root_bound),
            ("truncated", res.truncated),
        ]
        if res.truncated:
            record += [("reason", res.reason), ("open_bound", res.open_bound)]
            status = EXIT_CAP
        timing += [("heuristic_time", t_heur), ("search_time", res.stats.search_time)]
    elif args.algorithm == "qstar":
        from .qstar import extract_policy, qstar_sequential

        q = qstar_sequential(model)
        policy = extract_policy(model, q)
        record.append(("value", q.value))
        timing.append(("search_time", time.perf_counter() - t0))
    else:  # kdelay-verify
        from .delayed_comm import verify_monotone

        k_max = model.horizon if args.k == math.inf else int(args.k)
        rep = verify_monotone(model, k_max)
        record.append(("k_max", k_max))
        for k in range(k_max):
            record += [
                (f"checked_k{k}", rep.checked[k]),
                (f"max_violation_k{k}", rep.max_violation[k]),
            ]
        record.append(("monotone", rep.ok))
        timing.append(("search_time", time.perf_counter() - t0))
        if not rep.ok:
            status = EXIT_VERIFY
    extra = {}
    if policy is not None:
        if args.episodes:
            mean, err = simulate(model, policy, args.episodes, args.seed)
            record += [("seed", args.seed), ("sim_mean", mean), ("sim_stderr", err)]
        dump = dump_policy(model, policy)
        extra["policy.txt"] = dump
        out = _out_dir(args)
        record.append(("policy_dump", str(out / "policy.txt") if out else "-"))
    _emit(args, record, timing, extra)
    return status


def compare_heuristics(model: DecPomdp, space: HistorySpace | None = None):
    """Per-history maxima over joint actions of every Q function.

    Returns ``(columns, rows, notice)``; rows are ``(stage, history, values)``
    sorted by stage and then by decreasing value of the tightest column
    (ties by history index).  Q* is the normative table of an optimal policy,
    taken from the sequentially rational Q* when within its cap and otherwise
    from exhaustive GMAA* with Q_BG.  With Q* available the rows cover the
    histories consistent with that policy; otherwise every
    positive-probability history.
    """
    from .qstar import extract_policy, qstar_normative, qstar_sequential

    space = space or HistorySpace(model)
    tables = {name: build_heuristic(name, model, space) for name in ("qmdp", "qpomdp", "qbg")}
    notice = ""
    try:
        q = qstar_sequential(model, space)
        tables["qstar"] = qstar_normative(model, extract_policy(model, q), space)
    except (CapExceeded, BgCapExceeded) as e:
        # fall back to an optimal policy proven by exhaustive GMAA* search
        res = gmaa(model, tables["qbg"], space=space, time_cap=BOUNDS_SEARCH_TIME)
        if res.truncated or res.policy is None:
            notice = f"Q* omitted: {e}"
        else:
            tables["qstar"] = qstar_normative(model, res.policy, space)
            notice = f"Q* from the GMAA* optimal policy ({e})"
    columns = [c for c in ("qstar", "qbg", "qpomdp", "qmdp") if c in tables]
    rows = []
    for t in range(model.horizon):
        mask = space.prob(t) > 0
        if "qstar" in tables:
            mask &= tables["qstar"].consistent(t)
        idx = np.nonzero(mask)[0]
        cols = [tables[c].values(t)[idx].max(axis=1) for c in columns]
        order = np.lexsort((idx, -np.round(cols[0], 10)))
        for j in order:
            rows.append((t, int(idx[j]), tuple(float(c[j]) for c in cols)))
    return columns, rows, notice


def cmd_bounds(args) -> int:
    model = load_model(args.problem, args.horizon)
    space = HistorySpace(model)
    t0 = time.perf_counter()
    columns, rows, notice = compare_heuristics(model, space)
    tol = 1e-9
    ordered = all(
        all(v[i] <= v[i + 1] + tol for i in range(len(v) - 1)) for _, _, v in rows
    )
    # pointwise check over every (theta, a), not just the per-history maxima
    qs = [build_heuristic(c, model, space) for c in ("qbg", "qpomdp", "qmdp")]
    for t in range(model.horizon):
        mask = space.prob(t) > 0
        vals = [q.values(t)[mask] for q in qs]
        ordered &= all(bool(np.all(vals[i] <= vals[i + 1] + tol)) for i in range(2))
    lines = ["# stage\thistory\t" + "\t".join(columns)]
    for t, theta, vals in rows:
        steps = ",".join(
            f"({model.joint_action_name(a)}|{model.joint_observation_name(o)})"
            for a, o in space.joint_symbols(theta, t)
        ) or "-"
        lines.append(f"{t}\t{steps}\t" + "\t".join(repr(v) for v in vals))
    table = "\n".join(lines) + "\n"
    if notice:
        sys.stderr.write(notice + "\n")
    record = [
        ("problem", model.name or args.problem),
        ("horizon", model.horizon),
        ("columns", ",".join(columns)),
        ("rows", len(rows)),
        ("hierarchy", ordered),
    ]
    out = _out_dir(args)
    if out is not None:
        (out / "bounds.tsv").write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table + "\n")
    _emit(args, record, [("compute_time", time.perf_counter() - t0)])
    return EXIT_OK if ordered else EXIT_VERIFY


def cmd_export(args) -> int:
    model = load_model(args.problem, args.horizon)
    text = export_problem(model)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decpomdp", description="Finite-horizon Dec-POMDP planning toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", required=True,
                       help="built-in name[:params] (e.g. firefighting:3,3) or problem-file path")
        p.add_argument("--horizon", type=int, default=None)

    solve = sub.add_parser("solve", help="compute an optimal or approximate policy")
    common(solve)
    solve.add_argument("--algorithm", choices=("brute", "gmaa", "qstar", "kdelay-verify"),
                       default="gmaa")
    solve.add_argument("--heuristic", choices=HEURISTIC_CHOICES, default="qbg")
    solve.add_argument("--k", type=parse_k, default=math.inf,
                       help="children kept per expansion (integer or 'inf'); "
                            "maximum delay for kdelay-verify")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--episodes", type=int, default=0,
                       help="also simulate the policy for this many episodes")
    solve.add_argument("--jobs", type=int, default=1,
                       help="worker count (computation is single-threaded)")
    solve.add_argument("--node-cap", type=int, default=None)
    solve.add_argument("--time-cap", type=float, default=None)
    solve.add_argument("--policy-cap", type=int, default=10**8)
    solve.add_argument("--out", default=None,
                       help=f"output directory (default: ${OUT_ENV} if set)")
    solve.set_defaults(func=cmd_solve)

    bounds = sub.add_parser("bounds", help="compare Q-value bounds per history")
    common(bounds)
    bounds.add_argument("--out", default=None)
    bounds.set_defaults(func=cmd_bounds)

    export = sub.add_parser("export", help="write a problem file")
    common(export)
    export.add_argument("--out", default=None, help="file to write (default stdout)")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        sys.stderr.write("error: --jobs must be >= 1\n")
        return 2
    try:
        return args.func(args)
    except (CapExceeded, BgCapExceeded) as e:
        sys.stderr.write(f"cap exceeded: {e}\n")
        return EXIT_CAP
    except (ModelError, ValueError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
