"""Command-line interface.

Subcommands: ``test`` (run the battery on a CSV of observations),
``simulate`` (seeded power study from a config file), ``are`` (one
efficiency query), ``tables`` (the two built-in efficiency tables) and
``critical`` (simulated exact critical values).

Exit codes: 0 success (statistical rejection is data, not an error),
2 malformed input or configuration, 3 invalid null shape matrix.  Every
error path prints one ``error: <category>: <detail>`` line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import efficiency, engine, montecarlo
from .linalg import ShapeMatrix
from .radial import parse_model
from .scores import parse_score
from .signrank import decompose

DEFAULT_BATTERY = (
    "john",
    "gaussian",
    "vdw",
    "tnu:6",
    "tnu:2",
    "tnu:1",
    "tnu:0.5",
    "tnu:0.2",
    "sign",
    "wilcoxon",
    "spearman",
)

SEED_ENV_VAR = "SHAPERANK_SEED"


class InputError(Exception):
    """Malformed data, flags or configuration (exit code 2)."""


class ShapeError(Exception):
    """Invalid null shape matrix (exit code 3)."""


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise InputError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc


# ---------------------------------------------------------------------------
# Input parsing
# ---------------------------------------------------------------------------

def read_data_csv(path: str) -> np.ndarray:
    """Read an (n, k) comma-separated matrix; a non-numeric first row is a header."""
    try:
        with open(path) as fh:
            lines = [line.strip() for line in fh]
    except OSError as exc:
        raise InputError(f"cannot read data file {path!r}: {exc}") from exc
    lines = [line for line in lines if line]
    if not lines:
        raise InputError(f"data file {path!r} is empty")

    def parse_row(line: str, rownum: int) -> list[float]:
        cells = [c.strip() for c in line.split(",")]
        out = []
        for colnum, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError as exc:
                raise InputError(
                    f"row {rownum}, column {colnum}: {cell!r} is not a number"
                ) from exc
            if not math.isfinite(value):
                raise InputError(f"row {rownum}, column {colnum}: non-finite value")
            out.append(value)
        return out

    start = 0
    try:
        first = parse_row(lines[0], 1)
    except InputError:
        start = 1
        if len(lines) == 1:
            raise InputError(f"data file {path!r} has a header but no rows")
        first = None

    rows = [] if first is None else [first]
    for i, line in enumerate(lines[start:], start=start + 1):
        if i == 1 and first is not None:
            continue
        rows.append(parse_row(line, i))
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise InputError(f"row {i + start - 1} has {len(row)} cells, expected {width}")
    data = np.asarray(rows, dtype=float)
    if data.shape[0] < 2 or data.shape[1] < 2:
        raise InputError(
            f"need at least 2 rows and 2 columns, got shape {data.shape}"
        )
    return data


def parse_shape_argument(spec: str, k: int) -> ShapeMatrix:
    """'identity' or a path to a k-by-k CSV; rescaled to unit corner if needed."""
    if spec == "identity":
        return ShapeMatrix.identity(k)
    try:
        matrix = np.loadtxt(spec, delimiter=",", ndmin=2)
    except OSError as exc:
        raise InputError(f"cannot read shape matrix file {spec!r}: {exc}") from exc
    except ValueError as exc:
        raise ShapeError(f"shape matrix file {spec!r} is not numeric: {exc}") from exc
    if matrix.shape != (k, k):
        raise ShapeError(
            f"shape matrix is {matrix.shape[0]}x{matrix.shape[1]}, expected {k}x{k}"
        )
    try:
        if matrix[0, 0] != 1.0:
            print(
                f"warning: rescaling shape matrix by its (1,1) entry {matrix[0, 0]:g}",
                file=sys.stderr,
            )
            return ShapeMatrix.normalized(matrix)
        return ShapeMatrix(matrix)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc


def parse_theta_argument(spec: str, k: int) -> np.ndarray | None:
    if spec == "estimate":
        return None
    try:
        theta = np.array([float(v) for v in spec.split(",")])
    except ValueError as exc:
        raise InputError(f"theta must be 'estimate' or comma-separated numbers") from exc
    if theta.shape != (k,):
        raise InputError(f"theta has {theta.size} entries, expected {k}")
    return theta


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _render_reports(reports, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.to_record() for r in reports], indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        lines = ["test,statistic,df,p_value,n,k,theta_estimated,notes"]
        for r in reports:
            notes = ";".join(r.validity_notes)
            lines.append(
                f"{r.test_name},{r.statistic:.10g},{r.df},{r.p_value:.10g},"
                f"{r.n},{r.k},{r.theta_estimated},{notes}"
            )
        return "\n".join(lines) + "\n"
    width = max(len(r.test_name) for r in reports) + 2
    lines = [
        "test".ljust(width) + "statistic".rjust(12) + "df".rjust(4) + "p-value".rjust(10)
    ]
    for r in reports:
        line = (
            r.test_name.ljust(width)
            + f"{r.statistic:12.4f}"
            + f"{r.df:4d}"
            + f"{r.p_value:10.4f}"
        )
        if r.validity_notes:
            line += "  [" + "; ".join(r.validity_notes) + "]"
        lines.append(line)
    return "\n".join(lines) + "\n"


def _run_single_test(name: str, d, k: int):
    if name == "john":
        return engine.john_statistic(d)
    if name == "gaussian":
        return engine.gaussian_adjusted_statistic(d)
    if name == "adjsign":
        return engine.adjusted_sign_statistic(d)
    if name.startswith("parametric:"):
        return engine.parametric_radial_statistic(d, parse_model(name.split(":", 1)[1], k))
    return engine.rank_score_statistic(d, parse_score(name, k))


def cmd_test(args) -> int:
    data = read_data_csv(args.data)
    n, k = data.shape
    shape = parse_shape_argument(args.v0, k)
    theta = parse_theta_argument(args.theta, k)
    names = list(DEFAULT_BATTERY) if args.test is None else [
        t.strip() for t in args.test.split(",") if t.strip()
    ]
    try:
        d = decompose(data, theta, shape)
        reports = [_run_single_test(name, d, k) for name in names]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    sys.stdout.write(_render_reports(reports, args.format))
    return 0


def cmd_simulate(args) -> int:
    path = args.config
    if not os.path.exists(path):
        bundled = resources.files("shaperank.configs").joinpath(f"{path}.cfg")
        if bundled.is_file():
            text = bundled.read_text()
        else:
            raise InputError(f"no such config file or bundled config: {path!r}")
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        config = montecarlo.parse_study_config(text)
    except montecarlo.StudyConfigError as exc:
        raise InputError(f"config {path!r}: {exc}") from exc
    if args.full:
        config = config.full_scale()
    if args.parallelism is not None:
        from dataclasses import replace

        config = replace(config, parallelism=args.parallelism)
    result = montecarlo.run_study(
        config.scenarios(),
        config.tests,
        config.replications,
        alpha=config.alpha,
        seed=config.seed,
        parallelism=config.parallelism,
    )
    paths = montecarlo.write_study_outputs(result, config.layout, args.out_prefix)
    for f in (0.05, 0.20, 0.50):
        print(f"half-width at frequency {f:.2f}: {result.half_width(f):.4f}")
    print("wrote " + ", ".join(paths))
    return 0


def cmd_are(args) -> int:
    try:
        score = parse_score(args.score, args.k)
        model = parse_model(args.g1, args.k)
        value = efficiency.are(score, model)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.format == "json":
        payload = {
            "score": args.score,
            "g1": args.g1,
            "k": args.k,
            "are": None if math.isinf(value) else value,
            "infinite": math.isinf(value),
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print("+inf" if math.isinf(value) else f"{value:.3f}")
    return 0


def cmd_tables(args) -> int:
    if args.which == "table1":
        blocks = [efficiency.scale_loss_table("powerexp"), efficiency.scale_loss_table("student")]
    elif args.which == "table2":
        blocks = [efficiency.are_table()]
    else:
        raise InputError(f"unknown table {args.which!r}")
    for block in blocks:
        sys.stdout.write(block.to_csv() if args.format == "csv" else block.to_text())
        sys.stdout.write("\n")
    return 0


def cmd_critical(args) -> int:
    try:
        score = parse_score(args.score, args.k)
        record = engine.exact_critical_value(
            args.n,
            args.k,
            score,
            args.alpha,
            mode=args.mode,
            n_draws=args.draws,
            sign_rounds=args.rounds,
            seed=args.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.format == "json":
        print(json.dumps(record.to_record(), sort_keys=True))
    else:
        print(
            f"critical value {record.value:.6f} "
            f"(n={record.n}, k={record.k}, score={record.score}, alpha={record.alpha:g}, "
            f"mode={record.mode}, pooled={record.pooled}, seed={record.seed})"
        )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shaperank",
        description="Rank and sign tests for the shape matrix of elliptical data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run tests on a CSV of observations")
    p_test.add_argument("--data", required=True, help="CSV file, one observation per row")
    p_test.add_argument("--v0", default="identity", help="'identity' or a k-by-k CSV file")
    p_test.add_argument(
        "--theta", default="estimate", help="'estimate' or comma-separated coordinates"
    )
    p_test.add_argument(
        "--test",
        default=None,
        help="comma-separated test names (default: the full battery); names: "
        "john, gaussian, adjsign, sign, wilcoxon, spearman, power:a, vdw, "
        "tnu:nu, parametric:model",
    )
    p_test.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="run a seeded power study")
    p_sim.add_argument(
        "--config",
        required=True,
        help="config file path, or a bundled name (table3_desk, table4_desk)",
    )
    p_sim.add_argument("--full", action="store_true", help="escalate to n=500, N=2500")
    p_sim.add_argument("--out-prefix", default="study", help="output file prefix")
    p_sim.add_argument("--parallelism", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_are = sub.add_parser("are", help="one efficiency query against the Gaussian test")
    p_are.add_argument("--score", required=True)
    p_are.add_argument("--g1", required=True, help="gaussian, tnu:nu or powerexp:eta")
    p_are.add_argument("--k", type=int, required=True)
    p_are.add_argument("--format", choices=("text", "json"), default="text")
    p_are.set_defaults(func=cmd_are)

    p_tab = sub.add_parser("tables", help="emit the built-in efficiency tables")
    p_tab.add_argument("--which", choices=("table1", "table2"), required=True)
    p_tab.add_argument("--format", choices=("text", "csv"), default="text")
    p_tab.set_defaults(func=cmd_tables)

    p_crit = sub.add_parser("critical", help="simulated exact critical values")
    p_crit.add_argument("--n", type=int, required=True)
    p_crit.add_argument("--k", type=int, required=True)
    p_crit.add_argument("--score", default="sign")
    p_crit.add_argument("--alpha", type=float, default=0.05)
    p_crit.add_argument("--mode", choices=("enumerate", "sample"), default="sample")
    p_crit.add_argument("--draws", type=int, default=100_000)
    p_crit.add_argument("--rounds", type=int, default=200)
    p_crit.add_argument("--seed", type=int, default=None)
    p_crit.add_argument("--format", choices=("text", "json"), default="text")
    p_crit.set_defaults(func=cmd_critical)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", "absent") is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 2
    except ShapeError as exc:
        print(f"error: shape-matrix: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
