"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.  ``--config FILE`` reads ``key = value`` lines whose keys are flag
names without the leading dashes; flags given on the command line win.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cohrcf import cluster, data, experiment, sim
from cohrcf.errors import DataError, InvariantViolation, NoHiddenRatings

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("cohrcf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def int_list(text: str) -> tuple:
    """``"10:55:5"`` (inclusive range) or ``"10,20,30"``."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            lo, hi, step = parts
            if step < 1:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list or lo:hi:step range: {text!r}") from None


def float_list(text: str) -> tuple:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def measure_list(text: str) -> tuple:
    kinds = tuple(p.strip().lower() for p in text.split(",") if p.strip())
    bad = [k for k in kinds if k not in sim.KINDS]
    if bad or not kinds:
        raise argparse.ArgumentTypeError(f"unknown measure(s) {bad}; choose from {','.join(sim.KINDS)}")
    return kinds


def grid_shape(text: str) -> tuple:
    try:
        r, c = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be positive")
    return r, c


def _common(p, data_required=True):
    p.add_argument("--config", metavar="FILE", help="key = value file mirroring the flags")
    p.add_argument("--data", required=data_required, help="MovieLens u.data style rating file")
    p.add_argument("--min-ratings", type=int, default=20, help="drop users with fewer ratings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--som-grid", type=grid_shape, default=(10, 10), metavar="RxC")
    p.add_argument("--hidden-per-user", type=int, default=10)
    p.add_argument("--relevance-threshold", type=int, default=4)
    p.add_argument("--welch-segment", type=int, default=32,
                   help="upper bound on the Welch segment length")
    p.add_argument("--welch-overlap", type=float, default=0.5)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cohrcf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="clean a rating file and write it back out")
    _common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-k", help="MAE/F1 as the cluster count K varies")
    _common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--k", type=int_list, default=tuple(range(10, 56, 5)))
    p.add_argument("--measures", type=measure_list, default=sim.KINDS)
    p.add_argument("--sparsity", type=float_list, default=(0.18, 0.1, 0.05))
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-n", help="MAE/F1 as the neighbour count N varies")
    _common(p)
    p.add_argument("--k", type=int, default=55)
    p.add_argument("--n", type=int_list, default=tuple(range(10, 101, 10)))
    p.add_argument("--measures", type=measure_list, default=sim.KINDS)
    p.add_argument("--sparsity", type=float_list, default=(0.18, 0.1, 0.05))
    p.add_argument("--out", required=True)

    p = sub.add_parser("silhouette", help="negative-silhouette counts, k-means vs SOM+k-means")
    _common(p)
    p.add_argument("--k", type=int_list, default=(10, 20, 30, 40))
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="one grid point")
    _common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--measure", type=measure_list, required=True)
    p.add_argument("--sparsity", type=float, default=1.0)
    p.add_argument("--out", required=True)
    return parser


def _config_tokens(path: str) -> list:
    tokens = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "config":
            raise UsageError(f"{path}:{lineno}: config files cannot nest")
        tokens += [f"--{key}", value]
    return tokens


def _expand_config(argv: list) -> list:
    """Splice config-file values in right after the command name."""
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    path = None
    rest = []
    it = iter(argv)
    for a in it:
        if a == "--config":
            path = next(it, None)
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        else:
            rest.append(a)
    if path is None:
        raise UsageError("--config needs a file argument")
    if not rest:
        raise UsageError("missing command")
    return rest[:1] + _config_tokens(path) + rest[1:]


def _experiment_config(args, **overrides) -> experiment.ExperimentConfig:
    rows, cols = args.som_grid
    return experiment.ExperimentConfig(
        data_path=args.data,
        seed=args.seed,
        folds=args.folds,
        som=cluster.SomConfig(grid_rows=rows, grid_cols=cols),
        hidden_per_user=args.hidden_per_user,
        relevance_threshold=args.relevance_threshold,
        min_ratings=args.min_ratings,
        welch_segment=args.welch_segment,
        welch_overlap=args.welch_overlap,
        **overrides,
    )


def _load(args) -> data.RatingMatrix:
    return data.clean_min_ratings(data.load_movielens(args.data), args.min_ratings)


def _meta_path(out: str) -> str:
    return out + ".meta.json"


def run(args) -> int:
    if args.command == "ingest":
        m = _load(args)
        data.write_ratings(m, args.out)
        log.info("wrote %d users x %d items, %d ratings (%.3f%% filled)",
                 m.n_users, m.n_items, m.n_ratings, data.sparsity_level(m))
        return EXIT_OK

    if args.command == "silhouette":
        m = _load(args)
        rows, cols = args.som_grid
        table = experiment.silhouette_comparison(
            m, args.k, args.seed, cluster.SomConfig(grid_rows=rows, grid_cols=cols)
        )
        experiment.emit_silhouette(table, args.out)
        experiment.write_metadata(
            {"command": "silhouette", "seed": args.seed, "k": list(args.k),
             "timings": [[r.k, r.arm, r.seconds] for r in table]},
            _meta_path(args.out),
        )
        return EXIT_OK

    if args.command == "sweep-k":
        grid = dict(k_values=args.k, n_values=(args.n,), measures=args.measures,
                    sparsity_levels=args.sparsity)
    elif args.command == "sweep-n":
        grid = dict(k_values=(args.k,), n_values=args.n, measures=args.measures,
                    sparsity_levels=args.sparsity)
    else:  # evaluate
        grid = dict(k_values=(args.k,), n_values=(args.n,), measures=args.measure,
                    sparsity_levels=(args.sparsity,))
    config = _experiment_config(args, **grid)
    report = experiment.run_experiment(config, _load(args))
    experiment.emit_report(report, args.out)
    experiment.write_metadata(report.metadata, _meta_path(args.out))
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_config(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return run(args)
    except (DataError, NoHiddenRatings, OSError) as exc:
        print(f"cohrcf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as exc:
        print(f"cohrcf: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"cohrcf: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        log.exception("unexpected failure")
        print(f"cohrcf: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
