"""Command-line entry point: ``brace {simulate,fit,summarize,benchmark}``.

Exit codes: 0 success, 1 I/O failure, 2 usage or invalid input, 3 numerical failure.
Every command accepts ``--config`` with a JSON object of option values (or a
manifest written by an earlier run); flags given on the command line win.
"""

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from .exceptions import InvalidInputError, NumericalError
from .gibbs import ChainConfig, Hyperparams, run_chain
from .metrics import evaluate
from .preprocessing import CountMatrix, center, filter_features, to_log_relative_abundance
from .simulation import SimConfig, simulate_dataset
from .summary import LOSSES, summarize

logger = logging.getLogger("brace")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
METRIC_COLUMNS = ("pe", "l2", "fp", "fn", "ari")
PROJECTION_NOTE = (
    "true coefficients: the printed template is padded with zeros to p and its nonzero "
    "entries are shifted by their mean so that they sum to zero"
)

DEFAULTS = {
    "simulate": dict(n=300, p=100, case="dep1", rho=0.5, snr=1.0, train_fraction=0.8, seed=None,
                     out=None),
    "fit": dict(x=None, y=None, iters=5000, burnin=3000, thin=1, seed=None, init_clusters=5,
                pseudocount=0.5, min_abundance=0.0, shuffle_sweeps=False, hyperparams=None,
                out=None),
    "summarize": dict(run=None, level=0.95, loss="binder", restarts=10, seed=0, out=None),
    "benchmark": dict(grid=None, seed=None, jobs=None, out=None),
}
REQUIRED = {
    "simulate": ("seed", "out"),
    "fit": ("x", "seed", "out"),
    "summarize": ("run",),
    "benchmark": ("grid", "seed", "out"),
}


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="brace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of option values; flags override it")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="draw a benchmark train/test pair")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--case", choices=("dep1", "dep2"))
    p.add_argument("--rho", type=float)
    p.add_argument("--snr", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    common(p)
    p.add_argument("--x", help="abundance table (samples x features)")
    p.add_argument("--y", help="one-column response table; defaults to a 'y' column in --x")
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init-clusters", dest="init_clusters", type=int)
    p.add_argument("--pseudocount", type=float)
    p.add_argument("--min-abundance", dest="min_abundance", type=float,
                   help="drop features whose total abundance is below this")
    p.add_argument("--shuffle-sweeps", dest="shuffle_sweeps", action="store_true", default=None)

    p = sub.add_parser("summarize", help="posterior summary of a fitted run")
    common(p)
    p.add_argument("--run", help="directory written by 'fit'")
    p.add_argument("--level", type=float)
    p.add_argument("--loss", choices=LOSSES)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("benchmark", help="simulate, fit, summarize and score a grid")
    common(p)
    p.add_argument("--grid", help="JSON grid: configs, replicates, chain and summary settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="concurrent replicates (overrides BRACE_THREADS)")
    return parser


def resolve_options(args):
    """Defaults, then the config file, then explicit flags."""
    command = args.command
    opts = dict(DEFAULTS[command])
    if args.config:
        loaded = io.read_json(args.config)
        if isinstance(loaded, dict) and "command" in loaded and "config" in loaded:
            if loaded["command"] != command:
                raise UsageError(f"manifest is for '{loaded['command']}', not '{command}'")
            loaded = loaded["config"]
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(opts)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        opts.update(loaded)
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    missing = [k for k in REQUIRED[command] if opts.get(k) is None]
    if missing:
        raise UsageError(f"{command} requires " + ", ".join(f"--{m.replace('_', '-')}"
                                                              for m in missing))
    return opts


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(opts):
    cfg = SimConfig(n=opts["n"], p=opts["p"], case=opts["case"], rho=opts["rho"], snr=opts["snr"],
                    seed=opts["seed"], train_fraction=opts["train_fraction"])
    out = _out_dir(opts["out"])
    manifest = io.Manifest(out / "manifest.json", "simulate", opts, cfg.seed,
                           notes=[PROJECTION_NOTE])
    manifest.start()
    _, _, truth, (O_tr, y_tr, O_te, y_te) = simulate_dataset(cfg, return_raw=True)
    manifest.stop("simulate")
    names = [f"f{j + 1}" for j in range(cfg.p)]
    n_tr = O_tr.shape[0]
    ids_tr = [f"s{i + 1}" for i in range(n_tr)]
    ids_te = [f"s{n_tr + i + 1}" for i in range(O_te.shape[0])]
    io.write_design(O_tr, y_tr, out / "X_train.csv", out / "y_train.csv", ids_tr, names)
    io.write_design(O_te, y_te, out / "X_test.csv", out / "y_test.csv", ids_te, names)
    io.write_json({**truth.to_dict(), "config": cfg.to_dict()}, out / "truth.json")
    manifest.finish()
    return EXIT_OK


def prepare_dataset(opts):
    X, y = io.read_design(opts["x"], opts["y"])
    counts = CountMatrix(X.to_numpy(), tuple(X.columns), tuple(X.index))
    if opts["min_abundance"] > 0:
        counts = filter_features(counts, opts["min_abundance"])
    logx = to_log_relative_abundance(counts, opts["pseudocount"])
    return center(logx, y.to_numpy(), counts.feature_names)


def cmd_fit(opts):
    cfg = ChainConfig(n_iter=opts["iters"], burn_in=opts["burnin"], seed=opts["seed"],
                      init_clusters=opts["init_clusters"], thin=opts["thin"],
                      shuffle_sweeps=bool(opts["shuffle_sweeps"]))
    data = prepare_dataset(opts)
    hp = Hyperparams.default(data.p, **(opts["hyperparams"] or {}))
    out = _out_dir(opts["out"])
    manifest = io.Manifest(out / "manifest.json", "fit", opts, cfg.seed)
    manifest.record["hyperparams"] = asdict(hp)
    manifest.record["chain"] = asdict(cfg)
    manifest.write()
    manifest.start()
    try:
        trace = run_chain(data, cfg, hp)
    except NumericalError as exc:
        dump = out / "state_dump.json"
        io.write_json({"error": str(exc), "state": exc.state}, dump)
        manifest.finish(status="numerical-failure", state_dump=str(dump))
        exc.dump_path = dump
        raise
    manifest.stop("sample")
    io.write_trace(trace, out, data.feature_names)
    io.write_json({"feature_names": list(data.feature_names), "x_mean": data.x_mean.tolist(),
                   "y_mean": data.y_mean}, out / "centering.json")
    manifest.finish(n_samples=len(trace))
    return EXIT_OK


def cmd_summarize(opts):
    run = Path(opts["run"])
    out = _out_dir(opts["out"] or run)
    if not 0 < opts["level"] < 1:
        raise InvalidInputError(f"--level must lie in (0, 1), got {opts['level']}")
    trace, names = io.read_trace(run)
    manifest = io.Manifest(out / "summary_manifest.json", "summarize", opts, opts["seed"])
    manifest.start()
    summary = summarize(trace, level=opts["level"], loss=opts["loss"],
                        restarts=opts["restarts"], rng=opts["seed"])
    manifest.stop("summarize")
    io.write_json(summary.to_dict(names), out / "summary.json")
    io.write_table(io.summary_table(summary, names), out / "summary.csv", index_label="feature")
    manifest.finish()
    return EXIT_OK


def replicate_seeds(seed, config_index, replicate):
    """Independent (simulation, chain) seeds for one replicate, derived only from its coordinates."""
    words = np.random.SeedSequence([seed, config_index, replicate]).generate_state(4, np.uint32)
    words = words.astype(np.uint64)
    return int(words[0] << np.uint64(32) | words[1]), int(words[2] << np.uint64(32) | words[3])


def run_replicate(task):
    """simulate -> fit -> summarize -> score for one grid cell; failures are reported, not raised."""
    ci, rep, sim_opts, chain_opts, summary_opts, seed, out = task
    sim_seed, chain_seed = replicate_seeds(seed, ci, rep)
    row = {"config": ci, "replicate": rep, "sim_seed": sim_seed, "chain_seed": chain_seed}
    t0 = time.perf_counter()
    try:
        cfg = SimConfig(**{**sim_opts, "seed": sim_seed})
        train, test, truth = simulate_dataset(cfg)
        chain = ChainConfig(**{**chain_opts, "seed": chain_seed})
        trace = run_chain(train, chain, Hyperparams.default(train.p))
        summary = summarize(trace, rng=chain_seed, **summary_opts)
        report = evaluate(summary, test, truth)
        row.update(report.to_dict(), status="ok")
        row["max_abs_sum"] = float(np.max(np.abs(trace.beta.sum(axis=1))))
    except (InvalidInputError, NumericalError, ArithmeticError, ValueError) as exc:
        row.update({m: None for m in METRIC_COLUMNS}, status=f"failed: {exc}")
    row["seconds"] = round(time.perf_counter() - t0, 3)
    rep_dir = Path(out) / f"config{ci}" / f"rep{rep}"
    rep_dir.mkdir(parents=True, exist_ok=True)
    io.write_json(row, rep_dir / "eval.json")
    return row


def _mean_sd(values):
    values = [v for v in values if v is not None and not pd.isna(v)]
    if not values:
        return "NA"
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return f"{np.mean(values):.4g} ({sd:.4g})"


def aggregate_rows(rows, configs):
    """Replicate rows followed by one ``mean (sd)`` row per configuration."""
    out = []
    for ci, sim in enumerate(configs):
        sim = {k: v for k, v in SimConfig(**sim).to_dict().items() if k != "seed"}
        mine = [r for r in rows if r["config"] == ci]
        for r in mine:
            out.append({"config": ci, **sim, "row": "replicate", "replicate": r["replicate"],
                        **{m.upper(): r[m] for m in METRIC_COLUMNS}, "status": r["status"]})
        n_ok = sum(r["status"] == "ok" for r in mine)
        out.append({"config": ci, **sim, "row": "mean (sd)", "replicate": f"{n_ok}/{len(mine)} ok",
                    **{m.upper(): _mean_sd([r[m] for r in mine]) for m in METRIC_COLUMNS},
                    "status": "ok" if n_ok == len(mine) else "incomplete"})
    return pd.DataFrame(out)


def worker_count(flag):
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("BRACE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"BRACE_THREADS must be an integer, got {env!r}") from None
    return 1


def cmd_benchmark(opts):
    grid = io.read_json(opts["grid"])
    if not isinstance(grid, dict) or not grid.get("configs"):
        raise InvalidInputError("grid must be an object with a non-empty 'configs' list")
    unknown = set(grid) - {"configs", "replicates", "chain", "summary"}
    if unknown:
        raise InvalidInputError(f"unknown grid keys: {sorted(unknown)}")
    configs = [dict(c) for c in grid["configs"]]
    for c in configs:
        c.pop("seed", None)
        SimConfig(**c)  # validate before launching anything
    replicates = int(grid.get("replicates", 1))
    if replicates < 1:
        raise InvalidInputError("replicates must be positive")
    chain_opts = {"n_iter": 5000, "burn_in": 3000, **grid.get("chain", {})}
    chain_opts.pop("seed", None)
    ChainConfig(**chain_opts)
    summary_opts = dict(grid.get("summary", {}))
    jobs = worker_count(opts["jobs"])
    out = _out_dir(opts["out"])
    manifest = io.Manifest(out / "manifest.json", "benchmark", opts, opts["seed"])
    manifest.record["grid"] = grid
    manifest.record["jobs"] = jobs
    manifest.write()
    tasks = [(ci, rep, c, chain_opts, summary_opts, opts["seed"], str(out))
             for ci, c in enumerate(configs) for rep in range(replicates)]
    manifest.start()
    if jobs == 1:
        rows = [run_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_replicate, tasks))
    manifest.stop("benchmark")
    table = aggregate_rows(rows, configs)
    table.to_csv(out / "benchmark.csv", index=False, float_format=io.FLOAT_FORMAT,
                 lineterminator="\n")
    failed = sum(r["status"] != "ok" for r in rows)
    manifest.finish(failed_replicates=failed)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "summarize": cmd_summarize,
            "benchmark": cmd_benchmark}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"brace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, ZeroDivisionError) as exc:
        print(f"brace: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        where = getattr(exc, "dump_path", None)
        print(f"brace: numerical failure: {exc}" + (f" (state dumped to {where})" if where else ""),
              file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"brace: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
