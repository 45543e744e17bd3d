"""Reading and writing datasets, traces, summaries and run manifests.

Tables are CSV with a header row and the sample (or iteration) identifier in
the first column. Reals are written in their shortest exactly round-tripping
form.
"""

import json
import platform
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import InvalidInputError
from .gibbs import ChainTrace

TRACE_FILES = ("beta.csv", "z.csv", "scalars.csv")
SCALAR_COLUMNS = ("sigma2", "gamma2", "alpha", "K", "log_marginal")


def FLOAT_FORMAT(x):
    return repr(float(x))


def package_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def read_table(path):
    """CSV with a header and an identifier column, as a DataFrame indexed by that column.

    Raises ``OSError`` for missing or unparseable files.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise OSError(f"cannot parse {path}: {exc}") from exc
    frame.index = frame.index.astype(str)
    return frame


def write_table(frame, path, index_label="sample_id"):
    frame.to_csv(path, float_format=FLOAT_FORMAT, index_label=index_label, lineterminator="\n")


def read_design(x_path, y_path=None):
    """Load a predictor table and a response aligned on sample id.

    Parameters
    ----------
    x_path : path
        One row per sample, one column per feature.
    y_path : path, optional
        One-column response table. If omitted, a column named ``y`` in the
        predictor file is used.

    Returns
    -------
    X : DataFrame
    y : Series
    """
    X = read_table(x_path)
    if y_path is None:
        if "y" not in X.columns:
            raise InvalidInputError(f"{x_path} has no 'y' column and no response file was given")
        y = X.pop("y")
    else:
        yf = read_table(y_path)
        if yf.shape[1] != 1:
            raise InvalidInputError(f"{y_path} must have exactly one response column, "
                                    f"found {yf.shape[1]}")
        y = yf.iloc[:, 0]
        missing = X.index.difference(y.index)
        if len(missing):
            raise InvalidInputError(f"{len(missing)} samples have no response, e.g. {missing[0]!r}")
        y = y.loc[X.index]
    if X.shape[1] == 0:
        raise InvalidInputError(f"{x_path} has no feature columns")
    try:
        X = X.astype(float)
        y = y.astype(float)
    except ValueError as exc:
        raise InvalidInputError(f"non-numeric entries: {exc}") from exc
    if not (np.isfinite(X.to_numpy()).all() and np.isfinite(y.to_numpy()).all()):
        raise InvalidInputError("inputs contain missing or non-finite values")
    return X, y


def write_design(X, y, x_path, y_path, sample_ids=None, feature_names=None):
    X = np.asarray(X, dtype=float)
    if sample_ids is None:
        sample_ids = [f"s{i + 1}" for i in range(X.shape[0])]
    if feature_names is None:
        feature_names = [f"f{j + 1}" for j in range(X.shape[1])]
    write_table(pd.DataFrame(X, index=sample_ids, columns=list(feature_names)), x_path)
    write_table(pd.DataFrame({"y": np.asarray(y, dtype=float)}, index=sample_ids), y_path)


def write_trace(trace, out_dir, feature_names=None):
    out_dir = Path(out_dir)
    p = trace.p
    names = list(feature_names) if feature_names is not None else [f"f{j + 1}" for j in range(p)]
    index = pd.Index(np.asarray(trace.iteration), name="iteration")
    write_table(pd.DataFrame(np.asarray(trace.beta), index=index, columns=names),
                out_dir / "beta.csv", index_label="iteration")
    write_table(pd.DataFrame(np.asarray(trace.z), index=index, columns=names),
                out_dir / "z.csv", index_label="iteration")
    scalars = pd.DataFrame({
        "sigma2": trace.sigma2, "gamma2": trace.gamma2, "alpha": trace.alpha,
        "K": trace.K, "log_marginal": trace.log_marginal,
    }, index=index)
    write_table(scalars, out_dir / "scalars.csv", index_label="iteration")


def read_trace(run_dir):
    """Load the trace written by :func:`write_trace`; returns ``(trace, feature_names)``."""
    run_dir = Path(run_dir)
    beta = read_table(run_dir / "beta.csv")
    z = read_table(run_dir / "z.csv")
    scalars = read_table(run_dir / "scalars.csv")
    if len(beta) == 0:
        raise InvalidInputError(f"trace in {run_dir} is empty")
    if beta.shape != z.shape or len(scalars) != len(beta):
        raise InvalidInputError(f"trace files in {run_dir} disagree in shape")
    missing = set(SCALAR_COLUMNS) - set(scalars.columns)
    if missing:
        raise InvalidInputError(f"scalars.csv lacks columns {sorted(missing)}")
    trace = ChainTrace(
        beta=beta.to_numpy(dtype=float),
        z=z.to_numpy(dtype=np.int64),
        sigma2=scalars["sigma2"].to_numpy(dtype=float),
        gamma2=scalars["gamma2"].to_numpy(dtype=float),
        alpha=scalars["alpha"].to_numpy(dtype=float),
        K=scalars["K"].to_numpy(dtype=np.int64),
        log_marginal=scalars["log_marginal"].to_numpy(dtype=float),
        iteration=beta.index.to_numpy(dtype=np.int64),
    )
    return trace, list(beta.columns)


def summary_table(summary, feature_names):
    """Per-feature table sorted by decreasing ``|beta_mean|``."""
    table = pd.DataFrame({
        "beta_mean": summary.beta_mean,
        "ci_lower": summary.ci_lower,
        "ci_upper": summary.ci_upper,
        "inclusion_prob": summary.inclusion_prob,
        "selected": summary.selected.astype(bool),
        "cluster_label": summary.point_partition,
    }, index=pd.Index(list(feature_names), name="feature"))
    order = np.argsort(-np.abs(summary.beta_mean), kind="stable")
    return table.iloc[order]


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise OSError(f"cannot parse {path}: {exc}") from exc


class Manifest:
    """Run record written before any result and rewritten when the run ends."""

    def __init__(self, path, command, config, seed, notes=()):
        self.path = Path(path)
        self.record = {
            "command": command,
            "config": config,
            "seed": seed,
            "version": package_version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "status": "running",
            "timings": {},
            "notes": list(notes),
        }
        self._t0 = None
        self.write()

    def write(self):
        write_json(self.record, self.path)

    def start(self):
        self._t0 = time.perf_counter()

    def stop(self, phase):
        self.record["timings"][phase] = round(time.perf_counter() - self._t0, 6)
        self._t0 = None

    def finish(self, status="complete", **extra):
        self.record["status"] = status
        self.record.update(extra)
        self.write()
