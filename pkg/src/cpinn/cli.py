"""Command-line entry point.

Subcommands::

    train          train from a JSON run config, write a run directory
    sweep          predicted vs oracle eigenvalue over a tag grid
    oracle         closed-form / root-found eigenvalues
    eigenfunction  predicted and oracle eigenfunction along a line
    report         summary table over run directories
    dump-batches   the composed training batches as CSV

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Tabular output is CSV with a ``#`` metadata line first; logs go to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

import cpinn
from cpinn import oracles
from cpinn.evaluation import (
    DEFAULT_GRIDS,
    GridSpecError,
    eigenfunction_curve,
    parse_grid,
    sweep,
    sweep_summary,
)
from cpinn.network import (
    ANSATZ_KINDS,
    Ansatz,
    CheckpointError,
    NetworkLayout,
    load_checkpoint,
    save_checkpoint,
)
from cpinn.problems import PROBLEMS, ProblemDefinition, TagDomainError, get_problem
from cpinn.qmc import BatchPlan, batch_rows, compose_batches
from cpinn.training import EpochRecord, TrainingConfig, TrainingDivergedError, train
from cpinn.variational import DegenerateAnsatzError, estimate_eigenvalue

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_run_config",
    "bundled_configs",
    "cmd_train",
    "cmd_sweep",
    "cmd_oracle",
    "cmd_eigenfunction",
    "cmd_report",
    "cmd_dump_batches",
    "main",
]

log = logging.getLogger("cpinn")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_TRAINING_KEYS = {
    f.name for f in dataclasses.fields(TrainingConfig) if f.name not in ("plan", "seed")
}
_PLAN_KEYS = {f.name for f in dataclasses.fields(BatchPlan)}
_EVAL_DEFAULTS = {"grid": None, "n_points": 2**16, "sweep": True, "eigenfunction_samples": 201}


class ConfigError(ValueError):
    """Unreadable or invalid run configuration."""


class SweepRowError(RuntimeError):
    """At least one sweep row could not be evaluated."""


# ----------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    problem: str
    layout: NetworkLayout
    plan: BatchPlan
    training: TrainingConfig
    ansatz: str
    form: str = "matching"
    evaluation: dict[str, Any] = field(default_factory=lambda: dict(_EVAL_DEFAULTS))
    out: str = "runs"
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunConfig:
        """Validate a parsed JSON document.

        Raises:
            ConfigError: unknown keys, unresolvable names or invariant violations.
        """
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {"problem", "network", "ansatz", "plan", "training", "evaluation", "out", "seed", "form", "description"}
        _no_unknown(doc, allowed, "config")
        try:
            name = doc["problem"]
            if name not in PROBLEMS:
                raise ConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
            form = doc.get("form", "matching").replace("_", "-")
            if form not in oracles.SPHERE_FORMS:
                raise ConfigError(f"form must be one of {oracles.SPHERE_FORMS}")
            problem = get_problem(name, form)
            seed = doc.get("seed", 0)
            if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
                raise ConfigError("seed must be a non-negative integer")

            network = doc.get("network", {})
            _no_unknown(network, {"hidden"}, "network")
            hidden = tuple(network.get("hidden", (4, 4)))
            if not hidden or not all(isinstance(h, int) and h > 0 for h in hidden):
                raise ConfigError("network.hidden must be a non-empty list of positive integers")
            layout = NetworkLayout(problem.spatial_dim, problem.tag_dim, hidden)

            ansatz = doc.get("ansatz", problem.ansatz_kind)
            if ansatz not in ANSATZ_KINDS:
                raise ConfigError(f"ansatz must be one of {sorted(ANSATZ_KINDS)}")
            if ansatz == "windowed_dirichlet" and problem.window is None:
                raise ConfigError(f"{name} has no Dirichlet window; use the natural ansatz")

            plan_doc = doc.get("plan", {})
            _no_unknown(plan_doc, _PLAN_KEYS, "plan")
            plan = BatchPlan(**plan_doc)
            if problem.tag_dim == 0 and plan.tag_vectors != 1:
                raise ConfigError(f"{name} has no tags; plan.tag_vectors must be 1")

            training_doc = doc.get("training", {})
            _no_unknown(training_doc, _TRAINING_KEYS, "training")
            training = TrainingConfig(plan=plan, seed=seed, **training_doc)

            evaluation = dict(_EVAL_DEFAULTS)
            ev = doc.get("evaluation", {})
            _no_unknown(ev, set(_EVAL_DEFAULTS), "evaluation")
            evaluation.update(ev)
            if evaluation["grid"] is None:
                evaluation["grid"] = DEFAULT_GRIDS[name]
            parse_grid(evaluation["grid"], problem)
            if int(evaluation["n_points"]) < 1 or int(evaluation["eigenfunction_samples"]) < 2:
                raise ConfigError("evaluation sizes must be positive")
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        return cls(
            problem=name,
            layout=layout,
            plan=plan,
            training=training,
            ansatz=ansatz,
            form=form,
            evaluation=evaluation,
            out=str(doc.get("out", "runs")),
            seed=seed,
        )

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(self, seed=seed, training=dataclasses.replace(self.training, seed=seed))

    def to_dict(self) -> dict[str, Any]:
        training = {k: getattr(self.training, k) for k in sorted(_TRAINING_KEYS)}
        return {
            "problem": self.problem,
            "form": self.form,
            "network": {"hidden": list(self.layout.hidden)},
            "ansatz": self.ansatz,
            "plan": dataclasses.asdict(self.plan),
            "training": training,
            "evaluation": dict(self.evaluation),
            "out": self.out,
            "seed": self.seed,
        }

    @property
    def config_hash(self) -> str:
        """Hash of everything that affects results (the output location excluded)."""
        doc = self.to_dict()
        doc.pop("out")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def problem_definition(self) -> ProblemDefinition:
        return get_problem(self.problem, self.form)

    def make_ansatz(self) -> Ansatz:
        problem = self.problem_definition()
        return Ansatz(
            kind=self.ansatz,
            lower=problem.lower,
            upper=problem.upper,
            tag_lower=problem.tag_lower,
            tag_upper=problem.tag_upper,
            window=problem.window if self.ansatz == "windowed_dirichlet" else None,
        )


def _no_unknown(doc: Any, allowed: set[str], where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def bundled_configs() -> dict[str, Path]:
    """Reference configs shipped with the package, by stem."""
    root = resources.files("cpinn") / "configs"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def load_run_config(source: str | Path) -> RunConfig:
    """Load a config from a path, or a bundled config by name (``textbook``)."""
    path = Path(source)
    if not path.exists():
        bundled = bundled_configs()
        key = path.stem if path.suffix in (".json", ".cfg") else str(source)
        if key not in bundled:
            raise ConfigError(f"config {source} not found (bundled: {sorted(bundled)})")
        path = bundled[key]
    try:
        doc = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc)


# ----------------------------------------------------------------------------
# CSV helpers


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _meta_line(**items: Any) -> str:
    return "# " + " ".join(f"{k}={_fmt(v)}" for k, v in items.items())


class _CsvOut:
    """RFC-4180 writer with ``#`` metadata lines."""

    def __init__(self, stream: io.TextIOBase) -> None:
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\r\n")

    def comment(self, line: str) -> None:
        self.stream.write(line + "\r\n")

    def row(self, values: Iterable[Any]) -> None:
        self.writer.writerow([_fmt(v) for v in values])


@contextlib.contextmanager
def _open_out(path: Optional[str | Path]):
    if path is None or str(path) == "-":
        yield _CsvOut(sys.stdout)
        sys.stdout.flush()
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            yield _CsvOut(fh)


def read_csv_comments(path: str | Path) -> dict[str, str]:
    """``key=value`` pairs from all ``#`` lines of a CSV written by this tool."""
    out: dict[str, str] = {}
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    out[key] = value
    return out


# ----------------------------------------------------------------------------
# commands


def _run_dir(root: Path, config: RunConfig) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    layout = config.layout.describe().replace("[", "").replace("]", "").replace(",", "-")
    base = f"{config.problem}-{layout}-seed{config.seed}-{stamp}"
    path = root / base
    n = 1
    while path.exists():
        n += 1
        path = root / f"{base}-{n}"
    path.mkdir(parents=True)
    return path


def cmd_train(config: RunConfig, out: Optional[str | Path] = None) -> Path:
    """Train per ``config``; returns the run directory.

    The directory receives ``config.json``, ``training_log.csv`` (streamed),
    ``checkpoint.json``, ``history.json``, ``metadata.json`` and, after
    training, ``sweep.csv`` for tagged problems or ``eigenfunction.csv`` for
    untagged ones.
    """
    problem = config.problem_definition()
    ansatz = config.make_ansatz()
    run_dir = _run_dir(Path(out if out is not None else config.out), config)
    header = _meta_line(problem=config.problem, seed=config.seed, config_hash=config.config_hash)
    started = datetime.now(timezone.utc).isoformat()
    (run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    log.info("run directory %s", run_dir)

    with open(run_dir / "training_log.csv", "w", newline="") as fh:
        out_csv = _CsvOut(fh)
        out_csv.comment(header)
        out_csv.row(["epoch", "train_loss", "val_loss", "lr"])

        def on_epoch(rec: EpochRecord) -> None:
            out_csv.row([rec.epoch, rec.train_loss, rec.val_loss, rec.lr])
            fh.flush()

        params, history = train(problem, config.layout, config.training, ansatz=ansatz, on_epoch=on_epoch)

    save_checkpoint(
        run_dir / "checkpoint.json",
        params,
        ansatz,
        seed=config.seed,
        problem=config.problem,
        extra={"config_hash": config.config_hash, "form": config.form, "best_epoch": history.best_epoch},
    )
    hist = history.to_dict()
    hist.update(seed=config.seed, config_hash=config.config_hash)
    (run_dir / "history.json").write_text(json.dumps(hist, indent=1) + "\n")

    results: dict[str, Any] = {}
    n_points = int(config.evaluation["n_points"])
    if problem.tag_dim == 0:
        est = estimate_eigenvalue(problem, params, (), n_points=n_points, ansatz=ansatz)
        truth = float(problem.eigenvalue_oracle())
        curve = eigenfunction_curve(
            problem, params, (), int(config.evaluation["eigenfunction_samples"]), n_points, ansatz
        )
        results = {
            "eigenvalue": est.eigenvalue,
            "eigenvalue_true": truth,
            "abs_error": abs(est.eigenvalue - truth),
            "eigenfunction_l2_error": curve.l2_error,
        }
        _write_eigenfunction(run_dir / "eigenfunction.csv", problem, curve, config.seed, config.config_hash)
        log.info("eigenvalue %.10g (true %.10g, error %.3g)", est.eigenvalue, truth, results["abs_error"])
    elif config.evaluation["sweep"]:
        grid = parse_grid(config.evaluation["grid"], problem)
        rows = sweep(problem, params, grid, n_points, ansatz)
        summary = _write_sweep(
            run_dir / "sweep.csv", problem, rows, config.seed, config.config_hash, n_points, config.form
        )
        results = {"sweep_" + k: v for k, v in summary.items()}
        log.info("sweep MAE %.4g, max |residual| %.4g", summary["mae"], summary["max_abs_residual"])

    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash,
        "seed": config.seed,
        "code_version": cpinn.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_time": history.wall_time,
        "best_epoch": history.best_epoch,
        "epochs_run": len(history.records),
        "stop_reason": history.stop_reason,
        "layout": config.layout.describe(),
        "eigenvalue_evaluation": (
            f"pure Rayleigh quotient on {n_points} fresh Sobol points (the first after the origin), "
            "not on training batches"
        ),
        "results": results,
    }
    (run_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return run_dir


def _write_sweep(path, problem, rows, seed, config_hash, n_points, form) -> dict[str, float]:
    summary = sweep_summary(rows)
    with _open_out(path) as out:
        out.comment(
            _meta_line(problem=problem.name, seed=seed, config_hash=config_hash, n_points=n_points, form=form)
        )
        out.row([*problem.tag_names, "h_predicted", "h_true", "residual", "error"])
        for r in rows:
            out.row([*r.tags, r.h_predicted, r.h_true, r.residual, r.error])
        out.comment(_meta_line(mae=summary["mae"]))
        out.comment(_meta_line(max_abs_residual=summary["max_abs_residual"]))
        out.comment(_meta_line(rows=len(rows), failed=sum(1 for r in rows if r.error)))
    return summary


def _checkpoint_problem(path: str | Path, form: Optional[str]):
    ckpt = load_checkpoint(path)
    if ckpt.problem not in PROBLEMS:
        raise CheckpointError(f"checkpoint names unknown problem {ckpt.problem!r}")
    form = form or ckpt.extra.get("form", "matching")
    return ckpt, get_problem(ckpt.problem, form), form


def cmd_sweep(
    checkpoint: str | Path,
    grid: Optional[str] = None,
    out: Optional[str | Path] = None,
    n_points: int = 2**16,
    form: Optional[str] = None,
) -> dict[str, float]:
    """Write the sweep CSV; raises :class:`SweepRowError` after writing if any row failed."""
    ckpt, problem, form = _checkpoint_problem(checkpoint, form)
    spec = DEFAULT_GRIDS[problem.name] if grid is None else grid
    tags = parse_grid(spec, problem)
    rows = sweep(problem, ckpt.params, tags, n_points, ckpt.ansatz)
    summary = _write_sweep(out, problem, rows, ckpt.seed, ckpt.extra.get("config_hash"), n_points, form)
    failed = [r for r in rows if r.error]
    if failed:
        raise SweepRowError(f"{len(failed)} of {len(rows)} grid points failed: {failed[0].error}")
    return summary


def _oracle_tags(problem: ProblemDefinition, tags: np.ndarray) -> None:
    # the length scale r0 may leave the training box (h = 1 below the knee); material tags may not
    t = np.atleast_1d(tags)
    if t.shape != (problem.tag_dim,):
        raise TagDomainError(f"{problem.name} expects {problem.tag_dim} tags {list(problem.tag_names)}")
    if problem.tag_dim == 0:
        return
    if not t[0] > 0:
        raise TagDomainError("r0 must be positive")
    probe = t.copy()
    probe[0] = problem.tag_lower[0]
    try:
        problem.check_tags(probe)
    except TagDomainError:
        box = list(zip(problem.tag_names[1:], problem.tag_lower[1:], problem.tag_upper[1:]))
        raise TagDomainError(f"tags {t.tolist()} outside {problem.name} material bounds {box}") from None


def cmd_oracle(
    problem_name: str,
    tags: Sequence[float] = (),
    grid: Optional[str] = None,
    out: Optional[str | Path] = None,
    form: str = "matching",
) -> list[float]:
    """Oracle eigenvalues for one tag vector or a grid."""
    problem = get_problem(problem_name, form)
    if grid is not None:
        if tags:
            raise GridSpecError("give either tags or --grid, not both")
        vectors = parse_grid(grid, problem)
    else:
        vectors = np.asarray([tags], dtype=np.float64).reshape(1, -1)
    for t in vectors:
        _oracle_tags(problem, t)
    values = [float(problem.eigenvalue_oracle(*t)) for t in vectors]
    with _open_out(out) as w:
        w.comment(_meta_line(problem=problem.name, form=form, seed="none", config_hash="none"))
        w.row([*problem.tag_names, "h"])
        for t, h in zip(vectors, values):
            w.row([*map(float, t), h])
    return values


def _write_eigenfunction(path, problem, curve, seed, config_hash) -> None:
    names = ["x", "y", "z"][: problem.spatial_dim]
    with _open_out(path) as w:
        w.comment(_meta_line(problem=problem.name, seed=seed, config_hash=config_hash, samples=len(curve.predicted)))
        w.row([*names, "phi_predicted", "phi_true"])
        for x, p, t in zip(curve.coordinates, curve.predicted, curve.true):
            w.row([*map(float, x), float(p), float(t)])
        w.comment(_meta_line(l2_error=curve.l2_error))


def cmd_eigenfunction(
    checkpoint: str | Path,
    tags: Sequence[float] = (),
    samples: int = 201,
    out: Optional[str | Path] = None,
    form: Optional[str] = None,
    n_points: int = 2**16,
) -> float:
    """Write predicted and oracle eigenfunction; returns the L2 error."""
    ckpt, problem, _ = _checkpoint_problem(checkpoint, form)
    curve = eigenfunction_curve(problem, ckpt.params, tags, samples, n_points, ckpt.ansatz)
    _write_eigenfunction(out, problem, curve, ckpt.seed, ckpt.extra.get("config_hash"))
    return curve.l2_error


REPORT_COLUMNS = [
    "run", "problem", "layout", "seed", "config_hash", "best_epoch",
    "epochs_run", "wall_time_s", "mae", "max_abs_residual", "status",
]


def _report_row(run_dir: Path) -> dict[str, Any]:
    row: dict[str, Any] = {k: "" for k in REPORT_COLUMNS}
    row["run"] = run_dir.name
    missing = [f for f in ("checkpoint.json", "history.json", "metadata.json") if not (run_dir / f).is_file()]
    meta: dict[str, Any] = {}
    if "metadata.json" not in missing:
        try:
            meta = json.loads((run_dir / "metadata.json").read_text())
        except (OSError, json.JSONDecodeError):
            missing.append("metadata.json (unreadable)")
    if meta:
        row.update(
            problem=meta.get("config", {}).get("problem", ""),
            layout=meta.get("layout", ""),
            seed=meta.get("seed", ""),
            config_hash=meta.get("config_hash", ""),
            best_epoch=meta.get("best_epoch", ""),
            epochs_run=meta.get("epochs_run", ""),
            wall_time_s=round(float(meta.get("wall_time", math.nan)), 1),
        )
        results = meta.get("results", {})
        if "abs_error" in results:
            row["mae"] = results["abs_error"]
            row["max_abs_residual"] = results["abs_error"]
        elif row["problem"] in PROBLEMS and get_problem(row["problem"]).tag_dim > 0:
            sweep_csv = run_dir / "sweep.csv"
            if sweep_csv.is_file():
                footer = read_csv_comments(sweep_csv)
                row["mae"] = float(footer.get("mae") or math.nan)
                row["max_abs_residual"] = float(footer.get("max_abs_residual") or math.nan)
            else:
                missing.append("sweep.csv")
    row["status"] = "complete" if not missing else "incomplete: missing " + ", ".join(missing)
    return row


def cmd_report(run_dirs: Sequence[str | Path], out: Optional[str | Path] = None) -> list[dict[str, Any]]:
    """CSV summary (to ``out`` or stdout) plus a human-readable table on stderr."""
    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    rows = [_report_row(Path(d)) for d in run_dirs]
    with _open_out(out) as w:
        w.comment(_meta_line(runs=len(rows), seed="per-row", config_hash="per-row"))
        w.row(REPORT_COLUMNS)
        for r in rows:
            w.row([r[k] for k in REPORT_COLUMNS])
    shown = ["run", "layout", "best_epoch", "wall_time_s", "mae", "status"]
    cells = [[_short(r[k]) for k in shown] for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(shown)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(shown, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(cell, widths)) for cell in cells]
    print("\n".join(lines), file=sys.stderr)
    return rows


def _short(value: Any) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.4g}"
    return str(value)


def cmd_dump_batches(config: RunConfig, out: Optional[str | Path] = None, limit: Optional[int] = None) -> int:
    """Write composed batches as ``batch_id, point coords..., tag coords...``; returns rows written."""
    problem = config.problem_definition()
    batches = compose_batches(config.plan, problem)
    if limit is not None:
        batches = batches[:limit]
    names = ["x", "y", "z"][: problem.spatial_dim]
    n = 0
    with _open_out(out) as w:
        w.comment(_meta_line(problem=problem.name, seed=config.seed, config_hash=config.config_hash))
        w.row(["batch_id", *names, *problem.tag_names])
        for row in batch_rows(batches):
            w.row([int(row[0]), *map(float, row[1:])])
            n += 1
    return n


# ----------------------------------------------------------------------------
# argument parsing


def _threads(n: Optional[int]):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be positive")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="BLAS thread limit (1 = bit-exact)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="cpinn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train from a run config")
    p.add_argument("--config", required=True, help="JSON config path or bundled name")
    p.add_argument("--out", help="parent directory for the run directory")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("sweep", parents=[common], help="predicted vs oracle over a tag grid")
    p.add_argument("checkpoint")
    p.add_argument("--grid", help="e.g. 'r0=1:10:30,dk=0:1:30'; ';' joins grids")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--points", type=int, default=2**16, help="quadrature points per tag vector")
    p.add_argument("--form", choices=oracles.SPHERE_FORMS)

    p = sub.add_parser("oracle", parents=[common], help="oracle eigenvalues")
    p.add_argument("problem", choices=sorted(PROBLEMS))
    p.add_argument("tags", nargs="*", type=float)
    p.add_argument("--grid")
    p.add_argument("--out")
    p.add_argument("--form", choices=oracles.SPHERE_FORMS, default="matching")

    p = sub.add_parser("eigenfunction", parents=[common], help="predicted vs oracle eigenfunction")
    p.add_argument("checkpoint")
    p.add_argument("tags", nargs="*", type=float)
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--out")
    p.add_argument("--form", choices=oracles.SPHERE_FORMS)

    p = sub.add_parser("report", parents=[common], help="summarize run directories")
    p.add_argument("runs", nargs="*")
    p.add_argument("--out")

    p = sub.add_parser("dump-batches", parents=[common], help="write composed batches as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--limit", type=int, help="only the first LIMIT batches")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        with _threads(args.threads):
            if args.command == "train":
                config = load_run_config(args.config)
                if args.seed is not None:
                    config = config.with_seed(args.seed)
                started = time.perf_counter()
                run_dir = cmd_train(config, args.out)
                log.info("finished in %.1f s", time.perf_counter() - started)
                print(run_dir)
            elif args.command == "sweep":
                cmd_sweep(args.checkpoint, args.grid, args.out, args.points, args.form)
            elif args.command == "oracle":
                cmd_oracle(args.problem, args.tags, args.grid, args.out, args.form)
            elif args.command == "eigenfunction":
                cmd_eigenfunction(args.checkpoint, args.tags, args.samples, args.out, args.form)
            elif args.command == "report":
                cmd_report(args.runs, args.out)
            elif args.command == "dump-batches":
                cmd_dump_batches(load_run_config(args.config), args.out, args.limit)
    except (ConfigError, GridSpecError, CheckpointError, TagDomainError, SweepRowError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (TrainingDivergedError, DegenerateAnsatzError, oracles.ConvergenceError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
