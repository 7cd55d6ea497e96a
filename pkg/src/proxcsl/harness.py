"""Experiment driver: regularization grids, replicated sweeps, CSV output.

A sweep walks a logarithmic grid of L1 strengths anchored at the smallest
value that zeroes the full-data model, replicates the distributed
estimation at each point, and records sparsity, test accuracy, objective
error against a cached full-data solve, and phase timings. Everything
except wall-clock timings is deterministic given the seed, and the
metrics/convergence CSVs are byte-identical across reruns; timings live in
their own file.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    parse_libsvm,
    split_train_test,
)
from .merge import OwaConfig
from .objective import Regularization, local_gradient, local_objective, nnz
from .orchestrator import PHASES, RoundReport, run_proxcsl
from .solver import SolverConfig, solve_local

__all__ = [
    "SweepSpec",
    "MetricRow",
    "OracleCache",
    "lambda_grid",
    "evaluate",
    "objective_error",
    "support_metrics",
    "run_sweep",
]

METHODS = ("naive", "owa", "proxcsl")


@dataclass(frozen=True)
class SweepSpec:
    """Everything a sweep needs besides the data itself."""

    data_path: str | None = None
    synthetic: SyntheticSpec | None = None
    partitions: int = 8
    init: str = "owa"
    mode: str = "main_node"
    k_updates: int = 2
    lambda_count: int = 80
    lambda_min_ratio: float = 1e-4
    l2_ratio: float = 0.0
    replicates: int = 5
    seed: int = 0
    test_fraction: float = 0.2
    oracle: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    local_solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_outer=20))
    max_workers: int | None = None

    def __post_init__(self):
        if self.lambda_count < 1:
            raise ValueError("lambda_count must be at least 1")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError("provide exactly one of data_path or synthetic")


@dataclass
class MetricRow:
    """Aggregated sweep cell: one method at one grid point."""

    method: str
    lam: float
    nnz_mean: float
    nnz_std: float | None
    accuracy_mean: float
    accuracy_std: float | None
    objective_error_mean: float | None


def lambda_grid(train: LabeledDataset, spec: SweepSpec) -> np.ndarray:
    """Descending log-spaced grid anchored at the all-zero-solution threshold.

    The anchor is the infinity norm of the smooth gradient at zero, the
    smallest L1 strength whose optimality condition is satisfied by the
    zero model.
    """
    if train.n_rows == 0:
        raise ValueError("training data is empty")
    g0 = local_gradient(train, np.zeros(train.n_cols)).g
    lam_max = float(np.max(np.abs(g0)))
    if lam_max <= 0.0:
        raise ValueError("degenerate data: gradient at zero vanishes, no grid anchor")
    return np.geomspace(lam_max, lam_max * spec.lambda_min_ratio, spec.lambda_count)


def evaluate(model: np.ndarray, test: LabeledDataset) -> tuple[float, int]:
    """Test accuracy (margin > 0 predicts class 1; ties go to 0) and nnz."""
    preds = (test.X.csc @ model > 0.0).astype(np.float64)
    return float(np.mean(preds == test.y)), nnz(model)


def objective_error(
    model: np.ndarray, train: LabeledDataset, reg: Regularization, oracle_objective: float
) -> float:
    """Relative excess of the training objective over the oracle value, in percent.

    Can come out slightly negative within solver tolerance.
    """
    return 100.0 * (local_objective(train, model, reg) - oracle_objective) / oracle_objective


def support_metrics(model: np.ndarray, w_star: np.ndarray) -> tuple[float, float]:
    """L2 distance to the generating model and zero-pattern agreement fraction."""
    l2 = float(np.linalg.norm(model - w_star))
    consensus = float(np.mean((model != 0.0) == (w_star != 0.0)))
    return l2, consensus


class OracleCache:
    """Disk cache of full-data solves keyed by (dataset, penalties, solver)."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._data_digests: dict[int, str] = {}

    def _digest(self, train: LabeledDataset) -> str:
        key = id(train)
        if key not in self._data_digests:
            h = hashlib.sha256()
            csc = train.X.csc
            h.update(np.ascontiguousarray(csc.indptr).tobytes())
            h.update(np.ascontiguousarray(csc.indices).tobytes())
            h.update(np.ascontiguousarray(csc.data).tobytes())
            h.update(train.y.tobytes())
            h.update(str(train.X.n_cols).encode())
            self._data_digests[key] = h.hexdigest()
        return self._data_digests[key]

    def _path(self, train: LabeledDataset, reg: Regularization, config: SolverConfig) -> Path:
        h = hashlib.sha256()
        h.update(self._digest(train).encode())
        h.update(repr((reg.lambda1, reg.lambda2)).encode())
        h.update(repr((config.max_outer, config.max_inner, config.inner_tol, config.outer_tol)).encode())
        return self.directory / f"{h.hexdigest()}.npz"

    def solve(
        self,
        train: LabeledDataset,
        reg: Regularization,
        config: SolverConfig,
        w0: np.ndarray | None = None,
    ) -> tuple[np.ndarray, float]:
        """Return (weights, objective) from cache, solving and storing on miss."""
        path = self._path(train, reg, config)
        if path.exists():
            with np.load(path) as blob:
                return blob["w"], float(blob["objective"])
        result = solve_local(train, reg, config, w0=w0)
        objective = local_objective(train, result.w, reg)
        np.savez(path, w=result.w, objective=objective)
        return result.w, objective


# Inner passes only shape the path; the outer tolerance pins the final
# objective accuracy, so the oracle runs many outer steps with the default
# subproblem effort.
ORACLE_SOLVER = SolverConfig(max_outer=100, max_inner=50, inner_tol=1e-8, outer_tol=1e-10)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return ""
    return repr(x)


def _zero_model_reports(d: int, k_updates: int, obj: float, acc: float | None) -> list[RoundReport]:
    """Grid anchor shortcut: at the top of the path the solution is zero by
    construction, so no distributed estimation is run."""
    w = np.zeros(d)
    return [
        RoundReport(
            iteration=t,
            global_objective=obj,
            test_accuracy=acc,
            nnz=0,
            bytes_broadcast=0,
            bytes_collected=0,
            timings=dict.fromkeys(PHASES, 0.0),
            w=w,
            init_estimates={"naive": w, "owa": w} if t == 0 else None,
        )
        for t in range(k_updates + 1)
    ]


def run_sweep(spec: SweepSpec, out_dir: str | Path) -> dict[str, Path]:
    """Run the full grid sweep and write metrics, convergence, and timing CSVs.

    Returns the paths of the files written. Output rows are sorted by
    (method, lambda descending); std columns are empty when there is a
    single replicate, and missing quantities (no oracle, no known model)
    are empty fields.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    w_star = None
    if spec.synthetic is not None:
        dataset, w_star = generate_synthetic(spec.synthetic)
    else:
        dataset = parse_libsvm(spec.data_path)
    train, test = split_train_test(dataset, spec.test_fraction, spec.seed)

    grid = lambda_grid(train, spec)
    lam_max = float(grid[0])
    cache = OracleCache(out / "oracle_cache") if spec.oracle else None

    cells: dict[str, dict[float, list[tuple[int, float, float | None]]]] = {
        m: {} for m in METHODS + (("oracle",) if spec.oracle else ())
    }
    conv_rows: list[list] = []
    timing_rows: list[list] = []

    w_oracle_prev = None
    for li, lam in enumerate(grid):
        lam = float(lam)
        reg = Regularization(lam, spec.l2_ratio * lam)

        oracle_obj = None
        if cache is not None:
            if lam >= lam_max * (1.0 - 1e-12):
                w_oracle = np.zeros(train.n_cols)
                oracle_obj = local_objective(train, w_oracle, reg)
            else:
                w_oracle, oracle_obj = cache.solve(train, reg, ORACLE_SOLVER, w0=w_oracle_prev)
            w_oracle_prev = w_oracle
            acc_o, nnz_o = evaluate(w_oracle, test)
            cells["oracle"].setdefault(lam, []).append(
                (nnz_o, acc_o, objective_error(w_oracle, train, reg, oracle_obj))
            )

        for r in range(spec.replicates):
            seed_r = spec.seed + 100003 * li + r
            if lam >= lam_max * (1.0 - 1e-12):
                obj0 = local_objective(train, np.zeros(train.n_cols), reg)
                acc0, _ = evaluate(np.zeros(train.n_cols), test)
                reports = _zero_model_reports(train.n_cols, spec.k_updates, obj0, acc0)
            else:
                reports = run_proxcsl(
                    train,
                    spec.partitions,
                    reg,
                    spec.solver,
                    init=spec.init,
                    k_updates=spec.k_updates,
                    mode=spec.mode,
                    seed=seed_r,
                    test=test,
                    owa_config=OwaConfig(seed=seed_r),
                    local_config=spec.local_solver,
                    max_workers=spec.max_workers,
                )

            finals = {
                "naive": reports[0].init_estimates["naive"],
                "owa": reports[0].init_estimates["owa"],
                "proxcsl": reports[-1].w,
            }
            for method, w in finals.items():
                acc, k = evaluate(w, test)
                err = objective_error(w, train, reg, oracle_obj) if oracle_obj is not None else None
                cells[method].setdefault(lam, []).append((k, acc, err))

            for rep in reports:
                err = (
                    objective_error(rep.w, train, reg, oracle_obj) if oracle_obj is not None else None
                )
                l2 = cons = None
                if w_star is not None:
                    l2, cons = support_metrics(rep.w, w_star)
                conv_rows.append(
                    [_fmt(lam), r, rep.iteration, _fmt(err), rep.nnz, _fmt(l2), _fmt(cons)]
                )
                timing_rows.append(
                    [_fmt(lam), r, rep.iteration] + [_fmt(rep.timings[ph]) for ph in PHASES]
                )

    metrics_path = out / "metrics.csv"
    with metrics_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "method",
                "lambda",
                "nnz_mean",
                "nnz_std",
                "accuracy_mean",
                "accuracy_std",
                "objective_error_mean",
            ]
        )
        for method in sorted(cells):
            for lam in sorted(cells[method], reverse=True):
                samples = cells[method][lam]
                nnzs = np.array([s[0] for s in samples], dtype=float)
                accs = np.array([s[1] for s in samples], dtype=float)
                errs = [s[2] for s in samples if s[2] is not None]
                many = len(samples) >= 2
                writer.writerow(
                    [
                        method,
                        _fmt(lam),
                        _fmt(nnzs.mean()),
                        _fmt(nnzs.std(ddof=1)) if many else "",
                        _fmt(accs.mean()),
                        _fmt(accs.std(ddof=1)) if many else "",
                        _fmt(float(np.mean(errs))) if errs else "",
                    ]
                )

    conv_path = out / "convergence.csv"
    with conv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["lambda", "replicate", "iteration", "objective_error", "nnz", "l2_distance", "support_consensus"]
        )
        writer.writerows(conv_rows)

    timing_path = out / "timing.csv"
    with timing_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "replicate", "iteration"] + list(PHASES))
        writer.writerows(timing_rows)

    return {"metrics": metrics_path, "convergence": conv_path, "timing": timing_path}
