"""One-shot merge estimators: naive averaging and optimal weighted averaging.

The optimal weighted average (OWA) learns a weighting over the local
solutions by a second-stage logistic regression on the projected features
Z = X_sub @ W, where W stacks the local solutions column-wise. The merged
model W @ v stays in the span of the local solutions, so its support is
contained in the union of the local supports.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import LabeledDataset

__all__ = [
    "LocalSolutionMatrix",
    "OwaConfig",
    "naive_average",
    "owa_merge",
    "ridge_logistic_solve",
]

logger = logging.getLogger(__name__)

_DEFAULT_CV_GRID = tuple(np.geomspace(1e-4, 1e1, 7))


class LocalSolutionMatrix:
    """d x p matrix whose columns are the local solutions, stored sparse."""

    def __init__(self, columns: list[np.ndarray] | sp.spmatrix):
        if isinstance(columns, list):
            if not columns:
                raise ValueError("need at least one local solution")
            mat = sp.csc_matrix(np.column_stack(columns))
        else:
            mat = sp.csc_matrix(columns)
        self._mat = mat

    @property
    def d(self) -> int:
        return self._mat.shape[0]

    @property
    def p(self) -> int:
        return self._mat.shape[1]

    @property
    def matrix(self) -> sp.csc_matrix:
        return self._mat

    @property
    def nnz(self) -> int:
        return int(self._mat.nnz)

    def column(self, k: int) -> np.ndarray:
        return np.asarray(self._mat[:, k].todense()).ravel()


@dataclass(frozen=True)
class OwaConfig:
    """Second-stage regression settings for the weighted merge."""

    lambda_cv_grid: tuple[float, ...] = _DEFAULT_CV_GRID
    cv_folds: int = 3
    subsample_partition: int = 0
    seed: int = 0
    squared_penalty: bool = False

    def __post_init__(self):
        if not self.lambda_cv_grid or any(v < 0 for v in self.lambda_cv_grid):
            raise ValueError("lambda_cv_grid must be non-empty and nonnegative")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")


def naive_average(W: LocalSolutionMatrix) -> np.ndarray:
    """Uniform average of the local solutions."""
    return np.asarray(W.matrix.sum(axis=1)).ravel() / W.p


def ridge_logistic_solve(
    Z: np.ndarray,
    y: np.ndarray,
    lambda_cv: float,
    squared_penalty: bool = False,
    max_newton: int = 100,
    grad_tol: float = 1e-8,
) -> np.ndarray:
    """Second-stage solve: mean logistic loss on (Z, y) plus lambda_cv * ||v||_2.

    The unsquared norm is nonsmooth at the origin, so it is smoothed as
    sqrt(||v||^2 + 1e-12), keeping damped Newton applicable; the squared
    variant uses the standard (lambda_cv/2)||v||^2 ridge. Iterates start at
    the uniform weighting (the naive-average direction) and stop when the
    gradient infinity-norm falls below ``grad_tol``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = Z.shape
    eps = 1e-12
    # When the penalty dominates the loss gradient at the origin, the
    # minimizer sits inside the smoothing basin near zero; starting there
    # avoids a slow crawl across the flat region of the smoothed norm.
    # Otherwise start from the uniform weighting (the naive-average
    # direction).
    g0 = Z.T @ (0.5 - y) / n
    if not squared_penalty and lambda_cv >= float(np.linalg.norm(g0)):
        v = np.zeros(p)
    else:
        v = np.full(p, 1.0 / p)

    def value_grad_hess(vec):
        margins = Z @ vec
        loss = float(np.mean(np.logaddexp(0.0, margins) - y * margins))
        probs = expit(margins)
        grad = Z.T @ (probs - y) / n
        dw = probs * (1.0 - probs)
        hess = (Z.T * dw) @ Z / n
        if squared_penalty:
            loss += 0.5 * lambda_cv * float(vec @ vec)
            grad = grad + lambda_cv * vec
            hess = hess + lambda_cv * np.eye(p)
        else:
            s = np.sqrt(float(vec @ vec) + eps)
            loss += lambda_cv * s
            grad = grad + lambda_cv * vec / s
            hess = hess + lambda_cv * (np.eye(p) / s - np.outer(vec, vec) / s**3)
        return loss, grad, hess

    loss, grad, hess = value_grad_hess(v)
    for _ in range(max_newton):
        if float(np.max(np.abs(grad))) < grad_tol:
            return v
        jitter = 0.0
        while True:
            try:
                step = np.linalg.solve(hess + jitter * np.eye(p), -grad)
                break
            except np.linalg.LinAlgError:
                jitter = max(2.0 * jitter, 1e-10)
        slope = float(grad @ step)
        if -slope <= 1e-13 * max(1.0, abs(loss)):
            # Quadratic phase: the predicted decrease is below float
            # resolution of the objective, so Armijo cannot certify it;
            # take the full Newton step.
            cand = v + step
            cand_loss, cand_grad, cand_hess = value_grad_hess(cand)
        else:
            # Backtrack until sufficient decrease (Armijo with c = 1e-4).
            t = 1.0
            for _ in range(60):
                cand = v + t * step
                cand_loss, cand_grad, cand_hess = value_grad_hess(cand)
                if cand_loss <= loss + 1e-4 * t * slope:
                    break
                t *= 0.5
        v, loss, grad, hess = cand, cand_loss, cand_grad, cand_hess
    if float(np.max(np.abs(grad))) >= grad_tol:
        raise RuntimeError(f"second-stage Newton did not converge in {max_newton} steps")
    return v


def _validation_loss(Z: np.ndarray, y: np.ndarray, v: np.ndarray) -> float:
    margins = Z @ v
    return float(np.mean(np.logaddexp(0.0, margins) - y * margins))


def owa_merge(W: LocalSolutionMatrix, sub: LabeledDataset, config: OwaConfig | None = None) -> np.ndarray:
    """Optimal weighted average of the local solutions.

    Projects the subsample through W, cross-validates the second-stage
    penalty over ``lambda_cv_grid`` (selection by mean validation loss),
    refits on the whole subsample at the winner, and returns W @ v.
    An all-zero W is degenerate and yields the zero vector.
    """
    if config is None:
        config = OwaConfig()
    if W.nnz == 0:
        logger.warning("all local solutions are zero; weighted merge is degenerate")
        return np.zeros(W.d)
    Z = np.asarray((sub.X.csc @ W.matrix).todense())
    y = sub.y
    n = Z.shape[0]

    grid = config.lambda_cv_grid
    if len(grid) > 1 and n >= config.cv_folds:
        rng = np.random.default_rng(config.seed)
        perm = rng.permutation(n)
        folds = np.array_split(perm, config.cv_folds)
        mean_losses = []
        for lam in grid:
            losses = []
            for held_out in folds:
                mask = np.ones(n, dtype=bool)
                mask[held_out] = False
                v = ridge_logistic_solve(Z[mask], y[mask], lam, config.squared_penalty)
                losses.append(_validation_loss(Z[held_out], y[held_out], v))
            mean_losses.append(float(np.mean(losses)))
        best = grid[int(np.argmin(mean_losses))]
    else:
        best = grid[0]

    v = ridge_logistic_solve(Z, y, best, config.squared_penalty)
    return np.asarray(W.matrix @ v).ravel()
