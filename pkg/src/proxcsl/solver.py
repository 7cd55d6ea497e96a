"""Iterated proximal-Newton solver for the damped surrogate objective.

One solve consists of up to ``max_outer`` outer steps. Each outer step
rebuilds the gradient and the implicit curvature at the current iterate,
minimizes the resulting L1-penalized quadratic model with cyclic coordinate
descent (up to ``max_inner`` passes), and scales the accumulated step by a
backtracking linesearch over the full damped surrogate objective.

During the first outer step of a corrected (distributed) update, a
divergence check compares the drop in the surrogate objective against the
drop in the plain local objective: a sharp surrogate drop with no local
progress means the linear correction term is dominating, and the proximal
damping ``alpha`` is escalated tenfold and the step restarted. The same
engine with zero correction and zero damping is the plain local solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._kernels import cd_pass
from .data import LabeledDataset
from .objective import (
    DWEIGHT_FLOOR,
    CurvatureState,
    GradientSnapshot,
    Regularization,
    curvature_at,
    local_gradient,
)

__all__ = [
    "SolverConfig",
    "SolveResult",
    "SolverDivergedError",
    "coordinate_update",
    "inner_cd_pass",
    "solve_quadratic_subproblem",
    "linesearch",
    "divergence_check",
    "csl_update",
    "solve_local",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tunables for the proximal-Newton engine.

    ``max_outer``/``max_inner`` cap the outer quadratic approximations and
    the coordinate-descent passes per approximation. The linesearch tries
    scales {1, beta, ..., beta^kmax}. Adaptive damping starts at
    ``alpha_init``, multiplies by ``alpha_factor`` on each divergence-check
    failure, and abandons the update above ``alpha_max``.
    """

    max_outer: int = 10
    max_inner: int = 50
    linesearch_beta: float = 0.5
    linesearch_kmax: int = 20
    alpha_init: float = 1e-4
    alpha_factor: float = 10.0
    alpha_max: float = 1e4
    adaptive_damping: bool = True
    divergence_drop: float = 0.20
    local_drop_tol: float = 0.01
    divergence_check_after: int = 5
    inner_tol: float = 1e-8
    outer_tol: float = 1e-6

    def __post_init__(self):
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be at least 1")
        if not 0.0 < self.linesearch_beta < 1.0:
            raise ValueError("linesearch_beta must lie in (0, 1)")
        if self.linesearch_kmax < 0:
            raise ValueError("linesearch_kmax must be nonnegative")
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.divergence_check_after < 1:
            raise ValueError("divergence_check_after must be at least 1")
        if self.alpha_factor <= 1.0:
            raise ValueError("alpha_factor must exceed 1")


@dataclass
class SolveResult:
    """Outcome of one solve: final weights plus a per-outer-step trace.

    ``objective_trace`` holds (outer step, surrogate objective, local
    objective) triples for the starting point and every accepted step.
    ``abandoned`` flags an update that hit the damping cap and returned its
    starting point unchanged.
    """

    w: np.ndarray
    outer_steps_used: int
    final_alpha: float
    objective_trace: list[tuple[int, float, float]]
    converged: bool
    n_alpha_escalations: int = 0
    abandoned: bool = False


class SolverDivergedError(RuntimeError):
    """Raised when a non-finite objective value is encountered."""

    def __init__(self, message: str, trace: list[tuple[int, float, float]]):
        super().__init__(message)
        self.trace = trace


def coordinate_update(g_j: float, h_jj: float, w_j: float, lambda1: float) -> float:
    """Closed-form minimizer z of ``g_j z + 0.5 h_jj z^2 + lambda1 |w_j + z|``.

    The three branches are the soft-threshold solution: move against the
    penalized gradient when it dominates, otherwise land the coordinate
    exactly on zero.
    """
    if h_jj <= 0.0:
        raise ValueError("coordinate curvature must be positive (damping guarantees this)")
    hw = h_jj * w_j
    if g_j + lambda1 <= hw:
        return -(g_j + lambda1) / h_jj
    if g_j - lambda1 >= hw:
        return -(g_j - lambda1) / h_jj
    return -w_j


def inner_cd_pass(
    state: CurvatureState,
    delta: np.ndarray,
    corrected_grad_base: GradientSnapshot | np.ndarray,
    reg: Regularization,
    config: SolverConfig,
) -> float:
    """One cyclic coordinate-descent pass over all features.

    ``corrected_grad_base`` is the gradient of the full damped smooth
    objective at the point ``state`` was built at; the cross-term with the
    Hessian is picked up from ``state.xdelta``. Mutates ``delta`` and
    ``state.xdelta``; returns the pass's maximum |z|.
    """
    base = corrected_grad_base.g if isinstance(corrected_grad_base, GradientSnapshot) else corrected_grad_base
    csc = state.X.csc
    return cd_pass(
        csc.indptr,
        csc.indices,
        csc.data,
        state.d_weights,
        state.hess_diag,
        base,
        state.at,
        delta,
        state.xdelta,
        reg.lambda1,
        state.l2_plus_alpha,
        1.0 / state.n,
    )


def solve_quadratic_subproblem(
    part: LabeledDataset,
    anchor: np.ndarray,
    correction: np.ndarray | None,
    alpha: float,
    reg: Regularization,
    config: SolverConfig,
) -> np.ndarray:
    """Minimize the L1-penalized quadratic model built at ``anchor``.

    Runs coordinate-descent passes until the largest coordinate step falls
    below ``inner_tol * max(1, ||anchor||_inf)`` or ``max_inner`` passes.
    """
    state = curvature_at(part, anchor, alpha, reg)
    base = local_gradient(part, anchor, reg).g
    if correction is not None:
        base = base + correction
    delta = np.zeros(part.n_cols)
    tol = config.inner_tol * max(1.0, float(np.max(np.abs(anchor))) if anchor.size else 1.0)
    for _ in range(config.max_inner):
        if inner_cd_pass(state, delta, base, reg, config) < tol:
            break
    return delta


def _local_value(margins: np.ndarray, w: np.ndarray, y: np.ndarray, lam1: float, lam2: float) -> float:
    value = float(np.mean(np.logaddexp(0.0, margins) - y * margins))
    value += lam1 * float(np.sum(np.abs(w)))
    if lam2:
        value += 0.5 * lam2 * float(w @ w)
    return value


def _surrogate_value(
    local_value: float,
    w: np.ndarray,
    correction: np.ndarray | None,
    alpha: float,
    anchor: np.ndarray,
) -> float:
    value = local_value
    if correction is not None:
        value += float(correction @ w)
    if alpha:
        diff = w - anchor
        value += 0.5 * alpha * float(diff @ diff)
    return value


def _scan_candidates(margins, xdelta, w, delta, y, lam1, lam2, correction, alpha, anchor, config):
    """Evaluate the damped surrogate at w + beta^k * delta for k = 0..kmax.

    Returns (best scale, best value); ties keep the larger step.
    """
    best_f = np.inf
    best_scale = 1.0
    scale = 1.0
    for _ in range(config.linesearch_kmax + 1):
        w_cand = w + scale * delta
        local = _local_value(margins + scale * xdelta, w_cand, y, lam1, lam2)
        f = _surrogate_value(local, w_cand, correction, alpha, anchor)
        if f < best_f:
            best_f = f
            best_scale = scale
        scale *= config.linesearch_beta
    return best_scale, best_f


def linesearch(
    part: LabeledDataset,
    anchor_w: np.ndarray,
    delta: np.ndarray,
    correction: np.ndarray | None,
    alpha: float,
    reg: Regularization,
    config: SolverConfig,
    prox_center: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Pick the step scale minimizing the damped surrogate objective.

    Candidates are ``anchor_w + beta^k * delta``; the proximal term is
    centered at ``prox_center`` (defaults to ``anchor_w``). A zero ``delta``
    short-circuits to ``anchor_w``.
    """
    if not np.any(delta):
        return 1.0, np.array(anchor_w, copy=True)
    center = anchor_w if prox_center is None else prox_center
    margins = part.X.csc @ anchor_w
    xdelta = part.X.csc @ delta
    scale, _ = _scan_candidates(
        margins, xdelta, anchor_w, delta, part.y, reg.lambda1, reg.lambda2,
        correction, alpha, center, config,
    )
    return scale, anchor_w + scale * delta


def divergence_check(
    csl_start: float,
    csl_now: float,
    local_start: float,
    local_now: float,
    config: SolverConfig,
) -> bool:
    """True when progress is genuine; False when the correction dominates.

    Fails (returns False) iff the surrogate objective dropped by at least
    ``divergence_drop`` of its starting value while the local objective
    improved by no more than ``local_drop_tol`` (or got worse).
    """
    csl_drop = (csl_start - csl_now) / max(abs(csl_start), 1e-12)
    local_drop = (local_start - local_now) / max(abs(local_start), 1e-12)
    return not (csl_drop >= config.divergence_drop and local_drop <= config.local_drop_tol)


def _run_engine(
    part: LabeledDataset,
    w0: np.ndarray,
    reg: Regularization,
    config: SolverConfig,
    correction: np.ndarray | None,
    anchor: np.ndarray | None,
    alpha: float,
    adaptive: bool,
) -> SolveResult:
    X = part.X
    csc = X.csc
    sq = X.squared_csc
    y = part.y
    n, d = part.n_rows, part.n_cols
    lam1, lam2 = reg.lambda1, reg.lambda2
    inv_n = 1.0 / n

    w = np.array(w0, dtype=np.float64, copy=True)
    a = np.array(anchor if anchor is not None else w0, dtype=np.float64, copy=True)

    trace: list[tuple[int, float, float]] = []
    escalations = 0
    converged = False
    outer_used = 0

    for s in range(config.max_outer):
        margins = csc @ w
        probs = expit(margins)
        d_weights = probs * (1.0 - probs)
        np.maximum(d_weights, DWEIGHT_FLOOR, out=d_weights)
        grad = csc.T @ (probs - y)
        grad /= n
        if lam2:
            grad += lam2 * w
        base = grad
        if correction is not None:
            base = base + correction
        if alpha:
            base = base + alpha * (w - a)
        hess_diag = sq.T @ d_weights
        hess_diag /= n
        hess_diag += lam2 + alpha

        local_start = _local_value(margins, w, y, lam1, lam2)
        f_start = _surrogate_value(local_start, w, correction, alpha, a)
        if not np.isfinite(f_start):
            raise SolverDivergedError("non-finite objective at outer-step start", trace)
        if s == 0:
            trace.append((0, f_start, local_start))

        delta = np.zeros(d)
        xdelta = np.zeros(n)
        tol_inner = config.inner_tol * max(1.0, float(np.max(np.abs(w))) if d else 1.0)
        l2_alpha = lam2 + alpha

        m = 0
        check_active = adaptive and s == 0
        while m < config.max_inner:
            step = cd_pass(
                csc.indptr, csc.indices, csc.data, d_weights, hess_diag,
                base, w, delta, xdelta, lam1, l2_alpha, inv_n,
            )
            m += 1
            inner_done = step < tol_inner
            if check_active and (
                m % config.divergence_check_after == 0 or inner_done or m == config.max_inner
            ):
                # Judge the step the linesearch would actually accept: the
                # raw accumulated delta can overshoot so far that both
                # objectives blow up together and mask the divergence
                # signature.
                scale_now, f_now = _scan_candidates(
                    margins, xdelta, w, delta, y, lam1, lam2, correction, alpha, a, config
                )
                local_now = _local_value(
                    margins + scale_now * xdelta, w + scale_now * delta, y, lam1, lam2
                )
                if not divergence_check(f_start, f_now, local_start, local_now, config):
                    escalations += 1
                    new_alpha = alpha * config.alpha_factor
                    if new_alpha > config.alpha_max:
                        return SolveResult(
                            w=np.array(w0, dtype=np.float64, copy=True),
                            outer_steps_used=0,
                            final_alpha=alpha,
                            objective_trace=trace,
                            converged=False,
                            n_alpha_escalations=escalations,
                            abandoned=True,
                        )
                    # First outer step starts at the proximal center, so the
                    # damping gradient alpha*(w - a) is zero and only the
                    # cached diagonal needs the new alpha.
                    hess_diag += new_alpha - alpha
                    alpha = new_alpha
                    l2_alpha = lam2 + alpha
                    delta[:] = 0.0
                    xdelta[:] = 0.0
                    m = 0
                    continue
            if inner_done:
                break

        if not np.any(delta):
            converged = True
            break

        scale, f_new = _scan_candidates(
            margins, xdelta, w, delta, y, lam1, lam2, correction, alpha, a, config
        )
        if not np.isfinite(f_new):
            raise SolverDivergedError("non-finite objective in linesearch", trace)
        if f_new > f_start:
            # Every scaled candidate is worse than the current point; keep it
            # so accepted steps stay monotone.
            converged = True
            break

        w = w + scale * delta
        outer_used = s + 1
        local_new = _local_value(margins + scale * xdelta, w, y, lam1, lam2)
        trace.append((s + 1, f_new, local_new))
        if abs(f_new - f_start) <= config.outer_tol * max(1.0, abs(f_start)):
            converged = True
            break

    return SolveResult(
        w=w,
        outer_steps_used=outer_used,
        final_alpha=alpha,
        objective_trace=trace,
        converged=converged,
        n_alpha_escalations=escalations,
        abandoned=False,
    )


def csl_update(
    part: LabeledDataset,
    w_t: np.ndarray,
    global_grad: GradientSnapshot,
    config: SolverConfig,
    reg: Regularization,
) -> SolveResult:
    """One corrected update solved on a single node's data.

    Forms the correction (global minus local smooth gradient at ``w_t``) and
    minimizes the damped surrogate objective anchored at ``w_t``. With
    adaptive damping enabled, the divergence check runs during the first
    outer step only; the escalated ``alpha`` persists for the remaining
    outer steps.
    """
    if config.adaptive_damping and config.alpha_init <= 0.0:
        raise ValueError("adaptive damping requires a positive alpha_init")
    local = local_gradient(part, w_t, reg)
    correction = global_grad.g - local.g
    return _run_engine(
        part,
        w0=w_t,
        reg=reg,
        config=config,
        correction=correction,
        anchor=w_t,
        alpha=config.alpha_init,
        adaptive=config.adaptive_damping,
    )


def solve_local(
    part: LabeledDataset,
    reg: Regularization,
    config: SolverConfig | None = None,
    w0: np.ndarray | None = None,
) -> SolveResult:
    """Minimize the local L1/elastic-net logistic objective on one partition.

    Same engine with zero correction, zero damping and no divergence check.
    Local fits default to 20 outer and 50 inner iterations.
    """
    if config is None:
        config = SolverConfig(max_outer=20)
    start = np.zeros(part.n_cols) if w0 is None else np.asarray(w0, dtype=np.float64)
    return _run_engine(
        part,
        w0=start,
        reg=reg,
        config=config,
        correction=None,
        anchor=None,
        alpha=0.0,
        adaptive=False,
    )
