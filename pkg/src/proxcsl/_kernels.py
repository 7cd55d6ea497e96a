"""Numba kernel for the cyclic coordinate-descent pass over CSC columns."""

import numba
import numpy as np  # noqa: F401  (numba typing)

# Guard for columns whose effective curvature is exactly zero (empty column,
# no damping, no L2): keeps the closed-form update finite.
_CURV_FLOOR = 1e-12


@numba.njit(cache=True, nogil=True)
def cd_pass(
    indptr,
    indices,
    data,
    d_weights,
    hess_diag,
    base,
    at,
    delta,
    xdelta,
    lam1,
    l2_alpha,
    inv_n,
):
    """One cyclic pass of proximal coordinate descent on the quadratic model.

    For each feature j the partial derivative of the quadratic model at the
    current accumulated ``delta`` is

        G_j = base[j] + (1/n) * sum_i d_i * x_ij * xdelta_i + l2_alpha * delta_j

    and the closed-form minimizer of ``G_j z + 0.5 H_jj z^2 + lam1 |w_j + z|``
    is applied, where ``w_j = at[j] + delta[j]``. ``delta`` and ``xdelta``
    are updated in place; returns the largest |z| of the pass.
    """
    d = hess_diag.shape[0]
    max_step = 0.0
    for j in range(d):
        lo = indptr[j]
        hi = indptr[j + 1]
        acc = 0.0
        for k in range(lo, hi):
            i = indices[k]
            acc += d_weights[i] * data[k] * xdelta[i]
        g = base[j] + inv_n * acc + l2_alpha * delta[j]
        h = hess_diag[j]
        if h < _CURV_FLOOR:
            h = _CURV_FLOOR
        wj = at[j] + delta[j]
        hw = h * wj
        if g + lam1 <= hw:
            z = -(g + lam1) / h
        elif g - lam1 >= hw:
            z = -(g - lam1) / h
        else:
            z = -wj
        if z != 0.0:
            delta[j] += z
            for k in range(lo, hi):
                xdelta[indices[k]] += z * data[k]
            az = abs(z)
            if az > max_step:
                max_step = az
    return max_step
