"""Numba stepping kernel for the Euler-Maruyama integrator.

The kernel maintains the drift accumulator and the Brownian accumulator
separately and defines the position as their combination, so the
bookkeeping identity X = N + nu * B holds exactly at every step.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def euler_maruyama_path(values, h, box_length, coupling, nu, dt,
                        normals, cp_steps, excursion_limit,
                        x_out, n_out, b_out, flag_out):
    """Integrate one path; record state at the given checkpoint steps.

    values          (N, N, 2) field samples on the grid
    normals         (n_steps, 2) standard Gaussian increments
    cp_steps        ascending step counts (>= 1) at which to record
    excursion_limit flag the path once |X| exceeds this radius
    Returns the maximum |X| reached along the path.
    """
    n = values.shape[0]
    sqdt = np.sqrt(dt)
    nx = 0.0
    ny = 0.0
    bx = 0.0
    by = 0.0
    xx = 0.0
    xy = 0.0
    max_e2 = 0.0
    lim2 = excursion_limit * excursion_limit
    flagged = False
    ic = 0
    ncp = cp_steps.shape[0]
    n_steps = normals.shape[0]
    for s in range(n_steps):
        if coupling != 0.0:
            fx = (xx % box_length) / h
            fy = (xy % box_length) / h
            ix = int(fx)
            iy = int(fy)
            rx = fx - ix
            ry = fy - iy
            ix0 = ix % n
            iy0 = iy % n
            ix1 = ix0 + 1
            if ix1 == n:
                ix1 = 0
            iy1 = iy0 + 1
            if iy1 == n:
                iy1 = 0
            w00 = (1.0 - rx) * (1.0 - ry)
            w10 = rx * (1.0 - ry)
            w01 = (1.0 - rx) * ry
            w11 = rx * ry
            wx = (w00 * values[ix0, iy0, 0] + w10 * values[ix1, iy0, 0]
                  + w01 * values[ix0, iy1, 0] + w11 * values[ix1, iy1, 0])
            wy = (w00 * values[ix0, iy0, 1] + w10 * values[ix1, iy0, 1]
                  + w01 * values[ix0, iy1, 1] + w11 * values[ix1, iy1, 1])
            nx += coupling * wx * dt
            ny += coupling * wy * dt
        bx += sqdt * normals[s, 0]
        by += sqdt * normals[s, 1]
        xx = nx + nu * bx
        xy = ny + nu * by
        e2 = xx * xx + xy * xy
        if e2 > max_e2:
            max_e2 = e2
        if not flagged and e2 > lim2:
            flagged = True
        if ic < ncp and s + 1 == cp_steps[ic]:
            x_out[ic, 0] = xx
            x_out[ic, 1] = xy
            n_out[ic, 0] = nx
            n_out[ic, 1] = ny
            b_out[ic, 0] = bx
            b_out[ic, 1] = by
            flag_out[ic] = flagged
            ic += 1
    return np.sqrt(max_e2)
