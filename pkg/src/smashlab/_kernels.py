"""Numba sweep kernels for divisible-sandpile stabilization.

Every kernel runs ``nsweeps`` passes over the cells of a window
``[a0, b0) x [a1, b1) ...`` of the full array (fused so the driver pays one
dispatch per block).  With ``kappa == 1`` (plain toppling) a visited cell with mass
above one emits its excess, split equally among its ``2d`` axis neighbors,
and the emission accrues to the odometer.  With ``kappa > 1`` the sequential
kernels run projected over-relaxation: the signed update ``kappa * (m - 1)``
is applied wherever the cell has mass above one or has previously emitted
(negative updates recall mass from the neighbors, clamped so the odometer
never drops below zero).  Both rules conserve mass exactly and share the
same fixed point: the stabilized state of plain toppling.

A cell on the box boundary that wants to emit aborts the sweep with status 1
so no mass can leave the box.  The Jacobi kernel computes all emissions from
the pre-sweep state, which makes it equivariant under grid symmetries; it is
plain-toppling only.
"""

from numba import njit


@njit(cache=True)
def gs_sweep_1d(f, u, kappa, reverse, nsweeps, a0, b0):
    for _sweep in range(nsweeps):
        n0 = f.shape[0]
        start, stop, step = (a0, b0, 1) if not reverse else (b0 - 1, a0 - 1, -1)
        for i in range(start, stop, step):
            m = f[i]
            if m > 1.0 or (kappa > 1.0 and u[i] > 0.0 and m < 1.0):
                e = kappa * (m - 1.0)
                if e > 0.0:
                    if i == 0 or i == n0 - 1:
                        return 1
                    if e > m:
                        e = m
                else:
                    if -e > u[i]:
                        e = -u[i]
                    if e == 0.0:
                        continue
                f[i] = m - e
                u[i] += e
                q = 0.5 * e
                f[i - 1] += q
                f[i + 1] += q
    return 0


@njit(cache=True)
def gs_sweep_2d(f, u, kappa, reverse, nsweeps, a0, b0, a1, b1):
    for _sweep in range(nsweeps):
        n0, n1 = f.shape
        if not reverse:
            r0s, r0e, st = a0, b0, 1
        else:
            r0s, r0e, st = b0 - 1, a0 - 1, -1
        for i in range(r0s, r0e, st):
            if not reverse:
                r1 = range(a1, b1)
            else:
                r1 = range(b1 - 1, a1 - 1, -1)
            for j in r1:
                m = f[i, j]
                if m > 1.0 or (kappa > 1.0 and u[i, j] > 0.0 and m < 1.0):
                    e = kappa * (m - 1.0)
                    if e > 0.0:
                        if i == 0 or j == 0 or i == n0 - 1 or j == n1 - 1:
                            return 1
                        if e > m:
                            e = m
                    else:
                        if -e > u[i, j]:
                            e = -u[i, j]
                        if e == 0.0:
                            continue
                    f[i, j] = m - e
                    u[i, j] += e
                    q = 0.25 * e
                    f[i - 1, j] += q
                    f[i + 1, j] += q
                    f[i, j - 1] += q
                    f[i, j + 1] += q
    return 0


@njit(cache=True)
def gs_sweep_3d(f, u, kappa, reverse, nsweeps, a0, b0, a1, b1, a2, b2):
    for _sweep in range(nsweeps):
        n0, n1, n2 = f.shape
        sixth = 1.0 / 6.0
        if not reverse:
            r0 = range(a0, b0)
        else:
            r0 = range(b0 - 1, a0 - 1, -1)
        for i in r0:
            if not reverse:
                r1 = range(a1, b1)
            else:
                r1 = range(b1 - 1, a1 - 1, -1)
            for j in r1:
                if not reverse:
                    r2 = range(a2, b2)
                else:
                    r2 = range(b2 - 1, a2 - 1, -1)
                for k in r2:
                    m = f[i, j, k]
                    if m > 1.0 or (kappa > 1.0 and u[i, j, k] > 0.0 and m < 1.0):
                        e = kappa * (m - 1.0)
                        if e > 0.0:
                            if (
                                i == 0
                                or j == 0
                                or k == 0
                                or i == n0 - 1
                                or j == n1 - 1
                                or k == n2 - 1
                            ):
                                return 1
                            if e > m:
                                e = m
                        else:
                            if -e > u[i, j, k]:
                                e = -u[i, j, k]
                            if e == 0.0:
                                continue
                        f[i, j, k] = m - e
                        u[i, j, k] += e
                        q = sixth * e
                        f[i - 1, j, k] += q
                        f[i + 1, j, k] += q
                        f[i, j - 1, k] += q
                        f[i, j + 1, k] += q
                        f[i, j, k - 1] += q
                        f[i, j, k + 1] += q
    return 0


@njit(cache=True)
def jacobi_sweep_1d(f, e, u, nsweeps, a0, b0):
    for _sweep in range(nsweeps):
        n0 = f.shape[0]
        for i in range(a0, b0):
            m = f[i]
            if m > 1.0:
                if i == 0 or i == n0 - 1:
                    return 1
                e[i] = m - 1.0
            else:
                e[i] = 0.0
        for i in range(a0, b0):
            em = e[i]
            if em > 0.0:
                f[i] -= em
                u[i] += em
                q = 0.5 * em
                f[i - 1] += q
                f[i + 1] += q
    return 0


@njit(cache=True)
def jacobi_sweep_2d(f, e, u, nsweeps, a0, b0, a1, b1):
    for _sweep in range(nsweeps):
        n0, n1 = f.shape
        for i in range(a0, b0):
            for j in range(a1, b1):
                m = f[i, j]
                if m > 1.0:
                    if i == 0 or j == 0 or i == n0 - 1 or j == n1 - 1:
                        return 1
                    e[i, j] = m - 1.0
                else:
                    e[i, j] = 0.0
        for i in range(a0, b0):
            for j in range(a1, b1):
                em = e[i, j]
                if em > 0.0:
                    f[i, j] -= em
                    u[i, j] += em
                    q = 0.25 * em
                    f[i - 1, j] += q
                    f[i + 1, j] += q
                    f[i, j - 1] += q
                    f[i, j + 1] += q
    return 0


@njit(cache=True)
def jacobi_sweep_3d(f, e, u, nsweeps, a0, b0, a1, b1, a2, b2):
    for _sweep in range(nsweeps):
        n0, n1, n2 = f.shape
        sixth = 1.0 / 6.0
        for i in range(a0, b0):
            for j in range(a1, b1):
                for k in range(a2, b2):
                    m = f[i, j, k]
                    if m > 1.0:
                        if i == 0 or j == 0 or k == 0 or i == n0 - 1 or j == n1 - 1 or k == n2 - 1:
                            return 1
                        e[i, j, k] = m - 1.0
                    else:
                        e[i, j, k] = 0.0
        for i in range(a0, b0):
            for j in range(a1, b1):
                for k in range(a2, b2):
                    em = e[i, j, k]
                    if em > 0.0:
                        f[i, j, k] -= em
                        u[i, j, k] += em
                        q = sixth * em
                        f[i - 1, j, k] += q
                        f[i + 1, j, k] += q
                        f[i, j - 1, k] += q
                        f[i, j + 1, k] += q
                        f[i, j, k - 1] += q
                        f[i, j, k + 1] += q
    return 0


@njit(cache=True)
def complementarity_error_2d(f, u, a0, b0, a1, b1):
    """Largest ``min(u, 1 - m)`` over under-filled cells that have toppled."""
    worst = 0.0
    for i in range(a0, b0):
        for j in range(a1, b1):
            ui = u[i, j]
            if ui > 0.0:
                gap = 1.0 - f[i, j]
                if gap > 0.0:
                    v = gap if gap < ui else ui
                    if v > worst:
                        worst = v
    return worst


@njit(cache=True)
def complementarity_error_1d(f, u, a0, b0):
    worst = 0.0
    for i in range(a0, b0):
        ui = u[i]
        if ui > 0.0:
            gap = 1.0 - f[i]
            if gap > 0.0:
                v = gap if gap < ui else ui
                if v > worst:
                    worst = v
    return worst


@njit(cache=True)
def complementarity_error_3d(f, u, a0, b0, a1, b1, a2, b2):
    worst = 0.0
    for i in range(a0, b0):
        for j in range(a1, b1):
            for k in range(a2, b2):
                ui = u[i, j, k]
                if ui > 0.0:
                    gap = 1.0 - f[i, j, k]
                    if gap > 0.0:
                        v = gap if gap < ui else ui
                        if v > worst:
                            worst = v
    return worst


GS_SWEEPS = {1: gs_sweep_1d, 2: gs_sweep_2d, 3: gs_sweep_3d}
JACOBI_SWEEPS = {1: jacobi_sweep_1d, 2: jacobi_sweep_2d, 3: jacobi_sweep_3d}
COMP_ERRORS = {1: complementarity_error_1d, 2: complementarity_error_2d, 3: complementarity_error_3d}
