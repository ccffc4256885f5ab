"""Linear-time exponential scans and the explicit PME stepper.

Every public kernel here exists twice: a numba loop (``*_nb``) and a
vectorised numpy version (``*_np``).  The module-level names dispatch on
``_accel.USE_NUMBA``.

The scans never form ``exp(+x/eps)``.  The numba loops only multiply by
``exp(-gap/eps)`` factors in (0, 1]; the numpy versions work in log space
through ``np.logaddexp.accumulate``.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


@njit
def exp_scan_left_nb(dx, c, eps):
    m = c.shape[0]
    out = np.zeros(m + 1)
    for i in range(m):
        out[i + 1] = np.exp(-dx[i] / eps) * out[i] + c[i]
    return out


@njit
def exp_scan_right_nb(dx, c, eps):
    m = c.shape[0]
    out = np.zeros(m + 1)
    for i in range(m - 1, -1, -1):
        out[i] = np.exp(-dx[i] / eps) * out[i + 1] + c[i]
    return out


def exp_scan_left_np(dx, c, eps):
    c = np.asarray(c, dtype=float)
    out = np.zeros(c.shape[0] + 1)
    if c.shape[0] == 0:
        return out
    u = np.concatenate(([0.0], np.cumsum(dx))) / eps
    with np.errstate(divide="ignore"):
        logc = np.log(c)
    acc = np.logaddexp.accumulate(logc + u[1:])
    out[1:] = np.exp(acc - u[1:])
    return out


def exp_scan_right_np(dx, c, eps):
    c = np.asarray(c, dtype=float)
    out = np.zeros(c.shape[0] + 1)
    if c.shape[0] == 0:
        return out
    u = np.concatenate(([0.0], np.cumsum(dx))) / eps
    u = u - u[-1]
    with np.errstate(divide="ignore"):
        logc = np.log(c)
    acc = np.logaddexp.accumulate((logc - u[:-1])[::-1])[::-1]
    out[:-1] = np.exp(acc + u[:-1])
    return out


@njit
def pme_steps_nb(rho, lam, nsteps):
    m = rho.shape[0]
    sq = np.empty(m)
    for _ in range(nsteps):
        for j in range(m):
            sq[j] = rho[j] * rho[j]
        # zero-flux walls: ghost cells mirror the boundary cells
        left = sq[0]
        for j in range(m):
            right = sq[j + 1] if j + 1 < m else sq[m - 1]
            rho[j] += lam * (right - 2.0 * sq[j] + left)
            left = sq[j]
    return rho


def pme_steps_np(rho, lam, nsteps):
    rho = np.array(rho, dtype=float)
    for _ in range(nsteps):
        sq = rho * rho
        padded = np.concatenate((sq[:1], sq, sq[-1:]))
        rho += lam * (padded[2:] - 2.0 * sq + padded[:-2])
    return rho


def _as_f64(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)


def exp_scan_left(dx, c, eps):
    """S_i = sum_{k<i} c_k exp(-(t_i - t_{k+1})/eps), i = 0..m.

    The points ``t`` are given through their gaps ``dx = diff(t)``.  ``c_k``
    is attached to the right end ``t_{k+1}`` of interval k; all ``c_k`` must
    be nonnegative.
    """
    dx, c = _as_f64(dx, c)
    if USE_NUMBA:
        return exp_scan_left_nb(dx, c, float(eps))
    return exp_scan_left_np(dx, c, eps)


def exp_scan_right(dx, c, eps):
    """S_i = sum_{k>=i} c_k exp(-(t_k - t_i)/eps), i = 0..m.

    ``c_k`` is attached to the left end ``t_k`` of interval k.
    """
    dx, c = _as_f64(dx, c)
    if USE_NUMBA:
        return exp_scan_right_nb(dx, c, float(eps))
    return exp_scan_right_np(dx, c, eps)


def pme_steps(rho, lam, nsteps):
    """Advance ``rho_t = 1/2 (rho^2)_xx`` by ``nsteps`` explicit steps.

    ``lam = dt / (2 dx^2)``.  Returns a new array.
    """
    rho = np.array(rho, dtype=np.float64)
    if USE_NUMBA:
        return pme_steps_nb(rho, float(lam), int(nsteps))
    return pme_steps_np(rho, lam, nsteps)


@njit
def gap_field_nb(d, eps, n):
    m = d.shape[0]
    q = np.empty(m)
    c = np.empty(m)
    for i in range(m):
        q[i] = np.exp(-d[i] / eps)
        c[i] = -np.expm1(-d[i] / eps) * eps / (n * d[i])
    A = np.zeros(m + 1)
    B = np.zeros(m + 1)
    for i in range(m):
        A[i + 1] = q[i] * A[i] + c[i]
    for i in range(m - 1, -1, -1):
        B[i] = q[i] * B[i + 1] + c[i]
    scale = 1.0 / (2.0 * eps * eps)
    dd = np.empty(m)
    for i in range(m):
        dd[i] = -np.expm1(-d[i] / eps) * scale * (2.0 * eps / (n * d[i]) - A[i] - B[i + 1])
    return -B[0] * scale, dd


def gap_field_np(d, eps, n):
    d = np.asarray(d, dtype=float)
    g = -np.expm1(-d / eps)
    c = g * eps / (n * d)
    A = exp_scan_left_np(d, c, eps)
    B = exp_scan_right_np(d, c, eps)
    scale = 1.0 / (2.0 * eps * eps)
    return -B[0] * scale, g * scale * (2.0 * eps / (n * d) - A[:-1] - B[1:])


def gap_field(d, eps, n):
    """Velocity of the leftmost particle and time derivatives of all gaps.

    ``n`` is the number of cells; each cell carries mass ``1/n``.  Written
    directly in the gaps so no position differences are formed.
    """
    (d,) = _as_f64(d)
    if USE_NUMBA:
        return gap_field_nb(d, float(eps), float(n))
    return gap_field_np(d, eps, n)
