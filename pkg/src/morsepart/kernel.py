"""Scaled Morse kernel ``w(x) = exp(-|x|/eps) / (2 eps)`` and exact convolutions.

Convolutions against a piecewise-constant density reduce to two exponential
prefix sums over the breakpoints ``b`` (values ``v``, widths ``d``)::

    A_0 = 0,      A_{i+1} = exp(-d_i/eps) A_i     + eps v_i (1 - exp(-d_i/eps))
    B_m = 0,      B_i     = exp(-d_i/eps) B_{i+1} + eps v_i (1 - exp(-d_i/eps))

``A`` collects mass to the left of a point, ``B`` mass to the right, each
weighted by ``exp(-distance/eps)``.  Then at any point

    (w * rho)   = (A + B) / (2 eps)
    (w' * rho)  = (B - A) / (2 eps^2)
    (w'' * rho) = (A + B) / (2 eps^3) - rho / eps^2

where the last line is the distributional second derivative, so that
``-eps^2 (w'' * rho) + w * rho = rho``.
"""
from dataclasses import dataclass

import numpy as np

from . import _scan
from .errors import DomainError, PreconditionError


@dataclass(frozen=True)
class Kernel:
    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps <= 0:
            raise PreconditionError(f"epsilon must be positive, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)

    def w(self, x):
        return w(self, x)

    def w_prime(self, x):
        return w_prime(self, x)

    def w_second(self, x):
        return w_second(self, x)

    def split_parts(self, x):
        return split_parts(self, x)

    def conv(self, d, queries, order=0):
        return conv_density(self, d, queries, order)


def _eps(k):
    return k.epsilon if isinstance(k, Kernel) else Kernel(k).epsilon


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def _nonzero(x):
    x = np.asarray(x, dtype=float)
    if np.any(x == 0.0):
        raise DomainError("kernel derivative is not defined at x = 0")
    return x


def w(k, x):
    eps = _eps(k)
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(x, np.exp(-np.abs(x) / eps) / (2.0 * eps))


def w_prime(k, x):
    """Derivative away from the origin; raises :class:`DomainError` at 0."""
    eps = _eps(k)
    x = _nonzero(x)
    out = -np.sign(x) * np.exp(-np.abs(x) / eps) / (2.0 * eps * eps)
    return _scalar_or_array(x, out)


def w_second(k, x):
    """Absolutely continuous part of the second derivative, ``w(x)/eps^2``."""
    eps = _eps(k)
    x = _nonzero(x)
    return _scalar_or_array(x, np.exp(-np.abs(x) / eps) / (2.0 * eps ** 3))


def split_parts(k, x):
    """Concave tent part and convex remainder, summing to ``w``.

    ``n = (1 - |x|/eps) / (2 eps)`` and ``s = (exp(-|x|/eps) - 1 + |x|/eps) / (2 eps)``.
    """
    eps = _eps(k)
    r = np.abs(np.asarray(x, dtype=float)) / eps
    n = (1.0 - r) / (2.0 * eps)
    # expm1 keeps s accurate (and >= 0) near the origin
    s = (np.expm1(-r) + r) / (2.0 * eps)
    return _scalar_or_array(x, n), _scalar_or_array(x, s)


def _density_arrays(d):
    b = np.asarray(d.breakpoints, dtype=float)
    v = np.asarray(d.values, dtype=float)
    if np.any(np.isnan(b)) or np.any(np.isnan(v)):
        raise DomainError("NaN in density")
    return b, v


def prefix_sums(eps, b, v):
    """Left/right exponential sums ``(A, B)`` at every breakpoint (O(m))."""
    dx = np.diff(b)
    c = v * eps * -np.expm1(-dx / eps)
    return _scan.exp_scan_left(dx, c, eps), _scan.exp_scan_right(dx, c, eps)


def _check_queries(q):
    q = np.asarray(q, dtype=float)
    if np.any(np.isnan(q)):
        raise DomainError("NaN in queries")
    if q.ndim != 1:
        raise PreconditionError("queries must be a 1-d array")
    if np.any(np.diff(q) < 0):
        raise PreconditionError("queries must be sorted ascending")
    return q


def sums_at(eps, b, v, A, B, q):
    """Evaluate ``A`` and ``B`` at arbitrary points from their breakpoint values."""
    m = v.size
    j = np.searchsorted(b, q, side="right") - 1
    left = j < 0
    right = j >= m
    jc = np.clip(j, 0, m - 1)
    # exponents are <= 0 inside the support; outside rows are overwritten below
    ul = np.minimum(-(q - b[jc]) / eps, 0.0)
    ur = np.minimum(-(b[jc + 1] - q) / eps, 0.0)
    Aq = np.exp(ul) * A[jc] - v[jc] * eps * np.expm1(ul)
    Bq = np.exp(ur) * B[jc + 1] - v[jc] * eps * np.expm1(ur)
    if np.any(left):
        Aq[left] = 0.0
        Bq[left] = np.exp(-(b[0] - q[left]) / eps) * B[0]
    if np.any(right):
        Aq[right] = np.exp(-(q[right] - b[-1]) / eps) * A[-1]
        Bq[right] = 0.0
    return Aq, Bq


def density_at(b, v, q):
    """Point values of the density, averaging one-sided limits at breakpoints."""
    m = v.size
    j = np.searchsorted(b, q, side="right") - 1
    inside = (j >= 0) & (j < m)
    out = np.zeros_like(q)
    out[inside] = v[j[inside]]
    on = np.isin(q, b)
    if np.any(on):
        k = np.searchsorted(b, q[on])
        lv = np.where(k > 0, v[np.clip(k - 1, 0, m - 1)], 0.0)
        rv = np.where(k < m, v[np.clip(k, 0, m - 1)], 0.0)
        out[on] = 0.5 * (lv + rv)
    return out


def conv_density(k, d, queries, order=0):
    """Exact ``w^(order) * d`` at sorted query points in O(cells + queries).

    ``order=2`` is the distributional second derivative (the point mass of
    ``w''`` at the origin included), so ``-eps^2 * order2 + order0 = d``.
    At a breakpoint the density value is the mean of its one-sided limits.
    """
    if order not in (0, 1, 2):
        raise PreconditionError("order must be 0, 1 or 2")
    eps = _eps(k)
    b, v = _density_arrays(d)
    q = _check_queries(queries)
    A, B = prefix_sums(eps, b, v)
    Aq, Bq = sums_at(eps, b, v, A, B, q)
    if order == 0:
        return (Aq + Bq) / (2.0 * eps)
    if order == 1:
        return (Bq - Aq) / (2.0 * eps * eps)
    return (Aq + Bq) / (2.0 * eps ** 3) - density_at(b, v, q) / eps ** 2


def cell_integral(k, a, b, x, order=0):
    """``int_a^b w^(order)(x - y) dy`` for one cell, in closed form.

    For ``order=2`` the point mass at ``y = x`` contributes ``-1/eps^2`` when
    ``x`` is inside the cell and half of that at an endpoint.
    """
    eps = _eps(k)
    x = np.asarray(x, dtype=float)
    above = x >= b
    below = x <= a
    ea = np.exp(-np.abs(x - a) / eps)
    eb = np.exp(-np.abs(x - b) / eps)
    if order == 0:
        out = np.where(above, 0.5 * (eb - ea), np.where(below, 0.5 * (ea - eb), 1.0 - 0.5 * (ea + eb)))
    elif order == 1:
        # w'(x - y) integrates to w(x - a) - w(x - b)
        out = (ea - eb) / (2.0 * eps)
    elif order == 2:
        inside = np.where((x > a) & (x < b), 1.0, np.where((x == a) | (x == b), 0.5, 0.0))
        out = (cell_integral(k, a, b, x, 0) - inside) / eps ** 2
    else:
        raise PreconditionError("order must be 0, 1 or 2")
    return _scalar_or_array(x, out)


def conv_density_direct(k, d, queries, order=0):
    """O(cells x queries) reference summation of :func:`cell_integral`."""
    eps = _eps(k)
    b, v = _density_arrays(d)
    q = np.asarray(queries, dtype=float)
    out = np.zeros_like(q)
    for i in range(v.size):
        if v[i] != 0.0:
            out += v[i] * np.asarray(cell_integral(eps, b[i], b[i + 1], q, order))
    return out
