"""Reference solutions of the quadratic porous medium equation.

``rho_t = 1/2 (rho^2)_xx``.  With ``s = t/2`` the unit-mass Barenblatt
profile is

    rho(x, t) = s^(-1/3) (C - xi^2 / 12)_+,    xi = x s^(-1/3),

where ``C = 3^(1/3) / 4`` makes the mass one.  Its support is
``|x| <= a s^(1/3)`` with ``a = sqrt(12 C) = 9^(1/3)``.
"""
from dataclasses import dataclass

import numpy as np

from . import _scan
from .errors import PreconditionError
from .transport import PiecewiseConstantDensity, QuantileFn

BARENBLATT_C = 3.0 ** (1.0 / 3.0) / 4.0
BARENBLATT_A = np.sqrt(12.0 * BARENBLATT_C)


def _s(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise PreconditionError("Barenblatt profile needs t > 0")
    return 0.5 * t


def barenblatt(x, t):
    s13 = _s(t) ** (1.0 / 3.0)
    xi = np.asarray(x, dtype=float) / s13
    out = np.maximum(BARENBLATT_C - xi * xi / 12.0, 0.0) / s13
    return float(out) if np.ndim(out) == 0 else out


def barenblatt_support(t):
    half = BARENBLATT_A * _s(t) ** (1.0 / 3.0)
    return (-float(half), float(half))


def barenblatt_cdf(x, t):
    s13 = _s(t) ** (1.0 / 3.0)
    a = BARENBLATT_A
    xi = np.clip(np.asarray(x, dtype=float) / s13, -a, a)
    out = BARENBLATT_C * (xi + a) - (xi ** 3 + a ** 3) / 36.0
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def barenblatt_quantile(z, t):
    """Exact inverse CDF; the cubic ``u^3 - 3u + 4z - 2 = 0`` solved by cosines."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    u = 2.0 * np.cos((2.0 * np.pi - np.arccos(1.0 - 2.0 * z)) / 3.0)
    out = _s(t) ** (1.0 / 3.0) * BARENBLATT_A * u
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BarenblattParams:
    t0: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not self.t0 > 0:
            raise PreconditionError("t0 must be positive")
        if self.mass != 1.0:
            raise PreconditionError("only unit mass is supported")

    def density(self, x, t=0.0):
        return barenblatt(x, self.t0 + t)

    def quantile_fn(self, t=0.0, grid_size=4096):
        return QuantileFn.from_callable(lambda z: barenblatt_quantile(z, self.t0 + t), grid_size)

    def positions(self, N, t=0.0):
        """Particles at the exact quantiles ``X(i/N)``, ``i = 0..N``."""
        return barenblatt_quantile(np.arange(N + 1) / N, self.t0 + t)

    def cell_averages(self, edges, t=0.0):
        edges = np.asarray(edges, dtype=float)
        return np.diff(barenblatt_cdf(edges, self.t0 + t)) / np.diff(edges)


def barenblatt_density(t, edges):
    """Cell averages of the profile on ``edges`` as a density."""
    edges = np.asarray(edges, dtype=float)
    vals = np.diff(barenblatt_cdf(edges, t)) / np.diff(edges)
    return PiecewiseConstantDensity(edges, np.maximum(vals, 0.0))


CFL = 0.4
_CHUNK = 2000


def _cfl_dt(rho, dx):
    top = float(np.max(rho))
    return np.inf if top == 0.0 else CFL * dx * dx / (2.0 * top)


def fd_pme_solve(rho0, t_end, grid, dt=None, min_cells=10):
    """Explicit conservative finite differences for ``rho_t = 1/2 (rho^2)_xx``.

    Parameters
    ----------
    rho0 : PiecewiseConstantDensity
        Initial data; its exact cell averages on the grid start the scheme.
    t_end : float
        Evolution time (relative to the initial data).
    grid : (xmin, xmax, M)
        ``M`` equal cells on ``[xmin, xmax]`` with zero-flux walls.
    dt : float, optional
        Upper bound on the step; the stability limit
        ``0.4 dx^2 / (2 max rho)`` is always enforced and recomputed as the
        maximum decays.
    """
    xmin, xmax, M = float(grid[0]), float(grid[1]), int(grid[2])
    if not xmax > xmin or M < 3:
        raise PreconditionError("grid must have xmax > xmin and at least 3 cells")
    edges = np.linspace(xmin, xmax, M + 1)
    dx = (xmax - xmin) / M
    lo, hi = rho0.support
    if lo <= xmin or hi >= xmax:
        raise PreconditionError("initial support must lie strictly inside the grid")
    if (hi - lo) < min_cells * dx:
        raise PreconditionError("grid too coarse for the initial support")
    rho = rho0.cell_averages(edges)
    remaining = float(t_end)
    while remaining > 0:
        step = _cfl_dt(rho, dx)
        if dt is not None:
            step = min(step, float(dt))
        n = int(np.ceil(remaining / step))
        if n <= _CHUNK:
            h = remaining / n
            rho = _scan.pme_steps(rho, h / (2.0 * dx * dx), n)
            remaining = 0.0
        else:
            rho = _scan.pme_steps(rho, step / (2.0 * dx * dx), _CHUNK)
            remaining -= _CHUNK * step
    return PiecewiseConstantDensity(edges, rho)


_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


def l2_distance_to_barenblatt(d, t):
    """Exact ``|d - rho(., t)|_{L^2(R)}`` (the integrand is a quartic per piece)."""
    lo, hi = barenblatt_support(t)
    b = np.union1d(d.breakpoints, [lo, hi])
    a_, b_ = b[:-1], b[1:]
    mid, half = 0.5 * (a_ + b_), 0.5 * (b_ - a_)
    pts = mid[:, None] + half[:, None] * _GL3_X[None, :]
    diff = d(pts.ravel()).reshape(pts.shape) - barenblatt(pts, t)
    total = np.sum(np.sum(diff * diff * _GL3_W[None, :], axis=1) * half)
    return float(np.sqrt(total))


def l2_distance(d1, d2):
    """Exact L2 distance between two piecewise-constant densities."""
    b = np.union1d(d1.breakpoints, d2.breakpoints)
    mid = 0.5 * (b[:-1] + b[1:])
    diff = d1(mid) - d2(mid)
    return float(np.sqrt(np.sum(diff * diff * np.diff(b))))
