"""One-dimensional probability measures, quantile functions and atomization.

A measure on the line is represented either by a piecewise-constant
density, a finite list of atoms, or a mixture of the two
(:class:`MeasureSpec`).  Its quantile (pseudo-inverse of the CDF) is then
exactly piecewise linear, which is what :class:`QuantileFn` stores.  In
quantile coordinates the 2-Wasserstein distance is a plain L2([0, 1])
distance, evaluated here in closed form.

Quantiles follow the generalized-inverse convention
``X(z) = inf{x : F(x) >= z}`` for ``z`` in (0, 1], and ``X(0)`` is the left
end of the support (the right-continuous value there).
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

DEFAULT_GRID_SIZE = 4096


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    """Density equal to ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray
    mass: float = field(init=False)

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or b.size != v.size + 1 or v.size == 0:
            raise PreconditionError("need m+1 breakpoints for m >= 1 values")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
            raise PreconditionError("breakpoints and values must be finite")
        if np.any(np.diff(b) <= 0):
            raise PreconditionError("breakpoints must be strictly increasing")
        if np.any(v < 0):
            raise PreconditionError("density values must be nonnegative")
        b.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mass", float(np.sum(v * np.diff(b))))

    @property
    def widths(self):
        return np.diff(self.breakpoints)

    @property
    def cell_masses(self):
        return self.values * self.widths

    @property
    def support(self):
        """Closed hull of the cells carrying positive mass."""
        pos = np.nonzero(self.values > 0)[0]
        if pos.size == 0:
            return (float(self.breakpoints[0]), float(self.breakpoints[0]))
        return (float(self.breakpoints[pos[0]]), float(self.breakpoints[pos[-1] + 1]))

    def __call__(self, x):
        """Right-continuous point values (0 outside the breakpoints)."""
        x = np.asarray(x, dtype=float)
        b = self.breakpoints
        j = np.searchsorted(b, x, side="right") - 1
        inside = (j >= 0) & (j < self.values.size)
        out = np.zeros_like(x)
        out[inside] = self.values[j[inside]]
        return out

    def cdf(self, x):
        """Mass of ``(-inf, x]``; continuous and piecewise linear."""
        x = np.asarray(x, dtype=float)
        b = self.breakpoints
        cum = np.concatenate(([0.0], np.cumsum(self.cell_masses)))
        j = np.clip(np.searchsorted(b, x, side="right") - 1, 0, self.values.size - 1)
        out = cum[j] + self.values[j] * (x - b[j])
        out = np.where(x < b[0], 0.0, out)
        return np.where(x >= b[-1], cum[-1], out)

    def restricted(self, lo, hi):
        """Restriction to ``[lo, hi]`` extended by zero cells to cover it exactly."""
        b = self.breakpoints
        inner = b[(b > lo) & (b < hi)]
        nb = np.concatenate(([lo], inner, [hi]))
        mids = 0.5 * (nb[:-1] + nb[1:])
        return PiecewiseConstantDensity(nb, self(mids))

    def cell_averages(self, edges):
        """Exact averages over the cells of an arbitrary grid ``edges``."""
        edges = np.asarray(edges, dtype=float)
        return np.diff(self.cdf(edges)) / np.diff(edges)

    def to_rows(self):
        """(breakpoint, value) rows; the last breakpoint carries value 0."""
        return list(zip(self.breakpoints.tolist(), self.values.tolist() + [0.0]))


def uniform_density(a, b, mass=1.0):
    return PiecewiseConstantDensity([a, b], [mass / (b - a)])


@dataclass(frozen=True)
class QuantileFn:
    """Nondecreasing piecewise-linear map on [0, 1].

    ``z`` is nondecreasing with ``z[0] = 0`` and ``z[-1] = 1``.  A repeated
    ``z`` value encodes a jump of ``X`` (a gap in the support of the
    measure); a segment with ``X[k] == X[k+1]`` is an atom.
    """

    z: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        X = np.array(self.X, dtype=float)
        if z.ndim != 1 or z.shape != X.shape or z.size < 2:
            raise PreconditionError("z and X must be 1-d of equal length >= 2")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(X))):
            raise PreconditionError("quantile knots must be finite")
        if z[0] != 0.0 or z[-1] != 1.0 or np.any(np.diff(z) < 0):
            raise PreconditionError("z must be nondecreasing from 0 to 1")
        if np.any(np.diff(X) < 0):
            raise PreconditionError("quantile function must be nondecreasing")
        z.flags.writeable = False
        X.flags.writeable = False
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "X", X)

    @classmethod
    def from_positions(cls, x):
        """Quantile of the reconstruction with mass 1/N between neighbours."""
        x = np.asarray(x, dtype=float)
        return cls(np.linspace(0.0, 1.0, x.size), x)

    @classmethod
    def from_callable(cls, f, grid_size=DEFAULT_GRID_SIZE):
        """Sample a (vectorised) monotone map at ``grid_size`` uniform knots."""
        z = np.linspace(0.0, 1.0, int(grid_size))
        return cls(z, np.maximum.accumulate(np.asarray(f(z), dtype=float)))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        k = np.clip(np.searchsorted(self.z, z, side="left") - 1, 0, self.z.size - 2)
        z0, z1 = self.z[k], self.z[k + 1]
        x0, x1 = self.X[k], self.X[k + 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(z1 > z0, (z - z0) / (z1 - z0), 1.0)
        out = x0 + frac * (x1 - x0)
        return np.where(z <= 0.0, self.X[0], out)

    def _segment_values(self, zl, zr):
        """Values at both ends of [zl, zr], taken from the segment containing it."""
        mid = 0.5 * (zl + zr)
        k = np.clip(np.searchsorted(self.z, mid, side="right") - 1, 0, self.z.size - 2)
        z0, z1 = self.z[k], self.z[k + 1]
        slope = (self.X[k + 1] - self.X[k]) / (z1 - z0)
        return self.X[k] + slope * (zl - z0), self.X[k] + slope * (zr - z0)

    def l2_norm(self):
        return wasserstein2(self, QuantileFn([0.0, 1.0], [0.0, 0.0]))


@dataclass(frozen=True)
class MeasureSpec:
    """Probability measure: optional density part plus optional atoms.

    The density carries its own mass; ``density.mass + sum(weights) == 1``.
    """

    density: PiecewiseConstantDensity = None
    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(a), float(w)) for a, w in self.atoms)
        for a, w in atoms:
            if not np.isfinite(a) or not np.isfinite(w) or w < 0:
                raise PreconditionError(f"invalid atom ({a}, {w})")
        object.__setattr__(self, "atoms", tuple(sorted(atoms)))

    @property
    def total_mass(self):
        m = sum(w for _, w in self.atoms)
        if self.density is not None:
            m += self.density.mass
        return m

    def check_probability(self, tol=1e-12):
        if abs(self.total_mass - 1.0) > tol:
            raise PreconditionError(f"measure has mass {self.total_mass!r}, expected 1")

    def mass_in(self, lo, hi, closed=True):
        """Mass of [lo, hi] (closed) or (lo, hi) (open)."""
        m = 0.0
        if self.density is not None:
            m += float(self.density.cdf(hi) - self.density.cdf(lo))
        for a, w in self.atoms:
            if (lo <= a <= hi) if closed else (lo < a < hi):
                m += w
        return m

    def to_dict(self):
        out = {}
        if self.density is not None:
            out["density"] = {
                "breakpoints": self.density.breakpoints.tolist(),
                "values": self.density.values.tolist(),
            }
        if self.atoms:
            out["atoms"] = [[a, w] for a, w in self.atoms]
        return out

    @classmethod
    def from_dict(cls, data):
        density = None
        if data.get("density") is not None:
            d = data["density"]
            density = PiecewiseConstantDensity(d["breakpoints"], d["values"])
        atoms = tuple((a, w) for a, w in data.get("atoms", ()))
        return cls(density=density, atoms=atoms)


def _clean_knots(z, X):
    """Drop redundant knots: zero-mass prefix/suffix and interior repeats."""
    z = np.asarray(z, dtype=float)
    X = np.asarray(X, dtype=float)
    start = np.nonzero(z > 0)[0][0] - 1
    stop = np.nonzero(z < 1)[0][-1] + 2
    z, X = z[start:stop], X[start:stop]
    keep = np.ones(z.size, dtype=bool)
    # interior run of equal z (a gap): keep its first and last knot only
    same_prev = np.concatenate(([False], z[1:] == z[:-1]))
    same_next = np.concatenate((z[:-1] == z[1:], [False]))
    keep &= ~(same_prev & same_next)
    z, X = z[keep], X[keep]
    keep = np.ones(z.size, dtype=bool)
    keep[1:] = ~((z[1:] == z[:-1]) & (X[1:] == X[:-1]))
    z, X = z[keep], X[keep]
    z[0], z[-1] = 0.0, 1.0
    return z, X


def quantile_of(m, grid_size=None):
    """Exact quantile function of a :class:`MeasureSpec`.

    Atoms become flat segments whose z-width is the atom weight; gaps in the
    support become jumps.  With ``grid_size`` the uniform grid of that many
    knots is merged into the exact knot set (the function is unchanged).
    """
    if isinstance(m, PiecewiseConstantDensity):
        m = MeasureSpec(density=m)
    if m.total_mass <= 0:
        raise PreconditionError("measure has zero mass")
    m.check_probability(tol=1e-9)
    pts = [a for a, _ in m.atoms]
    if m.density is not None:
        pts.extend(m.density.breakpoints.tolist())
    pts = np.unique(np.asarray(pts, dtype=float))
    atom_w = dict()
    for a, w in m.atoms:
        atom_w[a] = atom_w.get(a, 0.0) + w
    dens_cdf = m.density.cdf(pts) if m.density is not None else np.zeros_like(pts)
    z, X = [], []
    below = 0.0
    for p, fd in zip(pts, dens_cdf):
        w = atom_w.get(p, 0.0)
        z.append(fd + below)
        X.append(p)
        if w > 0:
            below += w
            z.append(fd + below)
            X.append(p)
    z = np.clip(np.asarray(z) / m.total_mass, 0.0, 1.0)
    z = np.maximum.accumulate(z)
    # force the top knot to exactly 1 after rounding
    z[z >= 1.0 - 1e-15] = 1.0
    q = QuantileFn(*_clean_knots(z, X))
    if grid_size:
        extra = np.setdiff1d(np.linspace(0.0, 1.0, int(grid_size)), q.z)
        zz = np.concatenate((q.z, extra))
        XX = np.concatenate((q.X, q(extra)))
        order = np.argsort(zz, kind="stable")
        q = QuantileFn(zz[order], XX[order])
    return q


def wasserstein2(a, b):
    """d2 between two measures given by their quantile functions (exact)."""
    zs = np.union1d(a.z, b.z)
    zl, zr = zs[:-1], zs[1:]
    a_l, a_r = a._segment_values(zl, zr)
    b_l, b_r = b._segment_values(zl, zr)
    u, v = a_l - b_l, a_r - b_r
    total = np.sum((zr - zl) * (u * u + u * v + v * v)) / 3.0
    return float(np.sqrt(max(total, 0.0)))


def density_of_quantile(q):
    """Inverse of :func:`quantile_of` for strictly increasing quantiles."""
    z, X = q.z, q.X
    dz, dX = np.diff(z), np.diff(X)
    if np.any((dz > 0) & (dX <= 0)):
        raise PreconditionError("flat quantile segment: the measure has an atom")
    keep = np.concatenate(([True], dX > 0))
    b = X[keep]
    zk = z[keep]
    return PiecewiseConstantDensity(b, np.diff(zk) / np.diff(b))


def _padded_lp_density(rho, N):
    lo, hi = -float(N), float(N)
    m_low = float(rho.cdf(lo))
    m_high = max(rho.mass - float(rho.cdf(hi)), 0.0)
    restricted = rho.restricted(lo, hi)
    values = restricted.values + (m_low + m_high) / (2.0 * N)
    return PiecewiseConstantDensity(restricted.breakpoints, values)


def atomize_lp(rho, N):
    """Initial particles for a density: x0 = -N, then mass 1/N per cell.

    The density is restricted to [-N, N] and the escaped mass is spread as a
    constant over that interval before inverting its CDF.
    """
    N = int(N)
    if N < 2:
        raise PreconditionError("need N >= 2")
    if abs(rho.mass - 1.0) > 1e-9:
        raise PreconditionError(f"density has mass {rho.mass!r}, expected 1")
    padded = _padded_lp_density(rho, N)
    q = quantile_of(MeasureSpec(density=padded))
    zi = np.arange(1, N + 1) / N
    x = np.concatenate(([-float(N)], q(zi)))
    if np.any(np.diff(x) <= 0):
        raise PreconditionError("density too concentrated for distinct particles")
    return x


def compactified_measure(m, N):
    """Restriction to [-N, N] with escaped masses spread as uniform blocks."""
    lo, hi = -float(N), float(N)
    m_low = sum(w for a, w in m.atoms if a < lo)
    m_high = sum(w for a, w in m.atoms if a > hi)
    if m.density is not None:
        m_low += float(m.density.cdf(lo))
        m_high += max(m.density.mass - float(m.density.cdf(hi)), 0.0)
    pieces_b = [lo, 0.0, hi]
    pieces_v = [m_low / N, m_high / N]
    base = PiecewiseConstantDensity(pieces_b, pieces_v)
    if m.density is not None:
        r = m.density.restricted(lo, hi)
        b = np.union1d(r.breakpoints, base.breakpoints)
        mids = 0.5 * (b[:-1] + b[1:])
        density = PiecewiseConstantDensity(b, r(mids) + base(mids))
    else:
        density = base
    atoms = tuple((a, w) for a, w in m.atoms if lo <= a <= hi)
    if density.mass == 0.0:
        density = None
    return MeasureSpec(density=density, atoms=atoms)


def atomize_measure(m, N):
    """Initial particles for a general measure: x_i = X(i/N), ties allowed."""
    N = int(N)
    if N < 2:
        raise PreconditionError("need N >= 2")
    if isinstance(m, PiecewiseConstantDensity):
        m = MeasureSpec(density=m)
    m.check_probability(tol=1e-9)
    q = quantile_of(compactified_measure(m, N))
    return atomize_quantile(q, N)


def atomize_quantile(q, N):
    """Sample a quantile function at the knots i/N, i = 0..N."""
    x = np.asarray(q(np.arange(N + 1) / N), dtype=float)
    return np.maximum.accumulate(x)
