"""Functionals of the reconstructed density and the bound report.

All integrals over the reconstruction are closed forms: on the cell
``[a, b]`` with value ``R`` the convolution ``w' * rho`` is a sum of two
exponentials,

    F(y) = alpha exp(-(b - y)/eps) + beta exp(-(y - a)/eps),

with ``alpha = (B_{k+1} - R eps) / (2 eps^2)`` and
``beta = -(A_k - R eps) / (2 eps^2)`` in terms of the prefix sums of
:mod:`morsepart.kernel`.  Every cell therefore costs O(1) and a whole
state O(N).
"""
import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .dynamics import ParticleState, gap_lower_bound
from .errors import PreconditionError
from .kernel import Kernel, conv_density, prefix_sums
from .transport import PiecewiseConstantDensity

ENTROPY_SENTINEL = np.inf


def reconstruct_density(s):
    """Density with value ``1/(N d_i)`` between consecutive particles."""
    s.require_strict()
    return PiecewiseConstantDensity(s.positions, 1.0 / (s.N * s.gaps))


def _as_density(d):
    return reconstruct_density(d) if isinstance(d, ParticleState) else d


def lp_norm(d, p):
    d = _as_density(d)
    p = float(p)
    if not p >= 1:
        raise PreconditionError("p must be >= 1")
    v, h = d.values, d.widths
    if np.isinf(p):
        return float(np.max(v))
    # scale by the max to avoid overflow of v**p
    top = float(np.max(v))
    if top == 0.0:
        return 0.0
    return top * float(np.sum((v / top) ** p * h)) ** (1.0 / p)


def entropy(d):
    """``int rho log rho``; a state with coincident particles gives ``inf``."""
    if isinstance(d, ParticleState) and not d.is_strict:
        return ENTROPY_SENTINEL
    d = _as_density(d)
    v, h = d.values, d.widths
    if np.any(v == 0.0):
        raise PreconditionError("entropy undefined: density vanishes on a cell")
    return float(np.sum(v * np.log(v) * h))


def moment(d, k):
    """``int |x| rho`` (``k='1_abs'``), ``int x rho`` (1) or ``int x^2 rho`` (2)."""
    d = _as_density(d)
    a, b, v = d.breakpoints[:-1], d.breakpoints[1:], d.values
    if k == "1_abs":
        cell = 0.5 * (b * np.abs(b) - a * np.abs(a))
    elif k in (1, "1"):
        cell = 0.5 * (b - a) * (b + a)
    elif k in (2, "2"):
        cell = (b - a) * (a * a + a * b + b * b) / 3.0
    else:
        raise PreconditionError(f"unknown moment {k!r}")
    return float(np.sum(v * cell))


@dataclass(frozen=True)
class _Cells:
    eps: float
    a: np.ndarray
    b: np.ndarray
    width: np.ndarray
    value: np.ndarray
    A: np.ndarray
    B: np.ndarray
    q: np.ndarray
    one_minus_q: np.ndarray

    @property
    def alpha(self):
        return (self.B[1:] - self.value * self.eps) / (2 * self.eps ** 2)

    @property
    def beta(self):
        return -(self.A[:-1] - self.value * self.eps) / (2 * self.eps ** 2)


def _cells(d, eps):
    d = _as_density(d)
    b, v = d.breakpoints, d.values
    A, B = prefix_sums(eps, b, v)
    width = np.diff(b)
    return _Cells(eps, b[:-1], b[1:], width, v, A, B, np.exp(-width / eps), -np.expm1(-width / eps))


def _eps_of(s, eps):
    if eps is None:
        if not isinstance(s, ParticleState):
            raise PreconditionError("epsilon required for a bare density")
        return s.epsilon
    return eps


def interaction_energy(s, eps=None):
    """``1/2 int rho (w * rho)`` in closed form."""
    eps = _eps_of(s, eps)
    c = _cells(s, eps)
    R = c.value
    excess = c.A[:-1] + c.B[1:] - 2.0 * R * eps
    per_cell = R * (2.0 * R * eps * c.width + excess * eps * c.one_minus_q) / (2.0 * eps)
    return 0.5 * float(np.sum(per_cell))


def entropy_production(s, eps=None):
    """``int rho (w'' * rho) = (int rho (w * rho) - |rho|_2^2) / eps^2``.

    The squared norm cancels cell by cell before summation.
    """
    eps = _eps_of(s, eps)
    c = _cells(s, eps)
    R = c.value
    excess = c.A[:-1] + c.B[1:] - 2.0 * R * eps
    return float(np.sum(R * excess * c.one_minus_q)) / (2.0 * eps * eps)


def _square_integrals(c):
    # int_a^b F^2 on every cell
    alpha, beta = c.alpha, c.beta
    e2 = 0.5 * c.eps * -np.expm1(-2.0 * c.width / c.eps)
    return (alpha * alpha + beta * beta) * e2 + 2.0 * alpha * beta * c.width * c.q


def dissipation(s, eps=None):
    """``int rho (w' * rho)^2`` in closed form."""
    eps = _eps_of(s, eps)
    c = _cells(s, eps)
    return float(np.sum(c.value * _square_integrals(c)))


def velocity_l2_sq(s, eps=None):
    """``int_R (w' * rho)^2`` over the whole line, tails included."""
    eps = _eps_of(s, eps)
    c = _cells(s, eps)
    tails = (c.B[0] ** 2 + c.A[-1] ** 2) * eps / (8.0 * eps ** 4)
    return float(np.sum(_square_integrals(c)) + tails)


def _exp_pair_integral(alpha, beta, a, b, y1, y2, eps):
    # int_{y1}^{y2} alpha exp(-(b-y)/eps) + beta exp(-(y-a)/eps) dy
    return alpha * eps * (np.exp(-(b - y2) / eps) - np.exp(-(b - y1) / eps)) + beta * eps * (
        np.exp(-(y1 - a) / eps) - np.exp(-(y2 - a) / eps)
    )


def abs_velocity_mass(s, eps=None):
    """``int rho |w' * rho|``; each cell has at most one sign change."""
    eps = _eps_of(s, eps)
    c = _cells(s, eps)
    alpha, beta, a, b = c.alpha, c.beta, c.a, c.b
    with np.errstate(divide="ignore", invalid="ignore"):
        root = 0.5 * (a + b) + 0.5 * eps * np.log(-beta / alpha)
    split = (alpha * beta < 0) & (root > a) & (root < b)
    root = np.where(split, root, b)
    first = np.abs(_exp_pair_integral(alpha, beta, a, b, a, root, eps))
    second = np.abs(_exp_pair_integral(alpha, beta, a, b, root, b, eps))
    return float(np.sum(c.value * (first + second)))


def velocity_field(s, y, eps=None):
    """``(w' * rho)(y)`` for sorted ``y``."""
    eps = _eps_of(s, eps)
    return conv_density(Kernel(eps), _as_density(s), y, order=1)


def cone_identity_check(x, eps, require_sorted=True):
    """Return the tent-kernel functional and its linear form on sorted vectors.

    ``n_value = (1/2n^2) sum_{i,j} N_eps(x_i - x_j) - (1/(2 eps^2 n)) sum_i x_i``
    and ``r_value = (1/(4 eps)) [1 - (2/(eps n)) sum_i ((2i+1)/n) x_i]`` with
    ``n = len(x)`` and 0-based ``i``.  They coincide exactly when ``x`` is
    sorted ascending.
    """
    x = np.asarray(x, dtype=float)
    if require_sorted and np.any(np.diff(x) < 0):
        raise PreconditionError("x must be sorted ascending")
    n = x.size
    diff = np.abs(x[:, None] - x[None, :])
    tent = (1.0 - diff / eps) / (2.0 * eps)
    n_value = tent.sum() / (2.0 * n * n) - x.sum() / (2.0 * eps * eps * n)
    weights = (2.0 * np.arange(n) + 1.0) / n
    r_value = (1.0 - 2.0 / (eps * n) * np.dot(weights, x)) / (4.0 * eps)
    return float(n_value), float(r_value)


def cone_identity_scale(x, eps):
    """Magnitude of the terms entering :func:`cone_identity_check`."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (4.0 * eps) + np.sum(np.abs(x)) / (eps * eps * x.size)


# -- weak formulation ----------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _cell_quadrature(a, b, f):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    return np.sum(f(pts) * _GL_W[None, :], axis=1) * half, pts


def weak_pairing(s, phi):
    """``int phi rho`` by 8-point Gauss-Legendre per cell."""
    d = reconstruct_density(s)
    vals, _ = _cell_quadrature(d.breakpoints[:-1], d.breakpoints[1:], phi)
    return float(np.sum(d.values * vals))


def weak_flux(s, dphi):
    """``int rho phi' (w' * rho)`` by 8-point Gauss-Legendre per cell."""
    c = _cells(s, s.epsilon)
    alpha, beta = c.alpha[:, None], c.beta[:, None]
    a, b = c.a[:, None], c.b[:, None]
    eps = s.epsilon

    def integrand(y):
        return dphi(y) * (alpha * np.exp(-(b - y) / eps) + beta * np.exp(-(y - a) / eps))

    vals, _ = _cell_quadrature(c.a, c.b, integrand)
    return float(np.sum(c.value * vals))


@dataclass(frozen=True)
class Bump:
    """Smooth bump ``exp(1 - 1/(1 - ((x - center)/radius)^2))`` supported in a ball."""

    radius: float = 1.0
    center: float = 0.0

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        out = np.zeros_like(u)
        inside = np.abs(u) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
        return out

    def derivative(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        out = np.zeros_like(u)
        inside = np.abs(u) < 1
        ui = u[inside]
        g = 1.0 - ui * ui
        out[inside] = np.exp(1.0 - 1.0 / g) * (-2.0 * ui / (g * g)) / self.radius
        return out

    @property
    def lipschitz(self):
        u = np.linspace(-1.0, 1.0, 200001)
        return float(np.max(np.abs(self.derivative(self.center + self.radius * u))))


def _cumulative(t, f):
    """Running integral of samples ``f(t)``: Simpson on uneven grids."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if t.size < 3:
        return np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))))
    return cumulative_simpson(f, x=t, initial=0.0)


def weak_residual(traj, phi, dphi, window, lip=None, sparse_fraction=0.1):
    """Residual of the weak form against ``phi`` averaged over ``window``.

    Returns ``(residual, bound)`` with ``bound = lip / (N eps^2)``.  Time
    integrals use Simpson's rule over the stored states inside the
    window (all accepted steps when the run recorded them).  If halving the
    number of states changes the time integral by more than
    ``sparse_fraction * bound * (t2 - t1)`` the states are too sparse and
    :class:`PreconditionError` is raised.
    """
    t1, t2 = window
    pool = traj.dense if traj.dense else traj.states
    states = [s for s in pool if t1 - 1e-12 <= s.time <= t2 + 1e-12]
    if len(states) < 3:
        raise PreconditionError("need at least three states inside the window")
    if lip is None:
        lip = phi.lipschitz
    bound = lip / (traj.N * traj.epsilon ** 2)
    ts = np.array([s.time for s in states])
    span = ts[-1] - ts[0]
    flux = np.array([weak_flux(s, dphi) for s in states])
    full = _cumulative(ts, flux)[-1]
    coarse_idx = np.unique(np.append(np.arange(0, ts.size, 2), ts.size - 1))
    coarse = _cumulative(ts[coarse_idx], flux[coarse_idx])[-1]
    if abs(full - coarse) > sparse_fraction * bound * span:
        raise PreconditionError("states too sparse for the time quadrature in this window")
    change = weak_pairing(states[-1], phi) - weak_pairing(states[0], phi)
    return abs(change + full) / span, bound


# -- bound report --------------------------------------------------------


@dataclass(frozen=True)
class CheckRecord:
    name: str
    time: float
    bound: float
    measured: float
    slack: float
    passed: bool
    kind: str = "upper"


@dataclass
class BoundReport:
    records: list = field(default_factory=list)

    def add(self, name, time, bound, measured, allowed=None, kind="upper"):
        """Record ``measured <= allowed`` (``kind='upper'``) or ``>=`` (``'lower'``).

        ``allowed`` defaults to ``bound``; ``slack`` is ``measured / bound``.
        """
        allowed = bound if allowed is None else allowed
        if kind == "upper":
            passed = measured <= allowed
        else:
            passed = measured >= allowed
        with np.errstate(divide="ignore", invalid="ignore"):
            slack = float(np.float64(measured) / np.float64(bound)) if bound != 0 else float("nan")
        self.records.append(
            CheckRecord(name, float(time), float(bound), float(measured), slack, bool(passed), kind)
        )

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    def failures(self):
        return [r for r in self.records if not r.passed]

    def names(self):
        return sorted({r.name for r in self.records})

    def by_name(self, name):
        return [r for r in self.records if r.name == name]

    def summary(self):
        out = {}
        for r in self.records:
            item = out.setdefault(r.name, {"checks": 0, "failed": 0, "worst_slack": None})
            item["checks"] += 1
            item["failed"] += int(not r.passed)
            if np.isfinite(r.slack):
                w = item["worst_slack"]
                worse = (w is None) or (r.slack > w if r.kind == "upper" else r.slack < w)
                if worse:
                    item["worst_slack"] = r.slack
        return out

    def to_json(self):
        return json.dumps([_jsonable(asdict(r)) for r in self.records], indent=1, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        cols = ["name", "time", "bound", "measured", "slack", "passed", "kind"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            row = asdict(r)
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not np.isfinite(v):
            out[k] = str(v)
        else:
            out[k] = v
    return out


LP_EXPONENTS = (2.0, 3.0, np.inf)
MONOTONE_SLACK = 1e-8
ENTROPY_IDENTITY_TOL = 1e-4
MASS_TOL = 1e-12


def _lp_floor(eps, p):
    e = 1.0 if np.isinf(p) else 1.0 - 1.0 / p
    return (2.0 * eps) ** -e


def _smoothing_bound(t, eps, p):
    e = 1.0 if np.isinf(p) else 1.0 - 1.0 / p
    return ((2.0 * eps) * -np.expm1(-t / (2.0 * eps ** 3))) ** -e


def _p_label(p):
    return "inf" if np.isinf(p) else str(int(p))


def bound_report(traj, initial_lp=None, tol=0.05, gap_slack=0.1, kappa=None):
    """Evaluate every proved inequality along a trajectory.

    Parameters
    ----------
    traj : Trajectory
    initial_lp : dict, optional
        ``{p: |rho(0)|_p}`` for the uniform-in-time Lp bound; defaults to
        the norms of the first stored state.
    tol : float
        Multiplicative slack for the Lp, smoothing and dissipation bounds.
    gap_slack : float
        Allowed relative undershoot of the gap lower bound.
    kappa : float, optional
        Constant of the energy inequality slack ``kappa t / (N eps^3)``;
        defaults to ``4 |rho(0)|_inf``.

    Time integrals use Simpson's rule over every accepted step when the
    run kept them (``record_steps=True``), otherwise over the snapshots.
    The entropy identity is integrated from the first snapshot after the
    initial time, where the production is still near its initial blow-up.
    """
    rep = BoundReport()
    eps, N = traj.epsilon, traj.N
    s0 = traj.states[0]
    t0 = s0.time
    if initial_lp is None:
        initial_lp = {p: lp_norm(s0, p) for p in LP_EXPONENTS}
    if kappa is None:
        kappa = 4.0 * lp_norm(s0, np.inf)
    d0 = s0.gaps

    fine = traj.dense if traj.dense else traj.states
    tf = np.array([s.time for s in fine])
    prod = np.array([entropy_production(s) for s in fine])
    diss = np.array([dissipation(s) for s in fine])
    vel2 = np.array([velocity_l2_sq(s) for s in fine])
    absv = np.array([abs_velocity_mass(s) for s in fine])
    I_prod = _cumulative(tf, prod)
    I_diss = _cumulative(tf, diss)
    I_vel2 = _cumulative(tf, vel2)
    I_absv = _cumulative(tf, absv)
    I_prod_late = None
    if len(traj.states) > 1:
        j1 = int(np.argmin(np.abs(tf - traj.states[1].time)))
        I_prod_late = np.full_like(tf, np.nan)
        I_prod_late[j1:] = _cumulative(tf[j1:], prod[j1:])

    def at(arr, t):
        i = int(np.argmin(np.abs(tf - t)))
        return arr[i]

    E0 = interaction_energy(s0)
    M0 = moment(s0, "1_abs")
    prev = None
    first_positive = None
    for k, s in enumerate(traj.states):
        t = s.time
        dt = t - t0
        rho = reconstruct_density(s)
        rep.add("mass", t, MASS_TOL, abs(rho.mass - 1.0))
        ratio = float(np.min(s.gaps / gap_lower_bound(dt, d0, eps, N)))
        rep.add("gap_lower_bound", t, 1.0, ratio, allowed=1.0 - gap_slack, kind="lower")
        norms = {p: lp_norm(rho, p) for p in LP_EXPONENTS}
        for p in LP_EXPONENTS:
            lab = _p_label(p)
            b = max(initial_lp[p], _lp_floor(eps, p))
            rep.add(f"lp_bound_{lab}", t, b, norms[p], allowed=b * (1 + tol))
            if dt > 0:
                b = _smoothing_bound(dt, eps, p)
                rep.add(f"smoothing_{lab}", t, b, norms[p], allowed=b * (1 + tol))
        H = entropy(rho)
        prod_t = at(prod, t)
        rep.add("entropy_production_sign", t, 0.0, prod_t, allowed=1e-10)
        if prev is not None:
            for p in LP_EXPONENTS:
                lab = _p_label(p)
                rep.add(
                    f"lp_monotone_{lab}", t, prev["norms"][p], norms[p],
                    allowed=prev["norms"][p] + MONOTONE_SLACK,
                )
            if np.isfinite(prev["H"]):
                rep.add("entropy_decay", t, prev["H"], H, allowed=prev["H"] + MONOTONE_SLACK)
        if dt > 0 and first_positive is None:
            first_positive = H
        elif first_positive is not None:
            err = abs((H - first_positive) - at(I_prod_late, t))
            rep.add("entropy_identity", t, ENTROPY_IDENTITY_TOL, err)
        if dt > 0:
            E = interaction_energy(s)
            lhs = E + at(I_diss, t)
            b = E0 + kappa * dt / (N * eps ** 3)
            rep.add("energy_inequality", t, b, lhs)
            b = M0 + at(I_absv, t) + dt / (N * eps ** 2)
            rep.add("first_moment", t, b, moment(rho, "1_abs"))
            b = -at(I_prod, t)
            rep.add("dissipation_bound", t, b, at(I_vel2, t), allowed=b * (1 + tol))
        prev = {"norms": norms, "H": H}
    if traj.steps.min_gap_ratio:
        rep.add(
            "gap_lower_bound_steps", traj.states[-1].time, 1.0,
            float(np.min(traj.steps.min_gap_ratio)), allowed=1.0 - gap_slack, kind="lower",
        )
    return rep
