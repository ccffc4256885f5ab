"""Particle system ``x_i' = -(w' * rho_N)(x_i)`` and its time integration.

``N + 1`` ordered particles ``x_0 <= ... <= x_N`` bound ``N`` cells of mass
``1/N`` each; ``rho_N`` is the piecewise-constant density with value
``1 / (N d_i)`` on the cell of width ``d_i = x_{i+1} - x_i``.

The integrator advances the leftmost position together with the gaps
``d_i``, rather than the positions themselves.  The gap equations can be
written without forming position differences, so gaps far below the
rounding level of the positions (right after splitting a cluster) are
still resolved to full relative precision.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import _scan
from .errors import IntegrationError, PreconditionError
from .kernel import Kernel, conv_density


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    time: float = 0.0
    epsilon: float = 1.0

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise PreconditionError("need at least two particles")
        if not np.all(np.isfinite(x)):
            raise PreconditionError("positions must be finite")
        if np.any(np.diff(x) < 0):
            raise PreconditionError("positions must be nondecreasing")
        if not self.epsilon > 0:
            raise PreconditionError("epsilon must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def N(self):
        """Number of cells (one less than the number of particles)."""
        return self.positions.size - 1

    @property
    def gaps(self):
        return np.diff(self.positions)

    @property
    def is_strict(self):
        return bool(np.all(self.gaps > 0))

    def require_strict(self):
        if not self.is_strict:
            raise PreconditionError("coincident particles; call detach_overlaps first")


def _strict_gaps(s):
    s.require_strict()
    return s.gaps


def rhs_difference_quotient(s):
    """Velocities from the difference-quotient form of the scheme.

    ``x_i' = (1/N) sum_k [w(x_{k+1} - x_i) - w(x_k - x_i)] / d_k``.  Cells to
    the left and right of ``x_i`` are summed by two exponential scans with
    per-cell weights ``(1 - exp(-d_k/eps)) / d_k``.
    """
    d = _strict_gaps(s)
    eps, n = s.epsilon, s.N
    c = -np.expm1(-d / eps) / d
    left = _scan.exp_scan_left(d, c, eps)
    right = _scan.exp_scan_right(d, c, eps)
    return (left - right) / (2.0 * eps * n)


def rhs_convolution(s):
    """Velocities ``-(w' * rho_N)(x_i)`` via the reconstructed density."""
    from .diagnostics import reconstruct_density

    rho = reconstruct_density(s)
    return -conv_density(Kernel(s.epsilon), rho, s.positions, order=1)


def default_eta(s):
    d = s.gaps
    pos = d[d > 0]
    scale = 2.0 * s.epsilon / s.N
    if pos.size:
        scale = min(scale, float(pos.min()))
    return scale * 2.0 ** -20


def detach_overlaps(s, eta=None):
    """Split every cluster of coincident particles, keeping its mean.

    A cluster of ``k`` particles at ``a`` becomes ``a + (j - (k-1)/2) h`` for
    ``j = 0..k-1`` with ``h = min(eta, g/2) / (k-1)``, where ``g`` is the
    smallest positive gap from ``a`` to a neighbouring particle.  Strict input
    is returned unchanged.
    """
    if s.is_strict:
        return s
    if eta is None:
        eta = default_eta(s)
    if not eta > 0:
        raise PreconditionError("eta must be positive")
    x = np.array(s.positions)
    n = x.size
    out = x.copy()
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[j + 1] == x[i]:
            j += 1
        k = j - i + 1
        if k > 1:
            gaps = []
            if i > 0:
                gaps.append(x[i] - x[i - 1])
            if j + 1 < n:
                gaps.append(x[j + 1] - x[i])
            width = min([eta] + [0.5 * g for g in gaps])
            h = width / (k - 1)
            out[i : j + 1] = x[i] + (np.arange(k) - 0.5 * (k - 1)) * h
        i = j + 1
    if np.any(np.diff(out) <= 0):
        raise PreconditionError("eta too small to separate clusters in floating point")
    return replace(s, positions=out)


def gap_lower_bound(t, d0, eps, N):
    """``d0 exp(-t/(2 eps^3)) + (2 eps/N)(1 - exp(-t/(2 eps^3)))``."""
    decay = np.exp(-np.asarray(t, dtype=float) / (2.0 * eps ** 3))
    out = np.asarray(d0, dtype=float) * decay + (2.0 * eps / N) * (1.0 - decay)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Tolerances:
    rel: float = 1e-8
    abs: float = None
    gap_slack: float = 0.1
    dt_min: float = 1e-14
    max_step: float = np.inf

    def abs_for(self, eps):
        return 1e-10 * eps if self.abs is None else self.abs

    def to_dict(self):
        return {
            "rel": self.rel,
            "abs": self.abs,
            "gap_slack": self.gap_slack,
            "dt_min": self.dt_min,
            "max_step": None if not np.isfinite(self.max_step) else self.max_step,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        if data.get("max_step") is None:
            data.pop("max_step", None)
        unknown = set(data) - {"rel", "abs", "gap_slack", "dt_min", "max_step"}
        if unknown:
            raise PreconditionError(f"unknown tolerance keys {sorted(unknown)}")
        return cls(**{k: (None if v is None else float(v)) for k, v in data.items()})


@dataclass
class StepLog:
    t: list = field(default_factory=list)
    h: list = field(default_factory=list)
    min_gap: list = field(default_factory=list)
    min_gap_ratio: list = field(default_factory=list)


@dataclass
class Trajectory:
    """Snapshots of one run.  ``states[0]`` is the (detached) initial state."""

    times: np.ndarray
    states: list
    epsilon: float
    N: int
    steps: StepLog
    accepted: int = 0
    rejected: int = 0
    detached: bool = False
    eta: float = 0.0
    dense: list = None

    @property
    def positions(self):
        return np.vstack([s.positions for s in self.states])

    @property
    def initial(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4
# 4th-order continuous extension: y(t + th h) = y + h sum_i K_i (P_i . [th, th^2, th^3, th^4])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


def _field(y, eps, n):
    v0, dd = _scan.gap_field(y[1:], eps, n)
    out = np.empty_like(y)
    out[0] = v0
    out[1:] = dd
    return out


def _positions(y):
    return y[0] + np.concatenate(([0.0], np.cumsum(y[1:])))


def _error_norm(y, y_new, err, rtol, atol):
    # positions: absolute + relative control; gaps: relative control
    x_err = err[0] + np.concatenate(([0.0], np.cumsum(err[1:])))
    x_scale = atol + rtol * np.maximum(np.abs(_positions(y)), np.abs(_positions(y_new)))
    d_scale = rtol * np.maximum(np.abs(y[1:]), np.abs(y_new[1:]))
    return max(np.max(np.abs(x_err) / x_scale), np.max(np.abs(err[1:]) / d_scale))


def _interpolate(y, h, K, theta):
    w = _P @ (theta ** np.arange(1, 5))
    return y + h * sum(wi * k for wi, k in zip(w, K) if wi != 0.0)


def integrate(s, t_end, tol=None, snapshots=None, eta=None, record_steps=False, dense_points=7):
    """Adaptive Dormand-Prince 5(4) integration with ordering safeguards.

    Parameters
    ----------
    s : ParticleState
        Initial state; coincident particles are split by
        :func:`detach_overlaps` first.
    t_end : float
        Final time, ``> s.time``.
    tol : Tolerances, optional
    snapshots : sequence of float, optional
        Output times in ``(s.time, t_end]``; defaults to 100 equally spaced
        times.  ``t_end`` is always included.
    eta : float, optional
        Detachment size, see :func:`detach_overlaps`.
    record_steps : bool
        Keep the state after every accepted step in ``Trajectory.dense``.
    dense_points : int
        With ``record_steps``, also keep this many equally spaced interior
        states per step from the continuous extension, so that time
        integrals of diagnostics are resolved below the step size.

    A step is rejected (and retried with half the size) when a gap becomes
    nonpositive or falls below ``(1 - gap_slack)`` times
    :func:`gap_lower_bound` measured from the detached initial gaps.
    """
    tol = tol or Tolerances()
    t0 = s.time
    t_end = float(t_end)
    if not t_end > t0:
        raise PreconditionError("t_end must exceed the initial time")
    if snapshots is None:
        snapshots = t0 + (t_end - t0) * np.arange(1, 101) / 100.0
    snaps = np.unique(np.append(np.asarray(snapshots, dtype=float), t_end))
    if snaps[0] <= t0 or snaps[-1] > t_end:
        raise PreconditionError("snapshot times must lie in (t0, t_end]")
    detached = not s.is_strict
    if detached:
        eta = default_eta(s) if eta is None else eta
        s = detach_overlaps(s, eta)
    eps, n = s.epsilon, s.N
    rtol, atol = tol.rel, tol.abs_for(eps)
    d0 = s.gaps.copy()
    y = np.concatenate(([s.positions[0]], d0))
    steps = StepLog()
    states = [s]
    dense = [s] if record_steps else None
    t = t0
    h = min(eps ** 3, 0.01 * (t_end - t0), tol.max_step)
    k1 = _field(y, eps, n)
    accepted = rejected = 0
    next_snap = 0
    while next_snap < snaps.size:
        target = snaps[next_snap]
        hit = t + h >= target * (1.0 - 1e-15) or target - (t + h) < 1e-14 * max(1.0, abs(target))
        if hit:
            h = target - t
        K = [k1]
        for i in range(1, 7):
            yi = y + h * sum(a * K[j] for j, a in enumerate(_A[i]) if a != 0.0)
            if i < 6 and np.any(yi[1:] <= 0):
                break
            K.append(_field(yi, eps, n))
        ok = len(K) == 7
        if ok:
            y_new = y + h * sum(b * K[j] for j, b in enumerate(_B) if b != 0.0)
            err = h * sum(e * K[j] for j, e in enumerate(_E))
            gaps = y_new[1:]
            ok = bool(np.all(np.isfinite(y_new)) and np.all(gaps > 0))
        if ok:
            bound = gap_lower_bound(t + h - t0, d0, eps, n)
            ratio = gaps / bound
            if np.min(ratio) < 1.0 - tol.gap_slack:
                ok = False
        if not ok:
            rejected += 1
            h *= 0.5
        else:
            en = _error_norm(y, y_new, err, rtol, atol)
            if en <= 1.0:
                t_old, y_old = t, y
                t = target if hit else t + h
                y = y_new
                k1 = K[6]
                accepted += 1
                steps.t.append(t)
                steps.h.append(h)
                steps.min_gap.append(float(np.min(gaps)))
                steps.min_gap_ratio.append(float(np.min(ratio)))
                if record_steps:
                    for th in np.arange(1, dense_points + 1) / (dense_points + 1):
                        yi = _interpolate(y_old, h, K, th)
                        if np.all(yi[1:] > 0):
                            dense.append(ParticleState(_positions(yi), t_old + th * h, eps))
                if record_steps or hit:
                    st = ParticleState(_positions(y), t, eps)
                    if record_steps:
                        dense.append(st)
                    if hit:
                        states.append(st)
                        next_snap += 1
                factor = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            else:
                rejected += 1
                factor = max(0.2, 0.9 * en ** -0.2)
            h = min(h * factor, tol.max_step)
        if h < tol.dt_min:
            raise IntegrationError(
                f"step size {h:.3g} fell below dt_min at t={t:.17g}",
                state=ParticleState(_positions(y), t, eps),
            )
    return Trajectory(
        times=np.array([st.time for st in states]),
        states=states,
        epsilon=eps,
        N=n,
        steps=steps,
        accepted=accepted,
        rejected=rejected,
        detached=detached,
        eta=float(eta) if detached else 0.0,
        dense=dense,
    )
