"""Run configuration: JSON in, validated :class:`RunConfig` out.

A configuration is one JSON object::

    {
      "initial": {"preset": "uniform"},
      "N": 100,
      "epsilon": 0.3,                       # or "epsilon_rule": {"c": 1, "power": 0.25}
      "t_end": 0.5,
      "snapshots": 100,
      "tolerances": {"rel": 1e-8, "gap_slack": 0.1},
      "eta": null,
      "seed": 0,
      "N_list": [25, 50, 100, 200]
    }

``initial`` is either ``{"preset": name}`` (``dirac``, ``two_diracs``,
``uniform``, ``barenblatt`` with an extra ``"t0"``) or a measure given by
``{"density": {"breakpoints": [...], "values": [...]}, "atoms": [[x, w], ...]}``.
"""
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .dynamics import Tolerances
from .errors import ConfigError, MorseError
from .reference import BarenblattParams
from .transport import MeasureSpec, PiecewiseConstantDensity, atomize_lp, atomize_measure

PRESETS = ("dirac", "two_diracs", "uniform", "barenblatt")


def preset_measure(name):
    if name == "dirac":
        return MeasureSpec(atoms=((0.0, 1.0),))
    if name == "two_diracs":
        return MeasureSpec(atoms=((-1.0, 0.5), (1.0, 0.5)))
    if name == "uniform":
        return MeasureSpec(density=PiecewiseConstantDensity([-1.0, 1.0], [0.5]))
    raise ConfigError(f"preset {name!r} has no finite measure description")


@dataclass(frozen=True)
class EpsilonRule:
    """``eps_N = c * N**(-power)``."""

    c: float = 1.0
    power: float = 0.25

    def __call__(self, N):
        return self.c * float(N) ** (-self.power)

    def j3_sequence(self, N_list):
        """``1 / (N eps_N^3)`` for every ``N``."""
        return [1.0 / (N * self(N) ** 3) for N in N_list]

    def check_j3(self, N_list, rtol=1e-9):
        if not (self.c > 0 and self.power > 0):
            raise ConfigError("epsilon_rule needs c > 0 and power > 0 so that eps -> 0")
        seq = self.j3_sequence(sorted(N_list))
        for a, b in zip(seq, seq[1:]):
            if b > a * (1.0 + rtol):
                pretty = ", ".join(f"N={N}: {v:.6g}" for N, v in zip(sorted(N_list), seq))
                raise ConfigError(f"epsilon_rule makes 1/(N eps^3) grow: {pretty}")
        return seq


@dataclass(frozen=True)
class RunConfig:
    initial: dict
    N: int = None
    epsilon: float = None
    epsilon_rule: EpsilonRule = None
    t_end: float = 1.0
    snapshots: int = 100
    tolerances: Tolerances = field(default_factory=Tolerances)
    eta: float = None
    seed: int = 0
    N_list: tuple = None
    bound_tol: float = 0.05
    atomization: str = "measure"
    output_dir: str = None

    def __post_init__(self):
        if (self.epsilon is None) == (self.epsilon_rule is None):
            raise ConfigError("give exactly one of 'epsilon' and 'epsilon_rule'")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.N is not None and self.N < 2:
            raise ConfigError("N must be at least 2")
        if self.N_list is not None and any(n < 2 for n in self.N_list):
            raise ConfigError("every N in N_list must be at least 2")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.snapshots < 1:
            raise ConfigError("snapshots must be >= 1")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.atomization not in ("measure", "lp"):
            raise ConfigError("atomization must be 'measure' or 'lp'")
        _check_initial(self.initial)

    def epsilon_for(self, N):
        return self.epsilon if self.epsilon is not None else self.epsilon_rule(N)

    def require_N(self):
        if self.N is None:
            raise ConfigError("this command needs 'N'")
        return self.N

    def snapshot_times(self):
        return self.t_end * np.arange(1, self.snapshots + 1) / self.snapshots

    @property
    def barenblatt(self):
        if self.initial.get("preset") != "barenblatt":
            return None
        return BarenblattParams(float(self.initial.get("t0", 1.0)))

    def initial_positions(self, N):
        """Particle positions at time 0 for ``N`` cells."""
        b = self.barenblatt
        if b is not None:
            return b.positions(N)
        m = self.initial_measure()
        try:
            if self.atomization == "lp":
                if m.atoms:
                    raise ConfigError("'lp' atomization needs a density without atoms")
                return atomize_lp(m.density, N)
            return atomize_measure(m, N)
        except MorseError as exc:
            raise ConfigError(str(exc)) from exc

    def initial_measure(self):
        if "preset" in self.initial:
            return preset_measure(self.initial["preset"])
        return MeasureSpec.from_dict(self.initial)

    def to_dict(self):
        out = {
            "initial": self.initial,
            "t_end": self.t_end,
            "snapshots": self.snapshots,
            "tolerances": self.tolerances.to_dict(),
            "seed": self.seed,
            "bound_tol": self.bound_tol,
            "atomization": self.atomization,
        }
        if self.N is not None:
            out["N"] = self.N
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        else:
            out["epsilon_rule"] = {"c": self.epsilon_rule.c, "power": self.epsilon_rule.power}
        if self.eta is not None:
            out["eta"] = self.eta
        if self.N_list is not None:
            out["N_list"] = list(self.N_list)
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out


def _check_initial(initial):
    if not isinstance(initial, dict):
        raise ConfigError("'initial' must be an object")
    if "preset" in initial:
        extra = set(initial) - {"preset", "t0"}
        if extra:
            raise ConfigError(f"unexpected keys with a preset: {sorted(extra)}")
        if initial["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {initial['preset']!r}; choose from {PRESETS}")
        if initial["preset"] == "barenblatt":
            t0 = initial.get("t0", 1.0)
            if not (isinstance(t0, (int, float)) and t0 > 0):
                raise ConfigError("barenblatt preset needs t0 > 0")
        elif "t0" in initial:
            raise ConfigError("'t0' only applies to the barenblatt preset")
        return
    extra = set(initial) - {"density", "atoms"}
    if extra or not initial:
        raise ConfigError("initial data needs 'preset', or 'density' and/or 'atoms'")
    try:
        m = MeasureSpec.from_dict(initial)
        m.check_probability()
    except (MorseError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid initial measure: {exc}") from exc


_KEYS = {f.name for f in fields(RunConfig)}


def _num(data, key, kind, default=None):
    v = data.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{key}' must be a number")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(f"'{key}' must be an integer")
        return int(v)
    return float(v)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if "initial" not in data:
        raise ConfigError("missing 'initial'")
    rule = data.get("epsilon_rule")
    if rule is not None:
        if not isinstance(rule, dict) or set(rule) - {"c", "power"}:
            raise ConfigError("epsilon_rule must be {'c': ..., 'power': ...}")
        rule = EpsilonRule(_num(rule, "c", float, 1.0), _num(rule, "power", float, 0.25))
    N_list = data.get("N_list")
    if N_list is not None:
        if not isinstance(N_list, list) or not N_list:
            raise ConfigError("'N_list' must be a non-empty list")
        N_list = tuple(_num({"N": n}, "N", int) for n in N_list)
    try:
        tol = Tolerances.from_dict(data.get("tolerances"))
    except (MorseError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid tolerances: {exc}") from exc
    return RunConfig(
        initial=data["initial"],
        N=_num(data, "N", int),
        epsilon=_num(data, "epsilon", float),
        epsilon_rule=rule,
        t_end=_num(data, "t_end", float, 1.0),
        snapshots=_num(data, "snapshots", int, 100),
        tolerances=tol,
        eta=_num(data, "eta", float),
        seed=_num(data, "seed", int, 0),
        N_list=N_list,
        bound_tol=_num(data, "bound_tol", float, 0.05),
        atomization=data.get("atomization", "measure"),
        output_dir=data.get("output_dir"),
    )


def parse_config(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return config_from_dict(data)


def serialize_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


# One-command reproductions of the acceptance experiments
EXPERIMENTS = {
    "smoothing": {
        "initial": {"preset": "dirac"},
        "N": 50,
        "epsilon": 0.2,
        "t_end": 1.0,
    },
    "converge_uniform": {
        "initial": {"preset": "uniform"},
        "epsilon": 0.3,
        "t_end": 0.5,
        "N_list": [25, 50, 100, 200],
    },
    "converge_two_diracs": {
        "initial": {"preset": "two_diracs"},
        "epsilon": 0.3,
        "t_end": 0.5,
        "N_list": [25, 50, 100, 200],
    },
    "joint_limit": {
        "initial": {"preset": "barenblatt", "t0": 1.0},
        "epsilon_rule": {"c": 1.0, "power": 0.25},
        "t_end": 0.5,
        "N_list": [50, 100, 200, 400],
    },
}


def experiment_config(name):
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    return config_from_dict(EXPERIMENTS[name])
