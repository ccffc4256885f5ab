import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morsepart.config import (
    EXPERIMENTS,
    EpsilonRule,
    config_from_dict,
    experiment_config,
    parse_config,
    serialize_config,
)
from morsepart.errors import ConfigError

BASE = {"initial": {"preset": "uniform"}, "N": 10, "epsilon": 0.3}


def with_(**kw):
    d = dict(BASE)
    d.update(kw)
    return d


@pytest.mark.parametrize(
    "bad",
    [
        with_(N=1),
        {"initial": {"preset": "uniform"}, "N": 10},
        with_(epsilon_rule={"c": 1.0, "power": 0.25}),
        with_(epsilon=-1.0),
        with_(t_end=0.0),
        with_(initial={"preset": "nope"}),
        with_(initial={"preset": "uniform", "t0": 1.0}),
        with_(initial={"atoms": [[0.0, 0.5]]}),
        with_(initial={"density": {"breakpoints": [0, 1], "values": [-1]}}),
        with_(N=2.5),
        with_(N=True),
        with_(colour="red"),
        with_(tolerances={"rel": 1e-8, "bogus": 1}),
        with_(N_list=[]),
        with_(atomization="other"),
    ],
)
def test_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_invalid_json():
    with pytest.raises(ConfigError):
        parse_config("{not json")


def test_round_trip():
    cfg = config_from_dict(
        with_(tolerances={"rel": 1e-9, "gap_slack": 0.2}, N_list=[10, 20], eta=1e-9,
              initial={"density": {"breakpoints": [0, 1, 3], "values": [0.5, 0.25]}, "atoms": [[5.0, 0.0]]})
    )
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_epsilon_rule_j3():
    ok = EpsilonRule(1.0, 0.25)
    seq = ok.check_j3([50, 100, 200, 400])
    np.testing.assert_allclose(seq, [N ** -0.25 for N in (50, 100, 200, 400)], rtol=1e-12)
    with pytest.raises(ConfigError, match="N=400"):
        EpsilonRule(1.0, 0.5).check_j3([50, 100, 200, 400])


@given(st.floats(0.1, 10), st.floats(0.01, 1 / 3))
def test_j3_bounded_for_small_powers(c, power):
    EpsilonRule(c, power).check_j3([10, 100, 1000, 10000])


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_experiments_parse(name):
    cfg = experiment_config(name)
    assert json.loads(serialize_config(cfg))


@pytest.mark.parametrize("preset, N, expected", [
    ("dirac", 4, [0, 0, 0, 0, 0]),
    ("two_diracs", 4, [-1, -1, -1, 1, 1]),
    ("uniform", 4, [-1, -0.5, 0, 0.5, 1]),
])
def test_preset_positions(preset, N, expected):
    cfg = config_from_dict(with_(initial={"preset": preset}, N=N))
    np.testing.assert_allclose(cfg.initial_positions(N), expected, atol=1e-15)


def test_lp_atomization_literal():
    cfg = config_from_dict(with_(atomization="lp", N=4))
    np.testing.assert_allclose(cfg.initial_positions(4), [-4, -0.5, 0, 0.5, 1], atol=1e-15)
    cfg = config_from_dict(with_(atomization="lp", initial={"preset": "dirac"}))
    with pytest.raises(ConfigError):
        cfg.initial_positions(4)


def test_snapshot_times():
    cfg = config_from_dict(with_(t_end=0.5, snapshots=4))
    np.testing.assert_allclose(cfg.snapshot_times(), [0.125, 0.25, 0.375, 0.5])
