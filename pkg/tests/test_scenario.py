import glob
import os

import pytest

from musch.scenario import Scenario
from musch.suite import Suite
from musch.types import ConfigError, ProtocolConfig

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCEN = os.path.join(ROOT, "scenarios")


def d(**over):
    base = {"name": "x", "seed": 1, "protocol": {"f_prime": 1}, "clients": {"count": 1, "txns": 1}}
    for k, v in over.items():
        base[k] = v
    return base


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(SCEN, "*.toml"))))
def test_checked_in_files_load(path):
    if path.endswith("safety_suite.toml"):
        assert Suite.load(path).runs >= 200
    else:
        assert Scenario.load(path).cfg.n >= 4


def test_roundtrip():
    sc = Scenario.load(os.path.join(SCEN, "escalation_w3.toml"))
    again = Scenario.from_dict(sc.to_dict())
    assert again == sc


def test_bad_n_names_constraint():
    with pytest.raises(ConfigError) as e:
        Scenario.from_dict(d(protocol={"f_prime": 4, "n": 12}))
    assert e.value.field == "protocol.n"
    assert "3*f_prime+1" in str(e.value)


@pytest.mark.parametrize("over,field", [
    ({"bogus": 1}, "bogus"),
    ({"clients": {"count": 1, "tx": 2}}, "clients.tx"),
    ({"protocol": {"f_prime": 1, "delta": 3}}, "protocol.delta"),
    ({"adversary": [{"node": 1, "strategy": "silent_primary", "params": {"after": 1}}]},
     "adversary[0].params.after"),
    ({"adversary": [{"node": 9, "strategy": "silent_primary"}]}, "adversary[0].node"),
    ({"adversary": [{"node": 1, "strategy": "teleport"}]}, "adversary[0].strategy"),
    ({"adversary": [{"node": 1, "strategy": "crash_at"}, {"node": 2, "strategy": "crash_at"}]}, "adversary"),
    ({"checks": {"enforce": ["speed"]}}, "checks.enforce"),
    ({"network": {"pre_gst_drop": 1.5}}, "network.pre_gst_drop"),
    ({"clients": {"count": 2, "schedule": [[1]]}}, "clients.schedule"),
    ({"protocol": {}}, "protocol.f_prime"),
    ({"seed": "one"}, "seed"),
])
def test_field_level_errors(over, field):
    with pytest.raises(ConfigError) as e:
        Scenario.from_dict(d(**over))
    assert e.value.field == field


def test_schedule_and_totals():
    sc = Scenario(cfg=ProtocolConfig.for_faults(1), clients=2, txns=3, start=5, interval=10)
    assert sc.schedule() == [[5, 15, 25]] * 2 and sc.total_txns == 6


def test_with_faults_layout():
    sc = Scenario(cfg=ProtocolConfig.for_faults(1)).with_faults(13, 3)
    assert sc.cfg.n == 13 and sc.cfg.f_prime == 4
    assert sc.adversary[0] == {"node": 1, "strategy": "selective_withhold", "params": {"victims": [10, 11, 12, 13]}}
    assert [a["node"] for a in sc.adversary[1:]] == [2, 3]
    with pytest.raises(ConfigError):
        sc.with_faults(12, 0)
    with pytest.raises(ConfigError):
        sc.with_faults(4, 2)


def test_suite_is_deterministic_and_covers_strategies():
    s = Suite(runs=18)
    a = [sc.to_dict() for sc in s]
    assert a == [sc.to_dict() for sc in s]
    kinds = {x["adversary"][0]["strategy"] for x in a if x["adversary"]}
    assert len(kinds) >= 8
    with pytest.raises(ConfigError):
        Suite(n=(5,))
    with pytest.raises(ConfigError):
        Suite.from_dict({"runz": 3})
