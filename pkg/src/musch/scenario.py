"""Scenario files: loading, validation and parameter sweeps.

A scenario is a TOML document::

    name = "fault_free_n13"
    seed = 42

    [protocol]          # ProtocolConfig fields; n defaults to 3*f_prime+1
    f_prime = 4

    [clients]
    count = 2
    txns = 5            # per client, submitted every `interval` ticks from `start`
    start = 5
    interval = 20

    [stop]
    target_height = 20
    max_ticks = 1000000

    [network]
    pre_gst_max = 100   # delay bound before GST (default 10T)
    pre_gst_drop = 0.0

    [[adversary]]
    node = 1
    strategy = "silent_primary"
    params = { after_seq = 1 }

    [checks]
    enforce = ["client_bound", "epoch_bound"]

Unknown keys anywhere are rejected with the offending path.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .adversary import STRATEGIES
from .types import ConfigError, ProtocolConfig

DEFAULT_CHECKS = ("client_bound",)
OPTIONAL_CHECKS = ("client_bound", "epoch_bound", "view_change_bound", "critical_path")

_SECTIONS = {
    "": {"name", "seed", "protocol", "clients", "stop", "network", "adversary", "checks", "sweep"},
    "protocol": {f.name for f in dataclasses.fields(ProtocolConfig)},
    "clients": {"count", "txns", "start", "interval", "schedule"},
    "stop": {"target_height", "max_ticks"},
    "network": {"pre_gst_max", "pre_gst_drop"},
    "adversary": {"node", "strategy", "params"},
    "checks": {"enforce"},
    "sweep": {"n", "f"},
}


@dataclass
class Scenario:
    cfg: ProtocolConfig
    seed: int = 0
    name: str = "scenario"
    clients: int = 1
    txns: int = 1
    start: int = 5
    interval: int = 20
    explicit_schedule: Optional[list] = None
    target_height: int = 10
    max_ticks: int = 1_000_000
    pre_gst_max: Optional[int] = None
    pre_gst_drop: float = 0.0
    adversary: list = field(default_factory=list)
    checks: tuple = DEFAULT_CHECKS
    sweep: Optional[dict] = None

    def __post_init__(self):
        if self.pre_gst_max is None:
            self.pre_gst_max = 10 * self.cfg.T
        self.validate()

    # -- derived
    @property
    def total_txns(self) -> int:
        return sum(len(s) for s in self.schedule())

    @property
    def corrupted(self) -> set:
        return {a["node"] for a in self.adversary}

    def schedule(self) -> list[list[int]]:
        if self.explicit_schedule is not None:
            return [list(s) for s in self.explicit_schedule]
        return [[self.start + k * self.interval for k in range(self.txns)] for _ in range(self.clients)]

    # -- validation
    def validate(self) -> None:
        cfg = self.cfg
        if self.clients < 0:
            raise ConfigError("clients.count", "must be non-negative")
        if self.txns < 0:
            raise ConfigError("clients.txns", "must be non-negative")
        if self.interval <= 0:
            raise ConfigError("clients.interval", "must be positive")
        if self.target_height < 0:
            raise ConfigError("stop.target_height", "must be non-negative")
        if self.max_ticks <= 0:
            raise ConfigError("stop.max_ticks", "must be positive")
        if not 0.0 <= self.pre_gst_drop < 1.0:
            raise ConfigError("network.pre_gst_drop", "must be in [0, 1)")
        if self.pre_gst_max < 1:
            raise ConfigError("network.pre_gst_max", "must be positive")
        sched = self.schedule()
        if self.explicit_schedule is not None and len(sched) != self.clients:
            raise ConfigError("clients.schedule", f"needs one list per client ({self.clients})")
        for i, ticks in enumerate(sched):
            for t in ticks:
                if not isinstance(t, int) or not 0 <= t <= self.max_ticks:
                    raise ConfigError("clients.schedule", f"client {i + 1}: tick {t!r} outside 0..max_ticks")
        nodes = []
        for i, a in enumerate(self.adversary):
            where = f"adversary[{i}]"
            node = a.get("node")
            if not isinstance(node, int) or node not in cfg.replica_ids:
                raise ConfigError(f"{where}.node", f"must be a replica id in 1..{cfg.n}")
            if a.get("strategy") not in STRATEGIES:
                raise ConfigError(f"{where}.strategy",
                                  f"unknown strategy {a.get('strategy')!r}; one of {sorted(STRATEGIES)}")
            params = a.get("params") or {}
            allowed = {f.name for f in dataclasses.fields(STRATEGIES[a["strategy"]])
                       if not f.name.startswith("_")}
            for k in params:
                if k not in allowed:
                    raise ConfigError(f"{where}.params.{k}", f"unknown parameter; allowed {sorted(allowed)}")
            for v in params.get("victims", ()):
                if v not in cfg.replica_ids:
                    raise ConfigError(f"{where}.params.victims", f"{v!r} is not a replica id")
            if len(params.get("victims", ())) > cfg.f_prime:
                raise ConfigError(f"{where}.params.victims", "at most f_prime victims")
            nodes.append(node)
        if len(set(nodes)) != len(nodes):
            raise ConfigError("adversary", "a node may carry only one strategy")
        if len(nodes) > cfg.f_prime:
            raise ConfigError("adversary", f"{len(nodes)} corrupted nodes exceed f_prime={cfg.f_prime}")
        for c in self.checks:
            if c not in OPTIONAL_CHECKS:
                raise ConfigError("checks.enforce", f"unknown check {c!r}; one of {list(OPTIONAL_CHECKS)}")

    # -- (de)serialisation
    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "seed": self.seed,
            "protocol": dataclasses.asdict(self.cfg),
            "clients": {"count": self.clients, "txns": self.txns, "start": self.start, "interval": self.interval},
            "stop": {"target_height": self.target_height, "max_ticks": self.max_ticks},
            "network": {"pre_gst_max": self.pre_gst_max, "pre_gst_drop": self.pre_gst_drop},
            "adversary": [_plain(a) for a in self.adversary],
            "checks": {"enforce": list(self.checks)},
        }
        if self.explicit_schedule is not None:
            d["clients"]["schedule"] = [list(s) for s in self.explicit_schedule]
        if self.sweep is not None:
            d["sweep"] = copy.deepcopy(self.sweep)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        _check_keys(d, "", _SECTIONS[""])
        prot = dict(d.get("protocol", {}))
        _check_keys(prot, "protocol", _SECTIONS["protocol"])
        if "f_prime" not in prot:
            raise ConfigError("protocol.f_prime", "required")
        prot.setdefault("n", 3 * prot["f_prime"] + 1)
        try:
            cfg = ProtocolConfig(**prot)
        except ConfigError as e:
            raise ConfigError(f"protocol.{e.field}", str(e).split(": ", 1)[1]) from None
        except TypeError as e:
            raise ConfigError("protocol", str(e)) from None
        clients = d.get("clients", {})
        _check_keys(clients, "clients", _SECTIONS["clients"])
        stop = d.get("stop", {})
        _check_keys(stop, "stop", _SECTIONS["stop"])
        net = d.get("network", {})
        _check_keys(net, "network", _SECTIONS["network"])
        adv = d.get("adversary", [])
        if not isinstance(adv, list):
            raise ConfigError("adversary", "must be an array of tables")
        for i, a in enumerate(adv):
            _check_keys(a, f"adversary[{i}]", _SECTIONS["adversary"])
        checks = d.get("checks", {})
        _check_keys(checks, "checks", _SECTIONS["checks"])
        sweep = d.get("sweep")
        if sweep is not None:
            _check_keys(sweep, "sweep", _SECTIONS["sweep"])
        kw = dict(
            cfg=cfg, seed=d.get("seed", 0), name=d.get("name", "scenario"),
            clients=clients.get("count", 1), txns=clients.get("txns", 1),
            start=clients.get("start", 5), interval=clients.get("interval", 20),
            explicit_schedule=clients.get("schedule"),
            target_height=stop.get("target_height", 10), max_ticks=stop.get("max_ticks", 1_000_000),
            pre_gst_max=net.get("pre_gst_max"), pre_gst_drop=net.get("pre_gst_drop", 0.0),
            adversary=[_plain(a) for a in adv], checks=tuple(checks.get("enforce", DEFAULT_CHECKS)),
            sweep=sweep,
        )
        for key, typ in (("seed", int), ("clients", int), ("txns", int), ("target_height", int),
                         ("max_ticks", int)):
            if not isinstance(kw[key], typ) or isinstance(kw[key], bool):
                raise ConfigError(key, f"must be an integer, got {kw[key]!r}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError("file", f"{path}: {e}") from None
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)

    def with_faults(self, n: int, f: int) -> "Scenario":
        """The withholding-attack variant of this scenario at size ``n`` with ``f`` corrupted nodes."""
        if (n - 1) % 3:
            raise ConfigError("sweep.n", f"n={n} is not of the form 3*f_prime+1")
        fp = (n - 1) // 3
        if not 0 <= f <= fp:
            raise ConfigError("sweep.f", f"f={f} outside 0..{fp} for n={n}")
        cfg = dataclasses.replace(self.cfg, n=n, f_prime=fp)
        adversary = []
        if f:
            victims = list(range(n - fp + 1, n + 1))
            adversary.append({"node": 1, "strategy": "selective_withhold", "params": {"victims": victims}})
            adversary += [{"node": r, "strategy": "faulty_window_node"} for r in range(2, f + 1)]
        return dataclasses.replace(self, cfg=cfg, adversary=adversary, explicit_schedule=None,
                                   name=f"{self.name}_n{n}_f{f}", sweep=None)


def _plain(a: dict) -> dict:
    out = {"node": a.get("node"), "strategy": a.get("strategy")}
    if a.get("params"):
        out["params"] = {k: (sorted(v) if isinstance(v, (set, frozenset, list, tuple)) else v)
                         for k, v in sorted(a["params"].items())}
    return out


def _check_keys(d, path: str, allowed: set) -> None:
    if not isinstance(d, dict):
        raise ConfigError(path or "scenario", "must be a table")
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise ConfigError(where, f"unknown key; allowed: {sorted(allowed)}")
