"""Seeded randomized scenario suites.

A suite file describes a family of runs rather than a single one::

    name = "safety_suite"
    runs = 200
    first_seed = 0
    n = [4, 7, 13, 31]
    gst = [0, 50, 100]
    pre_gst_drop = [0.0, 0.1]
    max_ticks = 20000

Run ``seed`` of the suite is a pure function of the file and the seed.  The
strategy of the first corrupted node cycles through every registered
strategy so any 9 consecutive seeds cover them all.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .adversary import STRATEGIES
from .scenario import Scenario, _check_keys, tomllib
from .types import ConfigError, ProtocolConfig

_KEYS = {"name", "runs", "first_seed", "n", "gst", "pre_gst_drop", "max_ticks"}
STRATEGY_ORDER = tuple(sorted(STRATEGIES))


@dataclass(frozen=True)
class Suite:
    name: str = "suite"
    runs: int = 200
    first_seed: int = 0
    n: tuple = (4, 7, 13, 31)
    gst: tuple = (0, 50, 100)
    pre_gst_drop: tuple = (0.0, 0.1)
    max_ticks: int = 20000

    def __post_init__(self):
        if self.runs <= 0:
            raise ConfigError("runs", "must be positive")
        for n in self.n:
            if n < 4 or (n - 1) % 3:
                raise ConfigError("n", f"n={n} is not of the form 3*f_prime+1 with f_prime >= 1")
        if not self.n or not self.gst or not self.pre_gst_drop:
            raise ConfigError("suite", "n, gst and pre_gst_drop must be non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "Suite":
        _check_keys(d, "", _KEYS)
        kw = dict(d)
        for k in ("n", "gst", "pre_gst_drop"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "Suite":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    @property
    def seeds(self) -> range:
        return range(self.first_seed, self.first_seed + self.runs)

    def scenario(self, seed: int) -> Scenario:
        rng = random.Random(f"{self.name}:{seed}")
        n = rng.choice(self.n)
        fp = (n - 1) // 3
        f = rng.randint(1, fp) if seed % 5 else 0
        nodes = rng.sample(range(1, n + 1), f)
        adversary = []
        for i, node in enumerate(nodes):
            kind = STRATEGY_ORDER[seed % len(STRATEGY_ORDER)] if i == 0 else rng.choice(STRATEGY_ORDER)
            adversary.append({"node": node, "strategy": kind, "params": _params(kind, rng, n, fp)})
        cfg = ProtocolConfig.for_faults(fp, gst=rng.choice(self.gst), initial_view=rng.randrange(n))
        return Scenario(cfg=cfg, seed=seed, name=f"{self.name}_{seed}", clients=rng.randint(1, 3),
                        txns=rng.randint(1, 4), target_height=rng.randint(5, 12), adversary=adversary,
                        pre_gst_drop=rng.choice(self.pre_gst_drop), max_ticks=self.max_ticks)

    def __iter__(self):
        return (self.scenario(s) for s in self.seeds)


def _params(kind: str, rng: random.Random, n: int, fp: int) -> dict:
    if kind == "silent_primary":
        return {"after_seq": rng.randint(0, 5)}
    if kind == "selective_withhold":
        return {"victims": sorted(rng.sample(range(1, n + 1), rng.randint(1, fp)))}
    if kind == "crash_at":
        return {"time": rng.randint(0, 200)}
    return {}
