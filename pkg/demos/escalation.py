"""Replica 10 is cut off by its primary and escalates through the windows.

With j-1 faulty tiers, the tier that answers is W_j and recovery must land
before t + 3jT + 6T.

    python demos/escalation.py
"""

import os

from musch.scenario import Scenario
from musch.simnet import run
from musch.windows import escalation_deadline, window_members

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    for j in (1, 2, 3):
        sc = Scenario.load(os.path.join(HERE, "..", "scenarios", f"escalation_w{j}.toml"))
        res = run(sc)
        cfg = sc.cfg
        print(f"[{j - 1} faulty tier(s)] deadlines "
              + ", ".join(f"W{i}@{escalation_deadline(i, cfg.T)}" for i in range(1, 4)))
        for tick, node, kind, detail in res.sim.notes:
            if node != 10:
                continue
            if kind == "escalate":
                tier = detail[0]
                who = "everyone" if tier == "all" else window_members(tier, cfg)
                print(f"  t={tick:4d}  complain to {who}")
            elif kind == "recovered":
                print(f"  t={tick:4d}  caught up to block {detail[0]}")
                break


if __name__ == "__main__":
    main()
