"""A primary goes quiet after one block; watch the replicas replace it.

    python demos/silent_primary.py [n]
"""

import os
import sys

from musch.scenario import Scenario
from musch.simnet import run, view_change_bound

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 7
    sc = Scenario.load(os.path.join(HERE, "..", "scenarios", f"silent_primary_n{n}.toml"))
    res = run(sc)
    cfg = sc.cfg
    print(f"n={cfg.n} f'={cfg.f_prime} T={cfg.T}, primary {sc.adversary[0]['node']} stops after block 1")
    shown = set()
    for tick, node, kind, detail in res.sim.notes:
        if kind in ("recovering", "view_change", "new_view", "view_confirm") and (kind, node) not in shown:
            if kind == "recovering" and len([k for k, _ in shown if k == kind]) >= 3:
                continue
            shown.add((kind, node))
            print(f"  t={tick:4d}  replica {node:>2}  {kind} {detail}")
    counts = res.view_change_counts()
    for v, e in res.view_changes():
        bound = view_change_bound(res.f, cfg.n, e, cfg.f_prime)
        print(f"view {v}: {counts.get(v, 0)} effective messages, bound fn+3n+6ef' = {bound}")
    print(res.report(), end="")


if __name__ == "__main__":
    main()
