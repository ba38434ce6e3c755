"""Per-epoch message counts under the withholding attack, against (5f+4)n.

    python demos/withholding_sweep.py          # n up to 31, a few seconds
    python demos/withholding_sweep.py --full   # adds n=100, about a minute
"""

import os
import sys

from musch.scenario import Scenario
from musch.sweep import report, sweep

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    base = Scenario.load(os.path.join(HERE, "..", "scenarios", "withhold_sweep.toml"))
    ns = base.sweep["n"] if "--full" in sys.argv else [n for n in base.sweep["n"] if n <= 31]
    print(report(sweep(base, ns, base.sweep["f"])), end="")


if __name__ == "__main__":
    main()
