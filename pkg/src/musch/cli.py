"""Command-line entry point: ``musch run|sweep|replay|verify``."""

from __future__ import annotations

import argparse
import os
import sys

from .scenario import Scenario
from .simnet import Trace, conservation_from_trace, run, safety_monitor
from .sweep import SweepError, compare_f0_models, report, sweep
from .types import ConfigError


def _out_path(args, name: str, suffix: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, f"{name}.{suffix}")


def _load(args) -> Scenario:
    sc = Scenario.load(args.scenario)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.max_ticks is not None:
        over["max_ticks"] = args.max_ticks
    return sc.with_overrides(**over) if over else sc


def cmd_run(args) -> int:
    sc = _load(args)
    res = run(sc)
    trace_path = _out_path(args, sc.name, "trace")
    res.trace.write(trace_path)
    text = res.report()
    with open(_out_path(args, sc.name, "report"), "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write(ledger_table(res))
    sys.stdout.write(text)
    print(f"trace: {trace_path}")
    return 0 if res.ok() else 1


def ledger_table(res) -> str:
    lines = ["", "bucket\teffective\tineffective"]
    for b in sorted(res.ledger.buckets, key=lambda b: (b[0], str(b[1]))):
        lines.append(f"{b[0]}:{b[1]}\t{res.ledger.total(b, True)}\t{res.ledger.total(b, False)}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    sc = _load(args)
    ns = args.n or (sc.sweep or {}).get("n") or [sc.cfg.n]
    fs = args.f or (sc.sweep or {}).get("f") or [0]
    try:
        points = sweep(sc, ns, fs)
    except SweepError as e:
        print(f"sweep aborted: {e}", file=sys.stderr)
        return 1
    text = report(points)
    with open(_out_path(args, sc.name, "sweep"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    ok = all(p.worst <= p.bound and p.ratio <= 5 for p in points)
    if sum(1 for p in points if p.f == 0) >= 3:
        m = compare_f0_models(points)
        ok = ok and m["linear"][1] <= m["quadratic"][1]
    return 0 if ok else 1


def cmd_replay(args) -> int:
    original = Trace.read(args.trace)
    sc = Scenario.from_dict(original.header)
    res = run(sc)
    same = res.trace.text() == _read(args.trace)
    text = res.report()
    sys.stdout.write(text)
    print("trace identical" if same else "trace DIFFERS")
    return 0 if same and res.ok() else 1


def cmd_verify(args) -> int:
    t = Trace.read(args.trace)
    verdicts = [safety_monitor(t), conservation_from_trace(t)]
    for v in verdicts:
        print(v.line())
    return 0 if all(v.ok for v in verdicts) else 1


def _read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="musch", description="Run and check BFT protocol simulations.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--out-dir", default="out", help="where traces and reports go")
        sp.add_argument("--max-ticks", type=int, default=None, help="override the tick cap")

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="withholding-attack complexity sweep")
    s.add_argument("scenario")
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--f", type=int, nargs="+")
    common(s)
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("replay", help="re-run a trace's scenario and diff")
    rp.add_argument("trace")
    common(rp)
    rp.set_defaults(func=cmd_replay)

    v = sub.add_parser("verify", help="re-check a trace file")
    v.add_argument("trace")
    common(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
