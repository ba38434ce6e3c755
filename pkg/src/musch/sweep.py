"""Message-complexity sweeps over (n, f) and least-squares model fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simnet import run


class SweepError(RuntimeError):
    pass


@dataclass
class Point:
    n: int
    f: int
    epochs: int
    mean: float  # effective replica-replica messages per complete epoch
    worst: int

    @property
    def ratio(self) -> float:
        return self.mean / ((self.f + 1) * self.n)

    @property
    def bound(self) -> int:
        return (5 * self.f + 4) * self.n


def measure(scenario) -> Point:
    res = run(scenario)
    bad = [v for v in res.verdicts() if v.name in ("safety", "liveness", "validity") and not v.ok]
    if bad:
        raise SweepError(f"{scenario.name}: " + "; ".join(v.line() for v in bad))
    epochs = res.complete_epochs()
    counts = [res.ledger.effective(("epoch", e)) for e in epochs]
    if not counts:
        raise SweepError(f"{scenario.name}: no complete epochs")
    return Point(scenario.cfg.n, res.f, len(counts), float(np.mean(counts)), max(counts))


def sweep(base, ns, fs) -> list[Point]:
    """Run the withholding variant of ``base`` for every valid (n, f) pair."""
    points = []
    for n in ns:
        for f in fs:
            if f > (n - 1) // 3:
                continue
            points.append(measure(base.with_faults(n, f)))
    return points


def lstsq_residual(X, y) -> tuple[np.ndarray, float]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def fit_fn_n(points) -> tuple[np.ndarray, float]:
    """Fit messages = a*f*n + b*n + c."""
    X = [[p.f * p.n, p.n, 1.0] for p in points]
    return lstsq_residual(X, [p.mean for p in points])


def compare_f0_models(points) -> dict:
    """Residuals of a*n + b against a*n^2 + b on the f = 0 points."""
    row = [p for p in points if p.f == 0]
    ns = [p.n for p in row]
    ys = [p.mean for p in row]
    lin, rl = lstsq_residual([[n, 1.0] for n in ns], ys)
    quad, rq = lstsq_residual([[n * n, 1.0] for n in ns], ys)
    return {"linear": (lin, rl), "quadratic": (quad, rq)}


def report(points) -> str:
    lines = ["n\tf\tepochs\tmean\tworst\tbound\tratio"]
    for p in points:
        lines.append(f"{p.n}\t{p.f}\t{p.epochs}\t{p.mean:.2f}\t{p.worst}\t{p.bound}\t{p.ratio:.3f}")
    if len(points) >= 3:
        coef, res = fit_fn_n(points)
        lines.append(f"fit: messages = {coef[0]:.3f}*f*n + {coef[1]:.3f}*n + {coef[2]:.3f} (ssr {res:.2f})")
    if sum(1 for p in points if p.f == 0) >= 3:
        m = compare_f0_models(points)
        lines.append(f"f=0 row: linear ssr {m['linear'][1]:.3f}, quadratic ssr {m['quadratic'][1]:.3f}")
    worst = max((p.ratio for p in points), default=0.0)
    lines.append(f"max messages/((f+1)n) = {worst:.3f} (bound 5)")
    return "\n".join(lines) + "\n"
