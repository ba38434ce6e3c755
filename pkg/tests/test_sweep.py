import numpy as np
import pytest
from hypothesis import given, strategies as st

from musch.scenario import Scenario
from musch.sweep import Point, compare_f0_models, fit_fn_n, lstsq_residual, measure, report, sweep
from musch.types import ProtocolConfig


def brute_ssr(X, y):
    # normal equations by hand rather than lstsq
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    coef = np.linalg.solve(X.T @ X, X.T @ y)
    r = y - X @ coef
    return float(r @ r)


@given(st.lists(st.floats(0, 1000), min_size=4, max_size=8))
def test_residual_matches_normal_equations(ys):
    X = [[i, 1.0] for i in range(len(ys))]
    _, ssr = lstsq_residual(X, ys)
    assert ssr == pytest.approx(brute_ssr(X, ys), abs=1e-6, rel=1e-6)


def test_exact_models_recovered():
    pts = [Point(n, f, 1, 3.0 * f * n + 2.0 * n + 1.0, 0) for n in (4, 7, 13) for f in (0, 1)]
    coef, ssr = fit_fn_n(pts)
    assert np.allclose(coef, [3, 2, 1]) and ssr < 1e-9
    m = compare_f0_models(pts)
    assert m["linear"][1] < 1e-9 < m["quadratic"][1]


def test_point_ratio_and_bound():
    p = Point(13, 2, 5, 78.0, 90)
    assert p.ratio == pytest.approx(2.0) and p.bound == 14 * 13


def test_small_sweep_within_bound():
    base = Scenario(cfg=ProtocolConfig.for_faults(1), clients=1, txns=2, target_height=8, seed=7)
    pts = sweep(base, [4, 7], [0, 1, 2])
    assert [(p.n, p.f) for p in pts] == [(4, 0), (4, 1), (7, 0), (7, 1), (7, 2)]
    assert all(p.worst <= p.bound for p in pts)
    text = report(pts)
    assert "max messages/((f+1)n)" in text


def test_measure_fault_free_matches_recount():
    sc = Scenario(cfg=ProtocolConfig.for_faults(1), clients=1, txns=2, target_height=6, seed=3)
    p = measure(sc)
    # every complete fault-free epoch: Order to n-1, Response back from n-1, Commit via window
    assert p.worst <= 4 * p.n and p.f == 0
