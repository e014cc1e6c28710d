import time

import numpy as np
import pytest

from collab_topm.props import (
    SUITES,
    far_arm_holds,
    pivot_change_holds,
    run_all,
    run_suite,
    sandwich_case,
    sandwich_holds,
)


@pytest.mark.parametrize("name", sorted(SUITES))
def test_suite_has_no_violations(name):
    report = run_suite(name, cases=10_000, seed=1)
    assert report.cases == 10_000
    assert report.ok, report.examples


def test_run_all_is_fast():
    start = time.perf_counter()
    reports = run_all(cases=10_000, seed=5)
    assert all(r.ok for r in reports)
    assert time.perf_counter() - start < 30


def test_sandwich_case_respects_rank_condition():
    rng = np.random.default_rng(0)
    seen = 0
    while seen < 200:
        case = sandwich_case(rng)
        if case is None:
            continue
        seen += 1
        theta = np.array(case["theta"])
        sub = np.sort(theta[case["V"]])[::-1]
        ranked = np.sort(theta)[::-1]
        k, j = case["k"], case["j"]
        assert sub[k - 1] >= ranked[j - 1] >= ranked[j] >= sub[k]


def test_checkers_flag_broken_cases():
    case = sandwich_case(np.random.default_rng(3))
    while case is None:
        case = sandwich_case(np.random.default_rng(4))
    assert sandwich_holds(case)
    assert not sandwich_holds(dict(case, h_sub=case["mid"] * 2))
    assert not pivot_change_holds({"h": 1.0, "worst": 4.1})
    assert not far_arm_holds({"h": 1.0, "worst": 1.01})


def test_suite_reports_violations():
    broken = dict(SUITES)
    try:
        SUITES["never"] = (lambda rng, n_max: {}, lambda case: False)
        report = run_suite("never", cases=7, keep=3)
    finally:
        SUITES.clear()
        SUITES.update(broken)
    assert report.violations == 7 and len(report.examples) == 3 and not report.ok
