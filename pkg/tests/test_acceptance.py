"""Release gate: every check in the synthetic acceptance suite must pass.

The checks live in scriptdrift.selfcheck (shared with the `selfcheck` CLI
subcommand); this module runs the suite once and asserts each check, so a
failure names the broken property and its realized numbers.
"""

import time

import pytest

from scriptdrift import selfcheck

CRITERIA = [
    (1, "metric-oracles"),
    (2, "purity-formula"),
    (3, "style-recovery"),
    (4, "compositing-invariance"),
    (5, "evm-benchmark"),
    (6, "probability-contract"),
    (7, "testgen-factorial"),
    (8, "change-detection"),
    (9, "characterization"),
    (10, "involutions"),
    (11, "determinism"),
]

_CACHE = {}


def _suite():
    if not _CACHE:
        start = time.perf_counter()
        results = selfcheck.run_all()
        _CACHE["elapsed"] = time.perf_counter() - start
        _CACHE["results"] = {r.name: r for r in results}
    return _CACHE


@pytest.mark.parametrize(
    "number,name", CRITERIA, ids=[f"criterion-{n:02d}-{name}" for n, name in CRITERIA]
)
def test_criterion(number, name):
    res = _suite()["results"][name]
    line = f"{'PASS' if res.passed else 'FAIL'} criterion {number} ({name}): {res.detail}"
    print(line)
    assert res.passed, line


def test_every_criterion_is_covered():
    assert [name for _, name in CRITERIA] == [name for name, _ in selfcheck.ALL_CHECKS]


def test_suite_runtime_budget():
    elapsed = _suite()["elapsed"]
    print(f"selfcheck suite wall time: {elapsed:.1f} s (budget 300 s)")
    assert elapsed < 300.0
