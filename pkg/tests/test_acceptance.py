"""Acceptance criteria 1-11, each run from its subcommand's default config at the stated tolerances.

Every test prints one "criterion N PASS|FAIL" line; the lines are collected again in
the terminal summary.  The slow criteria take most of an hour on one core.
"""
import pytest

from torusflow.runner import default_config
from torusflow.runner.cli import run_config
from torusflow.runner.parallel import worker_count

pytestmark = pytest.mark.slow


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def run_criterion(number, experiments, tmp_path, log):
    results = [run_config(default_config(exp), tmp_path / exp, worker_count()) for exp in experiments]
    passed = all(r.passed for r in results)
    parts = []
    for exp, res in zip(experiments, results):
        failed = [k for k, v in res.checks.items() if not v]
        metrics = res.summary.metrics if res.summary is not None else res.records[0].metrics
        shown = " ".join(f"{k}={_fmt(v)}" for k, v in metrics.items() if isinstance(v, (int, float)))
        parts.append(f"{exp}: {shown}" + (f" failed=[{', '.join(failed)}]" if failed else ""))
    line = f"criterion {number} {'PASS' if passed else 'FAIL'} " + " | ".join(parts)
    print(line)
    log.append(line)
    return results, passed


@pytest.mark.parametrize("number,experiments", [
    (1, ["commutator"]),
    (2, ["dt-identity"]),
    (3, ["evolve"]),
    (4, ["sample"]),
    (5, ["chaos-moments"]),
    (6, ["convolution"]),
    (7, ["partition"]),
    (8, ["varbound"]),
    (9, ["transport"]),
    (10, ["energy-check"]),
    (11, ["dispersionless", "lil"]),
])
def test_criterion(number, experiments, tmp_path, acceptance_log):
    results, passed = run_criterion(number, experiments, tmp_path, acceptance_log)
    if number == 7:
        # a sweep over N: one record per point plus the summary table
        assert len(results[0].records) == 4 and results[0].summary_path
    assert passed, acceptance_log[-1]
