"""torusflow <subcommand> --config <path> [--seed S] [--out DIR]

Exit codes: 0 ok, 1 config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..flow import FlowAbort
from .config import ConfigError, RunConfig, default_config, dump_config, load_config
from .defaults import CRITERIA
from .experiments import EXPERIMENTS, SUMMARIES, NumericalFailure, Outcome
from .io import write_binary_field, write_csv, write_json
from .parallel import worker_count, worker_pool

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


@dataclass
class RunRecord:
    config_hash: str
    code_version: str
    experiment: str
    started: str
    finished: str
    outputs: list
    metrics: dict
    checks: dict
    passed: bool
    config: dict = field(default_factory=dict)


def _stamp():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def run_point(cfg: RunConfig, mapper, out: Path | None):
    """Run one config; returns (RunRecord, Outcome). Artifacts go to out/<experiment>-<hash>/."""
    h = cfg.hash
    started = _stamp()
    outcome: Outcome = EXPERIMENTS[cfg.experiment](cfg, mapper)
    outputs = []
    if out is not None:
        d = out / f"{cfg.experiment}-{h[:12]}"
        for name, (cols, rows) in outcome.tables.items():
            outputs.append(str(write_csv(d / f"{name}.csv", h, cols, rows)))
        if cfg.output.get("fields", False):
            for name, (f, s_tag) in outcome.fields.items():
                outputs.append(str(write_binary_field(d / f"{name}.tfld", h, f, s_tag)))
        if outcome.report:
            outputs.append(str(write_json(d / "report.json", h, outcome.report)))
    rec = RunRecord(h, __version__, cfg.experiment, started, _stamp(), outputs, outcome.metrics, outcome.checks,
                    outcome.passed, cfg.to_dict())
    if out is not None:
        path = d / "record.json"
        rec.outputs.append(str(path))
        write_json(path, h, {k: v for k, v in vars(rec).items() if k != "config_hash"})
    return rec, outcome


@dataclass
class SweepResult:
    records: list
    outcomes: list
    summary: Outcome | None
    summary_path: str | None

    @property
    def passed(self) -> bool:
        ok = all(o.passed for o in self.outcomes) if self.summary is None else self.summary.passed
        return bool(ok)

    @property
    def checks(self) -> dict:
        if self.summary is not None:
            return self.summary.checks
        merged = {}
        for o in self.outcomes:
            for k, v in o.checks.items():
                merged[k] = merged.get(k, True) and v
        return merged


def run_config(cfg: RunConfig, out: Path | None = None, workers: int | None = None) -> SweepResult:
    """Every sweep point plus the summary table (one row per point)."""
    points = cfg.points()
    recs, outs = [], []
    with worker_pool(workers) as mapper:
        for p in points:
            r, o = run_point(p, mapper, out)
            recs.append(r)
            outs.append(o)
    summary, spath = None, None
    if cfg.sweep:
        fn = SUMMARIES.get(cfg.experiment)
        summary = fn(cfg, list(zip(points, outs))) if fn else None
        keys = sorted({k for r in recs for k, v in r.metrics.items() if isinstance(v, (int, float, str))})
        cols = ["config_hash"] + list(cfg.sweep) + keys
        rows = []
        for p, r in zip(points, recs):
            vals = [p.measure[k.split(".", 1)[1]] if k.startswith("measure.") else p.params[k.split(".", 1)[1]]
                    for k in cfg.sweep]
            rows.append([r.config_hash] + vals + [r.metrics.get(k, "") for k in keys])
        if out is not None:
            base = out / f"{cfg.experiment}-{cfg.hash[:12]}-summary"
            spath = str(write_csv(base.with_suffix(".csv"), cfg.hash, cols, rows))
            if summary is not None:
                write_json(base.with_suffix(".json"), cfg.hash,
                           {"metrics": summary.metrics, "checks": summary.checks, "passed": summary.passed,
                            "points": [r.config_hash for r in recs]})
    return SweepResult(recs, outs, summary, spath)


def _snapshot(out: Path, cfg: RunConfig, pair) -> str:
    d = out / f"{cfg.experiment}-{cfg.hash[:12]}"
    write_binary_field(d / "abort_u.tfld", cfg.hash, pair.u, cfg.measure["s"])
    write_binary_field(d / "abort_v.tfld", cfg.hash, pair.v, cfg.measure["s"])
    return str(d / "abort_{u,v}.tfld")


def build_parser():
    ap = argparse.ArgumentParser(prog="torusflow", description="Truncated wave flow and Gaussian measure lab.")
    ap.add_argument("subcommand", choices=list(EXPERIMENTS))
    ap.add_argument("--config", help="YAML run config (defaults to the subcommand's acceptance config)")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    ap.add_argument("--version", action="version", version=f"torusflow {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand) if args.config else default_config(args.subcommand)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative", "<command line>")
            cfg.seed = args.seed
        if args.out:
            cfg.output["dir"] = args.out
        workers = worker_count()
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    out = Path(cfg.output["dir"])
    try:
        res = run_config(cfg, out, workers)
    except FlowAbort as e:
        path = _snapshot(out, cfg, e.snapshot)
        print(f"numerical failure: {e} (t = {e.t:g}); snapshot written to {path}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalFailure, FloatingPointError) as e:
        snap = getattr(e, "snapshot", None)
        where = f"; snapshot written to {_snapshot(out, cfg, snap)}" if snap is not None else ""
        print(f"numerical failure: {e}{where}", file=sys.stderr)
        return EXIT_NUMERICAL
    for r in res.records:
        print(f"{r.experiment} {r.config_hash} " + " ".join(f"{k}={_fmt(v)}" for k, v in r.metrics.items()))
    status = "PASS" if res.passed else "FAIL"
    failed = [k for k, v in res.checks.items() if not v]
    print(f"criterion {CRITERIA[cfg.experiment]} ({cfg.experiment}): {status}"
          + (f" [failed: {', '.join(failed)}]" if failed else ""))
    if res.summary_path:
        print(f"summary: {res.summary_path}")
    print(f"records: {len(res.records)} in {out}")
    return EXIT_OK


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


if __name__ == "__main__":
    sys.exit(main())
