import json
import os
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from torusflow.runner import ConfigError, default_config, load_config, parse_config
from torusflow.runner.cli import main, run_config
from torusflow.runner.defaults import CRITERIA, DEFAULTS
from torusflow.runner.io import HASH_PREFIX, file_hash, read_csv
from torusflow.spectral import read_field

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def config_text(exp, measure=None, params=None, sweep=None, **top):
    d = default_config(exp).to_dict()
    d["measure"].update(measure or {})
    d["params"].update(params or {})
    if sweep is not None:
        d["sweep"] = sweep
    d.update(top)
    return yaml.safe_dump(d, sort_keys=False)


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SMALL_EVOLVE = dict(measure={"N": 4}, params={"t": 0.1, "dt": 0.01, "dts": [0.02, 0.01], "snapshot_every": 5},
                    output={"dir": "runs/evolve", "fields": True, "raw": False})
SMALL_DT = dict(measure={"N": 6}, params={"samples": 6, "chunk": 2})


def line_of(text, needle):
    return next(i for i, line in enumerate(text.splitlines(), 1) if needle in line)


def test_unknown_key_is_reported_with_its_line():
    text = config_text("convolution").replace("  M: 200\n", "  M: 200\n  Mx: 3\n")
    with pytest.raises(ConfigError) as e:
        parse_config(text, "convolution", "c.yaml")
    assert str(e.value).startswith(f"c.yaml:{line_of(text, 'Mx:')}:")
    assert "unknown key 'Mx'" in str(e.value)


def test_type_errors_point_at_the_value():
    text = config_text("convolution").replace("  M: 200", "  M: lots")
    with pytest.raises(ConfigError) as e:
        parse_config(text, "convolution", "c.yaml")
    assert e.value.line == line_of(text, "M: lots")
    text = config_text("evolve").replace("scheme: strang_split", "scheme: leapfrog", 1)
    with pytest.raises(ConfigError) as e:
        parse_config(text, "evolve")
    assert e.value.line == line_of(text, "leapfrog") and "must be one of" in str(e.value)


@pytest.mark.parametrize("edit,needle", [
    (lambda t: t.replace("version: 1", "version: 2"), "version"),
    (lambda t: t.replace("seed: 0", "seed: -4"), "seed"),
    (lambda t: t.replace("experiment: convolution", "experiment: evolve"), "experiment"),
    (lambda t: t + "extra: 1\n", "extra"),
    (lambda t: t.replace("measure:", "measure: [", 1), None),
])
def test_bad_configs(edit, needle):
    text = edit(config_text("convolution"))
    with pytest.raises(ConfigError) as e:
        parse_config(text, "convolution", "c.yaml")
    assert e.value.line is not None
    if needle:
        assert e.value.line == line_of(text, needle)


def test_semantic_validation():
    text = config_text("chaos-moments", params={"chunk": 100})
    with pytest.raises(ConfigError) as e:
        parse_config(text, "chaos-moments")
    assert e.value.line == line_of(text, "chunk:")
    with pytest.raises(ConfigError):
        parse_config(config_text("lil", measure={"N": 8}), "lil")
    bad = config_text("transport").replace("- le", "- lt", 1)
    with pytest.raises(ConfigError):
        parse_config(bad, "transport")


def test_hash_ignores_output_and_tracks_content():
    a = default_config("convolution")
    b = parse_config(config_text("convolution", output={"dir": "elsewhere", "fields": True, "raw": True}))
    assert a.hash == b.hash and len(a.hash) == 32
    c = parse_config(config_text("convolution", params={"M": 100}))
    assert c.hash != a.hash


@pytest.mark.parametrize("exp", sorted(DEFAULTS))
def test_print_config_round_trip(exp, capsys):
    assert main([exp, "--print-config"]) == 0
    text = capsys.readouterr().out
    assert parse_config(text, exp).hash == default_config(exp).hash


@pytest.mark.parametrize("exp", sorted(DEFAULTS))
def test_shipped_configs_match_defaults(exp):
    cfg = load_config(CONFIGS / f"{exp}.yaml", exp)
    assert cfg.hash == default_config(exp).hash
    assert exp in CRITERIA


def test_exit_code_for_config_errors(tmp_path, capsys):
    path = write(tmp_path, config_text("convolution").replace("  M: 200", "  M: -"))
    assert main(["convolution", "--config", path]) == 1
    assert f"{path}:" in capsys.readouterr().err
    assert main(["convolution", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["convolution", "--seed", "-1", "--print-config"]) == 1


def test_exit_code_for_numerical_failure(tmp_path, capsys):
    text = config_text("evolve", measure={"N": 4}, params={"t": 50.0, "dt": 0.5})
    out = tmp_path / "out"
    assert main(["evolve", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "snapshot written to" in err
    snaps = sorted(out.glob("*/abort_*.tfld"))
    assert len(snaps) == 2
    cfg = parse_config(text)
    assert read_field(snaps[0])[1]["config_hash"] == cfg.hash


def test_outputs_carry_the_config_hash(tmp_path, capsys):
    text = config_text("evolve", **SMALL_EVOLVE)
    out = tmp_path / "out"
    assert main(["evolve", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "criterion 3 (evolve):" in printed
    h = parse_config(text).hash
    files = [p for p in out.rglob("*") if p.is_file()]
    assert {p.suffix for p in files} == {".csv", ".json", ".tfld"}
    for p in files:
        assert file_hash(p) == h
        if p.suffix == ".csv":
            assert p.read_text().startswith(HASH_PREFIX + h)
        if p.suffix == ".json":
            assert next(iter(json.loads(p.read_text()))) == "config_hash"
    rec = json.loads((out / f"evolve-{h[:12]}" / "record.json").read_text())
    assert rec["experiment"] == "evolve" and set(rec["checks"]) >= {"reversible", "liouville"}


def test_sweep_gives_one_record_per_point_and_a_summary(tmp_path):
    text = config_text("partition", measure={"N": 2}, params={"samples": 60, "l2_samples": 40},
                       sweep={"measure.N": [2, 3, 4, 5]})
    cfg = parse_config(text)
    res = run_config(cfg, tmp_path)
    assert len(res.records) == 4 and len({r.config_hash for r in res.records}) == 4
    summaries = sorted(tmp_path.glob("*-summary.csv"))
    assert len(summaries) == 1
    h, cols, rows = read_csv(summaries[0])
    assert h == cfg.hash and len(rows) == 4 and cols[:2] == ["config_hash", "measure.N"]
    assert [int(r[1]) for r in rows] == [2, 3, 4, 5]
    assert len(list(tmp_path.glob("*/record.json"))) == 4
    assert "N_uniformity" in res.checks


def test_bit_reproducible(tmp_path):
    cfg = parse_config(config_text("dt-identity", **SMALL_DT))
    run_config(cfg, tmp_path / "a")
    run_config(cfg, tmp_path / "b")
    tabs = sorted((tmp_path / "a").rglob("*.csv"))
    assert tabs
    for p in tabs:
        assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def run_cli(args, cwd, workers):
    env = dict(os.environ, TORUSFLOW_WORKERS=str(workers))
    return subprocess.run([sys.executable, "-m", "torusflow.runner.cli"] + args, cwd=cwd, env=env,
                          capture_output=True, text=True, timeout=600)


def test_worker_count_does_not_change_results(tmp_path):
    path = write(tmp_path, config_text("dt-identity", **SMALL_DT))
    r1 = run_cli(["dt-identity", "--config", path, "--out", "w1"], tmp_path, 1)
    r2 = run_cli(["dt-identity", "--config", path, "--out", "w2"], tmp_path, 2)
    assert r1.returncode == 0 and r2.returncode == 0, r1.stderr + r2.stderr
    tabs = sorted((tmp_path / "w1").rglob("*.csv"))
    assert tabs
    for p in tabs:
        assert p.read_bytes() == (tmp_path / "w2" / p.relative_to(tmp_path / "w1")).read_bytes()
    bad = run_cli(["dt-identity", "--config", path, "--out", "w3"], tmp_path, "many")
    assert bad.returncode == 1 and "TORUSFLOW_WORKERS" in bad.stderr


def test_seed_override_changes_the_hash(capsys):
    assert main(["convolution", "--seed", "7", "--print-config"]) == 0
    cfg = parse_config(capsys.readouterr().out)
    assert cfg.seed == 7 and cfg.hash != default_config("convolution").hash
