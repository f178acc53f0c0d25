import os
import subprocess
import sys

import pytest

from germforge.cli import load_config, main
from germforge.errors import ConfigError


def run_cli(args, env=None):
    cmd = [sys.executable, "-m", "germforge.cli", *args]
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(cmd, capture_output=True, text=True, env=full_env)


def test_load_config_defaults():
    cfg = load_config(None, "degree", {"seed": None, "out": None, "tol": None, "trials": None})
    assert cfg.models == ["cubic", "square-minus-one", "identity"]
    assert cfg.seed == 0


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "[run]\n"
        "models = cubic, identity   # inline comment\n"
        "seed = 7\n"
        "trials = 3\n"
        "tol = 1e-8\n",
        encoding="utf-8",
    )
    cfg = load_config(path, "degree", {"seed": None, "out": None, "tol": None, "trials": None})
    assert cfg.models == ["cubic", "identity"]
    assert cfg.seed == 7
    assert cfg.trials == 3
    assert cfg.tol == 1e-8


def test_load_config_unknown_model(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nmodels = not-a-model\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_config(path, "degree", {"seed": None, "out": None, "tol": None, "trials": None})
    assert "models" in str(exc.value)


def test_load_config_bad_field(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nseed = not-an-int\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_config(path, "degree", {"seed": None, "out": None, "tol": None, "trials": None})
    assert "seed" in str(exc.value)


def test_missing_config_file_is_exit_2(tmp_path):
    res = run_cli(["degree", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)])
    assert res.returncode == 2
    assert "config error" in res.stderr


def test_flag_overrides_and_outputs(tmp_path):
    out = tmp_path / "reports"
    rc = main(["degree", "--seed", "11", "--trials", "2", "--out", str(out)])
    assert rc == 0
    assert (out / "degree-cubic.csv").exists()
    assert (out / "degree-square-minus-one.csv").exists()
    assert (out / "events.jsonl").exists()
    text = (out / "degree-cubic.csv").read_text()
    assert "metric,degree,1" in text
    assert "provenance,seed,11" in text


def test_env_var_overrides_out(tmp_path):
    env_out = tmp_path / "via-env"
    res = run_cli(["degree", "--trials", "2", "--out", str(tmp_path / "ignored")],
                  env={"GERMFORGE_OUT": str(env_out)})
    assert res.returncode == 0
    assert (env_out / "degree-cubic.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_solve_germ_command(tmp_path):
    rc = main(["solve-germ", "--out", str(tmp_path)])
    assert rc == 0
    text = (tmp_path / "solve-germ-cos-germ.csv").read_text()
    assert "invariant,tangent_coherent,pass" in text
    assert "derivative" in text


def test_cones_command(tmp_path):
    rc = main(["cones", "--out", str(tmp_path)])
    assert rc == 0
    text = (tmp_path / "cones-diag-plane.csv").read_text()
    assert "metric,ray_count,2" in text
    assert "metric,is_quadrant,true" in text
    ice = (tmp_path / "cones-ice-cream.csv").read_text()
    assert "metric,ray_count,8" in ice
    assert "metric,is_quadrant,false" in ice


def test_parametrize_command(tmp_path):
    rc = main(["parametrize", "--out", str(tmp_path)])
    assert rc == 0
    text = (tmp_path / "parametrize-circle.csv").read_text()
    assert "invariant,a_at_0.6,pass" in text
    assert "sample_chart" in text
    corner = (tmp_path / "parametrize-parabola-at-corner.csv").read_text()
    assert "invariant,corner_accounting,pass" in corner


def test_determinism_byte_identical_metrics(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["degree", "--seed", "99", "--trials", "2", "--out", str(out1)]) == 0
    assert main(["degree", "--seed", "99", "--trials", "2", "--out", str(out2)]) == 0
    for name in ("degree-cubic.csv", "degree-square-minus-one.csv", "degree-identity.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_events_jsonl_structure(tmp_path):
    import json

    assert main(["degree", "--seed", "1", "--trials", "2", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "events.jsonl").read_text().strip().splitlines()
    events = [json.loads(line) for line in lines]
    kinds = {e["event"] for e in events}
    assert {"run", "metric", "invariant"} <= kinds
    runs = [e for e in events if e["event"] == "run"]
    assert all("wall_time" in e and "version" in e for e in runs)
