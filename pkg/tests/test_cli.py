import json
import subprocess
import sys

import pytest
import yaml
from factories import tiny_run_config

from r2i.cli import build_parser, main


def write_config(tmp_path, **kw):
    cfg = tiny_run_config(tmp_path / "run", **kw).to_dict()
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_env_spec_prints_json(capsys):
    assert main(["env-spec", "discounting_chain:4"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["env_id"] == "discounting_chain:4" and data["num_actions"] == 5


def test_bad_env_id_is_a_clean_error(capsys):
    assert main(["env-spec", "bogus:1"]) == 2
    assert "r2i: error" in capsys.readouterr().err


def test_parser_choices():
    parser = build_parser()
    args = parser.parse_args(["train", "--policy-input", "full", "--preset", "small", "--seed", "3"])
    assert (args.policy_input, args.preset, args.seed) == ("full", "small", 3)
    with pytest.raises(SystemExit):
        parser.parse_args(["train", "--preset", "gigantic"])


def test_train_eval_resume(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["train", "--config", str(cfg), "--seed", "1"]) == 0
    final = json.loads(capsys.readouterr().out)
    assert final["env_steps"] == 48 and final["grad_steps"] > 0
    ck = tmp_path / "run" / "checkpoint.npz"
    assert main(["eval", "--checkpoint", str(ck), "--episodes", "5"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["episodes"] == 5 and 0 <= res["success"] <= 1
    assert main(["train", "--resume", str(ck), "--steps", "64"]) == 0
    assert json.loads(capsys.readouterr().out)["env_steps"] == 64
    assert main(["eval", "--checkpoint", str(ck), "--env", "memory_length:4"]) == 2


def test_sweep_command(tmp_path, capsys):
    base = tiny_run_config(tmp_path).to_dict()
    for k in ("env", "seed", "out_dir"):
        base.pop(k)
    base["total_env_steps"] = 24
    grid = tmp_path / "grid.yaml"
    grid.write_text(yaml.safe_dump(dict(family="memory_length", params=[2], seeds=[0], eval_episodes=3,
                                        out_dir=str(tmp_path / "sweep"), base=base)))
    assert main(["sweep", "--grid", str(grid)]) == 0
    assert (tmp_path / "sweep" / "results.csv").exists()
    assert (tmp_path / "sweep" / "success.svg").exists()


def test_console_module_runs():
    out = subprocess.run([sys.executable, "-m", "r2i.cli", "env-spec", "memory_length:2"],
                         capture_output=True, text=True, check=True).stdout
    assert json.loads(out)["max_steps"] == 2
