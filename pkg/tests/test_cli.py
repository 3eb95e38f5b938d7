import json
import os
from pathlib import Path

import pytest

from flowlab import cli, config, experiments
from flowlab.config import ConfigError
from flowlab.reference import TINY_INPUTS, TINY_LABELS

TINY_MODEL = {"input_dim": 2, "output_dim": 2, "hidden_widths": [16], "activation": "tanh"}
TINY_DATA = {"inputs": TINY_INPUTS, "labels": TINY_LABELS}


def flow_cfg(**flow):
    return {"experiment": "flow_run", "seed": 0, "output_dir": "run", "model": TINY_MODEL,
            "dataset": TINY_DATA, "loss": "squared",
            "flow": {"alpha": 1.0, "step_size": 0.1, "max_time": 1.0, "stop_grad_norm": 0.0,
                     "integrator": "rk4", "record_stride": 1, **flow},
            "params": {"theta_sidecar": True, "monotone_tol": 1e-12}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


class TestValidation:
    def test_bundled_configs_validate(self):
        for _, _, stem in cli.CRITERIA:
            config.validate(cli.bundled_config(stem))

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            config.validate({**flow_cfg(), "learning_rate": 0.1})

    def test_unknown_nested_key_names_path(self):
        cfg = flow_cfg()
        cfg["model"] = {**TINY_MODEL, "widths": [3]}
        with pytest.raises(ConfigError, match="'model'"):
            config.validate(cfg)

    def test_bad_flow_value(self):
        with pytest.raises(ConfigError, match="flow/step_size"):
            config.validate(flow_cfg(step_size=0))

    def test_experiment_typo_suggests(self):
        with pytest.raises(ConfigError, match="did you mean 'alpha_sweep'"):
            config.validate({**flow_cfg(), "experiment": "alpha_swep"})

    def test_unused_field_rejected(self):
        cfg = cli.bundled_config("c01_penrose_suite")
        cfg["loss"] = "squared"
        with pytest.raises(ConfigError, match="'loss': not used"):
            config.validate(cfg)

    def test_params_are_strict(self):
        cfg = flow_cfg()
        cfg["params"]["extra"] = 1
        with pytest.raises(ConfigError, match="params"):
            config.validate(cfg)

    def test_model_and_cases_exclusive(self):
        cfg = flow_cfg()
        cfg["cases"] = [{"name": "a", "model": TINY_MODEL, "dataset": TINY_DATA}]
        with pytest.raises(ConfigError, match="exactly one"):
            config.validate(cfg)

    def test_shape_mismatch(self):
        cfg = flow_cfg()
        cfg["model"] = {**TINY_MODEL, "output_dim": 3}
        with pytest.raises(ConfigError, match="do not match"):
            config.validate(cfg)

    def test_dataset_from_file(self, tmp_path):
        (tmp_path / "data.json").write_text(json.dumps(TINY_DATA))
        cfg = flow_cfg()
        cfg["dataset"] = {"path": "data.json"}
        cases = config.cases(config.load(write(tmp_path, cfg)), tmp_path)
        assert cases[0]["data"].n_samples == 3


class TestCommands:
    def test_list_is_stable(self, capsys):
        assert cli.main(["list"]) == 0
        names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
        assert names == list(experiments.EXPERIMENTS)
        assert {"flow_run", "alpha_sweep", "reparam_check", "rank_loss_check", "prescribed_path",
                "ce_equilibrium_check", "collapse_report", "ntk_report", "penrose_suite"} <= set(names)

    def test_run_writes_manifest_and_csvs(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FLOWLAB_OUTPUT_ROOT", str(tmp_path / "out"))
        assert cli.main(["run", str(write(tmp_path, flow_cfg()))]) == 0
        out = tmp_path / "out" / "run"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["passed"] and manifest["artifacts"] == ["trajectory.csv", "trajectory_theta.csv"]
        assert manifest["config"]["experiment"] == "flow_run"
        assert {"metric_name", "scalar", "tolerance", "pass"} <= set(manifest["checks"][0])
        assert (out / "trajectory.csv").read_text().count("\n") == 12
        assert not list(out.glob("*.tmp"))

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        assert cli.main(["run", str(write(tmp_path, {**flow_cfg(), "oops": 1}))]) == 2
        assert "oops" in capsys.readouterr().err

    def test_not_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        assert cli.main(["run", str(p)]) == 2

    def test_divergence_fails_run(self, tmp_path):
        cfg = flow_cfg(alpha=0.0, step_size=1e3, max_time=1e6, integrator="euler")
        cfg["output_dir"] = str(tmp_path / "div")
        assert cli.main(["run", str(write(tmp_path, cfg))]) == 1
        manifest = json.loads((tmp_path / "div" / "manifest.json").read_text())
        assert not manifest["passed"]
        assert manifest["notes"]["stop_reason"] == "diverged"
        assert "divergence" in manifest["notes"]

    def test_waypoint_path_experiment(self, tmp_path):
        from flowlab.models import init_params, label_flatten, output_flatten
        spec, data = config.model_spec(TINY_MODEL), config.dataset(TINY_DATA)
        x0 = output_flatten(spec, init_params(spec, 0), data)
        y = label_flatten(data)
        from flowlab.pathsolve import save_waypoints
        save_waypoints(tmp_path / "w.json", [0.0, 0.5, 1.0], [x0, 0.5 * (x0 + y), y])
        cfg = {"experiment": "prescribed_path", "seed": 0, "output_dir": str(tmp_path / "wp"),
               "model": TINY_MODEL, "dataset": TINY_DATA,
               "params": {"path_kind": "user_waypoints", "waypoints_file": "w.json", "endpoint_time": 1.0,
                          "step_size": 0.05, "feedback_gain": 0.0, "defect_threshold": 1e-6,
                          "defect_tol": 1e-8, "terminal_rtol": 1e-3, "halving_ratio": 8.0}}
        assert cli.main(["run", str(write(tmp_path, cfg))]) == 0
        assert (tmp_path / "wp" / "path.csv").exists()

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = flow_cfg()
        a = experiments.run_config({**cfg, "output_dir": str(tmp_path / "a")})
        b = experiments.run_config({**cfg, "output_dir": str(tmp_path / "b")})
        assert a["checks"] == b["checks"]
        assert cli.csv_mismatches(tmp_path / "a", tmp_path / "b") == []

    def test_verify_requires_all(self):
        assert cli.main(["verify"]) == 2
