"""
Tests for the configuration layer: run files, presets, RunConfig layering and the home directory.
"""

import logging
import re
from pathlib import Path

import pytest
import toml

from config import CONST_LOG_FILE_NAME, CONST_RUNS_DIR, WowConfig, argparser_wow_flow
from config.common import normalize_key, parse_run_config, read_run_config
from config.run_config import RunConfig, parse_coupling_pair
from wow_flow.couplings import CouplingKind
from wow_flow.errors import ConfigError
from wow_flow.utils.resources import list_presets
from wow_flow.utils.validators import validate_positive_float, validate_positive_int, validate_range


@pytest.mark.unit
class TestRunFile:
    def test_flat_lines_and_comments(self):
        parsed = parse_run_config("# header\nseed = 3  # inline\nN-Low = 10\n\nouter=w\n")
        assert parsed == {"seed": "3", "n_low": "10", "outer": "w"}

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate key 'seed'"):
            parse_run_config("seed = 1\nseed = 2\n")

    def test_normalize_key(self):
        assert normalize_key(" Sinkhorn-Reg ") == "sinkhorn_reg"

    def test_read_file(self, temp_dir):
        path = temp_dir / "run.cfg"
        path.write_text("batch = 4\n", encoding="utf-8")
        assert read_run_config(path) == {"batch": "4"}

    def test_read_preset_by_name(self):
        assert "circles" in list_presets()
        assert read_run_config("circles") == read_run_config("circles.cfg")
        run = RunConfig.from_mapping(read_run_config("circles"))
        assert run.steps == 7500
        assert (run.outer, run.inner) == ("w", "w")
        assert run.euler_steps == (5, 25, 125)

    def test_mnist_preset_parses(self):
        run = RunConfig.from_mapping(read_run_config("mnist"))
        assert run.net == "mnist"

    def test_unknown_location(self):
        with pytest.raises(ConfigError, match="not a file nor a preset"):
            read_run_config("no_such_preset")

    def test_empty_location(self):
        assert read_run_config(None) == {}


@pytest.mark.unit
class TestRunConfig:
    def test_defaults_are_valid(self):
        run = RunConfig()
        assert run.outer == "ind"
        assert run.resolved_steps() is not None
        assert run.coupling_config().label == "(ind,ind)"

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="unknown config keys: bogus"):
            RunConfig.from_mapping({"bogus": "1"})

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="invalid value for seed"):
            RunConfig.from_mapping({"seed": "seven"})

    def test_none_clears_optional_fields(self):
        run = RunConfig.from_mapping({"steps": "none"}, base=RunConfig(steps=5))
        assert run.steps is None
        with pytest.raises(ConfigError, match="batch cannot be empty"):
            RunConfig.from_mapping({"batch": ""})

    @pytest.mark.parametrize(
        "mapping",
        [
            {"batch": "0"},
            {"n_low": "40", "n_high": "30"},
            {"outer": "exact"},
            {"source": "mixture"},
            {"metrics": "chamfer,emd"},
            {"bench_couplings": "w-w"},
            {"net": "resnet"},
            {"lr": "-1"},
        ],
    )
    def test_rejects_bad_settings(self, mapping):
        with pytest.raises(ConfigError):
            RunConfig.from_mapping(mapping)

    def test_dump_reparses_to_equal_config(self):
        run = RunConfig.from_mapping(
            {"seed": "9", "outer": "llw", "ref": "ref.wowds", "sinkhorn_reg": "0.01", "euler_steps": "5,25"}
        )
        assert RunConfig.from_mapping(parse_run_config(run.dump())) == run
        assert "out =" not in run.dump()

    def test_merged_ignores_unset_flags(self):
        run = RunConfig(seed=4).merged({"seed": None, "batch": 3})
        assert (run.seed, run.batch) == (4, 3)

    def test_list_values_from_flags(self):
        run = RunConfig().merged({"euler_steps": [5, 125], "metrics": ["ot"]})
        assert run.euler_steps == (5, 125)
        assert run.metrics == ("ot",)

    def test_require(self):
        with pytest.raises(ConfigError, match="missing required setting 'checkpoint'"):
            RunConfig().require("seed", "checkpoint")

    def test_resolved_steps(self):
        assert RunConfig(steps=12).resolved_steps() == 12
        assert RunConfig(epochs=3).resolved_steps() is None

    def test_net_overrides(self):
        net = RunConfig(k_local=3, hidden_width=16).net_config(2)
        assert (net.k_local, net.hidden_width) == (3, 16)
        with pytest.raises(ConfigError, match="invalid network settings"):
            RunConfig(hidden_width=0).net_config(2)

    def test_coupling_pairs(self):
        assert parse_coupling_pair("sw:llw") == (CouplingKind.SW, CouplingKind.LLW)
        with pytest.raises(ConfigError):
            parse_coupling_pair("w")
        pairs = RunConfig(bench_couplings=("ind:ind", "w:w")).coupling_pairs()
        assert list(pairs) == [(CouplingKind.IND, CouplingKind.IND), (CouplingKind.W, CouplingKind.W)]


@pytest.mark.unit
class TestValidators:
    def test_positive_int(self):
        assert validate_positive_int("12", "steps") == 12
        with pytest.raises(ConfigError):
            validate_positive_int(0, "steps")
        with pytest.raises(TypeError):
            validate_positive_int(1.5, "steps")

    def test_positive_float(self):
        assert validate_positive_float(0, "reg", allow_zero=True) == 0.0
        for bad in (0.0, float("nan"), "x"):
            with pytest.raises(ConfigError):
                validate_positive_float(bad, "reg")

    def test_range(self):
        assert validate_range(1, 2, "n") == (1, 2)
        with pytest.raises(ConfigError, match="empty"):
            validate_range(3, 2, "n")
        with pytest.raises(ConfigError, match="exceeds"):
            validate_range(0.1, 2.0, "sigma", upper=1.0)


@pytest.mark.unit
class TestWowConfig:
    def test_directories(self, temp_dir):
        cfg = WowConfig.with_base_dir(temp_dir / "home").ensure_directories()
        assert cfg.runs_dir == temp_dir / "home" / CONST_RUNS_DIR
        assert cfg.runs_dir.is_dir()
        assert cfg.log_file.name == CONST_LOG_FILE_NAME
        assert cfg.run_dir("train").parent == cfg.runs_dir
        assert cfg.run_dir("train").name.startswith("train_")

    def test_home_from_environment(self, temp_dir, monkeypatch):
        monkeypatch.setenv("WOW_FLOW_HOME", str(temp_dir / "env_home"))
        assert WowConfig().wow_home == temp_dir / "env_home"

    def test_logger(self, wow_config):
        logger = wow_config.get_logger()
        assert isinstance(logger, logging.Logger)
        assert wow_config.log_dir.is_dir()


@pytest.mark.unit
class TestArgparser:
    def test_commands(self):
        for command in argparser_wow_flow.COMMANDS:
            assert argparser_wow_flow.parse_args([command]).command == command

    def test_overrides_only_given_flags(self):
        args = argparser_wow_flow.parse_args(["train", "--outer", "w", "--batch", "4"])
        assert argparser_wow_flow.run_overrides(args) == {"outer": "w", "batch": 4}

    def test_repeatable_steps(self):
        args = argparser_wow_flow.parse_args(["generate", "--steps", "5", "--steps", "125"])
        assert args.euler_steps == [5, 125]

    def test_local_config_layers_preset_and_flags(self, temp_dir):
        args = argparser_wow_flow.parse_args(
            ["train", "--config", "circles", "--seed", "11", "--home", str(temp_dir / "home")]
        )
        cfg = argparser_wow_flow.local_config(args)
        assert cfg.wow_home == temp_dir / "home"
        assert cfg.log_dir.is_dir()
        assert cfg.run.seed == 11
        assert cfg.run.steps == 7500

    def test_local_config_rejects_bad_flags(self, temp_dir):
        args = argparser_wow_flow.parse_args(["train", "--outer", "exact", "--home", str(temp_dir)])
        with pytest.raises(ConfigError, match="unknown coupling"):
            argparser_wow_flow.local_config(args)


@pytest.mark.unit
class TestManifest:
    ROOT = Path(__file__).resolve().parent.parent

    def runtime_dependencies(self):
        deps = toml.load(self.ROOT / "pyproject.toml")["tool"]["poetry"]["dependencies"]
        return [
            name for name, spec in deps.items()
            if name != "python" and not (isinstance(spec, dict) and spec.get("optional"))
        ]

    def test_every_runtime_dependency_is_imported(self):
        sources = "\n".join(
            path.read_text(encoding="utf-8")
            for package in ("config", "wow_flow", "data")
            for path in (self.ROOT / package).rglob("*.py")
        )
        for name in self.runtime_dependencies():
            module = name.replace("-", "_")
            assert re.search(rf"^\s*(import|from) {module}\b", sources, re.MULTILINE), f"{name} is never imported"

    def test_no_typing_backport(self):
        assert "typing-extensions" not in self.runtime_dependencies()
