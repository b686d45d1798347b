"""
Tests for the TOML run configuration and environment settings.
"""

import math
from pathlib import Path

import pytest

from config import (
    GridSpec,
    RunConfig,
    get_settings,
    load_config,
    parse_config,
    reset_settings,
    serialize_config,
)
from src.dynamics.evolution import ProcessConfig
from utils.validators import ValidationError

EXAMPLES = sorted((Path(__file__).parent.parent / "docs" / "examples").glob("*.toml"))


class TestParseConfig:
    def test_empty_document_gives_defaults(self):
        config = parse_config("")
        assert config == RunConfig()
        assert config.rng_seed == 42
        assert config.output_dir == "output"
        assert config.p == 2.0
        assert config.process == ProcessConfig(dt=1e-2)
        assert config.grid == GridSpec(a=0.0, b=1.0, n=101)
        assert config.limit is None

    def test_values_are_read(self):
        config = parse_config(
            """
            rng_seed = 7
            p = "inf"

            [grid]
            n = 21

            [process]
            dt = 0.005
            method = "exp_midpoint"

            [nonlinearity]
            kind = "shifted"
            params = { beta = 0.1 }
            """
        )
        assert config.rng_seed == 7
        assert math.isinf(config.p)
        assert config.grid.n == 21
        assert config.process == ProcessConfig(dt=0.005, method="exp_midpoint")
        assert config.nonlinearity.params == {"beta": 0.1}

    @pytest.mark.parametrize(
        "text, message",
        [
            ("kernell = 1", "unknown key 'kernell'"),
            ("[grid]\nfoo = 1", "unknown key 'grid.foo'"),
            ("[process]\nstep = 0.1", "unknown key 'process.step'"),
            ("[compare.lower]\nkind = 'zero'\nextra = 1", "unknown key 'compare.lower.extra'"),
            ("[nonlinearity]\nparams = { beta = 0.1 }", "nonlinearity.params.beta"),
            ("[limit]\nparams = { c = 1.0 }", "limit.params.c"),
        ],
    )
    def test_unknown_keys_are_named(self, text, message):
        with pytest.raises(ValidationError, match=message):
            parse_config(text)

    @pytest.mark.parametrize(
        "text",
        [
            "[grid]\nn = 1.5",
            "[grid]\nn = 1",
            "[grid]\na = 1.0\nb = 0.0",
            "[kernel]\nkind = 'gaussian'",
            "[kernel]\nkind = 'cosine'",
            "[nonlinearity]\nkind = 'cubic'",
            "[process]\nmethod = 'rk4'",
            "[process]\ndt = 0.0",
            "[simulate]\ntau = 2.0\nt = 1.0",
            "[attractor]\ndepths = [10.0, 5.0]",
            "[attractor]\ndepths = [0.0, 5.0]",
            "[lyapunov]\nresolution = 500",
            "[lyapunov]\nexterior_coupling = 1",
            "[sweep]\nfamily = 'scale'",
            "[sweep]\nt = 0.0",
            "[sweep]\nbetas = []",
            "[limit]\na = -2.0",
            "p = 0.5",
            "grid = 3",
        ],
    )
    def test_schema_violations(self, text):
        with pytest.raises(ValidationError):
            parse_config(text)

    def test_syntax_error(self):
        with pytest.raises(ValidationError, match="invalid TOML"):
            parse_config("[grid\nn = 3")

    def test_missing_kernel_parameter_is_named(self):
        with pytest.raises(ValidationError, match="kernel.sigma is required"):
            parse_config("[kernel]\nkind = 'gaussian'")

    def test_base_dir(self, tmp_path):
        assert parse_config("", base_dir=tmp_path).base_dir == tmp_path
        assert parse_config("").base_dir is None


class TestExampleConfigs:
    def test_examples_exist(self):
        names = {path.stem for path in EXAMPLES}
        assert {"simulate", "attractor", "compare", "lyapunov", "sweep", "selftest"} <= names

    @pytest.mark.parametrize("path", EXAMPLES, ids=lambda path: path.stem)
    def test_example_loads(self, path):
        config = load_config(path)
        assert config.base_dir == path.parent
        assert config.output_dir.startswith("output")

    @pytest.mark.parametrize("path", EXAMPLES, ids=lambda path: path.stem)
    def test_serialization_round_trip(self, path):
        config = load_config(path)
        assert parse_config(serialize_config(config)) == config

    def test_infinite_exponent_round_trip(self):
        config = parse_config('p = "inf"')
        assert 'p = "inf"' in serialize_config(config)
        assert parse_config(serialize_config(config)) == config

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_config(tmp_path / "absent.toml")


class TestSettings:
    def test_defaults(self):
        settings = get_settings()
        assert settings.threads == 1
        assert settings.log_level == "INFO"
        assert settings.log_file is None

    def test_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("NONLOCAL_THREADS", "4")
        monkeypatch.setenv("NONLOCAL_LOG_LEVEL", "debug")
        monkeypatch.setenv("NONLOCAL_LOG_FILE", str(tmp_path / "run.log"))
        reset_settings()
        settings = get_settings()
        assert settings.threads == 4
        assert settings.log_level == "DEBUG"
        assert settings.log_file == tmp_path / "run.log"

    @pytest.mark.parametrize("value", ["0", "many"])
    def test_bad_thread_counts_fall_back_to_one(self, monkeypatch, value):
        monkeypatch.setenv("NONLOCAL_THREADS", value)
        reset_settings()
        assert get_settings().threads == 1

    def test_settings_are_cached(self):
        assert get_settings() is get_settings()
