"""
Tests for shared helpers: errors, schema versions, JSON/CSV I/O, seeding and run configuration.
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from src.common.errors import (
    ConfigError,
    DegeneratePairError,
    GatedPGError,
    InsufficientDataError,
    InvalidInputError,
    NumericalAbortError,
    PreconditionError,
)
from src.common.utils import load_json_file, save_csv_file, save_json_file, spawn_rngs, to_jsonable
from src.common.version import check_schema_version
from src.run_config import load_run_config


class TestErrors:
    def test_hierarchy(self):
        for cls in (InvalidInputError, DegeneratePairError, InsufficientDataError, PreconditionError):
            assert issubclass(cls, InvalidInputError)
            assert issubclass(cls, ValueError)
        assert issubclass(NumericalAbortError, RuntimeError)
        assert issubclass(ConfigError, GatedPGError)

    def test_context_fields(self):
        assert PreconditionError("tie", state=3).state == 3
        assert ConfigError("bad", field="eta").field == "eta"
        assert NumericalAbortError("nan", step=12).step == 12


class TestSchemaVersion:
    @pytest.mark.parametrize("document", [{}, {"schema_version": "1.3"}, {"schema_version": " 1.0 "}, {"schema_version": 1}])
    def test_supported(self, document):
        check_schema_version(document)

    def test_newer_major(self):
        with pytest.raises(ConfigError) as excinfo:
            check_schema_version({"schema_version": "2.0"}, source="run.json")
        assert excinfo.value.field == "schema_version"
        assert "run.json" in str(excinfo.value)

    def test_malformed(self):
        with pytest.raises(ConfigError):
            check_schema_version({"schema_version": "one"})


class TestJsonIo:
    def test_to_jsonable(self):
        data = to_jsonable({"a": np.float64(1.5), "b": np.arange(3), "c": math.nan, "d": (np.int64(2),)})
        assert data == {"a": 1.5, "b": [0, 1, 2], "c": None, "d": [2]}
        json.dumps(data)

    def test_save_sorts_keys(self, tmp_path):
        path = tmp_path / "nested" / "report.json"
        assert save_json_file(path, {"b": 1, "a": np.float64(2.0)})
        text = path.read_text(encoding="utf-8")
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")
        assert load_json_file(path) == {"a": 2.0, "b": 1}

    def test_load_missing_file(self, tmp_path):
        assert load_json_file(tmp_path / "missing.json") is None

    def test_csv_keeps_full_precision(self, tmp_path):
        path = tmp_path / "table.csv"
        table = pd.DataFrame({"x": [1.0 / 3.0, 2.0 / 3.0]})
        assert save_csv_file(path, table)
        assert pd.read_csv(path)["x"].tolist() == table["x"].tolist()


class TestSeeding:
    def test_spawned_streams_are_reproducible(self):
        first = [g.random() for g in spawn_rngs(5, 3)]
        second = [g.random() for g in spawn_rngs(5, 3)]
        assert first == second
        assert len(set(first)) == 3


class TestRunConfig:
    def test_defaults(self):
        config = load_run_config()
        assert config.seed == 0
        assert config.gates == ["pg", "dg"]
        assert config.bandit.rewards == [1.0, 0.9, 0.1]
        assert config.flow_max_time() == 100_000
        assert config.sweep_max_time() == 10_000_000

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 3, "eta": 0.5}), encoding="utf-8")
        config = load_run_config(path, {"seed": 9, "eta": None})
        assert config.seed == 9
        assert config.eta == 0.5

    def test_init_logits_replace_policy(self):
        config = load_run_config(overrides={"bandit": {"init_logits": [0.0, 1.0, 2.0]}})
        assert config.bandit.init_policy is None

    @pytest.mark.parametrize(
        "overrides,field",
        [
            ({"gaps": [0.5, 1.5]}, "gaps"),
            ({"eta": -1.0}, "eta"),
            ({"suites": ["bandit", "gpu"]}, "suites"),
            ({"sizes": {"sector_samples": 0}}, "sizes.sector_samples"),
            ({"mdp": {"gamma": 1.0}}, "mdp.gamma"),
        ],
    )
    def test_invalid_values_name_the_field(self, overrides, field):
        with pytest.raises(ConfigError) as excinfo:
            load_run_config(overrides=overrides)
        assert excinfo.value.field == field

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_gate_specs(self):
        config = load_run_config(overrides={"gates": ["eg", "dg"], "eta": 0.3})
        specs = config.gate_specs()
        assert [g.label for g in specs] == ["eg", "dg"]
        assert specs[1].eta == 0.3
