"""Tests for artifact naming and JSON documents."""

import pytest

from openpsps import DataError
from openpsps.models import CostSchedule
from shared.artifact_store import (
    artifact_exists,
    artifact_path,
    document_json,
    load_document,
    save_document,
)


class TestNames:
    def test_bare_stem(self, tmp_path):
        assert artifact_path(tmp_path, "table_s1", ".npz") == tmp_path / "table_s1.npz"

    @pytest.mark.parametrize("name, message", [
        ("", "empty"),
        ("../model", "directory"),
        ("runs/model", "directory"),
        ("..", "directory"),
        ("model v2", "letters, digits"),
        ("a\\b", "letters, digits"),
    ])
    def test_rejected_names(self, tmp_path, name, message):
        with pytest.raises(ValueError, match=message):
            artifact_path(tmp_path, name)
        assert not artifact_exists(tmp_path, name)

    def test_rejected_suffix(self, tmp_path):
        with pytest.raises(ValueError, match="artifact suffix '.pkl'"):
            artifact_path(tmp_path, "model", ".pkl")


class TestDocuments:
    def test_save_and_load(self, tmp_path):
        costs = CostSchedule.build(3, a=7.0)
        path = save_document(costs, tmp_path, "costs")
        assert artifact_exists(tmp_path, "costs")
        assert path.read_text() == document_json(costs)
        assert load_document(CostSchedule, path) == costs

    def test_invalid_document(self, tmp_path):
        path = tmp_path / "costs.json"
        path.write_text('{"A": [1.0]}')
        with pytest.raises(DataError, match="invalid CostSchedule") as excinfo:
            load_document(CostSchedule, path)
        assert excinfo.value.path == str(path)

    def test_missing_document(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_document(CostSchedule, tmp_path / "absent.json")
