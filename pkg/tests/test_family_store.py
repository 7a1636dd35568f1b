# tests/test_family_store.py
"""Tests for the JSON family/instance files."""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from services.family_store import load_family, load_instance, save_instance
from services.instance import make_instance, make_restricted_family
from utils.errors import FamilyError


class TestFamilyStore:
    """save_instance / load_family / load_instance."""

    def test_roundtrip(self, tmp_path):
        """A saved instance loads back with the same arms, means and noise."""
        inst = make_instance(make_restricted_family(2), [0.9, 0.1, 0.5, 0.4], noise="uniform")
        path = tmp_path / "inst" / "restricted.json"
        save_instance(inst, str(path))
        loaded = load_instance(str(path))
        assert loaded.family.arms == inst.family.arms
        assert loaded.family.uniform_size is None
        np.testing.assert_allclose(loaded.mu, inst.mu)
        assert loaded.noise == "uniform"

    def test_one_indexed_on_disk(self, tmp_path):
        """Arms are written 1-indexed."""
        inst = make_instance(make_restricted_family(2), [0.9, 0.1, 0.5, 0.4])
        path = tmp_path / "f.json"
        save_instance(inst, str(path))
        data = json.loads(path.read_text())
        assert data["arms"] == [[1], [2], [3, 4]]
        assert data["d"] == 4

    def test_load_family_only(self, tmp_path):
        """Bare families need no means; a common size is detected."""
        path = tmp_path / "fam.json"
        path.write_text(json.dumps({"d": 3, "arms": [[1, 2], [2, 3], [1, 3]]}))
        fam = load_family(str(path))
        assert fam.uniform_size == 2
        assert fam.arms == ((0, 1), (1, 2), (0, 2))

    def test_noise_override(self, tmp_path):
        """An explicit noise law wins over the file."""
        path = tmp_path / "i.json"
        path.write_text(json.dumps({"d": 2, "arms": [[1], [2]], "mu": [0.3, 0.6]}))
        assert load_instance(str(path)).noise == "bernoulli"
        assert load_instance(str(path), noise="uniform").noise == "uniform"

    def test_missing_file(self, tmp_path):
        """A missing file is a FamilyError."""
        with pytest.raises(FamilyError):
            load_family(str(tmp_path / "nope.json"))

    def test_bad_json(self, tmp_path):
        """Broken JSON is a FamilyError."""
        path = tmp_path / "bad.json"
        path.write_text("{d: 3")
        with pytest.raises(FamilyError):
            load_family(str(path))

    def test_instance_needs_means(self, tmp_path):
        """load_instance refuses files without 'mu'."""
        path = tmp_path / "fam.json"
        path.write_text(json.dumps({"d": 2, "arms": [[1], [2]]}))
        with pytest.raises(FamilyError):
            load_instance(str(path))

    def test_out_of_range_arm(self, tmp_path):
        """Arm indices beyond d are rejected."""
        path = tmp_path / "fam.json"
        path.write_text(json.dumps({"d": 2, "arms": [[1], [3]]}))
        with pytest.raises(FamilyError):
            load_family(str(path))
