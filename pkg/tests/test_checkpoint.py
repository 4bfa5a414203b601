"""Unit tests for the single-file checkpoint container."""

import numpy as np
import pytest

from artifield.checkpoint import load_checkpoint, save_checkpoint
from artifield.errors import InvalidArgumentError, MissingArtifactError


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "w": rng.normal(size=(5, 3)),
            "b": rng.normal(size=(3,)),
            "scalar": np.array(3.14159),
        }
        meta = {"kind": "test", "step": 42}
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, meta, arrays)
        meta2, arrays2 = load_checkpoint(path)
        assert meta2 == meta
        assert set(arrays2) == set(arrays)
        for k in arrays:
            assert np.array_equal(arrays2[k], np.asarray(arrays[k], dtype=np.float64))

    def test_save_twice_identical_bytes(self, tmp_path):
        arrays = {"a": np.arange(6).reshape(2, 3).astype(float)}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, {"k": 1}, arrays)
        save_checkpoint(p2, {"k": 1}, arrays)
        assert p1.read_bytes() == p2.read_bytes()

    def test_insertion_order_does_not_matter(self, tmp_path):
        a = np.ones((2, 2))
        b = np.zeros(3)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, {}, {"x": a, "y": b})
        save_checkpoint(p2, {}, {"y": b, "x": a})
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_wrong_magic_raises(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(path)
