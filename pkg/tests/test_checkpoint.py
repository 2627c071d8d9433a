import numpy as np
import pytest

from flowgate.checkpoint import (
    Checkpoint, MAGIC, STAGE_CLASSIFIER, STAGE_EXTRACTOR, STAGE_FLOW,
    config_fingerprint, load_checkpoint, matches, save_checkpoint,
)
from flowgate.errors import CheckpointMismatch, IoFailure


def sample_checkpoint(stage=STAGE_FLOW, seed=3):
    rng = np.random.default_rng(0)
    tensors = {
        "flow.block0.s.0.W": rng.standard_normal((4, 3)),
        "flow.block0.s.0.b": rng.standard_normal(4),
        "flow.block0.t.0.W": rng.standard_normal((4, 3)),
    }
    return Checkpoint(stage=stage, seed=seed,
                      config_fingerprint=config_fingerprint({"dim": 3}),
                      tensors=tensors, meta={"dim": 3, "note": "test"})


def test_round_trip_bit_exact(tmp_path):
    ckpt = sample_checkpoint()
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, ckpt)
    back = load_checkpoint(path)
    assert back.stage == ckpt.stage
    assert back.seed == ckpt.seed
    assert back.config_fingerprint == ckpt.config_fingerprint
    assert back.meta == ckpt.meta
    assert set(back.tensors) == set(ckpt.tensors)
    for name in ckpt.tensors:
        np.testing.assert_array_equal(back.tensors[name], ckpt.tensors[name])


def test_save_is_deterministic(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, sample_checkpoint())
    save_checkpoint(b, sample_checkpoint())
    assert a.read_bytes() == b.read_bytes()


def test_magic_verified(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sample_checkpoint())
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path)


def test_stage_verified(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sample_checkpoint(stage=STAGE_FLOW))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, expect_stage=STAGE_EXTRACTOR)


def test_shape_table_verified(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sample_checkpoint())
    data = path.read_bytes()
    path.write_bytes(data[:-8])  # drop one float from the payload
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path)


def test_include_filters_tables(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sample_checkpoint())
    back = load_checkpoint(path, include=("flow.block0.s.",))
    assert set(back.tensors) == {"flow.block0.s.0.W", "flow.block0.s.0.b"}
    # availability still reflects the whole file
    assert set(back.available) == {"flow.block0.s.0.W", "flow.block0.s.0.b",
                                   "flow.block0.t.0.W"}
    full = load_checkpoint(path)
    np.testing.assert_array_equal(back.tensors["flow.block0.s.0.W"],
                                  full.tensors["flow.block0.s.0.W"])


def test_unknown_stage_rejected():
    with pytest.raises(CheckpointMismatch):
        Checkpoint(stage="BOGUS", seed=0, config_fingerprint="", tensors={})


def test_matches_helper(tmp_path):
    ckpt = sample_checkpoint(seed=3)
    fp = ckpt.config_fingerprint
    assert matches(ckpt, STAGE_FLOW, fp, 3)
    assert not matches(ckpt, STAGE_CLASSIFIER, fp, 3)
    assert not matches(ckpt, STAGE_FLOW, fp, 4)
    assert not matches(ckpt, STAGE_FLOW, "other", 3)


def test_missing_file_raises_io():
    with pytest.raises(IoFailure):
        load_checkpoint("/nonexistent/path.ckpt")


def test_fingerprint_canonical():
    assert config_fingerprint({"a": 1, "b": 2}) == config_fingerprint({"b": 2, "a": 1})
    assert config_fingerprint({"a": 1}) != config_fingerprint({"a": 2})


def test_magic_literal(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, sample_checkpoint())
    assert path.read_bytes()[:9] == MAGIC == b"FLOWGATE1"
