"""Binary checkpoint format: round trips and corruption rejection."""

import numpy as np
import pytest

from dynalink.checkpoint import load_checkpoint, save_checkpoint
from dynalink.dyngraph import DataFormatError
from dynalink.model import ModelConfig, ParameterSet, model_forward
from dynalink.seeding import derive_seed

from conftest import two_community_sequence


def build_params(cfg=None, node_count=10, history_len=3, seed=1):
    cfg = cfg or ModelConfig(embed_dim=8, heads=2)
    return ParameterSet.build(cfg, node_count, history_len,
                              seed=derive_seed(seed, "params"))


class TestRoundTrip:
    def test_every_tensor_bit_identical(self, tmp_path):
        params = build_params()
        path = str(tmp_path / "model.grle")
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert set(loaded.tensors) == set(params.tensors)
        for name, tensor in params.named():
            restored = loaded[name]
            assert restored.data.shape == tensor.data.shape, name
            assert restored.data.dtype == np.float64, name
            assert np.array_equal(restored.data, tensor.data), name

    def test_config_and_dimensions_restored(self, tmp_path):
        cfg = ModelConfig(embed_dim=16, heads=4, mask_mode="literal",
                          variant="no-local", local_out_dim=8)
        params = build_params(cfg, node_count=7, history_len=4)
        path = str(tmp_path / "model.grle")
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.config.to_dict() == cfg.to_dict()
        assert loaded.node_count == 7
        assert loaded.history_len == 4

    def test_forward_pass_bit_exact_after_reload(self, tmp_path):
        seq = two_community_sequence(n=12, t=3, seed=1)
        params = build_params(node_count=12, history_len=3, seed=2)
        z_before = model_forward(seq, params).data
        path = str(tmp_path / "model.grle")
        save_checkpoint(params, path)
        z_after = model_forward(seq, load_checkpoint(path)).data
        assert np.array_equal(z_before, z_after)

    def test_wide_embedding_survives(self, tmp_path):
        """A default-width model on a tiny graph keeps all 128 columns."""
        cfg = ModelConfig()  # embed_dim 128, heads 8
        params = build_params(cfg, node_count=5, history_len=2, seed=3)
        seq = two_community_sequence(n=5, t=2, seed=0)
        path = str(tmp_path / "wide.grle")
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded["embedding"].data.shape == (5, 128)
        assert np.array_equal(model_forward(seq, params).data,
                              model_forward(seq, loaded).data)


class TestCorruption:
    def write_good(self, tmp_path):
        path = str(tmp_path / "model.grle")
        save_checkpoint(build_params(), path)
        return path

    def test_bad_magic_rejected(self, tmp_path):
        path = self.write_good(tmp_path)
        blob = open(path, "rb").read()
        open(path, "wb").write(b"XXXX" + blob[4:])
        with pytest.raises(DataFormatError, match="magic"):
            load_checkpoint(path)

    def test_future_version_rejected(self, tmp_path):
        path = self.write_good(tmp_path)
        blob = bytearray(open(path, "rb").read())
        blob[4] = 99  # low byte of the little-endian version field
        open(path, "wb").write(bytes(blob))
        with pytest.raises(DataFormatError, match="version"):
            load_checkpoint(path)

    @pytest.mark.parametrize("keep", [3, 9, 40, -50])
    def test_truncation_rejected(self, tmp_path, keep):
        path = self.write_good(tmp_path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:keep])
        with pytest.raises(DataFormatError):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = self.write_good(tmp_path)
        with open(path, "ab") as fh:
            fh.write(b"\x00\x01\x02")
        with pytest.raises(DataFormatError, match="trailing"):
            load_checkpoint(path)

    def test_corrupt_metadata_rejected(self, tmp_path):
        path = self.write_good(tmp_path)
        blob = bytearray(open(path, "rb").read())
        blob[12] ^= 0xFF  # inside the JSON chunk
        open(path, "wb").write(bytes(blob))
        with pytest.raises(DataFormatError):
            load_checkpoint(path)

    def test_empty_file_rejected(self, tmp_path):
        path = str(tmp_path / "empty.grle")
        open(path, "wb").close()
        with pytest.raises(DataFormatError):
            load_checkpoint(path)
