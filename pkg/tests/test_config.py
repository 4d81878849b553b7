"""Key=value configuration and checkpoint container tests."""

import struct

import numpy as np
import pytest

from mirnet_forge.checkpoint import (
    CheckpointError, load_checkpoint, save_checkpoint)
from mirnet_forge.config import (
    ConfigError, RunConfig, parse_config, render_config)

RNG = np.random.default_rng


class TestConfigParsing:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()
        assert cfg.network.base_channels == 8
        assert cfg.train.lr_init == 2e-4
        assert cfg.data.spec.task == "denoise"

    def test_assignment_and_comments(self):
        cfg = parse_config(
            "# run settings\n"
            "train.total_steps = 50   # short run\n"
            "\n"
            "network.base_channels = 16\n"
            "data.task = enhance\n")
        assert cfg.train.total_steps == 50
        assert cfg.network.base_channels == 16
        assert cfg.data.spec.task == "enhance"

    def test_render_round_trip(self):
        cfg = parse_config(
            "train.lr_init = 0.0003\n"
            "train.seed = 7\n"
            "network.n_streams = 3\n"
            "train.patch_size = 16\n"
            "eval.channel_mode = y_channel\n")
        again = parse_config(render_config(cfg))
        assert again == cfg
        assert render_config(again) == render_config(cfg)

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="line 2.*network.depth"):
            parse_config("train.seed = 1\nnetwork.depth = 9\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("train.total_steps = soon\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("train.total_steps 5\n")

    def test_patch_divisibility_validated(self):
        with pytest.raises(ConfigError, match="divisible"):
            parse_config("network.n_streams = 3\ntrain.patch_size = 18\n")

    def test_semantic_validation(self):
        for text in ("train.loss_mode = l2\n",
                     "eval.channel_mode = lab\n",
                     "data.task = sharpen\n",
                     "network.n_streams = 0\n",
                     "train.total_steps = 0\n"):
            with pytest.raises(ConfigError):
                parse_config(text)


class TestCheckpoint:
    def _arrays(self):
        rng = RNG(0)
        return {
            "head.weight": rng.normal(size=(4, 3, 3, 3)).astype(np.float32),
            "head.bias": rng.normal(size=4).astype(np.float32),
            "optim.step": np.float32(17.0),
        }

    def test_round_trip(self, tmp_path):
        arrays = self._arrays()
        p = tmp_path / "a.ckpt"
        save_checkpoint(p, arrays)
        back = load_checkpoint(p)
        assert list(back) == list(arrays)
        for name in arrays:
            stored = np.asarray(arrays[name], dtype=np.float32)
            assert back[name].shape == stored.shape
            assert np.array_equal(back[name], stored)

    def test_save_is_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, self._arrays())
        save_checkpoint(b, self._arrays())
        assert a.read_bytes() == b.read_bytes()

    def test_known_byte_layout(self, tmp_path):
        p = tmp_path / "w.ckpt"
        save_checkpoint(p, {"w": np.array([1.5, -2.0], dtype=np.float32)})
        expected = (b"MIRT" + struct.pack("<I", 1)
                    + struct.pack("<H", 1) + b"w"
                    + struct.pack("<B", 1) + struct.pack("<I", 2)
                    + np.array([1.5, -2.0], dtype="<f4").tobytes())
        assert p.read_bytes() == expected

    def test_scalar_entry_is_rank_zero(self, tmp_path):
        p = tmp_path / "s.ckpt"
        save_checkpoint(p, {"optim.step": np.float32(3.0)})
        raw = p.read_bytes()
        # after magic+version+name: rank byte is 0, then exactly 4 data bytes
        assert raw[8 + 2 + len(b"optim.step")] == 0
        assert len(raw) == 8 + 2 + len(b"optim.step") + 1 + 4
        back = load_checkpoint(p)
        assert back["optim.step"].shape == ()
        assert float(back["optim.step"]) == 3.0

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(p)

    def test_bad_version_rejected(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"MIRT" + struct.pack("<I", 99))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(p)
