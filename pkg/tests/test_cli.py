"""End-to-end command tests: train, eval, infer, gradcheck, ablate."""

import numpy as np
import pytest

from mirnet_forge import blocks as B
from mirnet_forge import cli
from mirnet_forge import data as D
from mirnet_forge.checkpoint import load_checkpoint
from mirnet_forge.config import parse_config, render_config

RNG = np.random.default_rng

BASE_CONFIG = """\
train.total_steps = 4
train.batch = 2
train.patch_size = 16
train.checkpoint_every = 2
data.manifest = manifest.txt
data.noise_sigma = 25
"""


def _smooth_image(seed, h=24, w=24):
    """Low-frequency random image so denoising has signal to recover."""
    rng = RNG(seed)
    coarse = rng.uniform(40, 216, (3, 3, 3))
    img = D.bicubic_resize(D.ImageBuffer(coarse.astype(np.uint8)), w, h)
    return img


def _make_dataset(root, n=3, config_text=BASE_CONFIG):
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(n):
        name = f"img_{i}.ppm"
        D.save_ppm(_smooth_image(100 + i), root / name)
        names.append(name)
    (root / "manifest.txt").write_text("\n".join(names) + "\n")
    (root / "config.txt").write_text(config_text)
    return root / "config.txt", root / "manifest.txt"


class TestTrainCommand:
    def test_outputs(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        out = tmp_path / "run"
        assert cli.cmd_train(str(config), str(out)) == cli.EXIT_OK

        assert (out / "final.ckpt").exists()
        assert (out / "checkpoint_000002.ckpt").exists()
        assert (out / "checkpoint_000004.ckpt").exists()

        log = (out / "loss_log.csv").read_text().splitlines()
        assert log[0] == "step,lr,loss"
        assert len(log) == 5
        steps, lrs, losses = zip(*(row.split(",") for row in log[1:]))
        assert list(steps) == ["0", "1", "2", "3"]
        assert all(float(v) > 0 for v in lrs + losses)
        assert sorted(map(float, lrs), reverse=True) == list(map(float, lrs))

        echoed = parse_config((out / "config.txt").read_text())
        assert render_config(echoed) == (out / "config.txt").read_text()

    def test_checkpoint_carries_optimizer_state(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        out = tmp_path / "run"
        cli.cmd_train(str(config), str(out))
        stored = load_checkpoint(out / "final.ckpt")
        assert float(stored["optim.step"]) == 4.0
        assert "head.weight" in stored
        assert "head.weight.adam_m" in stored
        assert "head.weight.adam_v" in stored
        assert stored["head.weight.adam_m"].shape == stored["head.weight"].shape

    def test_bitwise_reproducible(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.cmd_train(str(config), str(a)) == cli.EXIT_OK
        assert cli.cmd_train(str(config), str(b)) == cli.EXIT_OK
        assert (a / "final.ckpt").read_bytes() == (b / "final.ckpt").read_bytes()
        assert (a / "loss_log.csv").read_text() == (b / "loss_log.csv").read_text()

    def test_seed_changes_run(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        a, b = tmp_path / "a", tmp_path / "b"
        cli.cmd_train(str(config), str(a), seed=0)
        cli.cmd_train(str(config), str(b), seed=1)
        assert (a / "final.ckpt").read_bytes() != (b / "final.ckpt").read_bytes()

    def test_bad_config_exits_2(self, tmp_path):
        config, _ = _make_dataset(
            tmp_path / "data", config_text=BASE_CONFIG + "train.momentum = 0.9\n")
        assert cli.cmd_train(str(config), str(tmp_path / "run")) == cli.EXIT_CONFIG

    def test_missing_manifest_key_exits_2(self, tmp_path):
        config, _ = _make_dataset(
            tmp_path / "data",
            config_text="train.total_steps = 1\ntrain.patch_size = 16\n")
        assert cli.cmd_train(str(config), str(tmp_path / "run")) == cli.EXIT_CONFIG

    def test_missing_manifest_file_exits_3(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        (tmp_path / "data" / "manifest.txt").unlink()
        assert cli.cmd_train(str(config), str(tmp_path / "run")) == cli.EXIT_DATA

    def test_corrupt_image_exits_3(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        (tmp_path / "data" / "img_1.ppm").write_bytes(b"P6\n9 9\n255\nxy")
        assert cli.cmd_train(str(config), str(tmp_path / "run")) == cli.EXIT_DATA


def _identity_checkpoint(tmp_path, config):
    """Checkpoint whose network is the exact identity (zeroed tail conv)."""
    cfg = parse_config(config.read_text())
    net = B.MIRNet(cfg.network, dtype=np.float32, seed=cfg.train.seed)
    net.tail.weight.data[:] = 0
    net.tail.bias.data[:] = 0
    path = tmp_path / "identity.ckpt"
    cli._save_state(path, net.named_parameters(), cli.O.Adam())
    return path


class TestEvalCommand:
    def test_report_layout(self, tmp_path, capsys):
        config, _ = _make_dataset(tmp_path / "data")
        ckpt = _identity_checkpoint(tmp_path, config)
        assert cli.cmd_eval(str(config), str(ckpt)) == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "# channel_mode=rgb"
        assert lines[1] == "name\tpsnr_db\tssim"
        assert len(lines) == 2 + 3 + 2
        assert lines[-2].startswith("aggregate\t")
        assert lines[-1].startswith("input_baseline\t")
        for row in lines[2:]:
            _, p, s = row.split("\t")
            assert float(p) > 0 and 0 <= float(s) <= 1

    def test_identity_network_matches_baseline(self, tmp_path, capsys):
        # restored == degraded input, so aggregate equals the baseline row
        config, _ = _make_dataset(tmp_path / "data")
        ckpt = _identity_checkpoint(tmp_path, config)
        cli.cmd_eval(str(config), str(ckpt))
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[-2].split("\t")[1:] == lines[-1].split("\t")[1:]

    def test_clean_pairs_report_sentinels(self, tmp_path, capsys):
        # sigma 0: input == target, identity restoration is perfect
        config, _ = _make_dataset(
            tmp_path / "data",
            config_text=BASE_CONFIG.replace("noise_sigma = 25", "noise_sigma = 0"))
        ckpt = _identity_checkpoint(tmp_path, config)
        assert cli.cmd_eval(str(config), str(ckpt)) == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        for row in lines[2:]:
            assert row.split("\t")[1] == "inf"
            assert float(row.split("\t")[2]) == 1.0

    def test_checkpoint_mismatch_exits_2(self, tmp_path, capsys):
        config, _ = _make_dataset(tmp_path / "data")
        ckpt = _identity_checkpoint(tmp_path, config)
        bigger = tmp_path / "data" / "big.txt"
        bigger.write_text(BASE_CONFIG + "network.base_channels = 16\n")
        assert cli.cmd_eval(str(bigger), str(ckpt)) == cli.EXIT_CONFIG
        assert "head.weight" in capsys.readouterr().err

    def test_y_channel_mode_in_header(self, tmp_path, capsys):
        config, _ = _make_dataset(
            tmp_path / "data",
            config_text=BASE_CONFIG + "eval.channel_mode = y_channel\n")
        ckpt = _identity_checkpoint(tmp_path, config)
        cli.cmd_eval(str(config), str(ckpt))
        assert capsys.readouterr().out.startswith("# channel_mode=y_channel")


class TestInferCommand:
    def test_identity_round_trip_with_padding(self, tmp_path):
        # 30x30 is not divisible by the stream divisor; reflect-pad + crop
        # must return the original pixels bit-exactly for an identity net.
        config, _ = _make_dataset(tmp_path / "data")
        ckpt = _identity_checkpoint(tmp_path, config)
        src = D.ImageBuffer(
            RNG(5).integers(0, 256, (30, 30, 3), dtype=np.uint8))
        D.save_ppm(src, tmp_path / "in.ppm")
        rc = cli.cmd_infer(str(config), str(ckpt),
                           str(tmp_path / "in.ppm"), str(tmp_path / "out.ppm"))
        assert rc == cli.EXIT_OK
        out = D.load_ppm(tmp_path / "out.ppm")
        assert np.array_equal(out.pixels, src.pixels)

    def test_missing_checkpoint_exits_2(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        src = tmp_path / "in.ppm"
        D.save_ppm(_smooth_image(1), src)
        rc = cli.cmd_infer(str(config), str(tmp_path / "nope.ckpt"),
                           str(src), str(tmp_path / "out.ppm"))
        assert rc == cli.EXIT_CONFIG

    def test_bad_input_image_exits_3(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        ckpt = _identity_checkpoint(tmp_path, config)
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n4 4\n255\nxx")
        rc = cli.cmd_infer(str(config), str(ckpt),
                           str(bad), str(tmp_path / "out.ppm"))
        assert rc == cli.EXIT_DATA


class TestGradcheckCommand:
    def test_clean_suite_passes(self, capsys):
        assert cli.cmd_gradcheck() == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "network\t" in out and "FAIL" not in out

    def test_corrupted_backward_detected_and_named(self, capsys):
        assert cli.cmd_gradcheck(corrupt="dau") == cli.EXIT_VERIFY
        captured = capsys.readouterr()
        assert "dau" in captured.err


class TestAblateCommand:
    def test_aggregation_counts(self, tmp_path, capsys):
        config, _ = _make_dataset(tmp_path / "data")
        out = tmp_path / "ablate"
        assert cli.cmd_ablate("aggregation", str(config), str(out)) == cli.EXIT_OK
        text = (out / "aggregation.txt").read_text()
        assert "sum\t0" in text
        assert "concat\t12288" in text
        assert "skff\t2049" in text
        assert f"concat_to_skff_ratio\t{12288 / 2049:.3f}" in text

    def test_layout_grid(self, tmp_path, capsys):
        config, _ = _make_dataset(tmp_path / "data")
        out = tmp_path / "ablate"
        assert cli.cmd_ablate("layout", str(config), str(out)) == cli.EXIT_OK
        rows = (out / "layout.txt").read_text().strip().splitlines()
        assert rows[0] == "rows\tcols\tparameters\tpsnr_db"
        assert len(rows) == 10
        counts = {}
        for row in rows[1:]:
            r, c, total, cell = row.split("\t")
            counts[(int(r), int(c))] = int(total)
            assert cell == "-"
        # capacity grows along both axes of the grid
        assert counts[(2, 1)] > counts[(1, 1)]
        assert counts[(1, 2)] > counts[(1, 1)]
        assert counts[(3, 3)] == max(counts.values())

    def test_unknown_ablation_exits_2(self, tmp_path):
        config, _ = _make_dataset(tmp_path / "data")
        assert cli.cmd_ablate("dropout", str(config),
                              str(tmp_path / "x")) == cli.EXIT_CONFIG


class TestMainEntry:
    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            cli.main([])

    def test_train_and_eval_wiring(self, tmp_path, capsys):
        config, manifest = _make_dataset(tmp_path / "data")
        out = tmp_path / "run"
        assert cli.main(["train", "--config", str(config),
                         "--out", str(out)]) == cli.EXIT_OK
        assert cli.main(["eval", "--config", str(config),
                         "--checkpoint", str(out / "final.ckpt"),
                         "--manifest", str(manifest)]) == cli.EXIT_OK
        assert "aggregate\t" in capsys.readouterr().out
