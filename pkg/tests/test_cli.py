"""Command-line behavior: artifact layout, exit codes, report output."""

import numpy as np
import pytest

from hazeline.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from hazeline.io import load_image, load_scalar_map, read_keyvalues

SCENE_64 = """\
width: 64
height: 64
block_size: 16
near: 0.105
far: 0.916
beta: 1.0
airlight: 0.8 0.8 0.8
"""


def write_spec(path, text=SCENE_64, **overrides):
    lines = dict(line.split(":") for line in text.strip().splitlines())
    lines = {k.strip(): v.strip() for k, v in lines.items()}
    lines.update({k: str(v) for k, v in overrides.items()})
    path.write_text("".join(f"{k}: {v}\n" for k, v in lines.items()))
    return path


def parse_stdout(capsys):
    out = capsys.readouterr().out
    pairs = {}
    for line in out.strip().splitlines():
        key, _, value = line.partition(":")
        pairs[key.strip()] = value.strip()
    return pairs


@pytest.fixture(scope="module")
def batch_root(tmp_path_factory):
    """Three synthesized-and-dehazed scenes plus one broken directory."""
    root = tmp_path_factory.mktemp("batch")
    # block scenes have nearly identical neighbors, so the smoothness
    # weights sit at the 1/eps cap and the solve needs a long budget
    cfg = root / "config.txt"
    cfg.write_text("dcp_patch_size: 7\nmode: trans\ngamma: 1.0\nsolver_max_iter: 20000\n")
    for i in (1, 2, 3):
        scene_dir = root / f"s{i}"
        spec = write_spec(root / f"s{i}.txt", seed=i, radiance_seed=i)
        assert main(["synthesize", str(spec), "-o", str(scene_dir)]) == EXIT_OK
        code = main([
            "dehaze", str(scene_dir / "hazy.png"),
            "-o", str(scene_dir / "dehazed.png"), "--config", str(cfg),
        ])
        assert code == EXIT_OK
    (root / "zz_broken").mkdir()  # no images: must be skipped, not fatal
    return root


class TestSynthesize:
    def test_renders_identically_twice(self, tmp_path, capsys):
        spec = write_spec(tmp_path / "scene.txt")
        assert main(["synthesize", str(spec), "-o", str(tmp_path / "a")]) == EXIT_OK
        assert main(["synthesize", str(spec), "-o", str(tmp_path / "b")]) == EXIT_OK
        for name in ("hazy.png", "radiance.png", "transmission.png"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_beta_equals_radiance(self, tmp_path):
        spec = write_spec(tmp_path / "clear.txt", beta=0.0)
        main(["synthesize", str(spec), "-o", str(tmp_path / "out")])
        hazy = (tmp_path / "out" / "hazy.png").read_bytes()
        radiance = (tmp_path / "out" / "radiance.png").read_bytes()
        assert hazy == radiance

    def test_two_plane_transmission_has_two_levels(self, tmp_path):
        spec = write_spec(tmp_path / "scene.txt")
        main(["synthesize", str(spec), "-o", str(tmp_path / "out")])
        t = load_scalar_map(tmp_path / "out" / "transmission.png")
        assert len(np.unique(t)) == 2
        manifest = read_keyvalues(tmp_path / "out" / "manifest.txt")
        assert float(manifest["transmission_min"]) == pytest.approx(np.exp(-0.916), abs=1e-4)
        assert float(manifest["transmission_max"]) == pytest.approx(np.exp(-0.105), abs=1e-4)

    def test_unknown_key_exits_config(self, tmp_path, capsys):
        spec = tmp_path / "bad.txt"
        spec.write_text("widht: 64\n")
        assert main(["synthesize", str(spec), "-o", str(tmp_path / "out")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_missing_spec_exits_io(self, tmp_path, capsys):
        code = main(["synthesize", str(tmp_path / "absent.txt"), "-o", str(tmp_path / "out")])
        assert code == EXIT_IO
        assert "i/o error" in capsys.readouterr().err


class TestDehaze:
    def test_writes_and_announces_artifacts(self, batch_root, tmp_path, capsys):
        out = tmp_path / "result.png"
        code = main([
            "dehaze", str(batch_root / "s1" / "hazy.png"), "-o", str(out),
            "--config", str(batch_root / "config.txt"),
            "--dump-stages", str(tmp_path / "stages"),
        ])
        assert code == EXIT_OK
        paths = parse_stdout(capsys)
        assert set(paths) >= {"dehazed", "transmission", "report"}
        assert load_image(paths["dehazed"]).shape == (64, 64, 3)
        report = read_keyvalues(paths["report"])
        assert report["config.mode"] == "trans"
        assert (tmp_path / "stages" / "dark_channel.png").exists()
        assert (tmp_path / "stages" / "airlight_field.png").exists()

    def test_window_larger_than_image_exits_config(self, tmp_path, capsys):
        spec = write_spec(tmp_path / "tiny.txt", width=8, height=8)
        main(["synthesize", str(spec), "-o", str(tmp_path / "scene")])
        out_dir = tmp_path / "result"
        out_dir.mkdir()
        code = main([
            "dehaze", str(tmp_path / "scene" / "hazy.png"),
            "-o", str(out_dir / "dehazed.png"), "--patch", "15",
        ])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err
        assert list(out_dir.iterdir()) == []

    def test_solver_budget_exits_numeric(self, batch_root, tmp_path, capsys):
        cfg = tmp_path / "starved.txt"
        cfg.write_text("solver_max_iter: 1\nsolver_tol: 1e-12\n"
                       "dcp_patch_size: 7\nmode: trans\ngamma: 1.0\n")
        code = main([
            "dehaze", str(batch_root / "s1" / "hazy.png"),
            "-o", str(tmp_path / "never.png"), "--config", str(cfg),
        ])
        assert code == EXIT_NUMERIC
        assert "numeric error" in capsys.readouterr().err
        assert not (tmp_path / "never.png").exists()

    def test_unknown_config_key_exits_config(self, batch_root, tmp_path, capsys):
        cfg = tmp_path / "typo.txt"
        cfg.write_text("gama: 1.0\n")
        code = main([
            "dehaze", str(batch_root / "s1" / "hazy.png"),
            "-o", str(tmp_path / "out.png"), "--config", str(cfg),
        ])
        assert code == EXIT_CONFIG

    def test_missing_input_exits_io(self, tmp_path, capsys):
        code = main(["dehaze", str(tmp_path / "absent.png"), "-o", str(tmp_path / "out.png")])
        assert code == EXIT_IO


class TestEvaluate:
    def test_identical_pair_perfect_scores(self, batch_root, capsys):
        ref = batch_root / "s1" / "radiance.png"
        assert main(["evaluate", str(ref), str(ref)]) == EXIT_OK
        scores = parse_stdout(capsys)
        assert float(scores["mse"]) == 0.0
        assert float(scores["ssim"]) == pytest.approx(1.0, abs=1e-9)
        assert float(scores["psnr"]) == 100.0
        assert float(scores["wsnr"]) == 100.0

    def test_round_trip_scene_reports_transmission(self, batch_root, capsys):
        scene = batch_root / "s1"
        code = main([
            "evaluate", str(scene / "dehazed.png"), str(scene / "radiance.png"),
            "--t-est", str(scene / "dehazed_transmission.png"),
            "--t-true", str(scene / "transmission.png"),
            "--mask-sky",
        ])
        assert code == EXIT_OK
        scores = parse_stdout(capsys)
        assert {"mse", "psnr", "ssim", "wsnr", "t_l1", "mask_coverage"} <= set(scores)
        assert float(scores["mask_coverage"]) == 1.0  # no sky in this scene

    def test_mask_without_truth_exits_config(self, batch_root, capsys):
        ref = batch_root / "s1" / "radiance.png"
        code = main(["evaluate", str(ref), str(ref), "--mask-sky"])
        assert code == EXIT_CONFIG

    def test_missing_positional_exits_config(self, capsys):
        assert main(["evaluate"]) == EXIT_CONFIG

    def test_batch_aggregates_mean(self, batch_root, tmp_path, capsys):
        out = tmp_path / "report.txt"
        code = main(["evaluate", "--batch", str(batch_root), "-o", str(out)])
        assert code == EXIT_OK
        rows = read_keyvalues(out)
        assert rows["scenes_evaluated"] == "3"
        assert rows["scenes_failed"] == "1"
        assert "failed.zz_broken" in rows
        for key in ("mse", "psnr", "ssim", "wsnr", "t_l1"):
            per_scene = [float(rows[f"scene.s{i}.{key}"]) for i in (1, 2, 3)]
            assert float(rows[f"aggregate.{key}"]) == pytest.approx(
                np.mean(per_scene), rel=1e-9)

    def test_batch_of_nothing_exits_config(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["evaluate", "--batch", str(empty)]) == EXIT_CONFIG
