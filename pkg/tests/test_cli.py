import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

import ddsr
from ddsr import depth_io, metrics, network, resample, synthetic
from ddsr.cli import main


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    for i, m in enumerate(synthetic.scene_corpus(21, 3, 48, 48, noise=0.01)):
        depth_io.save_depth(m, root / f"map{i:02d}.pfm")
    return root


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("trainout")
    code = main(
        [
            "train",
            "--in", str(corpus_dir),
            "--factor", "2",
            "--units", "1",
            "--epochs", "2",
            "--batch", "8",
            "--learning-rate", "0.1",
            "--seed", "3",
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    return out


class TestDegrade:
    def test_writes_decimated_map_and_manifest(self, corpus_dir, tmp_path):
        src = sorted(corpus_dir.iterdir())[0]
        code = main(
            [
                "degrade",
                "--in", str(src),
                "--factor", "2",
                "--out", str(tmp_path / "lr.pfm"),
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        hr = depth_io.load_depth(src)
        lr = depth_io.load_depth(tmp_path / "lr.pfm")
        assert lr.shape == (24, 24)
        assert_allclose(lr.values, hr.values.astype(np.float32)[::2, ::2], atol=1e-7)

        manifest = json.loads((tmp_path / "manifest_degrade.json").read_text())
        assert manifest["command"] == "degrade"
        assert manifest["version"] == ddsr.__version__
        assert manifest["config"]["factor"] == 2
        assert manifest["inputs"] == [str(src)]
        assert "total" in manifest["timings"]

    def test_missing_required_flag_is_usage_error(self, corpus_dir, tmp_path, capsys):
        src = sorted(corpus_dir.iterdir())[0]
        with pytest.raises(SystemExit) as exc:
            main(["degrade", "--in", str(src), "--factor", "2", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2
        assert "--out" in capsys.readouterr().err

    def test_bad_factor_is_reported_not_raised(self, corpus_dir, tmp_path, capsys):
        src = sorted(corpus_dir.iterdir())[0]
        code = main(
            [
                "degrade",
                "--in", str(src),
                "--factor", "1",
                "--out", str(tmp_path / "lr.pfm"),
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_bad_thread_count_is_usage_error(self, corpus_dir, tmp_path):
        src = sorted(corpus_dir.iterdir())[0]
        with pytest.raises(SystemExit) as exc:
            main(
                [
                    "degrade",
                    "--in", str(src),
                    "--factor", "2",
                    "--out", str(tmp_path / "lr.pfm"),
                    "--threads", "0",
                ]
            )
        assert exc.value.code == 2


class TestConfigFile:
    def test_explicit_flags_beat_file_values(self, corpus_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# training defaults\n"
            f"in = {corpus_dir}\n"
            "factor = 2\n"
            "units = 1\n"
            "epochs = 2\n"
            "learning-rate = 0.05\n"
        )
        code = main(
            [
                "train",
                "--config", str(cfg),
                "--epochs", "1",
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        manifest = json.loads((tmp_path / "manifest_train.json").read_text())
        assert manifest["config"]["epochs"] == 1  # explicit flag
        assert manifest["config"]["learning_rate"] == 0.05  # from the file
        assert manifest["config"]["input"] == str(corpus_dir)

    def test_unknown_key_is_reported(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("granularity = 3\n")
        code = main(["stats", "--in", str(tmp_path), "--config", str(cfg)])
        assert code == 1
        assert "granularity" in capsys.readouterr().err

    def test_malformed_line_is_reported(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just some words\n")
        code = main(["stats", "--in", str(tmp_path), "--config", str(cfg)])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestTrain:
    def test_outputs_load_and_parse(self, trained):
        net = network.load_weights(trained / "weights.ddsr")
        assert len(net.units) == 1

        curves = json.loads((trained / "loss_curves.json").read_text())
        assert list(curves) == ["unit_1"]
        assert len(curves["unit_1"]) == 2
        assert all(v > 0 for v in curves["unit_1"])

        assert (trained / "loss_curves.png").stat().st_size > 0
        manifest = json.loads((trained / "manifest_train.json").read_text())
        assert manifest["config"]["seed"] == 3
        assert len(manifest["inputs"]) == 3
        assert str(trained / "weights.ddsr") in manifest["outputs"]
        assert set(manifest["timings"]) == {"load", "train", "write"}


class TestSr:
    def test_no_refine_upscales(self, corpus_dir, trained, tmp_path):
        src = sorted(corpus_dir.iterdir())[0]
        lr_path = tmp_path / "lr.pfm"
        assert main(["degrade", "--in", str(src), "--factor", "2",
                     "--out", str(lr_path), "--out-dir", str(tmp_path)]) == 0
        code = main(
            [
                "sr",
                "--in", str(lr_path),
                "--weights", str(trained / "weights.ddsr"),
                "--factor", "2",
                "--no-refine",
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        out = depth_io.load_depth(tmp_path / "sr.pfm")
        assert out.shape == (48, 48)
        manifest = json.loads((tmp_path / "manifest_sr.json").read_text())
        assert manifest["config"]["guidance_mode"] == "none"
        assert not (tmp_path / "refine_trace.jsonl").exists()

    def test_refined_run_writes_trace_and_stages(self, corpus_dir, trained, tmp_path):
        src = sorted(corpus_dir.iterdir())[1]
        lr_path = tmp_path / "lr.pfm"
        assert main(["degrade", "--in", str(src), "--factor", "2",
                     "--out", str(lr_path), "--out-dir", str(tmp_path)]) == 0
        code = main(
            [
                "sr",
                "--in", str(lr_path),
                "--weights", str(trained / "weights.ddsr"),
                "--factor", "2",
                "--lambda1", "1.5",
                "--lambda2", "0.003",
                "--irls-iters", "3",
                "--dump-stages",
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        for name in (
            "sr.pfm",
            "refine_trace.jsonl",
            "energy_trace.png",
            "stage_bicubic.pfm",
            "stage_unit1.pfm",
            "stage_refined.pfm",
            "stages.png",
            "manifest_sr.json",
        ):
            assert (tmp_path / name).exists(), name

        records = [
            json.loads(line)
            for line in (tmp_path / "refine_trace.jsonl").read_text().splitlines()
        ]
        assert records[0]["iteration"] == 0
        assert len(records) >= 2
        sm = [r["smoothed_energy"] for r in records]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(sm, sm[1:]))

        manifest = json.loads((tmp_path / "manifest_sr.json").read_text())
        assert manifest["config"]["guidance_mode"] == "self"
        stage = depth_io.load_depth(tmp_path / "stage_refined.pfm")
        final = depth_io.load_depth(tmp_path / "sr.pfm")
        assert_allclose(stage.values, final.values)

    def test_missing_weights_flag_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sr", "--in", "x.pfm", "--factor", "2", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2


class TestEval:
    def test_csv_matches_metrics(self, corpus_dir, tmp_path):
        gts = sorted(corpus_dir.iterdir())[:2]
        code = main(
            [
                "eval",
                "--gt", str(gts[0]), str(gts[1]),
                "--factor", "2",
                "--methods", "nn,bicubic",
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        lines = (tmp_path / "eval.csv").read_text().splitlines()
        assert lines[0] == "image,method,rmse,mae,ssim"
        assert len(lines) == 1 + 2 * 2
        assert [ln.split(",")[1] for ln in lines[1:]] == ["nn", "bicubic", "nn", "bicubic"]

        # cross-check the bicubic row of the first image against the library
        gt = depth_io.load_depth(gts[0])
        lr = resample.degrade(gt, 2)
        pred = resample.resize_bicubic(lr, gt.width, gt.height)
        report = metrics.evaluate_pair(pred, gt)
        cells = lines[2].split(",")
        assert cells[0] == gts[0].stem
        assert_allclose(float(cells[2]), report.rmse, rtol=1e-9)
        assert_allclose(float(cells[3]), report.mae, rtol=1e-9)
        assert_allclose(float(cells[4]), report.ssim, rtol=1e-9)

        rows = json.loads((tmp_path / "eval.json").read_text())
        assert len(rows) == 4
        assert (tmp_path / "eval_rmse.png").stat().st_size > 0

    def test_network_method_without_weights_is_reported(self, corpus_dir, tmp_path, capsys):
        gt = sorted(corpus_dir.iterdir())[0]
        code = main(
            ["eval", "--gt", str(gt), "--factor", "2",
             "--methods", "cnn_only", "--out-dir", str(tmp_path)]
        )
        assert code == 1
        assert "--weights" in capsys.readouterr().err

    def test_unknown_method_is_reported(self, corpus_dir, tmp_path, capsys):
        gt = sorted(corpus_dir.iterdir())[0]
        code = main(
            ["eval", "--gt", str(gt), "--factor", "2",
             "--methods", "bilinear", "--out-dir", str(tmp_path)]
        )
        assert code == 1
        assert "bilinear" in capsys.readouterr().err


class TestStats:
    def test_report_and_figure(self, corpus_dir, tmp_path):
        code = main(
            ["stats", "--in", str(corpus_dir), "--bins", "64", "--out-dir", str(tmp_path)]
        )
        assert code == 0
        report = json.loads((tmp_path / "stats.json").read_text())
        depth = report["depth"]
        assert set(depth) == {"location", "scale", "fit_rmse", "histogram", "bin_edges"}
        assert depth["scale"] > 0
        assert len(depth["histogram"]) == 64
        assert len(depth["bin_edges"]) == 65
        assert_allclose(sum(depth["histogram"]), 1.0)
        assert (tmp_path / "gradient_hist_depth.png").stat().st_size > 0
        manifest = json.loads((tmp_path / "manifest_stats.json").read_text())
        assert manifest["command"] == "stats"

    def test_empty_directory_is_reported(self, tmp_path, capsys):
        code = main(["stats", "--in", str(tmp_path), "--out-dir", str(tmp_path)])
        assert code == 1
        assert "no depth files" in capsys.readouterr().err
