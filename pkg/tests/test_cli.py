import json
import os
import subprocess
import sys
import time
import urllib.request

import numpy as np
import pytest

from gsv.cli import main
from gsv.container import emit_manifest
from gsv.pipeline import decode_video
from gsv.render import Camera, load_raw_floats, render_set, save_camera, write_raw_floats
from gsv.splatio import load_splat_points


def run_cli(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    frames_dir = base / "frames"
    assert run_cli(["synth", "--out", frames_dir, "--count", 120, "--frames", 4,
                    "--seed", 7, "--amplitude", 0.001,
                    "--rotation-amplitude", 0.01, "--scale-amplitude", 0.0004,
                    "--opacity-amplitude", 0.01, "--sh-amplitude", 0.004]) == 0
    out = base / "scene.gsv"
    assert run_cli(["encode", "--input", frames_dir, "--output", out,
                    "--prune-fraction", 0.0, "--seed", 1,
                    "--report", base / "report.json"]) == 0
    cam = Camera.looking_at(eye=(0, 0, -2.5), target=(0, 0, 0), width=64, height=64)
    cam_path = base / "cam.json"
    save_camera(cam, cam_path)
    return base, frames_dir, out, cam_path


class TestSynthEncode:
    def test_synth_wrote_frames(self, workspace):
        _, frames_dir, _, _ = workspace
        files = sorted(frames_dir.glob("*.splat"))
        assert len(files) == 4
        assert len(load_splat_points(files[0])) == 120

    def test_encode_outputs(self, workspace):
        base, _, out, _ = workspace
        assert out.exists()
        assert (out.parent / "manifest.json").exists()
        report = json.loads((base / "report.json").read_text())
        assert report["frame_count"] == 4
        assert report["config"]["layer_count"] == 6
        assert report["config"]["volume_weight"] == 1e5

    def test_encode_deterministic(self, workspace, tmp_path):
        _, frames_dir, out, _ = workspace
        for sub in ("r1", "r2"):
            (tmp_path / sub).mkdir()
            assert run_cli(["encode", "--input", frames_dir,
                            "--output", tmp_path / sub / "scene.gsv",
                            "--prune-fraction", 0.0, "--seed", 1]) == 0
        assert (tmp_path / "r1/scene.gsv").read_bytes() == \
            (tmp_path / "r2/scene.gsv").read_bytes()
        assert (tmp_path / "r1/scene.gsv").read_bytes() == out.read_bytes()

    def test_defaults_mirror_reference_settings(self):
        from gsv.cli import build_parser

        parser = build_parser()
        args = parser.parse_args(["encode", "--input", "x", "--output", "y"])
        assert args.layers == 6
        assert args.volume_weight == 1e5
        assert args.motion_threshold == 0.0025
        assert args.prune_fraction == 0.4


class TestDecodeRender:
    def test_decode_then_reencode_sizes_within_1_percent(self, workspace, tmp_path):
        base, _, out, _ = workspace
        dec_dir = tmp_path / "decoded"
        assert run_cli(["decode", "--input", out, "--out-dir", dec_dir]) == 0
        assert len(list(dec_dir.glob("*.splat"))) == 4
        re_out = tmp_path / "re.gsv"
        assert run_cli(["encode", "--input", dec_dir, "--output", re_out,
                        "--prune-fraction", 0.0, "--seed", 1]) == 0
        a = json.loads((base / "report.json").read_text())["payload_bytes"]
        b = emit_manifest(re_out)
        b_payload = sum(g.cum_bytes[-1] for g in b.groups)
        assert b_payload == pytest.approx(a, rel=0.01)

    def test_render_full_depth_matches_library_path(self, workspace, tmp_path):
        _, _, out, cam_path = workspace
        img_path = tmp_path / "f0.ppm"
        raw_path = tmp_path / "f0.npy"
        assert run_cli(["render", "--input", out, "--frame", 0, "--camera", cam_path,
                        "--out", img_path, "--raw", raw_path]) == 0
        from gsv.render import load_camera

        video = decode_video(out)
        expected = render_set(video.frame(0), load_camera(cam_path))
        got = load_raw_floats(raw_path)
        assert np.array_equal(expected.pixels, got.pixels)
        assert img_path.read_bytes().startswith(b"P6\n64 64\n255\n")

    def test_layer_prefix_render(self, workspace, tmp_path):
        _, _, out, cam_path = workspace
        assert run_cli(["render", "--input", out, "--frame", 1, "--camera", cam_path,
                        "--layer", 2, "--out", tmp_path / "l2.ppm"]) == 0


class TestAnalyze:
    def test_self_comparison_is_zero(self, workspace, tmp_path):
        _, _, out, cam_path = workspace
        from gsv.render import load_camera

        cam = load_camera(cam_path)
        gt_dir = tmp_path / "gt"
        gt_dir.mkdir()
        video = decode_video(out)
        for t in range(video.frame_count):
            write_raw_floats(render_set(video.frame(t), cam),
                             gt_dir / f"frame_{t:04d}.npy")
        frames_dir = workspace[1]
        low = tmp_path / "low.gsv"
        assert run_cli(["encode", "--input", frames_dir,
                        "--output", low, "--prune-fraction", 0.5, "--seed", 1]) == 0
        csv_path = tmp_path / "rd.csv"
        assert run_cli(["analyze", "--inputs", out, low, "--gt-dir", gt_dir,
                        "--camera", cam_path, "--csv", csv_path]) == 0
        text = csv_path.read_text().splitlines()
        assert text[0] == "rate_unit,rate,psnr"
        assert len(text) == 3


class TestErrors:
    def test_missing_input_single_line_error(self, tmp_path, capsys):
        rc = main(["decode", "--input", str(tmp_path / "missing.gsv"),
                   "--out-dir", str(tmp_path)])
        assert rc == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("GSV-ERROR cmd=decode")

    def test_unknown_flag_is_hard_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["encode", "--input", "x", "--output", "y", "--bogus"])
        assert exc.value.code != 0

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("encode", "decode", "render", "serve", "analyze", "synth"):
            assert cmd in out


class TestServeCli:
    def test_serve_respects_gsv_port_env(self, workspace):
        _, _, out, _ = workspace
        env = dict(os.environ, GSV_PORT="0", PYTHONPATH="src")
        proc = subprocess.Popen(
            [sys.executable, "-m", "gsv.cli", "serve", "--input", str(out),
             "--port", "1"],  # env must override this unusable value
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=env, text=True)
        try:
            line = proc.stdout.readline()
            info = json.loads(line)
            url = info["url"]
            assert info["port"] != 1
            with urllib.request.urlopen(url + "/health", timeout=5) as r:
                assert r.read() == b"ok"
        finally:
            proc.terminate()
            proc.wait(timeout=10)
