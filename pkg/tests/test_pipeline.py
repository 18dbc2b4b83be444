import numpy as np
import pytest

from gsv.codec import CodecId
from gsv.container import emit_manifest
from gsv.errors import InvalidInputError
from gsv.pipeline import EncodeConfig, decode_video, encode_sequence
from gsv.synth import SceneSpec, gen_synthetic_scene


def channel_half_steps(manifest, group):
    steps = {}
    for layer in manifest.groups[group].channels:
        for c in layer:
            key = (c.attribute, c.component)
            step = (c.range_max - c.range_min) / (2 ** c.bits - 1)
            steps[key] = max(steps.get(key, 0.0), step / 2)
    return steps


def assert_round_trip(frames, result, video, group_starts=None):
    """Every decoded attribute within half a quantization step of the source."""
    starts = {g.start_frame: gi for gi, g in enumerate(video.groups)}
    gi = 0
    for t in range(len(frames)):
        if t in starts:
            gi = starts[t]
        order = result.group_orders[gi]
        steps = channel_half_steps(result.manifest, gi)
        src = frames[t].take(order)
        got = video.frame(t)
        eps = 1e-12
        assert np.abs(src.positions - got.positions).max() <= \
            max(steps[("position", c)] for c in range(3)) + eps
        e_plus = np.abs(src.rotations - got.rotations).max(axis=1)
        e_minus = np.abs(src.rotations + got.rotations).max(axis=1)
        assert np.minimum(e_plus, e_minus).max() <= \
            max(steps[("rotation", c)] for c in range(4)) + eps
        assert np.abs(src.scales - got.scales).max() <= \
            max(steps[("scales", c)] for c in range(3)) + eps
        assert np.abs(src.opacities - got.opacities).max() <= steps[("opacity", 0)] + eps
        shdim = src.sh.shape[1]
        assert np.abs(src.sh - got.sh).max() <= \
            max(steps[("sh", c)] for c in range(shdim)) + eps


class TestEncodeDecode:
    def test_round_trip_fidelity(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0)
        res = encode_sequence(moving_scene, cfg, tmp_path / "a.gsv")
        video = decode_video(tmp_path / "a.gsv")
        assert_round_trip(moving_scene, res, video)

    def test_decode_matches_encoder_reference_bit_exactly(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0)
        res = encode_sequence(moving_scene, cfg, tmp_path / "b.gsv", keep_reference=True)
        video = decode_video(tmp_path / "b.gsv")
        for t in range(len(moving_scene)):
            ref, got = res.reference_frames[t], video.frame(t)
            for name in ("positions", "rotations", "scales", "opacities", "sh"):
                assert np.array_equal(getattr(ref, name), getattr(got, name))

    def test_deterministic_output(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0)
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            encode_sequence(moving_scene, cfg, tmp_path / sub / "x.gsv")
        assert (tmp_path / "a/x.gsv").read_bytes() == (tmp_path / "b/x.gsv").read_bytes()
        assert (tmp_path / "a/manifest.json").read_bytes() == \
            (tmp_path / "b/manifest.json").read_bytes()

    def test_pruning_reduces_gaussians(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.4)
        res = encode_sequence(moving_scene, cfg, tmp_path / "p.gsv")
        n = len(moving_scene[0])
        kept = sum(res.manifest.groups[0].gauss_counts)
        assert kept == n - int(np.floor(0.4 * n))

    def test_adaptive_boundaries_on_bursts(self, tmp_path):
        tau = 0.0025
        amp = [0.2 * tau] * 10
        amp[4] = 2 * tau  # frame 5 bursts
        spec = SceneSpec(count=80, frames=11, amplitude=amp, redirect_frames=(5,))
        frames = gen_synthetic_scene(spec, seed=2)
        cfg = EncodeConfig(prune_fraction=0.0, motion_threshold=tau)
        res = encode_sequence(frames, cfg, tmp_path / "g.gsv")
        assert res.boundaries == (0, 5)

    def test_fixed_group_length(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0, fixed_group_length=2)
        res = encode_sequence(moving_scene, cfg, tmp_path / "f.gsv")
        assert res.boundaries == (0, 2, 4)
        video = decode_video(tmp_path / "f.gsv")
        assert [g.frame_count for g in video.groups] == [2, 2, 1]
        assert_round_trip(moving_scene, res, video)

    def test_zero_motion_residual_cost_under_2_percent(self, tmp_path):
        spec = SceneSpec(count=2500, frames=2, sh_degree=1)
        frames = gen_synthetic_scene(spec, seed=4)
        cfg = EncodeConfig(prune_fraction=0.0)
        two = encode_sequence(frames, cfg, tmp_path / "two.gsv",
                              manifest_path=tmp_path / "m2.json")
        one = encode_sequence(frames[:1], cfg, tmp_path / "one.gsv",
                              manifest_path=tmp_path / "m1.json")
        assert len(two.manifest.groups) == 1
        keyframe_bytes = one.report["payload_bytes"]
        residual_bytes = two.report["payload_bytes"] - keyframe_bytes
        assert residual_bytes < 0.02 * keyframe_bytes

    def test_position_bits_widen_on_large_scenes(self, tmp_path):
        spec = SceneSpec(count=60, frames=1, position_extent=200.0)
        frames = gen_synthetic_scene(spec, seed=6)
        cfg = EncodeConfig(prune_fraction=0.0, wide_extent=50.0)
        res = encode_sequence(frames, cfg, tmp_path / "wide.gsv")
        assert res.report["position_bits"] == 32
        assert res.manifest.groups[0].position_bits == 32
        small = gen_synthetic_scene(SceneSpec(count=60, frames=1), seed=6)
        res2 = encode_sequence(small, cfg, tmp_path / "narrow.gsv",
                               manifest_path=tmp_path / "mn.json")
        assert res2.report["position_bits"] == 16

    def test_raw_codec_round_trip(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0, codec=CodecId.RAW)
        res = encode_sequence(moving_scene, cfg, tmp_path / "raw.gsv")
        video = decode_video(tmp_path / "raw.gsv")
        assert_round_trip(moving_scene, res, video)

    def test_report_contents(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0)
        res = encode_sequence(moving_scene, cfg, tmp_path / "r.gsv")
        report = res.report
        assert report["frame_count"] == len(moving_scene)
        assert len(report["layer_bytes_total"]) == cfg.layer_count
        assert report["payload_bytes"] == sum(report["layer_bytes_total"])
        for tag in ("rotation", "scale", "opacity", "sh", "d_scale", "d_opacity", "d_sh"):
            assert tag in report["estimated_bits_per_symbol"]
        for attr in ("position", "rotation", "scales", "opacity", "sh"):
            assert attr in report["actual_bits_per_symbol"]
        assert report["wall_time_s"] > 0

    def test_layer_prefix_decode_sizes(self, tmp_path, moving_scene):
        cfg = EncodeConfig(prune_fraction=0.0)
        res = encode_sequence(moving_scene, cfg, tmp_path / "l.gsv")
        for l in (1, 3, 6):
            video = decode_video(tmp_path / "l.gsv", l)
            expect = sum(res.manifest.groups[0].gauss_counts[:l])
            assert len(video.frame(0)) == expect

    def test_empty_frames_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            encode_sequence([], EncodeConfig(), tmp_path / "no.gsv")

    def test_too_few_gaussians_for_layers(self, tmp_path):
        frames = gen_synthetic_scene(SceneSpec(count=3, frames=1), seed=1)
        with pytest.raises(InvalidInputError, match="empty"):
            encode_sequence(frames, EncodeConfig(prune_fraction=0.0),
                            tmp_path / "tiny.gsv")

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            EncodeConfig(layer_count=0).validate()
        with pytest.raises(InvalidInputError):
            EncodeConfig(layer_fractions=(0.7, 0.7)).validate()
        with pytest.raises(InvalidInputError):
            EncodeConfig(position_bits=12).validate()
        with pytest.raises(InvalidInputError):
            EncodeConfig(prune_fraction=1.0).validate()
        with pytest.raises(InvalidInputError):
            EncodeConfig(motion_threshold=0.0).validate()

    def test_paper_defaults_wired(self):
        cfg = EncodeConfig()
        assert cfg.layer_count == 6
        assert cfg.volume_weight == 1e5
        assert cfg.motion_threshold == 0.0025
        assert cfg.prune_fraction == 0.4
