import hashlib
import json
import threading
import urllib.request

import numpy as np
import pytest

from gsv.container import Manifest, ManifestGroup, emit_manifest, read_container_info
from gsv.errors import InvalidInputError
from gsv.pipeline import EncodeConfig, encode_sequence
from gsv.streaming import (BandwidthEstimate, PlaybackPolicy, client_play,
                           select_layer, serve, update_bandwidth)
from gsv.synth import SceneSpec, gen_synthetic_scene


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    d = tmp_path_factory.mktemp("stream")
    spec = SceneSpec(count=120, frames=8, sh_degree=1, amplitude=0.001,
                     rotation_amplitude=0.01, scale_amplitude=0.0004,
                     opacity_amplitude=0.01, sh_amplitude=0.004)
    frames = gen_synthetic_scene(spec, seed=31)
    cfg = EncodeConfig(prune_fraction=0.0, fixed_group_length=4)
    path = d / "stream.gsv"
    encode_sequence(frames, cfg, path)
    service = serve(path, port=0)
    yield path, service
    service.stop()


def fetch(url):
    with urllib.request.urlopen(url, timeout=5) as r:
        return r.status, r.read(), dict(r.headers)


class TestBandwidth:
    def test_first_sample_initializes(self):
        est = update_bandwidth(BandwidthEstimate(), nbytes=125_000, seconds=1.0)
        assert est.ewma_bps == pytest.approx(1e6)

    def test_convergence_to_constant(self):
        est = BandwidthEstimate()
        for _ in range(60):
            est = update_bandwidth(est, nbytes=125_000, seconds=1.0)
        assert est.ewma_bps == pytest.approx(1e6, rel=1e-9)

    def test_ewma_arithmetic(self):
        est = update_bandwidth(BandwidthEstimate(alpha=0.3), 125_000, 1.0)
        est = update_bandwidth(est, 375_000, 1.0)
        assert est.ewma_bps == pytest.approx(0.3 * 3e6 + 0.7 * 1e6)

    def test_bad_duration(self):
        with pytest.raises(InvalidInputError):
            update_bandwidth(BandwidthEstimate(), 100, 0.0)


def manifest_with_sizes(cum_mb, fps=30):
    layer_bytes = [int(cum_mb[0] * 1e6)]
    for prev, cur in zip(cum_mb, cum_mb[1:]):
        layer_bytes.append(int((cur - prev) * 1e6))
    cum = [int(c * 1e6) for c in cum_mb]
    group = ManifestGroup(start=0, frames=1, gauss_counts=(1,) * len(cum_mb),
                          position_bits=16, layer_bytes=tuple(layer_bytes),
                          cum_bytes=tuple(cum), channels=((),) * len(cum_mb))
    return Manifest(version=1, layers=len(cum_mb), fps=(fps, 1), sh_degree=1,
                    url="x.gsv", groups=(group,))


class TestSelectLayer:
    def test_unbounded_bandwidth_gives_top_layer(self):
        m = manifest_with_sizes([0.33, 0.66, 1.31])
        est = BandwidthEstimate(ewma_bps=float("inf"))
        assert select_layer(m, est) == 3

    def test_zero_bandwidth_floors_at_one(self):
        m = manifest_with_sizes([0.33, 0.66, 1.31])
        assert select_layer(m, BandwidthEstimate(ewma_bps=0.0)) == 1
        assert select_layer(m, BandwidthEstimate()) == 1

    def test_rate_arithmetic_example(self):
        # 0.66 MB * 30 fps * 8 = 158.4 Mb <= 0.8 * 200 Mb; 1.31 MB -> 314.4 > 160
        m = manifest_with_sizes([0.33, 0.66, 1.31], fps=30)
        est = BandwidthEstimate(ewma_bps=200e6)
        assert select_layer(m, est, safety=0.8) == 2

    def test_monotone_in_bandwidth(self):
        m = manifest_with_sizes([0.33, 0.66, 1.31], fps=30)
        picks = [select_layer(m, BandwidthEstimate(ewma_bps=b), 0.8)
                 for b in (1e6, 1e8, 2e8, 1e9)]
        assert picks == sorted(picks)
        assert picks[0] == 1 and picks[-1] == 3


class TestServer:
    def test_health(self, served):
        _, service = served
        status, body, _ = fetch(service.url + "/health")
        assert (status, body) == (200, b"ok")

    def test_manifest_byte_exact(self, served):
        path, service = served
        status, body, headers = fetch(service.url + "/manifest")
        assert status == 200
        assert body == emit_manifest(path).to_json_bytes()
        assert int(headers["Content-Length"]) == len(body)

    def test_segment_lengths_match_directory(self, served):
        path, service = served
        info = read_container_info(path)
        manifest = emit_manifest(path)
        for gi, g in enumerate(info.groups):
            for layer in range(info.layer_count):
                status, body, _ = fetch(
                    f"{service.url}/segment?group={gi}&layer={layer + 1}")
                assert status == 200
                assert len(body) == manifest.groups[gi].layer_bytes[layer]
                off, size = g.segment_range(layer)
                expected = path.read_bytes()[off:off + size]
                assert body == expected

    def test_layer_out_of_range_404(self, served):
        _, service = served
        with pytest.raises(urllib.error.HTTPError) as err:
            fetch(service.url + "/segment?group=0&layer=7")
        assert err.value.code == 404
        assert b"error" in err.value.read()

    def test_bad_params_404(self, served):
        _, service = served
        for q in ("/segment?group=0", "/segment?group=a&layer=1", "/segment?group=9&layer=1"):
            with pytest.raises(urllib.error.HTTPError) as err:
                fetch(service.url + q)
            assert err.value.code == 404

    def test_unknown_path_404(self, served):
        _, service = served
        with pytest.raises(urllib.error.HTTPError) as err:
            fetch(service.url + "/nope")
        assert err.value.code == 404


class TestClient:
    def test_unbounded_cap_fetches_everything(self, served):
        path, service = served
        manifest = emit_manifest(path)
        log = client_play(service.url, bandwidth_cap_bps=None)
        assert log.completed
        assert [g.layer for g in log.groups] == [manifest.layers] * len(manifest.groups)
        assert log.total_bytes == sum(g.cum_bytes[-1] for g in manifest.groups)

    def test_zero_cap_fetches_base_layer_only(self, served):
        path, service = served
        manifest = emit_manifest(path)
        log = client_play(service.url, bandwidth_cap_bps=0.0)
        assert log.completed
        assert [g.layer for g in log.groups] == [1] * len(manifest.groups)
        assert log.total_bytes == sum(g.layer_bytes[0] for g in manifest.groups)

    def test_mid_cap_matches_select_layer_arithmetic(self, served):
        path, service = served
        manifest = emit_manifest(path)
        fps = manifest.fps[0] / manifest.fps[1]
        # pick a cap that lands strictly between layer 2 and layer 3 rates
        rate_l2 = manifest.cum_bytes_per_frame(2, 0) * fps * 8
        rate_l3 = manifest.cum_bytes_per_frame(3, 0) * fps * 8
        cap = (rate_l2 + rate_l3) / 2 / 0.8
        expected = [select_layer(manifest, BandwidthEstimate(ewma_bps=cap), 0.8, g)
                    for g in range(len(manifest.groups))]
        log = client_play(service.url, bandwidth_cap_bps=cap)
        assert [g.layer for g in log.groups] == expected
        assert log.total_bytes == sum(
            manifest.groups[g].cum_bytes[l - 1]
            for g, l in enumerate(expected))

    def test_two_concurrent_clients_independent(self, served):
        path, service = served
        manifest = emit_manifest(path)
        results = {}

        def run(name, cap):
            results[name] = client_play(service.url, bandwidth_cap_bps=cap)

        t1 = threading.Thread(target=run, args=("full", None))
        t2 = threading.Thread(target=run, args=("base", 0.0))
        t1.start(); t2.start(); t1.join(); t2.join()
        assert results["full"].completed and results["base"].completed
        assert results["full"].total_bytes == sum(g.cum_bytes[-1] for g in manifest.groups)
        assert results["base"].total_bytes == sum(g.layer_bytes[0] for g in manifest.groups)
        # payload hashes match the container slices byte for byte
        info = read_container_info(path)
        blob = path.read_bytes()
        off, size = info.groups[0].segment_range(0)
        served_hash = hashlib.sha256(
            fetch(f"{service.url}/segment?group=0&layer=1")[1]).hexdigest()
        assert served_hash == hashlib.sha256(blob[off:off + size]).hexdigest()

    def test_dead_server_partial_log(self, served):
        path, _ = served
        temp = serve(path, port=0)
        url = temp.url
        temp.stop()
        log = client_play(url, PlaybackPolicy(timeout_s=0.5, retries=1))
        assert not log.completed
        assert log.error is not None
        assert log.groups == []

    def test_bytes_equal_sum_of_served_lengths(self, served):
        _, service = served
        log = client_play(service.url, bandwidth_cap_bps=None)
        assert log.total_bytes == sum(g.bytes for g in log.groups)
        assert all(g.decode_ms >= 0 for g in log.groups)
