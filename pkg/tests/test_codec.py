import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsv import _rc
from gsv.codec import (CodecId, CodedPayload, decode_planes,
                       decode_symbols_with_pmf, encode_planes,
                       encode_symbols_with_pmf, parse_payload_stream)
from gsv.errors import CodecError, InvalidInputError
from gsv.quantize import Plane
from gsv.rate import PmfTable, SymbolSamples, kde_pmf


def random_planes(count, h, w, bits, seed=0):
    rng = np.random.default_rng(seed)
    dt = {8: np.uint8, 16: np.uint16, 32: np.uint32}[bits]
    return [Plane(samples=rng.integers(0, 2 ** bits, size=(h, w),
                                       dtype=np.uint64).astype(dt),
                  valid_count=h * w)
            for _ in range(count)]


class TestRoundTrip:
    @pytest.mark.parametrize("bits", [8, 16, 32])
    @pytest.mark.parametrize("codec", [CodecId.RAW, CodecId.REFERENCE])
    def test_random_planes(self, bits, codec):
        planes = random_planes(3, 7, 9, bits, seed=bits)
        payload = encode_planes(planes, codec)
        blob = payload.to_bytes()
        parsed, end = CodedPayload.from_bytes(blob)
        assert end == len(blob)
        decoded = decode_planes(parsed)
        assert len(decoded) == 3
        for a, b in zip(planes, decoded):
            assert np.array_equal(a.samples, b.samples)

    @given(seed=st.integers(0, 1000), h=st.integers(1, 12), w=st.integers(1, 12),
           count=st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_reference_lossless_property(self, seed, h, w, count):
        planes = random_planes(count, h, w, 8, seed=seed)
        decoded = decode_planes(encode_planes(planes, CodecId.REFERENCE))
        for a, b in zip(planes, decoded):
            assert np.array_equal(a.samples, b.samples)

    def test_raw_size_exact(self):
        planes = random_planes(2, 16, 16, 16, seed=1)
        payload = encode_planes(planes, CodecId.RAW)
        assert len(payload.body) == 2 * 16 * 16 * 2
        assert payload.total_size == 14 + len(payload.body) + 4


class TestCompression:
    def test_constant_plane_under_3_percent(self):
        plane = Plane(samples=np.full((256, 256), 42, np.uint8), valid_count=256 * 256)
        payload = encode_planes([plane], CodecId.REFERENCE)
        assert payload.total_size <= 0.03 * 256 * 256

    def test_identical_consecutive_planes_zero_residuals(self):
        arr = np.random.default_rng(3).integers(0, 256, (20, 20)).astype(np.int64)
        residuals = _rc.plane_residuals(arr, arr, True, 8)
        assert np.all(residuals == 0)

    def test_incompressible_within_2_percent_of_raw(self):
        rng = np.random.default_rng(0)
        plane = Plane(samples=rng.integers(0, 256, (1000, 1000),
                                           dtype=np.uint64).astype(np.uint8),
                      valid_count=10 ** 6)
        payload = encode_planes([plane], CodecId.REFERENCE)
        assert payload.total_size <= 1.02 * 10 ** 6
        decoded = decode_planes(payload)
        assert np.array_equal(decoded[0].samples, plane.samples)

    @given(seed=st.integers(0, 50))
    @settings(max_examples=15, deadline=None)
    def test_size_guarantee_vs_raw(self, seed):
        planes = random_planes(1, 64, 64, 8, seed=seed)  # 4096 samples
        payload = encode_planes(planes, CodecId.REFERENCE)
        assert len(payload.body) <= 64 * 64 + 64


class TestCorruption:
    def test_truncated_payload(self):
        payload = encode_planes(random_planes(1, 8, 8, 8), CodecId.REFERENCE)
        blob = payload.to_bytes()
        with pytest.raises(CodecError):
            CodedPayload.from_bytes(blob[:10])
        with pytest.raises(CodecError):
            CodedPayload.from_bytes(blob[:-5])

    @pytest.mark.parametrize("codec", [CodecId.RAW, CodecId.REFERENCE])
    def test_single_bit_flip_detected(self, codec):
        payload = encode_planes(random_planes(2, 12, 12, 8, seed=9), codec)
        blob = bytearray(payload.to_bytes())
        rng = np.random.default_rng(1)
        for _ in range(20):
            i = int(rng.integers(14, len(blob)))
            flipped = bytearray(blob)
            flipped[i] ^= 1 << int(rng.integers(0, 8))
            parsed, _ = CodedPayload.from_bytes(bytes(flipped))
            with pytest.raises(CodecError):
                decode_planes(parsed)

    def test_unknown_codec(self):
        payload = encode_planes(random_planes(1, 4, 4, 8), CodecId.RAW)
        bad = CodedPayload(codec_id=9, bits=payload.bits, width=payload.width,
                           height=payload.height, count=payload.count,
                           body=payload.body, checksum=payload.checksum)
        with pytest.raises(CodecError, match="unknown codec"):
            decode_planes(bad)

    def test_external_codec_reserved(self):
        with pytest.raises(CodecError):
            encode_planes(random_planes(1, 4, 4, 8), CodecId.EXTERNAL_AVC)

    def test_mixed_geometry_rejected(self):
        a = random_planes(1, 4, 4, 8)[0]
        b = random_planes(1, 4, 5, 8)[0]
        with pytest.raises(InvalidInputError, match="mixed geometry"):
            encode_planes([a, b], CodecId.REFERENCE)


class TestPayloadStream:
    def test_parse_back_to_back(self):
        p1 = encode_planes(random_planes(1, 4, 4, 8, seed=1), CodecId.REFERENCE)
        p2 = encode_planes(random_planes(2, 5, 5, 16, seed=2), CodecId.RAW)
        blob = p1.to_bytes() + p2.to_bytes()
        parsed = parse_payload_stream(blob)
        assert [p.count for p in parsed] == [1, 2]
        assert [p.bits for p in parsed] == [8, 16]


class TestStaticCoder:
    def test_round_trip_uniform(self):
        rng = np.random.default_rng(0)
        table = PmfTable(support_min=0, support_max=255, probs=np.full(256, 1 / 256))
        syms = rng.integers(0, 256, size=5000)
        blob = encode_symbols_with_pmf(syms, table)
        out = decode_symbols_with_pmf(blob, table, syms.size)
        assert np.array_equal(out, syms)

    def test_matches_model_cross_entropy(self):
        rng = np.random.default_rng(1)
        samples = SymbolSamples(rng.normal(0, 4, size=20000).round(), "d_scale")
        table = kde_pmf(samples)
        blob = encode_symbols_with_pmf(samples.values, table)
        actual_bits = len(blob) * 8 / len(samples)
        est = -np.log2(np.maximum(table.probs_for(
            np.rint(samples.values).astype(np.int64)), 1e-12)).mean()
        assert abs(actual_bits - est) <= 0.1 * est

    def test_symbol_outside_support_rejected(self):
        table = PmfTable(support_min=0, support_max=3, probs=np.full(4, 0.25))
        with pytest.raises(InvalidInputError):
            encode_symbols_with_pmf(np.array([4]), table)
