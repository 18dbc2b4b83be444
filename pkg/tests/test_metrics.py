import numpy as np
import pytest

from gsv.errors import InvalidInputError
from gsv.metrics import (RdCurve, RdPoint, bd_psnr, bdbr, d_ssim, psnr,
                         read_rd_csv, ssim, write_rd_csv)
from gsv.render import Image
from oracles import bd_psnr_quadrature, bdbr_quadrature


def flat(value, size=32):
    return Image(pixels=np.full((size, size, 3), value, dtype=np.float64))


class TestPsnr:
    def test_identical_hits_cap(self):
        img = flat(0.3)
        assert psnr(img, img) == 99.0

    def test_mse_001_gives_20db(self):
        a, b = flat(0.0), flat(0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_full_range_error_gives_0db(self):
        assert psnr(flat(0.0), flat(1.0)) == pytest.approx(0.0, abs=1e-9)

    def test_monotone_in_noise_amplitude(self):
        rng = np.random.default_rng(0)
        base = Image(pixels=rng.uniform(0.3, 0.7, (16, 16, 3)))
        values = []
        for amp in (0.01, 0.02, 0.05, 0.1):
            noisy = Image(pixels=np.clip(
                base.pixels + rng.uniform(-amp, amp, base.pixels.shape), 0, 1))
            values.append(psnr(base, noisy))
        assert all(v1 > v2 for v1, v2 in zip(values, values[1:]))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            psnr(flat(0.0, 16), flat(0.0, 32))


class TestSsim:
    def test_identical(self):
        img = flat(0.5)
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)
        assert d_ssim(img, img) == pytest.approx(0.0, abs=1e-12)

    def test_constant_images_closed_form(self):
        mx, my = 0.5, 0.6
        value = (2 * mx * my + 0.01 ** 2) / (mx ** 2 + my ** 2 + 0.01 ** 2)
        assert ssim(flat(mx), flat(my)) == pytest.approx(value, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = Image(pixels=rng.uniform(0, 1, (24, 24, 3)))
        b = Image(pixels=rng.uniform(0, 1, (24, 24, 3)))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small_image(self):
        with pytest.raises(InvalidInputError):
            ssim(flat(0.5, 8), flat(0.5, 8))


def curve(points):
    return RdCurve(points=tuple(RdPoint(rate=r, psnr=p) for r, p in points))


ANCHOR = [(100.0, 30.0), (200.0, 32.0), (400.0, 34.0), (800.0, 36.0)]


class TestBd:
    def test_identical_curves_zero(self):
        a = curve(ANCHOR)
        assert bd_psnr(a, a) == pytest.approx(0.0, abs=1e-12)
        assert bdbr(a, a) == pytest.approx(0.0, abs=1e-9)

    def test_constant_offset_one_db(self):
        a = curve(ANCHOR)
        b = curve([(r, p + 1.0) for r, p in ANCHOR])
        assert bd_psnr(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_halved_rates_bdbr_minus_50(self):
        a = curve(ANCHOR)
        b = curve([(r / 2, p) for r, p in ANCHOR])
        value = bdbr(a, b)
        assert value == pytest.approx(-50.0, abs=0.5)
        oracle = bdbr_quadrature(ANCHOR, [(r / 2, p) for r, p in ANCHOR])
        assert value == pytest.approx(oracle, abs=1e-6)

    def test_bd_psnr_matches_quadrature_oracle(self):
        test_pts = [(90.0, 30.5), (210.0, 33.1), (390.0, 34.2), (900.0, 37.0)]
        a, b = curve(ANCHOR), curve(test_pts)
        assert bd_psnr(a, b) == pytest.approx(bd_psnr_quadrature(ANCHOR, test_pts), abs=1e-9)

    def test_antisymmetry(self):
        test_pts = [(120.0, 30.2), (240.0, 32.4), (500.0, 34.9), (760.0, 35.8)]
        a, b = curve(ANCHOR), curve(test_pts)
        assert bd_psnr(a, b) == pytest.approx(-bd_psnr(b, a), abs=1e-9)

    def test_bdbr_and_bdpsnr_opposite_signs(self):
        better = curve([(r * 0.7, p + 0.5) for r, p in ANCHOR])
        a = curve(ANCHOR)
        assert bd_psnr(a, better) > 0
        assert bdbr(a, better) < 0

    def test_small_curves_use_lower_degree(self):
        a = curve(ANCHOR[:2])
        b = curve([(r, p + 1.0) for r, p in ANCHOR[:2]])
        assert bd_psnr(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_no_overlap_rejected(self):
        a = curve([(10.0, 30.0), (20.0, 32.0)])
        b = curve([(1000.0, 40.0), (2000.0, 42.0)])
        with pytest.raises(InvalidInputError):
            bd_psnr(a, b)

    def test_curve_validation(self):
        with pytest.raises(InvalidInputError):
            curve([(100.0, 30.0)])
        with pytest.raises(InvalidInputError):
            curve([(100.0, 30.0), (100.0, 31.0)])
        with pytest.raises(InvalidInputError):
            RdPoint(rate=0.0, psnr=30.0)


class TestCsv:
    def test_round_trip(self, tmp_path):
        c = curve(ANCHOR)
        path = tmp_path / "rd.csv"
        write_rd_csv(c, path)
        text = path.read_text()
        assert text.splitlines()[0] == "rate_unit,rate,psnr"
        back = read_rd_csv(path)
        assert np.allclose(back.rates, c.rates)
        assert np.allclose(back.psnrs, c.psnrs)
        assert back.points[0].rate_unit == "MB/frame"
