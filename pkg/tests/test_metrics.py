import numpy as np
import pytest
import torch

from oracles import l1_percent_naive, psnr_naive, ssim_naive, tv_percent_naive
from textfill.metrics import (
    MetricsReport,
    l1_percent,
    metric_delta,
    psnr,
    ssim,
    to_unit,
    tv_percent,
)


def rand_pair(rng, c=3, h=16, w=16):
    return rng.uniform(0, 1, (c, h, w)), rng.uniform(0, 1, (c, h, w))


class TestL1:
    def test_identical_is_zero(self):
        a = np.random.default_rng(0).uniform(0, 1, (3, 8, 8))
        assert l1_percent(a, a) == 0.0

    def test_constant_offset(self):
        a = np.zeros((3, 8, 8))
        assert l1_percent(a, a + 0.1) == pytest.approx(10.0)

    def test_symmetry_and_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a, b = rand_pair(rng)
            assert l1_percent(a, b) == pytest.approx(l1_percent(b, a), abs=1e-12)
            assert l1_percent(a, b) == pytest.approx(l1_percent_naive(a, b), abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            l1_percent(np.zeros((3, 4, 4)), np.zeros((3, 5, 5)))


class TestPSNR:
    def test_identical_capped_at_100(self):
        a = np.random.default_rng(2).uniform(0, 1, (3, 8, 8))
        assert psnr(a, a) == 100.0

    def test_mse_001_gives_20db(self):
        a = np.zeros((1, 10, 10))
        b = np.full((1, 10, 10), 0.1)  # mse = 0.01
        assert psnr(a, b) == pytest.approx(20.0)

    def test_symmetry_and_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a, b = rand_pair(rng)
            assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)
            assert psnr(a, b) == pytest.approx(psnr_naive(a, b), abs=1e-6)

    def test_near_identical_still_capped(self):
        a = np.zeros((1, 8, 8))
        b = a.copy()
        b[0, 0, 0] = 1e-12
        assert psnr(a, b) == 100.0


class TestTV:
    def test_constant_is_zero(self):
        assert tv_percent(np.full((3, 8, 8), 0.7)) == 0.0

    def test_vertical_step_hand_computed(self):
        # 0 | 1 step at column 4 of an 8x8 single-channel image: each of the
        # 7 interior rows crosses the step once -> 7 unit jumps over 49 sites
        img = np.zeros((1, 8, 8))
        img[:, :, 4:] = 1.0
        assert tv_percent(img) == pytest.approx(100.0 * 7 / 49)

    def test_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a, _ = rand_pair(rng)
            assert tv_percent(a) == pytest.approx(tv_percent_naive(a), abs=1e-6)


class TestSSIM:
    def test_identical_is_exactly_one(self):
        a = np.random.default_rng(5).uniform(0, 1, (3, 16, 16))
        assert ssim(a, a) == 1.0

    def test_window_oracle_on_noise(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            a, b = rand_pair(rng)
            assert ssim(a, b) == pytest.approx(ssim_naive(a, b), abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        a, b = rand_pair(rng)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_image_smaller_than_window_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


def test_to_unit_maps_range():
    x = torch.tensor([[-1.0, 0.0, 1.0]])
    assert to_unit(x).tolist() == [[0.0, 0.5, 1.0]]
    assert to_unit(torch.tensor([[-2.0, 2.0]])).tolist() == [[0.0, 1.0]]


class TestReportShape:
    def test_delta_convention(self):
        assert metric_delta(3.53, 4.80) == pytest.approx(1.27)

    def test_report_delta_per_metric(self):
        rep = MetricsReport(n_images=2, image_size=64)
        center = {"l1_pct": 3.53, "psnr_db": 21.30, "tv_pct": 3.55, "ssim_pct": 84.63}
        obj = {"l1_pct": 4.80, "psnr_db": 20.89, "tv_pct": 3.34, "ssim_pct": 79.16}
        rep.modes["center"] = {"raw": center, "composited": center, "n_images": 2}
        rep.modes["object"] = {"raw": obj, "composited": obj, "n_images": 2}
        rep.finish()
        assert rep.delta["raw"]["l1_pct"] == pytest.approx(1.27)
        assert rep.delta["raw"]["psnr_db"] == pytest.approx(0.41)
        assert rep.delta["raw"]["ssim_pct"] == pytest.approx(5.47)
        d = rep.to_dict()
        assert set(d) == {"n_images", "image_size", "modes", "delta"}
