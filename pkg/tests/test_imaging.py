import math

import numpy as np
import pytest
from PIL import Image as PILImage

from blindrestore.imaging import (
    DatasetSpec,
    ImageFormatError,
    load_image,
    psnr,
    read_manifest,
    save_image,
    ssim,
    synth_dataset,
    synth_image,
    write_manifest,
)
from blindrestore.numerics import ContractError


def reference_ssim(a, b):
    """Window-by-window SSIM with an explicit 2-D Gaussian; luma for RGB."""
    w601 = np.array([0.299, 0.587, 0.114])
    x = a.astype(np.float64) @ w601 if a.shape[-1] == 3 else a[..., 0].astype(np.float64)
    y = b.astype(np.float64) @ w601 if b.shape[-1] == 3 else b[..., 0].astype(np.float64)
    r = np.arange(11) - 5.0
    g1 = np.exp(-(r**2) / (2 * 1.5**2))
    g = np.outer(g1, g1)
    g /= g.sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            px, py = x[i:i + 11, j:j + 11], y[i:i + 11, j:j + 11]
            mx, my = (g * px).sum(), (g * py).sum()
            vx = (g * (px - mx) ** 2).sum()
            vy = (g * (py - my) ** 2).sum()
            cov = (g * (px - mx) * (py - my)).sum()
            vals.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


# -- PNG I/O -------------------------------------------------------------------------

def test_black_roundtrip_bytes(tmp_path):
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    save_image(np.zeros((8, 8, 3)), p1)
    save_image(load_image(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_endpoints_map_to_bytes(tmp_path):
    img = np.zeros((2, 2, 1), np.float32)
    img[0, 0] = 1.0
    save_image(img, tmp_path / "e.png")
    raw = np.asarray(PILImage.open(tmp_path / "e.png"))
    assert raw[0, 0] == 255 and raw[1, 1] == 0


def test_random_roundtrip_error(tmp_path, rng):
    img = rng.uniform(size=(16, 12, 3)).astype(np.float32)
    save_image(img, tmp_path / "r.png")
    assert np.max(np.abs(load_image(tmp_path / "r.png") - img)) <= 1 / 510 + 1e-7


def test_save_load_save_identical(tmp_path, rng):
    save_image(rng.uniform(size=(9, 7, 3)), tmp_path / "a.png")
    save_image(load_image(tmp_path / "a.png"), tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_non_png_rejected(tmp_path):
    PILImage.new("RGB", (4, 4)).save(tmp_path / "x.bmp", format="BMP")
    with pytest.raises(ImageFormatError, match="BMP"):
        load_image(tmp_path / "x.bmp")


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "nope.png")


def test_manifest_relative_paths(tmp_path):
    write_manifest(["a.png", "sub/b.png"], tmp_path / "manifest.txt")
    assert read_manifest(tmp_path / "manifest.txt") == [tmp_path / "a.png", tmp_path / "sub/b.png"]


# -- synthetic data --------------------------------------------------------------------

def test_synth_deterministic():
    a = synth_dataset(DatasetSpec(count=4, seed=7))
    b = synth_dataset(DatasetSpec(count=4, seed=7))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_checker_two_values():
    for i in range(10):
        assert len(np.unique(synth_image("checker", 3, i, 32))) == 2


def test_fractal_noise_has_texture():
    stds = [synth_image("fractal-noise", s, 0, 32).std() for s in range(100)]
    assert min(stds) >= 0.05


def test_dataset_in_unit_range():
    for img in synth_dataset(DatasetSpec(count=32, seed=1)):
        assert img.shape == (32, 32, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0


@pytest.mark.parametrize("kw", [{"count": 0}, {"size": 30}, {"generator": "stripes"}])
def test_invalid_spec(kw):
    with pytest.raises(ContractError):
        DatasetSpec(**kw)


# -- metrics --------------------------------------------------------------------------

def test_psnr_identical_is_inf():
    x = np.full((4, 4, 3), 0.3)
    assert psnr(x, x) == math.inf


def test_psnr_arithmetic():
    assert psnr(np.full((4, 4, 1), 0.5), np.full((4, 4, 1), 0.6)) == pytest.approx(20.0, abs=1e-9)
    assert psnr(np.zeros((4, 4, 1)), np.ones((4, 4, 1))) == 0.0


def test_psnr_mismatch():
    with pytest.raises(ContractError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_psnr_decreases_with_noise(rng):
    base = synth_dataset(DatasetSpec(count=20, seed=3))
    means = []
    for sigma in (0.01, 0.05, 0.1):
        means.append(np.mean([psnr(b, b + rng.normal(0, sigma, b.shape)) for b in base]))
    assert means[0] > means[1] > means[2]


def test_symmetry(rng):
    a, b = rng.uniform(size=(2, 16, 16, 3))
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_identical_and_constant(rng):
    a = rng.uniform(size=(16, 16, 3))
    assert ssim(a, a) == 1.0
    c = np.full((12, 12, 1), 0.5)
    assert ssim(c, c) == 1.0


def test_ssim_matches_reference(rng):
    a = rng.uniform(size=(20, 17, 3))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert abs(ssim(a, b) - reference_ssim(a, b)) <= 1e-5


def test_ssim_too_small():
    with pytest.raises(ContractError):
        ssim(np.zeros((10, 20, 1)), np.zeros((10, 20, 1)))
