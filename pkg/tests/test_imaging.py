import math

import numpy as np
import pytest
from PIL import Image

from sufernobwa.errors import (
    InvalidChannels,
    InvalidParameter,
    IoError,
    NotFound,
    UnsupportedFormat,
)
from sufernobwa.imaging import (
    ImageBuffer,
    box_mean,
    canny_edges,
    correlate1d,
    correlate1d_adjoint,
    gaussian_blur,
    gaussian_kernel1d,
    load_image,
    resize_bilinear,
    save_edges,
    save_image,
    to_grayscale,
)


def reflect_index(i, n):
    # mirror without repeating the edge sample, repeated as often as needed
    period = 2 * (n - 1) if n > 1 else 1
    i = i % period if n > 1 else 0
    return period - i if i >= n else i


def dense_filter(x, kernel2d):
    """Direct 2-D correlation with reflect boundary handling."""
    h, w = x.shape
    r = kernel2d.shape[0] // 2
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    acc += kernel2d[di + r, dj + r] * x[reflect_index(i + di, h), reflect_index(j + dj, w)]
            out[i, j] = acc
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- I/O ---------------------------------------------------------------------


def test_load_black_and_white(tmp_path):
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "k.png")
    Image.fromarray(np.full((4, 4, 3), 255, np.uint8)).save(tmp_path / "w.png")
    black = load_image(tmp_path / "k.png")
    white = load_image(tmp_path / "w.png")
    assert black.range_tag == "unit" and black.channels == 1
    assert np.all(black.data == 0.0)
    assert np.all(white.data == 1.0) and white.channels == 3


def test_load_errors(tmp_path):
    with pytest.raises(NotFound):
        load_image(tmp_path / "missing.png")
    Image.fromarray(np.zeros((4, 4, 4), np.uint8)).save(tmp_path / "rgba.png")
    with pytest.raises(UnsupportedFormat):
        load_image(tmp_path / "rgba.png")
    Image.fromarray(np.zeros((4, 4), np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(UnsupportedFormat):
        load_image(tmp_path / "deep.png")
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "x.jpg")
    with pytest.raises(UnsupportedFormat):
        load_image(tmp_path / "x.jpg")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(UnsupportedFormat):
        load_image(tmp_path / "junk.png")


def test_save_quantization(tmp_path):
    save_image(ImageBuffer(np.full((3, 3, 1), 0.5)), tmp_path / "half.png")
    assert np.all(np.asarray(Image.open(tmp_path / "half.png")) == 128)
    save_image(ImageBuffer(np.full((3, 3, 3), -1.0), "signed"), tmp_path / "neg.png")
    assert np.all(np.asarray(Image.open(tmp_path / "neg.png")) == 0)


def test_save_unwritable(tmp_path):
    with pytest.raises(IoError):
        save_image(ImageBuffer(np.zeros((2, 2, 1))), tmp_path / "nope" / "x.png")


def test_round_trip_bound_and_idempotence(tmp_path, rng):
    img = ImageBuffer.from_array(rng.random((7, 5, 3)))
    save_image(img, tmp_path / "a.png")
    back = load_image(tmp_path / "a.png")
    assert np.max(np.abs(back.data - img.data)) <= 1 / 255 + 1e-12
    save_image(back, tmp_path / "b.png")
    save_image(load_image(tmp_path / "b.png"), tmp_path / "c.png")
    assert (tmp_path / "b.png").read_bytes() == (tmp_path / "c.png").read_bytes()


def test_edges_saved_as_0_255(tmp_path):
    img = ImageBuffer(np.tile((np.arange(16) >= 8).astype(float), (16, 1)))
    save_edges(canny_edges(img), tmp_path / "e.png")
    assert set(np.unique(np.asarray(Image.open(tmp_path / "e.png")))) == {0, 255}


def test_range_check():
    with pytest.raises(InvalidParameter):
        ImageBuffer.from_array(np.full((2, 2, 1), 1.5))
    ImageBuffer.from_array(np.full((2, 2, 1), 1.0 + 5e-7))
    with pytest.raises(InvalidChannels):
        ImageBuffer(np.zeros((2, 2, 2)))


# -- grayscale ---------------------------------------------------------------


def test_grayscale_cases(rng):
    gray = to_grayscale(ImageBuffer(np.full((1, 1, 3), 0.37)))
    assert gray.data[0, 0, 0] == pytest.approx(0.37, abs=1e-15)
    red = to_grayscale(ImageBuffer(np.array([[[1.0, 0.0, 0.0]]])))
    assert red.data[0, 0, 0] == pytest.approx(0.299, abs=1e-15)
    x = rng.random((3, 3, 3))
    y = to_grayscale(ImageBuffer(x)).data[:, :, 0]
    for i in range(3):
        for j in range(3):
            r, g, b = x[i, j]
            assert y[i, j] == pytest.approx(0.299 * r + 0.587 * g + 0.114 * b, abs=1e-15)
    with pytest.raises(InvalidChannels):
        to_grayscale(ImageBuffer(np.zeros((2, 2, 1))))


# -- filters -----------------------------------------------------------------


def test_gaussian_constant_and_impulse():
    c = ImageBuffer(np.full((9, 11, 3), 0.3))
    out = gaussian_blur(c, 1.5).data
    assert np.ptp(out) == 0.0
    assert out[0, 0, 0] == pytest.approx(0.3, abs=1e-12)

    sigma = 1.0
    k1 = gaussian_kernel1d(sigma)
    assert len(k1) == 2 * math.ceil(3 * sigma) + 1
    n = 21
    imp = np.zeros((n, n, 1))
    imp[n // 2, n // 2] = 1.0
    resp = gaussian_blur(ImageBuffer(imp), sigma).data[:, :, 0]
    r = len(k1) // 2
    patch = resp[n // 2 - r : n // 2 + r + 1, n // 2 - r : n // 2 + r + 1]
    np.testing.assert_allclose(patch, np.outer(k1, k1), atol=1e-15)
    assert resp.sum() == pytest.approx(1.0, abs=1e-6)


def test_gaussian_matches_dense_oracle(rng):
    x = rng.random((8, 8))
    sigma = 2.0
    k1 = gaussian_kernel1d(sigma)
    oracle = dense_filter(x, np.outer(k1, k1))
    out = gaussian_blur(ImageBuffer(x), sigma).data[:, :, 0]
    np.testing.assert_allclose(out, oracle, atol=1e-6)


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(InvalidParameter):
        gaussian_blur(ImageBuffer(np.zeros((3, 3, 1))), 0.0)


def test_box_mean_cases(rng):
    c = box_mean(ImageBuffer(np.full((5, 5, 1), 0.7)), 2).data
    np.testing.assert_allclose(c, 0.7, atol=1e-15)
    rows = np.tile(np.array([0.0, 1.0, 2.0])[:, None], (1, 3))
    assert box_mean(ImageBuffer(rows), 1).data[1, 1, 0] == pytest.approx(1.0)

    x = rng.random((8, 8))
    oracle = np.zeros_like(x)
    for i in range(8):
        for j in range(8):
            vals = [x[reflect_index(i + a, 8), reflect_index(j + b, 8)]
                    for a in range(-2, 3) for b in range(-2, 3)]
            oracle[i, j] = sum(vals) / len(vals)
    np.testing.assert_allclose(box_mean(ImageBuffer(x), 2).data[:, :, 0], oracle, atol=1e-7)
    with pytest.raises(InvalidParameter):
        box_mean(ImageBuffer(x), 0)


def test_filters_linear_and_bounded(rng):
    a, b = rng.random((8, 8, 1)), rng.random((8, 8, 1))
    for f in (lambda im: gaussian_blur(im, 1.3), lambda im: box_mean(im, 2)):
        lhs = f(ImageBuffer(0.3 * a + 0.6 * b)).data
        rhs = 0.3 * f(ImageBuffer(a)).data + 0.6 * f(ImageBuffer(b)).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)
        out = f(ImageBuffer(a)).data
        assert out.shape == a.shape
        assert out.min() >= -1e-12 and out.max() <= 1 + 1e-12


def test_correlate_adjoint_identity(rng):
    # <A x, y> == <x, A^T y> for the reflect-padded correlation
    for n, klen in ((8, 5), (3, 7), (1, 3)):
        w = rng.random(klen)
        x, y = rng.random((n, 4)), rng.random((n, 4))
        lhs = np.sum(correlate1d(x, w, 0) * y)
        rhs = np.sum(x * correlate1d_adjoint(y, w, 0))
        assert lhs == pytest.approx(rhs, rel=1e-12)


# -- resize ------------------------------------------------------------------


def test_resize_identity_and_shape(rng):
    img = ImageBuffer(rng.random((6, 5, 3)))
    assert np.array_equal(resize_bilinear(img, 6, 5).data, img.data)
    big = ImageBuffer(np.zeros((512, 512, 3)))
    assert resize_bilinear(big, 256, 256).shape == (256, 256, 3)
    with pytest.raises(InvalidParameter):
        resize_bilinear(img, 0, 3)


def test_resize_checkerboard_oracle():
    src = np.array([[0.0, 1.0], [1.0, 0.0]])

    def oracle(y, x):
        # pixel-center mapping, clamped, then the bilinear formula by hand
        sy = min(max((y + 0.5) * 0.5 - 0.5, 0.0), 1.0)
        sx = min(max((x + 0.5) * 0.5 - 0.5, 0.0), 1.0)
        return (src[0, 0] * (1 - sy) * (1 - sx) + src[0, 1] * (1 - sy) * sx
                + src[1, 0] * sy * (1 - sx) + src[1, 1] * sy * sx)

    out = resize_bilinear(ImageBuffer(src), 4, 4).data[:, :, 0]
    expected = np.array([[oracle(y, x) for x in range(4)] for y in range(4)])
    np.testing.assert_allclose(out, expected, atol=1e-15)
    # spot values: corners stay put, interior quarter-offsets blend 3:1
    assert out[0, 0] == 0.0 and out[0, 3] == 1.0
    assert out[1, 1] == pytest.approx(0.375)


# -- Canny -------------------------------------------------------------------


def canny_oracle(gray255, lo, hi, sigma=1.4):
    """Stage-by-stage Canny with explicit loops (independent of the vectorized path)."""
    h, w = gray255.shape
    k1 = gaussian_kernel1d(sigma)
    smooth = dense_filter(gray255, np.outer(k1, k1))
    sx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], float)
    gx = dense_filter(smooth, sx)
    gy = dense_filter(smooth, sx.T)
    mag = np.hypot(gx, gy)
    thin = np.zeros_like(mag)
    tol = 1e-9 * mag.max()
    for i in range(h):
        for j in range(w):
            ang = math.degrees(math.atan2(gy[i, j], gx[i, j])) % 180
            if ang < 22.5 or ang >= 157.5:
                d = (0, 1)
            elif ang < 67.5:
                d = (1, 1)
            elif ang < 112.5:
                d = (1, 0)
            else:
                d = (1, -1)

            def at(r, c):
                return mag[r, c] if 0 <= r < h and 0 <= c < w else 0.0

            ahead, behind = at(i + d[0], j + d[1]), at(i - d[0], j - d[1])
            if mag[i, j] > 0 and mag[i, j] > behind + tol and mag[i, j] >= ahead - tol:
                thin[i, j] = mag[i, j]
    edges = thin >= hi
    changed = True
    while changed:
        changed = False
        for i in range(h):
            for j in range(w):
                if edges[i, j] or thin[i, j] < lo:
                    continue
                nb = edges[max(0, i - 1) : i + 2, max(0, j - 1) : j + 2]
                if nb.any():
                    edges[i, j] = True
                    changed = True
    return edges.astype(np.uint8)


def test_canny_constant_is_empty():
    assert canny_edges(ImageBuffer(np.full((16, 16, 3), 0.4))).data.sum() == 0


def test_canny_vertical_step():
    step = np.tile((np.arange(16) >= 8).astype(float), (16, 1))
    edges = canny_edges(ImageBuffer(step), 100, 200).data
    cols = np.nonzero(edges.any(axis=0))[0]
    assert len(cols) == 1, "edge must be one pixel wide"
    assert edges[:, cols[0]].all()
    np.testing.assert_array_equal(edges, canny_oracle(step * 255, 100, 200))


def test_canny_random_matches_oracle(rng):
    img = gaussian_blur(ImageBuffer(rng.random((12, 12, 1))), 0.8).data[:, :, 0]
    np.testing.assert_array_equal(canny_edges(ImageBuffer(img), 20, 40).data,
                                  canny_oracle(img * 255, 20, 40))


def test_canny_thresholds():
    with pytest.raises(InvalidParameter):
        canny_edges(ImageBuffer(np.zeros((8, 8, 1))), 200, 100)
