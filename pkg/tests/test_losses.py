import numpy as np
import pytest

from oracles import central_diff, guided_residual, near_kink
from sufernobwa.errors import InvalidParameter, ShapeMismatch
from sufernobwa.imaging import ImageBuffer
from sufernobwa.losses import LossWeights, guided_loss, l2_loss, total_loss, water_loss
from sufernobwa.synthetic import synthetic_pair


def random_pair(rng, shape=(6, 6, 3)):
    return ImageBuffer(rng.random(shape)), ImageBuffer(rng.random(shape))


def test_l2_gradient():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pred, gt = random_pair(rng)
        _, grad = l2_loss(pred, gt)
        for idx in [tuple(rng.integers(0, s) for s in pred.shape) for _ in range(5)]:
            fd = central_diff(lambda d: l2_loss(ImageBuffer(d), gt)[0], pred.data, idx, 1e-5)
            assert abs(fd - grad[idx]) <= 1e-6 * max(abs(fd), 1e-8)


@pytest.mark.parametrize("smoothing", [False, True])
def test_guided_gradient(smoothing):
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(20):
        pred, gt = random_pair(rng, (6, 6, 1))
        _, grad = guided_loss(pred, gt, 1, 1e-4, smoothing)
        h = 1e-6
        for _ in range(8):
            idx = tuple(rng.integers(0, s) for s in pred.shape)
            if not smoothing and near_kink(pred.data, gt.data, idx):
                continue
            fd = central_diff(lambda d: guided_loss(ImageBuffer(d), gt, 1, 1e-4, smoothing)[0],
                              pred.data, idx, h)
            assert abs(fd - grad[idx]) <= 1e-4 * max(abs(fd), 1e-6), (fd, grad[idx])
            checked += 1
    assert checked >= 20


def test_guided_value_matches_naive():
    rng = np.random.default_rng(2)
    pred, gt = random_pair(rng, (7, 7, 1))
    value, _ = guided_loss(pred, gt, 1, 1e-4)
    resid = guided_residual(pred.data[:, :, 0], gt.data[:, :, 0], 1, 1e-4)
    assert value == pytest.approx(np.mean(np.abs(resid)), abs=1e-9)


def test_guided_constant_images_zero():
    a = ImageBuffer(np.full((8, 8, 3), 0.2))
    b = ImageBuffer(np.full((8, 8, 3), 0.7))
    value, grad = guided_loss(a, b)
    assert value == 0.0 and not grad.any()


def test_axioms_on_random_pairs():
    rng = np.random.default_rng(3)
    w = LossWeights()
    for _ in range(100):
        pred, gt = random_pair(rng, (12, 12, 3))
        rep, _ = total_loss(pred, gt)
        assert min(rep.l2, rep.guided, rep.water) >= 0
        assert abs(rep.total - (5 * rep.l2 + rep.guided + 0.5 * rep.water)) <= 1e-12
        same, grad = total_loss(gt, gt)
        assert (same.l2, same.guided, same.water, same.total) == (0.0, 0.0, 0.0, 0.0)
        assert not grad.any()
    assert w.as_tuple() == (5.0, 1.0, 0.5)


def test_signed_inputs_are_mapped():
    hazy, clear = synthetic_pair(16, 0)
    unit, g_unit = total_loss(hazy, clear)
    signed, g_signed = total_loss(hazy.to_signed(), clear.to_signed())
    assert signed.total == pytest.approx(unit.total, abs=1e-12)
    np.testing.assert_allclose(g_signed, 0.5 * g_unit, atol=1e-15)


def test_water_loss_modes():
    hazy, clear = synthetic_pair(32, 1)
    v_none, g_none = water_loss(hazy, clear)
    assert v_none >= 0 and not g_none.any()
    v_st, g_st = water_loss(hazy, clear, grad_mode="straight_through")
    assert v_st == v_none
    if v_none > 0:
        assert g_st.any()
    v_l1, _ = water_loss(hazy, clear, metric="l1")
    assert v_l1 >= v_none  # |d| >= d^2 for |d| <= 1
    with pytest.raises(InvalidParameter):
        water_loss(hazy, clear, metric="huber")
    with pytest.raises(InvalidParameter):
        water_loss(hazy, clear, grad_mode="soft")


def test_total_gradient_combines_terms():
    rng = np.random.default_rng(4)
    pred, gt = random_pair(rng, (8, 8, 3))
    _, g = total_loss(pred, gt, LossWeights(2.0, 0.0, 0.0))
    np.testing.assert_allclose(g, 2.0 * l2_loss(pred, gt)[1])


def test_errors():
    with pytest.raises(InvalidParameter):
        LossWeights(-1, 1, 1)
    with pytest.raises(ShapeMismatch):
        l2_loss(ImageBuffer(np.zeros((4, 4, 3))), ImageBuffer(np.zeros((4, 5, 3))))


def test_report_json():
    rep, _ = total_loss(*synthetic_pair(16, 2))
    import json

    d = json.loads(rep.to_json())
    assert set(d) == {"l2", "guided", "water", "total", "weights"}
    assert d["weights"] == [5.0, 1.0, 0.5]
