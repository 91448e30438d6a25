"""Loss formulas, gradients, and the near-zero ordering they exist for."""

import numpy as np
import pytest

from spherecorr import losses

ARCOSH_2 = 1.3169579  # arcosh(1 + 1) evaluated from the closed form


def test_corr_error_zero():
    o = np.random.default_rng(0).standard_normal((5, 3))
    assert np.all(losses.corr_error(o, o, "l1") == 0)
    assert np.all(losses.corr_error(o, o, "l2") == 0)


def test_corr_error_known_row():
    o_gt = np.zeros((1, 3))
    o = np.array([[0.3, 0.0, 0.4]])
    assert losses.corr_error(o, o_gt, "l1")[0] == pytest.approx(0.7)
    assert losses.corr_error(o, o_gt, "l2")[0] == pytest.approx(0.5)


def test_corr_error_norm_equivalence(rng):
    o = rng.standard_normal((200, 3))
    o_gt = rng.standard_normal((200, 3))
    e1 = losses.corr_error(o, o_gt, "l1")
    e2 = losses.corr_error(o, o_gt, "l2")
    assert np.all(e2 <= e1 + 1e-12)
    assert np.all(e1 <= np.sqrt(3) * e2 + 1e-12)


def test_corr_error_shape_mismatch():
    with pytest.raises(ValueError):
        losses.corr_error(np.zeros((4, 3)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        losses.corr_error(np.zeros((4, 2)), np.zeros((4, 2)))


@pytest.mark.parametrize("kind", losses.LOSS_KINDS)
def test_zero_error_zero_loss(kind, rng):
    o = rng.standard_normal((7, 3))
    rep = losses.corr_loss(o, o, kind)
    assert rep.value == 0.0
    assert np.all(rep.per_anchor == 0.0)
    assert np.all(rep.grad_wrt_o == 0.0)


def test_smooth_l1_branch_continuity():
    # At e = 0.1 both branches give 0.05.
    o_gt = np.zeros((1, 3))
    o = np.array([[0.1, 0.0, 0.0]])
    rep = losses.corr_loss(o, o_gt, "smooth_l1")
    assert rep.value == pytest.approx(0.05, abs=1e-12)
    just_above = losses.corr_loss(np.array([[0.1 + 1e-9, 0.0, 0.0]]), o_gt, "smooth_l1")
    assert just_above.value == pytest.approx(0.05, abs=1e-8)


def test_hyp_l2_single_anchor_unit_error():
    o_gt = np.zeros((1, 3))
    o = np.array([[1.0, 0.0, 0.0]])
    rep = losses.corr_loss(o, o_gt, "hyp_l2")
    assert rep.value == pytest.approx(ARCOSH_2, abs=1e-7)


def test_value_is_mean_of_per_anchor(rng):
    o = rng.standard_normal((11, 3))
    o_gt = rng.standard_normal((11, 3))
    for kind in losses.LOSS_KINDS:
        rep = losses.corr_loss(o, o_gt, kind)
        assert rep.value == pytest.approx(rep.per_anchor.mean(), rel=1e-12)


@pytest.mark.parametrize("kind", losses.LOSS_KINDS)
def test_gradient_matches_finite_differences(kind):
    assert losses.corr_loss_grad_check(kind, n_trials=100, seed=1) < 1e-5


def test_hyp_l2_gradient_explodes_near_zero():
    # 1/sqrt(e^2 + 2e) at e = 1e-4 is ~70.7, against L2's constant 1.
    o_gt = np.zeros((1, 3))
    o = np.array([[1e-4, 0.0, 0.0]])
    g_hyp = np.abs(losses.corr_loss(o, o_gt, "hyp_l2").grad_wrt_o).max()
    g_l2 = np.abs(losses.corr_loss(o, o_gt, "l2").grad_wrt_o).max()
    assert g_l2 == pytest.approx(1.0, abs=1e-9)
    assert g_hyp / g_l2 > 50


def test_smooth_l1_gradient_small_error():
    o_gt = np.zeros((1, 3))
    o = np.array([[0.01, 0.0, 0.0]])
    g = losses.corr_loss(o, o_gt, "smooth_l1").grad_wrt_o
    assert g[0, 0] == pytest.approx(0.1, abs=1e-12)


def test_near_zero_gradient_ordering():
    # hyp_l2 > l2 (constant 1) > smooth_l1 (10 e) for 0 < e < 0.01.
    for e in (1e-4, 1e-3, 5e-3, 9e-3):
        o_gt = np.zeros((1, 3))
        o = np.array([[e, 0.0, 0.0]])
        g_hyp = np.abs(losses.corr_loss(o, o_gt, "hyp_l2").grad_wrt_o).max()
        g_l2 = np.abs(losses.corr_loss(o, o_gt, "l2").grad_wrt_o).max()
        g_sm = np.abs(losses.corr_loss(o, o_gt, "smooth_l1").grad_wrt_o).max()
        assert g_hyp > g_l2 > g_sm


@pytest.mark.parametrize("kind", losses.LOSS_KINDS)
def test_monotone_in_error(kind):
    es = np.linspace(0, 3, 400)
    vals, _ = losses.loss_curve(kind, es)
    assert np.all(np.diff(vals) >= -1e-12)


def test_arcosh_log_identity():
    xs = np.geomspace(1e-8, 10, 200)
    primary = losses.arcosh1p(xs)
    reference = np.log(1.0 + xs + np.sqrt(xs * xs + 2.0 * xs))
    np.testing.assert_allclose(primary, reference, atol=1e-12)


def test_permutation_invariance(rng):
    o = rng.standard_normal((9, 3))
    o_gt = rng.standard_normal((9, 3))
    perm = rng.permutation(9)
    for kind in losses.LOSS_KINDS:
        a = losses.corr_loss(o, o_gt, kind).value
        b = losses.corr_loss(o[perm], o_gt[perm], kind).value
        assert a == pytest.approx(b, rel=1e-12)


def test_ts_loss():
    t = np.array([0.01, 0.0, 0.0])
    z = np.zeros(3)
    s = np.ones(3)
    assert losses.ts_loss(z, s, z, s) == 0.0
    assert losses.ts_loss(t, s, z, s) == pytest.approx(0.01)
    assert losses.ts_loss(-t, s, z, s) == pytest.approx(0.01)
    assert losses.ts_loss(t, s + 0.2, z, s) == pytest.approx(0.01 + 0.6)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        losses.corr_loss(np.zeros((2, 3)), np.zeros((2, 3)), "huber")
    with pytest.raises(ValueError):
        losses.corr_error(np.zeros((2, 3)), np.zeros((2, 3)), "linf")
