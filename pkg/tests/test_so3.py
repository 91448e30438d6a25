"""Rotation core: group membership, sampling distribution, distances."""

import numpy as np
import pytest

from spherecorr import so3

# Mean of the rotation-angle density (1 - cos t)/pi on [0, pi], frozen from
# the exact integral pi/2 + 2/pi (cross-checked by 2e6-sample Monte Carlo,
# 2.20733 +/- 0.00046).
MEAN_ANGLE_ORACLE = 2.2074161


def test_random_rotation_is_rotation(rng):
    for _ in range(100):
        r = so3.random_rotation(rng)
        assert so3.is_rotation(r, tol=1e-12)


def test_random_rotation_deterministic():
    a = so3.random_rotation(np.random.default_rng(7))
    b = so3.random_rotation(np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)


def test_mean_geodesic_to_identity(rng):
    rs = so3.random_rotations(rng, 10_000)
    eye = np.broadcast_to(np.eye(3), rs.shape)
    mean = so3.geodesic_angles(rs, eye).mean()
    assert abs(mean - MEAN_ANGLE_ORACLE) < 0.02


def test_angle_density_chi_square(rng):
    # CDF of (1 - cos t)/pi is (t - sin t)/pi; bin 100k samples into 10
    # equal-probability bins and chi-square against uniform counts.
    n = 100_000
    rs = so3.random_rotations(rng, n)
    eye = np.broadcast_to(np.eye(3), rs.shape)
    theta = so3.geodesic_angles(rs, eye)
    cdf = (theta - np.sin(theta)) / np.pi
    counts, _ = np.histogram(cdf, bins=10, range=(0.0, 1.0))
    expected = n / 10
    chi2 = ((counts - expected) ** 2 / expected).sum()
    from scipy.stats import chi2 as chi2_dist

    p = chi2_dist.sf(chi2, df=9)
    assert p > 0.001


def test_geodesic_identity_pair():
    assert so3.geodesic_angle(np.eye(3), np.eye(3)) == 0.0


@pytest.mark.parametrize("theta", [0.01, 0.5, 1.0, 2.0, 3.0, np.pi - 0.01])
def test_geodesic_rot_z(theta):
    assert so3.geodesic_angle(np.eye(3), so3.rot_z(theta)) == pytest.approx(theta, abs=1e-9)


def test_geodesic_left_invariance(rng):
    for _ in range(20):
        r = so3.random_rotation(rng)
        assert so3.geodesic_angle(r, r @ so3.rot_x(0.3)) == pytest.approx(0.3, abs=1e-9)


def test_geodesic_resolves_tiny_angles(rng):
    # The arccos form floors out around 1e-8; the solver recovery tests need
    # distances meaningful down to 1e-12.
    r = so3.random_rotation(rng)
    assert so3.geodesic_angle(r, r) == 0.0
    tiny = r @ so3.rot_y(1e-10)
    assert so3.geodesic_angle(r, tiny) == pytest.approx(1e-10, rel=1e-3)


def test_geodesic_metric_properties(rng):
    rs = [so3.random_rotation(rng) for _ in range(12)]
    for a in rs[:4]:
        for b in rs[4:8]:
            dab = so3.geodesic_angle(a, b)
            assert dab == pytest.approx(so3.geodesic_angle(b, a), abs=1e-12)
            assert 0.0 <= dab <= np.pi + 1e-12
            for c in rs[8:]:
                assert dab <= so3.geodesic_angle(a, c) + so3.geodesic_angle(c, b) + 1e-9


def test_axis_angle_zero_is_identity():
    np.testing.assert_allclose(so3.axis_angle(np.array([0, 0, 1.0]), 0.0), np.eye(3))


def test_axis_angle_quarter_turn():
    r = so3.rot_z(np.pi / 2)
    np.testing.assert_allclose(r @ np.array([1.0, 0, 0]), [0, 1, 0], atol=1e-15)


def test_axis_angle_rejects_non_unit():
    with pytest.raises(ValueError):
        so3.axis_angle(np.array([1.0, 1.0, 0.0]), 0.5)


def test_axis_angle_round_trip(rng):
    for _ in range(50):
        r = so3.random_rotation(rng)
        axis, angle = so3.matrix_to_axis_angle(r)
        np.testing.assert_allclose(so3.axis_angle(axis, angle), r, atol=1e-10)


def test_quat_round_trip(rng):
    for _ in range(50):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        q2 = so3.matrix_to_quat(so3.quat_to_matrix(q))
        # Round trip recovers q up to the double-cover sign.
        sign = np.sign(np.dot(q, q2))
        np.testing.assert_allclose(sign * q, q2, atol=1e-12)


def test_apply_identity_and_norms(rng):
    p = rng.standard_normal((40, 3))
    np.testing.assert_array_equal(so3.apply(np.eye(3), p), p)
    r = so3.random_rotation(rng)
    np.testing.assert_allclose(
        np.linalg.norm(so3.apply(r, p), axis=1), np.linalg.norm(p, axis=1), atol=1e-12
    )


def test_apply_composition(rng):
    p = rng.standard_normal((30, 3))
    r1 = so3.random_rotation(rng)
    r2 = so3.random_rotation(rng)
    np.testing.assert_allclose(
        so3.apply(r1, so3.apply(r2, p)), so3.apply(r1 @ r2, p), atol=1e-10
    )


def test_group_axioms(rng):
    for _ in range(20):
        a = so3.random_rotation(rng)
        b = so3.random_rotation(rng)
        assert so3.is_rotation(a @ b, tol=1e-10)
        np.testing.assert_allclose(a @ a.T, np.eye(3), atol=1e-10)


def test_flat_serialization_round_trip(rng):
    r = so3.random_rotation(rng)
    flat = so3.rotation_to_flat(r)
    assert len(flat) == 9 and all(isinstance(v, float) for v in flat)
    np.testing.assert_allclose(so3.rotation_from_flat(flat), r, atol=1e-12)
