import numpy as np
import pytest
from hypothesis import given, strategies as st

from exclasso.partition import GroupPartition, omega, omega_dual, subgradient_certificate
from exclasso.prox import (bracket_violation, project_dual_ball, prox_omega, prox_scaled,
                           soft_threshold, waterfill_total)

from .oracles import grid_minimum, prox_objective
from .strategies import random_partition, vector_and_partition

# root of 16/(2+eta)^2 + 4/(1+eta)^2 = 1, computed to 30 digits with mpmath
ETA_TWO_GROUPS = 2.73582466653689413440188172548
T_TWO_GROUPS = (0.844625863846650552484075208218, 0.535357030514496300642487841813)
Z_TWO_GROUPS = (2.15537413615334944751592479178, 0.155374136153349447515924791782,
                1.46464296948550369935751215819, 0.0)

METHODS = ("stepwise", "newton")


def one_based(groups):
    return GroupPartition([[i - 1 for i in g] for g in groups])


class TestSoftThreshold:
    def test_example(self):
        np.testing.assert_array_equal(soft_threshold([3, -2, 0.5], 1), [2, -1, 0])

    def test_zero_threshold_is_identity(self, rng):
        x = rng.standard_normal(9)
        np.testing.assert_array_equal(soft_threshold(x, 0), x)

    def test_large_threshold(self, rng):
        x = rng.standard_normal(9)
        assert not np.any(soft_threshold(x, np.abs(x).max()))

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold([1.0], -0.1)


@pytest.mark.parametrize("method", METHODS)
class TestProxExamples:
    def test_single_group(self, method):
        res = prox_omega(np.array([3.0, -2.0, 0.5]), GroupPartition.single(3), method=method)
        np.testing.assert_allclose(res.z, [2, -1, 0], atol=1e-12)
        assert res.certificate.eta == pytest.approx(3.0, abs=1e-10)
        assert res.certificate.thresholds[0] == pytest.approx(1.0, abs=1e-12)
        assert res.certificate.counts.tolist() == [2]

    def test_inside_dual_ball(self, method):
        res = prox_omega(np.array([0.6, 0.8]), GroupPartition.singletons(2), method=method)
        assert not np.any(res.z)
        assert res.certificate.eta is None

    def test_two_groups(self, method):
        part = one_based([[1, 2], [3, 4]])
        res = prox_omega(np.array([3.0, 1.0, 2.0, 0.0]), part, method=method)
        assert res.certificate.eta == pytest.approx(ETA_TWO_GROUPS, abs=1e-10)
        np.testing.assert_allclose(res.certificate.thresholds, T_TWO_GROUPS, atol=1e-10)
        np.testing.assert_allclose(res.z, Z_TWO_GROUPS, atol=1e-10)
        assert subgradient_certificate(res.z, res.projection, part, 1e-10).ok
        assert [a.tolist() for a in res.certificate.active_sets] == [[0, 1], [2]]

    def test_two_groups_beats_grid(self, method):
        part = one_based([[1, 2], [3, 4]])
        x = np.array([3.0, 1.0, 2.0, 0.0])
        res = prox_omega(x, part, method=method)
        best, _ = grid_minimum(x, part.groups)
        assert prox_objective(res.z, x, part.groups) <= best + 1e-9

    def test_non_finite(self, method):
        with pytest.raises(ValueError):
            prox_omega(np.array([np.nan, 1.0]), GroupPartition.single(2), method=method)


def test_unknown_method():
    with pytest.raises(ValueError):
        prox_omega(np.array([3.0, 1.0]), GroupPartition.single(2), method="bisect")


scaled = st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-6)


class TestProxProperties:
    @given(vector_and_partition(elements=scaled), st.sampled_from(METHODS))
    def test_certificate(self, xp, method):
        x, part = xp
        res = prox_omega(x, part, method=method)
        np.testing.assert_array_equal(res.z + res.projection, x)
        assert omega_dual(res.projection, part) <= 1 + 1e-9
        if np.any(res.z):
            cert = res.certificate
            assert np.sum(cert.thresholds ** 2) == pytest.approx(1.0, abs=1e-9)
            assert cert.eta >= 0
            assert subgradient_certificate(res.z, res.projection, part, 1e-8).ok
            assert bracket_violation(x, part, cert) <= 1e-9

    @given(vector_and_partition(elements=scaled))
    def test_methods_agree(self, xp):
        x, part = xp
        a = prox_omega(x, part, method="stepwise")
        b = prox_omega(x, part, method="newton")
        np.testing.assert_allclose(a.z, b.z, rtol=1e-9, atol=1e-9 * (1 + np.abs(x).max()))
        assert a.certificate.counts.tolist() == b.certificate.counts.tolist() or np.allclose(
            a.certificate.thresholds, b.certificate.thresholds, rtol=1e-9)

    @given(vector_and_partition(elements=scaled))
    def test_thresholds_match_active_sums(self, xp):
        x, part = xp
        res = prox_omega(x, part)
        if res.certificate.eta is None:
            return
        cert = res.certificate
        for k, act in enumerate(cert.active_sets):
            S = np.abs(x[act]).sum()
            assert cert.thresholds[k] == pytest.approx(S / (cert.counts[k] + cert.eta), rel=1e-12)
            # active entries are the ones at or above the threshold
            outside = np.setdiff1d(part.groups[k], act)
            assert np.all(np.abs(x[outside]) <= cert.thresholds[k] * (1 + 1e-9))

    @given(vector_and_partition(elements=scaled))
    def test_eta_equals_norm_of_prox(self, xp):
        x, part = xp
        res = prox_omega(x, part)
        if res.certificate.eta is not None:
            assert res.certificate.eta == pytest.approx(omega(res.z, part), rel=1e-8, abs=1e-10)

    @given(vector_and_partition(max_p=12, elements=scaled))
    def test_waterfilling_is_monotone(self, xp):
        x, part = xp
        res = prox_omega(x, part)
        if res.certificate.eta is None:
            return
        eta = res.certificate.eta
        assert waterfill_total(x, part, eta) == pytest.approx(1.0, abs=1e-9)
        assert waterfill_total(x, part, 0.5 * eta) >= waterfill_total(x, part, eta)
        assert waterfill_total(x, part, 2 * eta + 1) <= 1.0

    def test_loops_bounded_by_p(self, rng):
        for _ in range(50):
            p = int(rng.integers(1, 40))
            part = random_partition(rng, p)
            x = rng.standard_normal(p) * 10
            res = prox_omega(x, part, method="stepwise")
            assert res.certificate.iterations <= p


class TestScaledAndProjection:
    def test_scale_one(self, rng):
        part = random_partition(rng, 10)
        x = rng.standard_normal(10) * 3
        np.testing.assert_allclose(prox_scaled(x, 1.0, part).z, prox_omega(x, part).z, atol=1e-14)

    def test_single_group_scaled(self):
        res = prox_scaled(np.array([3.0, -2.0, 0.5]), 0.5, GroupPartition.single(3))
        np.testing.assert_allclose(res.z, [2.5, -1.5, 0], atol=1e-12)

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            prox_scaled(np.ones(2), 0.0, GroupPartition.single(2))

    @given(vector_and_partition(elements=scaled), st.floats(1e-3, 1e3))
    def test_scaled_dual_bound(self, xp, s):
        x, part = xp
        res = prox_scaled(x, s, part)
        np.testing.assert_array_equal(res.z + res.projection, x)
        assert omega_dual(res.projection, part) <= s * (1 + 1e-9)
        np.testing.assert_allclose(res.z, s * prox_omega(x / s, part).z,
                                   atol=1e-9 * (1 + np.abs(x).max()))

    @given(vector_and_partition(elements=scaled))
    def test_projection_is_nearest_ball_point(self, xp):
        x, part = xp
        proj = project_dual_ball(x, part)
        assert omega_dual(proj, part) <= 1 + 1e-9
        if omega_dual(x, part) <= 1:
            np.testing.assert_array_equal(proj, x)
        # the residual x - proj is normal to the ball at proj
        r = x - proj
        assert r @ proj == pytest.approx(omega(r, part), rel=1e-8, abs=1e-9)
