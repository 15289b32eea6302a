import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exclasso.partition import (GroupPartition, PartitionError, RestrictedView,
                                canonical_subgradient, omega, omega_dual,
                                omega_dual_restricted, omega_restricted, phi_J,
                                read_partition, signed_support, subgradient_certificate,
                                support_errors, write_partition)

from .strategies import partitions, random_partition, vector_and_partition


def one_based(groups, p=None):
    return GroupPartition([[i - 1 for i in g] for g in groups], p=p)


class TestGroupPartition:
    def test_labels_match_groups(self):
        part = one_based([[1, 3], [2, 4]])
        assert part.labels.tolist() == [0, 1, 0, 1]
        assert part.group_of(2) == 0

    @pytest.mark.parametrize("groups,p", [([[0, 1], [1, 2]], 3), ([[0], [2]], 3), ([[0, 1], []], 2),
                                          ([[0, 3]], 2)])
    def test_rejects_invalid(self, groups, p):
        with pytest.raises(PartitionError):
            GroupPartition(groups, p=p)

    def test_modulo_is_one_based(self):
        part = GroupPartition.modulo(200, 10)
        assert part.n_groups == 10
        # 1-based index 4 and 14 share a group, as do 10 and 20
        assert part.group_of(3) == part.group_of(13)
        assert part.group_of(9) == part.group_of(19)
        assert all(g.size == 20 for g in part.groups)

    def test_labels_read_only(self):
        part = GroupPartition.modulo(6, 2)
        with pytest.raises(ValueError):
            part.labels[0] = 1

    def test_file_roundtrip(self, tmp_path):
        part = one_based([[1, 3, 5], [2, 4, 6]])
        path = tmp_path / "groups.txt"
        write_partition(part, path)
        assert path.read_text() == "1 3 5\n2 4 6\n"
        back = read_partition(path)
        assert [g.tolist() for g in back.groups] == [g.tolist() for g in part.groups]

    def test_file_rejects_duplicates(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\n2 3\n")
        with pytest.raises(PartitionError):
            read_partition(path)

    def test_file_rejects_omissions(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1\n3\n")
        with pytest.raises(PartitionError):
            read_partition(path, p=3)


class TestNormValues:
    def test_omega_example(self):
        part = one_based([[1, 3], [2, 4]])
        assert omega([1, -2, 3, 0], part) == pytest.approx(np.sqrt(20), abs=1e-12)

    def test_omega_latent_equivalent(self):
        part = one_based([[1, 4], [2, 3]])
        assert omega([1, 1, 1, 1], part) == pytest.approx(2.8284271247461903, abs=1e-12)

    def test_zero(self):
        part = GroupPartition.modulo(5, 2)
        assert omega(np.zeros(5), part) == 0.0
        assert omega_dual(np.zeros(5), part) == 0.0

    def test_dual_example(self):
        part = one_based([[1, 3], [2, 4]])
        assert omega_dual([1, -2, 3, 0], part) == pytest.approx(np.sqrt(13), abs=1e-12)

    def test_dual_singletons_is_l2(self):
        assert omega_dual([0.6, 0.8], GroupPartition.singletons(2)) == pytest.approx(1.0, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            omega([1.0, 2.0], GroupPartition.single(3))
        with pytest.raises(ValueError):
            omega_dual([1.0], GroupPartition.single(3))


class TestRestricted:
    def test_single_entry(self):
        view = RestrictedView(one_based([[1, 2]]), [0])
        assert omega_restricted([3.0], view) == 3.0

    def test_full_support_is_identity(self, rng):
        part = random_partition(rng, 12)
        x = rng.standard_normal(12)
        view = part.restrict(range(12))
        assert omega_restricted(x, view) == pytest.approx(omega(x, part), rel=1e-15)
        assert omega_dual_restricted(x, view) == pytest.approx(omega_dual(x, part), rel=1e-15)

    def test_offsets(self):
        part = one_based([[1, 2, 3], [4, 5], [6]])
        view = part.restrict([0, 3])
        assert view.off.tolist() == [1, 2, 4]
        assert view.inactive.tolist() == [5]
        assert view.partition.n_groups == 2

    @given(vector_and_partition(), st.data())
    def test_zero_padding_identity(self, xp, data):
        x, part = xp
        support = sorted(data.draw(st.sets(st.integers(0, part.p - 1), min_size=1)))
        view = part.restrict(support)
        xJ = x[support]
        padded = view.extend(xJ)
        assert omega_restricted(xJ, view) == pytest.approx(omega(padded, part), rel=1e-12, abs=1e-300)
        assert omega_dual_restricted(xJ, view) == pytest.approx(omega_dual(padded, part),
                                                                rel=1e-12, abs=1e-300)

    @given(partitions(), st.data())
    def test_induced_groups_partition_support(self, part, data):
        support = sorted(data.draw(st.sets(st.integers(0, part.p - 1))))
        view = part.restrict(support)
        flat = sorted(int(view.support[i]) for g in view.induced for i in g)
        assert flat == support
        for g, parent in zip(view.induced, view.parent_groups):
            assert set(part.labels[view.support[g]].tolist()) == {parent}


class TestNormProperties:
    @given(vector_and_partition(), st.data())
    def test_triangle_and_homogeneity(self, xp, data):
        x, part = xp
        y = np.array(data.draw(st.lists(st.floats(-1e3, 1e3), min_size=part.p, max_size=part.p)))
        a = data.draw(st.floats(-10, 10))
        assert omega(x + y, part) <= omega(x, part) + omega(y, part) + 1e-12 * (1 + np.abs(x).sum() + np.abs(y).sum())
        assert omega(a * x, part) == pytest.approx(abs(a) * omega(x, part), rel=1e-12, abs=1e-12)
        assert omega_dual(a * x, part) == pytest.approx(abs(a) * omega_dual(x, part), rel=1e-12, abs=1e-12)

    @given(vector_and_partition())
    def test_positivity(self, xp):
        x, part = xp
        assert (omega(x, part) > 0) == bool(np.any(x))

    @given(vector_and_partition())
    def test_l1_sandwich(self, xp):
        x, part = xp
        l1 = np.abs(x).sum()
        om = omega(x, part)
        assert l1 / np.sqrt(part.n_groups) <= om * (1 + 1e-12) + 1e-300
        assert om <= l1 * (1 + 1e-12) + 1e-300

    @given(vector_and_partition(), st.data())
    def test_generalized_cauchy_schwarz(self, xp, data):
        x, part = xp
        u = np.array(data.draw(st.lists(st.floats(-1e3, 1e3), min_size=part.p, max_size=part.p)))
        assert u @ x <= omega(x, part) * omega_dual(u, part) * (1 + 1e-12) + 1e-9

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
    def test_degenerate_partitions(self, vals):
        x = np.array(vals)
        one = GroupPartition.single(x.size)
        sing = GroupPartition.singletons(x.size)
        assert omega(x, one) == pytest.approx(np.abs(x).sum(), rel=1e-14, abs=0)
        assert omega_dual(x, one) == np.abs(x).max()
        assert omega(x, sing) == pytest.approx(math.hypot(*x), rel=1e-14, abs=0)
        assert omega_dual(x, sing) == pytest.approx(math.hypot(*x), rel=1e-14, abs=0)


class TestSubgradient:
    def test_single_group_pass(self):
        part = GroupPartition.single(2)
        assert subgradient_certificate([2, 0], [1, 0.5], part, 1e-12).ok

    def test_single_group_fail(self):
        part = GroupPartition.single(2)
        rep = subgradient_certificate([2, 0], [1, 1.5], part, 1e-12)
        assert not rep.ok
        assert rep.worst_index == 1
        assert rep.max_violation == pytest.approx(0.5)

    def test_wrong_sign_fails(self):
        part = GroupPartition.single(2)
        assert not subgradient_certificate([2, 0], [-1, 0], part).ok

    def test_zero_falls_back_to_dual_ball(self):
        part = GroupPartition.singletons(2)
        assert subgradient_certificate([0, 0], [0.6, 0.8], part).ok
        assert not subgradient_certificate([0, 0], [0.7, 0.8], part).ok

    @given(vector_and_partition())
    def test_canonical_subgradient(self, xp):
        x, part = xp
        if not np.any(x):
            return
        u = canonical_subgradient(x, part)
        assert subgradient_certificate(x, u, part, 1e-12).ok
        assert u @ x == pytest.approx(omega(x, part), rel=1e-10)
        assert omega_dual(u, part) == pytest.approx(1.0, rel=1e-12)

    @given(vector_and_partition())
    def test_variational_feasibility(self, xp):
        # weights t_G = ||u_G||_inf^2 sum to one and bound each entry of u
        x, part = xp
        if not np.any(x):
            return
        u = canonical_subgradient(x, part)
        t = part.group_linf(u) ** 2
        assert t.sum() == pytest.approx(1.0, rel=1e-12)
        assert np.all(u ** 2 <= t[part.labels] * (1 + 1e-12))
        assert u @ x == pytest.approx(omega(x, part), rel=1e-10)


class TestSignedSupport:
    def test_examples(self):
        assert signed_support([3, -0.5, 0], 0.0).tolist() == [1, -1, 0]
        assert signed_support([1e-12, -1], 1e-9).tolist() == [0, -1]

    def test_negative_tol(self):
        with pytest.raises(ValueError):
            signed_support([1.0], -1.0)

    def test_errors_are_hamming(self):
        assert support_errors([1, -1, 0, 2], [1, 1, 1, 0]) == 3

    def test_phi(self):
        part = GroupPartition.modulo(200, 10)
        J = np.r_[3:13, 172:182]
        assert phi_J(part, J) == pytest.approx(np.sqrt(40))
        assert phi_J(part, []) == 0.0

    @given(partitions(), st.data())
    def test_phi_is_norm_of_indicator(self, part, data):
        J = sorted(data.draw(st.sets(st.integers(0, part.p - 1))))
        ind = np.zeros(part.p)
        ind[J] = 1.0
        assert phi_J(part, J) == pytest.approx(omega(ind, part), rel=1e-14)
