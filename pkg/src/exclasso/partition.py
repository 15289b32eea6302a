"""Coordinate partitions and the exclusive group sparsity norm.

The norm combines within-group l1 norms with an l2 norm across groups::

    omega(x) = sqrt(sum_G ||x_G||_1 ** 2)

and its dual swaps l1 for l-infinity inside each group. Indices are 0-based in
memory; partition files store 1-based indices, one group per line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_TOL = 1e-9


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """A disjoint, exhaustive grouping of ``range(p)``.

    ``labels[i]`` is the position of the group containing index ``i``.
    """

    p: int
    groups: tuple[np.ndarray, ...]
    labels: np.ndarray = field(repr=False, compare=False)

    def __init__(self, groups, p: int | None = None):
        arrays = tuple(np.asarray(sorted(int(i) for i in g), dtype=np.intp) for g in groups)
        if p is None:
            p = sum(a.size for a in arrays)
        if p < 1:
            raise PartitionError("p must be positive")
        labels = np.full(p, -1, dtype=np.intp)
        for k, a in enumerate(arrays):
            if a.size == 0:
                raise PartitionError(f"group {k} is empty")
            if a.min() < 0 or a.max() >= p:
                raise PartitionError(f"group {k} has an index outside [0, {p})")
            if np.unique(a).size != a.size or np.any(labels[a] >= 0):
                raise PartitionError(f"index repeated in group {k}")
            labels[a] = k
        missing = np.flatnonzero(labels < 0)
        if missing.size:
            raise PartitionError(f"indices not covered: {missing.tolist()}")
        labels.setflags(write=False)
        for a in arrays:
            a.setflags(write=False)
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "groups", arrays)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, labels) -> "GroupPartition":
        labels = np.asarray(labels)
        uniq = list(dict.fromkeys(labels.tolist()))
        return cls([np.flatnonzero(labels == u) for u in uniq], p=labels.size)

    @classmethod
    def modulo(cls, p: int, k: int) -> "GroupPartition":
        """Groups of 1-based indices congruent modulo ``k`` (k groups)."""
        one_based = np.arange(1, p + 1)
        return cls([np.flatnonzero(one_based % k == r) for r in range(k)
                    if np.any(one_based % k == r)], p=p)

    @classmethod
    def singletons(cls, p: int) -> "GroupPartition":
        return cls([[i] for i in range(p)], p=p)

    @classmethod
    def single(cls, p: int) -> "GroupPartition":
        return cls([range(p)], p=p)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group_of(self, i: int) -> int:
        return int(self.labels[i])

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise ValueError(f"expected a vector of length {self.p}, got shape {x.shape}")
        return x

    def group_l1(self, x) -> np.ndarray:
        return np.bincount(self.labels, weights=np.abs(self.check(x)), minlength=self.n_groups)

    def group_linf(self, x) -> np.ndarray:
        out = np.zeros(self.n_groups)
        np.maximum.at(out, self.labels, np.abs(self.check(x)))
        return out

    def restrict(self, support) -> "RestrictedView":
        return RestrictedView(self, support)


def _l2(v: np.ndarray) -> float:
    # scaled so tiny or huge entries neither underflow nor overflow when squared
    top = float(np.max(v, initial=0.0))
    if top == 0.0 or not np.isfinite(top):
        return top
    return top * float(np.sqrt(np.sum((v / top) ** 2)))


def omega(x, part: GroupPartition) -> float:
    return _l2(part.group_l1(x))


def omega_dual(u, part: GroupPartition) -> float:
    return _l2(part.group_linf(u))


class RestrictedView:
    """The partition induced on a support set ``J``.

    ``induced`` holds the non-empty sets ``G & J`` as positions into ``J``
    (so they partition ``range(len(J))``), and ``parent_groups`` the matching
    parent group ids.
    """

    def __init__(self, parent: GroupPartition, support):
        support = np.unique(np.asarray(support, dtype=np.intp))
        if support.size and (support[0] < 0 or support[-1] >= parent.p):
            raise PartitionError("support index outside the parent partition")
        self.parent = parent
        self.support = support
        support_labels = parent.labels[support]
        self.parent_groups = np.unique(support_labels)
        self.local_labels = np.searchsorted(self.parent_groups, support_labels)
        self.induced = tuple(np.flatnonzero(self.local_labels == k)
                             for k in range(self.parent_groups.size))

    def __len__(self) -> int:
        return int(self.support.size)

    @property
    def partition(self) -> GroupPartition | None:
        if len(self) == 0:
            return None
        return GroupPartition(self.induced, p=len(self))

    @property
    def off(self) -> np.ndarray:
        """Inactive entries of active groups."""
        mask = np.isin(self.parent.labels, self.parent_groups)
        mask[self.support] = False
        return np.flatnonzero(mask)

    @property
    def inactive(self) -> np.ndarray:
        """Entries of groups that do not meet the support."""
        return np.flatnonzero(~np.isin(self.parent.labels, self.parent_groups))

    def check(self, xJ) -> np.ndarray:
        xJ = np.asarray(xJ, dtype=float)
        if xJ.shape != (len(self),):
            raise ValueError(f"expected a vector of length {len(self)}, got shape {xJ.shape}")
        return xJ

    def extend(self, xJ) -> np.ndarray:
        out = np.zeros(self.parent.p)
        out[self.support] = self.check(xJ)
        return out

    def group_l1(self, xJ) -> np.ndarray:
        return np.bincount(self.local_labels, weights=np.abs(self.check(xJ)),
                           minlength=self.parent_groups.size)

    def group_linf(self, uJ) -> np.ndarray:
        out = np.zeros(self.parent_groups.size)
        np.maximum.at(out, self.local_labels, np.abs(self.check(uJ)))
        return out


def omega_restricted(xJ, view: RestrictedView) -> float:
    return _l2(view.group_l1(xJ))


def omega_dual_restricted(uJ, view: RestrictedView) -> float:
    return _l2(view.group_linf(uJ))


def canonical_subgradient(x, part: GroupPartition) -> np.ndarray:
    """The subgradient with ``u_i = sign(x_i) ||x_{G_i}||_1 / omega(x)``.

    Entries off the support are set to zero. ``x`` must be non-zero.
    """
    x = part.check(x)
    l1 = part.group_l1(x)
    nrm = _l2(l1)
    if nrm == 0:
        raise ValueError("the subgradient at zero is the whole dual unit ball")
    return np.sign(x) * l1[part.labels] / nrm


@dataclass
class SubgradientReport:
    ok: bool
    max_violation: float
    worst_index: int


def subgradient_certificate(x, u, part: GroupPartition, tol: float = DEFAULT_TOL) -> SubgradientReport:
    """Check ``u`` in the subdifferential of omega at ``x``.

    On the support, ``|u_i|`` must equal ``||x_{G_i}||_1 / omega(x)`` with the
    sign of ``x_i``; elsewhere it may not exceed that ratio. At ``x = 0`` the
    test is dual-ball membership.
    """
    x = part.check(x)
    u = part.check(u)
    l1 = part.group_l1(x)
    nrm = _l2(l1)
    if nrm == 0:
        viol = max(omega_dual(u, part) - 1.0, 0.0)
        return SubgradientReport(viol <= tol, viol, -1)
    bound = l1[part.labels] / nrm
    on = x != 0
    viol = np.where(on, np.abs(u - np.sign(x) * bound), np.maximum(np.abs(u) - bound, 0.0))
    k = int(np.argmax(viol))
    return SubgradientReport(bool(viol[k] <= tol), float(viol[k]), k)


def signed_support(x, tol: float = DEFAULT_TOL) -> np.ndarray:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= tol, 0, np.sign(x)).astype(np.int8)


def support_errors(x, x_ref, tol: float = DEFAULT_TOL) -> int:
    """Hamming distance between signed supports."""
    return int(np.count_nonzero(signed_support(x, tol) != signed_support(x_ref, tol)))


def phi_J(part: GroupPartition, support) -> float:
    support = np.asarray(support, dtype=np.intp)
    counts = np.bincount(part.labels[support], minlength=part.n_groups)
    return float(np.sqrt(np.sum(counts.astype(float) ** 2)))


def read_partition(path, p: int | None = None) -> GroupPartition:
    groups = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        idx = [int(tok) - 1 for tok in line.split()]
        groups.append(idx)
    return GroupPartition(groups, p=p)


def write_partition(part: GroupPartition, path) -> None:
    lines = [" ".join(str(i + 1) for i in g) for g in part.groups]
    Path(path).write_text("\n".join(lines) + "\n")
