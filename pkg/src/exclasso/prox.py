"""Proximal operator of the exclusive group norm.

The prox soft-thresholds every group with its own threshold ``t_G``. The
thresholds share one multiplier ``eta`` fixed by ``sum_G t_G**2 = 1``::

    t_G = S_G / (n_G + eta),   S_G = sum of the n_G largest |x_i| in G

Finding ``eta`` is a waterfilling problem: each group contributes a decreasing
piecewise function of ``eta`` whose pieces change when one more entry of the
group crosses the threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .partition import GroupPartition, omega_dual

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 200


class ProxConvergenceError(RuntimeError):
    pass


@dataclass
class ProxCertificate:
    """KKT record of one prox evaluation.

    ``eta`` is ``None`` when the input already lies in the dual unit ball (the
    prox is then zero and no multiplier is active). Arrays are indexed by
    group position in the partition.
    """

    eta: float | None
    thresholds: np.ndarray
    counts: np.ndarray
    active_sets: tuple[np.ndarray, ...]
    iterations: int = 0


@dataclass
class ProxResult:
    z: np.ndarray
    projection: np.ndarray
    certificate: ProxCertificate


def soft_threshold(x, t):
    """Entry-wise ``sign(x) * max(|x| - t, 0)``; ``t`` may be per-entry."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


class _SortedGroups:
    """Per-group magnitudes sorted in decreasing order (ties: lowest index)."""

    def __init__(self, x: np.ndarray, part: GroupPartition):
        a = np.abs(x)
        order = np.lexsort((np.arange(part.p), -a, part.labels))
        self.order = order
        self.mags = a[order]
        lab = part.labels[order]
        self.sizes = np.bincount(part.labels, minlength=part.n_groups)
        self.starts = np.concatenate(([0], np.cumsum(self.sizes)[:-1]))
        self.rank = np.arange(part.p) - self.starts[lab]  # 0-based position within group
        self.lab = lab
        csum = np.cumsum(self.mags)
        self.cums = csum - (csum[self.starts] - self.mags[self.starts])[lab]
        # change-of-piece points: entry rank+1 joins once eta reaches this value
        nxt = np.zeros(part.p)
        has_next = self.rank + 1 < self.sizes[lab]
        nxt[has_next] = self.mags[np.flatnonzero(has_next) + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            brk = self.cums / nxt - (self.rank + 1)
        brk[nxt == 0] = np.inf
        self.breaks = brk
        self.top = self.mags[self.starts]

    def partial_sum(self, counts: np.ndarray) -> np.ndarray:
        """``S_G`` for the given active counts (zero where counts are 0)."""
        out = np.zeros(counts.size)
        pos = counts > 0
        out[pos] = self.cums[self.starts[pos] + counts[pos] - 1]
        return out

    def upper_break(self, counts: np.ndarray) -> np.ndarray:
        """Largest eta compatible with ``counts`` before the next entry joins."""
        out = np.full(counts.size, np.inf)
        pos = counts > 0
        out[pos] = self.breaks[self.starts[pos] + counts[pos] - 1]
        return out

    def lower_break(self, counts: np.ndarray) -> np.ndarray:
        out = np.zeros(counts.size)
        pos = counts > 1
        out[pos] = self.breaks[self.starts[pos] + counts[pos] - 2]
        return out


def _solve_eta(S: np.ndarray, n: np.ndarray, lo: float, hi: float | None,
               tol: float, maxiter: int) -> tuple[float, int]:
    """Root of ``sum S**2 / (n + eta)**2 - 1`` on ``[lo, hi]``.

    Newton from the left converges monotonically since the function is convex
    and decreasing; bisection on the bracket guards the rest.
    """
    S2 = S[S > 0] ** 2
    n = n[S > 0].astype(float)
    if hi is None or not np.isfinite(hi):
        hi = max(lo, 0.0) + np.sqrt(S2.sum())
    eta = lo
    for it in range(1, maxiter + 1):
        d = n + eta
        g = np.sum(S2 / d ** 2) - 1.0
        if abs(g) <= tol:
            return eta, it
        if g > 0:
            lo = eta
        else:
            hi = eta
        if hi - lo <= 4 * np.spacing(max(abs(hi), 1.0)):
            return eta, it
        dg = -2.0 * np.sum(S2 / d ** 3)
        step = eta - g / dg
        eta = step if lo < step < hi else 0.5 * (lo + hi)
    raise ProxConvergenceError(f"eta not found in {maxiter} iterations (|g|={abs(g):.3e})")


def _waterfill_stepwise(sg: _SortedGroups, tol: float, maxiter: int):
    """Grow the active entries one at a time, re-solving for eta each time."""
    counts = (sg.top > 0).astype(np.intp)
    eta, _ = _solve_eta(sg.partial_sum(counts), counts, 0.0, None, tol, maxiter)
    loops = 0
    budget = sg.mags.size
    while True:
        upper = sg.upper_break(counts)
        late = np.flatnonzero(upper <= eta)
        if late.size == 0:
            break
        # group whose change of piece lies nearest the current eta
        gstar = late[np.argmin(eta - upper[late])]
        counts[gstar] += 1
        loops += 1
        if loops > budget:
            raise ProxConvergenceError("waterfilling activated more entries than exist")
        eta, _ = _solve_eta(sg.partial_sum(counts), counts, eta, None, tol, maxiter)
    return eta, counts, loops


def _counts_at(sg: _SortedGroups, eta: float, ngroups: int) -> np.ndarray:
    base = (sg.top > 0).astype(np.intp)
    hit = sg.breaks <= eta
    return base + np.bincount(sg.lab[hit], minlength=ngroups)


def _waterfill_newton(sg: _SortedGroups, ngroups: int, tol: float, maxiter: int):
    """Newton on the whole waterfilling function, no piece bookkeeping.

    Each group contributes ``max_k (S_k / (k + eta))**2``, a maximum of
    convex decreasing functions, so the total is convex and decreasing and
    Newton started at ``eta = 0`` climbs monotonically to the root.
    """
    denom_base = sg.rank + 1.0
    nz = sg.top > 0
    starts = sg.starts[nz]
    eta = 0.0
    for it in range(1, maxiter + 1):
        t = np.maximum.reduceat(sg.cums / (denom_base + eta), starts)
        counts = _counts_at(sg, eta, ngroups)[nz]
        g = float(t @ t) - 1.0
        if abs(g) <= tol:
            break
        dg = -2.0 * float(np.sum(t * t / (counts + eta)))
        step = eta - g / dg
        if step <= eta:  # root reached to rounding
            break
        eta = step
    else:
        raise ProxConvergenceError(f"eta not found in {maxiter} iterations")
    return eta, _counts_at(sg, eta, ngroups), it


def prox_omega(x, part: GroupPartition, newton_tol: float = NEWTON_TOL,
               method: str = "stepwise") -> ProxResult:
    """Proximal point of the exclusive group norm.

    Parameters
    ----------
    x : array of shape (p,)
    part : GroupPartition
    newton_tol : float
        Stopping tolerance on ``|sum_G t_G**2 - 1|``.
    method : {"stepwise", "newton"}
        ``"stepwise"`` activates one entry per round and re-solves for the
        multiplier on the current piece; ``"newton"`` runs Newton directly on
        the piecewise waterfilling function. Both return the same point.
    """
    x = part.check(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("prox input must be finite")
    sg = _SortedGroups(x, part)
    G = part.n_groups
    if np.sum(sg.top ** 2) <= 1.0:
        z = np.zeros_like(x)
        cert = ProxCertificate(None, sg.top.copy(), np.zeros(G, dtype=np.intp),
                               tuple(np.empty(0, dtype=np.intp) for _ in range(G)))
        return ProxResult(z, x - z, cert)
    if method == "stepwise":
        eta, counts, loops = _waterfill_stepwise(sg, newton_tol, NEWTON_MAXITER)
    elif method == "newton":
        eta, counts, loops = _waterfill_newton(sg, G, newton_tol, NEWTON_MAXITER)
    else:
        raise ValueError(f"unknown method {method!r}")
    S = sg.partial_sum(counts)
    t = S / (counts + eta)
    z = soft_threshold(x, t[part.labels])
    projection = x - z
    active = tuple(sg.order[sg.starts[k]:sg.starts[k] + counts[k]] for k in range(G))
    cert = ProxCertificate(float(eta), t, counts, active, loops)
    return ProxResult(z, projection, cert)


def prox_scaled(x, scale: float, part: GroupPartition, newton_tol: float = NEWTON_TOL,
                method: str = "stepwise") -> ProxResult:
    """``prox_{scale * omega}(x) = scale * prox_omega(x / scale)``.

    Thresholds in the certificate are rescaled to the ones applied to ``x``;
    ``eta`` is that of the unscaled problem.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    x = part.check(x)
    res = prox_omega(x / scale, part, newton_tol, method)
    p = res.projection * scale
    p = np.sign(x) * np.minimum(np.abs(p), np.abs(x))
    # entries thresholded to zero stay exactly zero despite the rescaling round trip
    z = np.where(res.z == 0, 0.0, x - p)
    cert = res.certificate
    cert.thresholds = cert.thresholds * scale
    return ProxResult(z, x - z, cert)


def project_dual_ball(x, part: GroupPartition, newton_tol: float = NEWTON_TOL) -> np.ndarray:
    """Euclidean projection onto ``{u : omega_dual(u) <= 1}``."""
    return prox_omega(x, part, newton_tol).projection


def bracket_violation(x, part: GroupPartition, cert: ProxCertificate) -> float:
    """Largest violation of the per-group bracket on eta (0 when consistent).

    Each group with ``n`` active entries requires
    ``S_{n-1}/|x_(n)| - (n-1) <= eta < S_n/|x_(n+1)| - n``.
    """
    if cert.eta is None:
        return max(omega_dual(x, part) - 1.0, 0.0)
    sg = _SortedGroups(part.check(x), part)
    lo = sg.lower_break(cert.counts)
    hi = sg.upper_break(cert.counts)
    eta = cert.eta
    scale = max(1.0, eta)
    v_lo = np.maximum(lo - eta, 0.0)
    v_hi = np.where(eta >= hi, eta - hi + np.spacing(scale), 0.0)
    return float(max(v_lo.max(initial=0.0), v_hi.max(initial=0.0)) / scale)


def waterfill_total(x, part: GroupPartition, eta: float) -> float:
    """``sum_G f_G(eta)`` with each group on its correct piece."""
    sg = _SortedGroups(part.check(x), part)
    c = _counts_at(sg, eta, part.n_groups)
    S = sg.partial_sum(c)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(c > 0, S / (c + eta), 0.0)
    return float(np.sum(t ** 2))
