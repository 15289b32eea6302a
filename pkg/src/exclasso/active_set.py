"""Greedy forward active-set solver for the squared exclusive-norm problem.

The support grows one index at a time. A cheap necessary optimality test picks
the group whose off-support gradient is largest relative to its restricted
norm; once it passes, a duality-gap bound drives further additions until the
zero-extended restricted solution is ``epsilon``-optimal.

Two evolution modes constrain which supports may be visited: ``plain`` allows
any superset adding at most one index per group, ``strings`` keeps the support
a union of a bounded number of contiguous runs.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .partition import (GroupPartition, RestrictedView, omega, omega_dual,
                        omega_restricted)
from .solvers import (RegressionProblem, SolveReport, SolverConfig, duality_gap,
                      irls_restricted_solve, ls_grad, ls_loss)

log = logging.getLogger(__name__)

WARM_START_NUDGE = 1e-6


@dataclass
class SupportState:
    """Support, restricted solution (zero-extended), its gradient and gap."""

    support: np.ndarray
    x_hat: np.ndarray
    grad: np.ndarray
    gap: float

    @classmethod
    def empty(cls, problem: RegressionProblem, part: GroupPartition, mu: float) -> "SupportState":
        x = np.zeros(problem.p)
        return cls(np.empty(0, dtype=np.intp), x, ls_grad(problem, x),
                   duality_gap(problem, part, x, mu=mu))

    @classmethod
    def from_solution(cls, problem: RegressionProblem, part: GroupPartition, mu: float,
                      support, x_hat) -> "SupportState":
        support = np.unique(np.asarray(support, dtype=np.intp))
        x_hat = np.asarray(x_hat, dtype=float)
        outside = np.ones(problem.p, dtype=bool)
        outside[support] = False
        if np.any(x_hat[outside] != 0):
            raise ValueError("x_hat has entries outside the support")
        return cls(support, x_hat, ls_grad(problem, x_hat),
                   duality_gap(problem, part, x_hat, mu=mu))


@dataclass(frozen=True)
class EvolutionMode:
    kind: str = "plain"
    max_strings: int = 2
    wrap: bool = True

    def __post_init__(self):
        if self.kind not in ("plain", "strings"):
            raise ValueError(f"unknown evolution mode {self.kind!r}")
        if self.max_strings < 1:
            raise ValueError("max_strings must be at least 1")


PLAIN = EvolutionMode("plain")


def count_runs(support, p: int, wrap: bool) -> int:
    """Number of maximal contiguous runs in ``support`` (cyclic if ``wrap``)."""
    mask = np.zeros(p, dtype=bool)
    mask[np.asarray(support, dtype=np.intp)] = True
    if not mask.any():
        return 0
    if mask.all():
        return 1
    prev = np.roll(mask, 1)
    if not wrap:
        prev[0] = False
    return int(np.count_nonzero(mask & ~prev))


def allowed_additions(support, p: int, mode: EvolutionMode) -> np.ndarray:
    """Indices whose single addition is a legal step for ``mode``."""
    mask = np.zeros(p, dtype=bool)
    mask[np.asarray(support, dtype=np.intp)] = True
    if mode.kind == "plain" or count_runs(np.flatnonzero(mask), p, mode.wrap) < mode.max_strings:
        return np.flatnonzero(~mask)
    left, right = np.roll(mask, 1), np.roll(mask, -1)
    if not mode.wrap:
        left[0] = False
        right[-1] = False
    return np.flatnonzero(~mask & (left | right))


def evolution_candidates(state: SupportState, part: GroupPartition,
                         mode: EvolutionMode = PLAIN) -> Iterator[frozenset]:
    """Supports reachable from ``state.support`` in one step.

    Plain mode yields every ``J | S`` with ``S`` non-empty and holding at most
    one new index per group; the count grows as a product over groups, so
    consume lazily for large ``p``. Strings mode yields single-index
    extensions that keep at most ``mode.max_strings`` runs.
    """
    J = frozenset(int(i) for i in state.support)
    if mode.kind == "strings":
        for i in allowed_additions(state.support, part.p, mode):
            yield J | {int(i)}
        return
    choices = [[None] + [int(i) for i in g if int(i) not in J] for g in part.groups]
    for combo in itertools.product(*choices):
        new = {i for i in combo if i is not None}
        if new:
            yield J | new


@dataclass
class NecessaryReport:
    """Outcome of the per-group necessary test.

    ``score`` is the worst ratio of observed to allowed gradient magnitude;
    the test passes when it is at most one. ``ratio`` is the raw quantity
    compared with ``mu`` (active groups) or with ``zero_tol`` (inactive ones).
    """

    passed: bool
    group: int
    index: int
    ratio: float
    score: float
    inactive: bool


def necessary_condition(state: SupportState, part: GroupPartition, mode: EvolutionMode,
                        mu: float, zero_tol: float, rtol: float = 1e-8) -> NecessaryReport:
    """Largest violation of the off-support stationarity bounds.

    For a group meeting the support, every reachable off-support index must
    satisfy ``|g_i| <= mu * ||x_{G & J}||_1`` (ratio ``|g_i| / ||x_{G & J}||_1``,
    infinite when that norm is zero). Groups missing the support need
    ``|g_i| <= zero_tol``. A relative slack ``rtol`` absorbs rounding at an
    exact optimum. Ties go to the lowest index.
    """
    if mu <= 0 or zero_tol < 0:
        raise ValueError("mu must be positive and zero_tol non-negative")
    g = np.abs(state.grad)
    cand = allowed_additions(state.support, part.p, mode)
    if cand.size == 0:
        return NecessaryReport(True, -1, -1, 0.0, 0.0, False)
    l1 = np.bincount(part.labels[state.support], weights=np.abs(state.x_hat[state.support]),
                     minlength=part.n_groups)
    active = np.zeros(part.n_groups, dtype=bool)
    active[part.labels[state.support]] = True
    lab = part.labels[cand]
    gc = g[cand]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(active[lab], gc / l1[lab], gc)
        ratio = np.where(active[lab] & (l1[lab] == 0), np.where(gc > 0, np.inf, 0.0), ratio)
        limit = np.where(active[lab], mu, zero_tol)
        score = np.where(limit > 0, ratio / limit, np.where(ratio > 0, np.inf, 0.0))
    k = int(np.argmax(score))  # first maximum, i.e. lowest index
    passed = bool(score[k] <= 1.0 + rtol)
    return NecessaryReport(passed, int(lab[k]), int(cand[k]), float(ratio[k]),
                           float(score[k]), bool(not active[lab[k]]))


@dataclass
class SufficientReport:
    """Gap-based stopping test.

    ``gap_bound`` is ``restricted_gap + (off_excess + inactive_mass) / (2 mu)``,
    which is the full duality gap of the zero-extended point split by group:

    - ``off_excess`` sums ``max(0, b_G**2 - a_G**2)`` over groups meeting the
      support, with ``a_G``, ``b_G`` the largest on- and off-support gradient
      magnitudes in the group;
    - ``inactive_mass`` sums ``||g_G||_inf**2`` over the other groups;
    - ``restricted_gap`` is the gap of the restricted problem (zero at an exact
      restricted optimum).

    ``aggregate_pass`` records the coarser test that compares the summed
    off-support and inactive masses separately against
    ``2 mu epsilon + mu**2 omega_J**2``. It can pass while the gap exceeds
    ``epsilon`` and is reported for reference only.
    """

    passed: bool
    gap_bound: float
    off_excess: float
    inactive_mass: float
    restricted_gap: float
    aggregate_pass: bool
    off_mass: float


def sufficient_condition(state: SupportState, part: GroupPartition, mu: float,
                         epsilon: float) -> SufficientReport:
    if mu <= 0 or epsilon < 0:
        raise ValueError("mu must be positive and epsilon non-negative")
    g = state.grad
    J = state.support
    view = RestrictedView(part, J)
    on = np.zeros(part.p, dtype=bool)
    on[J] = True
    active = np.zeros(part.n_groups, dtype=bool)
    active[view.parent_groups] = True
    a = np.zeros(part.n_groups)
    b = np.zeros(part.n_groups)
    np.maximum.at(a, part.labels[on], np.abs(g[on]))
    np.maximum.at(b, part.labels[~on], np.abs(g[~on]))
    off_excess = float(np.sum(np.maximum(b[active] ** 2 - a[active] ** 2, 0.0)))
    off_mass = float(np.sum(b[active] ** 2))
    inactive_mass = float(np.sum(b[~active] ** 2))
    if len(view):
        xJ = state.x_hat[J]
        om2 = omega_restricted(xJ, view) ** 2
        rgap = mu / 2 * om2 + float(np.sum(a[active] ** 2)) / (2 * mu) + float(xJ @ g[J])
        rgap = max(rgap, 0.0)
    else:
        om2, rgap = 0.0, 0.0
    bound = rgap + (off_excess + inactive_mass) / (2 * mu)
    slack = 2 * mu * epsilon + mu ** 2 * om2
    aggregate = off_mass <= slack and inactive_mass <= slack
    return SufficientReport(bool(bound <= epsilon), bound, off_excess, inactive_mass,
                            rgap, bool(aggregate), off_mass)


def _resolve(problem: RegressionProblem, part: GroupPartition, mu: float, support,
             x_prev: np.ndarray, added: int, grad_prev: np.ndarray,
             config: SolverConfig) -> tuple[SupportState, SolveReport]:
    x0 = x_prev.copy()
    x0[added] = -np.sign(grad_prev[added]) * WARM_START_NUDGE
    view = RestrictedView(part, support)
    rep = irls_restricted_solve(problem, view, mu, config, x0=x0)
    state = SupportState(view.support, rep.x_hat, ls_grad(problem, rep.x_hat),
                         duality_gap(problem, part, rep.x_hat, mu=mu))
    return state, rep


def active_set_solve(problem: RegressionProblem, part: GroupPartition, mu: float,
                     s_max: int, epsilon: float, mode: EvolutionMode = PLAIN,
                     config: SolverConfig | None = None,
                     trace: Callable[[dict], None] | None = None
                     ) -> tuple[SupportState, SolveReport]:
    """Grow the support until the gap bound certifies ``epsilon``-optimality.

    Phase one adds the largest-gradient reachable index of the group that
    violates the necessary test most; phase two adds the largest-gradient
    reachable index overall until the sufficient test passes. Both stop at
    ``s_max`` indices. ``trace`` receives one dict per addition.

    Returns
    -------
    state : SupportState
    report : SolveReport
        ``converged`` is the final sufficient-test outcome;
        ``extra["trace"]`` lists the additions.
    """
    if not mu > 0 or not epsilon > 0:
        raise ValueError("mu and epsilon must be positive")
    if not 1 <= s_max <= problem.p:
        raise ValueError("s_max must lie in [1, p]")
    if part.p != problem.p:
        raise ValueError("partition and problem dimensions differ")
    config = config or SolverConfig(mu=mu, max_iter=500, obj_tol=1e-10)
    zero_tol = np.sqrt(2 * mu * epsilon)
    state = SupportState.empty(problem, part, mu)
    steps: list[dict] = []
    inner = 0

    def add(index: int, phase: str):
        nonlocal state, inner
        support = np.append(state.support, index)
        state, rep = _resolve(problem, part, mu, support, state.x_hat, index, state.grad, config)
        inner += rep.iterations
        rec = {"iteration": len(steps) + 1, "size": len(state.support), "added": index,
               "phase": phase, "gap": state.gap, "residual": rep.extra["residual"]}
        steps.append(rec)
        log.debug("step %(iteration)d |J|=%(size)d add %(added)d (%(phase)s) gap=%(gap).3e", rec)
        if trace is not None:
            trace(rec)

    while len(state.support) < s_max:
        nec = necessary_condition(state, part, mode, mu, zero_tol)
        if nec.passed:
            break
        add(nec.index, "necessary")
    suff = sufficient_condition(state, part, mu, epsilon)
    while not suff.passed and len(state.support) < s_max:
        cand = allowed_additions(state.support, part.p, mode)
        if cand.size == 0:
            break
        add(int(cand[np.argmax(np.abs(state.grad[cand]))]), "sufficient")
        suff = sufficient_condition(state, part, mu, epsilon)
    obj = ls_loss(problem, state.x_hat) + mu / 2 * omega(state.x_hat, part) ** 2
    report = SolveReport(state.x_hat, float(obj), inner, state.gap, suff.passed,
                         {"trace": steps, "sufficient": suff,
                          "dual_norm": omega_dual(state.grad, part)})
    return state, report
