"""Diagnostics for signed-support recovery by the exclusive group Lasso.

Covers the design quantities that govern recovery (smallest restricted Gram
eigenvalue, an operator norm of its inverse, an incoherence margin, the
support count ``phi_J``), a primal-dual witness test for a single
realisation, and an empirical recovery-rate trend over growing sample sizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .partition import (GroupPartition, RestrictedView, omega,
                        phi_J, signed_support)
from .solvers import RegressionProblem, SolverConfig, SolverError, fista_solve

__all__ = [
    "ConsistencyReport", "WitnessResult", "TrendConfig", "TrendRow",
    "opnorm_omega_dual_to_inf", "restricted_gram_bounds", "incoherence_gamma",
    "witness_check", "consistency_report", "orthogonal_design", "recovery_trend", "phi_J",
]


def opnorm_omega_dual_to_inf(B, view: RestrictedView) -> float:
    """Operator norm of ``B`` from the restricted dual norm to l-infinity.

    The supremum of ``|b_i . u|`` over the restricted dual unit ball is the
    restricted norm of row ``b_i``, so the result is the largest row norm.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != len(view):
        raise ValueError(f"B has {B.shape[1]} columns, support has {len(view)} entries")
    if B.shape[0] == 0:
        return 0.0
    l1 = np.zeros((B.shape[0], view.parent_groups.size))
    for k, pos in enumerate(view.induced):
        l1[:, k] = np.abs(B[:, pos]).sum(axis=1)
    return float(np.sqrt((l1 ** 2).sum(axis=1)).max())


def _support(x_true) -> np.ndarray:
    J = np.flatnonzero(np.asarray(x_true, dtype=float))
    if J.size == 0:
        raise ValueError("x_true must be non-zero")
    return J


def _factor(AJ: np.ndarray):
    try:
        return linalg.cho_factor(AJ.T @ AJ)
    except linalg.LinAlgError as exc:
        raise SolverError("restricted Gram matrix is singular") from exc


def restricted_gram_bounds(problem: RegressionProblem, part: GroupPartition, support,
                           method: str = "dense") -> tuple[float, float]:
    """``(c_min, c_inf)`` for the scaled restricted Gram ``A_J^T A_J / n``.

    ``c_min`` is its smallest eigenvalue, ``c_inf`` the dual-to-infinity
    operator norm of its inverse. ``method="dense"`` uses a symmetric
    eigensolver and an explicit inverse; ``method="iterative"`` uses power
    iteration on the shifted matrix and Cholesky solves.
    """
    view = RestrictedView(part, support)
    AJ = problem.A[:, view.support]
    M = AJ.T @ AJ / problem.n
    if method == "dense":
        c_min = float(linalg.eigvalsh(M)[0])
        inv = linalg.inv(M)
    elif method == "iterative":
        top = _power(M)
        c_min = top - _power(top * np.eye(M.shape[0]) - M)
        try:
            inv = linalg.cho_solve(linalg.cho_factor(M), np.eye(M.shape[0]))
        except linalg.LinAlgError as exc:
            raise SolverError("restricted Gram matrix is singular") from exc
    else:
        raise ValueError(f"unknown method {method!r}")
    return c_min, opnorm_omega_dual_to_inf(inv, view)


def _power(M: np.ndarray, rtol: float = 1e-14, maxiter: int = 100000) -> float:
    """Largest eigenvalue of a positive semidefinite matrix."""
    v = np.random.default_rng(0).standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = M @ v
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        if abs(new - lam) <= rtol * max(abs(new), 1e-300):
            return new
        lam = new
    return lam


def incoherence_gamma(problem: RegressionProblem, part: GroupPartition, x_true) -> float:
    """Smallest per-group incoherence margin.

    For each group ``G`` the margin is ``||x*_G||_1 / omega(x*)`` minus the
    dual-to-infinity norm of ``A_{G-J}^T A_J (A_J^T A_J)^{-1}``. Groups that
    miss the support contribute a non-positive margin. Negative values are
    returned as is.
    """
    x_true = part.check(x_true)
    J = _support(x_true)
    view = RestrictedView(part, J)
    AJ = problem.A[:, J]
    cf = _factor(AJ)
    ratio = part.group_l1(x_true) / omega(x_true, part)
    off = np.ones(part.p, dtype=bool)
    off[J] = False
    margins = []
    for k, g in enumerate(part.groups):
        cols = g[off[g]]
        if cols.size:
            # rows of A_c^T A_J (A_J^T A_J)^{-1} are solves against the Gram factor
            B = linalg.cho_solve(cf, AJ.T @ problem.A[:, cols]).T
            margins.append(ratio[k] - opnorm_omega_dual_to_inf(B, view))
        else:
            margins.append(ratio[k])
    return float(min(margins))


@dataclass
class WitnessResult:
    dual_feasible: bool
    sign_ok: bool
    margins: np.ndarray  # per group: allowed bound minus largest witness entry
    x_check: np.ndarray  # restricted solution, zero-extended


def witness_check(problem: RegressionProblem, part: GroupPartition, x_true, lam: float,
                  config: SolverConfig | None = None) -> WitnessResult:
    """Primal-dual witness for one realisation.

    Solves the problem restricted to the true support, takes the canonical
    subgradient there and completes it off the support from the realised
    noise. ``dual_feasible`` requires every group's off-support witness to lie
    strictly below ``||x_G||_1 / omega(x)``; ``sign_ok`` compares the
    restricted solution's signs with the truth.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    x_true = part.check(x_true)
    J = _support(x_true)
    view = RestrictedView(part, J)
    n = problem.n
    AJ = problem.A[:, J]
    cf = _factor(AJ)
    sub = RegressionProblem(AJ, problem.y, n_samples=n)
    config = config or SolverConfig(lam=lam, gap_tol=1e-12, max_iter=100000)
    rep = fista_solve(sub, view.partition, SolverConfig(lam=lam, max_iter=config.max_iter,
                                                        gap_tol=config.gap_tol))
    x_check = view.extend(rep.x_hat)
    om = omega(x_check, part)
    if om == 0:
        return WitnessResult(False, False, np.full(part.n_groups, -np.inf), x_check)
    bound = part.group_l1(x_check) / om
    uJ = np.sign(rep.x_hat) * bound[part.labels[J]]
    w = problem.y - problem.A @ x_true
    w_perp = w - AJ @ linalg.cho_solve(cf, AJ.T @ w)
    u = problem.A.T @ (AJ @ linalg.cho_solve(cf, uJ) + w_perp / (n * lam))
    off = np.ones(part.p, dtype=bool)
    off[J] = False
    worst = np.zeros(part.n_groups)
    np.maximum.at(worst, part.labels[off], np.abs(u[off]))
    has_off = np.bincount(part.labels[off], minlength=part.n_groups) > 0
    margins = np.where(has_off, bound - worst, np.inf)
    feasible = bool(np.all(margins > 0))
    sign_ok = bool(np.array_equal(signed_support(rep.x_hat, 0.0), signed_support(x_true[J], 0.0)))
    return WitnessResult(feasible, sign_ok, margins, x_check)


@dataclass
class ConsistencyReport:
    c_min: float
    c_inf: float
    gamma: float
    phi_J: float
    balance_ratio: float
    witness_dual_feasible: bool
    witness_sign_ok: bool


def consistency_report(problem: RegressionProblem, part: GroupPartition, x_true,
                       lam: float) -> ConsistencyReport:
    x_true = part.check(x_true)
    J = _support(x_true)
    c_min, c_inf = restricted_gram_bounds(problem, part, J)
    counts = np.bincount(part.labels[J], minlength=part.n_groups)
    counts = counts[counts > 0]
    wit = witness_check(problem, part, x_true, lam)
    return ConsistencyReport(c_min, c_inf, incoherence_gamma(problem, part, x_true),
                             phi_J(part, J), float(counts.max() / counts.min()),
                             wit.dual_feasible, wit.sign_ok)


def orthogonal_design(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``n x p`` design with ``A^T A = n I`` (needs ``n >= p``)."""
    if n < p:
        raise ValueError("an orthogonal design needs n >= p")
    q, r = np.linalg.qr(rng.standard_normal((n, p)))
    return q * np.sign(np.diag(r)) * np.sqrt(n)


@dataclass
class TrendConfig:
    """Recovery-rate experiment over a sequence of sample sizes.

    The truth has ``actives_per_group`` ones at the start of each of
    ``n_groups`` interleaved groups (indices congruent modulo ``n_groups``);
    the penalty follows ``lam_scale * n ** -lam_exponent``.
    """

    n_values: tuple[int, ...] = (100, 200, 400, 800)
    p: int = 20
    n_groups: int = 2
    actives_per_group: int = 2
    sigma2: float = 1.0
    lam_scale: float = 1.0
    lam_exponent: float = 0.25
    trials: int = 50
    seed: int = 0
    orthogonal: bool = True

    def truth(self) -> np.ndarray:
        x = np.zeros(self.p)
        x[: self.n_groups * self.actives_per_group] = 1.0
        return x


@dataclass
class TrendRow:
    n: int
    lam: float
    recovery: float
    mean_gamma: float
    trials: int


def recovery_trend(cfg: TrendConfig) -> list[TrendRow]:
    """Empirical probability of exact signed-support recovery for each ``n``."""
    part = GroupPartition.modulo(cfg.p, cfg.n_groups)
    x_true = cfg.truth()
    rows = []
    for n in cfg.n_values:
        lam = cfg.lam_scale * n ** (-cfg.lam_exponent)
        hits, gammas = 0, []
        for t in range(cfg.trials):
            rng = np.random.default_rng([cfg.seed, n, t])
            if cfg.orthogonal:
                A = orthogonal_design(n, cfg.p, rng)
            else:
                A = rng.standard_normal((n, cfg.p))
            y = A @ x_true + np.sqrt(cfg.sigma2) * rng.standard_normal(n)
            prob = RegressionProblem(A, y, x_true, cfg.sigma2)
            rep = fista_solve(prob, part, SolverConfig(lam=lam, gap_tol=1e-10, max_iter=50000))
            hits += int(np.array_equal(signed_support(rep.x_hat, 1e-6), signed_support(x_true)))
            gammas.append(incoherence_gamma(prob, part, x_true))
        rows.append(TrendRow(n, lam, hits / cfg.trials, float(np.mean(gammas)), cfg.trials))
    return rows
