"""Least-squares solvers regularized by the exclusive group norm and baselines.

Two formulations are supported::

    min_x  L(x) + lam * omega(x)           (fista_solve)
    min_x  L(x) + mu / 2 * omega(x) ** 2   (irls_restricted_solve, active set)

with ``L(x) = ||y - A x||**2 / (2 n)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from .partition import (GroupPartition, RestrictedView, omega, omega_dual,
                        omega_dual_restricted)
from .prox import prox_scaled, soft_threshold

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class RegressionProblem:
    A: np.ndarray
    y: np.ndarray
    x_true: np.ndarray | None = None
    noise_sigma2: float | None = None
    n_samples: int | None = None  # loss normaliser; defaults to the row count

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        rows, p = self.A.shape
        if rows < 1 or p < 1:
            raise ValueError("design must have at least one row and one column")
        if self.y.size != rows:
            raise ValueError(f"y has {self.y.size} entries, A has {rows} rows")
        if self.n_samples is None:
            self.n_samples = rows
        if self.n_samples < 1:
            raise ValueError("n must be at least 1")
        if self.x_true is not None:
            self.x_true = np.asarray(self.x_true, dtype=float).ravel()
            if self.x_true.size != p:
                raise ValueError("x_true length does not match the design")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.y))):
            raise ValueError("problem data must be finite")

    @property
    def n(self) -> int:
        return self.n_samples

    @property
    def p(self) -> int:
        return self.A.shape[1]

    def columns(self, idx) -> "RegressionProblem":
        xt = None if self.x_true is None else self.x_true[idx]
        return RegressionProblem(self.A[:, idx], self.y, xt, self.noise_sigma2, self.n_samples)


@dataclass
class SolverConfig:
    """Exactly one of ``lam`` (norm penalty) and ``mu`` (squared penalty)."""

    lam: float | None = None
    mu: float | None = None
    max_iter: int = 20000
    obj_tol: float = 1e-10
    gap_tol: float = 1e-8
    check_every: int = 10

    def __post_init__(self):
        if (self.lam is None) == (self.mu is None):
            raise ValueError("set exactly one of lam and mu")
        reg = self.lam if self.lam is not None else self.mu
        if reg < 0:
            raise ValueError("regularization must be non-negative")
        if self.max_iter < 1 or self.obj_tol <= 0 or self.gap_tol <= 0:
            raise ValueError("max_iter and tolerances must be positive")


@dataclass
class SolveReport:
    x_hat: np.ndarray
    objective: float
    iterations: int
    duality_gap: float | None
    converged: bool
    extra: dict = field(default_factory=dict)


def _check_x(problem: RegressionProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.p,):
        raise ValueError(f"expected a vector of length {problem.p}, got shape {x.shape}")
    return x


def ls_loss(problem: RegressionProblem, x) -> float:
    r = problem.y - problem.A @ _check_x(problem, x)
    return float(r @ r) / (2 * problem.n)


def ls_grad(problem: RegressionProblem, x) -> np.ndarray:
    r = problem.A @ _check_x(problem, x) - problem.y
    return problem.A.T @ r / problem.n


def lipschitz_constant(problem: RegressionProblem, rtol: float = 1e-10,
                       max_iter: int = 100000) -> float:
    """Upper estimate of ``sigma_max(A)**2 / n`` by power iteration."""
    A = problem.A
    if not np.any(A):
        raise ValueError("design matrix is zero")
    v = np.random.default_rng(0).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    # Rayleigh quotient of the final iterate
    est = max(est, float(v @ (A.T @ (A @ v))))
    return est / problem.n * (1 + 1e-6)


class _Quadratic:
    """Cached pieces of the least-squares loss for repeated evaluation."""

    def __init__(self, problem: RegressionProblem):
        self.problem = problem
        rows, p = problem.A.shape
        n = problem.n
        self.use_gram = p <= 2 * rows
        if self.use_gram:
            self.gram = problem.A.T @ problem.A / n
            self.aty = problem.A.T @ problem.y / n
            self.c = float(problem.y @ problem.y) / (2 * n)

    def grad(self, x):
        if self.use_gram:
            return self.gram @ x - self.aty
        return ls_grad(self.problem, x)

    def value_grad(self, x):
        if self.use_gram:
            gx = self.gram @ x
            return 0.5 * float(x @ gx) - float(self.aty @ x) + self.c, gx - self.aty
        r = self.problem.A @ x - self.problem.y
        return float(r @ r) / (2 * self.problem.n), self.problem.A.T @ r / self.problem.n


def _lambda_gap(problem: RegressionProblem, x, lam: float, penalty: float,
                dual: Callable[[np.ndarray], float]) -> float:
    """Fenchel gap of ``L + lam * pen`` with a rescaled residual as dual point."""
    r = problem.y - problem.A @ x
    n = problem.n
    primal = float(r @ r) / (2 * n) + lam * penalty
    dn = dual(problem.A.T @ r / n)
    s = 1.0 if dn <= lam else lam / dn
    theta = s * r / n
    dual_obj = float(theta @ problem.y) - n / 2 * float(theta @ theta)
    return max(primal - dual_obj, 0.0)


def duality_gap(problem: RegressionProblem, part: GroupPartition, x,
                lam: float | None = None, mu: float | None = None) -> float:
    """Duality gap of ``x`` for the norm (``lam``) or squared-norm (``mu``) problem.

    For ``mu`` the dual point is ``u = grad L(x)``, which makes the loss term
    of the gap vanish and leaves
    ``mu/2 omega(x)**2 + omega_dual(u)**2 / (2 mu) + x.u``.
    """
    x = _check_x(problem, x)
    if (lam is None) == (mu is None):
        raise ValueError("pass exactly one of lam and mu")
    if lam is not None:
        return _lambda_gap(problem, x, lam, omega(x, part), lambda u: omega_dual(u, part))
    if mu <= 0:
        raise ValueError("mu must be positive")
    u = ls_grad(problem, x)
    om = omega(x, part)
    gap = mu / 2 * om ** 2 + omega_dual(u, part) ** 2 / (2 * mu) + float(x @ u)
    return max(gap, 0.0)


def restricted_gap(problem: RegressionProblem, view: RestrictedView, xJ, mu: float) -> float:
    """Gap of the zero-extended restricted optimum on the full problem.

    Valid only when ``xJ`` solves the restricted squared-norm problem; it
    then equals ``(omega_dual(u)**2 - omega_dual_J(u_J)**2) / (2 mu)``.
    """
    x = view.extend(xJ)
    u = ls_grad(problem, x)
    full = omega_dual(u, view.parent) ** 2
    rest = omega_dual_restricted(u[view.support], view) ** 2
    return (full - rest) / (2 * mu)


def _fista(problem: RegressionProblem, prox: Callable[[np.ndarray, float], np.ndarray],
           penalty: Callable[[np.ndarray], float], dual: Callable[[np.ndarray], float],
           lam: float, config: SolverConfig, x0=None, lipschitz: float | None = None) -> SolveReport:
    """Accelerated proximal gradient with objective-based momentum restart."""
    quad = _Quadratic(problem)
    gamma = lipschitz if lipschitz is not None else lipschitz_constant(problem)
    x = np.zeros(problem.p) if x0 is None else np.array(x0, dtype=float)
    loss, _ = quad.value_grad(x)
    obj = loss + lam * penalty(x)
    w = x.copy()
    xi = 1.0
    gap = None
    converged = False
    restarts = 0
    history = [obj]
    it = 0
    for it in range(1, config.max_iter + 1):
        x_new = prox(w - quad.grad(w) / gamma, lam / gamma)
        loss, _ = quad.value_grad(x_new)
        obj_new = loss + lam * penalty(x_new)
        if obj_new > obj and w is not x:
            # momentum overshoot: next step is a plain proximal step from x
            restarts += 1
            xi = 1.0
            w = x
        else:
            xi_new = (1 + np.sqrt(1 + 4 * xi * xi)) / 2
            w = x_new + (xi - 1) / xi_new * (x_new - x)
            x, obj, xi = x_new, obj_new, xi_new
        history.append(obj)
        if it % config.check_every == 0:
            if lam > 0:
                gap = _lambda_gap(problem, x, lam, penalty(x), dual)
                if gap <= config.gap_tol:
                    converged = True
                    break
            elif np.linalg.norm(quad.grad(x)) <= config.gap_tol:
                converged = True
                break
    if lam > 0:
        gap = _lambda_gap(problem, x, lam, penalty(x), dual)
        converged = converged or gap <= config.gap_tol
    return SolveReport(x, float(obj), it, gap, converged,
                       {"restarts": restarts, "lipschitz": gamma, "objectives": np.array(history)})


def fista_solve(problem: RegressionProblem, part: GroupPartition, config: SolverConfig,
                x0=None, lipschitz: float | None = None) -> SolveReport:
    """Minimize ``L(x) + lam * omega(x)`` by FISTA with the exclusive-norm prox."""
    if config.lam is None:
        raise ValueError("fista_solve needs lam")
    if part.p != problem.p:
        raise ValueError("partition and problem dimensions differ")

    def prox(v, s):
        return prox_scaled(v, s, part, method="newton").z if s > 0 else v

    return _fista(problem, prox, lambda x: omega(x, part), lambda u: omega_dual(u, part),
                  config.lam, config, x0, lipschitz)


def classic_lasso_solve(problem: RegressionProblem, config: SolverConfig, x0=None,
                        lipschitz: float | None = None) -> SolveReport:
    """Plain l1-regularized least squares by FISTA."""
    if config.lam is None:
        raise ValueError("classic_lasso_solve needs lam")
    return _fista(problem, soft_threshold, lambda x: float(np.abs(x).sum()),
                  lambda u: float(np.abs(u).max()), config.lam, config, x0, lipschitz)


def latent_group_lasso_solve(problem: RegressionProblem, latent_groups, config: SolverConfig,
                             x0=None, lipschitz: float | None = None) -> SolveReport:
    """Latent (overlapping) group Lasso by covariate duplication.

    Each column is copied once per group containing it; the duplicated problem
    is a plain group Lasso with unit weights solved by FISTA. The estimate is
    the sum of the latent vectors. ``x0`` warm-starts the latent vector.
    """
    if config.lam is None:
        raise ValueError("latent_group_lasso_solve needs lam")
    groups = [np.asarray(sorted(set(int(i) for i in H)), dtype=np.intp) for H in latent_groups]
    cols = np.concatenate(groups)
    covered = np.zeros(problem.p, dtype=bool)
    covered[cols] = True
    if not covered.all():
        if problem.x_true is not None and np.any(problem.x_true[~covered]):
            log.warning("latent groups miss %d indices used by the true support",
                        int(np.count_nonzero(problem.x_true[~covered])))
    bounds = np.cumsum([0] + [g.size for g in groups])
    labels = np.repeat(np.arange(len(groups)), [g.size for g in groups])
    dup = RegressionProblem(problem.A[:, cols], problem.y, n_samples=problem.n)

    def norms(v):
        return np.sqrt(np.bincount(labels, weights=v * v, minlength=len(groups)))

    def prox(v, s):
        nv = norms(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(nv > s, 1 - s / nv, 0.0)
        return v * scale[labels]

    rep = _fista(dup, prox, lambda v: float(norms(v).sum()), lambda u: float(norms(u).max()),
                 config.lam, config, x0, lipschitz)
    x = np.zeros(problem.p)
    np.add.at(x, cols, rep.x_hat)
    rep.extra.update(latent=rep.x_hat, latent_bounds=bounds, latent_penalty=float(norms(rep.x_hat).sum()),
                     d_H=1.0)
    rep.x_hat = x
    return rep


def _restricted_residual(gJ: np.ndarray, xJ: np.ndarray, view: RestrictedView, mu: float) -> float:
    """Stationarity residual of the restricted squared-norm problem.

    Non-zero entries need ``g_i + mu ||x_{G_i & J}||_1 sign(x_i) = 0``; zero
    entries need ``|g_i| <= mu ||x_{G_i & J}||_1``.
    """
    l1 = view.group_l1(xJ)[view.local_labels]
    on = xJ != 0
    res = np.where(on, np.abs(gJ + mu * l1 * np.sign(xJ)), np.maximum(np.abs(gJ) - mu * l1, 0.0))
    return float(res.max(initial=0.0))


def _sign_polish(G: np.ndarray, b: np.ndarray, xJ: np.ndarray, view: RestrictedView,
                 mu: float, rel: float) -> np.ndarray | None:
    """Exact solution for the sign pattern of ``xJ`` (entries below ``rel`` of the max dropped).

    With signs fixed the squared norm is the quadratic ``sum_G (s_G . x_G)**2``,
    so stationarity is one linear system.
    """
    amax = np.abs(xJ).max(initial=0.0)
    if amax == 0:
        return None
    keep = np.abs(xJ) > rel * amax
    s = np.sign(xJ[keep])
    lab = view.local_labels[keep]
    M = (lab[:, None] == lab[None, :]) * np.outer(s, s)
    H = G[np.ix_(keep, keep)] + mu * M
    H[np.diag_indices_from(H)] += 1e-12
    try:
        xk = linalg.solve(H, b[keep], assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        xk = np.linalg.lstsq(H, b[keep], rcond=None)[0]
    if np.any(np.sign(xk) != s):
        return None
    out = np.zeros_like(xJ)
    out[keep] = xk
    return out


def irls_restricted_solve(problem: RegressionProblem, view: RestrictedView, mu: float,
                          config: SolverConfig | None = None, x0=None) -> SolveReport:
    """Minimize ``L_J(x_J) + mu/2 * omega_J(x_J)**2`` over the support ``J``.

    Uses the variational identity ``(sum_i |x_i|)**2 = min_theta sum_i x_i**2 / theta_i``
    over the simplex, alternating a ridge-like solve in ``x`` with a closed-form
    weight update. Each round also tries the exact solve for the current
    sign pattern, which terminates the loop once it is stationary.
    ``x0`` (length ``p``) seeds the weights; if that run stalls, a cold start
    from uniform weights is tried too. ``x_hat`` in the report is
    zero-extended to length ``p``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if len(view) == 0:
        raise ValueError("support must be non-empty")
    config = config or SolverConfig(mu=mu, max_iter=500)
    A = problem.A[:, view.support]
    n = problem.n
    G = A.T @ A / n
    b = A.T @ problem.y / n
    start = None if x0 is None else view.check(np.asarray(x0, dtype=float)[view.support])
    best, best_res, it = _irls_loop(G, b, view, mu, config, start)
    total = it
    if best_res > config.obj_tol and start is not None:
        # weights from a warm start pin its zeros; retry from uniform weights
        cold, cold_res, it = _irls_loop(G, b, view, mu, config, None)
        total += it
        if cold_res < best_res:
            best, best_res = cold, cold_res
    x = view.extend(best)
    obj = ls_loss(problem, x) + mu / 2 * omega(x, view.parent) ** 2
    return SolveReport(x, obj, total, None, best_res <= config.obj_tol,
                       {"residual": best_res})


IRLS_STALL = 200


def _irls_loop(G, b, view: RestrictedView, mu: float, config: SolverConfig, start):
    lab = view.local_labels
    eps = 1e-10
    if start is None:
        theta = 1.0 / np.bincount(lab)[lab]
        best, best_res = np.zeros(len(view)), np.inf
    else:
        w = np.abs(start) + eps
        theta = w / np.bincount(lab, weights=w)[lab]
        best, best_res = start, _restricted_residual(G @ start - b, start, view, mu)
    it = last_gain = 0
    for it in range(1, config.max_iter + 1):
        if best_res <= config.obj_tol:
            it -= 1
            break
        if it - last_gain > IRLS_STALL:
            # the residual has reached its floating-point floor
            break
        # x = D^(1/2) v with D = diag(theta) keeps the system's spectrum above mu
        d = np.sqrt(theta)
        H = d[:, None] * G * d[None, :]
        H[np.diag_indices_from(H)] += mu + 1e-12
        try:
            xJ = d * linalg.solve(H, d * b, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            xJ = d * np.linalg.lstsq(H, d * b, rcond=None)[0]
        w = np.abs(xJ) + eps
        theta = w / np.bincount(lab, weights=w)[lab]
        if it % 10 == 0:
            eps *= 0.1
        for cand in (xJ, _sign_polish(G, b, xJ, view, mu, 1e-6), _sign_polish(G, b, xJ, view, mu, 1e-3)):
            if cand is None:
                continue
            res = _restricted_residual(G @ cand - b, cand, view, mu)
            if res < best_res:
                best, best_res, last_gain = cand, res, it
    return best, best_res, it


def read_problem(path) -> RegressionProblem:
    toks = Path(path).read_text().split()
    n, p = int(toks[0]), int(toks[1])
    vals = np.array(toks[2:], dtype=float)
    if vals.size != n + n * p:
        raise ValueError(f"expected {n + n * p} values after the header, found {vals.size}")
    return RegressionProblem(vals[n:].reshape(n, p), vals[:n])


def write_problem(problem: RegressionProblem, path) -> None:
    fmt = lambda v: " ".join(f"{a:.17g}" for a in v)  # noqa: E731
    lines = [f"{problem.n} {problem.p}", fmt(problem.y)]
    lines += [fmt(row) for row in problem.A]
    Path(path).write_text("\n".join(lines) + "\n")
