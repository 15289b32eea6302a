"""Reference computations that do not reuse the package's algorithms."""
import itertools

import numpy as np
from scipy import optimize


def norm_value(z, groups):
    return float(np.sqrt(sum(np.abs(z[list(g)]).sum() ** 2 for g in groups)))


def dual_value(u, groups):
    return float(np.sqrt(sum(np.abs(u[list(g)]).max() ** 2 for g in groups)))


def prox_objective(z, x, groups):
    return 0.5 * float(np.sum((z - x) ** 2)) + norm_value(z, groups)


def grid_minimum(x, groups, step=1e-3, max_points=4_000_000):
    """Smallest prox objective over the lattice ``step * Z^p``.

    A bound-constrained quasi-Newton solve gives a centre ``c``. The objective is
    1-strongly convex, and a dual-feasible point ``u`` bounds its minimum from
    below by ``|x|^2/2 - |x - u|^2/2``, so every lattice point that could beat
    the lattice point nearest ``c`` lies in a computable box around ``c``.
    That box is searched exhaustively.
    """
    x = np.asarray(x, dtype=float)
    groups = [list(g) for g in groups]
    f = lambda z: prox_objective(z, x, groups)  # noqa: E731
    c = _split_solve(x, groups)
    u = x - c
    u = u / max(1.0, dual_value(u, groups))
    lower = 0.5 * x @ x - 0.5 * np.sum((x - u) ** 2)
    g0 = np.round(c / step) * step
    best = f(g0)
    # |g - z*|^2 <= 2 (f(g) - f*), |c - z*|^2 <= 2 (f(c) - f*)
    radius = np.sqrt(2 * max(best - lower, 0.0)) + np.sqrt(2 * max(f(c) - lower, 0.0)) + step
    lo = np.floor((c - radius) / step).astype(int)
    hi = np.ceil((c + radius) / step).astype(int)
    count = int(np.prod(hi - lo + 1))
    if count > max_points:
        raise RuntimeError(f"grid search box too large ({count} points)")
    axes = [np.arange(a, b + 1) * step for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, x.size)
    vals = 0.5 * np.sum((mesh - x) ** 2, axis=1)
    l1 = np.stack([np.abs(mesh[:, g]).sum(axis=1) for g in groups], axis=1)
    vals = vals + np.sqrt(np.sum(l1 ** 2, axis=1))
    k = int(np.argmin(vals))
    return float(min(vals[k], best)), mesh[k]


def _split_solve(x, groups):
    """Minimize the prox objective over ``z = a - b`` with ``a, b >= 0``.

    The norm is differentiable in ``(a, b)`` away from the origin, so L-BFGS-B
    with bounds converges to high accuracy.
    """
    p = x.size
    member = np.zeros((len(groups), p))
    for k, g in enumerate(groups):
        member[k, g] = 1.0

    def fun(v):
        a, b = v[:p], v[p:]
        z = a - b
        s = member @ (a + b)
        nrm = np.sqrt(s @ s)
        dn = member.T @ s / nrm if nrm > 0 else np.zeros(p)
        r = z - x
        return 0.5 * r @ r + nrm, np.concatenate([r + dn, -r + dn])

    v0 = np.concatenate([np.maximum(x, 0), np.maximum(-x, 0)]) * 0.5
    res = optimize.minimize(fun, v0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * p),
                            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10000})
    return res.x[:p] - res.x[p:]


def central_gradient(fun, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def enumerate_reachable(support, groups):
    """Every support reachable by adding at most one new index per group."""
    J = set(support)
    choices = [[None] + [i for i in g if i not in J] for g in groups]
    out = []
    for combo in itertools.product(*choices):
        new = {i for i in combo if i is not None}
        if new:
            out.append(frozenset(J | new))
    return out


def necessary_by_enumeration(state, part, mu, zero_tol):
    """Plain-mode test by listing every reachable support explicitly."""
    J = set(state.support.tolist())
    g = np.abs(state.grad)
    active = {int(part.labels[j]) for j in J}
    for k in enumerate_reachable(J, [g_.tolist() for g_ in part.groups]):
        new = k - J
        for G in active:
            members = [i for i in new if part.labels[i] == G]
            if not members:
                continue
            l1 = sum(abs(state.x_hat[j]) for j in J if part.labels[j] == G)
            worst = max(g[i] for i in members)
            if worst > 0 and (l1 == 0 or worst / l1 > mu):
                return False
    for G, grp in enumerate(part.groups):
        if G not in active and g[grp].max() > zero_tol:
            return False
    return True
