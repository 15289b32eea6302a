"""Sparse-regression recovery benchmark.

A design with unit-norm Gaussian columns, a truth made of strings of ones and
Gaussian noise are drawn from a counter-based stream keyed by
``(seed, trial)``. Every algorithm sweeps the same regularization grid on the
same draws and the signed-support Hamming error is recorded per grid point.
"""
from __future__ import annotations

import csv
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .active_set import EvolutionMode, active_set_solve
from .partition import GroupPartition, read_partition, support_errors
from .solvers import (RegressionProblem, SolverConfig, classic_lasso_solve, fista_solve,
                      latent_group_lasso_solve, lipschitz_constant, ls_loss)

log = logging.getLogger(__name__)

ALGORITHMS = ("excl-prox", "excl-active", "excl-active-strings", "classic", "latent")
CSV_HEADER = ("algorithm", "lambda", "n", "sigma2", "trial", "errors", "runtime_ms", "converged")
SEED_MASK = (1 << 64) - 1


class SpecError(ValueError):
    pass


def default_grid(lo: float = 5e-3, hi: float = 2.5, num: int = 30) -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), num))


@dataclass
class ExperimentSpec:
    """Benchmark configuration; every field can be set from a ``key = value`` file.

    ``string_starts`` are 1-based and strings wrap around ``p``. ``group_scheme``
    is ``modulo(k)``, ``singleton`` or ``file:<path>`` (1-based partition file).
    Grid values are used as ``lam`` for norm penalties and as ``mu`` for the
    squared penalty of the active-set algorithms.
    """

    p: int = 200
    n: int = 180
    sigma2: float = 0.01
    string_starts: tuple[int, ...] = (4, 173)
    string_len: int = 10
    group_scheme: str = "modulo(10)"
    lambda_grid: tuple[float, ...] = field(default_factory=default_grid)
    trials: int = 20
    seed: int = 0
    algorithms: tuple[str, ...] = ("excl-prox", "excl-active", "classic")
    max_strings: int = 2
    wrap: bool = True
    latent_window: int = 10
    s_max_factor: int = 3
    epsilon_scale: float = 1e-6
    support_tol: float = 1e-6
    max_iter: int = 20000
    gap_tol: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.p < 1 or self.n < 1:
            raise SpecError("p and n must be at least 1")
        if self.sigma2 < 0:
            raise SpecError("sigma2 must be non-negative")
        if not 1 <= self.string_len <= self.p:
            raise SpecError("string_len must lie in [1, p]")
        if any(not 1 <= s <= self.p for s in self.string_starts):
            raise SpecError("string starts must lie in [1, p]")
        grid = list(self.lambda_grid)
        if not grid or any(v <= 0 for v in grid) or grid != sorted(grid):
            raise SpecError("lambda_grid must be non-empty, positive and ascending")
        if self.trials < 1:
            raise SpecError("trials must be at least 1")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise SpecError(f"unknown algorithms {sorted(bad)}; choose from {ALGORITHMS}")
        if self.max_strings < 1 or self.latent_window < 1 or self.s_max_factor < 1:
            raise SpecError("max_strings, latent_window and s_max_factor must be positive")
        self.partition()

    def truth(self) -> np.ndarray:
        x = np.zeros(self.p)
        for s in self.string_starts:
            x[(s - 1 + np.arange(self.string_len)) % self.p] = 1.0
        return x

    def partition(self) -> GroupPartition:
        scheme = self.group_scheme.strip()
        m = re.fullmatch(r"modulo\((\d+)\)", scheme)
        if m:
            k = int(m.group(1))
            if not 1 <= k <= self.p:
                raise SpecError("modulo group count must lie in [1, p]")
            return GroupPartition.modulo(self.p, k)
        if scheme == "singleton":
            return GroupPartition.singletons(self.p)
        if scheme.startswith("file:"):
            try:
                return read_partition(scheme[5:], self.p)
            except (OSError, ValueError) as exc:
                raise SpecError(f"cannot read partition: {exc}") from exc
        raise SpecError(f"unknown group scheme {scheme!r}")

    def latent_groups(self) -> list[np.ndarray]:
        return [(s + np.arange(self.latent_window)) % self.p for s in range(self.p)]


_LIST_FIELDS = {"string_starts": int, "lambda_grid": float, "algorithms": str}


def _parse_value(name: str, raw: str, kind):
    raw = raw.strip()
    if name in _LIST_FIELDS:
        if name == "lambda_grid":
            m = re.fullmatch(r"logspace\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)", raw)
            if m:
                return default_grid(float(m.group(1)), float(m.group(2)), int(m.group(3)))
        conv = _LIST_FIELDS[name]
        return tuple(conv(tok) for tok in re.split(r"[,\s]+", raw) if tok)
    if kind is bool or kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int or kind == "int":
        return int(raw, 0)
    if kind is float or kind == "float":
        return float(raw)
    return raw


def parse_spec(text: str, **overrides) -> ExperimentSpec:
    """Build a spec from ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: f.type for f in fields(ExperimentSpec)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw, types[key])
        except ValueError as exc:
            raise SpecError(f"line {lineno}: bad value for {key}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentSpec(**values)
    except TypeError as exc:
        raise SpecError(str(exc)) from exc


def read_spec(path, **overrides) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from exc
    return parse_spec(text, **overrides)


def format_spec(spec: ExperimentSpec) -> str:
    out = []
    for f in fields(spec):
        v = getattr(spec, f.name)
        if isinstance(v, tuple):
            v = ", ".join(f"{a:.17g}" if isinstance(a, float) else str(a) for a in v)
        elif isinstance(v, float):
            v = f"{v:.17g}"
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


class TrialStream:
    """Uniform and Gaussian draws from a Philox-4x64 counter stream.

    The key is ``(seed, trial)`` so trials are independent and can be
    generated in any order. Gaussians use the Marsaglia polar method on pairs
    of uniforms in ``(-1, 1)``; rejected pairs are skipped in order.
    """

    def __init__(self, seed: int, trial: int):
        key = np.array([seed & SEED_MASK, trial & SEED_MASK], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size: int) -> np.ndarray:
        out = np.empty(size)
        filled = 0
        while filled < size:
            pairs = math.ceil((size - filled) / 2 / (math.pi / 4)) + 8
            u = 2.0 * self.uniform(2 * pairs).reshape(pairs, 2) - 1.0
            s = (u * u).sum(axis=1)
            ok = (s > 0) & (s < 1)
            u, s = u[ok], s[ok]
            z = (u * np.sqrt(-2.0 * np.log(s) / s)[:, None]).ravel()
            take = min(z.size, size - filled)
            out[filled:filled + take] = z[:take]
            filled += take
        return out


def generate_problem(spec: ExperimentSpec, trial: int) -> RegressionProblem:
    """Draw the design, truth and observations for one trial.

    Columns are consecutive blocks of ``n`` standard normals scaled to unit
    norm; the noise follows the design in the same stream.
    """
    if spec.n < 1:
        raise SpecError("n must be at least 1")
    stream = TrialStream(spec.seed, trial)
    A = stream.normal(spec.n * spec.p).reshape(spec.p, spec.n).T
    A = A / np.linalg.norm(A, axis=0)
    x_true = spec.truth()
    w = np.sqrt(spec.sigma2) * stream.normal(spec.n)
    return RegressionProblem(np.ascontiguousarray(A), A @ x_true + w, x_true, spec.sigma2)


@dataclass
class SweepRow:
    algorithm: str
    lam: float
    n: int
    sigma2: float
    trial: int | str
    errors: float
    runtime_ms: float
    converged: bool

    def as_csv(self) -> list[str]:
        err = str(self.errors) if isinstance(self.errors, int) else f"{self.errors:.17g}"
        return [self.algorithm, f"{self.lam:.17g}", str(self.n), f"{self.sigma2:.17g}",
                str(self.trial), err, f"{self.runtime_ms:.17g}", str(int(self.converged))]


def _sweep_algorithm(spec: ExperimentSpec, problem: RegressionProblem, part: GroupPartition,
                     algorithm: str, trial: int) -> list[SweepRow]:
    """One algorithm over the whole grid, largest value first with warm starts."""
    rows = []
    x_true = problem.x_true
    lip = lipschitz_constant(problem) if algorithm in ("excl-prox", "classic") else None
    latent_lip = None
    warm = None
    eps = spec.epsilon_scale * ls_loss(problem, np.zeros(problem.p))
    s_max = min(problem.p, spec.s_max_factor * int(np.count_nonzero(x_true)))
    for value in sorted(spec.lambda_grid, reverse=True):
        t0 = time.perf_counter()
        if algorithm == "excl-prox":
            cfg = SolverConfig(lam=value, max_iter=spec.max_iter, gap_tol=spec.gap_tol)
            rep = fista_solve(problem, part, cfg, x0=warm, lipschitz=lip)
            warm = rep.x_hat
        elif algorithm == "classic":
            cfg = SolverConfig(lam=value, max_iter=spec.max_iter, gap_tol=spec.gap_tol)
            rep = classic_lasso_solve(problem, cfg, x0=warm, lipschitz=lip)
            warm = rep.x_hat
        elif algorithm == "latent":
            cfg = SolverConfig(lam=value, max_iter=spec.max_iter, gap_tol=spec.gap_tol)
            rep = latent_group_lasso_solve(problem, spec.latent_groups(), cfg, x0=warm,
                                           lipschitz=latent_lip)
            latent_lip = rep.extra["lipschitz"]
            warm = rep.extra["latent"]
        else:
            mode = (EvolutionMode("strings", spec.max_strings, spec.wrap)
                    if algorithm == "excl-active-strings" else EvolutionMode("plain"))
            _, rep = active_set_solve(problem, part, value, s_max, eps, mode)
        ms = (time.perf_counter() - t0) * 1e3
        errors = support_errors(rep.x_hat, x_true, spec.support_tol)
        rows.append(SweepRow(algorithm, value, spec.n, spec.sigma2, trial, errors, ms, rep.converged))
    rows.reverse()
    return rows


def run_trial(spec: ExperimentSpec, trial: int) -> list[SweepRow]:
    problem = generate_problem(spec, trial)
    part = spec.partition()
    rows = []
    for algorithm in spec.algorithms:
        rows.extend(_sweep_algorithm(spec, problem, part, algorithm, trial))
    log.info("trial %d done", trial)
    return rows


def summarize(rows: list[SweepRow]) -> list[SweepRow]:
    """Mean errors and runtime per (algorithm, grid value), in first-seen order."""
    groups: dict[tuple[str, float], list[SweepRow]] = {}
    for r in rows:
        if isinstance(r.trial, int):
            groups.setdefault((r.algorithm, r.lam), []).append(r)
    out = []
    for (alg, lam), rs in groups.items():
        out.append(SweepRow(alg, lam, rs[0].n, rs[0].sigma2, "mean",
                            float(np.mean([r.errors for r in rs])),
                            float(np.mean([r.runtime_ms for r in rs])),
                            all(r.converged for r in rs)))
    return out


def run_sweep(spec: ExperimentSpec, out=None, threads: int = 1) -> list[SweepRow]:
    """All trials and algorithms over the grid, followed by summary rows.

    Trials run in a process pool when ``threads > 1``; rows are collected in
    trial order so the output does not depend on scheduling.
    """
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(run_trial, [spec] * spec.trials, range(spec.trials)))
    else:
        per_trial = [run_trial(spec, t) for t in range(spec.trials)]
    rows = [r for chunk in per_trial for r in chunk]
    rows += summarize(rows)
    if out is not None:
        write_rows(rows, out)
    return rows


def write_rows(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.as_csv())


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def best_mean_errors(rows: list[SweepRow], algorithm: str) -> tuple[float, float]:
    """``(grid value, mean errors)`` minimizing the mean error for ``algorithm``."""
    summ = [r for r in summarize(rows) if r.algorithm == algorithm]
    if not summ:
        raise KeyError(algorithm)
    best = min(summ, key=lambda r: (r.errors, r.lam))
    return best.lam, best.errors


def with_overrides(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in kw.items() if v is not None})
