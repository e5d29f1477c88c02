"""Centralised benchmark allocators and the exhaustive grid oracle.

Solvers optimise the uncapped weighted sum-rate; the 30 dB SINR cap is only
applied by the simulator when a slot is evaluated.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

GRID_LIMIT = 10**7


@dataclass
class SolveResult:
    p: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "objective"])
            for k, v in enumerate(self.objective_trace):
                wr.writerow([k, repr(v)])


def weighted_sum_rate(g: np.ndarray, p: np.ndarray, w: np.ndarray, sigma2: float) -> float:
    """sum_i w_i log2(1 + SINR_i) without SINR capping."""
    total = g.T @ p + sigma2
    direct = np.diag(g) * p
    return float(np.dot(w, np.log2(1.0 + direct / (total - direct))))


def _converged(prev: float, cur: float, tol: float) -> bool:
    return abs(cur - prev) <= tol * max(abs(prev), 1e-300)


def fp_solve(g, w, P_max: float, sigma2: float, tol: float = 1e-6, max_iter: int = 500,
             rng: np.random.Generator | None = None, p0=None) -> SolveResult:
    """Closed-form fractional programming power control.

    Each iteration sets the SINR auxiliaries, then the quadratic-transform
    auxiliaries ``y``, then the powers. The starting point is uniform in
    ``[0, P_max]`` unless ``p0`` is given.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    n = g.shape[0]
    if p0 is None:
        rng = np.random.default_rng() if rng is None else rng
        p = rng.uniform(0.0, P_max, size=n)
    else:
        p = np.clip(np.asarray(p0, dtype=float), 0.0, P_max)
    gd = np.diag(g)
    obj = weighted_sum_rate(g, p, w, sigma2)
    trace = [obj]
    best_p, best = p, obj
    for it in range(1, max_iter + 1):
        total = g.T @ p + sigma2
        direct = gd * p
        gamma = direct / (total - direct)
        y = np.sqrt(w * (1.0 + gamma) * direct) / total
        num = y**2 * w * (1.0 + gamma) * gd
        den = (g @ y**2) ** 2
        p = np.minimum(P_max, np.divide(num, den, out=np.zeros(n), where=num > 0))
        new = weighted_sum_rate(g, p, w, sigma2)
        trace.append(new)
        if new > best:
            best_p, best = p, new
        if _converged(obj, new, tol):
            return SolveResult(p=p, objective_trace=trace, iterations=it, converged=True)
        obj = new
    return SolveResult(p=best_p, objective_trace=trace, iterations=max_iter, converged=False)


def wmmse_solve(g, w, P_max: float, sigma2: float, tol: float = 1e-6, max_iter: int = 500,
                p0=None, eps: float = 1e-12) -> SolveResult:
    """Scalar weighted MMSE in amplitude form, starting from full power."""
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    n = g.shape[0]
    vmax = np.sqrt(P_max)
    v = np.full(n, vmax) if p0 is None else np.sqrt(np.clip(np.asarray(p0, dtype=float), 0.0, P_max))
    sg = np.sqrt(np.diag(g))
    obj = weighted_sum_rate(g, v**2, w, sigma2)
    trace = [obj]
    best_v, best = v, obj
    for it in range(1, max_iter + 1):
        u = sg * v / (g.T @ v**2 + sigma2)
        m = 1.0 / np.maximum(1.0 - u * sg * v, eps)
        num = w * m * u * sg
        den = g @ (w * m * u**2)
        v = np.clip(np.divide(num, den, out=np.zeros(n), where=den > 0), 0.0, vmax)
        new = weighted_sum_rate(g, v**2, w, sigma2)
        trace.append(new)
        if new > best:
            best_v, best = v, new
        if _converged(obj, new, tol):
            return SolveResult(p=v**2, objective_trace=trace, iterations=it, converged=True)
        obj = new
    return SolveResult(p=best_v**2, objective_trace=trace, iterations=max_iter, converged=False)


def central_delayed(g_prev, w, P_max: float, sigma2: float, **kwargs) -> SolveResult:
    """FP on the previous slot's full CSI; the caller applies ``p`` to the current slot."""
    return fp_solve(g_prev, w, P_max, sigma2, **kwargs)


def random_alloc(n: int, P_max: float, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, P_max, size=n)


def full_power(n: int, P_max: float) -> np.ndarray:
    return np.full(n, float(P_max))


def grid_oracle(g, w, P_max: float, sigma2: float, levels: int = 10, chunk: int = 200_000) -> SolveResult:
    """Exhaustive search over ``levels`` evenly spaced powers per link.

    Ties resolve to the first allocation in lexicographic level order.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    n = g.shape[0]
    if levels < 2:
        raise ValueError("need at least two power levels")
    if levels**n > GRID_LIMIT:
        raise ValueError(f"grid of {levels}^{n} allocations exceeds {GRID_LIMIT}")
    grid = np.linspace(0.0, P_max, levels)
    gd = np.diag(g)
    best, best_p = -np.inf, None
    combos = itertools.product(range(levels), repeat=n)
    evaluated = 0
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        P = grid[block]  # (m, n)
        total = P @ g + sigma2
        direct = P * gd
        vals = np.log2(1.0 + direct / (total - direct)) @ w
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_p = float(vals[k]), P[k].copy()
        evaluated += len(block)
    return SolveResult(p=best_p, objective_trace=[best], iterations=evaluated, converged=True)
