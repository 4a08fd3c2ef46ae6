"""Full-batch limited-memory BFGS and a central-difference gradient check."""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

STOP_REASONS = ("grad_tol", "rel_cost", "max_iters", "line_search_failure")


@dataclass(frozen=True)
class OptimSettings:
    memory_pairs: int = 10
    max_iters: int = 2000
    grad_tol: float = 1e-6
    rel_cost_tol: float = 1e-10
    rel_cost_window: int = 10
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_evals: int = 40

    def __post_init__(self):
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.memory_pairs < 1:
            raise ValueError("memory_pairs must be at least 1")
        if self.max_iters < 0 or self.rel_cost_window < 1:
            raise ValueError("invalid iteration limits")


@dataclass
class OptimResult:
    x: np.ndarray
    cost: float
    iterations: int
    stop_reason: str
    cost_history: list[float] = field(default_factory=list)
    grad_norm_history: list[float] = field(default_factory=list)

    def dump_history(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "cost", "grad_norm"])
            for k, (f, g) in enumerate(zip(self.cost_history, self.grad_norm_history)):
                w.writerow([k, repr(f), repr(g)])


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (f, f') at a and b, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t if np.isfinite(t) else None


def _line_search(fun, x, f0, g0, d, t, c1, c2, max_evals):
    """Strong Wolfe step along ``d`` (bracketing then zoom).

    Returns ``(t, f, g)`` or None when no step with sufficient decrease was found.
    """
    dphi0 = float(g0 @ d)
    evals = 0

    def phi(t):
        nonlocal evals
        evals += 1
        f, g = fun(x + t * d)
        return float(f), g, float(g @ d)

    def armijo(t, f):
        return np.isfinite(f) and f <= f0 + c1 * t * dphi0

    def zoom(lo, hi):
        # lo, hi: (t, f, g, dphi); lo always satisfies sufficient decrease
        while evals < max_evals:
            a, b = lo[0], hi[0]
            width = abs(b - a)
            if width <= 1e-16 * max(abs(a), abs(b)):
                break
            tc = None
            if np.isfinite(hi[1]):
                tc = _cubic_min(a, lo[1], lo[3], b, hi[1], hi[3])
            lo_b, hi_b = min(a, b) + 0.1 * width, max(a, b) - 0.1 * width
            if tc is None or not lo_b <= tc <= hi_b:
                tc = 0.5 * (a + b)
            f, g, dphi = phi(tc)
            if not armijo(tc, f) or f >= lo[1]:
                hi = (tc, f, g, dphi)
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return tc, f, g
                if dphi * (b - a) >= 0:
                    hi = lo
                lo = (tc, f, g, dphi)
        if lo[0] > 0 and lo[1] < f0:
            return lo[0], lo[1], lo[2]
        return None

    prev = (0.0, f0, g0, dphi0)
    first = True
    while evals < max_evals:
        f, g, dphi = phi(t)
        cur = (t, f, g, dphi)
        if not armijo(t, f) or (not first and f >= prev[1]):
            return zoom(prev, cur)
        if abs(dphi) <= -c2 * dphi0:
            return t, f, g
        if dphi >= 0:
            return zoom(cur, prev)
        prev, first = cur, False
        t *= 4.0
    if prev[0] > 0:
        return prev[0], prev[1], prev[2]
    return None


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(objective: Objective, x0, settings: OptimSettings | None = None) -> OptimResult:
    """Minimize a smooth function given as ``x -> (cost, gradient)``.

    Line-search breakdowns do not raise: the best iterate is returned with
    ``stop_reason = "line_search_failure"``.
    """
    st = settings or OptimSettings()
    x = np.array(x0, dtype=np.float64)
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    hist, ghist = [f], [float(np.max(np.abs(g))) if g.size else 0.0]
    pairs: deque = deque(maxlen=st.memory_pairs)

    def result(reason, k):
        return OptimResult(x, f, k, reason, hist, ghist)

    if ghist[0] <= st.grad_tol:
        return result("grad_tol", 0)

    k = 0
    while k < st.max_iters:
        if pairs:
            d, t0 = _two_loop(g, pairs), 1.0
        else:
            d, t0 = -g, 1.0 / np.linalg.norm(g)
        if g @ d >= 0:
            pairs.clear()
            d, t0 = -g, 1.0 / np.linalg.norm(g)
        ls = _line_search(objective, x, f, g, d, t0, st.wolfe_c1, st.wolfe_c2, st.max_line_evals)
        if ls is None:
            if pairs:
                # retry once from steepest descent before giving up
                pairs.clear()
                continue
            logger.debug("line search failed at iteration %d, cost %.6e", k, f)
            return result("line_search_failure", k)
        t, f_new, g_new = ls
        g_new = np.asarray(g_new, dtype=np.float64)
        s = t * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        f, g = f_new, g_new
        k += 1
        hist.append(f)
        ghist.append(float(np.max(np.abs(g))))
        if ghist[-1] <= st.grad_tol:
            return result("grad_tol", k)
        w = st.rel_cost_window
        if k >= w and hist[-1 - w] - f <= st.rel_cost_tol * max(abs(f), np.finfo(float).tiny):
            return result("rel_cost", k)
    return result("max_iters", k)


def check_gradient(objective: Objective, x, step: float = 1e-6) -> float:
    """Max over coordinates of ``|analytic - numeric| / max(1, |numeric|)``.

    The numeric derivative is the central difference with the given step.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    _, g = objective(x)
    g = np.asarray(g, dtype=np.float64)
    worst = 0.0
    for i in range(x.size):
        xi = x[i]
        x[i] = xi + step
        fp = float(objective(x)[0])
        x[i] = xi - step
        fm = float(objective(x)[0])
        x[i] = xi
        num = (fp - fm) / (2.0 * step)
        worst = max(worst, abs(g[i] - num) / max(1.0, abs(num)))
    return worst
