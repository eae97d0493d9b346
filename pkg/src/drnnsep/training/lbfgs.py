"""Limited-memory BFGS with a strong-Wolfe cubic-interpolation line search.

The line search follows the bracketing/zoom scheme of Nocedal & Wright
(Algorithms 3.5 and 3.6) with safeguarded cubic interpolation.  Accepted
steps satisfy

    f(x + a d) <= f(x) + c1 a g'd          (sufficient decrease)
    |g(x + a d)'d| <= c2 |g'd|             (strong curvature)
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

C1 = 1e-4
C2 = 0.9


def two_loop(grad, s_hist, y_hist):
    """Return -H grad using the stored curvature pairs (oldest first)."""
    q = grad.copy()
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for s, y, rho, a in zip(s_hist, y_hist, rhos, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _cubic_min(x1, f1, g1, x2, f2, g2, lo, hi):
    """Minimiser of the cubic through two points with slopes, clipped to [lo, hi]."""
    if x1 == x2:
        return 0.5 * (lo + hi)
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    disc = d1 * d1 - g1 * g2
    if disc < 0 or not math.isfinite(disc):
        return 0.5 * (lo + hi)
    d2 = math.copysign(math.sqrt(disc), x2 - x1)
    denom = g2 - g1 + 2.0 * d2
    if denom == 0:
        return 0.5 * (lo + hi)
    x = x2 - (x2 - x1) * (g2 + d2 - d1) / denom
    if not math.isfinite(x):
        return 0.5 * (lo + hi)
    return min(max(x, lo), hi)


@dataclass
class LineSearchResult:
    step: float | None
    f: float
    g: np.ndarray | None
    n_evals: int
    dphi0: float
    dphi: float = float("nan")


def wolfe_line_search(fun, x, f0, g0, d, step0=1.0, c1=C1, c2=C2, max_evals=25):
    """Strong-Wolfe line search along ``d``; ``step`` is None on failure."""
    dphi0 = float(g0 @ d)
    evals = 0

    def phi(a):
        nonlocal evals
        evals += 1
        f, g = fun(x + a * d)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            return math.inf, g, math.nan
        return f, g, float(g @ d)

    def zoom(lo, f_lo, dp_lo, g_lo, hi, f_hi, dp_hi):
        while evals < max_evals:
            a_min, a_max = min(lo, hi), max(lo, hi)
            width = a_max - a_min
            if width <= 1e-16 * max(1.0, a_max):
                break
            if math.isfinite(f_hi) and math.isfinite(dp_hi):
                a = _cubic_min(lo, f_lo, dp_lo, hi, f_hi, dp_hi,
                               a_min + 0.1 * width, a_max - 0.1 * width)
            else:
                a = 0.5 * (lo + hi)
            f, g, dp = phi(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                hi, f_hi, dp_hi = a, f, dp
            else:
                if abs(dp) <= -c2 * dphi0:
                    return LineSearchResult(a, f, g, evals, dphi0, dp)
                if dp * (hi - lo) >= 0:
                    hi, f_hi, dp_hi = lo, f_lo, dp_lo
                lo, f_lo, dp_lo, g_lo = a, f, dp, g
        return LineSearchResult(None, f0, None, evals, dphi0)

    if not dphi0 < 0:
        return LineSearchResult(None, f0, None, 0, dphi0)
    a_prev, f_prev, dp_prev, g_prev = 0.0, f0, dphi0, g0
    a = step0
    first = True
    while evals < max_evals:
        f, g, dp = phi(a)
        if f > f0 + c1 * a * dphi0 or (not first and f >= f_prev):
            return zoom(a_prev, f_prev, dp_prev, g_prev, a, f, dp)
        if abs(dp) <= -c2 * dphi0:
            return LineSearchResult(a, f, g, evals, dphi0, dp)
        if dp >= 0:
            return zoom(a, f, dp, g, a_prev, f_prev, dp_prev)
        a_next = _cubic_min(a_prev, f_prev, dp_prev, a, f, dp, a * 1.1, a * 10.0)
        a_prev, f_prev, dp_prev, g_prev = a, f, dp, g
        a = a_next
        first = False
    return LineSearchResult(None, f0, None, evals, dphi0)


def backtracking_step(fun, x, f0, g0, step0=1.0, c1=C1, max_evals=30):
    """Armijo backtracking along -g; returns (step, f, g) or (None, f0, None)."""
    d = -g0
    dphi0 = float(g0 @ d)
    a = step0
    for _ in range(max_evals):
        f, g = fun(x + a * d)
        if math.isfinite(f) and f <= f0 + c1 * a * dphi0 and f < f0:
            return a, f, g
        a *= 0.5
    return None, f0, None


@dataclass
class StepRecord:
    """What one L-BFGS iteration did; ``fallback`` marks a steepest-descent step."""

    f_before: float
    f_after: float
    step: float
    dphi0: float
    dphi: float
    grad_norm: float
    n_evals: int
    fallback: bool = False


@dataclass
class LbfgsState:
    """Curvature history plus the current iterate."""

    history_size: int = 20
    s_hist: deque = field(default_factory=deque)
    y_hist: deque = field(default_factory=deque)

    def reset(self):
        self.s_hist.clear()
        self.y_hist.clear()

    def push(self, s, y):
        if float(s @ y) <= 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            return False
        self.s_hist.append(s)
        self.y_hist.append(y)
        while len(self.s_hist) > self.history_size:
            self.s_hist.popleft()
            self.y_hist.popleft()
        return True


def lbfgs_step(fun, x, f, g, state: LbfgsState):
    """Take one L-BFGS iteration from ``(x, f, g)``.

    Returns ``(x_new, f_new, g_new, record)``; ``record`` is ``None`` when no
    decrease could be found at all (the caller should stop).
    """
    gnorm = float(np.linalg.norm(g))
    if state.s_hist:
        d = two_loop(g, list(state.s_hist), list(state.y_hist))
        step0 = 1.0
    else:
        d = -g
        step0 = min(1.0, 1.0 / max(float(np.abs(g).sum()), 1e-300))
    res = wolfe_line_search(fun, x, f, g, d, step0)
    if res.step is not None:
        x_new = x + res.step * d
        state.push(x_new - x, res.g - g)
        rec = StepRecord(f, res.f, res.step, res.dphi0, res.dphi, gnorm, res.n_evals)
        return x_new, res.f, res.g, rec
    state.reset()
    step0 = min(1.0, 1.0 / max(float(np.abs(g).sum()), 1e-300))
    step, f_new, g_new = backtracking_step(fun, x, f, g, step0=step0 * 10.0)
    if step is None:
        return x, f, g, None
    rec = StepRecord(f, f_new, step, -gnorm * gnorm, float(g_new @ -g), gnorm, 0, fallback=True)
    return x - step * g, f_new, g_new, rec


def minimize(fun, x0, max_iterations=100, history_size=20, tol=1e-9):
    """Minimise ``fun(x) -> (f, g)`` from ``x0``; returns ``(x, f, records)``."""
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun(x)
    state = LbfgsState(history_size)
    records = []
    for _ in range(max_iterations):
        if float(np.max(np.abs(g))) <= 1e-300:
            break
        x_new, f_new, g_new, rec = lbfgs_step(fun, x, f, g, state)
        if rec is None:
            break
        records.append(rec)
        done = abs(f - f_new) <= tol * max(abs(f), 1.0)
        x, f, g = x_new, f_new, g_new
        if done:
            break
    return x, f, records
