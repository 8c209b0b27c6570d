"""Downhill simplex (Nelder-Mead) minimization.

The algorithm is written in reverse-communication form: ``nm_start`` sets up a
simplex and ``nm_tell`` consumes one objective value at a time, leaving the
next point to evaluate in ``state.trial``.  The driver loop, which owns the
objective, is therefore tiny, and the same compiled simplex logic serves
both Python callables (``minimize``) and jitted objectives (the embedder).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

OK = 0
NONFINITE = 1

# integer state slots
_PHASE, _IDX, _IT, _BEST, _WORST, _SECOND, _CONV, _MAXIT = range(8)
# float state slots
_FR, _TOL, _ALPHA, _GAMMA, _RHO, _SIGMA = range(6)
# phases
_INIT, _REFLECT, _EXPAND, _CONTRACT_OUT, _CONTRACT_IN, _SHRINK, _DONE = range(7)


class ObjectiveError(ArithmeticError):
    """Objective returned a non-finite value."""

    def __init__(self, point, value):
        super().__init__(f"objective returned {value!r} at point {np.array2string(np.asarray(point))}")
        self.point = np.asarray(point)
        self.value = value


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int | None = None  # None -> 500 * n
    tolerance: float = 1e-6
    initial_step: float = 1.0
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    restart: bool = True

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if not self.reflection > 0:
            raise ValueError("reflection coefficient must be > 0")
        if not self.expansion > 1:
            raise ValueError("expansion coefficient must be > 1")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction coefficient must be in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink coefficient must be in (0, 1)")

    def budget(self, n: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 500 * n

    def params(self, n: int) -> np.ndarray:
        """Packed float parameters for ``nm_start``."""
        return np.array([self.budget(n), self.tolerance, self.initial_step, self.reflection,
                         self.expansion, self.contraction, self.shrink], dtype=np.float64)


@dataclass
class OptimizeResult:
    argmin: np.ndarray
    value: float
    iterations: int
    converged: bool


class SimplexState(NamedTuple):
    sim: np.ndarray     # (n+1, n) vertices
    fs: np.ndarray      # (n+1,) vertex values
    work: np.ndarray    # rows: centroid, reflected point, trial point
    ist: np.ndarray
    fst: np.ndarray


@njit(cache=True, nogil=True)
def _diameter_below(sim, best, tol):
    # distances from the best vertex bound the diameter from below, so the
    # all-pairs scan only runs once that cheaper bound is already small
    m, n = sim.shape
    tol2 = tol * tol
    for i in range(m):
        s = 0.0
        for k in range(n):
            t = sim[i, k] - sim[best, k]
            s += t * t
        if s >= tol2:
            return False
    for i in range(m):
        for j in range(i + 1, m):
            s = 0.0
            for k in range(n):
                t = sim[i, k] - sim[j, k]
                s += t * t
            if s >= tol2:
                return False
    return True


@njit(cache=True, nogil=True)
def nm_start(x0, step, params):
    """Axis-aligned initial simplex around ``x0``; the first trial point is ``x0`` itself."""
    n = x0.shape[0]
    m = n + 1
    sim = np.empty((m, n))
    for i in range(m):
        for k in range(n):
            sim[i, k] = x0[k]
        if i > 0:
            sim[i, i - 1] += step
    fs = np.empty(m)
    work = np.empty((3, n))
    work[2, :] = sim[0]
    ist = np.zeros(8, dtype=np.int64)
    ist[_MAXIT] = int(params[0])
    fst = np.empty(6)
    fst[_TOL] = params[1]
    fst[_ALPHA] = params[3]
    fst[_GAMMA] = params[4]
    fst[_RHO] = params[5]
    fst[_SIGMA] = params[6]
    return SimplexState(sim, fs, work, ist, fst)


@njit(cache=True, nogil=True, inline="always")
def _order(fs, ist):
    # best/worst/second-worst as a stable sort would rank them, without allocating
    m = fs.shape[0]
    best = 0
    worst = 0
    for i in range(1, m):
        if fs[i] < fs[best]:
            best = i
        if fs[i] >= fs[worst]:
            worst = i
    second = 0 if worst != 0 else 1
    for i in range(m):
        if i != worst and fs[i] >= fs[second]:
            second = i
    ist[_BEST] = best
    ist[_WORST] = worst
    ist[_SECOND] = second


@njit(cache=True, nogil=True, inline="always")
def _iterate(st):
    # rank vertices, test the stopping rules, then propose the reflected point
    sim, fs, work, ist, fst = st
    _order(fs, ist)
    best, worst = ist[_BEST], ist[_WORST]
    tol = fst[_TOL]
    if _diameter_below(sim, best, tol):
        ist[_CONV] = 1
        ist[_PHASE] = _DONE
        return True
    if ist[_IT] >= ist[_MAXIT]:
        ist[_PHASE] = _DONE
        return True
    ist[_IT] += 1
    m, n = sim.shape
    alpha = fst[_ALPHA]
    for k in range(n):
        c = 0.0
        for i in range(m):
            if i != worst:
                c += sim[i, k]
        c /= n
        work[0, k] = c
        work[1, k] = c + alpha * (c - sim[worst, k])
        work[2, k] = work[1, k]
    ist[_PHASE] = _REFLECT
    return False


@njit(cache=True, nogil=True, inline="always")
def _start_shrink(st):
    sim, fs, work, ist, fst = st
    best = ist[_BEST]
    sigma = fst[_SIGMA]
    m, n = sim.shape
    for i in range(m):
        if i != best:
            for k in range(n):
                sim[i, k] = sim[best, k] + sigma * (sim[i, k] - sim[best, k])
    first = 1 if best == 0 else 0
    ist[_IDX] = first
    work[2, :] = sim[first]
    ist[_PHASE] = _SHRINK


@njit(cache=True, nogil=True, inline="always")
def nm_tell(st, f):
    """Feed ``f = objective(st.work[2])``; returns True once the run has finished."""
    sim, fs, work, ist, fst = st
    phase = ist[_PHASE]
    m, n = sim.shape
    worst = ist[_WORST]
    if phase == _INIT:
        i = ist[_IDX]
        fs[i] = f
        if i + 1 < m:
            ist[_IDX] = i + 1
            work[2, :] = sim[i + 1]
            return False
        return _iterate(st)
    if phase == _REFLECT:
        fst[_FR] = f
        rho = fst[_RHO]
        if f < fs[ist[_BEST]]:
            gamma = fst[_GAMMA]
            for k in range(n):
                work[2, k] = work[0, k] + gamma * (work[1, k] - work[0, k])
            ist[_PHASE] = _EXPAND
            return False
        if f < fs[ist[_SECOND]]:
            sim[worst] = work[1]
            fs[worst] = f
            return _iterate(st)
        if f < fs[worst]:
            for k in range(n):
                work[2, k] = work[0, k] + rho * (work[1, k] - work[0, k])
            ist[_PHASE] = _CONTRACT_OUT
        else:
            for k in range(n):
                work[2, k] = work[0, k] + rho * (sim[worst, k] - work[0, k])
            ist[_PHASE] = _CONTRACT_IN
        return False
    if phase == _EXPAND:
        if f < fst[_FR]:
            sim[worst] = work[2]
            fs[worst] = f
        else:
            sim[worst] = work[1]
            fs[worst] = fst[_FR]
        return _iterate(st)
    if phase == _CONTRACT_OUT or phase == _CONTRACT_IN:
        accept = f <= fst[_FR] if phase == _CONTRACT_OUT else f < fs[worst]
        if accept:
            sim[worst] = work[2]
            fs[worst] = f
            return _iterate(st)
        _start_shrink(st)
        return False
    if phase == _SHRINK:
        i = ist[_IDX]
        fs[i] = f
        i += 1
        if i == ist[_BEST]:
            i += 1
        if i < m:
            ist[_IDX] = i
            work[2, :] = sim[i]
            return False
        return _iterate(st)
    return True


@njit(cache=True, nogil=True)
def nm_best(st):
    """(argmin, value, iterations, converged) of a finished or interrupted run."""
    b = np.argsort(st.fs, kind="mergesort")[0]
    return st.sim[b].copy(), st.fs[b], st.ist[_IT], st.ist[_CONV] == 1


def _run(objective, x0, step, params):
    st = nm_start(x0, step, params)
    while True:
        f = float(objective(st.work[2].copy()))
        if not math.isfinite(f):
            raise ObjectiveError(st.work[2].copy(), f)
        if nm_tell(st, f):
            return nm_best(st)


def minimize(objective, start, config: OptimizerConfig | None = None) -> OptimizeResult:
    """Minimize ``objective(x) -> float`` from ``start`` with the downhill simplex method.

    Stops when the simplex diameter drops below ``tolerance`` (converged) or
    the iteration budget runs out.  A run that exhausts its budget is
    restarted once from its best vertex with half the initial step.  Raises
    ObjectiveError on a non-finite value.
    """
    cfg = config or OptimizerConfig()
    x0 = np.array(start, dtype=np.float64, ndmin=1)
    if not np.all(np.isfinite(x0)):
        raise ValueError("start point must be finite")
    params = cfg.params(len(x0))
    x, f, it, conv = _run(objective, x0, cfg.initial_step, params)
    if cfg.restart and not conv:
        x2, f2, it2, conv = _run(objective, x, 0.5 * cfg.initial_step, params)
        it += it2
        if f2 <= f:
            x, f = x2, f2
    return OptimizeResult(argmin=x, value=float(f), iterations=int(it), converged=bool(conv))
