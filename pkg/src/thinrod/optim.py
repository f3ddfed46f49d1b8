"""Shared quasi-Newton minimizer used by the 1D and 3D solvers.

Limited-memory BFGS (two-loop recursion) with backtracking Armijo line
search.  Fully deterministic: no randomness, fixed update and tie-breaking
rules, so repeated runs with identical inputs produce identical iterates.

Convergence is declared when ||grad||_2 <= tol * (1 + ||grad_0||_2); the
final state, iteration count and the energy trace are returned for
diagnostic logging.  Hitting the iteration cap or a failed line search
raises MinimizeError carrying the best state seen so far.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MinimizeError(RuntimeError):
    """Optimization failure; `.result` holds the best state reached."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    grad_norm: float
    initial_grad_norm: float
    iterations: int
    converged: bool
    energy_trace: list = field(default_factory=list)


def minimize_lbfgs(fun_grad, x0, *, tol: float, max_iter: int = 10000,
                   memory: int = 20) -> MinimizeResult:
    """Minimize fun_grad(x) -> (value, gradient) starting from x0.

    tol is the relative gradient tolerance described in the module
    docstring and must lie in (0, 1).
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    x = np.array(x0, dtype=float).copy()
    f, g = fun_grad(x)
    g = np.asarray(g, dtype=float)
    g0_norm = float(np.linalg.norm(g))
    target = tol * (1.0 + g0_norm)
    trace = [f]

    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []

    def direction(grad):
        q = grad.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if y_list:
            y_last = y_list[-1]
            gamma = float(s_list[-1] @ y_last) / float(y_last @ y_last)
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        return -q

    iterations = 0
    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= target:
            return MinimizeResult(x, f, gnorm, g0_norm, iterations, True, trace)
        if iterations >= max_iter:
            result = MinimizeResult(x, f, gnorm, g0_norm, iterations, False, trace)
            raise MinimizeError(
                f"iteration cap {max_iter} reached with ||g|| = {gnorm:.3e} "
                f"(target {target:.3e})",
                result,
            )
        d = direction(g)
        slope = float(g @ d)
        if not slope < 0.0:
            # stale curvature pairs; restart from steepest descent
            s_list.clear()
            y_list.clear()
            rho_list.clear()
            d = -g
            slope = -gnorm * gnorm
        step = 1.0
        f_new = None
        x_new = None
        g_new = None
        for _ in range(60):
            x_try = x + step * d
            f_try, g_try = fun_grad(x_try)
            if f_try <= f + 1e-4 * step * slope:
                f_new, x_new, g_new = f_try, x_try, np.asarray(g_try, dtype=float)
                break
            step *= 0.5
        if f_new is None:
            result = MinimizeResult(x, f, gnorm, g0_norm, iterations, False, trace)
            raise MinimizeError(
                f"line search failed at iteration {iterations} (||g|| = {gnorm:.3e})",
                result,
            )
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        iterations += 1
