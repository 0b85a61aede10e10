"""Limited-memory quasi-Newton minimizer with a backtracking line search.

Memory-10 two-loop recursion, Armijo sufficient decrease with halving steps.
Deterministic: no randomness, fixed reduction order.
"""

from collections import deque

import numpy as np

ARMIJO_C1 = 1e-4
MAX_HALVINGS = 60


def lbfgs_minimize(fun_grad, x0, *, stop, max_iter=5000, memory=10):
    """Minimize a smooth convex function.

    Parameters
    ----------
    fun_grad : callable
        Returns ``(f, g)`` at a point.
    x0 : ndarray
        Start point (not modified).
    stop : callable
        ``stop(f, g)`` -> True once the iterate is converged.
    max_iter : int
        Iteration cap for this call.
    memory : int
        Number of curvature pairs kept.

    Returns
    -------
    (x, f, g, iterations, converged)
    """
    x = np.array(x0, float, copy=True)
    f, g = fun_grad(x)
    pairs = deque(maxlen=memory)
    gamma = 1.0
    iterations = 0
    for _ in range(max_iter):
        if stop(f, g):
            return x, f, g, iterations, True
        d = -_two_loop(g, pairs, gamma)
        slope = float(np.dot(g, d))
        if slope >= 0.0:
            # lost positive definiteness numerically; restart on steepest descent
            pairs.clear()
            d = -g
            slope = -float(np.dot(g, g))
            if slope == 0.0:
                return x, f, g, iterations, True
        t = 1.0 if pairs else min(1.0, 1.0 / max(1.0, float(np.abs(g).max())))
        f_new = None
        for _ in range(MAX_HALVINGS):
            x_new = x + t * d
            f_try, g_try = fun_grad(x_new)
            if f_try <= f + ARMIJO_C1 * t * slope:
                f_new = f_try
                break
            t *= 0.5
        if f_new is None:
            # no descent at the smallest step: numerically stationary
            return x, f, g, iterations, stop(f, g)
        s = x_new - x
        y = g_try - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
            gamma = sy / float(np.dot(y, y))
        x, f, g = x_new, f_try, g_try
        iterations += 1
    return x, f, g, iterations, stop(f, g)


def _two_loop(g, pairs, gamma):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(np.dot(s, q))
        q -= a * y
        alphas.append(a)
    q *= gamma
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return q
