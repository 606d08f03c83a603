"""Statistical oracles and comparison helpers used by tests and ``selftest``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .simulate import JOINT, MARGINAL, simulate_terminal

# -zeta(1/2) / sqrt(2 pi): barrier shift for grid-monitored Brownian maxima
GRID_SHIFT = 0.5825971579390106


def bm_hitting_probability(a, T):
    """``P(max_{[0,T]} W >= a)`` for standard Brownian motion, ``a >= 0``."""
    return 2.0 * stats.norm.sf(a / math.sqrt(T))


def bm_grid_hitting_probability(a, T, h):
    """Same probability when the maximum is only observed every ``h``.

    Uses the shifted-barrier approximation ``a + 0.5826 sqrt(h)``, accurate
    to ``o(sqrt(h))``.
    """
    return bm_hitting_probability(a + GRID_SHIFT * math.sqrt(h), T)


@dataclass(frozen=True)
class DualityCheck:
    """Marginal and joint Monte Carlo means of one test function."""

    name: str
    marginal_mean: float
    marginal_se: float
    joint_mean: float
    joint_se: float

    @property
    def z(self):
        se = math.hypot(self.marginal_se, self.joint_se)
        return (self.marginal_mean - self.joint_mean) / se if se > 0 else 0.0


def duality_check(model, tests, T, h, n_paths, seed):
    """Compare ``E[sum_i pi_i(T) f(X_T, i)]`` with ``E[f(X_T, theta_T)]``.

    ``tests`` maps a name to ``(g, w)`` encoding ``f(x, i) = g(x) * w[i]``
    with ``g`` vectorised over rows of ``x``.  Both dynamics start from the
    configured initial law and use the same seed.
    """
    xm, _, pi, _ = simulate_terminal(model, MARGINAL, h, T, n_paths, seed)
    xj, theta, _, _ = simulate_terminal(model, JOINT, h, T, n_paths, seed)
    out = []
    for name, (g, w) in tests.items():
        w = np.asarray(w, dtype=float)
        vm = g(xm) * (pi @ w)
        vj = g(xj) * w[theta]
        out.append(DualityCheck(name, float(vm.mean()), float(vm.std(ddof=1) / math.sqrt(n_paths)),
                                float(vj.mean()), float(vj.std(ddof=1) / math.sqrt(n_paths))))
    return out


def f_test(a, b):
    """Two-sided F-test for equal variances; returns ``(ratio, p_value)``.

    Identical samples give ratio 1 and p-value 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == vb:
        return 1.0, 1.0
    if vb == 0.0:
        return math.inf, 0.0
    ratio = va / vb
    dfa, dfb = len(a) - 1, len(b) - 1
    p = 2.0 * min(stats.f.cdf(ratio, dfa, dfb), stats.f.sf(ratio, dfa, dfb))
    return ratio, min(p, 1.0)


def binomial_relative_variance(p, n):
    """Relative variance ``(1 - p) / (p n)`` of a hit fraction over ``n`` trials."""
    return (1.0 - p) / (p * n)
