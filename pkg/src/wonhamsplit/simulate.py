"""Euler-Maruyama simulation of joint ``(X, theta)`` and marginal ``(X, pi)`` dynamics.

Marginal dynamics replace the sampled mode by the Wonham filter ``pi``, the
conditional law of the mode given the observed continuous path.  The filter
is advanced pathwise from an observed increment ``dx``::

    pi' = pi + Lambda(x)^T pi h + G(x, pi) (dx - b(x) pi h)
    G(x, pi) = (diag(pi) - pi pi^T) b(x)^T

and then projected back onto the simplex.  All runs share a global time grid
``0, h, 2h, ..., T`` whose last step may be shorter than ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NumericalError, UsageError
from .model import drift_columns, drift_mode, rate_matrix
from .rng import INIT_LEVEL, TAG_PATH, fill_noise, scalar_noise_pair

JOINT = "joint"
MARGINAL = "marginal"
DYNAMICS = (JOINT, MARGINAL)

PHI_NONE = -1
PHI_COORDINATE = 0
PHI_NORM = 1


# -- time grid ---------------------------------------------------------------

def n_steps(T, h):
    """Number of grid steps covering ``[0, T]``; exact multiples are not rounded up."""
    if not h > 0:
        raise UsageError(f"step size must be positive, got {h}")
    if not T > 0:
        raise UsageError(f"horizon must be positive, got {T}")
    q = T / h
    k = round(q)
    if k >= 1 and abs(q - k) <= 1e-9 * q:
        return int(k)
    return int(math.ceil(q))


def last_step(T, h):
    return T - (n_steps(T, h) - 1) * h


def grid_time(j, T, h):
    return T if j >= n_steps(T, h) else j * h


# -- public value types ------------------------------------------------------

@dataclass(frozen=True)
class PathSegment:
    """A stretch of the continuous path on the global grid.

    ``points[q]`` is the state at grid step ``start_step + q``.
    """

    start_step: int
    h: float
    horizon: float
    points: np.ndarray

    @property
    def s(self):
        return grid_time(self.start_step, self.horizon, self.h)

    @property
    def t(self):
        return grid_time(self.end_step, self.horizon, self.h)

    @property
    def end_step(self):
        return self.start_step + len(self.points) - 1

    @property
    def times(self):
        return np.array([grid_time(self.start_step + q, self.horizon, self.h)
                         for q in range(len(self.points))])

    @property
    def final_point(self):
        return self.points[-1]

    def step_sizes(self):
        K = n_steps(self.horizon, self.h)
        hl = last_step(self.horizon, self.h)
        return np.array([self.h if j < K - 1 else hl
                         for j in range(self.start_step, self.end_step)])

    def slice(self, start, stop):
        """Sub-segment between absolute grid steps ``start`` and ``stop`` inclusive."""
        a = start - self.start_step
        return PathSegment(start, self.h, self.horizon, self.points[a:stop - self.start_step + 1])


@dataclass(frozen=True)
class JointState:
    x: np.ndarray
    theta: int
    clock: float


@dataclass(frozen=True)
class MarginalState:
    x: np.ndarray
    pi: np.ndarray
    clock: float


@dataclass(frozen=True)
class Trajectory:
    dynamics: str
    x: np.ndarray  # (K+1, d)
    theta: np.ndarray | None  # (K+1,) for joint dynamics
    pi: np.ndarray | None  # (K+1, m) for marginal dynamics
    segment: PathSegment

    @property
    def times(self):
        return self.segment.times

    def states(self):
        times = self.times
        if self.dynamics == JOINT:
            return [JointState(self.x[q], int(self.theta[q]), times[q]) for q in range(len(times))]
        return [MarginalState(self.x[q], self.pi[q], times[q]) for q in range(len(times))]


# -- public operations -------------------------------------------------------

def project_simplex(v):
    """Clip negatives to zero and renormalise; all-zero input maps to uniform."""
    v = np.array(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite filter state {v}")
    _project(v)
    return v


def filter_step(model, x_from, x_to, pi, h):
    """One Euler step of the filter driven by the observed move ``x_from -> x_to``."""
    if not h > 0:
        raise UsageError(f"step size must be positive, got {h}")
    x_from = np.asarray(x_from, dtype=float)
    x_to = np.asarray(x_to, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if x_from.shape != (model.d,) or x_to.shape != (model.d,) or pi.shape != (model.m,):
        raise UsageError("dimension mismatch in filter_step")
    out = np.empty(model.m)
    _filter_step(*model.arrays, x_from, x_to, pi, h,
                 np.empty((model.d, model.m)), np.empty((model.m, model.m)), out)
    if not np.all(np.isfinite(out)):
        raise NumericalError("filter step produced non-finite values")
    return out


def _check_step(model, h):
    if not h > 0:
        raise UsageError(f"step size must be positive, got {h}")
    if h * model.rates.max_exit_rate() >= 1.0:
        raise UsageError(
            f"h * max exit rate = {h * model.rates.max_exit_rate():.3g} must be < 1")


def step_joint(model, state, h, noise, u):
    """Advance ``(x, theta)`` by ``h``.

    ``noise`` is the Brownian increment (already N(0, h I)), ``u`` a U[0,1)
    variate that picks the next mode from row ``theta`` of ``I + h Lambda(x)``.
    """
    _check_step(model, h)
    if not 0 <= state.theta < model.m:
        raise UsageError(f"mode index {state.theta} out of range")
    x_out = np.empty(model.d)
    theta = _step_joint(*model.arrays, np.asarray(state.x, dtype=float), state.theta, h,
                        np.asarray(noise, dtype=float), u,
                        np.empty(model.d), np.empty((model.m, model.m)), x_out)
    return JointState(x_out, int(theta), state.clock + h)


def step_marginal(model, state, h, noise):
    """Advance ``(x, pi)``; the filter sees the increment the state actually took."""
    _check_step(model, h)
    x_out = np.empty(model.d)
    pi_out = np.empty(model.m)
    _step_marginal(*model.arrays, np.asarray(state.x, dtype=float),
                   np.asarray(state.pi, dtype=float), h, np.asarray(noise, dtype=float),
                   np.empty((model.d, model.m)), np.empty((model.m, model.m)),
                   x_out, pi_out)
    return MarginalState(x_out, pi_out, state.clock + h)


def simulate_path(model, dynamics, h, T, seed, stream=0):
    """Simulate one full path on ``[0, T]`` from the stream ``(seed, stream)``."""
    if dynamics not in DYNAMICS:
        raise UsageError(f"dynamics must be one of {DYNAMICS}")
    _check_step(model, h)
    K = n_steps(T, h)
    marginal = dynamics == MARGINAL
    x = np.empty(model.d)
    pi = np.empty(model.m)
    theta = draw_initial(model.initial.x0, model.initial.scale0, model.initial.theta_probs,
                         seed, TAG_PATH, stream, x, pi)
    rec_x = np.empty((K + 1, model.d))
    rec_m = np.empty((K + 1, model.m if marginal else 1))
    diag = new_diagnostics()
    advance(*model.arrays, marginal, x, theta, pi, 0, K, h, last_step(T, h),
            PHI_NONE, 0, math.inf, seed, TAG_PATH, stream, 0,
            make_buffers(model.d, model.m), diag, rec_x, rec_m, True)
    seg = PathSegment(0, h, T, rec_x)
    if marginal:
        return Trajectory(dynamics, rec_x, None, rec_m, seg)
    return Trajectory(dynamics, rec_x, rec_m[:, 0].astype(np.int64), None, seg)


def simulate_terminal(model, dynamics, h, T, n_paths, seed, tag=TAG_PATH):
    """Terminal states of ``n_paths`` independent paths.

    Returns ``(x, theta, pi, diagnostics)`` with ``x`` of shape (n, d);
    ``theta`` is ``None`` for marginal dynamics and ``pi`` for joint ones.
    """
    if dynamics not in DYNAMICS:
        raise UsageError(f"dynamics must be one of {DYNAMICS}")
    _check_step(model, h)
    marginal = dynamics == MARGINAL
    x = np.empty((n_paths, model.d))
    pi = np.empty((n_paths, model.m))
    theta = np.empty(n_paths, dtype=np.int64)
    diag = new_diagnostics()
    _terminal_batch(*model.arrays, marginal, model.initial.x0, model.initial.scale0,
                    model.initial.theta_probs, n_steps(T, h), h, last_step(T, h),
                    seed, tag, x, theta, pi, diag)
    return x, (None if marginal else theta), (pi if marginal else None), diag


# -- kernels -----------------------------------------------------------------

@njit(nogil=True, cache=True)
def make_buffers(d, m):
    """Scratch buffers for :func:`advance`, allocated once per batch."""
    return (np.empty(d), np.empty(d), np.empty(d), np.empty(d),
            np.empty((d, m)), np.empty((m, m)), np.empty(m))


def new_diagnostics():
    """``[filter steps, max |sum(pi) - 1|, min component]``."""
    return np.array([0.0, 0.0, np.inf])


@njit(inline="always", nogil=True, cache=True)
def _project(v):
    s = 0.0
    for i in range(v.shape[0]):
        if v[i] < 0.0:
            v[i] = 0.0
        s += v[i]
    if s > 0.0:
        for i in range(v.shape[0]):
            v[i] = v[i] / s
    else:
        for i in range(v.shape[0]):
            v[i] = 1.0 / v.shape[0]


@njit(inline="always", nogil=True, cache=True)
def _mixed(cols, pi, r):
    s = 0.0
    for i in range(pi.shape[0]):
        s += pi[i] * cols[r, i]
    return s


@njit(inline="always", nogil=True, cache=True)
def _filter_core(cols, lam, pi, x_from, x_to, h, out):
    d, m = cols.shape
    for i in range(m):
        inflow = 0.0
        for j in range(m):
            inflow += lam[j, i] * pi[j]
        corr = 0.0
        for r in range(d):
            bbar = _mixed(cols, pi, r)
            corr += (cols[r, i] - bbar) * ((x_to[r] - x_from[r]) - bbar * h)
        out[i] = pi[i] + inflow * h + pi[i] * corr
    _project(out)


@njit(inline="always", nogil=True, cache=True)
def _filter_step(A, c, code, lb, w, beta, x_from, x_to, pi, h, cols, lam, out):
    drift_columns(A, c, x_from, cols)
    rate_matrix(code, lb, w, beta, x_from, lam)
    _filter_core(cols, lam, pi, x_from, x_to, h, out)


@njit(inline="always", nogil=True, cache=True)
def _next_mode(lam, theta, h, u):
    """Inverse-CDF draw from row ``theta`` of ``I + h Lambda``."""
    cum = 0.0
    for j in range(lam.shape[0]):
        p = h * lam[theta, j]
        if j == theta:
            p += 1.0
        cum += p
        if u < cum:
            return j
    # rounding left a sliver above the cumulative sum
    return theta


@njit(nogil=True, cache=True)
def _step_joint(A, c, code, lb, w, beta, x, theta, h, dw, u, col, lam, x_out):
    drift_mode(A, c, x, theta, col)
    rate_matrix(code, lb, w, beta, x, lam)
    for r in range(x.shape[0]):
        x_out[r] = x[r] + col[r] * h + dw[r]
    return _next_mode(lam, theta, h, u)


@njit(nogil=True, cache=True)
def _step_marginal(A, c, code, lb, w, beta, x, pi, h, dw, cols, lam, x_out, pi_out):
    drift_columns(A, c, x, cols)
    for r in range(x.shape[0]):
        x_out[r] = x[r] + _mixed(cols, pi, r) * h + dw[r]
    rate_matrix(code, lb, w, beta, x, lam)
    _filter_core(cols, lam, pi, x, x_out, h, pi_out)


@njit(inline="always", nogil=True, cache=True)
def level_value(kind, index, x):
    if kind == PHI_COORDINATE:
        return x[index]
    if kind == PHI_NORM:
        s = 0.0
        for r in range(x.shape[0]):
            s += x[r] * x[r]
        return math.sqrt(s)
    return -math.inf


@njit(nogil=True, cache=True)
def draw_initial(x0, scale0, probs, seed, tag, particle, x, pi):
    """Initial ``(x, theta)`` for one particle; ``pi`` receives the mode law."""
    u = fill_noise(seed, tag, 0, particle, INIT_LEVEL, x)
    for r in range(x.shape[0]):
        x[r] = x0[r] + scale0 * x[r]
    m = probs.shape[0]
    for i in range(m):
        pi[i] = probs[i]
    cum = 0.0
    for i in range(m):
        cum += probs[i]
        if u < cum:
            return i
    for i in range(m - 1, -1, -1):
        if probs[i] > 0.0:
            return i
    return m - 1


@njit(nogil=True, cache=True)
def advance(A, c, code, lb, w, beta, marginal, x, theta, pi, j0, K, h, h_last,
            phi_kind, phi_index, threshold, seed, tag, particle, level,
            buffers, diag, rec_x, rec_m, record):
    """Step one particle in place until ``phi(x) >= threshold`` or grid step ``K``.

    Returns ``(end_step, theta, hit)``.  Noise for grid step ``j`` comes from
    counter ``(j, particle, level)`` so replays are exact.
    """
    z, dw, x_new, col, cols, lam, pi_new = buffers
    d = x.shape[0]
    m = pi.shape[0]
    j = j0
    cached_pair = -1
    n_even = n_odd = u_even = u_odd = 0.0
    if record:
        rec_x[0, :] = x
        if marginal:
            rec_m[0, :] = pi
        else:
            rec_m[0, 0] = theta
    while True:
        if level_value(phi_kind, phi_index, x) >= threshold:
            return j, theta, True
        if j >= K:
            return j, theta, False
        hj = h if j < K - 1 else h_last
        sq = math.sqrt(hj)
        if d == 1:
            # one block feeds an even/odd pair of steps; equals fill_noise
            if (j >> 1) != cached_pair:
                cached_pair = j >> 1
                n_even, n_odd, u_even, u_odd = scalar_noise_pair(
                    seed, tag, cached_pair, particle, level)
            if j & 1:
                dw[0] = sq * n_odd
                u = u_odd
            else:
                dw[0] = sq * n_even
                u = u_even
        else:
            u = fill_noise(seed, tag, j, particle, level, z)
            for r in range(d):
                dw[r] = sq * z[r]
        if marginal:
            # same sequence as _step_marginal, flattened for speed
            drift_columns(A, c, x, cols)
            for r in range(d):
                x_new[r] = x[r] + _mixed(cols, pi, r) * hj + dw[r]
            rate_matrix(code, lb, w, beta, x, lam)
            _filter_core(cols, lam, pi, x, x_new, hj, pi_new)
            s = 0.0
            lo = math.inf
            for i in range(m):
                pi[i] = pi_new[i]
                s += pi_new[i]
                lo = min(lo, pi_new[i])
            diag[0] += 1.0
            diag[1] = max(diag[1], abs(s - 1.0))
            diag[2] = min(diag[2], lo)
        else:
            # same sequence as _step_joint, flattened for speed
            drift_mode(A, c, x, theta, col)
            rate_matrix(code, lb, w, beta, x, lam)
            for r in range(d):
                x_new[r] = x[r] + col[r] * hj + dw[r]
            theta = _next_mode(lam, theta, hj, u)
        for r in range(d):
            x[r] = x_new[r]
        j += 1
        if record:
            rec_x[j - j0, :] = x
            if marginal:
                rec_m[j - j0, :] = pi
            else:
                rec_m[j - j0, 0] = theta


@njit(nogil=True, cache=True)
def _terminal_batch(A, c, code, lb, w, beta, marginal, x0, scale0, probs, K, h, h_last,
                    seed, tag, x, theta, pi, diag):
    n, d = x.shape
    m = pi.shape[1]
    buffers = make_buffers(d, m)
    dummy = np.empty((1, 1))
    for i in range(n):
        th = draw_initial(x0, scale0, probs, seed, tag, i, x[i], pi[i])
        _, th, _ = advance(A, c, code, lb, w, beta, marginal, x[i], th, pi[i], 0, K, h,
                           h_last, PHI_NONE, 0, math.inf, seed, tag, i, 0,
                           buffers, diag, dummy, dummy, False)
        theta[i] = th
