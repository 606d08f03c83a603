"""Multilevel splitting estimators of ``P(T_n <= T)``.

Two particle schemes are provided, each runnable with sampled modes
(``joint``) or with the Wonham filter in place of the mode (``marginal``):

``weighted``
    At level ``k`` every one of the ``N`` new particles picks an ancestor
    uniformly among the level ``k-1`` survivors (all initial particles for
    ``k = 1``) and is propagated afresh until it enters ``B_k`` or the clock
    reaches ``T``.

``resampled``
    All ``N`` particles are propagated one level; survivors stay put and each
    failed particle is replaced by a copy of a uniformly chosen survivor.

In both cases ``p_hat_k`` is the fraction of the ``N`` propagated particles
that reached ``B_k`` and the estimate is ``prod_k p_hat_k``.  A level with no
survivor stops the run with estimate 0.

Randomness is addressed by ``(seed, level, particle slot, grid step)``
through :mod:`wonhamsplit.rng`, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import UsageError
from .rng import TAG_CRUDE, TAG_PROPAGATE, TAG_SELECT, uniforms4
from .simulate import (DYNAMICS, MARGINAL, PathSegment, _check_step, advance,
                       draw_initial, last_step, make_buffers, n_steps, new_diagnostics)

WEIGHTED = "weighted"
RESAMPLED = "resampled"
SCHEMES = (WEIGHTED, RESAMPLED)


@dataclass(frozen=True)
class SplittingResult:
    estimate: float
    log_estimate: float
    p_hat: tuple
    survivors: tuple
    extinct_at: int | None
    n_particles: int
    seed: int
    scheme: str
    dynamics: str
    # (filter steps, max |sum(pi) - 1|, min filter component)
    filter_diagnostics: tuple = (0, 0.0, math.inf)
    ancestry: tuple | None = field(default=None, repr=False, compare=False)
    final_survivors: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class CrudeResult:
    estimate: float
    stderr: float
    hits: int
    n_paths: int


@dataclass(frozen=True)
class CellSummary:
    scheme: str
    dynamics: str
    replicates: int
    mean: float
    variance: float
    relative_variance: float
    wall_time: float
    results: tuple = field(repr=False)

    @property
    def stderr(self):
        return math.sqrt(self.variance / self.replicates)


@dataclass(frozen=True)
class ComparisonReport:
    cells: tuple

    def cell(self, scheme, dynamics):
        for c in self.cells:
            if c.scheme == scheme and c.dynamics == dynamics:
                return c
        raise KeyError((scheme, dynamics))

    def filter_diagnostics(self):
        return merge_diagnostics(r.filter_diagnostics for c in self.cells for r in c.results)


def merge_diagnostics(items):
    steps, err, lo = 0, 0.0, math.inf
    for s, e, m in items:
        steps += s
        err = max(err, e)
        lo = min(lo, m)
    return steps, err, lo


def _validate(model, levels, n_particles, dynamics, h):
    if not isinstance(n_particles, (int, np.integer)) or n_particles < 2:
        raise UsageError(f"need at least 2 particles, got {n_particles}")
    if dynamics not in DYNAMICS:
        raise UsageError(f"dynamics must be one of {DYNAMICS}")
    levels.check_dimension(model.d)
    _check_step(model, h)


def run_weighted(model, levels, n_particles, dynamics, h, seed, keep_ancestry=False):
    """Splitting with ancestor selection from the survivor-weighted empirical law."""
    return _run(model, levels, n_particles, dynamics, h, seed, WEIGHTED, keep_ancestry)


def run_resampled(model, levels, n_particles, dynamics, h, seed, keep_ancestry=False):
    """Splitting with survivors kept and failures replaced by survivor copies."""
    return _run(model, levels, n_particles, dynamics, h, seed, RESAMPLED, keep_ancestry)


def run_scheme(scheme, *args, **kwargs):
    if scheme == WEIGHTED:
        return run_weighted(*args, **kwargs)
    if scheme == RESAMPLED:
        return run_resampled(*args, **kwargs)
    raise UsageError(f"scheme must be one of {SCHEMES}")


def _run(model, levels, N, dynamics, h, seed, scheme, keep_ancestry):
    _validate(model, levels, N, dynamics, h)
    marginal = dynamics == MARGINAL
    T = levels.horizon
    K, h_last = n_steps(T, h), last_step(T, h)
    x = np.empty((N, model.d))
    pi = np.empty((N, model.m))
    theta = np.empty(N, dtype=np.int64)
    step = np.zeros(N, dtype=np.int64)
    hit = np.empty(N, dtype=np.bool_)
    diag = new_diagnostics()
    _init_population(model.initial.x0, model.initial.scale0, model.initial.theta_probs,
                     seed, TAG_PROPAGATE, x, theta, pi)

    p_hat, survivors, ancestry = [], [], []
    estimate, log_estimate, extinct_at = 1.0, 0.0, None
    alive = np.arange(N)
    for k in range(1, levels.n + 1):
        if scheme == WEIGHTED:
            anc = np.empty(N, dtype=np.int64)
            _select(seed, k, alive, anc)
            x, theta, pi, step = x[anc], theta[anc], pi[anc], step[anc]
        elif k == 1:
            anc = np.arange(N)
        if keep_ancestry:
            ancestry.append(anc)
        _propagate(*model.arrays, marginal, x, theta, pi, step, K, h, h_last,
                   levels.phi_code, levels.coord_index, levels.threshold(k),
                   seed, TAG_PROPAGATE, k, hit, diag)
        ns = int(hit.sum())
        p_hat.append(ns / N)
        survivors.append(ns)
        if ns == 0:
            estimate, log_estimate, extinct_at = 0.0, -math.inf, k
            break
        estimate *= p_hat[-1]
        log_estimate += math.log(p_hat[-1])
        alive = np.flatnonzero(hit)
        if scheme == RESAMPLED and k < levels.n:
            anc = np.arange(N)
            _replace_dead(seed, k, alive, hit, anc)
            x, theta, pi, step = x[anc], theta[anc], pi[anc], step[anc]

    return SplittingResult(
        estimate=estimate,
        log_estimate=log_estimate,
        p_hat=tuple(p_hat),
        survivors=tuple(survivors),
        extinct_at=extinct_at,
        n_particles=N,
        seed=seed,
        scheme=scheme,
        dynamics=dynamics,
        filter_diagnostics=(int(diag[0]), float(diag[1]), float(diag[2])),
        ancestry=tuple(ancestry) if keep_ancestry else None,
        final_survivors=alive if keep_ancestry and extinct_at is None else None,
    )


def crude_mc(model, levels, n_paths, dynamics, h, seed):
    """Fraction of ``n_paths`` full paths that enter ``B_n`` by ``T``."""
    _validate(model, levels, n_paths, dynamics, h)
    T = levels.horizon
    x = np.empty((n_paths, model.d))
    pi = np.empty((n_paths, model.m))
    theta = np.empty(n_paths, dtype=np.int64)
    step = np.zeros(n_paths, dtype=np.int64)
    hit = np.empty(n_paths, dtype=np.bool_)
    _init_population(model.initial.x0, model.initial.scale0, model.initial.theta_probs,
                     seed, TAG_CRUDE, x, theta, pi)
    _propagate(*model.arrays, dynamics == MARGINAL, x, theta, pi, step,
               n_steps(T, h), h, last_step(T, h), levels.phi_code, levels.coord_index,
               levels.threshold(levels.n), seed, TAG_CRUDE, 1, hit, new_diagnostics())
    hits = int(hit.sum())
    p = hits / n_paths
    return CrudeResult(p, math.sqrt(p * (1.0 - p) / n_paths), hits, n_paths)


def replicate(model, levels, n_particles, h, base_seed, R, schemes=SCHEMES,
              dynamics=DYNAMICS, threads=1, seeds=None):
    """Run every (scheme, dynamics) cell ``R`` times.

    Replicate ``r`` uses seed ``base_seed + r`` in every cell, so cells are
    paired.  ``seeds`` overrides the derived list.  ``threads`` only changes
    scheduling, never results.
    """
    if seeds is None:
        if R < 2:
            raise UsageError("need at least 2 replicates")
        seeds = [base_seed + r for r in range(R)]
    seeds = list(seeds)
    cells = [(s, d) for s in schemes for d in dynamics]
    tasks = [(s, d, sd) for s, d in cells for sd in seeds]

    def work(task):
        s, d, sd = task
        t0 = time.perf_counter()
        res = run_scheme(s, model, levels, n_particles, d, h, sd)
        return res, time.perf_counter() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(work, tasks))
    else:
        out = [work(t) for t in tasks]

    summaries = []
    for c, (s, d) in enumerate(cells):
        chunk = out[c * len(seeds):(c + 1) * len(seeds)]
        results = tuple(r for r, _ in chunk)
        est = np.array([r.estimate for r in results])
        mean = float(est.mean())
        var = float(est.var(ddof=1)) if len(est) > 1 else 0.0
        rel = var / mean ** 2 if mean > 0 else math.nan
        summaries.append(CellSummary(s, d, len(results), mean, var, rel,
                                     sum(t for _, t in chunk), results))
    return ComparisonReport(tuple(summaries))


def survivor_paths(model, levels, result, h):
    """Rebuild the full paths of the particles alive after the last level.

    Needs a result produced with ``keep_ancestry=True``.  Each path is
    replayed from its counter-addressed noise, so nothing but ancestor
    indices has to be stored during the run.  Returns a list of
    ``(slot, PathSegment, modes_or_filters)``.
    """
    if result.ancestry is None or result.final_survivors is None:
        raise UsageError("result carries no ancestry (extinct, or keep_ancestry=False)")
    marginal = result.dynamics == MARGINAL
    T = levels.horizon
    K, h_last = n_steps(T, h), last_step(T, h)
    out = []
    for slot in result.final_survivors:
        chain = [int(slot)]
        for anc in reversed(result.ancestry):
            chain.append(int(anc[chain[-1]]))
        chain.reverse()  # chain[0]: initial particle, chain[k]: slot at level k
        x = np.empty(model.d)
        pi = np.empty(model.m)
        theta = draw_initial(model.initial.x0, model.initial.scale0,
                             model.initial.theta_probs, result.seed, TAG_PROPAGATE,
                             chain[0], x, pi)
        points, marks = [x.copy()], [pi.copy() if marginal else theta]
        j = 0
        for k in range(1, levels.n + 1):
            rec_x = np.empty((K - j + 1, model.d))
            rec_m = np.empty((K - j + 1, model.m if marginal else 1))
            end, theta, _ = advance(*model.arrays, marginal, x, theta, pi, j, K, h, h_last,
                                    levels.phi_code, levels.coord_index, levels.threshold(k),
                                    result.seed, TAG_PROPAGATE, chain[k], k,
                                    make_buffers(model.d, model.m), new_diagnostics(),
                                    rec_x, rec_m, True)
            points.extend(rec_x[1:end - j + 1])
            marks.extend(rec_m[1:end - j + 1] if marginal else rec_m[1:end - j + 1, 0])
            j = end
        out.append((int(slot), PathSegment(0, h, T, np.array(points)), np.array(marks)))
    return out


# -- kernels -----------------------------------------------------------------

@njit(nogil=True, cache=True)
def _init_population(x0, scale0, probs, seed, tag, x, theta, pi):
    for i in range(x.shape[0]):
        theta[i] = draw_initial(x0, scale0, probs, seed, tag, i, x[i], pi[i])


@njit(nogil=True, cache=True)
def _propagate(A, c, code, lb, w, beta, marginal, x, theta, pi, step, K, h, h_last,
               phi_kind, phi_index, threshold, seed, tag, level, hit, diag):
    n, d = x.shape
    buffers = make_buffers(d, pi.shape[1])
    dummy = np.empty((1, 1))
    for i in range(n):
        j, th, ok = advance(A, c, code, lb, w, beta, marginal, x[i], theta[i], pi[i],
                            step[i], K, h, h_last, phi_kind, phi_index, threshold,
                            seed, tag, i, level, buffers, diag, dummy, dummy, False)
        step[i] = j
        theta[i] = th
        hit[i] = ok


@njit(nogil=True, cache=True)
def _select(seed, level, pool, out):
    npool = pool.shape[0]
    for i in range(out.shape[0]):
        u, _, _, _ = uniforms4(seed, TAG_SELECT, 0, i, level, 0)
        out[i] = pool[int(u * npool)]


@njit(nogil=True, cache=True)
def _replace_dead(seed, level, alive, hit, out):
    na = alive.shape[0]
    for i in range(out.shape[0]):
        if not hit[i]:
            u, _, _, _ = uniforms4(seed, TAG_SELECT, 0, i, level, 0)
            out[i] = alive[int(u * na)]
