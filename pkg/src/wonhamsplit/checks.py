"""Packaged verification suites behind ``wonhamsplit selftest``.

Each check returns a :class:`Check` carrying the measured value and the
tolerance it was judged against.  Suites:

``fast``
    simplex projection, level nestedness, indicator identity, degenerate
    filter exactness and thread-count determinism (seconds).
``oracle``
    Brownian benchmark against the reflection principle and the duality
    identity (minutes).
``variance``
    two-mode unbiasedness against crude Monte Carlo, the variance ordering
    and the null-rate equality (minutes).
``acceptance``
    every numbered acceptance criterion, in order.

Heavy runs are cached, so checks that share a dataset pay for it once.
"""

from __future__ import annotations

import functools
import hashlib
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import (GRID_SHIFT, bm_hitting_probability, duality_check, f_test)
from .engine import SCHEMES, crude_mc, merge_diagnostics, replicate
from .model import SwitchingModel
from .simulate import DYNAMICS, JOINT, MARGINAL, filter_step, project_simplex, simulate_path, \
    simulate_terminal
from .splitting import LevelSchedule, detect_hits, potential

BASE_SEED = 20240601

# Brownian benchmark
BM_T, BM_LEVELS, BM_H, BM_N, BM_R = 1.0, (1.0, 2.0, 3.0), 1e-3, 10_000, 100
BM_FINE_R = 50  # replicates of the h/4 run used to estimate the grid bias

# two-mode model: nominal mode drifts away from the levels, degraded mode toward them
TWO_T, TWO_LEVELS, TWO_H, TWO_N = 1.0, (1.0, 2.0, 3.0), 2.5e-3, 1000
TWO_R_MEAN, TWO_R_VAR, CRUDE_N = 400, 500, 1_000_000

NULL_T, NULL_LEVELS, NULL_H, NULL_N, NULL_R = 1.0, (1.0, 2.0), 1e-2, 1000, 200

DUALITY_PATHS, DUALITY_H = 100_000, 1e-3
FILTER_STEPS_REQUIRED = 10_000_000


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: str
    tolerance: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.measured} (tolerance: {self.tolerance})"


# -- models --------------------------------------------------------------------

def brownian_model():
    return SwitchingModel.build([[0.0]])


def two_mode_model():
    return SwitchingModel.build([[-0.5], [1.5]], [[0.0, 0.1], [1.0, 0.0]],
                                theta_probs=[1.0, 0.0])


def null_rate_model():
    # point mass on the second mode, which drifts toward the levels
    return SwitchingModel.build([[-1.0], [0.5]], theta_probs=[0.0, 1.0])


# -- filter tally ---------------------------------------------------------------

class FilterTally:
    """Running (steps, max |sum(pi) - 1|, min component) over marginal runs."""

    def __init__(self):
        self.value = (0, 0.0, math.inf)

    def add(self, *diags):
        self.value = merge_diagnostics((self.value,) + tuple(diags))


TALLY = FilterTally()


def _record(report):
    TALLY.add(report.filter_diagnostics())
    return report


# -- cached datasets ---------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def bm_report(h=BM_H, R=BM_R, schemes=SCHEMES, dynamics=DYNAMICS):
    levels = LevelSchedule(BM_LEVELS, BM_T)
    return _record(replicate(brownian_model(), levels, BM_N, h, BASE_SEED, R,
                             schemes=schemes, dynamics=dynamics))


@functools.lru_cache(maxsize=None)
def two_mode_report():
    levels = LevelSchedule(TWO_LEVELS, TWO_T)
    return _record(replicate(two_mode_model(), levels, TWO_N, TWO_H, BASE_SEED, TWO_R_VAR))


@functools.lru_cache(maxsize=None)
def two_mode_crude():
    return crude_mc(two_mode_model(), LevelSchedule(TWO_LEVELS, TWO_T), CRUDE_N, JOINT,
                    TWO_H, BASE_SEED)


@functools.lru_cache(maxsize=None)
def null_report():
    levels = LevelSchedule(NULL_LEVELS, NULL_T)
    return _record(replicate(null_rate_model(), levels, NULL_N, NULL_H, BASE_SEED, NULL_R))


def _se(values):
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / math.sqrt(len(values)))


# -- acceptance criteria ---------------------------------------------------------------

def check_brownian_oracle():
    """Criterion 1: all four cells against 2 Phi(-3), net of the grid bias."""
    p = bm_hitting_probability(BM_LEVELS[-1], BM_T)
    coarse = bm_report()
    fine = bm_report(BM_H / 4, BM_FINE_R, (SCHEMES[0],), (JOINT,)).cells[0]
    ref = coarse.cell(SCHEMES[0], JOINT)
    # grid bias ~ c sqrt(h), so bias(h) = 2 (m(h/4) - m(h)) to leading order
    bias = 2.0 * (fine.mean - ref.mean)
    bias_se = 2.0 * math.hypot(fine.stderr, ref.stderr)
    parts, ok = [], True
    for c in coarse.cells:
        tol = 3.0 * math.hypot(c.stderr, bias_se)
        dev = c.mean + bias - p
        ok &= abs(dev) <= tol
        parts.append(f"{c.scheme}/{c.dynamics} mean {c.mean:.5e} (raw z {(c.mean - p) / c.stderr:+.2f}, "
                     f"corrected dev {dev:+.2e} vs {tol:.2e})")
    reflect = p - bm_hitting_probability(BM_LEVELS[-1] + GRID_SHIFT * math.sqrt(BM_H), BM_T)
    measured = (f"target {p:.5e}; grid bias estimate {bias:.2e} +- {bias_se:.1e} "
                f"(shifted-barrier value {reflect:.2e}); " + "; ".join(parts))
    return Check("1 Brownian oracle", ok, measured,
                 "|mean + bias - 2Phi(-3)| <= 3 combined SE for each cell")


def check_scheme_consistency():
    """All four Brownian cells agree pairwise within 3 combined SE."""
    cells = bm_report().cells
    worst, ok = 0.0, True
    for i, a in enumerate(cells):
        for b in cells[i + 1:]:
            z = abs(a.mean - b.mean) / math.hypot(a.stderr, b.stderr)
            worst = max(worst, z)
            ok &= z <= 3.0
    return Check("scheme consistency", ok, f"max pairwise |z| {worst:.2f}", "<= 3")


def check_unbiasedness():
    """Criterion 2: two-mode splitting means vs crude Monte Carlo at 1e6 paths."""
    crude = two_mode_crude()
    ok, parts = True, []
    for c in two_mode_report().cells:
        est = [r.estimate for r in c.results[:TWO_R_MEAN]]
        mean, se = float(np.mean(est)), _se(est)
        z = (mean - crude.estimate) / math.hypot(se, crude.stderr)
        ok &= abs(z) <= 3.0
        parts.append(f"{c.scheme}/{c.dynamics} {mean:.4e} (z {z:+.2f})")
    measured = f"crude {crude.estimate:.4e} +- {crude.stderr:.1e}; " + "; ".join(parts)
    return Check("2 unbiasedness vs crude MC", ok, measured, "|z| <= 3 for each cell")


def check_variance_ordering():
    """Criterion 3: marginal variance <= 1.10 x joint and strictly smaller."""
    rep = two_mode_report()
    ok, parts = True, []
    for s in SCHEMES:
        vj, vm = rep.cell(s, JOINT).variance, rep.cell(s, MARGINAL).variance
        ok &= vm <= 1.10 * vj and vm < vj
        parts.append(f"{s}: marginal {vm:.3e} / joint {vj:.3e} = {vm / vj:.3f}")
    return Check("3 variance ordering", ok, "; ".join(parts), "ratio <= 1.10 and < 1")


def check_degenerate_filter():
    """Criterion 4a: with null rates the filter stays at the initial vertex."""
    model = null_rate_model()
    vertex = np.asarray(model.initial.theta_probs)
    exact, total = True, 0
    for r in range(200):
        traj = simulate_path(model, MARGINAL, NULL_H, NULL_T, BASE_SEED, stream=r)
        exact &= bool(np.all(traj.pi == vertex))
        total += traj.pi.shape[0]
    return Check("4a null rates: filter iterates", exact,
                 f"{total} iterates over 200 paths, all equal to the vertex: {exact}",
                 "every iterate bit-equal to the vertex")


def check_degenerate_variance():
    """Criterion 4b: F-test does not reject equal variances at 1%."""
    rep = null_report()
    ok, parts = True, []
    for s in SCHEMES:
        m = [r.estimate for r in rep.cell(s, MARGINAL).results]
        j = [r.estimate for r in rep.cell(s, JOINT).results]
        ratio, pval = f_test(m, j)
        ok &= pval >= 0.01
        parts.append(f"{s}: F {ratio:.4f}, p {pval:.3f}, paired estimates identical {m == j}")
    return Check("4b null rates: variance equality", ok, "; ".join(parts), "p >= 0.01")


def check_filter_conservation():
    """Criterion 5: every projected filter value lies on the simplex."""
    steps = TALLY.value[0]
    if steps < FILTER_STEPS_REQUIRED:
        # top up with full-horizon marginal paths of the two-mode model
        n = (FILTER_STEPS_REQUIRED - steps) // round(TWO_T / TWO_H) + 1
        *_, diag = simulate_terminal(two_mode_model(), MARGINAL, TWO_H, TWO_T, int(n),
                                     BASE_SEED + 1)
        TALLY.add(diag)
    steps, err, lo = TALLY.value
    ok = steps >= FILTER_STEPS_REQUIRED and err <= 1e-12 and lo >= 0.0
    return Check("5 filter conservation", ok,
                 f"{steps} filter steps, max |sum - 1| {err:.2e}, min component {lo:.3g}",
                 ">= 1e7 steps, |sum - 1| <= 1e-12, no negative component")


def duality_tests():
    return {
        "degraded-mode indicator": (lambda x: np.ones(len(x)), [0.0, 1.0]),
        "x on nominal mode": (lambda x: x[:, 0], [1.0, 0.0]),
        "gaussian bump weighted": (lambda x: np.exp(-x[:, 0] ** 2), [0.5, 2.0]),
    }


def check_duality():
    """Criterion 6: marginal and joint expectations of three test functions."""
    res = duality_check(two_mode_model(), duality_tests(), TWO_T, DUALITY_H,
                        DUALITY_PATHS, BASE_SEED)
    ok = all(abs(r.z) <= 3.0 for r in res)
    parts = [f"{r.name}: {r.marginal_mean:.5f} vs {r.joint_mean:.5f} (z {r.z:+.2f})"
             for r in res]
    return Check("6 duality", ok, "; ".join(parts), "|z| <= 3 at 1e5 paths each")


def check_indicator_identity(n_paths=1000):
    """Criterion 7: {T_k <= T} equals the product of potentials, every level."""
    model = two_mode_model()
    levels = LevelSchedule((0.25, 0.5, 1.0, 1.5), 1.0)
    mismatches, hits = 0, 0
    for r in range(n_paths):
        dyn = JOINT if r % 2 == 0 else MARGINAL
        rep = detect_hits(simulate_path(model, dyn, 1e-2, levels.horizon, BASE_SEED, r).segment,
                          levels)
        prod = 1
        for k in range(1, levels.n + 1):
            prod *= potential(rep.segments[k], k, levels)
            mismatches += int(rep.hit_by(k)) != prod
            hits += prod
    return Check("7 indicator identity", mismatches == 0,
                 f"{mismatches} mismatches over {n_paths} paths x {levels.n} levels "
                 f"({hits} level hits)", "exact agreement")


def determinism_config():
    return {
        "model": two_mode_model().to_dict(),
        "levels": LevelSchedule(TWO_LEVELS, TWO_T).to_dict(),
        "engine": {"seed": BASE_SEED, "n_particles": 300, "replicates": 4, "step_h": 1e-2},
        "output": {"format": "csv", "dump_survivor_paths": True},
    }


def check_determinism(threads=(1, 2, 8)):
    """Criterion 8: report digests agree across worker counts."""
    from .cli import load_config, run_experiment

    digests = {}
    with tempfile.TemporaryDirectory() as tmp:
        for fmt in ("csv", "json"):
            cfg = determinism_config()
            cfg["output"]["format"] = fmt
            config = load_config(cfg)
            for t in threads:
                out = Path(tmp) / f"{fmt}-{t}.out"
                _, written = run_experiment(config, output=str(out), threads=t,
                                            log=_NullLog())
                h = hashlib.sha256()
                for p in written:
                    h.update(p.read_bytes())
                digests[(fmt, t)] = h.hexdigest()
    ok = all(len({digests[(f, t)] for t in threads}) == 1 for f in ("csv", "json"))
    measured = ", ".join(f"{f}@{t}: {d[:12]}" for (f, t), d in digests.items())
    return Check("8 determinism", ok, measured, "identical digests for 1, 2, 8 workers")


class _NullLog:
    def write(self, _):
        pass

    def flush(self):
        pass


# -- fast invariants -----------------------------------------------------------------

def check_simplex(n=20000):
    """Random projections and filter steps stay on the simplex."""
    rng = np.random.default_rng(BASE_SEED)
    model = two_mode_model()
    worst, neg = 0.0, False
    for _ in range(n // 10):
        v = rng.normal(size=3) * 10.0 ** rng.integers(-3, 3)
        p = project_simplex(v)
        worst = max(worst, abs(p.sum() - 1.0))
        neg |= bool(np.any(p < 0))
    for _ in range(n):
        pi = rng.dirichlet([0.3, 0.3])
        x = rng.normal(size=1)
        out = filter_step(model, x, x + rng.normal(size=1) * 0.5, pi, 1e-2)
        worst = max(worst, abs(out.sum() - 1.0))
        neg |= bool(np.any(out < 0))
    return Check("simplex projection", worst <= 1e-12 and not neg,
                 f"max |sum - 1| {worst:.1e}, negative: {neg}", "<= 1e-12, none negative")


def check_nestedness(n=5000):
    """Membership in B_k implies membership in every lower level."""
    rng = np.random.default_rng(BASE_SEED)
    levels = LevelSchedule((-1.0, 0.0, 0.5, 2.0), 1.0, "euclidean-norm")
    x = rng.normal(size=(n, 3)) * 2
    v = levels.value(x)
    inside = np.array([v >= levels.threshold(k) for k in range(1, levels.n + 1)])
    ok = bool(np.all(inside[1:] <= inside[:-1]))
    return Check("level nestedness", ok, f"{n} random points", "B_n in ... in B_1")


SUITES = {
    "fast": (check_simplex, check_nestedness, check_indicator_identity,
             check_degenerate_filter, check_determinism),
    "oracle": (check_brownian_oracle, check_scheme_consistency, check_duality),
    "variance": (check_unbiasedness, check_variance_ordering, check_degenerate_filter,
                 check_degenerate_variance),
    "acceptance": (check_brownian_oracle, check_scheme_consistency, check_unbiasedness, check_variance_ordering,
                   check_degenerate_filter, check_degenerate_variance, check_duality,
                   check_indicator_identity, check_determinism, check_filter_conservation),
}


def run_suite(name, out=functools.partial(print, flush=True)):
    """Run one suite, print a line per check and return overall success."""
    ok = True
    for fn in SUITES[name]:
        t0 = time.perf_counter()
        c = fn()
        ok &= c.passed
        out(f"{c.line()} [{time.perf_counter() - t0:.1f}s]")
    out(f"{name}: {'PASS' if ok else 'FAIL'}")
    return ok
