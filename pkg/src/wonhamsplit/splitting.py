"""Nested level sets, hitting times and path segments.

Levels are superlevel sets of a scalar level function,
``B_k = {x : phi(x) >= L_k}`` with ``L_1 < ... < L_n``, so
``B_n ⊂ ... ⊂ B_1 ⊂ B_0 = R^d`` holds by construction.  Hits are detected
on the simulation grid only (closed sets, no interpolation between points).
Levels are numbered from 1; level 0 is the whole space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, UsageError
from .model import drift_columns, rate_matrix
from .simulate import (PHI_COORDINATE, PHI_NORM, PathSegment, _filter_core,
                       last_step, level_value, n_steps)

PHI_KINDS = {"coordinate": PHI_COORDINATE, "euclidean-norm": PHI_NORM}


@dataclass(frozen=True)
class LevelSchedule:
    thresholds: tuple
    horizon: float
    phi: str = "coordinate"
    coord_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(v) for v in self.thresholds))
        problems = []
        if self.phi not in PHI_KINDS:
            problems.append(("levels.phi.kind", f"must be one of {sorted(PHI_KINDS)}"))
        if not self.thresholds:
            problems.append(("levels.thresholds", "need at least one level"))
        elif any(not math.isfinite(v) for v in self.thresholds):
            problems.append(("levels.thresholds", "thresholds must be finite"))
        elif any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            problems.append(("levels.thresholds", "thresholds must be strictly increasing"))
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon)
                and self.horizon > 0):
            problems.append(("levels.horizon_T", "must be a positive number"))
        if problems:
            raise ConfigError(problems)

    @property
    def n(self):
        return len(self.thresholds)

    @property
    def phi_code(self):
        return PHI_KINDS[self.phi]

    def threshold(self, k):
        """``L_k`` for ``1 <= k <= n``; ``-inf`` for the trivial level 0."""
        if k == 0:
            return -math.inf
        if not 1 <= k <= self.n:
            raise UsageError(f"level index {k} outside 0..{self.n}")
        return self.thresholds[k - 1]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.phi == "coordinate":
            return x[..., self.coord_index]
        return np.linalg.norm(x, axis=-1)

    def check_dimension(self, d):
        if self.phi == "coordinate" and not 0 <= self.coord_index < d:
            raise ConfigError([("levels.phi.coord_index", f"must lie in 0..{d - 1}")])

    def to_dict(self):
        phi = {"kind": self.phi}
        if self.phi == "coordinate":
            phi["coord_index"] = self.coord_index
        return {"phi": phi, "thresholds": list(self.thresholds), "horizon_T": self.horizon}

    @classmethod
    def from_dict(cls, cfg, path="levels"):
        if not isinstance(cfg, dict):
            raise ConfigError([(path, "must be an object")])
        phi = cfg.get("phi", {})
        problems = []
        thresholds = cfg.get("thresholds")
        if not isinstance(thresholds, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in thresholds):
            problems.append((f"{path}.thresholds", "must be a list of numbers"))
            thresholds = [0.0]
        idx = phi.get("coord_index", 0)
        if not isinstance(idx, int) or isinstance(idx, bool):
            problems.append((f"{path}.phi.coord_index", "must be an integer"))
            idx = 0
        horizon = cfg.get("horizon_T")
        if horizon is None:
            problems.append((f"{path}.horizon_T", "required"))
            horizon = 1.0
        try:
            out = cls(tuple(thresholds), horizon, phi.get("kind", "coordinate"), idx)
        except ConfigError as exc:
            problems.extend((p.replace("levels", path, 1), m) for p, m in exc.violations)
            out = None
        if problems:
            raise ConfigError(problems)
        return out


@dataclass(frozen=True)
class HittingReport:
    """Grid hitting data of one path.

    ``hit_steps[k-1]`` is the first grid step in ``B_k`` (``None`` if never),
    ``segments[k]`` runs from ``S_{k-1}`` to ``S_k``; ``segments[0]`` is the
    single point ``X(0)``.
    """

    hit_steps: tuple
    hit_times: tuple
    truncated: tuple
    segments: list = field(repr=False)

    def hit_by(self, k):
        """Whether ``T_k <= T``."""
        return k == 0 or self.hit_steps[k - 1] is not None


def detect_hits(path, levels):
    """Locate ``T_k`` and cut the path into segments ``[S_{k-1}, S_k]``."""
    if len(path.points) == 0:
        raise UsageError("empty path")
    if path.t > levels.horizon + 1e-12:
        raise UsageError("path extends beyond the horizon")
    phi = levels.value(path.points)
    steps, times, truncated = [], [], []
    segments = [PathSegment(path.start_step, path.h, path.horizon, path.points[:1])]
    prev = path.start_step
    for k in range(1, levels.n + 1):
        inside = np.nonzero(phi >= levels.threshold(k))[0]
        if inside.size:
            j = path.start_step + int(inside[0])
            steps.append(j)
            times.append(path.times[inside[0]])
            truncated.append(min(times[-1], levels.horizon))
            end = j
        else:
            steps.append(None)
            times.append(math.inf)
            truncated.append(levels.horizon)
            end = path.end_step
        segments.append(path.slice(prev, end))
        prev = end
    return HittingReport(tuple(steps), tuple(times), tuple(truncated), segments)


def potential(segment, k, levels):
    """``1`` if the segment ends inside ``B_k``, else ``0``."""
    if k == 0:
        return 1
    return int(levels.value(segment.final_point) >= levels.threshold(k))


def segment_filter_update(model, pi_prev, segment, previous=None):
    """Carry the filter across every grid increment of ``segment``.

    ``previous``, when given, must end where ``segment`` starts.
    """
    if previous is not None and (
            previous.end_step != segment.start_step
            or not np.array_equal(previous.final_point, segment.points[0])):
        raise UsageError("segments are not contiguous")
    pi = np.array(pi_prev, dtype=float)
    if len(segment.points) < 2:
        return pi
    K = n_steps(segment.horizon, segment.h)
    out = np.empty(model.m)
    _filter_along(*model.arrays, np.ascontiguousarray(segment.points, dtype=float),
                  segment.start_step, K, segment.h, last_step(segment.horizon, segment.h),
                  pi, out)
    return out


@njit(nogil=True, cache=True)
def _filter_along(A, c, code, lb, w, beta, points, j0, K, h, h_last, pi, out):
    d = points.shape[1]
    m = pi.shape[0]
    cols = np.empty((d, m))
    lam = np.empty((m, m))
    cur = pi.copy()
    for q in range(points.shape[0] - 1):
        j = j0 + q
        hj = h if j < K - 1 else h_last
        drift_columns(A, c, points[q], cols)
        rate_matrix(code, lb, w, beta, points[q], lam)
        _filter_core(cols, lam, cur, points[q], points[q + 1], hj, out)
        cur[:] = out
    out[:] = cur


def level_of(levels, x):
    """Highest ``k`` with ``x`` in ``B_k`` (0 if none)."""
    v = level_value(levels.phi_code, levels.coord_index, np.asarray(x, dtype=float))
    return sum(1 for L in levels.thresholds if v >= L)
