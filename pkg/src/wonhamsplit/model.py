"""Switching-diffusion model family.

The continuous state ``x`` in R^d follows ``dX = b(X) e_theta dt + dW`` while
the mode ``theta`` in {0, ..., m-1} jumps with the state-dependent rate matrix
``Lambda(x)``.  Column ``i`` of the d-by-m matrix ``b(x)`` is the drift in
mode ``i``.  Modes are 0-based throughout the Python API.

Two drift families (``affine``, ``constant``) and two rate families
(``constant``, ``logistic``) are built in.  The numba kernels at the bottom
of this module are what the simulators call; the public ``eval_*`` functions
are thin wrappers around them so both paths share one implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, UsageError

DRIFT_FAMILIES = ("affine", "constant")
RATE_FAMILIES = ("constant", "logistic")
RATE_CONSTANT = 0
RATE_LOGISTIC = 1


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DriftSpec:
    """Per-mode affine drift ``b(x) e_i = A[i] @ x + c[i]``."""

    family: str
    A: np.ndarray  # (m, d, d)
    c: np.ndarray  # (m, d)

    @classmethod
    def affine(cls, A, c):
        return cls("affine", _frozen(A), _frozen(c))

    @classmethod
    def constant(cls, c):
        c = _frozen(c)
        m, d = c.shape
        return cls("constant", _frozen(np.zeros((m, d, d))), c)

    def to_dict(self):
        out = {"family": self.family, "c": self.c.tolist()}
        if self.family == "affine":
            out["A"] = self.A.tolist()
        return out


@dataclass(frozen=True)
class RateSpec:
    """Off-diagonal rates; the diagonal is always the negative row sum.

    ``constant``: ``lambda_ij = lambda_bar_ij``.
    ``logistic``: ``lambda_ij(x) = lambda_bar_ij * s(w_ij . x + beta_ij)``.
    """

    family: str
    lambda_bar: np.ndarray  # (m, m), diagonal zeroed
    w: np.ndarray  # (m, m, d)
    beta: np.ndarray  # (m, m)

    @classmethod
    def constant(cls, lambda_bar, d):
        lb = np.array(lambda_bar, dtype=float)
        m = lb.shape[0]
        return cls._build("constant", lb, np.zeros((m, m, d)), np.zeros((m, m)))

    @classmethod
    def logistic(cls, lambda_bar, w, beta):
        return cls._build("logistic", np.array(lambda_bar, dtype=float), w, beta)

    @classmethod
    def _build(cls, family, lb, w, beta):
        lb = lb.copy()
        np.fill_diagonal(lb, 0.0)
        if np.any(lb < 0):
            raise ConfigError([("rates.lambda_bar", "off-diagonal rates must be >= 0")])
        return cls(family, _frozen(lb), _frozen(w), _frozen(beta))

    @property
    def code(self):
        return RATE_LOGISTIC if self.family == "logistic" else RATE_CONSTANT

    def max_exit_rate(self):
        """Upper bound on ``max_x max_i |lambda_ii(x)|``."""
        return float(self.lambda_bar.sum(axis=1).max())

    def to_dict(self):
        out = {"family": self.family, "lambda_bar": self.lambda_bar.tolist()}
        if self.family == "logistic":
            out["w"] = self.w.tolist()
            out["beta"] = self.beta.tolist()
        return out


@dataclass(frozen=True)
class InitialLaw:
    """Product law ``nu(dx) * p_i``: point mass or isotropic Gaussian times a mode vector."""

    x0: np.ndarray
    scale0: float
    theta_probs: np.ndarray

    def to_dict(self):
        return {
            "x0": self.x0.tolist(),
            "scale0": self.scale0,
            "theta_probs": self.theta_probs.tolist(),
        }


@dataclass(frozen=True)
class SwitchingModel:
    d: int
    m: int
    drift: DriftSpec
    rates: RateSpec
    initial: InitialLaw

    def __post_init__(self):
        problems = []
        if self.drift.A.shape != (self.m, self.d, self.d):
            problems.append(("model.drift.A", f"expected shape {(self.m, self.d, self.d)}"))
        if self.drift.c.shape != (self.m, self.d):
            problems.append(("model.drift.c", f"expected shape {(self.m, self.d)}"))
        if self.rates.lambda_bar.shape != (self.m, self.m):
            problems.append(("model.rates.lambda_bar", f"expected shape {(self.m, self.m)}"))
        if self.rates.w.shape != (self.m, self.m, self.d):
            problems.append(("model.rates.w", f"expected shape {(self.m, self.m, self.d)}"))
        if self.rates.beta.shape != (self.m, self.m):
            problems.append(("model.rates.beta", f"expected shape {(self.m, self.m)}"))
        if self.initial.x0.shape != (self.d,):
            problems.append(("model.initial.x0", f"expected length {self.d}"))
        if self.initial.theta_probs.shape != (self.m,):
            problems.append(("model.initial.theta_probs", f"expected length {self.m}"))
        if problems:
            raise ConfigError(problems)

    @classmethod
    def build(cls, drift_c, lambda_bar=None, *, drift_A=None, x0=None, scale0=0.0,
              theta_probs=None):
        """Convenience constructor for constant-rate models.

        ``drift_c`` has shape (m, d); ``drift_A`` (m, d, d) switches the drift
        family to ``affine``.  Missing rates mean a null rate matrix.
        """
        c = np.atleast_2d(np.asarray(drift_c, dtype=float))
        m, d = c.shape
        drift = DriftSpec.constant(c) if drift_A is None else DriftSpec.affine(drift_A, c)
        if lambda_bar is None:
            lambda_bar = np.zeros((m, m))
        if theta_probs is None:
            theta_probs = np.full(m, 1.0 / m)
        initial = InitialLaw(
            _frozen(np.zeros(d) if x0 is None else np.atleast_1d(x0)),
            float(scale0),
            _frozen(theta_probs),
        )
        return cls(d, m, drift, RateSpec.constant(lambda_bar, d), initial)

    @property
    def arrays(self):
        """Positional arguments expected by the numba kernels."""
        return (self.drift.A, self.drift.c, self.rates.code,
                self.rates.lambda_bar, self.rates.w, self.rates.beta)

    def to_dict(self):
        return {
            "d": self.d,
            "m": self.m,
            "drift": self.drift.to_dict(),
            "rates": self.rates.to_dict(),
            "initial": self.initial.to_dict(),
        }

    @classmethod
    def from_dict(cls, cfg, path="model"):
        errors = []

        def fail(key, msg):
            errors.append((f"{path}.{key}", msg))

        def array(obj, key, shape):
            try:
                a = np.array(obj, dtype=float)
            except (TypeError, ValueError):
                fail(key, "not a numeric array")
                return None
            if a.shape != shape:
                fail(key, f"expected shape {shape}, got {a.shape}")
                return None
            if not np.all(np.isfinite(a)):
                fail(key, "non-finite entries")
                return None
            return a

        if not isinstance(cfg, dict):
            raise ConfigError([(path, "must be an object")])
        d, m = cfg.get("d"), cfg.get("m")
        for key, v in (("d", d), ("m", m)):
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                fail(key, "must be a positive integer")
        if errors:
            raise ConfigError(errors)

        drift_cfg = cfg.get("drift", {})
        family = drift_cfg.get("family", "affine")
        drift = None
        if family not in DRIFT_FAMILIES:
            fail("drift.family", f"must be one of {DRIFT_FAMILIES}")
        else:
            c = array(drift_cfg.get("c", np.zeros((m, d))), "drift.c", (m, d))
            if family == "affine":
                A = array(drift_cfg.get("A", np.zeros((m, d, d))), "drift.A", (m, d, d))
                if A is not None and c is not None:
                    drift = DriftSpec.affine(A, c)
            elif c is not None:
                drift = DriftSpec.constant(c)

        rates_cfg = cfg.get("rates", {})
        rfam = rates_cfg.get("family", "constant")
        rates = None
        if rfam not in RATE_FAMILIES:
            fail("rates.family", f"must be one of {RATE_FAMILIES}")
        else:
            lb = array(rates_cfg.get("lambda_bar", np.zeros((m, m))), "rates.lambda_bar", (m, m))
            w = array(rates_cfg.get("w", np.zeros((m, m, d))), "rates.w", (m, m, d))
            beta = array(rates_cfg.get("beta", np.zeros((m, m))), "rates.beta", (m, m))
            if lb is not None:
                off = lb[~np.eye(m, dtype=bool)]
                if np.any(off < 0):
                    fail("rates.lambda_bar", "off-diagonal rates must be >= 0")
                elif w is not None and beta is not None:
                    if rfam == "constant":
                        rates = RateSpec.constant(lb, d)
                    else:
                        rates = RateSpec.logistic(lb, w, beta)

        init_cfg = cfg.get("initial", {})
        x0 = array(init_cfg.get("x0", np.zeros(d)), "initial.x0", (d,))
        scale0 = init_cfg.get("scale0", 0.0)
        if not isinstance(scale0, (int, float)) or isinstance(scale0, bool) \
                or not math.isfinite(scale0) or scale0 < 0:
            fail("initial.scale0", "must be a finite number >= 0")
        probs = array(init_cfg.get("theta_probs", np.full(m, 1.0 / m)),
                      "initial.theta_probs", (m,))
        if probs is not None and (np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12):
            fail("initial.theta_probs", "must be nonnegative and sum to 1")

        if errors:
            raise ConfigError(errors)
        initial = InitialLaw(_frozen(x0), float(scale0), _frozen(probs))
        return cls(d, m, drift, rates, initial)


def _check_mode(model, i):
    if not 0 <= i < model.m:
        raise UsageError(f"mode index {i} out of range for m={model.m}")


def _vector(x, n, what):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise UsageError(f"{what} must have shape ({n},), got {x.shape}")
    return x


def eval_drift_mode(model, x, i):
    """Drift of mode ``i`` at ``x`` (column ``i`` of ``b(x)``)."""
    _check_mode(model, i)
    x = _vector(x, model.d, "x")
    out = np.empty(model.d)
    drift_mode(model.drift.A, model.drift.c, x, i, out)
    return out


def eval_drift_mixed(model, x, pi):
    """Filter-averaged drift ``b(x) @ pi``."""
    x = _vector(x, model.d, "x")
    pi = _vector(pi, model.m, "pi")
    out = np.empty(model.d)
    drift_mixed(model.drift.A, model.drift.c, x, pi, out)
    return out


def eval_rates(model, x):
    x = _vector(x, model.d, "x")
    out = np.empty((model.m, model.m))
    rate_matrix(model.rates.code, model.rates.lambda_bar, model.rates.w,
                model.rates.beta, x, out)
    return out


# -- kernels -----------------------------------------------------------------

@njit(inline="always", nogil=True, cache=True)
def drift_mode(A, c, x, i, out):
    d = c.shape[1]
    for r in range(d):
        s = c[i, r]
        for q in range(d):
            s += A[i, r, q] * x[q]
        out[r] = s


@njit(inline="always", nogil=True, cache=True)
def drift_columns(A, c, x, out):
    """All mode drifts at once; ``out`` has shape (d, m)."""
    m, d = c.shape
    for i in range(m):
        for r in range(d):
            s = c[i, r]
            for q in range(d):
                s += A[i, r, q] * x[q]
            out[r, i] = s


@njit(nogil=True, cache=True)
def drift_mixed(A, c, x, pi, out):
    m, d = c.shape
    col = np.empty(d)
    out[:] = 0.0
    for i in range(m):
        drift_mode(A, c, x, i, col)
        for r in range(d):
            out[r] += pi[i] * col[r]


@njit(inline="always", nogil=True, cache=True)
def _logistic(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(inline="always", nogil=True, cache=True)
def rate_matrix(code, lambda_bar, w, beta, x, out):
    m = lambda_bar.shape[0]
    d = x.shape[0]
    for i in range(m):
        total = 0.0
        for j in range(m):
            if j == i:
                continue
            v = lambda_bar[i, j]
            if code == RATE_LOGISTIC:
                z = beta[i, j]
                for q in range(d):
                    z += w[i, j, q] * x[q]
                v = v * _logistic(z)
            out[i, j] = v
            total += v
        out[i, i] = -total
