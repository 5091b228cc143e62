"""Vector fields, Jacobians, periodic signals and state boxes.

A :class:`VectorField` is a pure function ``(x, t) -> dx/dt`` with an
optional analytic Jacobian.  :func:`jacobian_fd` supplies a central
difference Jacobian for fields without one, and for cross-checking
those with one (:func:`check_jacobian_consistency`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DomainError, InputError

__all__ = [
    "VectorField",
    "PeriodicSignal",
    "StateBox",
    "JacobianReport",
    "jacobian_fd",
    "default_fd_step",
    "check_jacobian_consistency",
    "linear_field",
]

FD_STEP_MIN = 1e-9
FD_STEP_MAX = 1e-3


@dataclass(frozen=True)
class VectorField:
    """``dx/dt = rhs(x, t)`` on R^dim.

    Parameters
    ----------
    dim : int
        State dimension.
    rhs : callable
        ``rhs(x, t)`` returning an array of length ``dim``.
    jac : callable, optional
        Analytic Jacobian ``jac(x, t)`` of shape ``(dim, dim)``.
    labels : sequence of str, optional
        One name per state coordinate (used for CSV headers).
    """

    dim: int
    rhs: Callable[[np.ndarray, float], np.ndarray]
    jac: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if int(self.dim) <= 0:
            raise InputError("vector field dimension must be positive")
        object.__setattr__(self, "dim", int(self.dim))
        labels = self.labels
        if labels is None:
            labels = tuple(f"x{i}" for i in range(self.dim))
        labels = tuple(str(s) for s in labels)
        if len(labels) != self.dim:
            raise InputError(f"{len(labels)} labels for a {self.dim}-dim field")
        object.__setattr__(self, "labels", labels)

    def __call__(self, x, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InputError(f"state has shape {x.shape}, expected ({self.dim},)")
        return np.asarray(self.rhs(x, t), dtype=float).reshape(self.dim)

    @property
    def has_jacobian(self) -> bool:
        return self.jac is not None

    def jacobian(self, x, t: float = 0.0) -> np.ndarray:
        """Analytic Jacobian if present, otherwise central differences."""
        x = np.asarray(x, dtype=float)
        if self.jac is None:
            return jacobian_fd(self, x, t)
        J = np.asarray(self.jac(x, t), dtype=float).reshape(self.dim, self.dim)
        if not np.all(np.isfinite(J)):
            raise DomainError(f"non-finite Jacobian at t={t}")
        return J


def linear_field(M, b=None) -> VectorField:
    """Affine field ``x -> M x + b`` with its exact Jacobian."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("linear field needs a square matrix")
    b = np.zeros(M.shape[0]) if b is None else np.asarray(b, dtype=float)
    return VectorField(M.shape[0], lambda x, t: M @ x + b, lambda x, t: M)


def default_fd_step(x) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)


def jacobian_fd(f, x, t: float = 0.0, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``(x, t)``.

    ``f`` may be a :class:`VectorField` or any callable ``f(x, t)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if step is None:
        step = default_fd_step(x)
    elif not (FD_STEP_MIN <= step <= FD_STEP_MAX):
        raise InputError(f"finite-difference step must lie in [1e-9, 1e-3], got {step!r}")
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        fp = np.asarray(f(x + e, t), dtype=float).ravel()
        fm = np.asarray(f(x - e, t), dtype=float).ravel()
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise DomainError(f"field is non-finite near x={x}, t={t}")
        cols.append((fp - fm) / (2.0 * step))
    return np.column_stack(cols)


@dataclass(frozen=True)
class PeriodicSignal:
    """A T-periodic input ``r(t)``.

    Periodicity is checked on construction at ``check_points`` times spread
    over ``[0, 4T]``; a mismatch above 1e-9 raises :class:`InputError`.
    """

    func: Callable[[float], object]
    period: float
    dim: int = 1
    name: str = "r"
    check_points: int = 64
    params: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.period) and self.period > 0):
            raise InputError("period must be positive and finite")
        ts = np.linspace(0.0, 4.0 * self.period, self.check_points, endpoint=False)
        for t in ts:
            a = self(t)
            b = self(t + self.period)
            if a.shape != (self.dim,):
                raise InputError(f"signal returns shape {a.shape}, expected ({self.dim},)")
            if np.max(np.abs(a - b)) > 1e-9:
                raise InputError(f"signal is not {self.period}-periodic at t={t}")

    def __call__(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.func(t), dtype=float))

    @classmethod
    def sine(cls, offset: float = 0.0, amplitude: float = 1.0, omega: float = 1.0,
             phase: float = 0.0) -> "PeriodicSignal":
        """``offset + amplitude * sin(omega t + phase)``."""
        if omega <= 0:
            raise InputError("omega must be positive")
        fn = lambda t: offset + amplitude * np.sin(omega * t + phase)
        return cls(fn, 2.0 * np.pi / omega, 1, name="sine",
                   params=dict(offset=offset, amplitude=amplitude, omega=omega, phase=phase))


@dataclass(frozen=True)
class StateBox:
    """Axis-aligned box ``lower <= x <= upper`` together with a time range."""

    lower: np.ndarray
    upper: np.ndarray
    t0: float = 0.0
    t1: float = 0.0
    labels: Optional[tuple[str, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InputError("box bounds must be finite")
        if np.any(lo > hi):
            raise InputError("box lower bound exceeds upper bound")
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)) or self.t0 > self.t1:
            raise InputError("invalid time range")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))

    @property
    def dim(self) -> int:
        return self.lower.size

    @classmethod
    def cube(cls, dim: int, lo: float, hi: float, t0: float = 0.0, t1: float = 0.0) -> "StateBox":
        return cls(np.full(dim, lo), np.full(dim, hi), t0, t1)

    def vertices(self) -> np.ndarray:
        if self.dim > 12:
            return np.empty((0, self.dim))
        corners = np.array(np.meshgrid(*[(0.0, 1.0)] * self.dim, indexing="ij")).reshape(self.dim, -1).T
        return self.lower + corners * (self.upper - self.lower)

    def sample(self, n_lowdisc: int = 2000, n_random: int = 500, seed: int = 0,
               vertices: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic sample of ``(x, t)`` points.

        Scrambled Halton points in the box extended by the time axis, then
        uniform random points, then (optionally) the box corners at ``t0``.
        Degenerate axes (lower == upper) stay fixed.
        """
        dim = self.dim + 1
        span = np.r_[self.upper - self.lower, self.t1 - self.t0]
        base = np.r_[self.lower, self.t0]
        parts = []
        if n_lowdisc > 0:
            halton = qmc.Halton(d=dim, scramble=True, seed=np.random.default_rng([seed, 1]))
            parts.append(halton.random(n_lowdisc))
        if n_random > 0:
            parts.append(np.random.default_rng([seed, 2]).random((n_random, dim)))
        U = np.vstack(parts) if parts else np.empty((0, dim))
        P = base + U * span
        X, T = P[:, :-1], P[:, -1]
        if vertices:
            V = self.vertices()
            X = np.vstack([X, V])
            T = np.r_[T, np.full(len(V), self.t0)]
        return X, T

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "time_range": [self.t0, self.t1]}


@dataclass(frozen=True)
class JacobianReport:
    max_deviation: float
    point: Optional[np.ndarray]
    time: Optional[float]
    entry: Optional[tuple[int, int]]
    samples: int

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "point": None if self.point is None else self.point.tolist(),
            "time": self.time,
            "entry": None if self.entry is None else list(self.entry),
            "samples": self.samples,
        }


def check_jacobian_consistency(f: VectorField, box: StateBox, samples: int = 200,
                               seed: int = 0, step: float | None = None) -> JacobianReport:
    """Largest entrywise gap between ``f.jac`` and :func:`jacobian_fd` over ``box``."""
    if not f.has_jacobian:
        raise InputError("field has no analytic Jacobian to check")
    if box.dim != f.dim:
        raise InputError(f"box is {box.dim}-dim, field is {f.dim}-dim")
    X, T = box.sample(n_lowdisc=max(int(samples), 1), n_random=0, seed=seed, vertices=False)
    worst = -1.0
    where = (None, None, None)
    for x, t in zip(X, T):
        D = np.abs(f.jacobian(x, t) - jacobian_fd(f, x, t, step))
        k = int(np.argmax(D))
        if D.flat[k] > worst:
            worst = float(D.flat[k])
            where = (x.copy(), float(t), tuple(int(i) for i in np.unravel_index(k, D.shape)))
    return JacobianReport(max(worst, 0.0), where[0], where[1], where[2], len(X))
