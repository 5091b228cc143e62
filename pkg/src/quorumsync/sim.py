"""ODE and SDE integration.

``integrate`` runs either classical fixed-step RK4 or an adaptive
Dormand-Prince 5(4) pair with continuous (dense) output, so results on the
output grid do not depend on where the adaptive steps happen to land.
``integrate_sde`` is Euler-Maruyama with additive noise on node
coordinates only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynsys import VectorField
from .errors import DivergenceError, InputError

__all__ = [
    "IntegratorConfig",
    "SdeConfig",
    "Trajectory",
    "integrate",
    "integrate_sde",
    "output_grid",
    "BLOWUP_NORM",
]

#: state norm beyond which a run is declared divergent
BLOWUP_NORM = 1e12

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output: y(t + s h) = y + h * K^T (P @ [s, s^2, s^3, s^4])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass(frozen=True)
class IntegratorConfig:
    """Deterministic integrator settings.

    ``h`` is the RK4 step; ``rtol``/``atol`` drive the adaptive method.
    ``dt_out`` is the output grid spacing (``None``: every RK4 step, or
    100 equal intervals for rk45).
    """

    method: str = "rk45"
    h: float = 0.01
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    dt_out: Optional[float] = None
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise InputError(f"unknown method {self.method!r} (rk4 or rk45)")
        for name in ("h", "rtol", "atol", "max_step"):
            v = getattr(self, name)
            if not (v > 0) or math.isnan(v):
                raise InputError(f"{name} must be positive")
        if self.dt_out is not None and not (self.dt_out > 0 and math.isfinite(self.dt_out)):
            raise InputError("dt_out must be positive and finite")


@dataclass(frozen=True)
class SdeConfig:
    """Euler-Maruyama settings; noise ``sigma dW`` on every node coordinate."""

    h: float = 0.01
    sigma: float = 0.0
    seed: int = 0
    run_index: int = 0
    nodes_only: bool = True
    dt_out: Optional[float] = None

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InputError("h must be positive")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise InputError("sigma must be nonnegative")
        if self.dt_out is not None and not (self.dt_out > 0 and math.isfinite(self.dt_out)):
            raise InputError("dt_out must be positive and finite")


@dataclass
class Trajectory:
    """Sampled solution: ``states[k]`` is the state at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray
    labels: tuple[str, ...]
    node_mask: Optional[np.ndarray] = None
    flags: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape != (self.times.size, len(self.labels)):
            raise InputError(f"states {self.states.shape} do not match "
                             f"{self.times.size} times x {len(self.labels)} labels")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InputError("trajectory times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def column(self, label: str) -> np.ndarray:
        try:
            return self.states[:, self.labels.index(label)]
        except ValueError:
            raise InputError(f"no state labelled {label!r}") from None

    def to_csv(self, path) -> None:
        """Header ``t,<labels>``, one row per output time, full precision."""
        data = np.column_stack([self.times, self.states])
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(("t",) + tuple(self.labels)) + "\n")
            np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def output_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """``t0, t0+dt, ...`` up to and including ``t1``."""
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(n + 1)
    if t1 - grid[-1] > 1e-9 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def _resolve(system):
    """Normalize a network, VectorField or ``rhs(t, y)`` callable."""
    if hasattr(system, "rhs") and hasattr(system, "node_mask") and hasattr(system, "labels"):
        mask = system.node_mask
        nonneg = system.nonnegative_mask() if hasattr(system, "nonnegative_mask") else None
        return system.rhs, tuple(system.labels), mask, nonneg
    if isinstance(system, VectorField):
        f = system.rhs
        return (lambda t, y: f(y, t)), tuple(system.labels), None, None
    if callable(system):
        return system, None, None, None
    raise InputError(f"cannot integrate object of type {type(system).__name__}")


def _check_span(t_span) -> tuple[float, float]:
    t0, t1 = (float(v) for v in t_span)
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise InputError(f"time span must satisfy t0 < t1, got {t_span}")
    return t0, t1


def _check_state(y, t, last_t):
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"non-finite state at t={t:.6g}", last_t)
    if np.max(np.abs(y)) > BLOWUP_NORM:
        raise DivergenceError(f"state norm exceeded {BLOWUP_NORM:g} at t={t:.6g}", last_t)


def _flag_negative(traj: Trajectory, nonneg: Optional[np.ndarray]) -> None:
    if nonneg is None or not nonneg.any():
        return
    sub = traj.states[:, nonneg]
    lo = float(sub.min())
    if lo < 0.0:
        k, j = np.unravel_index(int(np.argmin(sub)), sub.shape)
        label = np.asarray(traj.labels)[nonneg][j]
        traj.flags.append({"kind": "negative_concentration", "min": lo,
                           "label": str(label), "t": float(traj.times[k])})


def _rk4_run(rhs, y0, t0, t1, h, record_every, max_steps):
    n_steps = int(math.ceil((t1 - t0) / h - 1e-9))
    if n_steps > max_steps:
        raise InputError(f"{n_steps} RK4 steps exceed max_steps={max_steps}")
    times = [t0]
    states = [y0.copy()]
    y = y0.copy()
    t = t0
    for k in range(1, n_steps + 1):
        t_next = t1 if k == n_steps else t0 + k * h
        dt = t_next - t
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y_new = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_state(y_new, t_next, t)
        y, t = y_new, t_next
        if k % record_every == 0 or k == n_steps:
            times.append(t)
            states.append(y.copy())
    return np.array(times), np.array(states)


def _rms(x):
    return math.sqrt(float(np.mean(x * x)))


def _initial_step(rhs, t0, y0, f0, rtol, atol, max_step):
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step)


def _rk45_run(rhs, y0, grid, rtol, atol, max_step, max_steps):
    t0, t1 = grid[0], grid[-1]
    out = np.empty((grid.size, y0.size))
    out[0] = y0
    nxt = 1
    y = y0.copy()
    t = t0
    f = rhs(t, y)
    h = _initial_step(rhs, t, y, f, rtol, atol, max_step)
    K = np.empty((7, y0.size))
    steps = 0
    while t < t1:
        if steps >= max_steps:
            raise DivergenceError(f"step limit {max_steps} reached", t)
        h = min(h, max_step, t1 - t)
        min_step = 10 * np.spacing(t)
        if h < min_step:
            raise DivergenceError(f"step size underflow at t={t:.6g}", t)
        K[0] = f
        for s in range(1, 6):
            dy = np.dot(K[:s].T, _A[s]) * h
            K[s] = rhs(t + _C[s] * h, y + dy)
        y_new = y + h * np.dot(K[:6].T, _B)
        f_new = rhs(t + h, y_new)
        K[6] = f_new
        scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
        err = _rms(h * np.dot(K.T, _E) / scale)
        if not math.isfinite(err):
            h *= 0.2
            steps += 1
            continue
        if err <= 1.0:
            t_new = t + h
            if t_new > t1 - 1e-12 * max(1.0, abs(t1)):
                t_new = t1
            _check_state(y_new, t_new, t)
            # fill every output point inside (t, t_new]
            Q = K.T @ _P
            while nxt < grid.size and grid[nxt] <= t_new:
                s = (grid[nxt] - t) / h
                out[nxt] = y + h * (Q @ np.array([s, s * s, s ** 3, s ** 4]))
                nxt += 1
            fac = 10.0 if err == 0 else min(10.0, 0.9 * err ** -0.2)
            t, y, f = t_new, y_new, f_new
            h *= fac
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
        steps += 1
    out[-1] = y
    return out, steps


def integrate(system, x0, t_span, config: IntegratorConfig = IntegratorConfig(),
              t_eval: Optional[Sequence[float]] = None) -> Trajectory:
    """Integrate a network, VectorField or ``rhs(t, y)`` callable.

    Raises
    ------
    DivergenceError
        If the state becomes non-finite or exceeds :data:`BLOWUP_NORM`.
    """
    rhs, labels, mask, nonneg = _resolve(system)
    t0, t1 = _check_span(t_span)
    y0 = np.array(x0, dtype=float).ravel()
    if labels is None:
        labels = tuple(f"x{i}" for i in range(y0.size))
    if y0.size != len(labels):
        raise InputError(f"initial state has {y0.size} entries, system has {len(labels)}")
    _check_state(y0, t0, t0)

    if config.method == "rk4":
        if t_eval is not None:
            raise InputError("t_eval is only supported with rk45")
        dt_out = config.dt_out if config.dt_out is not None else config.h
        stride = dt_out / config.h
        if abs(stride - round(stride)) > 1e-9 * max(1.0, stride) or round(stride) < 1:
            raise InputError("dt_out must be an integer multiple of h for rk4")
        times, states = _rk4_run(rhs, y0, t0, t1, config.h, int(round(stride)), config.max_steps)
        info = {"method": "rk4", "h": config.h}
    else:
        if t_eval is not None:
            grid = np.asarray(t_eval, dtype=float)
            if grid[0] != t0 or grid[-1] != t1 or np.any(np.diff(grid) <= 0):
                raise InputError("t_eval must be increasing and span exactly [t0, t1]")
        else:
            dt_out = config.dt_out if config.dt_out is not None else (t1 - t0) / 100
            grid = output_grid(t0, t1, dt_out)
        states, steps = _rk45_run(rhs, y0, grid, config.rtol, config.atol, config.max_step,
                                  config.max_steps)
        times = grid
        info = {"method": "rk45", "rtol": config.rtol, "atol": config.atol, "steps": steps}
    traj = Trajectory(times, states, labels, mask, info=info)
    _flag_negative(traj, nonneg)
    return traj


def integrate_sde(system, x0, t_span, sde: SdeConfig) -> Trajectory:
    """Euler-Maruyama: ``x += F(x, t) h + sigma sqrt(h) xi``.

    ``xi`` is standard normal on node coordinates (all coordinates when
    ``nodes_only`` is false or the system has no node mask).  The random
    stream is ``default_rng(SeedSequence([seed, run_index]))``, so each run
    of a Monte-Carlo batch is reproducible on its own.
    """
    rhs, labels, mask, nonneg = _resolve(system)
    t0, t1 = _check_span(t_span)
    y = np.array(x0, dtype=float).ravel()
    if labels is None:
        labels = tuple(f"x{i}" for i in range(y.size))
    if y.size != len(labels):
        raise InputError(f"initial state has {y.size} entries, system has {len(labels)}")
    _check_state(y, t0, t0)
    if mask is None or not sde.nodes_only:
        mask = np.ones(y.size, dtype=bool)
    idx = np.flatnonzero(mask)
    rng = np.random.default_rng(np.random.SeedSequence([int(sde.seed), int(sde.run_index)]))

    h = sde.h
    dt_out = sde.dt_out if sde.dt_out is not None else h
    stride_f = dt_out / h
    if abs(stride_f - round(stride_f)) > 1e-9 * max(1.0, stride_f) or round(stride_f) < 1:
        raise InputError("dt_out must be an integer multiple of h")
    stride = int(round(stride_f))
    n_steps = int(math.ceil((t1 - t0) / h - 1e-9))
    amp = sde.sigma * math.sqrt(h)
    times = [t0]
    states = [y.copy()]
    t = t0
    for k in range(1, n_steps + 1):
        t_next = t1 if k == n_steps else t0 + k * h
        dt = t_next - t
        y_new = y + dt * rhs(t, y)
        if sde.sigma > 0:
            y_new[idx] += (sde.sigma * math.sqrt(dt) if k == n_steps else amp) * \
                rng.standard_normal(idx.size)
        _check_state(y_new, t_next, t)
        y, t = y_new, t_next
        if k % stride == 0 or k == n_steps:
            times.append(t)
            states.append(y.copy())
    traj = Trajectory(np.array(times), np.array(states), labels, mask,
                      info={"method": "euler_maruyama", "h": h, "sigma": sde.sigma,
                            "seed": int(sde.seed), "run_index": int(sde.run_index)})
    _flag_negative(traj, nonneg)
    return traj
