"""Synchronization diagnostics computed from trajectories."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .matmeasure import MeasureKind

__all__ = [
    "pairwise_sync_error",
    "group_distance",
    "RateFit",
    "fit_exponential_rate",
    "PeriodEstimate",
    "estimate_period",
    "Distortion",
    "distortion",
    "SyncReport",
    "sync_report",
    "dumps",
]

#: floor applied to error series before taking logs
LOG_FLOOR = 1e-16
MIN_FIT_POINTS = 10


def _pairwise_max(X: np.ndarray, Y: np.ndarray, kind: MeasureKind) -> np.ndarray:
    """``max_{i,j} |X[:, i] - Y[:, j]|`` per time; X (T, n1, d), Y (T, n2, d)."""
    if kind is MeasureKind.LINF and X is Y:
        return (X.max(axis=1) - X.min(axis=1)).max(axis=1)
    out = np.zeros(X.shape[0])
    for i in range(X.shape[1]):
        D = np.abs(X[:, i:i + 1, :] - Y)
        if kind is MeasureKind.L1:
            nrm = D.sum(axis=2)
        elif kind is MeasureKind.L2:
            nrm = np.sqrt((D * D).sum(axis=2))
        else:
            nrm = D.max(axis=2)
        out = np.maximum(out, nrm.max(axis=1))
    return out


def pairwise_sync_error(traj, net, group: str, kind="Linf") -> np.ndarray:
    """``e(t) = max_{i,j in group} |x_i(t) - x_j(t)|`` on the trajectory grid."""
    X = net.group_states(traj.states, group)
    return _pairwise_max(X, X, MeasureKind.parse(kind))


def group_distance(traj, net, group_a: str, group_b: str, kind="Linf") -> np.ndarray:
    """Largest distance between any node of ``group_a`` and any node of ``group_b``."""
    X = net.group_states(traj.states, group_a)
    Y = net.group_states(traj.states, group_b)
    if X.shape[2] != Y.shape[2]:
        raise InputError(f"groups {group_a!r} and {group_b!r} have different node dimensions")
    return _pairwise_max(X, Y, MeasureKind.parse(kind))


@dataclass(frozen=True)
class RateFit:
    rate: float
    residual: float
    window: tuple[float, float]
    points: int


def fit_exponential_rate(times, series, window: Optional[tuple[float, float]] = None) -> RateFit:
    """Least-squares slope of ``log e(t)``; the rate is minus the slope.

    The default window starts when ``e`` first drops below ``0.5 e(0)`` and
    ends just before it reaches ``1e-10 e(0)`` (or at the end of the
    series).  A series that never halves is fitted over its whole length.
    """
    t = np.asarray(times, dtype=float)
    e = np.maximum(np.asarray(series, dtype=float), LOG_FLOOR)
    if t.shape != e.shape or t.ndim != 1:
        raise InputError("times and series must be 1-d arrays of equal length")
    if window is None:
        e0 = e[0]
        below = np.flatnonzero(e < 0.5 * e0)
        start = int(below[0]) if below.size else 0
        floor = np.flatnonzero(e[start:] <= 1e-10 * e0)
        stop = start + int(floor[0]) if floor.size else e.size
        sel = np.arange(start, stop)
    else:
        a, b = window
        sel = np.flatnonzero((t >= a) & (t <= b))
    if sel.size < MIN_FIT_POINTS:
        raise InputError(f"fit window holds {sel.size} points, need at least {MIN_FIT_POINTS}")
    tt, ly = t[sel], np.log(e[sel])
    slope, icpt = np.polyfit(tt, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * tt + icpt)) ** 2)))
    return RateFit(float(-slope), resid, (float(tt[0]), float(tt[-1])), int(sel.size))


def _overlap_corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / den) if den > 0 else 0.0


@dataclass(frozen=True)
class PeriodEstimate:
    period: Optional[float]
    periodic: bool
    peak: Optional[float] = None
    reason: str = ""


def estimate_period(series, times, tail_fraction: float = 0.5, min_cycles: int = 3,
                    min_peak: float = 0.3) -> PeriodEstimate:
    """Period from the autocorrelation of the steady-state tail.

    The tail (last ``tail_fraction`` of the samples) is detrended.  The
    autocorrelation at lag k is the correlation coefficient of the two
    overlapping segments ``y[:n-k]`` and ``y[k:]`` (direct sums), which is
    exactly 1 at the period of a periodic signal.  The first local maximum
    after the first zero crossing is refined by a parabola through three lags.  Lags beyond
    ``len(tail) / min_cycles`` are ignored, so at least ``min_cycles``
    periods must fit in the tail.
    """
    x = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if x.shape != t.shape or x.ndim != 1:
        raise InputError("series and times must be 1-d arrays of equal length")
    n0 = int(round(x.size * (1.0 - tail_fraction)))
    x, t = x[n0:], t[n0:]
    if x.size < 8:
        return PeriodEstimate(None, False, None, "tail too short")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
        raise InputError("period estimation needs a uniform time grid")
    dt = float(dt[0])
    coef = np.polyfit(t - t[0], x, 1)
    y = x - np.polyval(coef, t - t[0])
    scale = max(1.0, float(np.max(np.abs(x))))
    if np.std(y) <= 1e-10 * scale:
        return PeriodEstimate(None, False, None, "constant signal")
    n = y.size
    max_lag = n // min_cycles
    r = np.array([_overlap_corr(y[:n - k], y[k:]) for k in range(max_lag + 1)])
    neg = np.flatnonzero(r < 0)
    if neg.size == 0:
        return PeriodEstimate(None, False, None, "no zero crossing in the autocorrelation")
    best = None
    for k in range(int(neg[0]) + 1, max_lag):
        if r[k] >= r[k - 1] and r[k] >= r[k + 1]:
            best = k
            break
    if best is None or r[best] < min_peak:
        peak = None if best is None else float(r[best])
        return PeriodEstimate(None, False, peak, "no significant autocorrelation peak")
    a, b, c = r[best - 1], r[best], r[best + 1]
    den = a - 2 * b + c
    shift = 0.5 * (a - c) / den if den != 0 else 0.0
    return PeriodEstimate(float((best + shift) * dt), True, float(b), "")


@dataclass
class Distortion:
    """Center of mass ``x_bar(t)``, distortion ``eps(t)`` and its norm."""

    center: np.ndarray
    eps: np.ndarray
    norm: np.ndarray


def distortion(traj, net, group: Optional[str] = None, kind="L2") -> Distortion:
    """``eps = f(x_bar, t) - mean_i f(x_i, t)`` with ``f`` the uncoupled node field."""
    if group is None:
        if len(net.groups) != 1:
            raise InputError("distortion needs a single-group network or an explicit group")
        group = net.groups[0].name
    g = net.group(group)
    if g.intrinsic is None:
        raise InputError(f"group {group!r} has no intrinsic node field")
    X = net.group_states(traj.states, group)
    center = X.mean(axis=1)
    eps = np.empty_like(center)
    for k, t in enumerate(traj.times):
        fc = np.asarray(g.intrinsic(center[k:k + 1], t), dtype=float)[0]
        fm = np.asarray(g.intrinsic(X[k], t), dtype=float).mean(axis=0)
        eps[k] = fc - fm
    kind = MeasureKind.parse(kind)
    if kind is MeasureKind.L1:
        nrm = np.abs(eps).sum(axis=1)
    elif kind is MeasureKind.L2:
        nrm = np.sqrt((eps * eps).sum(axis=1))
    else:
        nrm = np.abs(eps).max(axis=1)
    return Distortion(center, eps, nrm)


def _clean(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON types."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, numpy types converted."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class SyncReport:
    """Per-group sync statistics, periods of chosen observables, cross-group distances."""

    groups: dict = field(default_factory=dict)
    periods: dict = field(default_factory=dict)
    cross: dict = field(default_factory=dict)
    distortion: Optional[dict] = None
    norm: str = "Linf"
    schema: str = "quorumsync.sync_report/1"

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return dumps(self.to_dict())


def sync_report(traj, net, observables: Optional[Sequence[str]] = None, sync_tol: float = 1e-6,
                kind="Linf", with_distortion: bool = False) -> SyncReport:
    """Assemble a :class:`SyncReport` for every group of ``net``.

    ``observables`` are state labels whose steady-state period is estimated
    (default: first coordinate of the first node of each group).
    """
    kind = MeasureKind.parse(kind)
    rep = SyncReport(norm=kind.value)
    for g in net.groups:
        e = pairwise_sync_error(traj, net, g.name, kind)
        entry = {"initial_error": float(e[0]), "final_error": float(e[-1]),
                 "max_tail_error": float(e[e.size // 2:].max()),
                 "synchronized": bool(e[-1] < sync_tol), "count": g.count}
        if g.count > 1 and e[0] > 0:
            try:
                fit = fit_exponential_rate(traj.times, e)
                entry["rate"] = fit.rate
                entry["rate_residual"] = fit.residual
                entry["fit_window"] = list(fit.window)
            except InputError as exc:
                entry["rate"] = None
                entry["rate_note"] = str(exc)
        rep.groups[g.name] = entry
    if observables is None:
        observables = [f"{g.name}[0].{g.state_names[0]}" for g in net.groups]
    for label in observables:
        est = estimate_period(traj.column(label), traj.times)
        rep.periods[label] = {"period": est.period, "periodic": est.periodic,
                              "peak": est.peak, "note": est.reason}
    names = [g.name for g in net.groups]
    if len(names) > 1:
        mat = np.zeros((len(names), len(names)))
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                if i < j and net.group(a).node_dim == net.group(b).node_dim:
                    mat[i, j] = mat[j, i] = group_distance(traj, net, a, b, kind)[-1]
                elif i < j:
                    mat[i, j] = mat[j, i] = np.nan
        rep.cross = {"groups": names, "final_distance": mat}
    if with_distortion and len(net.groups) == 1:
        d = distortion(traj, net)
        tail = d.norm[d.norm.size // 2:]
        rep.distortion = {"mean_norm_tail": float(tail.mean()), "max_norm": float(d.norm.max())}
    return rep
