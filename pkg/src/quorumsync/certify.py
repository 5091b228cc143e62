"""Contraction certificates.

Two flavours of evidence are produced here:

* :class:`ContractionCertificate` -- the supremum of a matrix measure of a
  Jacobian over a sampled :class:`~quorumsync.dynsys.StateBox`.  This is a
  sampled claim, not a proof; the certificate records the box and the
  sample count so its scope is explicit.
* :class:`ConditionReport` -- closed-form parameter inequalities for the
  catalog models, each reported as a margin that must be negative.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import dumps
from .dynsys import StateBox, jacobian_fd
from .errors import DomainError, InputError, UnsupportedError
from .matmeasure import (MeasureKind, WeightSpec, block_operator_norm, measure, weighted_measure)
from .network import NodeGroupSpec, QuorumNetwork
from . import models as _models

__all__ = [
    "DEFAULT_TOL",
    "SCHEMA",
    "ContractionCertificate",
    "ConditionReport",
    "verify_contraction",
    "verify_node_contraction",
    "verify_hierarchy",
    "verify_media_layer",
    "check_genetic_oscillator_conditions",
    "check_ahl_condition",
    "min_coupling_gain",
    "check_vdp_gain",
    "verify_reduced_global",
    "default_ratio_grid",
    "certify_model",
]

#: margin a sampled supremum must stay below to count as "uniformly negative"
DEFAULT_TOL = 1e-9
SCHEMA = "quorumsync.certificate/1"
N_LOWDISC = 2000
N_RANDOM = 500


@dataclass
class ContractionCertificate:
    """Sampled sup of ``mu(J)`` over a box; ``pass`` iff it is <= -tol."""

    target: str
    measure: str
    box: StateBox
    samples: int
    worst_margin: float
    worst_point: Optional[list]
    worst_time: Optional[float]
    tol: float = DEFAULT_TOL
    seed: int = 0
    weight: Optional[list] = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.worst_margin <= -self.tol)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    @property
    def rate(self) -> float:
        """Certified contraction rate (0 when the check fails)."""
        return float(-self.worst_margin) if self.passed else 0.0

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "sampled",
            "target": self.target,
            "measure": self.measure,
            "weight": self.weight,
            "box": self.box.to_dict(),
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "worst_margin": self.worst_margin,
            "rate": self.rate,
            "verdict": self.verdict,
            "worst_point": {"state": self.worst_point, "t": self.worst_time},
            "details": self.details,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


@dataclass
class ConditionReport:
    """Named inequalities ``margin < 0``; passes iff all are negative."""

    target: str
    margins: dict
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v < 0 for v in self.margins.values())

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "kind": "conditions", "target": self.target,
                "margins": dict(self.margins), "verdict": self.verdict, "notes": list(self.notes),
                "details": self.details}

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _sample(box: StateBox, n_lowdisc: int, n_random: int, seed: int):
    X, T = box.sample(n_lowdisc, n_random, seed)
    if X.shape[0] == 0:
        raise InputError("no sample points")
    return X, T


def verify_contraction(jac: Callable, box: StateBox, kind="L1", weight: Optional[WeightSpec] = None,
                       n_lowdisc: int = N_LOWDISC, n_random: int = N_RANDOM, seed: int = 0,
                       tol: float = DEFAULT_TOL, target: str = "jacobian") -> ContractionCertificate:
    """Sup over sampled ``(x, t)`` in ``box`` of ``mu(jac(x, t))`` (or its weighted form)."""
    kind = MeasureKind.parse(kind if weight is None else weight.kind)
    X, T = _sample(box, n_lowdisc, n_random, seed)
    worst, arg = -np.inf, 0
    for k, (x, t) in enumerate(zip(X, T)):
        J = np.asarray(jac(x, t), dtype=float)
        if not np.all(np.isfinite(J)):
            raise DomainError(f"{target}: non-finite Jacobian at x={x.tolist()}, t={t:.6g}")
        m = weighted_measure(J, weight) if weight is not None else measure(J, kind)
        if m > worst:
            worst, arg = m, k
    return ContractionCertificate(
        target, kind.value, box, int(X.shape[0]), float(worst), X[arg].tolist(), float(T[arg]),
        tol, seed, None if weight is None else weight.theta.tolist())


def verify_node_contraction(node, box: StateBox, kind="L1", node_dim: Optional[int] = None,
                            weight: Optional[WeightSpec] = None, n_lowdisc: int = N_LOWDISC,
                            n_random: int = N_RANDOM, seed: int = 0, tol: float = DEFAULT_TOL,
                            target: Optional[str] = None) -> ContractionCertificate:
    """Contraction of a node field ``f(x, v, t)`` in ``x`` for every frozen input ``v``.

    ``box`` ranges over the concatenation ``(x, v)``.  ``node`` is either a
    :class:`~quorumsync.network.NodeGroupSpec` (its ``node_jac`` is used) or
    a callable ``jac(x, v, t)`` together with ``node_dim``.
    """
    if isinstance(node, NodeGroupSpec):
        n = node.node_dim
        jfun = node.node_jac
        target = target or f"node:{node.name}"
    elif callable(node):
        if node_dim is None:
            raise InputError("node_dim is required with a bare Jacobian callable")
        n = int(node_dim)
        jfun = node
        target = target or "node"
    else:
        raise InputError("node must be a NodeGroupSpec or a Jacobian callable")
    if box.dim < n:
        raise InputError(f"box has {box.dim} coordinates, node has {n}")
    cert = verify_contraction(lambda xv, t: jfun(xv[:n], xv[n:], t), box, kind, weight,
                              n_lowdisc, n_random, seed, tol, target)
    cert.details["node_dim"] = n
    return cert


def verify_hierarchy(j11: Callable, j12: Callable, j22: Callable, box: StateBox,
                     dims: tuple[int, int], kinds=("L1", "L1"), n_lowdisc: int = N_LOWDISC,
                     n_random: int = N_RANDOM, seed: int = 0,
                     tol: float = DEFAULT_TOL, target: str = "hierarchy") -> ContractionCertificate:
    """Block upper-triangular Jacobian ``[[J11, J12], [0, J22]]``.

    Passes iff both diagonal blocks are uniformly contracting (each in its
    own measure) and the coupling block stays bounded on the sampled box.
    Each provider is a function of the full state ``(x, t)``.  The reported
    margin is the worse of the two diagonal-block margins.
    """
    k1, k2 = (MeasureKind.parse(k) for k in kinds)
    n1, n2 = dims
    if box.dim != n1 + n2:
        raise InputError(f"box has {box.dim} coordinates, blocks have {n1}+{n2}")
    X, T = _sample(box, n_lowdisc, n_random, seed)
    m1 = m2 = -np.inf
    a1 = a2 = 0
    nb = 0.0
    for k, (x, t) in enumerate(zip(X, T)):
        v1 = measure(np.asarray(j11(x, t), dtype=float).reshape(n1, n1), k1)
        v2 = measure(np.asarray(j22(x, t), dtype=float).reshape(n2, n2), k2)
        c = block_operator_norm(np.asarray(j12(x, t), dtype=float).reshape(n1, n2), k2, k1)
        if v1 > m1:
            m1, a1 = v1, k
        if v2 > m2:
            m2, a2 = v2, k
        nb = max(nb, c)
    worst, arg = (m1, a1) if m1 >= m2 else (m2, a2)
    if not np.isfinite(nb):
        worst = np.inf
    cert = ContractionCertificate(target, f"{k1.value}/{k2.value}", box, int(X.shape[0]),
                                  float(worst), X[arg].tolist(), float(T[arg]), tol, seed)
    cert.details = {
        "blocks": [{"margin": float(m1), "rate": float(-m1) if m1 <= -tol else 0.0,
                    "measure": k1.value, "worst_point": X[a1].tolist()},
                   {"margin": float(m2), "rate": float(-m2) if m2 <= -tol else 0.0,
                    "measure": k2.value, "worst_point": X[a2].tolist()}],
        "coupling_norm_bound": float(nb),
    }
    return cert


def verify_media_layer(net: QuorumNetwork, box: StateBox, kind="L1", medium: Optional[str] = None,
                       n_lowdisc: int = N_LOWDISC, n_random: int = N_RANDOM, seed: int = 0,
                       tol: float = DEFAULT_TOL) -> ContractionCertificate:
    """Contraction of a medium's own dynamics ``g(z, psi, t)`` in ``z`` for frozen ``psi``.

    ``box`` ranges over ``(z, psi)``.  The media-coupling term ``-phi(z)``
    (one copy per neighbour) is included since it acts on ``z`` as well.
    """
    m = net.medium(medium or net.media[0].name)
    d = m.dim
    if box.dim != 2 * d:
        raise InputError(f"box must span (z, psi): {2 * d} coordinates, got {box.dim}")
    nbrs = net.neighbors[m.name]
    phi = net.graph.coupling.get(m.name)

    def jac(zp, t):
        z, psi = zp[:d], zp[d:]
        J = m.dz_jac(z, psi, t)
        if phi is not None and nbrs:
            J = J - len(nbrs) * jacobian_fd(lambda w, s: np.asarray(phi(w), dtype=float), z, t)
        return J

    return verify_contraction(jac, box, kind, None, n_lowdisc, n_random, seed, tol,
                              f"medium:{m.name}")


# -- closed-form conditions ----------------------------------------------------


def check_genetic_oscillator_conditions(p) -> ConditionReport:
    """Closed-form mu_1 conditions for the genetic relaxation oscillator node.

    With all Hill exponents equal to 2, ``max_v a v/(1+v^2)^2 = 3 sqrt(3) a/16``
    bounds every off-diagonal Jacobian entry, giving three margins.
    """
    if isinstance(p, dict):
        p = _models.GeneticOscParams(**p)
    for name in ("d1", "d2", "d3", "eps", "d"):
        if not getattr(p, name) > 0:
            raise InputError(f"{name} must be positive")
    if (p.beta, p.gamma, p.eta) != (2, 2, 2):
        raise UnsupportedError("closed-form conditions need Hill exponents beta=gamma=eta=2; "
                               "use verify_node_contraction instead")
    c = 6.0 * np.sqrt(3.0) / 16.0
    margins = {
        "m1": -p.d1 + c * (p.alpha2 + p.eps * p.alpha4),
        "m2": -p.d2 + c * p.alpha1,
        "m3": -p.eps * p.d3 - 2.0 * p.d + c * p.alpha3,
    }
    return ConditionReport("genetic_relax_osc", {k: float(v) for k, v in margins.items()},
                           ["closed form for Hill exponents 2, measure mu_1"])


def check_ahl_condition(p, box: Optional[StateBox] = None, seed: int = 0):
    """Closed-form contraction condition of the AHL pathway.

    For ``n = 2``: margins ``beta/x_thresh - 8 gamma_c/(3 sqrt 3)`` and
    ``-(d2 + gamma_e)``.  Other ``n`` fall back to a sampled mu_1 check over
    ``box`` (default ``[0, 10 x_thresh]^2``) and return that certificate.
    """
    if isinstance(p, dict):
        p = _models.AhlParams(**p)
    if int(p.n) != 2:
        fld = _models.ahl_pathway(p)
        if box is None:
            box = StateBox.cube(2, 0.0, 10.0 * p.x_thresh)
        cert = verify_contraction(fld.jacobian, box, "L1", seed=seed, target="ahl_pathway")
        cert.details["note"] = f"sampled fallback for n={p.n}"
        return cert
    margins = {
        "activation": float(p.beta / p.x_thresh - 8.0 * p.gamma_c / (3.0 * np.sqrt(3.0))),
        "extracellular": float(-(p.d2 + p.gamma_e)),
    }
    return ConditionReport("ahl_pathway", margins, ["closed form for n = 2"])


def min_coupling_gain(alpha: float, N: int) -> float:
    """Sufficient gain ``alpha / N`` for ``x_i' = f(x_i) + kN(z - x_i)``."""
    if int(N) != N or N < 1:
        raise InputError("N must be a positive integer")
    return float(alpha) / int(N)


def check_vdp_gain(K: float, alpha: float, g_bar: Optional[float] = None,
                   g_prime: Optional[Callable] = None, g_range: tuple[float, float] = (-10.0, 10.0),
                   samples: int = 2001) -> ConditionReport:
    """Gain rule ``K > max(alpha, G)`` with ``G = sup g'`` (given, or sampled on ``g_range``)."""
    if not alpha > 0:
        raise InputError("alpha must be positive")
    notes = []
    if g_bar is None:
        if g_prime is None:
            raise InputError("give g_bar or g_prime")
        grid = np.linspace(*g_range, samples)
        g_bar = float(np.max(g_prime(grid)))
        notes.append(f"G sampled on [{g_range[0]}, {g_range[1]}] at {samples} points")
    margin = max(alpha, g_bar) - K
    return ConditionReport("van_der_pol_cluster", {"gain": float(margin)}, notes,
                           {"K": K, "alpha": alpha, "G": g_bar})


def default_ratio_grid() -> np.ndarray:
    return np.logspace(-3, 3, 25)


def verify_reduced_global(net: QuorumNetwork, box: StateBox, weight_ratio_grid=None,
                          kinds=("L1", "L1"), n_lowdisc: int = N_LOWDISC, n_random: int = N_RANDOM,
                          seed: int = 0, tol: float = DEFAULT_TOL) -> ContractionCertificate:
    """Contraction of the reduced system ``(x_s, z)`` in a two-block weighted norm.

    For each ratio ``r = theta_2 / theta_1`` the two margins

        mu(df/dx_s) + r ||dg/dx_s||     and     mu(dg/dz) + ||df/dz|| / r

    are maximized over the sampled ``box`` (which spans ``(x_s, z)``).  The
    check passes at the first ratio where both suprema are <= -tol.
    ``dg/dx_s`` is ``dg/dpsi * N * du/dx`` since ``psi = N u(x_s)`` on the
    synchronized set.
    """
    grid = default_ratio_grid() if weight_ratio_grid is None else np.asarray(weight_ratio_grid,
                                                                             dtype=float)
    if grid.size == 0:
        raise InputError("weight ratio grid is empty")
    if np.any(grid <= 0):
        raise InputError("weight ratios must be positive")
    if len(net.groups) != 1 or len(net.media) != 1:
        raise UnsupportedError("reduced-system check needs one group and one medium")
    if not net.uses_default_aggregation():
        raise UnsupportedError("reduced-system check needs the default sum aggregation")
    g, m = net.groups[0], net.media[0]
    n, d, N = g.node_dim, m.dim, g.count
    if box.dim != n + d:
        raise InputError(f"box must span (x_s, z): {n + d} coordinates, got {box.dim}")
    kx, kz = (MeasureKind.parse(k) for k in kinds)

    def u_single(x):
        return np.asarray(g.medium_input(x.reshape(1, n)), dtype=float).reshape(d)

    X, T = _sample(box, n_lowdisc, n_random, seed)
    rows = np.empty((X.shape[0], 4))
    for k, (xz, t) in enumerate(zip(X, T)):
        x, z = xz[:n], xz[n:]
        psi = N * u_single(x)
        fx = g.node_jac(x, z, t)
        fz = g.coupling_jac(x, z, t).reshape(n, d)
        gz = m.dz_jac(z, psi, t)
        gx = m.dpsi_jac(z, psi, t) @ (N * jacobian_fd(lambda y, s: u_single(y), x, t).reshape(d, n))
        rows[k] = (measure(fx, kx), block_operator_norm(gx, kx, kz),
                   measure(gz, kz), block_operator_norm(fz, kz, kx))
    table = []
    chosen = None
    for r in grid:
        s1 = float(np.max(rows[:, 0] + r * rows[:, 1]))
        s2 = float(np.max(rows[:, 2] + rows[:, 3] / r))
        table.append({"ratio": float(r), "node_margin": s1, "medium_margin": s2})
        if chosen is None and max(s1, s2) <= -tol:
            chosen = len(table) - 1
    best = chosen if chosen is not None else int(np.argmin([max(e["node_margin"],
                                                                e["medium_margin"])
                                                            for e in table]))
    worst = max(table[best]["node_margin"], table[best]["medium_margin"])
    r = table[best]["ratio"]
    per_point = np.maximum(rows[:, 0] + r * rows[:, 1], rows[:, 2] + rows[:, 3] / r)
    arg = int(np.argmax(per_point))
    cert = ContractionCertificate("reduced_system", f"{kx.value}/{kz.value}", box, int(X.shape[0]),
                                  float(worst), X[arg].tolist(), float(T[arg]), tol, seed)
    cert.details = {"ratio": r, "grid": table, "found": chosen is not None}
    return cert


# -- catalog dispatch -------------------------------------------------------------


def _box_from(spec: Optional[dict], dim: int, lo: float, hi: float) -> StateBox:
    if not spec:
        return StateBox.cube(dim, lo, hi)
    lower = spec.get("lower", lo)
    upper = spec.get("upper", hi)
    lower = np.full(dim, lower) if np.isscalar(lower) else np.asarray(lower, dtype=float)
    upper = np.full(dim, upper) if np.isscalar(upper) else np.asarray(upper, dtype=float)
    tr = spec.get("time_range", [0.0, 0.0])
    return StateBox(lower, upper, tr[0], tr[1])


def _genetic_checks(p, prefix: str, box_spec, kind, opts) -> list:
    out = [check_genetic_oscillator_conditions(p)] if (p.beta, p.gamma, p.eta) == (2, 2, 2) else []
    grp = _models._genetic_group(p, prefix)
    cert = verify_node_contraction(grp, _box_from(box_spec, 4, 0.0, 10.0), kind, **opts)
    out.append(cert)
    med = _models._genetic_medium(p, "medium", int(p.N), None)
    # medium condition: d/dz of g - N u_z  (here -(De + de))
    jz = lambda z, t: med.dz_jac(z, np.zeros(1), t)
    out.append(verify_contraction(jz, StateBox.cube(1, 0.0, 10.0), kind, target="medium:genetic",
                                  **opts))
    return out


def certify_model(name: str, params=None, extra: Optional[dict] = None,
                  box: Optional[dict] = None, kind: Optional[str] = None,
                  samples: Optional[dict] = None, seed: int = 0) -> dict:
    """Run the standard certification for a catalog model.

    Returns a JSON-ready dict with ``verdict`` ("pass"/"fail") and the list
    of underlying certificates and condition reports.
    """
    extra = dict(extra or {})
    if params is None or isinstance(params, dict):
        params = _models.make_params(name, params)
    opts = {"seed": seed}
    if samples:
        opts.update({k: int(v) for k, v in samples.items() if k in ("n_lowdisc", "n_random")})
    parts = []
    if name == "enzyme_substrate":
        fld = _models.enzyme_virtual(params)
        b = _box_from(box, 2, 0.0, 10.0)
        parts.append(verify_hierarchy(lambda x, t: fld.jacobian(x, t)[:1, :1],
                                      lambda x, t: fld.jacobian(x, t)[:1, 1:],
                                      lambda x, t: fld.jacobian(x, t)[1:, 1:],
                                      b, (1, 1), (kind or "L1",) * 2, target="enzyme_virtual",
                                      **opts))
    elif name in ("genetic_relax_osc", "two_cluster_genetic", "three_cluster_vdp"):
        parts.extend(_genetic_checks(params, "cells", box, kind or "L1", opts))
        if name == "three_cluster_vdp":
            vdp = extra.get("vdp") or _models.VdpParams()
            if isinstance(vdp, dict):
                vdp = _models.VdpParams(**vdp)
            _, _, gbar = _models.MEDIUM_INTRINSICS[vdp.g]
            parts.append(check_vdp_gain(vdp.K, vdp.alpha, gbar))
    elif name == "ahl_pathway":
        b = _box_from(box, 2, 0.0, 10.0 * params.x_thresh) if box else None
        parts.append(check_ahl_condition(params, b, seed=seed))
    elif name == "gain_coupled_hill":
        alpha = _models.hill_alpha(params)
        kmin = min_coupling_gain(alpha, params.N)
        parts.append(ConditionReport("gain_coupled_hill",
                                     {"gain": float(alpha - params.k * params.N)},
                                     [f"alpha = {alpha:.12g}, k_min = alpha/N = {kmin:.12g}"],
                                     {"alpha": alpha, "k_min": kmin, "k": params.k}))
    else:
        raise InputError(f"no certification recipe for model {name!r}")
    verdict = "pass" if all(p.passed for p in parts) else "fail"
    return {"schema": SCHEMA, "model": name, "verdict": verdict,
            "params": _models._params_dict(params), "parts": [p.to_dict() for p in parts]}
