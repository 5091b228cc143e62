"""Catalog of concrete quorum-sensing systems.

Every constructor returns an assembled :class:`~quorumsync.network.QuorumNetwork`
(or a plain :class:`~quorumsync.dynsys.VectorField` for the two-state AHL
pathway).  Parameter sets are frozen dataclasses; ``replace`` them to vary
a value.  :data:`REGISTRY` maps the public model names to their builders.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynsys import PeriodicSignal, VectorField
from .errors import InputError
from .network import (GainCouplingSpec, MediaGraph, MediumSpec, NodeGroupSpec, QuorumNetwork,
                      assemble_quorum, gain_quorum)

__all__ = [
    "EnzymeParams",
    "GeneticOscParams",
    "VdpParams",
    "AhlParams",
    "GainHillParams",
    "enzyme_substrate",
    "enzyme_virtual",
    "genetic_relax_osc",
    "genetic_node_jacobian",
    "two_cluster_genetic",
    "three_cluster_vdp",
    "vdp_jacobian",
    "vdp_jacobian_printed",
    "ahl_pathway",
    "ahl_equilibrium",
    "gain_coupled_hill",
    "hill_alpha",
    "ModelEntry",
    "REGISTRY",
    "get_model",
]

#: max over v >= 0 of v / (1 + v^2)^2, reached at v = 1/sqrt(3)
HILL2_SLOPE_PEAK = 3.0 * np.sqrt(3.0) / 16.0


def _sine(spec) -> Optional[PeriodicSignal]:
    """Forcing from ``None``, a PeriodicSignal, or a dict of sine parameters."""
    if spec is None or isinstance(spec, PeriodicSignal):
        return spec
    if isinstance(spec, dict):
        unknown = set(spec) - {"offset", "amplitude", "omega", "phase"}
        if unknown:
            raise InputError(f"unknown forcing keys {sorted(unknown)}")
        return PeriodicSignal.sine(**spec)
    raise InputError(f"cannot interpret forcing {spec!r}")


def _require_positive(obj, names):
    for n in names:
        v = getattr(obj, n)
        if not (np.isfinite(v) and v > 0):
            raise InputError(f"{type(obj).__name__}.{n} must be positive, got {v!r}")


def _require_count(obj, name):
    v = getattr(obj, name)
    if int(v) != v or v < 1:
        raise InputError(f"{type(obj).__name__}.{name} must be a positive integer, got {v!r}")


# -- enzyme / shared substrate ---------------------------------------------------


@dataclass(frozen=True)
class EnzymeParams:
    a: float = 1.0
    K1: float = 2.0
    K2: float = 1.0
    N: int = 3
    forcing: Optional[object] = field(default_factory=lambda: {"offset": 1.1, "amplitude": 1.0,
                                                               "omega": 0.1})

    def __post_init__(self):
        _require_positive(self, ["a", "K1", "K2"])
        _require_count(self, "N")


def enzyme_substrate(p: EnzymeParams = EnzymeParams()) -> QuorumNetwork:
    """``X_i' = -a X_i + K1 S/(K2+S)``, ``S' = -N K1 S/(K2+S) + r(t)``.

    The medium's aggregate is ``psi = sum_i 1 = N``: every enzyme consumes
    substrate at the same Michaelis-Menten rate regardless of its product.
    """
    a, K1, K2, N = p.a, p.K1, p.K2, int(p.N)

    def node(X, z, t):
        return -a * X + K1 * z[0] / (K2 + z[0])

    def medium(z, psi, t):
        return -psi * K1 * z / (K2 + z)

    grp = NodeGroupSpec("enzymes", 1, N, node, medium_input=lambda X: np.ones((X.shape[0], 1)),
                        dynamics_id="enzyme", state_names=("X",),
                        intrinsic=lambda X, t: -a * X,
                        node_jacobian=lambda x, z, t: np.array([[-a]]),
                        medium_jacobian=lambda x, z, t: np.array([[K1 * K2 / (K2 + z[0]) ** 2]]),
                        nonnegative=True)
    med = MediumSpec("substrate", 1, medium, forcing=_sine(p.forcing), dynamics_id="substrate",
                     state_names=("S",),
                     jacobian_z=lambda z, psi, t: np.array([[-psi[0] * K1 * K2 / (K2 + z[0]) ** 2]]),
                     nonnegative=True)
    return assemble_quorum([grp], [med], metadata={"model": "enzyme_substrate",
                                                   "params": _params_dict(p)})


def enzyme_virtual(p: EnzymeParams = EnzymeParams()) -> VectorField:
    """Two-state virtual system ``(y1, y2)`` with the hand-derived Jacobian."""
    a, K1, K2, N = p.a, p.K1, p.K2, int(p.N)
    r = _sine(p.forcing)

    def rhs(y, t):
        h = K1 * y[1] / (K2 + y[1])
        out = np.array([-a * y[0] + h, -N * h])
        if r is not None:
            out[1] += r(t)[0]
        return out

    def jac(y, t):
        s = K1 * K2 / (K2 + y[1]) ** 2
        return np.array([[-a, s], [0.0, -N * s]])

    return VectorField(2, rhs, jac, ("y1", "y2"))


# -- genetic relaxation oscillator ---------------------------------------------


@dataclass(frozen=True)
class GeneticOscParams:
    alpha1: float = 3.0
    alpha2: float = 4.5
    alpha3: float = 1.0
    alpha4: float = 4.0
    beta: float = 2.0
    gamma: float = 2.0
    eta: float = 2.0
    d1: float = 1.0
    d2: float = 1.0
    d3: float = 1.0
    eps: float = 0.01
    d: float = 2.0
    De: float = 1.0
    de: float = 1.0
    N: int = 10
    forcing: Optional[object] = None

    def __post_init__(self):
        _require_positive(self, ["beta", "gamma", "eta", "d1", "d2", "d3", "eps", "De", "de"])
        for n in ("alpha1", "alpha2", "alpha3", "alpha4", "d"):
            if not (np.isfinite(getattr(self, n)) and getattr(self, n) >= 0):
                raise InputError(f"GeneticOscParams.{n} must be nonnegative")
        _require_count(self, "N")


def _genetic_node_field(p: GeneticOscParams):
    a1, a2, a3, a4 = p.alpha1, p.alpha2, p.alpha3, p.alpha4
    be, ga, et = p.beta, p.gamma, p.eta
    d1, d2, d3, eps, d = p.d1, p.d2, p.d3, p.eps, p.d

    def intrinsic(X, t):
        u, v, w = X[:, 0], X[:, 1], X[:, 2]
        hu = 1.0 / (1.0 + u ** ga)
        du = a1 / (1.0 + v ** be) + a3 * w ** et / (1.0 + w ** et) - d1 * u
        dv = a2 * hu - d2 * v
        dw = eps * (a4 * hu - d3 * w)
        return np.column_stack([du, dv, dw])

    def node(X, z, t):
        out = intrinsic(X, t)
        out[:, 2] += 2.0 * d * (z[0] - X[:, 2])
        return out

    return node, intrinsic


def genetic_node_jacobian(p: GeneticOscParams, x) -> np.ndarray:
    """``d f/d x`` of one genetic node including the ``-2d`` coupling term."""
    u, v, w = (float(c) for c in x)
    be, ga, et = p.beta, p.gamma, p.eta

    def dhill(s, n):  # d/ds s^n/(1+s^n) = -d/ds 1/(1+s^n)
        return n * s ** (n - 1) / (1.0 + s ** n) ** 2

    du = -dhill(u, ga)
    return np.array([
        [-p.d1, -p.alpha1 * dhill(v, be), p.alpha3 * dhill(w, et)],
        [p.alpha2 * du, -p.d2, 0.0],
        [p.eps * p.alpha4 * du, 0.0, -p.eps * p.d3 - 2.0 * p.d],
    ])


def _genetic_group(p: GeneticOscParams, name: str, count: Optional[int] = None) -> NodeGroupSpec:
    node, intrinsic = _genetic_node_field(p)
    two_d = 2.0 * p.d
    return NodeGroupSpec(
        name, 3, int(count if count is not None else p.N), node,
        medium_input=lambda X: X[:, 2:3],
        dynamics_id="genetic_relax_osc", state_names=("u", "v", "w"), intrinsic=intrinsic,
        node_jacobian=lambda x, z, t: genetic_node_jacobian(p, x),
        medium_jacobian=lambda x, z, t: np.array([[0.0], [0.0], [two_d]]),
        nonnegative=True)


def _genetic_medium(p: GeneticOscParams, name: str, count: int, forcing) -> MediumSpec:
    De, de = p.De, p.de

    def g(z, psi, t):
        return De / count * (psi - count * z) - de * z

    return MediumSpec(name, 1, g, forcing=_sine(forcing), dynamics_id="genetic_medium",
                      state_names=("we",),
                      jacobian_z=lambda z, psi, t: np.array([[-De - de]]),
                      jacobian_psi=lambda z, psi, t: np.array([[De / count]]),
                      nonnegative=True)


def genetic_relax_osc(p: GeneticOscParams = GeneticOscParams()) -> QuorumNetwork:
    """N genetic relaxation oscillators sharing one extracellular medium.

    Node ``(u, v, w)``; medium ``w_e`` with ``(D_e/N) sum (w_i - w_e) - d_e w_e``
    plus the optional forcing ``r(t)``.
    """
    N = int(p.N)
    grp = _genetic_group(p, "cells")
    med = _genetic_medium(p, "medium", N, p.forcing)
    return assemble_quorum([grp], [med], metadata={"model": "genetic_relax_osc",
                                                   "params": _params_dict(p)})


def _linear_phi(K: float):
    return lambda z: K * np.asarray(z, dtype=float)


def two_cluster_genetic(p: GeneticOscParams = GeneticOscParams(d1=6.0, d2=2.0, N=5),
                        K: float = 0.1, forcing=None, phi: Optional[Callable] = None,
                        phi_id: Optional[str] = None) -> QuorumNetwork:
    """Two genetic clusters, each in its own medium; media coupled by ``phi``.

    Only medium 1 receives the forcing (``forcing`` overrides ``p.forcing``;
    the default is ``1 + sin(0.1 t)``).
    """
    if forcing is None:
        forcing = p.forcing if p.forcing is not None else {"offset": 1.0, "amplitude": 1.0,
                                                          "omega": 0.1}
    N = int(p.N)
    phi = phi if phi is not None else _linear_phi(K)
    cid = phi_id or f"linear:{K!r}"
    groups = [_genetic_group(p, "cluster1"), _genetic_group(p, "cluster2")]
    media = [_genetic_medium(p, "medium1", N, forcing), _genetic_medium(p, "medium2", N, None)]
    graph = MediaGraph(edges=(("medium1", "medium2"),),
                       coupling={"medium1": phi, "medium2": phi},
                       coupling_ids={"medium1": cid, "medium2": cid})
    return assemble_quorum(groups, media, graph,
                           {"cluster1": "medium1", "cluster2": "medium2"},
                           metadata={"model": "two_cluster_genetic", "K": K,
                                     "params": _params_dict(p)})


# -- Van der Pol cluster ---------------------------------------------------------


@dataclass(frozen=True)
class VdpParams:
    alpha: float = 1.0
    beta: float = 1.0
    omega: float = 1.0
    K: float = 2.5
    N_vdp: int = 2
    g: str = "sin"

    def __post_init__(self):
        _require_positive(self, ["alpha", "beta", "omega", "K"])
        _require_count(self, "N_vdp")
        if self.g not in MEDIUM_INTRINSICS:
            raise InputError(f"unknown medium intrinsic {self.g!r}; choose from "
                             f"{sorted(MEDIUM_INTRINSICS)}")


#: name -> (g, g', sup g')
MEDIUM_INTRINSICS = {
    "sin": (np.sin, np.cos, 1.0),
    "zero": (lambda z: 0.0 * z, lambda z: 0.0 * z, 0.0),
    "tanh": (np.tanh, lambda z: 1.0 / np.cosh(z) ** 2, 1.0),
}


def vdp_jacobian(p: VdpParams, y) -> np.ndarray:
    """Jacobian of one Van der Pol node field with the medium frozen."""
    y1, y2 = float(y[0]), float(y[1])
    return np.array([[0.0, 1.0],
                     [-2.0 * p.alpha * y1 * y2 - p.omega ** 2 - p.K, -p.alpha * (y1 ** 2 - p.beta)]])


def vdp_jacobian_printed(p: VdpParams, y) -> np.ndarray:
    """The Van der Pol block in the form published with the model (kept for reference)."""
    y1, y2 = float(y[0]), float(y[1])
    return np.array([[0.0, 1.0],
                     [-p.alpha * (y2 ** 2 - p.beta) - p.omega ** 2, -2.0 * p.alpha * y2 * y1 - p.K]])


def three_cluster_vdp(p_gen: GeneticOscParams = GeneticOscParams(d1=6.0, d2=2.0, N=5),
                      p_vdp: VdpParams = VdpParams(), phi_gain: float = 3.0,
                      phi: Optional[Callable] = None, phi_id: Optional[str] = None) -> QuorumNetwork:
    """Two genetic clusters and a Van der Pol cluster, media in a star around medium 3.

    VdP node: ``y1' = y2``, ``y2' = -alpha (y1^2 - beta) y2 - omega^2 y1 + K (w_e3 - y1)``.
    Medium 3: ``(K/N_vdp) sum (y2_i - w_e3) + g(w_e3)`` plus the media coupling.
    No forcing.
    """
    N = int(p_gen.N)
    Nv = int(p_vdp.N_vdp)
    al, be, om, K = p_vdp.alpha, p_vdp.beta, p_vdp.omega, p_vdp.K
    g_fn, g_der, _ = MEDIUM_INTRINSICS[p_vdp.g]

    def vdp_intrinsic(Y, t):
        y1, y2 = Y[:, 0], Y[:, 1]
        return np.column_stack([y2, -al * (y1 ** 2 - be) * y2 - om ** 2 * y1])

    def vdp_node(Y, z, t):
        out = vdp_intrinsic(Y, t)
        out[:, 1] += K * (z[0] - Y[:, 0])
        return out

    def medium3(z, psi, t):
        return K / Nv * (psi - Nv * z) + g_fn(z)

    vdp = NodeGroupSpec("vdp", 2, Nv, vdp_node, medium_input=lambda Y: Y[:, 1:2],
                        dynamics_id="van_der_pol", state_names=("y1", "y2"),
                        intrinsic=vdp_intrinsic,
                        node_jacobian=lambda y, z, t: vdp_jacobian(p_vdp, y),
                        medium_jacobian=lambda y, z, t: np.array([[0.0], [K]]))
    med3 = MediumSpec("medium3", 1, medium3, dynamics_id=f"vdp_medium:{p_vdp.g}",
                      state_names=("we",),
                      jacobian_z=lambda z, psi, t: np.array([[-K + g_der(z[0])]]),
                      jacobian_psi=lambda z, psi, t: np.array([[K / Nv]]))
    phi = phi if phi is not None else _linear_phi(phi_gain)
    cid = phi_id or f"linear:{phi_gain!r}"
    groups = [_genetic_group(p_gen, "cluster1"), _genetic_group(p_gen, "cluster2"), vdp]
    media = [_genetic_medium(p_gen, "medium1", N, None), _genetic_medium(p_gen, "medium2", N, None),
             med3]
    graph = MediaGraph(edges=(("medium1", "medium3"), ("medium2", "medium3")),
                       coupling={m: phi for m in ("medium1", "medium2", "medium3")},
                       coupling_ids={m: cid for m in ("medium1", "medium2", "medium3")})
    return assemble_quorum(groups, media, graph,
                           {"cluster1": "medium1", "cluster2": "medium2", "vdp": "medium3"},
                           metadata={"model": "three_cluster_vdp", "phi_gain": phi_gain,
                                     "params": _params_dict(p_gen), "vdp": _params_dict(p_vdp)})


# -- AHL pathway -------------------------------------------------------------------


@dataclass(frozen=True)
class AhlParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma_c: float = 1.0
    gamma_e: float = 1.0
    d1: float = 1.0
    d2: float = 1.0
    x_thresh: float = 1.0
    n: int = 2
    exchange_sign: str = "printed"

    def __post_init__(self):
        _require_positive(self, ["alpha", "gamma_c", "gamma_e", "d1", "d2", "x_thresh"])
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise InputError("AhlParams.beta must be nonnegative")
        _require_count(self, "n")
        if self.exchange_sign not in ("printed", "exchange"):
            raise InputError("exchange_sign must be 'printed' or 'exchange'")


def _ahl_parts(p: AhlParams):
    n, th = int(p.n), p.x_thresh
    s = -1.0 if p.exchange_sign == "printed" else 1.0

    def hill(x):
        xn = x ** n
        return p.beta * xn / (th ** n + xn)

    def dhill(x):
        return p.beta * n * th ** n * x ** (n - 1) / (th ** n + x ** n) ** 2

    return s, hill, dhill


def ahl_pathway(p: AhlParams = AhlParams()) -> VectorField:
    """Intra/extracellular AHL ``(x_c, x_e)``.

    ``x_c' = alpha + beta x_c^n/(x_thresh^n + x_c^n) - gamma_c x_c - d1 x_c - d2 x_e``
    ``x_e' = d1 x_c - d2 x_e - gamma_e x_e``

    ``exchange_sign="exchange"`` flips the ``d2 x_e`` term in the first
    equation to ``+d2 x_e`` (a mass-conserving exchange).
    """
    s, hill, dhill = _ahl_parts(p)

    def rhs(x, t):
        xc, xe = x[0], x[1]
        return np.array([p.alpha + hill(xc) - p.gamma_c * xc - p.d1 * xc + s * p.d2 * xe,
                         p.d1 * xc - p.d2 * xe - p.gamma_e * xe])

    def jac(x, t):
        return np.array([[dhill(x[0]) - p.gamma_c - p.d1, s * p.d2],
                         [p.d1, -p.d2 - p.gamma_e]])

    return VectorField(2, rhs, jac, ("xc", "xe"))


def ahl_equilibrium(p: AhlParams) -> np.ndarray:
    """Equilibrium when ``beta = 0`` (the system is then linear)."""
    if p.beta != 0:
        raise InputError("closed-form equilibrium needs beta = 0")
    s = -1.0 if p.exchange_sign == "printed" else 1.0
    A = np.array([[-p.gamma_c - p.d1, s * p.d2], [p.d1, -p.d2 - p.gamma_e]])
    return np.linalg.solve(A, np.array([-p.alpha, 0.0]))


# -- gain-coupled Hill nodes ----------------------------------------------------------


@dataclass(frozen=True)
class GainHillParams:
    """``x_i' = a0 - x_i + b x_i^2/(1+x_i^2) + kN (z - x_i)``, ``z' = delta (mean(x) - z)``."""

    k: float = 0.5
    N: int = 8
    b: float = 4.0
    a0: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        _require_positive(self, ["k", "delta"])
        _require_count(self, "N")
        if not (np.isfinite(self.b) and self.b >= 0 and np.isfinite(self.a0) and self.a0 >= 0):
            raise InputError("b and a0 must be nonnegative")


def hill_alpha(p: GainHillParams) -> float:
    """``sup_x d/dx (a0 - x + b x^2/(1+x^2)) = -1 + 3 sqrt(3) b / 8``."""
    return -1.0 + 2.0 * p.b * HILL2_SLOPE_PEAK


def gain_coupled_hill(p: GainHillParams = GainHillParams()) -> QuorumNetwork:
    """Bistable Hill nodes coupled through a mean-field medium with gain ``kN``."""
    b, a0, delta, N = p.b, p.a0, p.delta, int(p.N)

    def f(X, t):
        return a0 - X + b * X ** 2 / (1.0 + X ** 2)

    def fjac(x, t):
        return np.array([[-1.0 + 2.0 * b * x[0] / (1.0 + x[0] ** 2) ** 2]])

    def g(z, psi, t):
        return delta * (psi / N - z)

    net = gain_quorum(f, g, GainCouplingSpec(p.k), 1, N, node_jacobian=fjac,
                      metadata={"model": "gain_coupled_hill", "params": _params_dict(p),
                                "alpha": hill_alpha(p)},
                      node_names=("x",), medium_names=("z",), dynamics_id="hill",
                      nonnegative=True)
    return net


# -- registry --------------------------------------------------------------------------


def _params_dict(p) -> dict:
    out = {}
    for f in dataclasses.fields(p):
        v = getattr(p, f.name)
        if isinstance(v, PeriodicSignal):
            v = {"signal": v.name, **(v.params or {})}
        out[f.name] = v
    return out


@dataclass(frozen=True)
class ModelEntry:
    """Public model name, its parameter classes and its builder.

    ``build(params, extra)`` takes the main parameter object and a dict of
    secondary settings (e.g. the media coupling gain).
    """

    name: str
    params: type
    build: Callable
    extra_params: dict = field(default_factory=dict)
    observable: Optional[str] = None
    description: str = ""


def _build_two_cluster(p, extra):
    return two_cluster_genetic(p, K=extra.get("K", 0.1), forcing=extra.get("forcing"))


def _build_three_cluster(p, extra):
    vdp = extra.get("vdp", VdpParams())
    if isinstance(vdp, dict):
        vdp = VdpParams(**vdp)
    return three_cluster_vdp(p, vdp, phi_gain=extra.get("phi_gain", 3.0))


REGISTRY: dict[str, ModelEntry] = {
    "enzyme_substrate": ModelEntry("enzyme_substrate", EnzymeParams,
                                   lambda p, e: enzyme_substrate(p), {}, "enzymes[*].X",
                                   "N enzymes sharing one forced substrate"),
    "genetic_relax_osc": ModelEntry("genetic_relax_osc", GeneticOscParams,
                                    lambda p, e: genetic_relax_osc(p), {}, "cells[*].w",
                                    "genetic relaxation oscillators in one medium"),
    "two_cluster_genetic": ModelEntry("two_cluster_genetic", GeneticOscParams, _build_two_cluster,
                                      {"K": 0.1, "forcing": None}, "cluster1[*].w",
                                      "two genetic clusters in coupled media, medium 1 forced"),
    "three_cluster_vdp": ModelEntry("three_cluster_vdp", GeneticOscParams, _build_three_cluster,
                                    {"phi_gain": 3.0, "vdp": None}, "cluster1[*].w",
                                    "two genetic clusters and a Van der Pol cluster"),
    "ahl_pathway": ModelEntry("ahl_pathway", AhlParams, lambda p, e: ahl_pathway(p), {}, None,
                              "two-state AHL pathway"),
    "gain_coupled_hill": ModelEntry("gain_coupled_hill", GainHillParams,
                                    lambda p, e: gain_coupled_hill(p), {}, "nodes[*].x",
                                    "bistable Hill nodes with kN mean-field gain"),
}

_DEFAULT_GENETIC = {
    "two_cluster_genetic": {"d1": 6.0, "d2": 2.0, "N": 5},
    "three_cluster_vdp": {"d1": 6.0, "d2": 2.0, "N": 5},
}


def get_model(name: str) -> ModelEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise InputError(f"unknown model {name!r}; available: {sorted(REGISTRY)}") from None


def make_params(name: str, overrides: Optional[dict] = None):
    """Parameter object for ``name`` with catalog defaults and ``overrides`` applied."""
    entry = get_model(name)
    base = dict(_DEFAULT_GENETIC.get(name, {}))
    base.update(overrides or {})
    allowed = {f.name for f in dataclasses.fields(entry.params)}
    unknown = set(base) - allowed
    if unknown:
        raise InputError(f"unknown parameters for {name}: {sorted(unknown)}")
    return entry.params(**base)


def build_model(name: str, overrides: Optional[dict] = None, extra: Optional[dict] = None):
    entry = get_model(name)
    extra = dict(extra or {})
    unknown = set(extra) - set(entry.extra_params)
    if unknown:
        raise InputError(f"unknown settings for {name}: {sorted(unknown)}")
    return entry.build(make_params(name, overrides), extra)
