"""Assembly of quorum-sensing networks into a single flattened ODE.

A network is made of node groups (each group shares one node field), media
(each with its own dynamics, driven by an aggregate of the attached nodes),
an optional graph of diffusive couplings between media, and optional
periodic forcing on media.  The flattened state is laid out as

    [group 0 nodes | group 1 nodes | ... | medium 0 | medium 1 | ...]

with nodes contiguous inside a group.  Directly coupled networks
(``x_i' = f(x_i) + sum_j a_ij [h(x_j) - h(x_i)]``) are built with
:func:`assemble_coupled`.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .dynsys import PeriodicSignal, VectorField, jacobian_fd
from .errors import AssemblyError, InputError, InvariantError

__all__ = [
    "NodeGroupSpec",
    "MediumSpec",
    "MediaGraph",
    "GroupLayout",
    "MediumLayout",
    "QuorumNetwork",
    "assemble_quorum",
    "DiffusiveCouplingSpec",
    "GainCouplingSpec",
    "diffusive_quorum",
    "gain_quorum",
    "CoupledNetworkSpec",
    "CoupledNetwork",
    "assemble_coupled",
    "EquivalenceReport",
    "input_equivalence_check",
]

# tolerances for sampled structural checks on coupling functions
_DIAG_TOL = 1e-9
_MAX_COUPLING_SLOPE = 1e6


def _as_names(names, dim: int, prefix: str) -> tuple[str, ...]:
    if names is None:
        return tuple(f"{prefix}{k}" for k in range(dim)) if dim > 1 else (prefix,)
    names = tuple(str(s) for s in names)
    if len(names) != dim:
        raise AssemblyError(f"{len(names)} state names given for dimension {dim}")
    return names


@dataclass(frozen=True)
class NodeGroupSpec:
    """A group of ``count`` identical nodes of dimension ``node_dim``.

    ``field(X, z, t)`` is vectorized: ``X`` has shape ``(count, node_dim)``,
    ``z`` is the state of the medium the group is attached to, and the
    result has the shape of ``X``.  ``medium_input(X)`` returns the per-node
    contribution to the medium's aggregate, shape ``(count, medium_dim)``.

    ``intrinsic(X, t)`` is the uncoupled node dynamics (used for the
    distortion statistic); ``node_jacobian(x, z, t)`` and
    ``medium_jacobian(x, z, t)`` are optional analytic derivatives of a
    single node's field with respect to ``x`` and ``z``.
    """

    name: str
    node_dim: int
    count: int
    field: Callable
    medium_input: Optional[Callable] = None
    dynamics_id: Optional[str] = None
    state_names: Optional[tuple[str, ...]] = None
    intrinsic: Optional[Callable] = None
    node_jacobian: Optional[Callable] = None
    medium_jacobian: Optional[Callable] = None
    input_jacobian: Optional[Callable] = None
    nonnegative: bool = False

    def __post_init__(self):
        if int(self.node_dim) < 1:
            raise AssemblyError(f"group {self.name!r}: node_dim must be >= 1")
        if int(self.count) < 1:
            raise AssemblyError(f"group {self.name!r}: count must be >= 1")
        object.__setattr__(self, "node_dim", int(self.node_dim))
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "state_names", _as_names(self.state_names, self.node_dim, "x"))
        if self.dynamics_id is None:
            object.__setattr__(self, "dynamics_id", self.name)

    def node_field(self, x, z, t: float = 0.0) -> np.ndarray:
        """Field of a single node, ``f_p(x, z, t)``."""
        x = np.asarray(x, dtype=float).reshape(1, self.node_dim)
        return np.asarray(self.field(x, np.atleast_1d(np.asarray(z, dtype=float)), t),
                          dtype=float).reshape(self.node_dim)

    def node_jac(self, x, z, t: float = 0.0) -> np.ndarray:
        """``d f_p / d x`` at one node (analytic if available)."""
        x = np.asarray(x, dtype=float)
        if self.node_jacobian is not None:
            return np.asarray(self.node_jacobian(x, np.atleast_1d(z), t), dtype=float)
        return jacobian_fd(lambda y, s: self.node_field(y, z, s), x, t)

    def coupling_jac(self, x, z, t: float = 0.0) -> np.ndarray:
        """``d f_p / d z`` at one node (analytic if available)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.medium_jacobian is not None:
            return np.asarray(self.medium_jacobian(np.asarray(x, dtype=float), z, t), dtype=float)
        return jacobian_fd(lambda w, s: self.node_field(x, w, s), z, t)


@dataclass(frozen=True)
class MediumSpec:
    """A medium of dimension ``dim`` with dynamics ``field(z, psi, t)``.

    ``psi`` is the aggregate of the attached nodes: by default the sum of
    ``medium_input`` over every attached node.  A custom
    ``aggregation(Xs)`` receives the list of attached group state arrays
    (declaration order) and returns ``psi`` directly.
    """

    name: str
    dim: int
    field: Callable
    aggregation: Optional[Callable] = None
    forcing: Optional[PeriodicSignal] = None
    dynamics_id: Optional[str] = None
    state_names: Optional[tuple[str, ...]] = None
    jacobian_z: Optional[Callable] = None
    jacobian_psi: Optional[Callable] = None
    nonnegative: bool = False

    def __post_init__(self):
        if int(self.dim) < 1:
            raise AssemblyError(f"medium {self.name!r}: dim must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "state_names", _as_names(self.state_names, self.dim, "z"))
        if self.dynamics_id is None:
            object.__setattr__(self, "dynamics_id", self.name)
        if self.forcing is not None and self.forcing.dim != self.dim:
            raise AssemblyError(f"medium {self.name!r}: forcing has dim {self.forcing.dim}")

    def medium_field(self, z, psi, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.field(np.atleast_1d(np.asarray(z, dtype=float)),
                                     np.atleast_1d(np.asarray(psi, dtype=float)), t),
                          dtype=float).reshape(self.dim)

    def dz_jac(self, z, psi, t: float = 0.0) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.jacobian_z is not None:
            return np.asarray(self.jacobian_z(z, np.atleast_1d(psi), t), dtype=float)
        return jacobian_fd(lambda w, s: self.medium_field(w, psi, s), z, t)

    def dpsi_jac(self, z, psi, t: float = 0.0) -> np.ndarray:
        psi = np.atleast_1d(np.asarray(psi, dtype=float))
        if self.jacobian_psi is not None:
            return np.asarray(self.jacobian_psi(np.atleast_1d(z), psi, t), dtype=float)
        return jacobian_fd(lambda q, s: self.medium_field(z, q, s), psi, t)


def check_diagonal_coupling(h: Callable, dim: int, lower: float = -10.0, upper: float = 10.0,
                            samples: int = 64, seed: int = 0, error=AssemblyError,
                            what: str = "coupling") -> float:
    """Sampled check that ``h`` has a diagonal, nonnegative, bounded Jacobian.

    Returns the largest diagonal entry seen; raises ``error`` otherwise.
    """
    rng = np.random.default_rng([seed, dim])
    pts = rng.uniform(lower, upper, (samples, dim))
    pts = np.vstack([pts, np.zeros(dim)])
    top = 0.0
    for z in pts:
        D = jacobian_fd(lambda w, t: np.asarray(h(w), dtype=float).reshape(dim), z)
        off = D - np.diag(np.diag(D))
        if np.max(np.abs(off), initial=0.0) > _DIAG_TOL * max(1.0, np.max(np.abs(D))):
            raise error(f"{what} Jacobian is not diagonal at {z}")
        if np.min(np.diag(D)) < -_DIAG_TOL:
            raise error(f"{what} Jacobian has a negative diagonal entry at {z}")
        top = max(top, float(np.max(np.diag(D))))
    if top > _MAX_COUPLING_SLOPE:
        raise error(f"{what} Jacobian is unbounded on the sampled range (max {top:.3g})")
    return top


@dataclass(frozen=True)
class MediaGraph:
    """Diffusive links between media.

    ``edges`` are ``(p, q)`` medium-name pairs.  Undirected by default, so
    each edge adds ``q`` to the neighbours of ``p`` and vice versa.  With
    ``directed=True`` an edge ``(p, q)`` means ``p`` receives from ``q``.
    Medium ``p`` gets ``sum_{j in N_p} [phi_p(z_j) - phi_p(z_p)]``.
    ``coupling`` maps medium name to ``phi_p``; ``coupling_ids`` names each
    coupling for the input-equivalence check.
    """

    edges: tuple[tuple[str, str], ...] = ()
    coupling: Mapping[str, Callable] = field(default_factory=dict)
    coupling_ids: Mapping[str, str] = field(default_factory=dict)
    directed: bool = False
    check_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        for a, b in self.edges:
            if a == b:
                raise AssemblyError(f"self-loop on medium {a!r}")

    def neighbors(self, names: Sequence[str]) -> dict[str, tuple[str, ...]]:
        nb: dict[str, list[str]] = {n: [] for n in names}
        for a, b in self.edges:
            if a not in nb or b not in nb:
                raise AssemblyError(f"edge ({a!r}, {b!r}) references an unknown medium")
            nb[a].append(b)
            if not self.directed:
                nb[b].append(a)
        return {k: tuple(v) for k, v in nb.items()}

    def coupling_id(self, name: str) -> str:
        if name in self.coupling_ids:
            return self.coupling_ids[name]
        return "phi" if name in self.coupling else "none"


@dataclass(frozen=True)
class GroupLayout:
    name: str
    offset: int
    count: int
    node_dim: int
    medium: str

    @property
    def size(self) -> int:
        return self.count * self.node_dim

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


@dataclass(frozen=True)
class MediumLayout:
    name: str
    offset: int
    dim: int

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.dim)


class QuorumNetwork:
    """Immutable assembled network; use :func:`assemble_quorum` to build one."""

    def __init__(self, groups, media, graph, attachments, metadata=None):
        self.groups: tuple[NodeGroupSpec, ...] = tuple(groups)
        self.media: tuple[MediumSpec, ...] = tuple(media)
        self.graph: MediaGraph = graph
        self.attachments: dict[str, str] = dict(attachments)
        self.metadata: dict = dict(metadata or {})

        off = 0
        gl = []
        for g in self.groups:
            gl.append(GroupLayout(g.name, off, g.count, g.node_dim, self.attachments[g.name]))
            off += g.count * g.node_dim
        ml = []
        for m in self.media:
            ml.append(MediumLayout(m.name, off, m.dim))
            off += m.dim
        self.group_layout: tuple[GroupLayout, ...] = tuple(gl)
        self.medium_layout: tuple[MediumLayout, ...] = tuple(ml)
        self.dim: int = off
        self._glay = {g.name: g for g in gl}
        self._mlay = {m.name: m for m in ml}
        self._groups = {g.name: g for g in self.groups}
        self._media = {m.name: m for m in self.media}
        self.neighbors = graph.neighbors([m.name for m in self.media])

        labels = []
        for g, lay in zip(self.groups, gl):
            for i in range(g.count):
                labels.extend(f"{g.name}[{i}].{s}" for s in g.state_names)
        for m in self.media:
            labels.extend(f"{m.name}.{s}" if m.dim > 1 or m.state_names[0] != m.name else m.name
                          for s in m.state_names)
        self.labels: tuple[str, ...] = tuple(labels)

        mask = np.zeros(self.dim, dtype=bool)
        for lay in gl:
            mask[lay.slice] = True
        self.node_mask = mask
        mask.setflags(write=False)

        # precomputed plan for the right-hand side
        self._attached = {m.name: [g for g in self.groups if self.attachments[g.name] == m.name]
                          for m in self.media}
        self.field = VectorField(self.dim, lambda x, t: self.rhs(t, x), None, self.labels)

    # -- layout helpers --------------------------------------------------
    def group(self, name: str) -> NodeGroupSpec:
        try:
            return self._groups[name]
        except KeyError:
            raise InputError(f"unknown group {name!r}") from None

    def medium(self, name: str) -> MediumSpec:
        try:
            return self._media[name]
        except KeyError:
            raise InputError(f"unknown medium {name!r}") from None

    def group_slice(self, name: str) -> slice:
        self.group(name)
        return self._glay[name].slice

    def medium_slice(self, name: str) -> slice:
        self.medium(name)
        return self._mlay[name].slice

    def group_states(self, Y, name: str) -> np.ndarray:
        """Node states of group ``name`` from a state vector or a (T, dim) matrix.

        Returns shape ``(count, node_dim)`` or ``(T, count, node_dim)``.
        """
        lay = self._glay[self.group(name).name]
        Y = np.asarray(Y, dtype=float)
        block = Y[..., lay.slice]
        return block.reshape(Y.shape[:-1] + (lay.count, lay.node_dim))

    def medium_states(self, Y, name: str) -> np.ndarray:
        return np.asarray(Y, dtype=float)[..., self.medium_slice(name)]

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    @property
    def medium_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.media)

    def nonnegative_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for g in self.groups:
            if g.nonnegative:
                mask[self.group_slice(g.name)] = True
        for m in self.media:
            if m.nonnegative:
                mask[self.medium_slice(m.name)] = True
        return mask

    def uses_default_aggregation(self) -> bool:
        return all(m.aggregation is None for m in self.media)

    # -- evaluation ------------------------------------------------------
    def psi(self, y, medium: str) -> np.ndarray:
        m = self.medium(medium)
        Xs = [self.group_states(y, g.name) for g in self._attached[m.name]]
        if m.aggregation is not None:
            return np.atleast_1d(np.asarray(m.aggregation(Xs), dtype=float))
        total = np.zeros(m.dim)
        for g, X in zip(self._attached[m.name], Xs):
            total += np.asarray(g.medium_input(X), dtype=float).reshape(g.count, m.dim).sum(axis=0)
        return total

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        """Flattened right-hand side, ``dy/dt`` at ``(t, y)``."""
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        zs = {m.name: y[lay.slice] for m, lay in zip(self.media, self.medium_layout)}
        for g, lay in zip(self.groups, self.group_layout):
            X = y[lay.slice].reshape(lay.count, lay.node_dim)
            out[lay.slice] = np.asarray(g.field(X, zs[lay.medium], t), dtype=float).ravel()
        g_phi = self.graph.coupling
        for m, lay in zip(self.media, self.medium_layout):
            z = zs[m.name]
            dz = m.medium_field(z, self.psi(y, m.name), t)
            nbrs = self.neighbors[m.name]
            if nbrs and m.name in g_phi:
                phi = g_phi[m.name]
                own = np.asarray(phi(z), dtype=float)
                for j in nbrs:
                    dz = dz + np.asarray(phi(zs[j]), dtype=float) - own
            if m.forcing is not None:
                dz = dz + m.forcing(t)
            out[lay.slice] = dz
        return out

    def __call__(self, y, t: float = 0.0) -> np.ndarray:
        return self.rhs(t, y)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "groups": [{"name": l.name, "offset": l.offset, "count": l.count,
                        "node_dim": l.node_dim, "medium": l.medium} for l in self.group_layout],
            "media": [{"name": l.name, "offset": l.offset, "dim": l.dim,
                       "forced": self.medium(l.name).forcing is not None}
                      for l in self.medium_layout],
            "edges": [list(e) for e in self.graph.edges],
        }


def assemble_quorum(groups: Sequence[NodeGroupSpec], media: Sequence[MediumSpec],
                    graph: Optional[MediaGraph] = None,
                    attachments: Optional[Mapping[str, str]] = None,
                    metadata: Optional[dict] = None, probe_seed: int = 0) -> QuorumNetwork:
    """Validate the pieces and build a :class:`QuorumNetwork`.

    With a single medium, ``attachments`` may be omitted.
    """
    groups = list(groups)
    media = list(media)
    graph = graph if graph is not None else MediaGraph()
    if not groups or not media:
        raise AssemblyError("a network needs at least one group and one medium")
    gnames = [g.name for g in groups]
    mnames = [m.name for m in media]
    for names, what in ((gnames, "group"), (mnames, "medium")):
        dup = [k for k, c in Counter(names).items() if c > 1]
        if dup:
            raise AssemblyError(f"duplicate {what} names: {dup}")
    if set(gnames) & set(mnames):
        raise AssemblyError("group and medium names must be distinct")
    if attachments is None:
        if len(media) != 1:
            raise AssemblyError("attachments are required with more than one medium")
        attachments = {g: mnames[0] for g in gnames}
    attachments = dict(attachments)
    for g in gnames:
        if g not in attachments:
            raise AssemblyError(f"group {g!r} is not attached to a medium")
        if attachments[g] not in mnames:
            raise AssemblyError(f"group {g!r} is attached to unknown medium {attachments[g]!r}")
    extra = set(attachments) - set(gnames)
    if extra:
        raise AssemblyError(f"attachments reference unknown groups: {sorted(extra)}")
    unknown_phi = set(graph.coupling) - set(mnames)
    if unknown_phi:
        raise AssemblyError(f"coupling given for unknown media: {sorted(unknown_phi)}")

    mdim = {m.name: m.dim for m in media}
    # probe every callable once at a neutral point so dimension errors surface here
    for g in groups:
        d = mdim[attachments[g.name]]
        X = np.ones((g.count, g.node_dim))
        z = np.ones(d)
        try:
            out = np.asarray(g.field(X, z, 0.0), dtype=float)
        except Exception as exc:
            raise AssemblyError(f"group {g.name!r}: node field failed on a probe state: {exc}") from exc
        if out.shape != X.shape:
            raise AssemblyError(f"group {g.name!r}: node field returned {out.shape}, expected {X.shape}")
        owner = next(m for m in media if m.name == attachments[g.name])
        if owner.aggregation is None:
            if g.medium_input is None:
                raise AssemblyError(f"group {g.name!r} has no medium_input for the default sum")
            u = np.asarray(g.medium_input(X), dtype=float)
            if u.size != g.count * d:
                raise AssemblyError(f"group {g.name!r}: medium_input returned {u.shape}, "
                                    f"expected ({g.count}, {d})")
    net = QuorumNetwork(groups, media, graph, attachments, metadata)
    for m in media:
        try:
            psi = net.psi(np.ones(net.dim), m.name)
            m.medium_field(np.ones(m.dim), psi, 0.0)
        except AssemblyError:
            raise
        except Exception as exc:
            raise AssemblyError(f"medium {m.name!r}: field failed on a probe state: {exc}") from exc
    for name, phi in graph.coupling.items():
        lo, hi = graph.check_range
        check_diagonal_coupling(phi, mdim[name], lo, hi, seed=probe_seed,
                                what=f"media coupling of {name!r}")
    return net


# -- builders for the two standard coupling styles ---------------------------


@dataclass(frozen=True)
class DiffusiveCouplingSpec:
    """``x' = f(x,t) + k_z(z) - k_x(x)``, ``z' = g(z,t) + sum_i [u_x(x_i) - u_z(z)]``."""

    k_z: Callable
    k_x: Callable
    u_x: Callable
    u_z: Callable


@dataclass(frozen=True)
class GainCouplingSpec:
    """``x_i' = f(x_i, t) + k N (z - x_i)`` with node and medium of equal dimension."""

    k: float
    scale_by_n: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise AssemblyError("gain k must be positive")

    def effective(self, count: int) -> float:
        return self.k * count if self.scale_by_n else self.k


def diffusive_quorum(f: Callable, g: Callable, coupling: DiffusiveCouplingSpec, node_dim: int,
                     medium_dim: int, count: int, forcing: Optional[PeriodicSignal] = None,
                     group_name: str = "nodes", medium_name: str = "medium",
                     node_names=None, medium_names=None) -> QuorumNetwork:
    """Single-medium network with the additive diffusive coupling form.

    ``f(X, t)`` is vectorized over nodes; ``g(z, t)`` acts on the medium.
    """
    c = coupling

    def node_field(X, z, t):
        return f(X, t) + np.asarray(c.k_z(z), dtype=float)[None, :] - c.k_x(X)

    def medium_field(z, psi, t):
        return np.asarray(g(z, t), dtype=float) + psi - count * np.asarray(c.u_z(z), dtype=float)

    grp = NodeGroupSpec(group_name, node_dim, count, node_field, medium_input=c.u_x,
                        state_names=node_names, intrinsic=f)
    med = MediumSpec(medium_name, medium_dim, medium_field, forcing=forcing, state_names=medium_names)
    return assemble_quorum([grp], [med])


def gain_quorum(f: Callable, g: Callable, coupling: GainCouplingSpec, dim: int, count: int,
                node_jacobian: Optional[Callable] = None, medium_input: Optional[Callable] = None,
                forcing: Optional[PeriodicSignal] = None, metadata: Optional[dict] = None,
                group_name: str = "nodes", medium_name: str = "medium",
                node_names=None, medium_names=None, dynamics_id: Optional[str] = None,
                nonnegative: bool = False) -> QuorumNetwork:
    """Single-medium network ``x_i' = f(x_i,t) + kN(z - x_i)``, ``z' = g(z, psi, t)``.

    ``f(X, t)`` is vectorized over nodes; ``psi = sum_i u(x_i)`` with
    ``u = medium_input`` (identity by default).
    """
    kN = coupling.effective(count)

    def node_field(X, z, t):
        return f(X, t) + kN * (z[None, :] - X)

    jac = None
    if node_jacobian is not None:
        jac = lambda x, z, t: node_jacobian(x, t) - kN * np.eye(dim)
    u = medium_input if medium_input is not None else (lambda X: X)
    grp = NodeGroupSpec(group_name, dim, count, node_field, medium_input=u,
                        state_names=node_names, intrinsic=f, node_jacobian=jac,
                        medium_jacobian=lambda x, z, t: kN * np.eye(dim),
                        dynamics_id=dynamics_id, nonnegative=nonnegative)
    med = MediumSpec(medium_name, dim, g, forcing=forcing, state_names=medium_names)
    meta = {"gain": coupling.k, "kN": kN}
    meta.update(metadata or {})
    return assemble_quorum([grp], [med], metadata=meta)


# -- directly coupled groups -------------------------------------------------


@dataclass(frozen=True)
class CoupledNetworkSpec:
    """Nodes ``x_i' = f_{g(i)}(x_i, t) + sum_j a_ij [h_{g(i)}(x_j) - h_{g(i)}(x_i)]``.

    Parameters
    ----------
    node_dim : int
        Common node dimension.
    membership : sequence of str
        Group name of each node (defines ``g(i)``).
    dynamics : mapping
        Group name -> ``f(x, t)`` for a single node.
    couplings : mapping
        Group name -> ``h(x)``.
    adjacency : (N, N) array
        Nonnegative weights; ``a_ij > 0`` makes ``j`` a neighbour of ``i``.
    """

    node_dim: int
    membership: tuple[str, ...]
    dynamics: Mapping[str, Callable]
    couplings: Mapping[str, Callable]
    adjacency: np.ndarray
    check_range: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        n = len(self.membership)
        if A.shape != (n, n):
            raise AssemblyError(f"adjacency is {A.shape}, expected ({n}, {n})")
        if np.any(A < 0) or not np.all(np.isfinite(A)):
            raise AssemblyError("adjacency weights must be finite and nonnegative")
        if np.any(np.diag(A) != 0):
            raise AssemblyError("adjacency must have a zero diagonal")
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "membership", tuple(self.membership))
        for grp in set(self.membership):
            if grp not in self.dynamics or grp not in self.couplings:
                raise AssemblyError(f"group {grp!r} lacks dynamics or coupling")


class CoupledNetwork:
    """Assembled directly coupled network; ``field`` is the flattened VectorField."""

    def __init__(self, spec: CoupledNetworkSpec):
        self.spec = spec
        n = spec.node_dim
        N = len(spec.membership)
        self.count = N
        self.node_dim = n
        A = spec.adjacency
        self.laplacian = np.diag(A.sum(axis=1)) - A
        self._f = [spec.dynamics[g] for g in spec.membership]
        self._h = [spec.couplings[g] for g in spec.membership]
        labels = tuple(f"x[{i}].{k}" for i in range(N) for k in range(n))
        self.field = VectorField(N * n, self._rhs, self._jac, labels)

    def _rhs(self, x, t):
        n = self.node_dim
        X = x.reshape(self.count, n)
        A = self.spec.adjacency
        out = np.empty_like(X)
        for i in range(self.count):
            h = self._h[i]
            hi = np.asarray(h(X[i]), dtype=float)
            acc = np.asarray(self._f[i](X[i], t), dtype=float).copy()
            for j in np.nonzero(A[i])[0]:
                acc += A[i, j] * (np.asarray(h(X[j]), dtype=float) - hi)
            out[i] = acc
        return out.ravel()

    def _dh(self, i: int, x) -> np.ndarray:
        return jacobian_fd(lambda y, t: self._h[i](y), x)

    def ltilde(self, x) -> np.ndarray:
        """Block matrix with ``(i, j)`` block ``l_ij * dh_{g(i)}/dx (x_j)``.

        The coupling part of the Jacobian is ``-ltilde(x)``.
        """
        n = self.node_dim
        X = np.asarray(x, dtype=float).reshape(self.count, n)
        L = self.laplacian
        out = np.zeros((self.count * n, self.count * n))
        for i in range(self.count):
            for j in range(self.count):
                if L[i, j] != 0:
                    out[i * n:(i + 1) * n, j * n:(j + 1) * n] = L[i, j] * self._dh(i, X[j])
        return out

    def _jac(self, x, t):
        n = self.node_dim
        X = x.reshape(self.count, n)
        J = -self.ltilde(x)
        for i in range(self.count):
            fi = self._f[i]
            J[i * n:(i + 1) * n, i * n:(i + 1) * n] += jacobian_fd(lambda y, s: fi(y, s), X[i], t)
        return J

    def __call__(self, x, t: float = 0.0):
        return self.field(x, t)


def assemble_coupled(spec: CoupledNetworkSpec, seed: int = 0) -> CoupledNetwork:
    """Build a :class:`CoupledNetwork`, checking every ``h`` for a diagonal,
    nonnegative, bounded Jacobian (raises :class:`InvariantError`)."""
    lo, hi = spec.check_range
    for name, h in spec.couplings.items():
        if name in set(spec.membership):
            check_diagonal_coupling(h, spec.node_dim, lo, hi, seed=seed, error=InvariantError,
                                    what=f"coupling of group {name!r}")
    return CoupledNetwork(spec)


# -- input equivalence -------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of :func:`input_equivalence_check`.

    ``classes`` partitions the media into input-equivalence classes.
    ``verdict`` is True iff every claimed set lies inside one class;
    ``witness`` describes the first distinguishing feature otherwise.
    """

    verdict: bool
    classes: tuple[tuple[str, ...], ...]
    witness: Optional[dict] = None
    include_forcing: bool = False

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "classes": [list(c) for c in self.classes],
                "witness": self.witness, "include_forcing": self.include_forcing}


def _forcing_id(sig: Optional[PeriodicSignal]):
    if sig is None:
        return None
    if sig.params is not None:
        return (sig.name, tuple(sorted(sig.params.items())))
    return (sig.name, sig.period, id(sig.func))


def _medium_signatures(net: QuorumNetwork, include_forcing: bool) -> dict:
    sig = {}
    for m in net.media:
        pop = Counter((g.dynamics_id, g.count) for g in net.groups if net.attachments[g.name] == m.name)
        entry = {
            "dynamics": m.dynamics_id,
            "population": tuple(sorted(pop.items())),
        }
        if include_forcing:
            entry["forcing"] = _forcing_id(m.forcing)
        sig[m.name] = entry
    return sig


def input_equivalence_check(net: QuorumNetwork, claimed: Optional[Sequence[Sequence[str]]] = None,
                            include_forcing: bool = False) -> EquivalenceReport:
    """Input equivalence of media at the autonomous level.

    Each medium together with its attached population is one node of the
    autonomous level.  Its class is its dynamics id plus the multiset of
    ``(group dynamics id, count)`` attached to it.  Two media of one class
    are input-equivalent when their in-neighbourhoods agree: same multiset
    of ``(coupling id, neighbour class)`` and, for neighbours of a
    different class, the very same neighbours.

    Exogenous forcing is not part of the autonomous level, so it is ignored
    unless ``include_forcing`` is set.
    """
    local = _medium_signatures(net, include_forcing)
    cls_of = {name: repr(sorted(v.items())) for name, v in local.items()}
    sig = {}
    for m in net.media:
        cid = net.graph.coupling_id(m.name)
        nbrs = net.neighbors[m.name]
        same = tuple(sorted((cid, cls_of[j]) for j in nbrs if cls_of[j] == cls_of[m.name]))
        cross = tuple(sorted((cid, j) for j in nbrs if cls_of[j] != cls_of[m.name]))
        sig[m.name] = (cls_of[m.name], same, cross)

    classes: dict = {}
    for name in net.medium_names:
        classes.setdefault(sig[name], []).append(name)
    class_list = tuple(tuple(v) for v in classes.values())

    if claimed is None:
        return EquivalenceReport(True, class_list, None, include_forcing)
    for group in claimed:
        group = list(group)
        for name in group:
            net.medium(name)
        ref = group[0]
        for other in group[1:]:
            if sig[other] == sig[ref]:
                continue
            a, b = local[ref], local[other]
            for key in a:
                if a[key] != b[key]:
                    w = {"media": [ref, other], "feature": key, "values": [a[key], b[key]]}
                    break
            else:
                which = "same-class inputs" if sig[ref][1] != sig[other][1] else "cross-class inputs"
                w = {"media": [ref, other], "feature": which,
                     "values": [list(sig[ref][1 if which.startswith("same") else 2]),
                                list(sig[other][1 if which.startswith("same") else 2])]}
            return EquivalenceReport(False, class_list, w, include_forcing)
    return EquivalenceReport(True, class_list, None, include_forcing)
