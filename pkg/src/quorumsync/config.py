"""Experiment configuration: schema, loading and construction helpers.

A config is one JSON or YAML document.  Its data model is defined by the
pydantic classes below.  Unknown keys are rejected at every level, and
``seed`` is required whenever the experiment draws random numbers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import models as _models
from .diagnostics import dumps
from .dynsys import PeriodicSignal, VectorField
from .errors import InputError
from .expr import compile_expr
from .network import MediaGraph, MediumSpec, NodeGroupSpec, QuorumNetwork, assemble_quorum
from .sim import IntegratorConfig

__all__ = [
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "config_hash",
    "build_system",
    "initial_states",
    "integrator_config",
    "grid_values",
]

CONFIG_SCHEMA = "quorumsync.config/1"

Scalars = Union[float, list[float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ForcingSpec(_Strict):
    """``offset + amplitude * sin(omega t + phase)``."""

    offset: float = 0.0
    amplitude: float = 1.0
    omega: float = 1.0
    phase: float = 0.0


class InitialSpec(_Strict):
    """Initial conditions.

    ``explicit`` uses ``values`` (full state).  ``uniform`` draws every
    coordinate in ``[lower, upper]``.  ``clusters`` puts node ``i`` of each
    group at ``centers[i % len(centers)]`` plus uniform jitter in
    ``[-jitter, jitter]`` (media are drawn as in ``uniform``).  ``runs``
    independent draws are made; draw ``r`` uses the stream ``(seed, r)``.
    """

    mode: Literal["explicit", "uniform", "clusters"] = "uniform"
    values: Optional[list[float]] = None
    lower: Scalars = 0.0
    upper: Scalars = 1.0
    centers: Optional[list[float]] = None
    jitter: float = Field(0.0, ge=0.0)
    runs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.mode == "explicit" and self.values is None:
            raise ValueError("mode 'explicit' needs 'values'")
        if self.mode == "clusters" and not self.centers:
            raise ValueError("mode 'clusters' needs a non-empty 'centers' list")
        return self


class IntegratorSpec(_Strict):
    method: Literal["rk4", "rk45"] = "rk45"
    h: float = Field(0.01, gt=0)
    rtol: float = Field(1e-8, gt=0)
    atol: float = Field(1e-10, gt=0)
    max_step: Optional[float] = Field(None, gt=0)
    dt_out: Optional[float] = Field(None, gt=0)


class BoxSpec(_Strict):
    lower: Scalars
    upper: Scalars
    time_range: tuple[float, float] = (0.0, 0.0)


class CertifySpec(_Strict):
    measure: Optional[Literal["L1", "L2", "Linf"]] = None
    box: Optional[BoxSpec] = None
    n_lowdisc: int = Field(2000, ge=0)
    n_random: int = Field(500, ge=0)


class GridSpec(_Strict):
    start: float
    stop: float
    num: int = Field(ge=1)
    spacing: Literal["linear", "log"] = "linear"


class OuterSpec(_Strict):
    parameter: str
    values: list[float] = Field(min_length=1)


class SweepSpec(_Strict):
    """Sweep ``parameter`` over ``grid`` (optionally inside an ``outer`` loop).

    With ``scale_by`` set, the simulated value is ``grid value / scale_by``
    (e.g. sweep the product kN with ``scale_by: N``).
    """

    parameter: str
    grid: Union[list[float], GridSpec]
    scale_by: Optional[str] = None
    outer: Optional[OuterSpec] = None
    tol: float = Field(1e-6, gt=0)


class NoiseSpec(_Strict):
    sigma: float = Field(ge=0)
    h: float = Field(0.01, gt=0)
    runs: int = Field(1, ge=1)
    dt_out: Optional[float] = Field(None, gt=0)
    tail_fraction: float = Field(0.5, gt=0, le=1)
    outer: Optional[OuterSpec] = None


class ReportSpec(_Strict):
    observables: Optional[list[str]] = None
    sync_tol: float = Field(1e-6, gt=0)
    norm: Literal["L1", "L2", "Linf"] = "Linf"
    require_sync: bool = False


class GroupDecl(_Strict):
    name: str
    count: int = Field(ge=1)
    states: list[str] = Field(min_length=1)
    equations: list[str]
    medium: str
    input: list[str]
    intrinsic: Optional[list[str]] = None
    dynamics_id: Optional[str] = None
    nonnegative: bool = False


class MediumDecl(_Strict):
    name: str
    states: list[str] = Field(min_length=1)
    equations: list[str]
    forcing: Optional[ForcingSpec] = None
    dynamics_id: Optional[str] = None
    nonnegative: bool = False


class NetworkDecl(_Strict):
    """Inline network: equations are arithmetic expressions (see :mod:`quorumsync.expr`)."""

    params: dict[str, float] = Field(default_factory=dict)
    groups: list[GroupDecl] = Field(min_length=1)
    media: list[MediumDecl] = Field(min_length=1)
    edges: list[tuple[str, str]] = Field(default_factory=list)
    coupling: dict[str, str] = Field(default_factory=dict)


class ExperimentConfig(_Strict):
    schema_: str = Field(CONFIG_SCHEMA, alias="schema")
    model: Optional[str] = None
    network: Optional[NetworkDecl] = None
    params: dict = Field(default_factory=dict)
    settings: dict = Field(default_factory=dict)
    forcing: Optional[ForcingSpec] = None
    initial: Optional[InitialSpec] = None
    t_span: Optional[tuple[float, float]] = None
    integrator: IntegratorSpec = Field(default_factory=IntegratorSpec)
    certify: Optional[CertifySpec] = None
    sweep: Optional[SweepSpec] = None
    noise: Optional[NoiseSpec] = None
    report: ReportSpec = Field(default_factory=ReportSpec)
    output_dir: Optional[str] = None
    seed: Optional[int] = Field(None, ge=0)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def _check(self):
        if self.schema_ != CONFIG_SCHEMA:
            raise ValueError(f"unsupported schema {self.schema_!r}; expected {CONFIG_SCHEMA!r}")
        if (self.model is None) == (self.network is None):
            raise ValueError("give exactly one of 'model' and 'network'")
        if self.network is not None and (self.params or self.settings):
            raise ValueError("'params' and 'settings' apply to catalog models only")
        if self.t_span is not None and not self.t_span[1] > self.t_span[0]:
            raise ValueError("t_span must satisfy t0 < t1")
        return self

    def randomized(self, command: str) -> bool:
        """Whether ``command`` draws random numbers under this config."""
        if command == "certify":
            c = self.certify or CertifySpec()
            return c.n_lowdisc + c.n_random > 0
        if command == "noise" or (command == "simulate" and self.noise is not None):
            return True
        if command in ("simulate", "sweep", "noise"):
            return self.initial is None or self.initial.mode != "explicit"
        return False

    def canonical(self) -> dict:
        """JSON-compatible dict with defaults filled in (round-trips through :func:`parse_config`)."""
        return self.model_dump(mode="json", by_alias=True)


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a decoded document; raises :class:`InputError` with the schema diagnostic."""
    if not isinstance(data, dict):
        raise InputError("config must be a mapping at top level")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"  {loc}: {err['msg']}")
        raise InputError("invalid config:\n" + "\n".join(lines)) from None


def load_config(path) -> ExperimentConfig:
    """Read a ``.json``, ``.yaml`` or ``.yml`` config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from None
    return parse_config(data)


def config_hash(cfg: ExperimentConfig, command: str) -> str:
    blob = dumps({"command": command, "config": cfg.canonical()}).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


# -- building the system ----------------------------------------------------------------


def _forcing_signal(spec: Optional[ForcingSpec]) -> Optional[PeriodicSignal]:
    return None if spec is None else PeriodicSignal.sine(**spec.model_dump())


def _apply_forcing(name: str, params: dict, settings: dict, forcing: Optional[ForcingSpec]):
    if forcing is None:
        return params, settings
    entry = _models.get_model(name)
    fdict = forcing.model_dump()
    if "forcing" in entry.extra_params:
        return params, {**settings, "forcing": fdict}
    if "forcing" in {f.name for f in dataclasses.fields(entry.params)}:
        return {**params, "forcing": fdict}, settings
    raise InputError(f"model {name!r} takes no forcing")


def _stack(values, count: int) -> np.ndarray:
    cols = [np.broadcast_to(np.asarray(v, dtype=float), (count,)) for v in values]
    return np.column_stack(cols)


def _inline_network(decl: NetworkDecl) -> QuorumNetwork:
    params = dict(decl.params)
    media = {m.name: m for m in decl.media}
    reserved = {"t", "psi"} | set(params)
    for m in decl.media:
        if len(m.equations) != len(m.states):
            raise InputError(f"medium {m.name!r}: {len(m.states)} states, "
                             f"{len(m.equations)} equations")
    groups, attach = [], {}
    for g in decl.groups:
        if g.medium not in media:
            raise InputError(f"group {g.name!r} attaches to unknown medium {g.medium!r}")
        med = media[g.medium]
        if len(g.equations) != len(g.states):
            raise InputError(f"group {g.name!r}: {len(g.states)} states, "
                             f"{len(g.equations)} equations")
        if len(g.input) != len(med.states):
            raise InputError(f"group {g.name!r}: input must have one entry per state of "
                             f"{med.name!r}")
        clash = (set(g.states) & set(med.states)) | ((set(g.states) | set(med.states)) & reserved)
        if clash:
            raise InputError(f"group {g.name!r}: names {sorted(clash)} are used twice")
        names = set(g.states) | set(med.states) | set(params) | {"t"}
        eqs = [compile_expr(e, names) for e in g.equations]
        intr = [compile_expr(e, set(g.states) | set(params) | {"t"}) for e in g.intrinsic] \
            if g.intrinsic is not None else None
        if intr is not None and len(intr) != len(g.states):
            raise InputError(f"group {g.name!r}: intrinsic needs one entry per state")
        inp = [compile_expr(e, set(g.states) | set(params)) for e in g.input]

        def field(X, z, t, eqs=eqs, g=g, med=med):
            ns = {**params, "t": t, **{s: X[:, j] for j, s in enumerate(g.states)},
                  **{s: z[j] for j, s in enumerate(med.states)}}
            return _stack([e(ns) for e in eqs], X.shape[0])

        def intrinsic(X, t, intr=intr, g=g):
            ns = {**params, "t": t, **{s: X[:, j] for j, s in enumerate(g.states)}}
            return _stack([e(ns) for e in intr], X.shape[0])

        def medium_input(X, inp=inp, g=g):
            ns = {**params, **{s: X[:, j] for j, s in enumerate(g.states)}}
            return _stack([e(ns) for e in inp], X.shape[0])

        groups.append(NodeGroupSpec(g.name, len(g.states), g.count, field,
                                    medium_input=medium_input, dynamics_id=g.dynamics_id,
                                    state_names=tuple(g.states),
                                    intrinsic=intrinsic if intr is not None else None,
                                    nonnegative=g.nonnegative))
        attach[g.name] = g.medium
    med_specs = []
    for m in decl.media:
        psi_names = ["psi"] if len(m.states) == 1 else [f"psi_{s}" for s in m.states]
        clash = set(m.states) & (set(params) | {"t"} | set(psi_names))
        if clash:
            raise InputError(f"medium {m.name!r}: names {sorted(clash)} are used twice")
        eqs = [compile_expr(e, set(m.states) | set(params) | {"t"} | set(psi_names))
               for e in m.equations]

        def mfield(z, psi, t, eqs=eqs, m=m, psi_names=psi_names):
            ns = {**params, "t": t, **{s: z[j] for j, s in enumerate(m.states)},
                  **{p: psi[j] for j, p in enumerate(psi_names)}}
            return np.array([float(np.asarray(e(ns))) for e in eqs])

        med_specs.append(MediumSpec(m.name, len(m.states), mfield,
                                    forcing=_forcing_signal(m.forcing), dynamics_id=m.dynamics_id,
                                    state_names=tuple(m.states), nonnegative=m.nonnegative))
    coupling, ids = {}, {}
    for name, src in decl.coupling.items():
        if name not in media:
            raise InputError(f"coupling given for unknown medium {name!r}")
        fn = compile_expr(src, {"z"} | set(params))
        coupling[name] = lambda z, fn=fn: np.broadcast_to(
            np.asarray(fn({**params, "z": np.asarray(z, dtype=float)}), dtype=float),
            np.shape(z)).copy()
        ids[name] = src.replace(" ", "")
    graph = MediaGraph(edges=tuple(decl.edges), coupling=coupling, coupling_ids=ids)
    return assemble_quorum(groups, med_specs, graph, attach,
                           metadata={"model": "inline", "params": params})


def build_system(cfg: ExperimentConfig, overrides: Optional[dict] = None):
    """Network (or VectorField) for ``cfg``; ``overrides`` patch catalog parameters."""
    if cfg.network is not None:
        if overrides:
            raise InputError("parameter sweeps need a catalog model")
        return _inline_network(cfg.network)
    params = {**cfg.params, **(overrides or {})}
    params, settings = _apply_forcing(cfg.model, params, dict(cfg.settings), cfg.forcing)
    return _models.build_model(cfg.model, params, settings)


def model_params(cfg: ExperimentConfig, overrides: Optional[dict] = None):
    params = {**cfg.params, **(overrides or {})}
    params, settings = _apply_forcing(cfg.model, params, dict(cfg.settings), cfg.forcing)
    return _models.make_params(cfg.model, params), settings


# -- initial conditions, integrator, grids ------------------------------------------


def _broadcast(v, dim: int, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise InputError(f"initial.{what} must be a scalar or have {dim} entries")
    return arr


def initial_states(cfg: ExperimentConfig, system, seed: Optional[int],
                   stream: tuple[int, ...] = ()) -> list[np.ndarray]:
    """``cfg.initial.runs`` initial states; run ``r`` uses the stream ``(seed, *stream, r)``."""
    spec = cfg.initial or InitialSpec()
    dim = system.dim
    if spec.mode == "explicit":
        x0 = np.asarray(spec.values, dtype=float)
        if x0.shape != (dim,):
            raise InputError(f"initial.values has {x0.size} entries, system has {dim}")
        return [x0.copy() for _ in range(spec.runs)]
    if seed is None:
        raise InputError("random initial conditions need a seed")
    lo = _broadcast(spec.lower, dim, "lower")
    hi = _broadcast(spec.upper, dim, "upper")
    if np.any(hi < lo):
        raise InputError("initial.upper must be >= initial.lower")
    out = []
    for r in range(spec.runs):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), *stream, r]))
        x0 = lo + (hi - lo) * rng.random(dim)
        if spec.mode == "clusters":
            if not isinstance(system, QuorumNetwork):
                raise InputError("mode 'clusters' needs a network")
            for g in system.groups:
                sl = system.group_slice(g.name)
                c = np.asarray(spec.centers, dtype=float)[np.arange(g.count) % len(spec.centers)]
                jit = spec.jitter * (2.0 * rng.random((g.count, g.node_dim)) - 1.0)
                x0[sl] = (c[:, None] + jit).ravel()
        out.append(x0)
    return out


def integrator_config(cfg: ExperimentConfig) -> IntegratorConfig:
    s = cfg.integrator
    return IntegratorConfig(method=s.method, h=s.h, rtol=s.rtol, atol=s.atol,
                            max_step=s.max_step if s.max_step is not None else float("inf"),
                            dt_out=s.dt_out)


def grid_values(grid) -> np.ndarray:
    if isinstance(grid, GridSpec):
        if grid.spacing == "log":
            if grid.start <= 0 or grid.stop <= 0:
                raise InputError("log grid needs positive end points")
            vals = np.geomspace(grid.start, grid.stop, grid.num)
        else:
            vals = np.linspace(grid.start, grid.stop, grid.num)
    else:
        vals = np.asarray(grid, dtype=float)
    if vals.size == 0:
        raise InputError("sweep grid is empty")
    if not np.all(np.isfinite(vals)):
        raise InputError("sweep grid has non-finite values")
    return vals


def is_vector_field(system) -> bool:
    return isinstance(system, VectorField)
