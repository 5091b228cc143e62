"""Matrix measures (logarithmic norms) and the induced norms they come from.

The measure of a square matrix ``A`` associated with a vector norm is the
one-sided derivative ``lim_{h->0+} (||I + hA|| - 1) / h``.  For the three
standard norms it has a closed form:

    L1   : max_j ( a_jj + sum_{i != j} |a_ij| )        (column sums)
    L2   : lambda_max( (A + A^T) / 2 )
    Linf : max_i ( a_ii + sum_{j != i} |a_ij| )        (row sums)

A uniformly negative measure of a system's Jacobian certifies that all its
trajectories converge exponentially towards each other.  The block bound
``block_measure_bound`` combines per-block measures and off-diagonal operator
norms into a bound on the measure in the weighted norm
``|z| = sum_p theta_p |z_p|_p``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import InputError, UnsupportedError

__all__ = [
    "MeasureKind",
    "WeightSpec",
    "BlockPartition",
    "as_square",
    "vector_norm",
    "induced_norm",
    "operator_norm",
    "measure",
    "measure_limit_oracle",
    "weighted_measure",
    "block_operator_norm",
    "block_margins",
    "block_measure_bound",
    "combined_vector_norm",
    "combined_induced_norm",
    "combined_measure_oracle",
]

#: Largest condition number accepted for a weight matrix.
MAX_CONDITION = 1e12


class MeasureKind(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    LINF = "Linf"

    @classmethod
    def parse(cls, value) -> "MeasureKind":
        """Accept a MeasureKind, or spellings like ``"1"``, ``"l2"``, ``"inf"``, ``np.inf``."""
        if isinstance(value, MeasureKind):
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if value == 1:
                return cls.L1
            if value == 2:
                return cls.L2
            if np.isinf(value):
                return cls.LINF
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "")
            aliases = {
                "1": cls.L1, "l1": cls.L1, "mu1": cls.L1,
                "2": cls.L2, "l2": cls.L2, "mu2": cls.L2,
                "inf": cls.LINF, "linf": cls.LINF, "muinf": cls.LINF, "infinity": cls.LINF,
            }
            if key in aliases:
                return aliases[key]
        raise InputError(f"unknown measure kind {value!r}")


def _as_matrix(B, name: str = "matrix") -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim == 0:
        B = B.reshape(1, 1)
    if B.ndim != 2:
        raise InputError(f"{name} must be 2-dimensional, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise InputError(f"{name} has non-finite entries")
    return B


def as_square(A, name: str = "matrix") -> np.ndarray:
    """Validate ``A`` as a finite square matrix (scalars become 1x1)."""
    A = _as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise InputError(f"{name} must be square, got shape {A.shape}")
    if A.shape[0] == 0:
        raise InputError(f"{name} must have positive dimension")
    return A


def vector_norm(x, kind) -> float:
    kind = MeasureKind.parse(kind)
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        return 0.0
    if kind is MeasureKind.L1:
        return float(np.abs(x).sum())
    if kind is MeasureKind.L2:
        return float(np.linalg.norm(x))
    return float(np.abs(x).max())


def induced_norm(B, kind) -> float:
    """Operator norm of ``B`` induced by the same vector norm on both sides."""
    kind = MeasureKind.parse(kind)
    B = _as_matrix(B)
    if B.size == 0:
        return 0.0
    if kind is MeasureKind.L1:
        return float(np.abs(B).sum(axis=0).max())
    if kind is MeasureKind.LINF:
        return float(np.abs(B).sum(axis=1).max())
    return float(np.linalg.norm(B, 2))


def operator_norm(B, from_kind, to_kind) -> float:
    """Induced norm of a (possibly rectangular) map between two normed spaces.

    Only matching kinds are supported; mixed pairs such as L1 -> L2 raise
    :class:`UnsupportedError`.
    """
    from_kind = MeasureKind.parse(from_kind)
    to_kind = MeasureKind.parse(to_kind)
    if from_kind is not to_kind:
        raise UnsupportedError(
            f"mixed-kind operator norm {from_kind.value}->{to_kind.value} is not supported"
        )
    return induced_norm(B, from_kind)


def measure(A, kind) -> float:
    kind = MeasureKind.parse(kind)
    A = as_square(A)
    d = np.diag(A)
    if kind is MeasureKind.L1:
        off = np.abs(A).sum(axis=0) - np.abs(d)
        return float((d + off).max())
    if kind is MeasureKind.LINF:
        off = np.abs(A).sum(axis=1) - np.abs(d)
        return float((d + off).max())
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])


def measure_limit_oracle(A, kind, h: float) -> float:
    """Finite-``h`` difference quotient ``(||I + hA|| - 1) / h``.

    Independent of the closed forms in :func:`measure`; it converges to the
    measure from above as ``h -> 0+`` (the quotient is nondecreasing in h).
    """
    if not (0.0 < h <= 1e-3):
        raise InputError(f"h must lie in (0, 1e-3], got {h!r}")
    A = as_square(A)
    M = np.eye(A.shape[0]) + h * A
    return (induced_norm(M, kind) - 1.0) / h


@dataclass(frozen=True)
class WeightSpec:
    """Constant invertible weight ``theta`` for the generalized Jacobian theta A theta^-1."""

    theta: np.ndarray
    kind: MeasureKind = MeasureKind.L2

    def __post_init__(self):
        theta = as_square(self.theta, "theta")
        cond = np.linalg.cond(theta)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise InputError(f"weight matrix is numerically singular (cond={cond:.3g})")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "kind", MeasureKind.parse(self.kind))

    def transform(self, A) -> np.ndarray:
        A = as_square(A)
        if A.shape != self.theta.shape:
            raise InputError(f"weight is {self.theta.shape}, matrix is {A.shape}")
        TA = self.theta @ A
        # (theta A) theta^-1 without forming the inverse
        return np.linalg.solve(self.theta.T, TA.T).T


def weighted_measure(A, w: WeightSpec) -> float:
    return measure(w.transform(A), w.kind)


@dataclass(frozen=True)
class BlockPartition:
    """Block sizes, positive weights theta_p and one measure kind per block."""

    block_sizes: tuple[int, ...]
    weights: tuple[float, ...] = None
    kinds: tuple[MeasureKind, ...] = None
    offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        if not sizes or any(s <= 0 for s in sizes):
            raise InputError("block sizes must be positive integers")
        weights = (1.0,) * len(sizes) if self.weights is None else tuple(float(w) for w in self.weights)
        if len(weights) != len(sizes):
            raise InputError("one weight per block is required")
        if not all(np.isfinite(w) and w > 0 for w in weights):
            raise InputError("block weights must be positive and finite")
        if self.kinds is None:
            kinds = (MeasureKind.L1,) * len(sizes)
        elif isinstance(self.kinds, (str, MeasureKind)):
            kinds = (MeasureKind.parse(self.kinds),) * len(sizes)
        else:
            kinds = tuple(MeasureKind.parse(k) for k in self.kinds)
        if len(kinds) != len(sizes):
            raise InputError("one measure kind per block is required")
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))

    @property
    def dim(self) -> int:
        return self.offsets[-1]

    def slices(self) -> list[slice]:
        return [slice(a, b) for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def check(self, J: np.ndarray) -> None:
        if J.shape[0] != self.dim:
            raise InputError(f"partition covers {self.dim} rows, matrix has {J.shape[0]}")


def block_operator_norm(B: np.ndarray, from_kind: MeasureKind, to_kind: MeasureKind) -> float:
    """Operator norm of an off-diagonal block ``B`` from ``from_kind`` to ``to_kind``.

    Every norm on R^1 is ``|x|``, so a scalar side adopts the other side's kind.
    A zero block has norm 0 for any pair.  Other mixed pairs are rejected by
    :func:`operator_norm`.
    """
    from_kind = MeasureKind.parse(from_kind)
    to_kind = MeasureKind.parse(to_kind)
    B = _as_matrix(B)
    if not B.any():
        return 0.0
    if from_kind is not to_kind:
        if B.shape[1] == 1:
            from_kind = to_kind
        elif B.shape[0] == 1:
            to_kind = from_kind
    return operator_norm(B, from_kind, to_kind)


def block_margins(J, partition: BlockPartition) -> np.ndarray:
    """Per-block terms ``mu_q(J_qq) + sum_{p != q} (theta_p / theta_q) ||J_pq||``.

    ``||J_pq||`` is the operator norm from block q's norm to block p's norm,
    i.e. the terms collect the off-diagonal blocks in block *column* q, which
    is what the weighted norm ``sum_p theta_p |z_p|`` requires.
    """
    J = as_square(J)
    partition.check(J)
    sl = partition.slices()
    th = partition.weights
    ks = partition.kinds
    out = np.empty(len(sl))
    for q, sq in enumerate(sl):
        total = measure(J[sq, sq], ks[q])
        for p, sp in enumerate(sl):
            if p != q:
                total += th[p] / th[q] * block_operator_norm(J[sp, sq], ks[q], ks[p])
        out[q] = total
    return out


def block_measure_bound(J, partition: BlockPartition) -> float:
    """Upper bound on the measure of ``J`` in the combined weighted norm.

    A negative value certifies contraction of ``J``.
    """
    return float(block_margins(J, partition).max())


# -- combined weighted norm, evaluated directly (oracle side) -------------------


def combined_vector_norm(z, partition: BlockPartition) -> float:
    z = np.asarray(z, dtype=float).ravel()
    return float(sum(w * vector_norm(z[s], k)
                     for s, w, k in zip(partition.slices(), partition.weights, partition.kinds)))


def _column_block_objective(M, partition, q):
    """``phi(X)`` for a batch of block-q vectors X (m, n_q): sum_p theta_p |M_pq x|_p."""
    sl = partition.slices()
    th = partition.weights
    ks = partition.kinds
    cols = [M[sp, sl[q]] for sp in sl]

    def phi(X):
        X = np.atleast_2d(X)
        total = np.zeros(X.shape[0])
        for p, C in enumerate(cols):
            Y = np.abs(X @ C.T)
            if ks[p] is MeasureKind.L1:
                total += th[p] * Y.sum(axis=1)
            elif ks[p] is MeasureKind.L2:
                total += th[p] * np.sqrt((Y * Y).sum(axis=1))
            else:
                total += th[p] * Y.max(axis=1)
        return total

    return phi


def _sphere_candidates(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 2:
        ang = np.linspace(0.0, np.pi, 721)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if n == 3:
        k = np.arange(2000) + 0.5
        polar = np.arccos(1 - 2 * k / 2000)
        azim = np.pi * (1 + 5 ** 0.5) * k
        return np.column_stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)])
    pts = rng.standard_normal((4000, n))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _max_over_l2_sphere(phi, n: int, rng: np.random.Generator) -> float:
    if n == 1:
        return float(phi(np.array([[1.0], [-1.0]])).max())
    cand = _sphere_candidates(n, rng)
    vals = phi(cand)
    best = float(vals.max())
    for i in np.argsort(vals)[-3:]:
        res = optimize.minimize(lambda y: -phi(y / np.linalg.norm(y))[0], cand[i],
                                method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-16, "maxiter": 2000})
        best = max(best, -float(res.fun))
    return best


def combined_induced_norm(M, partition: BlockPartition, seed: int = 0) -> float:
    """Induced norm of ``M`` in ``|z| = sum_p theta_p |z_p|_{kind_p}``.

    The unit ball of this norm is the convex hull of the single-block balls, so
    the supremum of the convex map ``z -> |Mz|`` is reached with only one block
    active.  Within an L1 or Linf block the extreme points are enumerated
    exactly; within an L2 block the sphere is searched numerically (dense
    candidates plus local polish), which is exact up to optimizer tolerance.
    """
    M = as_square(M)
    partition.check(M)
    rng = np.random.default_rng(seed)
    best = 0.0
    for q, n in enumerate(partition.block_sizes):
        phi = _column_block_objective(M, partition, q)
        kind = partition.kinds[q]
        if kind is MeasureKind.L1:
            val = float(phi(np.eye(n)).max())
        elif kind is MeasureKind.LINF:
            if n > 16:
                raise UnsupportedError("Linf blocks larger than 16 cannot be enumerated")
            signs = np.array([(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=n - 1)])
            val = float(phi(signs).max())
        else:
            val = _max_over_l2_sphere(phi, n, rng)
        best = max(best, val / partition.weights[q])
    return best


def combined_measure_oracle(J, partition: BlockPartition, h: float, seed: int = 0) -> float:
    """``(||I + hJ|| - 1) / h`` in the combined weighted norm."""
    if not (0.0 < h <= 1e-3):
        raise InputError(f"h must lie in (0, 1e-3], got {h!r}")
    J = as_square(J)
    M = np.eye(J.shape[0]) + h * J
    return (combined_induced_norm(M, partition, seed=seed) - 1.0) / h


def random_partition(rng: np.random.Generator, sizes: Sequence[int], kinds=None) -> BlockPartition:
    """Partition with log-uniform weights in [0.1, 10]; used by tests and demos."""
    weights = np.exp(rng.uniform(np.log(0.1), np.log(10.0), len(sizes)))
    if kinds is None:
        kinds = [MeasureKind.L1] * len(sizes)
    return BlockPartition(tuple(sizes), tuple(weights), tuple(kinds))
